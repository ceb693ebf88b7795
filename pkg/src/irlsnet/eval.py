"""Metrics and repetition aggregation: MSE, portfolio percentage error, variance-fit score."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    """A metric that is undefined for the given inputs."""


def mse(pred, actual) -> float:
    pred, actual = np.asarray(pred, dtype=np.float64), np.asarray(actual, dtype=np.float64)
    return float(np.mean((pred - actual) ** 2))


def percentage_error(pred, actual) -> float:
    """Signed aggregate error ``(sum(pred) - sum(actual)) / sum(actual)``."""
    pred, actual = np.asarray(pred, dtype=np.float64).ravel(), np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise MetricError(f"length mismatch: {pred.shape[0]} predictions, {actual.shape[0]} actuals")
    total = actual.sum()
    if total == 0:
        raise MetricError("percentage error undefined: actual values sum to zero")
    return float((pred.sum() - total) / total)


def variance_fit_score(pred_sigma, true_sigma) -> float:
    """Pearson correlation between predicted and true noise scale."""
    p, t = np.asarray(pred_sigma, dtype=np.float64).ravel(), np.asarray(true_sigma, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise MetricError("pred_sigma and true_sigma differ in length")
    if p.size < 3:
        raise MetricError("variance_fit_score needs at least 3 points")
    if np.ptp(t) == 0:
        raise MetricError("variance_fit_score undefined for constant true_sigma")
    if np.ptp(p) == 0:
        return 0.0
    pc, tc = p - p.mean(), t - t.mean()
    return float(np.dot(pc, tc) / math.sqrt(np.dot(pc, pc) * np.dot(tc, tc)))


@dataclass
class RunResult:
    rep_index: int
    test_mse: float
    pe: float
    variance_corr: float | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _pop_std(values) -> float:
    a = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean((a - a.mean()) ** 2)))


@dataclass
class ExperimentReport:
    scenario: str
    model: str
    optimizer: str
    repetitions: int
    avg_pe: float
    std_pe: float
    avg_abs_pe: float
    std_abs_pe: float
    avg_mse: float
    param_count: int = 0
    avg_variance_corr: float | None = None
    extra: dict = field(default_factory=dict)  # scenario-level metrics (e.g. averaged-curve MSE)
    config: dict = field(default_factory=dict)
    std_convention: str = "population"
    runs: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["runs"] = [r.to_dict() if isinstance(r, RunResult) else r for r in self.runs]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        """Rebuild a report and check its aggregates against the stored runs."""
        d = dict(d)
        d["runs"] = [RunResult(**r) for r in d.get("runs", [])]
        rep = cls(**d)
        if rep.runs:
            fresh = aggregate(rep.runs)
            for name in ("avg_pe", "std_pe", "avg_abs_pe", "std_abs_pe", "avg_mse"):
                a, b = getattr(rep, name), getattr(fresh, name)
                if not (a == b or (math.isnan(a) and math.isnan(b)) or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)):
                    raise ValueError(f"report field {name}={a} does not match its runs ({b})")
        return rep


def aggregate(results, scenario: str = "", model: str = "", optimizer: str = "", param_count: int = 0,
              config: dict | None = None, extra: dict | None = None) -> ExperimentReport:
    """Average and population std of PE (signed and absolute) and mean test MSE."""
    results = list(results)
    if not results:
        raise ValueError("aggregate needs at least one result")
    pes = [r.pe for r in results]
    corrs = [r.variance_corr for r in results if r.variance_corr is not None]
    return ExperimentReport(
        scenario=scenario,
        model=model,
        optimizer=optimizer,
        repetitions=len(results),
        avg_pe=float(np.mean(pes)),
        std_pe=_pop_std(pes),
        avg_abs_pe=float(np.mean(np.abs(pes))),
        std_abs_pe=_pop_std(np.abs(pes)),
        avg_mse=float(np.mean([r.test_mse for r in results])),
        param_count=param_count,
        avg_variance_corr=float(np.mean(corrs)) if corrs else None,
        extra=dict(extra or {}),
        config=dict(config or {}),
        runs=sorted(results, key=lambda r: r.rep_index),
    )


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def reports_to_text(reports) -> str:
    """Aligned-column table, one row per report."""
    cols = ["scenario", "model", "optimizer", "param_count", "avg_pe", "std_pe", "avg_abs_pe", "avg_mse",
            "avg_variance_corr"]
    rows = [[_fmt(getattr(r, c)) for c in cols] for r in reports]
    widths = [max(len(c), *(len(row[j]) for row in rows)) for j, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def reports_to_json(reports, meta: dict | None = None) -> str:
    doc = {"meta": meta or {}, "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True)


def reports_from_json(text: str) -> list:
    return [ExperimentReport.from_dict(d) for d in json.loads(text)["reports"]]
