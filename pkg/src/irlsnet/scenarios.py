"""Named experiment scenarios: the 1-D simulation figures and the portfolio optimizer table.

Every scenario is a pure function of its resolved :class:`ScenarioConfig`;
all randomness flows from ``config.seed`` through per-repetition seeds.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataError,
    Dataset,
    SimSpec,
    SplitProtocol,
    default_schema_path,
    load_va_csv,
    simulate,
    split_indices,
    synth_portfolio,
)
from .eval import RunResult, aggregate, mse, percentage_error, reports_to_json, reports_to_text, variance_fit_score
from .model import (
    build_baseline,
    build_mc_dropout,
    build_simulation_config,
    build_va_config,
    mc_dropout_predict,
)
from .optim import OPTIMIZERS
from .train import OptimizerSpec, TrainConfig, train_interleaved, train_oracle_wls, train_plain

log = logging.getLogger(__name__)

SCENARIOS = (
    "fig1_homo",
    "fig1_hetero_baseline",
    "fig1_hetero_proposed",
    "fig3_variance",
    "fig4_oracle_vs_proposed",
    "table1_va",
)
MODELS = ("proposed", "baseline", "mc_dropout", "oracle")

# per-scenario defaults; anything here can be overridden from the config file or flags
_SCENARIO_DEFAULTS = {
    "fig1_homo": {"models": ["baseline"], "noise_mode": "homoskedastic", "train_fraction": 0.05},
    "fig1_hetero_baseline": {"models": ["baseline"], "train_fraction": 0.05},
    "fig1_hetero_proposed": {"models": ["proposed"], "train_fraction": 0.05},
    "fig3_variance": {"models": ["proposed"], "train_fraction": 0.01},
    "fig4_oracle_vs_proposed": {"models": ["oracle", "proposed", "baseline"], "train_fraction": 0.01},
    "table1_va": {"models": ["proposed", "baseline", "mc_dropout"], "train_fraction": 0.01,
                  "with_replacement": False, "epochs": 200, "batch_size": 64},
}

OUTPUT_FILES = ("config.json", "report.json", "report.txt", "runs.csv", "predictions.csv")


class ScenarioError(RuntimeError):
    """Invalid scenario configuration or missing inputs."""


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int = 0
    reps: int = 10
    optimizer: str = "adam"
    lr: float = 1e-3
    schedule: str = "constant"  # "constant" or "cyclical" (0.001..0.01, 100 steps)
    models: list | None = None
    train_fraction: float | None = None
    with_replacement: bool | None = None
    epochs: int | None = None
    batch_size: int | None = None
    warmup_epochs: int | None = None
    variance_floor: float = 1e-3
    variance_target: str = "abs"
    interleave: str = "batch"
    leaky_slope: float = 0.01
    baseline_match: str = "mean_path"  # "mean_path" (exact copy of s+m) or "total" (widened to the full net)
    dropout_rate: float = 0.1
    mc_passes: int = 100
    noise_mode: str | None = None
    noise_scale: float = 0.5
    variance_convention: str = "variance"
    n_samples: int = 1000
    data: str | None = None
    schema: str | None = None
    synthetic: bool = False
    synthetic_n: int = 38_000
    synthetic_d: int = 20
    out: str | None = None

    def resolved(self) -> "ScenarioConfig":
        """Fill scenario defaults into every field left as ``None``."""
        if self.scenario not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        defaults = {"with_replacement": True, "epochs": 2000, "noise_mode": "heteroskedastic"}
        defaults.update(_SCENARIO_DEFAULTS[self.scenario])
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        cfg = dataclasses.replace(self, **updates)
        if cfg.optimizer not in OPTIMIZERS:
            raise ScenarioError(f"unknown optimizer {cfg.optimizer!r}; expected one of {OPTIMIZERS}")
        bad = [m for m in cfg.models if m not in MODELS]
        if bad:
            raise ScenarioError(f"unknown models {bad}; expected a subset of {MODELS}")
        if cfg.baseline_match not in ("mean_path", "total"):
            raise ScenarioError("baseline_match must be 'mean_path' or 'total'")
        if cfg.reps < 1:
            raise ScenarioError("reps must be >= 1")
        if cfg.out is None:
            cfg = dataclasses.replace(cfg, out=str(Path(os.environ.get("IRLSNET_OUT", "runs")) / cfg.scenario))
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ScenarioError(f"unknown config keys: {unknown}")
        if "scenario" not in d:
            raise ScenarioError("config needs a 'scenario' key")
        return cls(**d)


def rep_seed(master: int, rep: int) -> int:
    """Per-repetition seed; depends only on (master, rep), not on the repetition count."""
    return int(np.random.SeedSequence([master, rep]).generate_state(1, dtype=np.uint32)[0])


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    reports: list
    predictions: dict  # column name -> 1-D array
    traces: dict = field(default_factory=dict)  # (model, rep) -> TrainTrace


def _train_config(cfg: ScenarioConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        warmup_epochs=cfg.warmup_epochs,
        optimizer=OptimizerSpec(cfg.optimizer, cfg.lr, cfg.schedule),
        seed=seed,
        interleave=cfg.interleave,
        variance_target=cfg.variance_target,
    )


def _load_dataset(cfg: ScenarioConfig) -> Dataset:
    if cfg.scenario != "table1_va":
        spec = SimSpec(n_samples=cfg.n_samples, noise_mode=cfg.noise_mode, noise_scale=cfg.noise_scale,
                       variance_convention=cfg.variance_convention, seed=cfg.seed)
        return simulate(spec)
    if cfg.data:
        schema = cfg.schema or default_schema_path()
        return load_va_csv(cfg.data, schema)
    if cfg.synthetic:
        return synth_portfolio(cfg.synthetic_n, cfg.synthetic_d, seed=cfg.seed)
    raise ScenarioError(
        "table1_va needs a portfolio CSV (--data FILE, columns described by the schema file "
        f"{default_schema_path()}) or --synthetic to use the synthetic stand-in portfolio"
    )


def _fit_rep(cfg: ScenarioConfig, model: str, data: Dataset, train_idx, seed: int):
    """Train one model on one repetition; return (predict_fn, trace, n_params).

    ``predict_fn(Z)`` gives ``(mean, sigma)`` in target units, sigma being None
    for models without a noise estimate.
    """
    X, y = data.features[train_idx], data.targets[train_idx]
    y_mean, y_std = float(y.mean()), float(y.std())
    if not y_std > 0:
        y_std = 1.0
    yz = (y - y_mean) / y_std
    rng = np.random.default_rng(seed)
    build = build_simulation_config if data.n_features == 1 and cfg.scenario != "table1_va" else None
    kw = {"slope": cfg.leaky_slope, "floor": cfg.variance_floor,
          "head_output": "stddev" if cfg.variance_target == "abs" else "variance"}
    unet = build(rng, **kw) if build else build_va_config(data.n_features, rng, **kw)
    tcfg = _train_config(cfg, seed)
    if model == "proposed":
        trace = train_interleaved(unet, (X, yz), tcfg)

        def predict(Z):
            m, s = unet.predict(Z)
            return m * y_std + y_mean, s * y_std
        n_params = unet.n_params
    elif model == "oracle":
        if data.true_sigma is None:
            raise ScenarioError("the oracle model needs a dataset with known noise scale")
        trace = train_oracle_wls(unet, (X, yz), data.true_sigma[train_idx] / y_std, tcfg)
        predict = lambda Z: (unet.predict_mean(Z) * y_std + y_mean, None)
        n_params = unet.mean_path_params
    elif model == "baseline":
        net = build_baseline(unet, cfg.baseline_match, rng, cfg.leaky_slope)
        trace = train_plain(net, (X, yz), tcfg)
        predict = lambda Z: (net.predict(Z) * y_std + y_mean, None)
        n_params = net.n_params
    else:
        net = build_mc_dropout(unet, rng, cfg.dropout_rate, cfg.mc_passes, seed, cfg.leaky_slope,
                               cfg.baseline_match)
        trace = train_plain(net, (X, yz), tcfg)

        def predict(Z):
            m, s = mc_dropout_predict(net, Z)
            return m * y_std + y_mean, s * y_std
        n_params = net.n_params
    return predict, trace, n_params


def run(cfg: ScenarioConfig) -> ScenarioResult:
    """Run every repetition of every model in the scenario (no files written)."""
    cfg = cfg.resolved()
    data = _load_dataset(cfg)
    n = len(data)
    is_va = cfg.scenario == "table1_va"
    protocol = SplitProtocol(cfg.train_fraction, cfg.reps, cfg.with_replacement, cfg.seed,
                             test="all" if is_va else "complement")
    predictions = {}
    if data.n_features == 1:
        predictions["x"] = data.features[:, 0]
    else:
        predictions["row"] = np.arange(n, dtype=np.float64)
    predictions["actual"] = data.targets
    if data.true_mean is not None:
        predictions["true_mean"] = data.true_mean
    if data.true_sigma is not None:
        predictions["true_sigma"] = data.true_sigma

    splits = [split_indices(n, protocol, i) for i in range(cfg.reps)]
    reports, traces = [], {}
    for model in cfg.models:
        runs, preds, sigmas = [], [], []
        n_params = 0
        for i, (train_idx, test_idx) in enumerate(splits):
            seed = rep_seed(cfg.seed, i)
            log.info("%s: %s rep %d/%d", cfg.scenario, model, i + 1, cfg.reps)
            predict, trace, n_params = _fit_rep(cfg, model, data, train_idx, seed)
            traces[(model, i)] = trace
            full, sig = predict(data.features)
            preds.append(full)
            if sig is not None:
                sigmas.append(sig)
            corr = None
            if sig is not None and data.true_sigma is not None and np.ptp(data.true_sigma[test_idx]) > 0:
                corr = variance_fit_score(sig[test_idx], data.true_sigma[test_idx])
            runs.append(RunResult(i, mse(full[test_idx], data.targets[test_idx]),
                                  percentage_error(full[test_idx], data.targets[test_idx]), corr, seed))
        avg = np.mean(preds, axis=0)
        extra = {"avg_curve_pe": percentage_error(avg, data.targets)}
        if data.true_mean is not None:
            extra["avg_curve_mse"] = mse(avg, data.true_mean)
        if not is_va:
            for i, p in enumerate(preds):
                predictions[f"{model}_rep{i}"] = p
        predictions[f"{model}_avg"] = avg
        if sigmas:
            predictions[f"{model}_sigma_avg"] = np.mean(sigmas, axis=0)
        snapshot = {k: v for k, v in cfg.to_dict().items() if k != "out"}
        reports.append(aggregate(runs, cfg.scenario, model, cfg.optimizer, n_params, snapshot, extra))
    return ScenarioResult(cfg, reports, predictions, traces)


def _write_predictions(path: Path, predictions: dict) -> None:
    cols = list(predictions)
    arrays = [np.asarray(predictions[c], dtype=np.float64) for c in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*arrays):
            w.writerow([repr(float(v)) for v in row])


def _write_runs(path: Path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "optimizer", "rep", "seed", "test_mse", "pe", "variance_corr"])
        for rep in reports:
            for r in rep.runs:
                w.writerow([rep.model, rep.optimizer, r.rep_index, r.seed, repr(r.test_mse), repr(r.pe),
                            "" if r.variance_corr is None else repr(r.variance_corr)])


def write_outputs(result: ScenarioResult) -> Path:
    out = Path(result.config.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = result.config.to_dict()
    (out / "config.json").write_text(json.dumps(cfg_dict, indent=2, sort_keys=True) + "\n")
    meta = {"irlsnet_version": __version__, "scenario": result.config.scenario, "seed": result.config.seed,
            "pe_convention": "signed avg_pe; avg_abs_pe averages |PE|", "std": "population"}
    (out / "report.json").write_text(reports_to_json(result.reports, meta) + "\n")
    (out / "report.txt").write_text(reports_to_text(result.reports))
    _write_runs(out / "runs.csv", result.reports)
    _write_predictions(out / "predictions.csv", result.predictions)
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for (model, i), trace in result.traces.items():
        trace.to_csv(tdir / f"{model}_rep{i}.csv")
    return out


def check_outputs(out) -> None:
    """Raise if any declared output file is missing or unparseable."""
    out = Path(out)
    for name in OUTPUT_FILES:
        if not (out / name).is_file():
            raise ScenarioError(f"missing output {out / name}")
    json.loads((out / "config.json").read_text())
    json.loads((out / "report.json").read_text())
    for name in ("runs.csv", "predictions.csv"):
        with open(out / name, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ScenarioError(f"{out / name} has no data rows")


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    result = run(cfg)
    out = write_outputs(result)
    check_outputs(out)
    return result


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: config must be a JSON object")
    return doc


__all__ = ["SCENARIOS", "ScenarioConfig", "ScenarioError", "ScenarioResult", "rep_seed", "run", "run_scenario",
           "write_outputs", "check_outputs", "load_config", "DataError"]
