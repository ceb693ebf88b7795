"""Datasets: the 1-D heteroskedastic simulator, train/test subsampling, and VA CSV ingestion."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SCHEMA_ROLES = ("numeric", "categorical", "target", "ignore")


class DataError(ValueError):
    """Malformed input file, schema, or protocol."""


@dataclass(frozen=True)
class Scaler:
    """Per-column z-score statistics. Zero-variance columns get scale 1."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.scale + self.mean


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,)
    true_sigma: np.ndarray | None = None
    true_mean: np.ndarray | None = None
    feature_names: tuple = ()
    # scaler applied to the numeric columns listed in numeric_columns (indices into features)
    feature_scaler: Scaler | None = None
    numeric_columns: tuple = ()
    raw_numeric: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        for name in ("true_sigma", "true_mean"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64).reshape(-1)
                if v.shape[0] != y.shape[0]:
                    raise DataError(f"{name} length {v.shape[0]} != {y.shape[0]} rows")
                object.__setattr__(self, name, v)
        if self.true_sigma is not None and np.any(self.true_sigma < 0):
            raise DataError("true_sigma must be non-negative")

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return replace(
            self,
            features=self.features[idx],
            targets=self.targets[idx],
            true_sigma=None if self.true_sigma is None else self.true_sigma[idx],
            true_mean=None if self.true_mean is None else self.true_mean[idx],
            raw_numeric=None if self.raw_numeric is None else self.raw_numeric[idx],
        )

    def to_csv(self, path) -> None:
        names = list(self.feature_names) or [f"x{j}" for j in range(self.n_features)]
        extra = [("true_mean", self.true_mean), ("true_sigma", self.true_sigma)]
        extra = [(k, v) for k, v in extra if v is not None]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["target"] + [k for k, _ in extra])
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.features[i]] + [repr(float(self.targets[i]))]
                row += [repr(float(v[i])) for _, v in extra]
                w.writerow(row)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def sim_mean(x):
    """Mean curve 5 + 5 x^5 sin(x^3)."""
    x = np.asarray(x, dtype=np.float64)
    return 5.0 + 5.0 * x ** 5 * np.sin(x ** 3)


def sim_variance(x):
    """Noise level 5/2 x^2 (read as a variance or a stddev depending on convention)."""
    x = np.asarray(x, dtype=np.float64)
    return 2.5 * x ** 2


@dataclass(frozen=True)
class SimSpec:
    n_samples: int = 1000
    x_range: tuple = (-1.0, 1.0)
    noise_mode: str = "heteroskedastic"  # or "homoskedastic"
    noise_scale: float = 0.5  # stddev used by the homoskedastic mode
    variance_convention: str = "variance"  # how to read the noise level: "variance" or "stddev"
    x_placement: str = "grid"  # "grid" or "uniform"
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.x_range
        if not lo < hi:
            raise DataError("x_range needs lo < hi")
        if self.noise_scale < 0:
            raise DataError("noise_scale must be >= 0")
        if self.noise_mode not in ("heteroskedastic", "homoskedastic"):
            raise DataError(f"unknown noise_mode {self.noise_mode!r}")
        if self.variance_convention not in ("variance", "stddev"):
            raise DataError(f"unknown variance_convention {self.variance_convention!r}")
        if self.x_placement not in ("grid", "uniform"):
            raise DataError(f"unknown x_placement {self.x_placement!r}")
        if self.n_samples < 1:
            raise DataError("n_samples must be >= 1")


def noise_sigma(x, spec: SimSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if spec.noise_mode == "homoskedastic":
        return np.full_like(x, spec.noise_scale)
    level = sim_variance(x)
    return np.sqrt(level) if spec.variance_convention == "variance" else level


def simulate(spec: SimSpec = SimSpec()) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.x_range
    if spec.x_placement == "grid":
        x = np.linspace(lo, hi, spec.n_samples)
    else:
        x = np.sort(rng.uniform(lo, hi, spec.n_samples))
    mean = sim_mean(x)
    sigma = noise_sigma(x, spec)
    y = mean + sigma * rng.standard_normal(spec.n_samples)
    return Dataset(x.reshape(-1, 1), y, true_sigma=sigma, true_mean=mean, feature_names=("x",))


# ---------------------------------------------------------------------------
# subsampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitProtocol:
    train_fraction: float = 0.01
    repetitions: int = 10
    with_replacement: bool = True
    seed: int = 0
    test: str = "complement"  # "complement" or "all" (score the whole portfolio)

    def __post_init__(self):
        if not 0 < self.train_fraction <= 1:
            raise DataError("train_fraction must lie in (0, 1]")
        if self.repetitions < 1:
            raise DataError("repetitions must be >= 1")
        if self.test not in ("complement", "all"):
            raise DataError("test must be 'complement' or 'all'")


def split_indices(n: int, protocol: SplitProtocol, rep_index: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= rep_index < protocol.repetitions:
        raise DataError(f"rep_index {rep_index} outside [0, {protocol.repetitions})")
    k = int(round(protocol.train_fraction * n))
    if k < 1:
        raise DataError(f"train_fraction {protocol.train_fraction} of {n} rows selects no rows")
    rng = np.random.default_rng([protocol.seed, rep_index])
    if protocol.with_replacement:
        train = rng.integers(0, n, size=k)
    else:
        train = np.sort(rng.choice(n, size=k, replace=False))
    if protocol.test == "all":
        test = np.arange(n)
    else:
        mask = np.ones(n, dtype=bool)
        mask[train] = False
        test = np.flatnonzero(mask)
    return train, test


def split(data: Dataset, protocol: SplitProtocol, rep_index: int) -> tuple[Dataset, Dataset]:
    train, test = split_indices(len(data), protocol, rep_index)
    return data.subset(train), data.subset(test)


# ---------------------------------------------------------------------------
# variable-annuity portfolio CSV
# ---------------------------------------------------------------------------

def load_schema(path) -> dict:
    """Read a schema file: ``{"columns": {name: role}}`` or a bare ``{name: role}`` mapping."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc
    cols = doc.get("columns", doc) if isinstance(doc, dict) else None
    if not isinstance(cols, dict) or not cols:
        raise DataError(f"{path}: schema must map column names to roles")
    return validate_schema(cols)


def validate_schema(cols: dict) -> dict:
    bad = {k: v for k, v in cols.items() if v not in SCHEMA_ROLES}
    if bad:
        raise DataError(f"unknown column roles {bad}; expected one of {SCHEMA_ROLES}")
    targets = [k for k, v in cols.items() if v == "target"]
    if len(targets) != 1:
        raise DataError(f"schema needs exactly one target column, found {targets}")
    return dict(cols)


def default_schema_path() -> Path:
    return Path(__file__).with_name("schemas") / "va_gan2018.json"


def load_va_csv(path, schema) -> Dataset:
    """Load a portfolio CSV; one-hot categoricals, z-score numerics, raw target.

    ``schema`` is a role mapping or a path to a schema file. Columns present in
    the file but absent from the schema are ignored.
    """
    if not isinstance(schema, dict):
        schema = load_schema(schema)
    else:
        schema = validate_schema(schema)
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    missing = [c for c, role in schema.items() if role != "ignore" and c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    col = {name: j for j, name in enumerate(header)}

    def numeric(name):
        j = col[name]
        out = np.empty(len(rows))
        for i, r in enumerate(rows):
            try:
                out[i] = float(r[j])
            except (ValueError, IndexError):
                cell = r[j] if j < len(r) else "<missing>"
                raise DataError(f"{path}: row {i + 2}, column {name!r}: cannot parse {cell!r}") from None
            if not np.isfinite(out[i]):
                raise DataError(f"{path}: row {i + 2}, column {name!r}: non-finite value")
        return out

    target_name = next(c for c, role in schema.items() if role == "target")
    y = numeric(target_name)
    num_names = [c for c, role in schema.items() if role == "numeric"]
    raw = np.column_stack([numeric(c) for c in num_names]) if num_names else np.empty((len(rows), 0))
    blocks, names = [], []
    scaler = None
    if num_names:
        scaler = Scaler.fit(raw)
        blocks.append(scaler.transform(raw))
        names += num_names
    for c in (c for c, role in schema.items() if role == "categorical"):
        j = col[c]
        values = [r[j].strip() if j < len(r) else "" for r in rows]
        levels = sorted(set(values))
        onehot = np.zeros((len(rows), len(levels)))
        index = {v: k for k, v in enumerate(levels)}
        for i, v in enumerate(values):
            onehot[i, index[v]] = 1.0
        blocks.append(onehot)
        names += [f"{c}={v}" for v in levels]
    if not blocks:
        raise DataError("schema declares no feature columns")
    X = np.hstack(blocks)
    return Dataset(X, y, feature_names=tuple(names), feature_scaler=scaler,
                   numeric_columns=tuple(range(len(num_names))), raw_numeric=raw)


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, Scaler]:
    """Re-scale the numeric feature columns of both sets with statistics of ``train`` only."""
    cols = list(train.numeric_columns) or list(range(train.n_features))
    scaler = Scaler.fit(train.features[:, cols])

    def apply(ds):
        X = ds.features.copy()
        X[:, cols] = scaler.transform(X[:, cols])
        return replace(ds, features=X)

    return apply(train), apply(test), scaler


# ---------------------------------------------------------------------------
# synthetic stand-in portfolio (NOT the published dataset)
# ---------------------------------------------------------------------------

def synth_portfolio(n: int = 38_000, d: int = 20, seed: int = 0) -> Dataset:
    """Synthetic heteroskedastic portfolio with a known generator.

    Two categorical columns (3 products, 2 genders) and ``d - 2`` standard
    normal numeric columns (``d`` numeric columns when ``d < 3``). The target
    is a smooth nonlinear response plus Gaussian noise whose scale varies by a
    factor of about 40 across contracts.
    """
    if n < 1 or d < 1:
        raise DataError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    n_cat = 2 if d >= 3 else 0
    k = d - n_cat
    raw = rng.standard_normal((n, k))
    z = np.zeros((n, 6))
    z[:, :min(k, 6)] = raw[:, :6]
    mean = 3.0 + 1.5 * np.tanh(z[:, 0]) + 0.5 * z[:, 1] * z[:, 2] + np.sin(z[:, 3]) + 0.3 * z[:, 4] ** 2
    blocks, names = [], [f"num{j}" for j in range(k)]
    scaler = Scaler.fit(raw)
    blocks.append(scaler.transform(raw))
    if n_cat:
        product = rng.integers(0, 3, n)
        gender = rng.integers(0, 2, n)
        mean = mean + np.array([0.0, 0.8, -0.5])[product] + 0.2 * gender
        blocks.append(np.eye(3)[product])
        blocks.append(np.eye(2)[gender])
        names += [f"product={j}" for j in range(3)] + [f"gender={j}" for j in range(2)]
    sigma = 0.1 + 4.0 / (1.0 + np.exp(-3.0 * (z[:, 5] - 1.0)))
    y = mean + sigma * rng.standard_normal(n)
    return Dataset(np.hstack(blocks), y, true_sigma=sigma, true_mean=mean, feature_names=tuple(names),
                   feature_scaler=scaler, numeric_columns=tuple(range(k)), raw_numeric=raw)
