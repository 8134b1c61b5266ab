"""Dataset ingestion, normalization, AR featurization, node partitioning,
and synthetic kernel-realizable data generation.

All labels (and by default all features) are normalized into [0,1] before
a run so the bounded-loss assumption behind the Hedge analysis holds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IngestionError
from .kernel_features import SpectralSample, feature_matrix

GENERATOR_FEATURES = 512  # RFF width of the synthetic label field


@dataclass
class Dataset:
    X: np.ndarray                 # (n, d)
    y: np.ndarray                 # (n,)
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass
class NodeStreams:
    """Per-node sample streams: X is (K, T, d), y is (K, T)."""

    X: np.ndarray
    y: np.ndarray

    @property
    def K(self):
        return self.y.shape[0]

    @property
    def T(self):
        return self.y.shape[1]

    def round_samples(self, t):
        """All nodes' (x, y) pairs for round position t."""
        return self.X[:, t, :], self.y[:, t]


def _parse_column_spec(spec, header):
    if isinstance(spec, int):
        return spec
    if header is None:
        raise IngestionError(f"column {spec!r} requested by name but the file has no header")
    try:
        return header.index(spec)
    except ValueError:
        raise IngestionError(f"column {spec!r} not found in header {header}") from None


def load_csv(path, label_column, feature_columns=None, delimiter=","):
    """Load a numeric CSV; non-numeric rows are dropped and counted.

    label_column / feature_columns may be header names or 0-based positions.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise IngestionError(f"cannot read dataset file {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise IngestionError(f"{path} contains no rows")

    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]

    ncol = len(header) if header else len(rows[0])
    label_pos = _parse_column_spec(label_column, header)
    if not 0 <= label_pos < ncol:
        raise IngestionError(f"label column position {label_pos} outside 0..{ncol - 1}")
    if feature_columns is None:
        feat_pos = [i for i in range(ncol) if i != label_pos]
    else:
        feat_pos = [_parse_column_spec(c, header) for c in feature_columns]

    X_rows, y_vals, dropped = [], [], 0
    for r in rows:
        if len(r) != ncol:
            dropped += 1
            continue
        try:
            vals = [float(c) for c in r]
        except ValueError:
            dropped += 1
            continue
        X_rows.append([vals[i] for i in feat_pos])
        y_vals.append(vals[label_pos])
    if not y_vals:
        raise IngestionError(f"{path}: no numeric rows after dropping {dropped}")
    meta = {"source": str(path), "dropped_rows": dropped}
    return Dataset(np.array(X_rows, dtype=float), np.array(y_vals, dtype=float), meta)


def save_csv(ds, path):
    """Write x0..x{d-1},y with full-precision floats (round-trips exactly)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(ds.d)] + ["y"])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def normalize_minmax(ds):
    """Min-max scale every feature column and the label into [0,1].

    Constant columns map to all zeros. Scaling parameters land in
    meta["normalization"] so predictions can be mapped back.
    """
    if ds.n < 2:
        raise ConfigurationError("normalization needs at least 2 rows")
    x_min, x_max = ds.X.min(axis=0), ds.X.max(axis=0)
    y_min, y_max = float(ds.y.min()), float(ds.y.max())
    x_span = np.where(x_max > x_min, x_max - x_min, 1.0)
    X = np.where(x_max > x_min, (ds.X - x_min) / x_span, 0.0)
    y = (ds.y - y_min) / (y_max - y_min) if y_max > y_min else np.zeros_like(ds.y)
    meta = dict(ds.meta)
    meta["normalization"] = {
        "x_min": x_min.tolist(), "x_max": x_max.tolist(),
        "y_min": y_min, "y_max": y_max,
    }
    return Dataset(X, y, meta)


def save_normalization(ds, path):
    with open(path, "w") as fh:
        json.dump(ds.meta.get("normalization", {}), fh, indent=2)


def ar_featurize(series, s):
    """Autoregressive examples: features are the s most recent values.

    series (y_1..y_n) yields n-s examples with x = [y_{t-1}, ..., y_{t-s}]
    (most recent first) and label y_t.
    """
    series = np.asarray(series, dtype=float).ravel()
    n = series.shape[0]
    if s < 1:
        raise ConfigurationError(f"lag order must be >= 1, got {s}")
    if n <= s:
        raise ConfigurationError(f"series length {n} must exceed lag order {s}")
    windows = np.lib.stride_tricks.sliding_window_view(series[:-1], s)  # row i = y_{i+1}..y_{i+s}
    X = np.flip(windows, axis=1).copy()
    y = series[s:].copy()
    return Dataset(X, y, {"source": "ar", "lag": s})


def partition(ds, K, T, seed, preserve_order=False):
    """Split rows into K per-node streams of length T.

    Rows are shuffled once (skipped for time series via preserve_order),
    then row t*K + k becomes node k's sample at round position t: every
    node sees one fresh sample per round and no sample is used twice.
    """
    need = K * T
    if ds.n < need:
        raise ConfigurationError(
            f"need K*T = {need} rows but dataset has {ds.n}; "
            f"max feasible T at K={K} is {ds.n // K}")
    if preserve_order:
        order = np.arange(need)
    else:
        order = np.random.default_rng(seed).permutation(ds.n)[:need]
    Xs = ds.X[order].reshape(T, K, ds.d).transpose(1, 0, 2).copy()
    ys = ds.y[order].reshape(T, K).T.copy()
    return NodeStreams(Xs, ys)


def synth_generate(bandwidth_sq, n, d, noise_sd, seed,
                   signal_sd=0.25, gen_features=GENERATOR_FEATURES):
    """Kernel-realizable regression task with a known best bandwidth.

    Inputs are uniform on [0,1]^d. The label field is a random RFF function
    of the target kernel (gen_features frequencies), centered and scaled to
    sample standard deviation signal_sd, plus Gaussian noise, clipped to
    [0,1]. The clip keeps labels in the normalized range; with the scale
    well below 1 it binds rarely.
    """
    if bandwidth_sq <= 0:
        raise ConfigurationError(f"bandwidth_sq must be positive, got {bandwidth_sq}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    V = rng.normal(size=(gen_features, d)) / np.sqrt(bandwidth_sq)
    w = rng.normal(size=2 * gen_features)
    f = feature_matrix(SpectralSample(0, V), X) @ w
    f = (f - f.mean()) * (signal_sd / max(f.std(), 1e-12))
    y = np.clip(f + noise_sd * rng.normal(size=n), 0.0, 1.0)
    meta = {
        "source": "synthetic",
        "bandwidth_sq": bandwidth_sq,
        "noise_sd": noise_sd,
        "signal_sd": signal_sd,
        "seed": seed,
        "gen_features": gen_features,
    }
    return Dataset(X, y, meta)
