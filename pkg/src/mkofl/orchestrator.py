"""Round-by-round drivers for the four algorithms and the experiment loop.

Algorithms:

- sk_ofl:       single fixed kernel; stateless nodes run one OGD step from
                the broadcast global model; server averages the K uploads.
- mk_ofl:       multi-kernel protocol: P local models per node, Hedge
                proposals, count-power index selection at the server; each
                message carries one model plus one index (2D+1 scalars).
- naive_mk:     full-exchange baseline: all P models and the P Hedge
                weights move up and down every round; prediction is the
                weight-mixture of the per-kernel predictions.
- central_omkl: naive_mk collapsed to a single node that consumes the K
                per-round samples sequentially (K*T rounds), the
                centralized performance reference.

Seeding: the dataset, its node partition, and the kernel dictionary derive
from data_seed only; per-trial node and server streams derive from
(seed, trial). Changing `seed` therefore never changes the sample streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import data_pipeline, edge_node, server as server_mod
from .data_pipeline import NodeStreams
from .edge_node import DownlinkMessage
from .errors import ConfigurationError
from .kernel_features import build_dictionary, feature_map
from .objective import LossConfig, gradient, project_ball

ALGORITHMS = ("mk_ofl", "sk_ofl", "naive_mk", "central_omkl")

# substream tags under data_seed; distinct so streams never collide
_DATA_TAG = 11
_PARTITION_TAG = 13
_DICTIONARY_TAG = 17

DEFAULT_SYNTH = {
    "kind": "synth",
    "bandwidth_sq": 1e-2,
    "d": 1,
    "noise_sd": 0.16,
    "signal_sd": 0.25,
}


@dataclass
class ExperimentConfig:
    algorithm: str = "mk_ofl"
    K: int = 20
    T: int = 500
    P: int = 11
    r: int = 100
    D: int | None = None            # derived from r when None
    lam: float = 0.01
    radius: float = math.inf
    clip_for_hedge: bool = True
    eta_mode: str = "anytime"       # "anytime": eta ~ 1/sqrt(t); "fixed": 1/sqrt(T)
    eta_local_scale: float = 1.0
    eta_global_scale: float = 1.0
    seed: int = 1
    data_seed: int = 1
    trials: int = 1
    sk_kernel_index: int | None = None   # 1-based dictionary index, sk_ofl only
    mse_burn_in: int = 0
    verbose_trace: bool = False
    dataset: dict = field(default_factory=lambda: dict(DEFAULT_SYNTH))

    def derived_D(self):
        if self.D is not None:
            return self.D
        if self.algorithm == "sk_ofl":
            return self.r // 2
        return self.r // 2 - 1

    def rounds(self):
        """Protocol rounds actually executed (central_omkl serializes K*T)."""
        return self.K * self.T if self.algorithm == "central_omkl" else self.T

    def nodes(self):
        return 1 if self.algorithm == "central_omkl" else self.K

    def eta_local(self, t):
        denom = math.sqrt(self.T if self.eta_mode == "fixed" else t)
        return self.eta_local_scale / denom

    def eta_global(self, t):
        denom = math.sqrt(self.T if self.eta_mode == "fixed" else t)
        return self.eta_global_scale * math.log(self.P) / denom

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if min(self.K, self.T, self.P) < 1:
            raise ConfigurationError("K, T, P must all be >= 1")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.eta_mode not in ("anytime", "fixed"):
            raise ConfigurationError(f"unknown eta_mode {self.eta_mode!r}")
        D = self.derived_D()
        if D < 1:
            raise ConfigurationError(f"derived D = {D} from r = {self.r}; need r >= 4")
        budget = 2 * D if self.algorithm == "sk_ofl" else 2 * D + 1
        if budget > self.r:
            raise ConfigurationError(
                f"message of {budget} scalars exceeds the r = {self.r} budget "
                f"(D = {D} too large)")
        if self.algorithm == "sk_ofl":
            if self.sk_kernel_index is None:
                raise ConfigurationError("sk_ofl requires sk_kernel_index (1-based)")
            if not 1 <= self.sk_kernel_index <= self.P:
                raise ConfigurationError(
                    f"sk_kernel_index {self.sk_kernel_index} outside 1..{self.P}")
        if self.lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        if not 0 <= self.mse_burn_in < self.rounds():
            raise ConfigurationError(
                f"mse_burn_in must lie in 0..{self.rounds() - 1}")
        if "kind" not in self.dataset:
            raise ConfigurationError("dataset spec needs a 'kind' field")
        return self

    def to_dict(self):
        out = asdict(self)
        if out["radius"] == math.inf:
            out["radius"] = None
        return out

    @classmethod
    def from_dict(cls, blob):
        blob = dict(blob)
        unknown = set(blob) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if blob.get("radius") is None:
            blob["radius"] = math.inf
        return cls(**blob)


@dataclass
class TraceRecord:
    round: int
    selected_index: int            # 1-based kernel index used for prediction
    predictions: np.ndarray        # (K,)
    labels: np.ndarray             # (K,)
    sq_err_sum: float
    mse: float                     # cumulative (1/(tK)) sum of squared errors
    alg_loss_sum: float            # sum_k of the full regularized loss
    uplink_scalars: int
    downlink_scalars: int


@dataclass
class FrozenState:
    """Mid-run snapshot taken after the downlink overwrite of a round."""

    round: int
    selected_index: int                  # 1-based
    global_model: np.ndarray             # (2D,)
    local_models: np.ndarray             # (K, P, 2D), pre-OGD
    node_pmfs: np.ndarray                # (K, P)
    X: np.ndarray                        # (K, d)
    y: np.ndarray                        # (K,)


@dataclass
class TrialResult:
    trial: int
    records: list
    kernel_losses: np.ndarray | None     # (T, K, P) when verbose
    snapshots: list

    @property
    def selected(self):
        return np.array([r.selected_index for r in self.records])

    @property
    def mse(self):
        return np.array([r.mse for r in self.records])

    @property
    def terminal_mse(self):
        return self.records[-1].mse


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dictionary: object
    streams: NodeStreams
    trials: list

    @property
    def mse_mean(self):
        return np.mean([t.mse for t in self.trials], axis=0)

    @property
    def selection(self):
        """(trials, T) matrix of 1-based selected kernel indices."""
        return np.stack([t.selected for t in self.trials])

    @property
    def terminal_mse(self):
        return float(np.mean([t.terminal_mse for t in self.trials]))

    def comm_totals(self):
        up = sum(r.uplink_scalars for r in self.trials[0].records)
        down = sum(r.downlink_scalars for r in self.trials[0].records)
        return {"uplink_scalars": up, "downlink_scalars": down}


def build_dataset(cfg):
    """Materialize the configured dataset (synthetic, CSV, or AR series)."""
    spec = dict(cfg.dataset)
    kind = spec.pop("kind")
    n_needed = cfg.K * cfg.T
    if kind == "synth":
        return data_pipeline.synth_generate(
            bandwidth_sq=spec.get("bandwidth_sq", 1e-2),
            n=spec.get("n", n_needed),
            d=spec.get("d", 1),
            noise_sd=spec.get("noise_sd", 0.16),
            seed=np.random.SeedSequence([cfg.data_seed, _DATA_TAG]),
            signal_sd=spec.get("signal_sd", 0.25),
        )
    if kind == "csv":
        if "path" not in spec or spec.get("label_column") is None:
            raise ConfigurationError("csv dataset spec needs 'path' and 'label_column'")
        ds = data_pipeline.load_csv(
            spec["path"], spec["label_column"],
            feature_columns=spec.get("feature_columns"))
        if spec.get("normalize", True):
            ds = data_pipeline.normalize_minmax(ds)
        return ds
    if kind == "ar_csv":
        raw = data_pipeline.load_csv(spec["path"], spec.get("column", 0),
                                     feature_columns=[spec.get("column", 0)])
        series = raw.y
        lo, hi = series.min(), series.max()
        series = (series - lo) / (hi - lo) if hi > lo else np.zeros_like(series)
        ds = data_pipeline.ar_featurize(series, spec.get("lag", 5))
        ds.meta["normalization"] = {"y_min": float(lo), "y_max": float(hi)}
        return ds
    raise ConfigurationError(f"unknown dataset kind {kind!r}")


def build_streams(cfg, ds):
    preserve = cfg.dataset.get("kind") == "ar_csv"
    return data_pipeline.partition(
        ds, cfg.nodes(), cfg.rounds(),
        seed=np.random.SeedSequence([cfg.data_seed, _PARTITION_TAG]),
        preserve_order=preserve)


def build_experiment_dictionary(cfg, d):
    return build_dictionary(cfg.P, cfg.derived_D(), d, [cfg.data_seed, _DICTIONARY_TAG])


def _trial_rngs(cfg, trial, n_nodes):
    children = np.random.SeedSequence([cfg.seed, trial]).spawn(n_nodes + 1)
    node_rngs = [np.random.default_rng(c) for c in children[:n_nodes]]
    return node_rngs, np.random.default_rng(children[n_nodes])


def run_trial_mk(cfg, dictionary, streams, trial, capture_rounds=()):
    K, T, P = cfg.K, cfg.T, cfg.P
    dim = 2 * cfg.derived_D()
    loss_cfg = LossConfig(cfg.lam, cfg.radius, cfg.clip_for_hedge)
    node_rngs, server_rng = _trial_rngs(cfg, trial, K)
    nodes = [edge_node.make_node(k, P, dim, node_rngs[k]) for k in range(K)]
    srv = server_mod.make_server(P, dim, server_rng)
    payload = dim + 1
    records, snapshots = [], []
    kernel_losses = np.empty((T, K, P)) if cfg.verbose_trace else None
    cum_sq = 0.0
    capture_rounds = set(capture_rounds)

    for t in range(1, T + 1):
        Xr, yr = streams.round_samples(t - 1)
        sel = srv.current_index
        msg = DownlinkMessage(srv.next_index, srv.global_model)
        for node in nodes:
            edge_node.apply_downlink(node, msg, sel)
        if t in capture_rounds:
            snapshots.append(FrozenState(
                round=t, selected_index=sel + 1,
                global_model=srv.global_model.copy(),
                local_models=np.stack([n.local_models.copy() for n in nodes]),
                node_pmfs=np.stack([edge_node.hedge_pmf(n.log_weights) for n in nodes]),
                X=Xr.copy(), y=yr.copy()))

        eta_l, eta_g = cfg.eta_local(t), cfg.eta_global(t)
        preds = np.empty(K)
        uplinks = []
        for k, node in enumerate(nodes):
            feats = dictionary.feature_stack(Xr[k])
            preds[k] = edge_node.predict(srv.global_model, feats[sel])
            pk_losses = edge_node.local_update(node, feats, yr[k], eta_l, loss_cfg)
            if kernel_losses is not None:
                kernel_losses[t - 1, k] = pk_losses
            edge_node.update_hedge(node, eta_g, K, cfg.clip_for_hedge)
            edge_node.propose_kernel(node)
            uplinks.append(edge_node.build_uplink(node, msg.next_index))

        sq = float(np.sum((preds - yr) ** 2))
        cum_sq += sq
        alg_loss = sq + K * cfg.lam * float(srv.global_model @ srv.global_model)
        records.append(TraceRecord(
            round=t, selected_index=sel + 1,
            predictions=preds, labels=yr.copy(),
            sq_err_sum=sq, mse=cum_sq / (t * K), alg_loss_sum=alg_loss,
            uplink_scalars=K * payload, downlink_scalars=K * payload))
        server_mod.global_round(srv, uplinks, K)

    return TrialResult(trial, records, kernel_losses, snapshots)


def run_trial_sk(cfg, dictionary, streams, trial):
    K, T = cfg.K, cfg.T
    dim = 2 * cfg.derived_D()
    sample = dictionary.samples[cfg.sk_kernel_index - 1]
    lam = cfg.lam
    w_hat = np.zeros(dim)
    payload = dim
    records = []
    cum_sq = 0.0

    for t in range(1, T + 1):
        Xr, yr = streams.round_samples(t - 1)
        eta_l = cfg.eta_local(t)
        Z = np.stack([feature_map(sample, x) for x in Xr])  # (K, 2D)
        preds = Z @ w_hat
        sq = float(np.sum((preds - yr) ** 2))
        cum_sq += sq
        alg_loss = sq + K * lam * float(w_hat @ w_hat)
        # stateless nodes all step from the same broadcast model
        uploads = w_hat[None, :] - eta_l * gradient(w_hat[None, :], Z, yr, lam)
        if math.isfinite(cfg.radius):
            uploads = project_ball(uploads, cfg.radius)
        records.append(TraceRecord(
            round=t, selected_index=cfg.sk_kernel_index,
            predictions=preds, labels=yr.copy(),
            sq_err_sum=sq, mse=cum_sq / (t * K), alg_loss_sum=alg_loss,
            uplink_scalars=K * payload, downlink_scalars=K * payload))
        w_hat = server_mod.fedavg(uploads)

    return TrialResult(trial, records, None, [])


def run_trial_naive(cfg, dictionary, streams, trial):
    """Full-exchange multi-kernel baseline (also the centralized reference).

    Nodes are stateless: every round they receive all P global models plus
    the global Hedge weights, update both from their own sample, and upload
    everything. The server averages models coordinate-wise and weight
    vectors as normalized PMFs.
    """
    K, T, P = cfg.nodes(), cfg.rounds(), cfg.P
    dim = 2 * cfg.derived_D()
    lam = cfg.lam
    W = np.zeros((P, dim))
    log_q = np.zeros(P)
    payload = P * dim + P
    records = []
    cum_sq = 0.0
    kernel_losses = np.empty((T, K, P)) if cfg.verbose_trace else None

    for t in range(1, T + 1):
        Xr, yr = streams.round_samples(t - 1)
        eta_l, eta_g = cfg.eta_local(t), cfg.eta_global(t)
        q = edge_node.hedge_pmf(log_q)
        feats = np.stack([dictionary.feature_stack(x) for x in Xr])  # (K, P, 2D)
        per_kernel = np.einsum("kpj,pj->kp", feats, W)
        preds = per_kernel @ q
        sq = float(np.sum((preds - yr) ** 2))
        cum_sq += sq
        mix_norm_sq = float(np.sum((q[:, None] * W).sum(axis=0) ** 2))
        alg_loss = sq + K * lam * mix_norm_sq

        losses = (per_kernel - yr[:, None]) ** 2 + lam * np.sum(W * W, axis=1)[None, :]
        if kernel_losses is not None:
            kernel_losses[t - 1] = losses
        # per-node updated copies of all P models, then FedAvg each kernel
        grads = 2.0 * (per_kernel - yr[:, None])[:, :, None] * feats \
            + 2.0 * lam * W[None, :, :]
        uploads = W[None, :, :] - eta_l * grads
        if math.isfinite(cfg.radius):
            uploads = project_ball(uploads, cfg.radius)
        W = np.mean(uploads, axis=0)
        ell = np.clip(losses, 0.0, 1.0) if cfg.clip_for_hedge else losses
        lq_nodes = log_q[None, :] - eta_g * K * ell          # (K, P)
        lq_nodes -= lq_nodes.max(axis=1, keepdims=True)
        q_nodes = np.exp(lq_nodes)
        q_nodes /= q_nodes.sum(axis=1, keepdims=True)
        log_q = np.log(np.maximum(q_nodes.mean(axis=0), 1e-300))

        records.append(TraceRecord(
            round=t, selected_index=int(np.argmax(q)) + 1,
            predictions=preds, labels=yr.copy(),
            sq_err_sum=sq, mse=cum_sq / (t * K), alg_loss_sum=alg_loss,
            uplink_scalars=K * payload, downlink_scalars=K * payload))

    return TrialResult(trial, records, kernel_losses, [])


def run_trial(cfg, dictionary, streams, trial, capture_rounds=()):
    if cfg.algorithm == "mk_ofl":
        return run_trial_mk(cfg, dictionary, streams, trial, capture_rounds)
    if cfg.algorithm == "sk_ofl":
        return run_trial_sk(cfg, dictionary, streams, trial)
    return run_trial_naive(cfg, dictionary, streams, trial)


def run_experiment(cfg, capture_rounds=()):
    """Run all trials of one config on one shared dataset and dictionary."""
    cfg.validate()
    ds = build_dataset(cfg)
    streams = build_streams(cfg, ds)
    dictionary = build_experiment_dictionary(cfg, ds.d)
    trials = [run_trial(cfg, dictionary, streams, tr, capture_rounds)
              for tr in range(cfg.trials)]
    return ExperimentResult(cfg, dictionary, streams, trials)
