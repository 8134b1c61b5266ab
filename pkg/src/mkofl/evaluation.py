"""Metrics and analysis oracles.

Everything here is computed from immutable run artifacts (loss histories,
prediction traces, raw samples); nothing feeds back into the protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel_features import feature_matrix
from .objective import loss


@dataclass
class RegretReport:
    T: int
    hindsight_losses: np.ndarray     # (P,) cumulative loss of each w_p*
    alg_loss: float
    regret: float                    # alg_loss - min_p hindsight
    regret_per_round: float
    regret_over_sqrt_T: float
    per_kernel_gap: np.ndarray       # alg_loss - hindsight_losses


@dataclass
class CentralPmfTrace:
    q: np.ndarray                    # (T, P); row t-1 is the PMF entering round t


def mse_trace(predictions, labels, burn_in=0):
    """Cumulative MSE(t) = (1/(t K)) sum_{tau<=t} sum_k (pred - y)^2.

    predictions/labels are (T, K). With burn_in > 0 the first rounds are
    excluded from both the sum and the denominator.
    """
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    T, K = predictions.shape
    sq = ((predictions - labels) ** 2).sum(axis=1)
    if burn_in:
        sq = sq[burn_in:]
    denom = np.arange(1, sq.shape[0] + 1) * K
    return np.cumsum(sq) / denom


def best_hindsight(Z, y, lam, radius=math.inf, max_iter=50_000):
    """Exact minimizer of sum_i [(w^T z_i - y_i)^2 + lam ||w||^2].

    Solved by the normal equations (Z^T Z + n lam I) w = Z^T y; lam = 0
    falls back to the minimum-norm least-squares solution. A finite radius
    triggers projected-gradient refinement on the ball.
    Returns (w, cumulative loss).
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = Z.shape
    G = Z.T @ Z
    b = Z.T @ y
    if lam > 0:
        w = np.linalg.solve(G + n * lam * np.eye(m), b)
    else:
        w = np.linalg.lstsq(Z, y, rcond=None)[0]
    if math.isfinite(radius) and np.linalg.norm(w) > radius:
        # projected gradient with the exact Lipschitz step
        L = 2.0 * (np.linalg.eigvalsh(G)[-1] + n * lam)
        step = 1.0 / L
        w = w * (radius / np.linalg.norm(w))
        for _ in range(max_iter):
            g = 2.0 * (G @ w - b) + 2.0 * n * lam * w
            w_next = w - step * g
            norm = np.linalg.norm(w_next)
            if norm > radius:
                w_next *= radius / norm
            if np.linalg.norm(w_next - w) <= 1e-10 * (1.0 + np.linalg.norm(w)):
                w = w_next
                break
            w = w_next
    resid = Z @ w - y
    total = float(resid @ resid + n * lam * (w @ w))
    return w, total


def hindsight_table(dictionary, X, y, lam, radius=math.inf):
    """Per-kernel hindsight solutions over the pooled stream.

    Returns (models list, losses array of shape (P,)).
    """
    models, losses = [], []
    for sample in dictionary.samples:
        Z = feature_matrix(sample, X)
        w, total = best_hindsight(Z, y, lam, radius)
        models.append(w)
        losses.append(total)
    return models, np.array(losses)


def regret(alg_loss, hindsight_losses, T):
    hindsight_losses = np.asarray(hindsight_losses, dtype=float)
    best = float(hindsight_losses.min())
    R = float(alg_loss) - best
    return RegretReport(
        T=T,
        hindsight_losses=hindsight_losses,
        alg_loss=float(alg_loss),
        regret=R,
        regret_per_round=R / T,
        regret_over_sqrt_T=R / math.sqrt(T),
        per_kernel_gap=float(alg_loss) - hindsight_losses,
    )


def centralized_pmf(kernel_losses, eta_global, clip=True):
    """Network-wide PMF recursion from the pooled per-node losses.

    kernel_losses is (T, K, P); eta_global maps a 1-based round to its step
    size. Row t-1 of the result is the PMF entering round t, i.e. built
    from rounds 1..t-1 only, starting uniform. The exponent pools losses
    over nodes without the per-node K factor; with K = 1 the recursion
    coincides exactly with a node's own Hedge weights.
    """
    kernel_losses = np.asarray(kernel_losses, dtype=float)
    T, K, P = kernel_losses.shape
    ell = np.clip(kernel_losses, 0.0, 1.0) if clip else kernel_losses
    pooled = ell.sum(axis=1)                       # (T, P)
    steps = np.array([eta_global(t) for t in range(1, T + 1)])
    increments = steps[:, None] * pooled
    log_m = np.vstack([np.zeros(P), -np.cumsum(increments, axis=0)[:-1]])
    log_m -= log_m.max(axis=1, keepdims=True)
    q = np.exp(log_m)
    q /= q.sum(axis=1, keepdims=True)
    return CentralPmfTrace(q=q)


def tv_distance(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def selection_fraction(selection, p_star):
    """Fraction of trials selecting 1-based kernel p_star at each round.

    selection is (trials, T) of 1-based indices.
    """
    selection = np.asarray(selection)
    return (selection == p_star).mean(axis=0)


def martingale_check(q, selection_models, mixture_models, feats, y, lam,
                     n_draws, rng):
    """Monte-Carlo test of the zero-mean index-resampling property.

    For each resampled index I ~ q, the statistic per node k is
        X_k = L(selection_models[I]^T z_I(x_k), y_k)
              - sum_p q(p) L(mixture_models[k or :, p]^T z_p(x_k), y_k),
    averaged over nodes (the protocol shares one sampled index across all
    nodes). When both model sets coincide the statistic has exactly zero
    mean under q.

    feats: (K, P, 2D) per-node per-kernel features; y: (K,);
    selection_models: (P, 2D); mixture_models: (P, 2D) or (K, P, 2D).
    Returns a dict with the Monte-Carlo mean, std, 3-sigma band, and verdict.
    """
    q = np.asarray(q, dtype=float)
    feats = np.asarray(feats, dtype=float)
    y = np.asarray(y, dtype=float)
    P = q.shape[0]
    first = loss(selection_models[None, :, :], feats, y[:, None], lam)   # (K, P)
    mix = np.asarray(mixture_models, dtype=float)
    if mix.ndim == 2:
        mix = mix[None, :, :]
    second = loss(mix, feats, y[:, None], lam) @ q                       # (K,)
    draws = rng.choice(P, size=n_draws, p=q / q.sum())
    stat = first[:, draws].mean(axis=0) - second.mean()                  # (N,)
    mean = float(stat.mean())
    std = float(stat.std(ddof=1)) if n_draws > 1 else 0.0
    band = 3.0 * std / math.sqrt(n_draws)
    return {
        "mean": mean,
        "std": std,
        "band": band,
        "n_draws": int(n_draws),
        "passed": bool(abs(mean) <= band + 1e-15),
    }


def check_frozen_state(state, dictionary, lam, n_draws, rng):
    """Run martingale_check on an orchestrator FrozenState snapshot.

    Selection and mixture terms both use the across-node average of each
    kernel's local models (the model the server would broadcast for that
    kernel), which is the matched-model case with exactly zero mean.
    """
    mean_models = state.local_models.mean(axis=0)          # (P, 2D)
    q = state.node_pmfs.mean(axis=0)
    feats = np.stack([dictionary.feature_stack(x) for x in state.X])
    return martingale_check(q, mean_models, mean_models, feats, state.y,
                            lam, n_draws, rng)
