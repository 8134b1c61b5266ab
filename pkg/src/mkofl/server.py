"""Server-side aggregation: FedAvg plus randomized kernel-index selection.

The index rule turns K node proposals into one global choice: with c_p
nodes proposing kernel p, kernel p is selected with probability
c_p^K / sum_q c_q^K. Computed in log space; c^K overflows float64 already
at c = 20, K = 20.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edge_node import DownlinkMessage
from .errors import ProtocolError


@dataclass
class GlobalState:
    P: int
    global_model: np.ndarray
    current_index: int        # kernel position predictions use this round
    next_index: int           # kernel position being averaged this round
    rng: np.random.Generator


def make_server(P, dim, rng):
    """Bootstrap state: zero model, both pipeline indices at position 0."""
    return GlobalState(P=P, global_model=np.zeros(dim),
                       current_index=0, next_index=0, rng=rng)


def fedavg(models):
    try:
        stack = np.asarray(models, dtype=float)
    except ValueError as exc:  # ragged model lengths
        raise ProtocolError(f"fedavg needs equal-length models: {exc}") from None
    if stack.ndim != 2 or stack.shape[0] == 0:
        raise ProtocolError(f"fedavg needs a nonempty stack of equal-length models, "
                            f"got shape {stack.shape}")
    return stack.mean(axis=0)


def count_power_pmf(proposals, P, K_power=None):
    """Selection PMF over kernel positions: proportional to c_p^K.

    K_power defaults to the number of proposals; exposed separately so the
    rule can be probed at other sharpness levels.
    """
    proposals = np.asarray(proposals, dtype=int)
    if proposals.size == 0:
        raise ProtocolError("no proposals to aggregate")
    if proposals.min() < 0 or proposals.max() >= P:
        raise ProtocolError("proposal outside [0, P)")
    K = proposals.size if K_power is None else K_power
    counts = np.bincount(proposals, minlength=P)
    with np.errstate(divide="ignore"):
        logp = np.where(counts > 0, K * np.log(np.maximum(counts, 1)), -np.inf)
    logp -= logp.max()
    pmf = np.exp(logp)
    return pmf / pmf.sum()


def aggregate_indices(proposals, P, rng):
    pmf = count_power_pmf(proposals, P)
    return int(rng.choice(P, p=pmf))


def global_round(state, uplinks, K):
    """Consume K uplinks; emit the next downlink and shift the index pipeline."""
    if len(uplinks) != K:
        raise ProtocolError(f"expected {K} uplinks, got {len(uplinks)}")
    new_model = fedavg([m.local_model for m in uplinks])
    selected = aggregate_indices([m.proposal for m in uplinks], state.P, state.rng)
    state.global_model = new_model
    state.current_index = state.next_index
    state.next_index = selected
    return DownlinkMessage(next_index=selected, global_model=new_model.copy())
