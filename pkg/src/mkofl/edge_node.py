"""Edge-node behavior for multi-kernel online federated learning.

Round structure per node (rounds are 1-based in the step-size schedules):

1. apply_downlink   - the broadcast global model overwrites the local model
                      of the kernel that was globally selected this round.
2. predict          - label estimate with the global model on that kernel.
3. local_update     - record per-kernel losses, then one OGD step on all P
                      local models.
4. update_hedge     - multiplicative weight update from the recorded losses.
5. propose_kernel   - sample the node's kernel proposal for round t+2.
6. build_uplink     - ship (proposal, post-step model of the next global kernel).

Kernel positions inside this module are 0-based array indices; the 1-based
dictionary indices only appear at the reporting boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError
from .objective import gradient, loss

INDEX_SCALARS = 1  # one scalar of each message carries a kernel index


@dataclass
class DownlinkMessage:
    next_index: int          # kernel position the server will average next
    global_model: np.ndarray

    @property
    def payload_scalars(self):
        return self.global_model.size + INDEX_SCALARS


@dataclass
class UplinkMessage:
    proposal: int            # node's sampled kernel position for round t+2
    local_model: np.ndarray

    @property
    def payload_scalars(self):
        return self.local_model.size + INDEX_SCALARS


@dataclass
class NodeState:
    node_id: int
    local_models: np.ndarray           # (P, 2D)
    log_weights: np.ndarray            # (P,) raw log Hedge weights, start at 0
    last_losses: np.ndarray            # (P,) losses recorded this round
    rng: np.random.Generator
    pending_proposal: int | None = field(default=None)

    @property
    def P(self):
        return self.local_models.shape[0]


def make_node(node_id, P, dim, rng):
    """Fresh node: zero models and uniform Hedge weights (m-hat = 1)."""
    return NodeState(
        node_id=node_id,
        local_models=np.zeros((P, dim)),
        log_weights=np.zeros(P),
        last_losses=np.zeros(P),
        rng=rng,
    )


def hedge_pmf(log_weights):
    """PMF from raw log weights, max-subtracted for stability."""
    shifted = log_weights - log_weights.max()
    w = np.exp(shifted)
    return w / w.sum()


def apply_downlink(state, msg, current_index):
    """Overwrite the globally-trained slot with the broadcast model.

    The averaged global model replaces the local model of the kernel that
    was selected for round t (the slot whose uploads produced it); every
    other kernel keeps its own local parameters.
    """
    if not 0 <= current_index < state.P:
        raise ProtocolError(f"kernel position {current_index} outside [0, {state.P})")
    if not 0 <= msg.next_index < state.P:
        raise ProtocolError(f"kernel position {msg.next_index} outside [0, {state.P})")
    state.local_models[current_index] = msg.global_model


def predict(global_model, features):
    return float(np.dot(global_model, features))


def local_update(state, feats, y, eta_l, cfg):
    """Record per-kernel losses, then OGD-step every local model.

    Losses are measured on the pre-step models; the Hedge update of the
    same round consumes exactly these values.
    """
    models = state.local_models
    state.last_losses = loss(models, feats, y, cfg.lam)
    if eta_l > 0:
        models -= eta_l * gradient(models, feats, y, cfg.lam)
        if np.isfinite(cfg.radius):
            norms = np.linalg.norm(models, axis=1, keepdims=True)
            np.multiply(models, np.where(norms > cfg.radius, cfg.radius / norms, 1.0),
                        out=models)
    return state.last_losses


def update_hedge(state, eta_g, K, clip_for_hedge=True):
    """Multiplicative weight update m(p) *= exp(-eta_g * K * loss_p).

    Raw log weights are kept unnormalized (they only ever decrease);
    normalization happens in hedge_pmf.
    """
    ell = state.last_losses
    if clip_for_hedge:
        ell = np.clip(ell, 0.0, 1.0)
    state.log_weights = state.log_weights - eta_g * K * ell


def propose_kernel(state):
    q = hedge_pmf(state.log_weights)
    choice = int(state.rng.choice(state.P, p=q))
    state.pending_proposal = choice
    return choice


def build_uplink(state, next_index):
    """Message for the server: pending proposal + post-step model of next_index."""
    if state.pending_proposal is None:
        raise ProtocolError("propose_kernel must run before build_uplink")
    if not 0 <= next_index < state.P:
        raise ProtocolError(f"kernel position {next_index} outside [0, {state.P})")
    return UplinkMessage(
        proposal=state.pending_proposal,
        local_model=state.local_models[next_index].copy(),
    )
