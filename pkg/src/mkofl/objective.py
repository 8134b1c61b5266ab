"""Regularized least-squares objective and the OGD primitive.

L(w; z, y) = (w^T z - y)^2 + lam * ||w||^2

All functions broadcast over leading axes, so a (P, 2D) stack of models
against a (P, 2D) stack of features yields P losses in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossConfig:
    """Ridge weight, optional projection radius, and Hedge clipping switch."""

    lam: float = 0.01
    radius: float = math.inf       # ||w|| <= radius enforced after each step when finite
    clip_for_hedge: bool = True    # clip losses into [0,1] inside the Hedge exponent

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


def loss(w, z, y, lam):
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    resid = np.sum(w * z, axis=-1) - y
    return resid ** 2 + lam * np.sum(w * w, axis=-1)


def gradient(w, z, y, lam):
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    resid = np.sum(w * z, axis=-1) - y
    return 2.0 * resid[..., None] * z + 2.0 * lam * w


def ogd_step(w, z, y, eta, lam, radius=math.inf):
    if eta <= 0:
        raise ValueError(f"step size must be positive, got {eta}")
    out = w - eta * gradient(w, z, y, lam)
    if math.isfinite(radius):
        out = project_ball(out, radius)
    return out


def project_ball(w, radius):
    """Euclidean projection onto {||w|| <= radius}, row-wise on stacks."""
    w = np.asarray(w, dtype=float)
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
    return w * scale
