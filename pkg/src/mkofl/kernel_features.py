"""Gaussian kernel dictionary and random Fourier feature maps.

Each kernel kappa_p(x, x') = exp(-||x - x'||^2 / (2 sigma_p^2)) is approximated
by the 2D-dimensional embedding

    z_p(x) = (1/sqrt(D)) [sin(v_1^T x), ..., sin(v_D^T x),
                          cos(v_1^T x), ..., cos(v_D^T x)],

where the frequency rows v_i are i.i.d. draws from the kernel's spectral
density N(0, sigma_p^{-2} I_d). The embedding has exact unit norm and
E_V[z_p(x)^T z_p(x')] = kappa_p(x, x').
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DICTIONARY_SCHEMA_VERSION = 1


def bandwidth_ladder(P):
    """Bandwidths sigma_p^2 = 10^(p-6) for p = 1..P."""
    return [10.0 ** (p - 6) for p in range(1, P + 1)]


@dataclass(frozen=True)
class GaussianKernel:
    """One dictionary entry: 1-based index and squared bandwidth."""

    index: int
    bandwidth_sq: float

    def __post_init__(self):
        if self.bandwidth_sq <= 0:
            raise ConfigurationError(f"bandwidth_sq must be positive, got {self.bandwidth_sq}")


@dataclass(frozen=True)
class SpectralSample:
    """Frequency matrix V (D x d) defining one kernel's feature map."""

    kernel_index: int
    V: np.ndarray

    @property
    def D(self):
        return self.V.shape[0]

    @property
    def d(self):
        return self.V.shape[1]


@dataclass
class KernelDictionary:
    """P Gaussian kernels with their spectral samples, shared across all nodes.

    Immutable after construction; the stacked frequency tensor is cached for
    fast per-sample evaluation of all P feature maps at once.
    """

    kernels: list[GaussianKernel]
    samples: list[SpectralSample]
    D: int
    d: int
    seed: int
    _vstack: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.kernels) != len(self.samples):
            raise ConfigurationError("kernel/sample count mismatch")
        if any(s.D != self.D or s.d != self.d for s in self.samples):
            raise ConfigurationError("all spectral samples must share (D, d)")
        self._vstack = np.stack([s.V for s in self.samples])  # (P, D, d)

    @property
    def P(self):
        return len(self.kernels)

    def feature_stack(self, x):
        """Features of one input under every kernel, shape (P, 2D)."""
        ang = self._vstack @ np.asarray(x, dtype=float)  # (P, D)
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1) / np.sqrt(self.D)

    def to_json(self):
        return json.dumps({
            "schema_version": DICTIONARY_SCHEMA_VERSION,
            "P": self.P,
            "D": self.D,
            "d": self.d,
            "seed": self.seed,
            "kernels": [
                {"index": k.index, "bandwidth_sq": k.bandwidth_sq} for k in self.kernels
            ],
            "frequencies": [s.V.tolist() for s in self.samples],
        })

    @classmethod
    def from_json(cls, text):
        blob = json.loads(text)
        if blob.get("schema_version") != DICTIONARY_SCHEMA_VERSION:
            raise ConfigurationError(
                f"unsupported dictionary schema version {blob.get('schema_version')}")
        kernels = [GaussianKernel(k["index"], k["bandwidth_sq"]) for k in blob["kernels"]]
        samples = [
            SpectralSample(k.index, np.array(v, dtype=float))
            for k, v in zip(kernels, blob["frequencies"])
        ]
        return cls(kernels, samples, blob["D"], blob["d"], blob["seed"])


def build_dictionary(P, D, d, seed):
    """Build a P-kernel dictionary with bandwidths 10^(p-6), p = 1..P.

    Spectral rows for kernel p are drawn N(0, sigma_p^{-2} I_d) from a
    deterministic per-kernel substream of `seed`, so the same arguments
    always reproduce the same matrices bit for bit.
    """
    if P < 1 or D < 1 or d < 1:
        raise ConfigurationError(f"P, D, d must all be >= 1, got ({P}, {D}, {d})")
    streams = np.random.SeedSequence(seed).spawn(P)
    kernels, samples = [], []
    for pos, (ssq, stream) in enumerate(zip(bandwidth_ladder(P), streams)):
        index = pos + 1
        rng = np.random.default_rng(stream)
        V = rng.normal(size=(D, d)) / np.sqrt(ssq)
        kernels.append(GaussianKernel(index, ssq))
        samples.append(SpectralSample(index, V))
    return KernelDictionary(kernels, samples, D, d, seed)


def feature_map(sample, x):
    """Random Fourier embedding of a single input, shape (2D,), unit norm."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sample.d,):
        raise ValueError(f"expected input of shape ({sample.d},), got {x.shape}")
    ang = sample.V @ x
    return np.concatenate([np.sin(ang), np.cos(ang)]) / np.sqrt(sample.D)


def feature_matrix(sample, X):
    """Embeddings for a batch of inputs, shape (n, 2D)."""
    X = np.asarray(X, dtype=float)
    ang = X @ sample.V.T  # (n, D)
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1) / np.sqrt(sample.D)


def save_dictionary(dictionary, path):
    with open(path, "w") as fh:
        fh.write(dictionary.to_json())


def load_dictionary(path):
    with open(path) as fh:
        return KernelDictionary.from_json(fh.read())
