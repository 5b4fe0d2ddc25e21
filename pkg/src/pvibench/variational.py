"""Fully factorized Gaussian variational family.

The family is parameterized by per-dimension means ``mu`` and log standard
deviations ``rho`` (``sigma = exp(rho)``), so plain gradient steps keep every
sigma positive.  Samples are produced by the deterministic transform
``z = mu + exp(rho) * eps`` with ``eps ~ N(0, I)``, which is what makes
reparameterization gradients possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rng import generator

__all__ = [
    "VariationalParams",
    "init_params",
    "reparameterize",
    "log_q",
    "log_q_batch",
    "grad_log_q_in_lambda",
    "entropy",
]

_LOG2PI = np.log(2.0 * np.pi)


@dataclass
class VariationalParams:
    """Mean-field Gaussian parameters: q(z) = prod_i N(z_i; mu_i, exp(2 rho_i))."""

    mu: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.mu.shape != self.rho.shape or self.mu.ndim != 1:
            raise ValueError("mu and rho must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.rho))):
            raise ValueError("variational parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.rho)

    def copy(self) -> "VariationalParams":
        return VariationalParams(self.mu.copy(), self.rho.copy())

    def to_json(self) -> str:
        """Checkpoint serialization: JSON object with arrays mu and rho."""
        return json.dumps({"mu": self.mu.tolist(), "rho": self.rho.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "VariationalParams":
        obj = json.loads(text)
        return cls(np.asarray(obj["mu"], float), np.asarray(obj["rho"], float))


def init_params(dim: int, seed: int, mean_scale: float = 0.1,
                mu0: np.ndarray | None = None,
                sigma0: np.ndarray | float = 1.0) -> VariationalParams:
    """Random initialization: mu ~ N(mu0, mean_scale^2), sigma = sigma0.

    The default (mu0 = 0, sigma0 = 1) breaks symmetry with small random
    means and starts with unit standard deviations.
    """
    gen = generator(seed, stream=0xA11)
    mu = gen.normal(0.0, mean_scale, dim)
    if mu0 is not None:
        mu = mu + np.asarray(mu0, float)
    rho = np.log(np.broadcast_to(np.asarray(sigma0, float), (dim,)).copy())
    return VariationalParams(mu, rho)


def reparameterize(params: VariationalParams, eps: np.ndarray) -> np.ndarray:
    """z = mu + exp(rho) * eps.  Accepts a single draw (N,) or a batch (S, N)."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape[-1] != params.dim:
        raise ValueError(f"noise dimension {eps.shape[-1]} != params dimension {params.dim}")
    return params.mu + params.sigma * eps


def log_q(params: VariationalParams, z: np.ndarray) -> float:
    """log q(z) for a single point z in R^N."""
    z = np.asarray(z, dtype=float)
    if z.shape != (params.dim,):
        raise ValueError(f"z has shape {z.shape}, expected ({params.dim},)")
    return float(log_q_batch(params, z[None, :])[0])


def log_q_batch(params: VariationalParams, Z: np.ndarray) -> np.ndarray:
    """log q(z) for a batch Z of shape (S, N); returns shape (S,)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != params.dim:
        raise ValueError(f"Z has shape {Z.shape}, expected (S, {params.dim})")
    var = np.exp(2.0 * params.rho)
    return np.sum(-0.5 * _LOG2PI - params.rho - (Z - params.mu) ** 2 / (2.0 * var), axis=1)


def grad_log_q_in_lambda(params: VariationalParams, z: np.ndarray) -> np.ndarray:
    """Score vector: d log q(z) / d(mu, rho), concatenated to length 2N.

    Its expectation over z ~ q is zero (the score identity).  Vectorized:
    a batch (S, N) returns (S, 2N).
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.shape[1] != params.dim:
        raise ValueError(f"z dimension {Z.shape[1]} != params dimension {params.dim}")
    var = np.exp(2.0 * params.rho)
    centered = Z - params.mu
    d_mu = centered / var
    d_rho = centered ** 2 / var - 1.0
    out = np.concatenate([d_mu, d_rho], axis=1)
    return out[0] if single else out


def entropy(params: VariationalParams) -> float:
    """Closed-form entropy: sum_i (rho_i + 0.5 log(2 pi e))."""
    return float(np.sum(params.rho + 0.5 * np.log(2.0 * np.pi * np.e)))
