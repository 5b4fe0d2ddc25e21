"""Deterministic reference computations on small models.

Everything here is quadrature or finite differences: no randomness anywhere.
These routines are the ground truth against which the Monte Carlo estimators
and the optimizer are validated, so they are deliberately independent of the
sampling code paths.  Quadrature is limited to latent dimension <= 2; the
high-dimensional claims of the package are checked as scaling properties,
not by exact integration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .models import Model
from .variational import VariationalParams, log_q_batch

__all__ = [
    "QuadratureGrid",
    "auto_grid",
    "grid_for_params",
    "marginal_likelihood",
    "marginal_likelihood_refinement",
    "posterior_moments",
    "exact_expectation_power",
    "exact_elbo",
    "exact_surrogate",
    "exact_perturbative_bound",
    "exact_alpha_bound",
    "exact_v0_star",
    "interaction_moments",
    "fd_gradient",
]


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product integration grid over [lo_i, hi_i] per dimension.

    ``m`` is the node count per dimension (>= 32).  ``rule`` is "trapezoid"
    or "gauss-hermite"; the Gauss-Hermite rule places nodes around the range
    midpoint with scale (hi-lo)/20, matching the +-10 sigma convention the
    automatic grids use.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    m: int = 2048
    rule: str = "trapezoid"

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not len(self.lo):
            raise ValueError("lo/hi must be non-empty and of equal length")
        if len(self.lo) > 2:
            raise NotImplementedError("quadrature supports dimension <= 2 only")
        if self.m < 32:
            raise ValueError("need at least 32 nodes per dimension")
        if self.rule not in ("trapezoid", "gauss-hermite"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("need hi > lo in every dimension")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def nodes_weights(self):
        """Flattened nodes (M^dim, dim) and integration weights (M^dim,)."""
        axes, w1 = [], []
        for lo, hi in zip(self.lo, self.hi):
            if self.rule == "trapezoid":
                x = np.linspace(lo, hi, self.m)
                w = np.full(self.m, x[1] - x[0])
                w[0] *= 0.5
                w[-1] *= 0.5
            else:
                t, wh = np.polynomial.hermite.hermgauss(min(self.m, 180))
                center, scale = 0.5 * (lo + hi), (hi - lo) / 20.0
                x = center + np.sqrt(2.0) * scale * t
                # weights for plain dz integration: w_i e^{t_i^2} sqrt(2) scale
                w = wh * np.exp(t ** 2) * np.sqrt(2.0) * scale
            axes.append(x)
            w1.append(w)
        if self.dim == 1:
            return axes[0][:, None], w1[0]
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.stack([g0.ravel(), g1.ravel()], axis=1)
        weights = np.outer(w1[0], w1[1]).ravel()
        return nodes, weights


def auto_grid(model: Model, m: int = 2048, rule: str = "trapezoid",
              pad_sigmas: float = 10.0, pilot_range: tuple[float, float] = (-25.0, 25.0),
              pilot_m: int = 512) -> QuadratureGrid:
    """Grid centered on the posterior: a coarse pilot pass estimates the
    posterior mean and standard deviation, then the final range is
    mean +- pad_sigmas * std per dimension."""
    if model.dim > 2:
        raise NotImplementedError("quadrature supports dimension <= 2 only")
    pilot = QuadratureGrid(lo=(pilot_range[0],) * model.dim,
                           hi=(pilot_range[1],) * model.dim,
                           m=pilot_m if model.dim == 1 else min(pilot_m, 256))
    mean, var = posterior_moments(model, pilot)
    std = np.sqrt(var)
    return QuadratureGrid(lo=tuple(mean - pad_sigmas * std),
                          hi=tuple(mean + pad_sigmas * std),
                          m=m, rule=rule)


def grid_for_params(model: Model, params: VariationalParams, m: int = 2048,
                    pad_sigmas: float = 10.0) -> QuadratureGrid:
    """Grid covering both the posterior and the variational distribution.

    Expectations under q need q's mass covered even when q sits far from
    the posterior, so the range is the union of the two +-pad regions.
    """
    base = auto_grid(model, m=m, pad_sigmas=pad_sigmas,
                     pilot_m=512 if model.dim == 1 else 256)
    q_lo = params.mu - pad_sigmas * params.sigma
    q_hi = params.mu + pad_sigmas * params.sigma
    return replace(base, lo=tuple(np.minimum(base.lo, q_lo)),
                   hi=tuple(np.maximum(base.hi, q_hi)))


# ---------------------------------------------------------------------------
# Integrals
# ---------------------------------------------------------------------------

def marginal_likelihood(model: Model, grid: QuadratureGrid) -> float:
    """p(x) = integral of exp(log_joint) over the grid."""
    if model.dim != grid.dim:
        raise ValueError("grid dimension does not match the model")
    nodes, w = grid.nodes_weights()
    lj = model.log_joint_batch(nodes)
    peak = lj.max()
    return float(np.exp(peak) * np.sum(w * np.exp(lj - peak)))


def marginal_likelihood_refinement(model: Model, grid: QuadratureGrid):
    """(value at 2M nodes, |value(M) - value(2M)|) as a self-reported error."""
    coarse = marginal_likelihood(model, grid)
    fine = marginal_likelihood(model, replace(grid, m=2 * grid.m))
    return fine, abs(fine - coarse)


def posterior_moments(model: Model, grid: QuadratureGrid):
    """Posterior mean and marginal variances by normalized quadrature."""
    nodes, w = grid.nodes_weights()
    lj = model.log_joint_batch(nodes)
    peak = lj.max()
    p = w * np.exp(lj - peak)
    p /= p.sum()
    mean = p @ nodes
    var = p @ (nodes - mean) ** 2
    return mean, var


def _v_values(model: Model, params: VariationalParams, grid: QuadratureGrid):
    """Interaction energies V = log q - log p on the grid, with q-weights."""
    nodes, w = grid.nodes_weights()
    lq = log_q_batch(params, nodes)
    v = lq - model.log_joint_batch(nodes)
    qw = w * np.exp(lq)
    return v, qw


def exact_expectation_power(model: Model, params: VariationalParams, v0: float,
                            k: int, grid: QuadratureGrid | None = None) -> float:
    """E_{z~q}[(v0 - V(x,z))^k] by quadrature; k up to 21."""
    if k < 0 or k > 21:
        raise ValueError("power k must be in [0, 21]")
    if grid is None:
        grid = grid_for_params(model, params)
    v, qw = _v_values(model, params, grid)
    return float(qw @ (v0 - v) ** k)


def exact_elbo(model: Model, params: VariationalParams,
               grid: QuadratureGrid | None = None) -> float:
    """E_q[log p - log q], the first-order bound, by quadrature."""
    return exact_expectation_power(model, params, 0.0, 1, grid)


def exact_surrogate(model: Model, params: VariationalParams, v0: float, K: int,
                    grid: QuadratureGrid | None = None) -> float:
    """sum_{k<=K} E[(v0 - V)^k]/k! by quadrature (the rescaled bound)."""
    if grid is None:
        grid = grid_for_params(model, params)
    v, qw = _v_values(model, params, grid)
    u = v0 - v
    total = np.zeros_like(u)
    term = np.ones_like(u)
    for k in range(K + 1):
        total += term
        term *= u / (k + 1)
    return float(qw @ total)


def exact_perturbative_bound(model: Model, params: VariationalParams, v0: float,
                             K: int, grid: QuadratureGrid | None = None) -> float:
    """L^(K)(lambda, v0) = exp(-v0) * surrogate, by quadrature."""
    return float(np.exp(-v0) * exact_surrogate(model, params, v0, K, grid))


def exact_alpha_bound(model: Model, params: VariationalParams, alpha: float,
                      grid: QuadratureGrid | None = None) -> float:
    """E_q[exp(-(1-alpha) V)] by quadrature, computed stably."""
    if grid is None:
        grid = grid_for_params(model, params)
    nodes, w = grid.nodes_weights()
    lq = log_q_batch(params, nodes)
    lj = model.log_joint_batch(nodes)
    g = lq + (1.0 - alpha) * (lj - lq)
    peak = g.max()
    return float(np.exp(peak) * np.sum(w * np.exp(g - peak)))


def exact_v0_star(model: Model, params: VariationalParams, K: int,
                  grid: QuadratureGrid | None = None) -> float:
    """The bound-maximizing reference energy at fixed params.

    Solves E[(v0 - V)^K] = 0, which for odd K is monotone in v0 and is the
    stationarity condition of L^(K) in the reference energy.
    """
    if grid is None:
        grid = grid_for_params(model, params)
    v, qw = _v_values(model, params, grid)

    def g(v0):
        return float(qw @ (v0 - v) ** K)

    ev = float(qw @ v)
    half = 1.0 + 10.0 * float(np.sqrt(max(qw @ (v - ev) ** 2, 0.0)))
    lo, hi = ev - half, ev + half
    while g(lo) > 0:
        lo -= half
    while g(hi) < 0:
        hi += half
    return float(brentq(g, lo, hi, xtol=1e-13))


def interaction_moments(model: Model, params: VariationalParams, order: int,
                        grid: QuadratureGrid | None = None):
    """(E[V], [E[(V-EV)^2], ..., E[(V-EV)^order]]) by quadrature."""
    if grid is None:
        grid = grid_for_params(model, params)
    v, qw = _v_values(model, params, grid)
    ev = float(qw @ v)
    centered = v - ev
    central = [float(qw @ centered ** k) for k in range(2, order + 1)]
    return ev, central


def fd_gradient(objective, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences with per-coordinate step h_i = step*(1+|x_i|).

    The objective must be deterministic (quadrature-backed) for the result
    to be meaningful at small steps.
    """
    x = np.asarray(point, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (objective(xp) - objective(xm)) / (2.0 * h)
    return grad
