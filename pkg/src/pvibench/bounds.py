"""Objective functions: ELBO, perturbative bound family, and alpha bounds.

The central objects are the interaction energy

    V(x, z) = log q(z) - log p(x, z),

the concave functions f_{v0}^{(K)}(xi) = exp(-v0) sum_{k<=K} (v0 + log xi)^k / k!
(for odd K), and the resulting evidence lower bounds

    L^(K)(lambda, v0) = E_q[f_{v0}^{(K)}(p(x,z)/q(z))] <= p(x).

Optimization never touches L^(K) directly; it works with the surrogate
Ltilde = exp(v0) * L^(K), whose Monte Carlo estimates and gradients stay
O(1) regardless of the magnitude of the evidence.  The alpha bound
E_q[(p/q)^{1-alpha}] and the (non-bound) cumulant expansion diagnostic
complete the family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import oracle
from .models import Model
from .rng import NoiseSource
from .variational import VariationalParams, log_q, log_q_batch, reparameterize

__all__ = [
    "BoundSpec",
    "interaction_energy",
    "interaction_energies",
    "elbo_estimate",
    "f_perturbative",
    "surrogate_value",
    "PerturbativeValue",
    "perturbative_bound_value",
    "alpha_bound_value",
    "renyi_value",
    "cumulant_diagnostic",
    "Theorem1Report",
    "check_theorem1",
    "Theorem2Report",
    "check_theorem2_h",
    "optimal_v0",
]


@dataclass(frozen=True)
class BoundSpec:
    """Which objective to optimize.

    kind is one of "kl", "perturbative", "alpha".  K (odd, >= 1) and the
    initial reference energy v0 apply to the perturbative bound; alpha > 0,
    alpha != 1 applies to the alpha bound.  The spec is an immutable value;
    the running reference energy lives in the optimizer state.
    """

    kind: str
    K: int = 3
    v0: float = 0.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("kl", "perturbative", "alpha"):
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if self.kind == "perturbative":
            if self.K < 1 or self.K % 2 == 0:
                raise ValueError("perturbative order K must be an odd integer >= 1")
        if self.kind == "alpha":
            if not (self.alpha > 0) or self.alpha == 1.0:
                raise ValueError("alpha must be positive and != 1")

    @classmethod
    def kl(cls) -> "BoundSpec":
        return cls(kind="kl")

    @classmethod
    def perturbative(cls, K: int = 3, v0: float = 0.0) -> "BoundSpec":
        return cls(kind="perturbative", K=K, v0=v0)

    @classmethod
    def alpha_divergence(cls, alpha: float) -> "BoundSpec":
        return cls(kind="alpha", alpha=alpha)

    def label(self) -> str:
        if self.kind == "kl":
            return "klvi"
        if self.kind == "perturbative":
            return f"pbbvi_k{self.K}"
        return f"alpha_{self.alpha:g}"


# ---------------------------------------------------------------------------
# Interaction energy and ELBO
# ---------------------------------------------------------------------------

def interaction_energy(model: Model, params: VariationalParams, z: np.ndarray) -> float:
    """V(x, z) = log q(z) - log p(x, z) at a single z."""
    return log_q(params, np.asarray(z, float)) - model.log_joint(np.asarray(z, float))


def interaction_energies(model: Model, params: VariationalParams, Z: np.ndarray) -> np.ndarray:
    """V at a batch of points (S, N) -> (S,)."""
    Z = np.asarray(Z, dtype=float)
    return log_q_batch(params, Z) - model.log_joint_batch(Z)


def _draws_to_z(params: VariationalParams, draws: np.ndarray) -> np.ndarray:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] < 1:
        raise ValueError("need at least one draw")
    return reparameterize(params, draws)


def elbo_estimate(model: Model, params: VariationalParams, draws: np.ndarray) -> float:
    """Monte Carlo ELBO: mean of log p(x,z_s) - log q(z_s) over the draws.

    ``draws`` are standard-normal noise draws of shape (S, N), mapped through
    the reparameterization transform.  Unbiased for E_q[-V].
    """
    Z = _draws_to_z(params, draws)
    return float(np.mean(-interaction_energies(model, params, Z)))


# ---------------------------------------------------------------------------
# Perturbative family
# ---------------------------------------------------------------------------

def f_perturbative(xi, v0: float, K: int):
    """The concave function f_{v0}^{(K)}(xi) for xi > 0 and odd K.

    Terms are accumulated iteratively (term_{k+1} = term_k * u / (k+1)), so
    no explicit factorials or large powers appear.  Accumulation is done in
    extended precision where the platform provides it.
    """
    if K < 1 or K % 2 == 0:
        raise ValueError("K must be an odd integer >= 1")
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr <= 0):
        raise ValueError("f is defined for xi > 0 only")
    u = (v0 + np.log(xi_arr)).astype(np.longdouble)
    total = np.zeros_like(u)
    term = np.ones_like(u)
    for k in range(K + 1):
        total += term
        term = term * u / (k + 1)
    out = np.exp(np.longdouble(-v0)) * total
    out = np.asarray(out, dtype=float)
    return float(out) if np.isscalar(xi) else out


def _surrogate_terms(u: np.ndarray, K: int):
    """(sum_{k<=K} u^k/k!, sum_{k<=K-1} u^k/k!) accumulated iteratively."""
    u = u.astype(np.longdouble)
    total = np.zeros_like(u)
    term = np.ones_like(u)
    for k in range(K):
        total += term
        term = term * u / (k + 1)
    lower = total.copy()
    total += term
    return np.asarray(total, float), np.asarray(lower, float)


def surrogate_value(model: Model, params: VariationalParams, v0: float, K: int,
                    draws: np.ndarray) -> float:
    """Unbiased MC estimate of Ltilde^(K)(lambda, v0) = exp(v0) L^(K)."""
    if K < 1 or K % 2 == 0:
        raise ValueError("K must be an odd integer >= 1")
    Z = _draws_to_z(params, draws)
    u = v0 - interaction_energies(model, params, Z)
    total, _ = _surrogate_terms(u, K)
    return float(np.mean(total))


@dataclass(frozen=True)
class PerturbativeValue:
    """Bound value together with the pieces needed to stay in rescaled space.

    ``value`` is exp(-v0) * surrogate when that is representable; otherwise
    ``log_space`` is set and callers should use (sign, log_abs) instead.
    The surrogate and v0 are always reported so downstream code can work
    with the numerically safe rescaled objective.
    """

    value: float
    log_abs: float
    sign: float
    surrogate: float
    v0: float
    K: int
    log_space: bool


def perturbative_bound_value(model: Model, params: VariationalParams, v0: float,
                             K: int, draws: np.ndarray) -> PerturbativeValue:
    """Unbiased MC estimate of L^(K)(lambda, v0), overflow-guarded.

    For |v0| > 700 the exp(-v0) prefactor is not representable in float64,
    so the value is carried in log space with its sign and the record is
    flagged.
    """
    surr = surrogate_value(model, params, v0, K, draws)
    sign = float(np.sign(surr)) or 1.0
    log_abs = -v0 + (np.log(abs(surr)) if surr != 0 else -np.inf)
    log_space = abs(v0) > 700.0
    if log_space:
        value = sign * (np.inf if log_abs > 709 else np.exp(log_abs))
    else:
        value = float(np.exp(-v0) * surr)
    return PerturbativeValue(value=value, log_abs=float(log_abs), sign=sign,
                             surrogate=surr, v0=float(v0), K=int(K),
                             log_space=log_space)


# ---------------------------------------------------------------------------
# Alpha bound
# ---------------------------------------------------------------------------

def alpha_bound_value(model: Model, params: VariationalParams, alpha: float,
                      draws: np.ndarray) -> float:
    """Unbiased MC estimate of E_q[(p/q)^{1-alpha}], via log-sum-exp."""
    if not (alpha > 0) or alpha == 1.0:
        raise ValueError("alpha must be positive and != 1")
    Z = _draws_to_z(params, draws)
    a = -(1.0 - alpha) * interaction_energies(model, params, Z)
    peak = a.max()
    return float(np.exp(peak) * np.mean(np.exp(a - peak)))


def renyi_value(model: Model, params: VariationalParams, alpha: float,
                draws: np.ndarray) -> float:
    """log(alpha-bound estimate) / (1 - alpha), a log-evidence-scale summary.

    Consistent (not unbiased) for the Renyi evidence bound; used for trace
    reporting because it stays finite where the raw bound under/overflows.
    """
    Z = _draws_to_z(params, draws)
    a = (1.0 - alpha) * (-interaction_energies(model, params, Z))
    peak = a.max()
    log_mean = peak + np.log(np.mean(np.exp(a - peak)))
    return float(log_mean / (1.0 - alpha))


# ---------------------------------------------------------------------------
# Cumulant expansion diagnostic (quadrature only)
# ---------------------------------------------------------------------------

def cumulant_diagnostic(model: Model, params: VariationalParams, order: int,
                        grid=None) -> float:
    """Cumulant-expansion approximation of log p(x), truncated at `order`.

    order 2: -E[V] + (1/2) E[(V - EV)^2];
    order 3: additionally - (1/6) E[(V - EV)^3].

    Computed by quadrature only (dimension <= 2): the higher-order terms
    contain products of expectations that cannot be estimated from samples
    without bias.  This approximates the evidence but is NOT a lower bound.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    ev, central = oracle.interaction_moments(model, params, order, grid)
    out = -ev + 0.5 * central[0]
    if order == 3:
        out -= central[1] / 6.0
    return float(out)


# ---------------------------------------------------------------------------
# Theorem checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Theorem1Report:
    """Numerical check of concavity and the below-identity property of f."""

    K: int
    v0: float
    concave: bool
    max_second_derivative: float
    below_identity: bool
    max_identity_gap: float
    tangent_slope: float
    fd_max_rel_err: float


def _f_first_derivative(xi: np.ndarray, v0: float, K: int) -> np.ndarray:
    u = v0 + np.log(xi)
    total = np.zeros_like(u)
    term = np.ones_like(u)
    for k in range(K):
        total += term
        term = term * u / (k + 1)
    return np.exp(-v0) * total / xi


def _f_second_derivative(xi: np.ndarray, v0: float, K: int) -> np.ndarray:
    # closed form: all terms cancel except the highest order one
    u = v0 + np.log(xi)
    term = np.ones_like(u)
    for k in range(K - 1):
        term = term * u / (k + 1)
    return -np.exp(-v0) * term / xi ** 2


def check_theorem1(v0: float, K: int, grid: np.ndarray,
                   fd_check: bool = True) -> Theorem1Report:
    """Verify f'' <= 0 and f(xi) <= xi on the grid, and f'(e^{-v0}) = 1.

    Works for any integer K >= 1 so that even orders can be shown to break
    concavity (the second derivative changes sign).
    """
    xi = np.asarray(grid, dtype=float)
    if np.any(xi <= 0):
        raise ValueError("grid must be positive")
    if K % 2 == 1:
        fvals = f_perturbative(xi, v0, K)
    else:  # even K: rebuild the sum without the odd-K guard
        u = v0 + np.log(xi)
        total = np.zeros_like(u)
        term = np.ones_like(u)
        for k in range(K + 1):
            total += term
            term = term * u / (k + 1)
        fvals = np.exp(-v0) * total
    fpp = _f_second_derivative(xi, v0, K)
    gap = fvals - xi
    slope = float(_f_first_derivative(np.array([np.exp(-v0)]), v0, K)[0])

    fd_err = 0.0
    if fd_check:
        sub = xi[:: max(1, len(xi) // 32)]
        h = 1e-4 * sub
        fd = ((_f_first_derivative(sub + h, v0, K)
               - _f_first_derivative(sub - h, v0, K)) / (2 * h))
        denom = np.maximum(np.abs(fpp[:: max(1, len(xi) // 32)]), 1e-30)
        fd_err = float(np.max(np.abs(fd - fpp[:: max(1, len(xi) // 32)]) / denom))

    return Theorem1Report(
        K=K, v0=v0,
        concave=bool(np.all(fpp <= 1e-12)),
        max_second_derivative=float(fpp.max()),
        below_identity=bool(np.all(gap <= 1e-12)),
        max_identity_gap=float(gap.max()),
        tangent_slope=slope,
        fd_max_rel_err=fd_err,
    )


@dataclass(frozen=True)
class Theorem2Report:
    """Positivity of h(u) = sum_{k<=K-1} u^k/k! and its minimum identity."""

    K: int
    all_positive: bool
    min_value: float
    argmin: float
    identity_gap: float


def check_theorem2_h(K: int, grid: np.ndarray) -> Theorem2Report:
    """Check h > 0 on the grid and h(u~) = u~^{K-1}/(K-1)! at the minimum."""
    if K < 1 or K % 2 == 0:
        raise ValueError("K must be an odd integer >= 1")
    u = np.asarray(grid, dtype=float)

    def h(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        term = np.ones_like(x)
        for k in range(K):
            total += term
            term = term * x / (k + 1)
        return total

    vals = h(u)
    i = int(np.argmin(vals))
    if K == 1:
        argmin, hmin = float(u[i]), 1.0
    else:
        # refine the minimum: h' = sum_{k<=K-2} u^k/k! has a root there
        def hp(x):
            total, term = 0.0, 1.0
            for k in range(K - 1):
                total += term
                term = term * x / (k + 1)
            return total

        lo = u[max(0, i - 1)] - 1.0
        hi = u[min(len(u) - 1, i + 1)] + 1.0
        while hp(lo) > 0:
            lo -= 1.0
        while hp(hi) < 0:
            hi += 1.0
        argmin = float(brentq(hp, lo, hi, xtol=1e-13))
        hmin = float(h(np.array([argmin]))[0])
    identity = argmin ** (K - 1) / factorial(K - 1)
    return Theorem2Report(K=K,
                          all_positive=bool(np.all(vals > 0)),
                          min_value=hmin,
                          argmin=argmin,
                          identity_gap=abs(hmin - identity))


# ---------------------------------------------------------------------------
# Reference-energy optimization at fixed params
# ---------------------------------------------------------------------------

def optimal_v0(model: Model, params: VariationalParams, K: int,
               n_samples: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo estimate of argmax_{v0} L^(K)(lambda, v0).

    Solves the stationarity condition E[(v0 - V)^K] = 0 on a fresh batch of
    draws; the left side is monotone in v0 for odd K.  For K = 1 this is
    exactly -ELBO.
    """
    if K < 1 or K % 2 == 0:
        raise ValueError("K must be an odd integer >= 1")
    eps = NoiseSource(seed, stream=0x7E0).standard_normal((n_samples, params.dim))
    Z = reparameterize(params, eps)
    v = interaction_energies(model, params, Z)

    def g(v0):
        return float(np.mean((v0 - v) ** K))

    ev = float(np.mean(v))
    half = 1.0 + 10.0 * float(np.std(v))
    lo, hi = ev - half, ev + half
    while g(lo) > 0:
        lo -= half
    while g(hi) < 0:
        hi += half
    return float(brentq(g, lo, hi, xtol=1e-12))
