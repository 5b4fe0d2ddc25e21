"""Target models: log joint densities log p(x, z) and their z-gradients.

Every concrete model is exposed through the :class:`Model` contract, which
the estimators and the optimizer consume: a latent dimension, the log joint
with the data bound at construction, and its gradient in z.  Gradients are
hand-derived per model (each has a short closed form) and are guarded by
finite-difference tests.

Models provided:

* conjugate Gaussian (known evidence and posterior; the validation model),
* 1-D bimodal Gaussian mixture (the mass-covering toy),
* GP regression with a Matern-3/2 kernel (analytic posterior available),
* GP classification with Bernoulli/sigmoid likelihood (non-conjugate).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.spatial.distance import cdist

__all__ = [
    "NumericalError",
    "Model",
    "KernelConfig",
    "matern32_kernel",
    "cholesky_with_jitter",
    "ConjugateGaussian",
    "conjugate_gaussian_model",
    "product_model",
    "BimodalTarget",
    "bimodal_log_density",
    "bimodal_grad_log_density",
    "bimodal_model",
    "GPRegressionModel",
    "gp_regression_log_joint",
    "gp_regression_grad_log_joint",
    "gp_regression_analytic_posterior",
    "GPClassificationModel",
    "gp_classification_log_joint",
    "gp_classification_grad_log_joint",
    "predict_latent_mean",
]

_LOG2PI = np.log(2.0 * np.pi)


class NumericalError(RuntimeError):
    """Raised when a numerical routine (e.g. Cholesky repair) fails."""


@dataclass(frozen=True)
class Model:
    """Target-density contract.

    ``log_joint_batch`` maps a batch of latents (S, N) to log p(x, z) values
    (S,); ``grad_log_joint_batch`` maps (S, N) to per-sample gradients (S, N).
    Scalar convenience wrappers are provided.  Instances are immutable and
    the callables are pure, so models are safe to share across threads.
    """

    dim: int
    log_joint_batch: Callable[[np.ndarray], np.ndarray]
    grad_log_joint_batch: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def log_joint(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"z has shape {z.shape}, expected ({self.dim},)")
        return float(self.log_joint_batch(z[None, :])[0])

    def grad_log_joint(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"z has shape {z.shape}, expected ({self.dim},)")
        return self.grad_log_joint_batch(z[None, :])[0]


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    """Matern-3/2 hyperparameters: signal scale s and length scale l."""

    s: float = 1.0
    l: float = 1.0

    def __post_init__(self):
        if not (self.s > 0 and self.l > 0):
            raise ValueError("kernel scales must be positive")


def matern32_kernel(points: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Matern-3/2 Gram matrix.

    K_ij = s^2 (1 + sqrt(3) r_ij / l) exp(-sqrt(3) r_ij / l) with
    r_ij = ||x_i - x_j||_2.  The result is exactly symmetric and has s^2 on
    the diagonal.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not np.all(np.isfinite(pts)):
        raise ValueError("kernel input points must be finite")
    r = cdist(pts, pts)
    a = np.sqrt(3.0) * r / cfg.l
    gram = cfg.s ** 2 * (1.0 + a) * np.exp(-a)
    return 0.5 * (gram + gram.T)


def cholesky_with_jitter(mat: np.ndarray):
    """Lower Cholesky factor, adding diagonal jitter if needed.

    Jitter starts at 1e-10 * mean(diag) and grows tenfold up to
    1e-4 * mean(diag); beyond that the matrix is declared numerically
    indefinite.  Returns (cho_factor result, jitter used).
    """
    scale = float(np.mean(np.diag(mat)))
    jitter = 0.0
    for attempt in range(-10, -3):
        try:
            cf = cho_factor(mat + jitter * np.eye(mat.shape[0]), lower=True)
            return cf, jitter
        except np.linalg.LinAlgError:
            pass
        except ValueError as exc:  # non-finite entries
            raise NumericalError(f"Cholesky input invalid: {exc}") from exc
        jitter = 10.0 ** attempt * scale
    raise NumericalError(
        f"Cholesky failed with jitter up to {1e-4 * scale:.3e} (matrix size {mat.shape[0]})")


# ---------------------------------------------------------------------------
# Conjugate Gaussian (known evidence)
# ---------------------------------------------------------------------------

def _gauss_logpdf(x, mean, var):
    return -0.5 * (_LOG2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)


@dataclass(frozen=True)
class ConjugateGaussian:
    """z ~ N(0, prior_var), x_obs ~ N(z, noise_var): everything closed form."""

    prior_var: float
    noise_var: float
    x_obs: float

    def __post_init__(self):
        if not (self.prior_var > 0 and self.noise_var > 0):
            raise ValueError("variances must be positive")

    @property
    def posterior_var(self) -> float:
        return 1.0 / (1.0 / self.prior_var + 1.0 / self.noise_var)

    @property
    def posterior_mean(self) -> float:
        return self.x_obs * self.prior_var / (self.prior_var + self.noise_var)

    @property
    def log_evidence(self) -> float:
        return float(_gauss_logpdf(self.x_obs, 0.0, self.prior_var + self.noise_var))

    @property
    def evidence(self) -> float:
        return float(np.exp(self.log_evidence))

    def build(self) -> Model:
        pv, nv, x = self.prior_var, self.noise_var, self.x_obs

        def lj(Z):
            z = Z[:, 0]
            return _gauss_logpdf(z, 0.0, pv) + _gauss_logpdf(x, z, nv)

        def glj(Z):
            z = Z[:, 0]
            return (-z / pv + (x - z) / nv)[:, None]

        return Model(1, lj, glj, name="conjugate_gaussian")


def conjugate_gaussian_model(prior_var: float, noise_var: float, x_obs: float) -> ConjugateGaussian:
    """Conjugate Gaussian validation model with exact p(x) and posterior."""
    return ConjugateGaussian(prior_var, noise_var, x_obs)


def product_model(models: list[Model], name: str = "product") -> Model:
    """Independent product of models: latents concatenate, log joints add."""
    dims = [m.dim for m in models]
    offsets = np.concatenate([[0], np.cumsum(dims)])
    total = int(offsets[-1])

    def lj(Z):
        out = np.zeros(Z.shape[0])
        for m, a, b in zip(models, offsets[:-1], offsets[1:]):
            out += m.log_joint_batch(Z[:, a:b])
        return out

    def glj(Z):
        out = np.empty_like(Z)
        for m, a, b in zip(models, offsets[:-1], offsets[1:]):
            out[:, a:b] = m.grad_log_joint_batch(Z[:, a:b])
        return out

    return Model(total, lj, glj, name=name)


# ---------------------------------------------------------------------------
# 1-D bimodal mixture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BimodalTarget:
    """Two-component Gaussian mixture on the line.

    The density integrates to one, so for this target log p(x, z) is a
    normalized log density and the evidence is exactly 1.
    """

    centers: tuple[float, float] = (-2.0, 2.0)
    component_std: float = 0.75
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if not self.centers[0] < self.centers[1]:
            raise ValueError("centers must satisfy c1 < c2")
        if self.component_std <= 0:
            raise ValueError("component_std must be positive")
        if min(self.weights) <= 0 or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    def _log_components(self, z):
        c = np.asarray(self.centers)
        lw = np.log(np.asarray(self.weights))
        s = self.component_std
        return lw - 0.5 * _LOG2PI - np.log(s) - (z[:, None] - c) ** 2 / (2.0 * s ** 2)

    def build(self) -> Model:
        def lj(Z):
            comp = self._log_components(Z[:, 0])
            m = comp.max(axis=1)
            return m + np.log(np.exp(comp - m[:, None]).sum(axis=1))

        def glj(Z):
            z = Z[:, 0]
            comp = self._log_components(z)
            m = comp.max(axis=1)
            resp = np.exp(comp - m[:, None])
            resp /= resp.sum(axis=1, keepdims=True)
            c = np.asarray(self.centers)
            grad = (resp * (-(z[:, None] - c) / self.component_std ** 2)).sum(axis=1)
            return grad[:, None]

        return Model(1, lj, glj, name="bimodal")


def bimodal_log_density(target: BimodalTarget, z: float) -> float:
    """Log of the mixture density at a scalar z."""
    return target.build().log_joint(np.array([float(z)]))


def bimodal_grad_log_density(target: BimodalTarget, z: float) -> float:
    """d/dz log density, via mixture responsibilities."""
    return float(target.build().grad_log_joint(np.array([float(z)]))[0])


def bimodal_model(target: BimodalTarget) -> Model:
    return target.build()


# ---------------------------------------------------------------------------
# GP regression
# ---------------------------------------------------------------------------

class GPRegressionModel:
    """GP regression: f ~ GP(0, K), y_i ~ N(f_i, noise_std^2).

    The latent vector is f at the training inputs.  ``noise_std`` is the
    standard deviation of the observation noise.  The Gram matrix is
    factorized once at construction (with jitter repair if needed).
    """

    def __init__(self, inputs: np.ndarray, observations: np.ndarray,
                 kernel: KernelConfig = KernelConfig(), noise_std: float = 0.2):
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        observations = np.asarray(observations, dtype=float)
        if noise_std <= 0:
            raise ValueError("noise_std must be positive")
        if inputs.shape[0] != observations.shape[0]:
            raise ValueError("inputs and observations must have equal length")
        self.inputs = inputs
        self.y = observations
        self.kernel = kernel
        self.noise_std = float(noise_std)
        self.gram = matern32_kernel(inputs, kernel)
        self._cf, self.jitter = cholesky_with_jitter(self.gram)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._cf[0]))))

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    def prior_solve(self, B: np.ndarray) -> np.ndarray:
        """K^{-1} B via the cached factorization."""
        return cho_solve(self._cf, B)

    def prior_precision_diag(self) -> np.ndarray:
        """diag(K^{-1}); used for mean-field-scale initializations."""
        return np.diag(self.prior_solve(np.eye(self.dim)))

    def meanfield_sigma(self) -> np.ndarray:
        """Per-coordinate scale 1/sqrt(diag(K^{-1}) + 1/noise^2).

        This is the standard deviation the fully factorized KL optimum
        would have if the posterior were coordinate-wise independent; it is
        the natural starting scale for SGD on this model.
        """
        return 1.0 / np.sqrt(self.prior_precision_diag() + self.noise_std ** -2)

    def build(self) -> Model:
        n, y, eps = self.dim, self.y, self.noise_std

        def lj(F):
            kin = cho_solve(self._cf, F.T).T
            prior = -0.5 * np.sum(F * kin, axis=1) - 0.5 * (self._logdet + n * _LOG2PI)
            lik = np.sum(_gauss_logpdf(y, F, eps ** 2), axis=1)
            return prior + lik

        def glj(F):
            return -cho_solve(self._cf, F.T).T + (y - F) / eps ** 2

        return Model(n, lj, glj, name="gp_regression")


def gp_regression_log_joint(model: GPRegressionModel, f: np.ndarray) -> float:
    """log N(f; 0, K) + sum_i log N(y_i; f_i, noise^2)."""
    return model.build().log_joint(f)


def gp_regression_grad_log_joint(model: GPRegressionModel, f: np.ndarray) -> np.ndarray:
    """-K^{-1} f + (y - f)/noise^2."""
    return model.build().grad_log_joint(f)


def gp_regression_analytic_posterior(model: GPRegressionModel):
    """Exact posterior of f: mean = K(K + eps^2 I)^{-1} y, cov = K - K(K + eps^2 I)^{-1} K."""
    K = model.gram
    B = K + model.noise_std ** 2 * np.eye(model.dim)
    cf, _ = cholesky_with_jitter(B)
    mean = K @ cho_solve(cf, model.y)
    cov = K - K @ cho_solve(cf, K)
    cov = 0.5 * (cov + cov.T)
    return mean, cov


# ---------------------------------------------------------------------------
# GP classification
# ---------------------------------------------------------------------------

class GPClassificationModel:
    """GP binary classification: f ~ GP(0, K), y_i ~ Bern(sigmoid(f_i)).

    The Bernoulli log likelihood is computed as y*f - softplus(f), which is
    the numerically stable form of y log sigma(f) + (1-y) log(1-sigma(f)).
    """

    def __init__(self, inputs: np.ndarray, labels: np.ndarray,
                 kernel: KernelConfig = KernelConfig()):
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        labels = np.asarray(labels, dtype=float)
        if not np.all(np.isin(labels, (0.0, 1.0))):
            raise ValueError("labels must be binary (0/1)")
        if inputs.shape[0] != labels.shape[0]:
            raise ValueError("inputs and labels must have equal length")
        self.inputs = inputs
        self.labels = labels
        self.kernel = kernel
        self.gram = matern32_kernel(inputs, kernel)
        self._cf, self.jitter = cholesky_with_jitter(self.gram)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._cf[0]))))

    @property
    def dim(self) -> int:
        return self.labels.shape[0]

    def prior_solve(self, B: np.ndarray) -> np.ndarray:
        return cho_solve(self._cf, B)

    def meanfield_sigma(self) -> np.ndarray:
        """1/sqrt(diag(K^{-1}) + 1/4); 1/4 bounds the sigmoid curvature."""
        prec = np.diag(self.prior_solve(np.eye(self.dim)))
        return 1.0 / np.sqrt(prec + 0.25)

    def build(self) -> Model:
        n, y = self.dim, self.labels

        def lj(F):
            kin = cho_solve(self._cf, F.T).T
            prior = -0.5 * np.sum(F * kin, axis=1) - 0.5 * (self._logdet + n * _LOG2PI)
            lik = np.sum(y * F - np.logaddexp(0.0, F), axis=1)
            return prior + lik

        def glj(F):
            sig = 1.0 / (1.0 + np.exp(-np.clip(F, -500, 500)))
            return -cho_solve(self._cf, F.T).T + (y - sig)

        return Model(n, lj, glj, name="gp_classification")


def gp_classification_log_joint(model: GPClassificationModel, f: np.ndarray) -> float:
    return model.build().log_joint(f)


def gp_classification_grad_log_joint(model: GPClassificationModel, f: np.ndarray) -> np.ndarray:
    return model.build().grad_log_joint(f)


def predict_latent_mean(model, latent_mean: np.ndarray, test_inputs: np.ndarray) -> np.ndarray:
    """GP-conditional mean of f at test inputs, given the fitted latent mean.

    Uses K(test, train) K(train, train)^{-1} m, the predictive mean of the
    prior conditional applied to the variational posterior mean.  Works for
    both GP model classes.
    """
    test_inputs = np.asarray(test_inputs, dtype=float)
    if test_inputs.ndim == 1:
        test_inputs = test_inputs[:, None]
    train = model.inputs
    pts = np.vstack([train, test_inputs])
    joint = matern32_kernel(pts, model.kernel)
    k_star = joint[: train.shape[0], train.shape[0]:]
    return k_star.T @ model.prior_solve(np.asarray(latent_mean, float))
