"""Gaussian-process regression on the unit box.

Squared-exponential kernel with one length scale per dimension, a signal
variance and a Gaussian observation-noise variance. Targets are standardized
internally; hyperparameters live in log space and are refit by maximizing the
log marginal likelihood (L-BFGS-B, multi-start).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

LOG_LENGTH_BOUNDS = (math.log(1e-2), math.log(1e1))
LOG_SIGNAL_BOUNDS = (math.log(1e-2), math.log(1e2))
LOG_NOISE_BOUNDS = (math.log(1e-8), math.log(1.0))


class HyperparameterError(np.linalg.LinAlgError):
    """Kernel matrix not positive definite even with the largest jitter."""


def se_kernel(a, b, lengthscales, signal_variance):
    a = np.atleast_2d(a) / lengthscales
    b = np.atleast_2d(b) / lengthscales
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return signal_variance * np.exp(-0.5 * np.maximum(d2, 0.0))


def _cholesky(K):
    n = K.shape[0]
    for jitter in JITTER_LADDER:
        try:
            return cholesky(K + jitter * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise HyperparameterError("kernel matrix ill-conditioned after maximum jitter")


class GaussianProcess:
    def __init__(self, dim, lengthscales=None, signal_variance=1.0, noise_variance=1e-4, fit_noise=True):
        self.dim = dim
        self.lengthscales = np.full(dim, 0.3) if lengthscales is None else np.asarray(lengthscales, float)
        self.signal_variance = float(signal_variance)
        self.noise_variance = float(noise_variance)
        self.fit_noise = fit_noise
        self.X = np.empty((0, dim))
        self.y = np.empty(0)
        self._y_mean = 0.0
        self._y_std = 1.0
        self._L = None
        self._alpha = None
        self.jitter = 0.0

    # data ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.y)

    def set_data(self, X, y):
        self.X = np.atleast_2d(np.asarray(X, float)).reshape(-1, self.dim)
        self.y = np.asarray(y, float).ravel()
        if self.n:
            self._y_mean = float(np.mean(self.y))
            std = float(np.std(self.y))
            self._y_std = std if std > 1e-12 else 1.0
        else:
            self._y_mean, self._y_std = 0.0, 1.0
        self._factor()
        return self

    def _z(self):
        return (self.y - self._y_mean) / self._y_std

    def _factor(self):
        if self.n == 0:
            self._L = self._alpha = None
            return
        K = se_kernel(self.X, self.X, self.lengthscales, self.signal_variance)
        K[np.diag_indices_from(K)] += self.noise_variance
        self._L, self.jitter = _cholesky(K)
        self._alpha = cho_solve((self._L, True), self._z())

    def copy(self) -> "GaussianProcess":
        gp = GaussianProcess(self.dim, self.lengthscales.copy(), self.signal_variance, self.noise_variance, self.fit_noise)
        return gp.set_data(self.X.copy(), self.y.copy())

    # prediction -----------------------------------------------------------

    def posterior(self, x):
        """Posterior mean and latent-function variance at points ``x`` (n, d)."""
        x = np.atleast_2d(np.asarray(x, float)).reshape(-1, self.dim)
        prior_var = np.full(len(x), self.signal_variance)
        if self.n == 0:
            return np.full(len(x), self._y_mean), prior_var * self._y_std**2
        ks = se_kernel(x, self.X, self.lengthscales, self.signal_variance)
        mean = ks @ self._alpha
        v = solve_triangular(self._L, ks.T, lower=True)
        var = np.maximum(prior_var - np.sum(v * v, 0), 0.0)
        return self._y_mean + self._y_std * mean, var * self._y_std**2

    def posterior_with_gradient(self, x):
        """Mean, variance and their gradients with respect to a single point ``x``."""
        x = np.asarray(x, float).reshape(self.dim)
        if self.n == 0:
            zero = np.zeros(self.dim)
            return self._y_mean, self.signal_variance * self._y_std**2, zero, zero
        ks = se_kernel(x[None, :], self.X, self.lengthscales, self.signal_variance)[0]
        dks = -ks[:, None] * (x[None, :] - self.X) / self.lengthscales**2  # (n, d)
        mean = ks @ self._alpha
        w = cho_solve((self._L, True), ks)
        var = self.signal_variance - ks @ w
        dmean = dks.T @ self._alpha
        dvar = -2.0 * dks.T @ w
        if var < 0.0:
            var, dvar = 0.0, np.zeros(self.dim)
        s2 = self._y_std**2
        return self._y_mean + self._y_std * mean, var * s2, self._y_std * dmean, dvar * s2

    # hyperparameters --------------------------------------------------------

    @property
    def theta(self) -> np.ndarray:
        t = list(np.log(self.lengthscales)) + [math.log(self.signal_variance)]
        if self.fit_noise:
            t.append(math.log(self.noise_variance))
        return np.array(t)

    def _unpack(self, theta):
        ls = np.exp(theta[: self.dim])
        sv = math.exp(theta[self.dim])
        nv = math.exp(theta[self.dim + 1]) if self.fit_noise else self.noise_variance
        return ls, sv, nv

    def theta_bounds(self):
        b = [LOG_LENGTH_BOUNDS] * self.dim + [LOG_SIGNAL_BOUNDS]
        if self.fit_noise:
            b.append(LOG_NOISE_BOUNDS)
        return b

    def log_marginal_likelihood(self, theta=None, gradient=False):
        """Log evidence of the standardized targets; optional gradient w.r.t. log-hyperparameters."""
        theta = self.theta if theta is None else np.asarray(theta, float)
        ls, sv, nv = self._unpack(theta)
        z = self._z()
        n = len(z)
        diff = (self.X[:, None, :] - self.X[None, :, :]) / ls
        Kf = sv * np.exp(-0.5 * np.sum(diff**2, -1))
        K = Kf + nv * np.eye(n)
        try:
            L, _ = _cholesky(K)
        except HyperparameterError:
            return (-np.inf, np.zeros_like(theta)) if gradient else -np.inf
        alpha = cho_solve((L, True), z)
        lml = -0.5 * z @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
        if not gradient:
            return lml
        inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
        grad = np.empty_like(theta)
        for i in range(self.dim):
            dK = Kf * diff[:, :, i] ** 2
            grad[i] = 0.5 * np.sum(inner * dK)
        grad[self.dim] = 0.5 * np.sum(inner * Kf)
        if self.fit_noise:
            grad[self.dim + 1] = 0.5 * nv * np.trace(inner)
        return lml, grad

    def set_theta(self, theta):
        self.lengthscales, self.signal_variance, self.noise_variance = self._unpack(np.asarray(theta, float))
        self._factor()

    def optimize(self, rng: np.random.Generator, restarts: int = 8):
        """Maximize the marginal likelihood from the current point plus random restarts."""
        if self.n < 2:
            return self.log_marginal_likelihood() if self.n else 0.0
        bounds = self.theta_bounds()
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        starts = [np.clip(self.theta, lo, hi)]
        starts += [rng.uniform(lo, hi) for _ in range(restarts - 1)]

        def objective(t):
            v, g = self.log_marginal_likelihood(t, gradient=True)
            if not np.isfinite(v):
                return 1e25, np.zeros_like(t)
            return -v, -g

        best_t, best_v = self.theta, self.log_marginal_likelihood()
        for t0 in starts:
            res = minimize(objective, t0, jac=True, method="L-BFGS-B", bounds=bounds)
            if np.isfinite(res.fun) and -res.fun > best_v:
                best_t, best_v = res.x, -res.fun
        self.set_theta(best_t)
        return best_v
