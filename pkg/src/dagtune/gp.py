"""Exact Gaussian-process regression nodes.

Zero-mean prior (targets are standardized upstream), Matern-5/2 or RBF
kernel with per-dimension length scales, scalar output scale, and Gaussian
observation noise. Hyperparameters maximize the log marginal likelihood by
projected gradient ascent with backtracking line search from multiple
restarts; the heavy per-iteration pieces (kernel matrix, gradient trace
sums) run on the selected compute backend.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import _accel

KERNELS = {"matern52": _accel.KIND_MATERN52, "rbf": _accel.KIND_RBF}

NOISE_FLOOR = 1e-6
JITTER_MAX = 1e-2
LS_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (NOISE_FLOOR, 1.0)
AMP2_BOUNDS = (1e-6, 1e3)
MAX_ITER = 200
N_RESTARTS = 3
GRAD_TOL = 1e-5

LOG2PI = np.log(2.0 * np.pi)


class GpFitError(RuntimeError):
    pass


def _chol_with_jitter(k: np.ndarray):
    """Cholesky of k, escalating an added jitter from the floor to 1e-2."""
    jitter = 0.0
    while True:
        try:
            shifted = k if jitter == 0.0 else k + jitter * np.eye(k.shape[0])
            return cho_factor(shifted, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter = NOISE_FLOOR if jitter == 0.0 else jitter * 2.0
            if jitter > JITTER_MAX:
                cond = float(np.linalg.cond(k))
                raise GpFitError(
                    f"covariance not positive definite even with jitter {JITTER_MAX}"
                    f" (condition number {cond:.3e})"
                ) from None


def _log_marginal_and_grad(theta, d2, y, kind):
    """Log marginal likelihood and its gradient in log-hyperparameter space.

    theta = (log amp2, log ls_1..log ls_p, log noise).
    """
    n = y.shape[0]
    p = d2.shape[0]
    amp2 = np.exp(theta[0])
    ls = np.exp(theta[1 : 1 + p])
    noise = np.exp(theta[-1])
    k_nl = _accel.kernel_from_sqdiff(d2, ls, amp2, kind)
    k = k_nl + noise * np.eye(n)
    (c, lower), _ = _chol_with_jitter(k)
    alpha = cho_solve((c, lower), y)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    lml = -0.5 * float(y @ alpha) - 0.5 * logdet - 0.5 * n * LOG2PI

    kinv = cho_solve((c, lower), np.eye(n))
    w = np.outer(alpha, alpha) - kinv
    g_amp_sum, g_ls_sums = _accel.kernel_grad_sums(d2, ls, amp2, w, kind)
    grad = np.empty_like(theta)
    grad[0] = 0.5 * g_amp_sum
    grad[1 : 1 + p] = 0.5 * g_ls_sums
    grad[-1] = 0.5 * noise * float(np.trace(w))
    return lml, grad


def _bounds_arrays(p):
    lo = np.concatenate(
        [[np.log(AMP2_BOUNDS[0])], np.full(p, np.log(LS_BOUNDS[0])), [np.log(NOISE_BOUNDS[0])]]
    )
    hi = np.concatenate(
        [[np.log(AMP2_BOUNDS[1])], np.full(p, np.log(LS_BOUNDS[1])), [np.log(NOISE_BOUNDS[1])]]
    )
    return lo, hi


def _ascend(theta0, d2, y, kind, lo, hi):
    """Projected gradient ascent with backtracking line search."""
    theta = np.clip(theta0, lo, hi)
    f, g = _log_marginal_and_grad(theta, d2, y, kind)
    step = 0.1
    for _ in range(MAX_ITER):
        if np.max(np.abs(g)) < GRAD_TOL:
            break
        moved = False
        while step > 1e-12:
            cand = np.clip(theta + step * g, lo, hi)
            try:
                f_new, g_new = _log_marginal_and_grad(cand, d2, y, kind)
            except GpFitError:
                f_new = -np.inf
                g_new = g
            if f_new > f:
                if f_new - f < 1e-10 * max(1.0, abs(f)):
                    # converged: improvement below resolution
                    return cand, f_new
                theta, f, g = cand, f_new, g_new
                step = min(step * 1.3, 10.0)
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return theta, f


class GpNode:
    """GP regression node; implements the NodeModel contract.

    Parameters
    ----------
    kernel : {"matern52", "rbf"}
        Covariance family; per-node override hook for users with prior
        knowledge of the response surface.
    seed : int
        Seed for the random hyperparameter restarts, fixed at build time
        so refits are reproducible.
    """

    def __init__(self, kernel: str = "matern52", seed: int = 0):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}")
        self.kernel = kernel
        self.seed = seed
        self.amp2 = 1.0
        self.length_scales: np.ndarray | None = None
        self.noise = 1e-2
        self.x_train: np.ndarray | None = None
        self.y_train: np.ndarray | None = None
        self._chol = None
        self._alpha = None
        self._jitter = 0.0
        self.log_marginal: float = np.nan

    @property
    def trained(self) -> bool:
        return self._chol is not None

    def hyperparameters(self) -> np.ndarray:
        assert self.length_scales is not None
        return np.concatenate([[self.amp2], self.length_scales, [self.noise]])

    def fit(self, inputs: np.ndarray, targets: np.ndarray, seed: int | None = None) -> "GpNode":
        """Maximize the log marginal likelihood over restarts, then cache
        the Cholesky factor of the optimal covariance."""
        x = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(targets, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("need a 2-D input matrix with at least 2 rows")
        if y.shape != (x.shape[0],):
            raise ValueError("targets must be a vector matching the input rows")
        n, p = x.shape
        kind = KERNELS[self.kernel]
        d2 = _accel.pairwise_sqdiff(x)
        lo, hi = _bounds_arrays(p)
        rng = np.random.default_rng(self.seed if seed is None else seed)

        starts = [np.concatenate([[0.0], np.zeros(p), [np.log(1e-2)]])]
        for _ in range(N_RESTARTS - 1):
            starts.append(
                np.concatenate(
                    [
                        [rng.uniform(np.log(0.1), np.log(10.0))],
                        rng.uniform(np.log(0.1), np.log(10.0), size=p),
                        [rng.uniform(np.log(1e-4), np.log(0.1))],
                    ]
                )
            )

        best_theta, best_f = None, -np.inf
        for theta0 in starts:
            theta, f = _ascend(theta0, d2, y, kind, lo, hi)
            if f > best_f:
                best_theta, best_f = theta, f
        if best_theta is None or not np.isfinite(best_f):
            raise GpFitError("no restart produced a finite marginal likelihood")

        self.amp2 = float(np.exp(best_theta[0]))
        self.length_scales = np.exp(best_theta[1 : 1 + p])
        self.noise = float(np.exp(best_theta[-1]))
        self.log_marginal = float(best_f)
        self.x_train = x
        self.y_train = y
        k = _accel.kernel_from_sqdiff(d2, self.length_scales, self.amp2, kind) + (
            self.noise * np.eye(n)
        )
        (c, lower), self._jitter = _chol_with_jitter(k)
        self._chol = (c, lower)
        self._alpha = cho_solve((c, lower), y)
        return self

    def predict(self, xs: np.ndarray, include_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at ``xs``.

        By default the variance is that of the latent function; pass
        ``include_noise=True`` for the variance of a new noisy observation.
        """
        if not self.trained:
            raise RuntimeError("predict() before fit()")
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        kind = KERNELS[self.kernel]
        k_star = _accel.cross_kernel(self.x_train, xs, self.length_scales, self.amp2, kind)
        mean = k_star.T @ self._alpha
        c, lower = self._chol
        v = solve_triangular(c, k_star, lower=lower)
        var = self.amp2 - np.sum(v * v, axis=0)
        if include_noise:
            var = var + self.noise + self._jitter
        return mean, np.maximum(var, 0.0)

    def sample(self, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw from the marginal latent posterior, one draw per parent sample.

        ``parents`` has shape (s, q, p); the result is (s, q). Draws carry
        the model's epistemic uncertainty but not the observation noise
        (the acquisition wants the system's underlying response, not a
        noisy re-measurement). When all s slices coincide (deterministic
        parents) the posterior is computed once per q and only the draws
        differ, which consumes the rng identically to the general path.
        """
        parents = np.asarray(parents, dtype=np.float64)
        s, q, p = parents.shape
        if s > 1 and np.array_equal(
            np.broadcast_to(parents[0], parents.shape), parents
        ):
            mean, var = self.predict(parents[0])
        else:
            mean, var = self.predict(parents.reshape(s * q, p))
            mean = mean.reshape(s, q)
            var = var.reshape(s, q)
        z = rng.standard_normal((s, q))
        return mean + np.sqrt(var) * z
