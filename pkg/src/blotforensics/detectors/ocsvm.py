"""One-class SVM with an RBF kernel, solved by sequential minimal optimization.

The dual is

    min_a  1/2 a' K a   s.t.  0 <= a_i <= 1/(nu n),  sum_i a_i = 1

and the decision function is ``f(x) = sum_i a_i K(x_i, x) - rho``.  This is
libsvm's formulation divided by ``nu n``, so scores differ from libsvm's by
that positive factor only.
"""
from __future__ import annotations

import logging
from collections import OrderedDict

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

logger = logging.getLogger(__name__)

TAU = 1e-12
_FULL_GRAM_LIMIT = 4096
_QUERY_CHUNK = 1024


class ConvergenceError(RuntimeError):
    pass


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise ||a - b||^2 via explicit differences.

    Accumulated one coordinate at a time so that each entry is computed the
    same way whatever the batch shape; this keeps batch and single-row
    scoring bit-identical.
    """
    out = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j, None] - B[None, :, j]
        out += diff * diff
    return out


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(A, B))


class _KernelRows:
    """Kernel rows on demand; the whole Gram matrix when it is small enough."""

    def __init__(self, X: np.ndarray, gamma: float, cache_rows: int = 2048):
        self.X = X
        self.gamma = gamma
        self.full = rbf_kernel(X, X, gamma) if len(X) <= _FULL_GRAM_LIMIT else None
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.cache_rows = cache_rows

    def __getitem__(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        row = self.cache.get(i)
        if row is None:
            row = rbf_kernel(self.X[i:i + 1], self.X, self.gamma)[0]
            self.cache[i] = row
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return row


def solve_dual(kernel: _KernelRows, n: int, nu: float, tol: float, max_iter: int):
    """SMO with second-order working-set selection.

    Returns (alpha, rho, gap, n_iter).  ``gap`` is the maximal KKT violation
    ``max_{a_j > 0} G_j - min_{a_i < C} G_i`` with ``G = K a``.
    """
    C = 1.0 / (nu * n)
    alpha = np.zeros(n)
    n_full = min(int(np.floor(nu * n)), n)
    alpha[:n_full] = C
    if n_full < n:
        alpha[n_full] = 1.0 - n_full * C
    alpha = np.clip(alpha, 0.0, C)

    G = np.zeros(n)
    for i in np.flatnonzero(alpha):
        G += alpha[i] * kernel[i]

    it = 0
    gap = np.inf
    while True:
        up = alpha < C
        low = alpha > 0
        if not up.any() or not low.any():
            gap = 0.0
            break
        G_up = np.where(up, G, np.inf)
        i = int(np.argmin(G_up))
        g_min = G_up[i]
        G_low = np.where(low, G, -np.inf)
        gap = float(G_low.max() - g_min)
        if gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"one-class SVM did not reach KKT gap {tol:g} in {max_iter} iterations "
                f"(gap {gap:.3g})")
        Ki = kernel[i]
        b = G_low - g_min
        cand = low & (b > 0)
        a = 1.0 + 1.0 - 2.0 * Ki  # K_ii = K_jj = 1 for RBF
        a = np.where(a > 0, a, TAU)
        gain = np.where(cand, b * b / a, -np.inf)
        j = int(np.argmax(gain))
        Kj = kernel[j]

        delta = (G[j] - G[i]) / a[j]
        delta = min(delta, C - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        if alpha[i] > C - 1e-15 * C:
            alpha[i] = C
        if alpha[j] < 1e-15 * C:
            alpha[j] = 0.0
        G += delta * (Ki - Kj)
        it += 1

    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.mean(G[free]))
    else:
        ub = G[alpha >= C].max() if (alpha >= C).any() else -np.inf
        lb = G[alpha <= 0].min() if (alpha <= 0).any() else np.inf
        if np.isfinite(ub) and np.isfinite(lb):
            rho = 0.5 * (ub + lb)
        else:
            rho = float(ub if np.isfinite(ub) else lb)
    return alpha, rho, gap, it


class OneClassSVMDetector(OutlierMixin, BaseEstimator):
    """RBF one-class SVM; positive decision values mark inliers.

    Parameters
    ----------
    nu : float, default=0.5
        Upper bound on the training-outlier fraction, in (0, 1].
    gamma : 'scale' or float, default='scale'
        'scale' uses ``1 / (k * Var(X))`` over all (standardized) entries.
    standardize : bool, default=True
        z-score features with training mean/std before the kernel.
    tol : float, default=1e-4
        KKT gap at which the solver stops.
    max_iter : int or None
        Iteration cap; None means ``max(1_000_000, 100 n)``.
    """

    def __init__(self, nu=0.5, gamma="scale", standardize=True, tol=1e-4, max_iter=None):
        self.nu = nu
        self.gamma = gamma
        self.standardize = standardize
        self.tol = tol
        self.max_iter = max_iter

    def _scale(self, X):
        if self.standardize:
            return (X - self.mean_) / self.scale_
        return X

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        n, k = X.shape
        if n < 2:
            raise ValueError("one-class SVM needs at least 2 training rows")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            std = X.std(axis=0)
            self.scale_ = np.where(std > 0, std, 1.0)
        else:
            self.mean_ = np.zeros(k)
            self.scale_ = np.ones(k)
        Z = self._scale(X)
        if self.gamma == "scale":
            var = Z.var()
            gamma = 1.0 / (k * var) if var > 0 else 1.0
        else:
            gamma = float(self.gamma)
            if gamma <= 0:
                raise ValueError("gamma must be positive")
        max_iter = self.max_iter if self.max_iter is not None else max(1_000_000, 100 * n)
        alpha, rho, gap, n_iter = solve_dual(_KernelRows(Z, gamma), n, self.nu, self.tol, max_iter)
        if gap > self.tol:
            raise ConvergenceError(f"KKT residual {gap:.3g} exceeds tolerance {self.tol:g}")
        support = np.flatnonzero(alpha > 0)
        self.gamma_ = gamma
        self.support_ = support
        self.support_vectors_ = Z[support].copy()
        self.dual_coef_ = alpha[support].copy()
        self.rho_ = rho
        self.kkt_residual_ = gap
        self.n_iter_ = n_iter
        self.n_features_in_ = k
        self.n_train_ = n
        return self

    def _check_query(self, X):
        check_is_fitted(self, "dual_coef_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def score_samples(self, X) -> np.ndarray:
        """Kernel expansion ``sum_i a_i K(sv_i, x)``, without the offset."""
        Z = self._scale(self._check_query(X))
        out = np.empty(len(Z))
        for start in range(0, len(Z), _QUERY_CHUNK):
            K = rbf_kernel(Z[start:start + _QUERY_CHUNK], self.support_vectors_, self.gamma_)
            # row-wise reduction, independent of how many rows are in the batch
            out[start:start + _QUERY_CHUNK] = np.sum(K * self.dual_coef_, axis=1)
        return out

    def decision_function(self, X) -> np.ndarray:
        return self.score_samples(X) - self.rho_

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1)


def fit_ocsvm(X, nu=0.5, gamma="scale", standardize=True) -> OneClassSVMDetector:
    return OneClassSVMDetector(nu=nu, gamma=gamma, standardize=standardize).fit(X)


def score_ocsvm(model: OneClassSVMDetector, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(model.decision_function(x[None, :])[0])
    return model.decision_function(x)
