"""Spatial tools shared by the policies: RBF Gaussian-process regression,
Gaussian smoothing of score fields, softmax and weighted sampling without
replacement.

Cells are addressed by integer grid coordinates ``(x, y)``; a score field is
an array of shape ``(X, Y)``, and flat cell ids follow C order, i.e.
``id = x * Y + y``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_field, check_positive, check_rng


@dataclass(frozen=True)
class GPConfig:
    sigma_gp: float = 1.0
    noise_jitter: float = 1e-6

    def __post_init__(self):
        check_positive(self.sigma_gp, "sigma_gp")
        check_positive(self.noise_jitter, "noise_jitter", strict=False)


def grid_features(shape):
    """All cell coordinates of a ``(X, Y)`` grid as an ``(X*Y, 2)`` array, in flat-id order."""
    X, Y = shape
    xx, yy = np.meshgrid(np.arange(X), np.arange(Y), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()]).astype(float)


def rbf_kernel(a, b, sigma_gp):
    """``exp(-||a - b||^2 / (2 sigma^2))`` between rows of ``a`` and rows of ``b``.

    Scalars in, scalar out; 2-D arrays in, kernel matrix out.
    """
    sigma_gp = check_positive(sigma_gp, "sigma_gp")
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if a_arr.ndim == 1 and b_arr.ndim == 1:
        d2 = float(np.sum((a_arr - b_arr) ** 2))
        return math.exp(-d2 / (2.0 * sigma_gp**2))
    a2 = np.atleast_2d(a_arr)
    b2 = np.atleast_2d(b_arr)
    d2 = ((a2[:, None, :] - b2[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-d2 / (2.0 * sigma_gp**2))


def _collapse_duplicates(X, y, jitter):
    # m noisy repeats at one input carry the same information as their mean
    # observed once with noise jitter / m, so the solve stays small.
    uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros(uniq.shape[0])
    np.add.at(sums, inverse, y)
    return uniq, sums / counts, jitter / counts


class RBFGaussianProcess(RegressorMixin, BaseEstimator):
    """Zero-mean, unit-variance GP regressor with a fixed RBF kernel.

    ``noise_jitter`` is added to the kernel diagonal and plays the role of
    observation-noise variance.  Repeated inputs are allowed.
    """

    def __init__(self, sigma_gp=1.0, noise_jitter=1e-6):
        self.sigma_gp = sigma_gp
        self.noise_jitter = noise_jitter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        GPConfig(self.sigma_gp, self.noise_jitter)
        if self.noise_jitter > 0:
            X, y, noise = _collapse_duplicates(X, y, self.noise_jitter)
        else:
            noise = np.zeros(X.shape[0])
        K = rbf_kernel(X, X, self.sigma_gp) + np.diag(noise)
        try:
            self.cho_ = cho_factor(K, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"GP kernel matrix is singular: {exc}") from exc
        self.X_train_ = X
        self.alpha_ = cho_solve(self.cho_, y)
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "alpha_")
        X = check_array(X, dtype=float)
        Ks = rbf_kernel(X, self.X_train_, self.sigma_gp)
        mean = Ks @ self.alpha_
        if not return_std:
            return mean
        v = cho_solve(self.cho_, Ks.T)
        var = 1.0 - np.einsum("ij,ji->i", Ks, v)
        return mean, np.sqrt(np.clip(var, 0.0, None))


def gp_fit_predict(train_features, train_targets, queries, cfg=GPConfig()):
    """Posterior mean and standard deviation at ``queries``."""
    gp = RBFGaussianProcess(cfg.sigma_gp, cfg.noise_jitter).fit(train_features, train_targets)
    return gp.predict(queries, return_std=True)


def _reflect(idx, n):
    # Half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def gaussian_weights(sigma):
    """Normalised 1-D Gaussian stencil truncated at ``ceil(3 sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    with np.errstate(over="ignore"):
        w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return offsets, w / w.sum()


def _smoothing_matrix(n, sigma):
    offsets, w = gaussian_weights(sigma)
    M = np.zeros((n, n))
    rows = np.arange(n)
    for off, wk in zip(offsets, w):
        np.add.at(M, (rows, _reflect(rows + off, n)), wk)
    return M


def gaussian_filter(field, sigma_gp):
    """Smooth a ``(X, Y)`` score field with a truncated 2-D Gaussian.

    The stencil is cut at ``ceil(3 sigma)`` cells and normalised; the field is
    mirrored across its edges, which keeps both constant fields and field
    totals unchanged.  ``sigma_gp == 0`` returns an exact copy.
    """
    arr = check_field(field)
    sigma_gp = check_positive(sigma_gp, "sigma_gp", strict=False)
    if sigma_gp == 0.0:
        return arr.copy()
    Mx = _smoothing_matrix(arr.shape[0], sigma_gp)
    My = _smoothing_matrix(arr.shape[1], sigma_gp)
    return Mx @ arr @ My.T


def softmax_probs(scores, tau):
    """Softmax of ``scores / tau`` over every entry (any shape), overflow-safe."""
    tau = check_positive(tau, "tau")
    s = np.asarray(scores, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp((s - np.max(s)) / tau)
    return e / e.sum()


def sample_without_replacement(probs, n, random_state=None):
    """Draw ``n`` distinct flat indices by sequential weighted sampling.

    After each draw the chosen entry is removed and the rest renormalised, so
    the returned order is the draw order.  Once every positive-probability
    entry is used up the remainder is filled uniformly from the others.
    """
    rng = check_rng(random_state)
    p = np.asarray(probs, dtype=float).ravel().copy()
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    n = int(n)
    if not 1 <= n <= p.size:
        raise ValueError(f"cannot draw {n} items from {p.size}")
    chosen = []
    available = np.ones(p.size, dtype=bool)
    for _ in range(n):
        w = np.where(available, p, 0.0)
        total = w.sum()
        if total <= 0.0:
            rest = np.flatnonzero(available)
            chosen.extend(rng.permutation(rest)[: n - len(chosen)].tolist())
            break
        cdf = np.cumsum(w)
        # first bin whose cumulative weight exceeds the draw; never a zero-width bin
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        # with subnormal mass the draw can round up to cdf[-1]
        k = min(k, int(np.flatnonzero(w)[-1]))
        chosen.append(k)
        available[k] = False
    return np.asarray(chosen, dtype=np.int64)
