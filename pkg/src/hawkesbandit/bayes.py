"""Bayesian inference for Hawkes parameters by Metropolis-Hastings.

Priors: ``mu ~ Gamma(k_p, scale=k_c)``, ``beta ~ Gamma(k_p, scale=k_c)``,
``alpha ~ Beta(m, n)``.  The chain runs in the unconstrained coordinates
``(log mu, logit alpha, log beta)`` with one Gaussian random-walk update per
coordinate per sweep, so proposals never leave the support.  Step sizes are
tuned during burn-in only; the kept part of the chain uses fixed steps.
"""
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_rng, check_times
from .hawkes import HawkesParams, TimeWindow, _log_likelihood, intensity

_TARGET_ACCEPT = 0.44
_ADAPT_BATCH = 50


@dataclass(frozen=True)
class PriorConfig:
    """Gamma(k_p, scale k_c) on mu and beta, Beta(m, n) on alpha."""

    k_p: float = 1.0
    k_c: float = 1.0
    m: float = 2.0
    n: float = 2.0

    def __post_init__(self):
        for name in ("k_p", "k_c", "m", "n"):
            check_positive(getattr(self, name), name)


@dataclass(frozen=True)
class MHConfig:
    num_samples: int = 50
    burn_in: int = 500
    thin: int = 5
    proposal_scales: tuple = (0.5, 0.5, 0.5)
    adapt: bool = True

    def __post_init__(self):
        if int(self.num_samples) < 1:
            raise ValueError("num_samples must be >= 1")
        if int(self.burn_in) < 0:
            raise ValueError("burn_in must be >= 0")
        if int(self.thin) < 1:
            raise ValueError("thin must be >= 1")
        scales = np.broadcast_to(np.asarray(self.proposal_scales, dtype=float), (3,))
        if np.any(scales < 0) or not np.all(np.isfinite(scales)):
            raise ValueError("proposal_scales must be finite and non-negative")
        object.__setattr__(self, "proposal_scales", tuple(float(s) for s in scales))


@dataclass
class PosteriorSamples:
    """``theta`` is an ``(L, 3)`` array of rows ``(mu, alpha, beta)``."""

    theta: np.ndarray
    acceptance_rate: float = float("nan")
    n_steps: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))

    def __len__(self):
        return self.theta.shape[0]

    def __getitem__(self, i):
        return HawkesParams(*self.theta[i])

    def __iter__(self):
        return (HawkesParams(*row) for row in self.theta)

    @property
    def mu(self):
        return self.theta[:, 0]

    @property
    def alpha(self):
        return self.theta[:, 1]

    @property
    def beta(self):
        return self.theta[:, 2]


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _log_gamma_pdf(x, shape, scale):
    return (shape - 1.0) * math.log(x) - x / scale - math.lgamma(shape) - shape * math.log(scale)


@numba.njit(cache=True)
def _log_beta_pdf(x, a, b):
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - lbeta


@numba.njit(cache=True)
def _log_prior(mu, alpha, beta, k_p, k_c, m, n):
    return _log_gamma_pdf(mu, k_p, k_c) + _log_gamma_pdf(beta, k_p, k_c) + _log_beta_pdf(alpha, m, n)


@numba.njit(cache=True)
def _from_unconstrained(z):
    mu = math.exp(z[0])
    alpha = 1.0 / (1.0 + math.exp(-z[1]))
    beta = math.exp(z[2])
    return mu, alpha, beta


@numba.njit(cache=True)
def _hawkes_log_target(z, args):
    # Posterior density of z = (log mu, logit alpha, log beta), Jacobian included.
    events, start, end, k_p, k_c, m, n = args
    mu, alpha, beta = _from_unconstrained(z)
    if not (mu > 0.0 and beta > 0.0 and 0.0 < alpha < 1.0) or not (math.isfinite(mu) and math.isfinite(beta)):
        return -np.inf
    lp = _log_prior(mu, alpha, beta, k_p, k_c, m, n)
    ll = _log_likelihood(mu, alpha, beta, events, start, end, 0.0)
    log_jac = z[0] + math.log(alpha) + math.log1p(-alpha) + z[2]
    return lp + ll + log_jac


@numba.njit(cache=True)
def _mh_chain(log_target, args, z0, scales, normals, uniforms, burn_in, thin, n_keep, adapt):
    # Component-wise random-walk Metropolis.  normals/uniforms are pre-drawn,
    # shape (n_steps, dim).  Returns kept states, accepted moves after burn-in,
    # and the tuned scales.
    dim = z0.shape[0]
    z = z0.copy()
    s = scales.copy()
    cur = log_target(z, args)
    kept = np.empty((n_keep, dim))
    accepted = 0
    batch_acc = np.zeros(dim)
    n_batches = 0
    k = 0
    n_steps = burn_in + n_keep * thin
    for step in range(n_steps):
        for d in range(dim):
            if s[d] == 0.0:
                continue
            old = z[d]
            z[d] = old + s[d] * normals[step, d]
            prop = log_target(z, args)
            if math.log(uniforms[step, d]) < prop - cur:
                cur = prop
                if step >= burn_in:
                    accepted += 1
                else:
                    batch_acc[d] += 1.0
            else:
                z[d] = old
        if adapt and step < burn_in and (step + 1) % _ADAPT_BATCH == 0:
            n_batches += 1
            delta = min(0.5, 1.0 / math.sqrt(n_batches))
            for d in range(dim):
                if batch_acc[d] / _ADAPT_BATCH > _TARGET_ACCEPT:
                    s[d] *= math.exp(delta)
                else:
                    s[d] *= math.exp(-delta)
                batch_acc[d] = 0.0
        if step >= burn_in and (step - burn_in + 1) % thin == 0:
            kept[k] = z
            k += 1
    return kept, accepted, s


def random_walk_metropolis(log_target, args, x0, scales, n_samples, random_state=None,
                           burn_in=0, thin=1, adapt=False):
    """Generic component-wise random-walk Metropolis sampler.

    ``log_target`` must be a numba-jitted function ``f(x, args) -> float``.
    Returns ``(samples, acceptance_rate, tuned_scales)``.
    """
    rng = check_rng(random_state)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    scales = np.broadcast_to(np.asarray(scales, dtype=float), x0.shape).copy()
    n_steps = burn_in + n_samples * thin
    normals = rng.standard_normal((n_steps, x0.size))
    uniforms = rng.random((n_steps, x0.size))
    kept, accepted, tuned = _mh_chain(log_target, args, x0, scales, normals, uniforms,
                                      burn_in, thin, n_samples, adapt)
    moves = n_samples * thin * int(np.count_nonzero(scales))
    rate = accepted / moves if moves else 0.0
    return kept, rate, tuned


def _window(horizon):
    return horizon if isinstance(horizon, TimeWindow) else TimeWindow(*horizon)


def log_prior(params, priors=PriorConfig()):
    """Log prior density of ``params``; ``-inf`` outside the support."""
    mu, alpha, beta = (params.mu, params.alpha, params.beta) if isinstance(params, HawkesParams) else params
    if not (mu > 0 and beta > 0 and 0 < alpha < 1):
        return -np.inf
    return _log_prior(float(mu), float(alpha), float(beta), priors.k_p, priors.k_c, priors.m, priors.n)


def log_posterior(params, events, horizon, priors=PriorConfig()):
    """Unnormalised log posterior: log prior + log-likelihood over ``horizon``."""
    lp = log_prior(params, priors)
    if not np.isfinite(lp):
        return -np.inf
    mu, alpha, beta = (params.mu, params.alpha, params.beta) if isinstance(params, HawkesParams) else params
    w = _window(horizon)
    ev = check_times(events, "events")
    if ev.size and (ev[0] < w.start or ev[-1] > w.end):
        raise ValueError("events must lie inside the horizon")
    return lp + _log_likelihood(float(mu), float(alpha), float(beta), ev, w.start, w.end, 0.0)


def default_initial_state(events, horizon, priors=PriorConfig()):
    w = _window(horizon)
    n = len(events)
    if n and w.length > 0:
        mu = n / w.length
    else:
        mu = priors.k_p * priors.k_c
    return HawkesParams(mu, 0.5, 1.0)


def mh_sample(events, horizon, priors=PriorConfig(), cfg=MHConfig(), random_state=None, initial=None):
    """Draw ``cfg.num_samples`` posterior samples of the Hawkes parameters.

    Deterministic for a fixed seed.  A chain that never moves still returns
    ``num_samples`` copies of its state; ``diagnostics['all_rejected']`` flags it.
    """
    w = _window(horizon)
    ev = check_times(events, "events")
    if ev.size and (ev[0] < w.start or ev[-1] > w.end):
        raise ValueError("events must lie inside the horizon")
    init = initial if initial is not None else default_initial_state(ev, w, priors)
    if not isinstance(init, HawkesParams):
        init = HawkesParams(*init)
    z0 = np.array([math.log(init.mu), math.log(init.alpha / (1.0 - init.alpha)), math.log(init.beta)])
    args = (ev, float(w.start), float(w.end), float(priors.k_p), float(priors.k_c), float(priors.m), float(priors.n))
    kept, rate, tuned = random_walk_metropolis(
        _hawkes_log_target, args, z0, np.asarray(cfg.proposal_scales), int(cfg.num_samples), random_state,
        burn_in=int(cfg.burn_in), thin=int(cfg.thin), adapt=bool(cfg.adapt))
    theta = np.column_stack([np.exp(kept[:, 0]), 1.0 / (1.0 + np.exp(-kept[:, 1])), np.exp(kept[:, 2])])
    # Saturated logits can round alpha to exactly 0 or 1; keep it inside (0, 1).
    theta[:, 1] = np.clip(theta[:, 1], np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    n_steps = int(cfg.burn_in) + int(cfg.num_samples) * int(cfg.thin)
    diag = {"acceptance_rate": rate, "chain_length": n_steps, "all_rejected": rate == 0.0,
            "tuned_scales": tuple(float(s) for s in tuned)}
    return PosteriorSamples(theta, acceptance_rate=rate, n_steps=n_steps, diagnostics=diag)


def sample_prior(priors, size, random_state=None):
    """Independent draws from the prior, as an ``(size, 3)`` array of (mu, alpha, beta)."""
    rng = check_rng(random_state)
    mu = rng.gamma(priors.k_p, priors.k_c, size)
    alpha = rng.beta(priors.m, priors.n, size)
    beta = rng.gamma(priors.k_p, priors.k_c, size)
    tiny = np.finfo(float).tiny
    theta = np.column_stack([np.maximum(mu, tiny), np.clip(alpha, tiny, 1 - 1e-16), np.maximum(beta, tiny)])
    return theta


class BayesianHawkes(BaseEstimator):
    """Estimator wrapper: ``fit(times, horizon)`` draws posterior samples.

    Parameters mirror :class:`PriorConfig` and :class:`MHConfig`.  After
    fitting, ``samples_`` holds the :class:`PosteriorSamples` and
    ``posterior_mean_`` their column means.
    """

    def __init__(self, k_p=1.0, k_c=1.0, m=2.0, n=2.0, num_samples=50, burn_in=500, thin=5,
                 proposal_scale=0.5, random_state=None):
        self.k_p = k_p
        self.k_c = k_c
        self.m = m
        self.n = n
        self.num_samples = num_samples
        self.burn_in = burn_in
        self.thin = thin
        self.proposal_scale = proposal_scale
        self.random_state = random_state

    def fit(self, times, horizon=None):
        times = check_times(times)
        if horizon is None:
            horizon = (0.0, float(times[-1]) if times.size else 1.0)
        priors = PriorConfig(self.k_p, self.k_c, self.m, self.n)
        cfg = MHConfig(self.num_samples, self.burn_in, self.thin, (self.proposal_scale,) * 3)
        self.samples_ = mh_sample(times, horizon, priors, cfg, self.random_state)
        self.posterior_mean_ = self.samples_.theta.mean(axis=0)
        return self

    def predict_intensity(self, history, t):
        """Posterior draws of the intensity at ``t`` given ``history``."""
        check_is_fitted(self, "samples_")
        return np.array([intensity(p, history, t) for p in self.samples_])
