"""Bandit policies over grid cells.

Every policy is a scikit-learn style estimator: hyperparameters live in
``__init__`` (so ``get_params``/``set_params``/``clone`` work), ``fit``
resets the learned state for a grid, ``partial_fit`` folds in one visit's
observations and ``predict`` returns the next ranked list of cells.  Softmax
policies also expose ``predict_proba``.

A visit's observations are a mapping ``{cell id: event timestamps}`` for the
cells that were recommended; the reward of a cell is its event count.

Random streams are keyed by (``random_state``, purpose, visit): the cell
selection stream is shared by all policies, so two policies that produce the
same probability field also produce the same recommendations.
"""
from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._rng import stream
from .bayes import MHConfig, PriorConfig
from .spatial import GPConfig, gaussian_filter, gp_fit_predict, grid_features, sample_without_replacement, softmax_probs
from .tracker import HawkesTracker

POLICY_KINDS = ("eps_greedy", "ucb1", "spucb", "ucb1_hp", "ucb1_hpsp", "hpspucb")


@dataclass
class RewardLedger:
    """Per-cell visit counts and cumulative rewards, plus the number of completed rounds."""

    counts: np.ndarray
    cumulative: np.ndarray
    v: int = 0

    @classmethod
    def empty(cls, n_cells):
        return cls(np.zeros(n_cells, dtype=np.int64), np.zeros(n_cells))

    @property
    def mean(self):
        return np.divide(self.cumulative, self.counts, out=np.zeros_like(self.cumulative),
                         where=self.counts > 0)

    def update(self, rewards):
        for a, r in rewards.items():
            self.counts[a] += 1
            self.cumulative[a] += r
        self.v += 1


@dataclass
class PolicyConfig:
    """Every tunable of every policy; each policy reads the fields it knows."""

    n_select: int = 5
    epsilon: float = 0.1
    zeta_ucb: float = 1.0
    zeta_gp: float = 1.0
    tau_gp: float = 1.0
    sigma_gp: float = 1.0
    gamma: float = 1.0
    tau: float = 1.0
    zeta_hp: float = 1.0
    noise_jitter: float = 1e-6
    n_posterior: int = 50
    priors: PriorConfig = field(default_factory=PriorConfig)
    mh: MHConfig = field(default_factory=MHConfig)
    time_unit: float = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        for name in ("tau", "tau_gp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("gamma", "zeta_ucb", "zeta_gp", "zeta_hp", "sigma_gp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if int(self.n_select) < 1:
            raise ValueError("n_select must be >= 1")


def top_n(scores, n, rng):
    """Indices of the ``n`` largest scores, best first; ties broken uniformly at random."""
    s = np.asarray(scores, dtype=float).ravel()
    order = np.lexsort((rng.random(s.size), -s))
    return order[:n].astype(np.int64)


def ucb1_scores(ledger, zeta_ucb):
    """Mean reward plus ``zeta_ucb * sqrt(2 ln v / n)``; never-visited cells score +inf."""
    if ledger.v < 1:
        raise ValueError("UCB1 scores need at least one completed round")
    n = ledger.counts
    bonus = np.full(n.shape, np.inf)
    seen = n > 0
    bonus[seen] = np.sqrt(2.0 * np.log(ledger.v) / n[seen])
    scores = ledger.mean.copy()
    if zeta_ucb == 0:
        return scores
    scores[seen] += zeta_ucb * bonus[seen]
    scores[~seen] = np.inf
    return scores


def replace_infinite(scores):
    """Swap +inf sentinels for ``max finite + 10 * range`` so softmax stays defined.

    A zero range counts as 1, keeping sentinels strictly on top.
    """
    s = np.asarray(scores, dtype=float).copy()
    inf = np.isposinf(s)
    if not inf.any():
        return s
    finite = s[~inf]
    if finite.size == 0:
        s[:] = 0.0
        return s
    spread = finite.max() - finite.min()
    s[inf] = finite.max() + 10.0 * (spread if spread > 0 else 1.0)
    return s


def epsilon_greedy_select(ledger, epsilon, n, rng):
    # no coin is drawn at epsilon == 0, so the tie-breaking stream matches UCB1's
    if epsilon > 0 and rng.random() < epsilon:
        return rng.permutation(ledger.counts.size)[:n].astype(np.int64)
    return top_n(ledger.mean, n, rng)


def spucb_scores(features, targets, queries, zeta_gp, sigma_gp, noise_jitter=1e-6):
    """GP posterior mean plus ``zeta_gp`` posterior standard deviations."""
    mean, std = gp_fit_predict(features, targets, queries, GPConfig(sigma_gp, noise_jitter))
    return mean + zeta_gp * std


def combined_scores(base_scores, hp_scores, gamma):
    return replace_infinite(base_scores) + gamma * np.asarray(hp_scores, dtype=float)


def combined_select(base_scores, hp_scores, gamma, tau, n, rng):
    """Sample ``n`` cells from ``softmax((base + gamma * hp) / tau)`` without replacement."""
    probs = softmax_probs(combined_scores(base_scores, hp_scores, gamma), tau)
    return sample_without_replacement(probs, n, rng)


class BanditPolicy(BaseEstimator):
    """Shared fit/partial_fit/predict plumbing; subclasses fill in ``_update``."""

    uses_softmax = False

    def fit(self, grid_shape, window=None):
        """Reset all learned state for a ``(X, Y)`` grid.

        ``window`` (seconds) is used by Hawkes policies as the default time unit.
        """
        self.grid_shape_ = tuple(int(s) for s in grid_shape)
        self.n_cells_ = self.grid_shape_[0] * self.grid_shape_[1]
        if not 1 <= self.n_select <= self.n_cells_:
            raise ValueError(f"n_select={self.n_select} must be between 1 and {self.n_cells_}")
        self.ledger_ = RewardLedger.empty(self.n_cells_)
        self.visit_ = 0
        self.window_ = window
        self.scores_ = None
        self.proba_ = None
        self._init_state()
        return self

    def _init_state(self):
        pass

    def _seed(self):
        return 0 if self.random_state is None else int(self.random_state)

    def _select_rng(self):
        return stream(self._seed(), "select", self.visit_)

    def partial_fit(self, observations, window=None):
        """Fold in the observations ``{cell: timestamps}`` of the visit just made."""
        check_is_fitted(self, "ledger_")
        rewards = {int(a): len(ts) for a, ts in observations.items()}
        self.ledger_.update(rewards)
        self._update(observations, window)
        self.visit_ += 1
        return self

    def _update(self, observations, window):
        raise NotImplementedError

    def predict(self):
        """Ranked list of ``n_select`` distinct cell ids for the next visit."""
        check_is_fitted(self, "ledger_")
        rng = self._select_rng()
        if self.visit_ == 0:
            return rng.permutation(self.n_cells_)[: self.n_select].astype(np.int64)
        return self._choose(rng)

    def _choose(self, rng):
        if self.uses_softmax:
            return sample_without_replacement(self.proba_, self.n_select, rng)
        return top_n(self.scores_, self.n_select, rng)

    def predict_proba(self):
        """Selection probabilities as an ``(X, Y)`` field (softmax policies only)."""
        check_is_fitted(self, "ledger_")
        if not self.uses_softmax:
            raise AttributeError(f"{type(self).__name__} selects deterministically")
        if self.proba_ is None:
            return np.full(self.grid_shape_, 1.0 / self.n_cells_)
        return self.proba_.reshape(self.grid_shape_)


class EpsilonGreedy(BanditPolicy):
    """Explore uniformly with probability ``epsilon``, else take the top mean rewards."""

    def __init__(self, n_select=5, epsilon=0.1, random_state=None):
        self.n_select = n_select
        self.epsilon = epsilon
        self.random_state = random_state

    def _update(self, observations, window):
        self.scores_ = self.ledger_.mean

    def _choose(self, rng):
        return epsilon_greedy_select(self.ledger_, self.epsilon, self.n_select, rng)


class UCB1(BanditPolicy):
    def __init__(self, n_select=5, zeta_ucb=1.0, random_state=None):
        self.n_select = n_select
        self.zeta_ucb = zeta_ucb
        self.random_state = random_state

    def _update(self, observations, window):
        self.scores_ = ucb1_scores(self.ledger_, self.zeta_ucb)


class SpUCB(BanditPolicy):
    """GP-UCB over cell coordinates with softmax sampling."""

    uses_softmax = True

    def __init__(self, n_select=5, zeta_gp=1.0, tau_gp=1.0, sigma_gp=1.0, noise_jitter=1e-6, random_state=None):
        self.n_select = n_select
        self.zeta_gp = zeta_gp
        self.tau_gp = tau_gp
        self.sigma_gp = sigma_gp
        self.noise_jitter = noise_jitter
        self.random_state = random_state

    def _init_state(self):
        self.features_ = []
        self.targets_ = []
        self._queries = grid_features(self.grid_shape_)

    def _gp_scores(self, observations):
        for a, ts in observations.items():
            self.features_.append(self._queries[int(a)])
            self.targets_.append(float(len(ts)))
        return spucb_scores(np.array(self.features_), np.array(self.targets_), self._queries,
                            self.zeta_gp, self.sigma_gp, self.noise_jitter)

    def _update(self, observations, window):
        self.scores_ = self._gp_scores(observations)
        self.proba_ = softmax_probs(self.scores_, self.tau_gp)


class _HawkesMixin:
    """Hawkes tracker handling shared by the combined policies."""

    hp_smoothing = True

    def _init_tracker(self):
        unit = self.time_unit if self.time_unit is not None else (self.window_ or 1.0)
        self.tracker_ = HawkesTracker(self.grid_shape_, self.n_posterior, self.priors, self.mh,
                                      time_unit=unit, seed=self._seed())

    def _hp_scores(self, observations, window):
        if window is None:
            raise ValueError("Hawkes policies need the visit window")
        start, end = (window.start, window.end) if hasattr(window, "start") else window
        for a, ts in observations.items():
            self.tracker_.assimilate(int(a), ts, (start, end), visit=self.visit_)
        self.tracker_.fill_gaps(end, visit=self.visit_)
        raw = self.tracker_.intensity_ucb(self.zeta_hp)
        self.hp_raw_ = raw
        sigma = self.sigma_gp if self.hp_smoothing else 0.0
        self.hp_scores_ = gaussian_filter(raw, sigma)
        return self.hp_scores_.ravel()


class UCB1Hp(_HawkesMixin, BanditPolicy):
    """UCB1 scores plus ``gamma`` times the unsmoothed Hawkes intensity UCB, softmax-sampled."""

    uses_softmax = True
    hp_smoothing = False

    def __init__(self, n_select=5, zeta_ucb=1.0, gamma=1.0, tau=1.0, zeta_hp=1.0, sigma_gp=1.0,
                 n_posterior=50, priors=PriorConfig(), mh=MHConfig(), time_unit=None, random_state=None):
        self.n_select = n_select
        self.zeta_ucb = zeta_ucb
        self.gamma = gamma
        self.tau = tau
        self.zeta_hp = zeta_hp
        self.sigma_gp = sigma_gp
        self.n_posterior = n_posterior
        self.priors = priors
        self.mh = mh
        self.time_unit = time_unit
        self.random_state = random_state

    def _init_state(self):
        self._init_tracker()

    def _update(self, observations, window):
        base = ucb1_scores(self.ledger_, self.zeta_ucb)
        hp = self._hp_scores(observations, window)
        self.scores_ = combined_scores(base, hp, self.gamma)
        self.proba_ = softmax_probs(self.scores_, self.tau)


class UCB1HpSp(UCB1Hp):
    """As :class:`UCB1Hp` but the Hawkes field is Gaussian-smoothed with ``sigma_gp``."""

    hp_smoothing = True


class HpSpUCB(_HawkesMixin, SpUCB):
    """GP-UCB scores plus ``gamma`` times the smoothed Hawkes intensity UCB, softmax-sampled.

    Per visit: observe, refit the GP, update the Hawkes tracker and score its
    intensities, combine, softmax with temperature ``tau``, sample.
    """

    uses_softmax = True

    def __init__(self, n_select=5, zeta_gp=1.0, sigma_gp=1.0, gamma=1.0, tau=1.0, zeta_hp=1.0,
                 noise_jitter=1e-6, n_posterior=50, priors=PriorConfig(), mh=MHConfig(), time_unit=None,
                 random_state=None):
        self.n_select = n_select
        self.zeta_gp = zeta_gp
        self.sigma_gp = sigma_gp
        self.gamma = gamma
        self.tau = tau
        self.zeta_hp = zeta_hp
        self.noise_jitter = noise_jitter
        self.n_posterior = n_posterior
        self.priors = priors
        self.mh = mh
        self.time_unit = time_unit
        self.random_state = random_state

    def _init_state(self):
        SpUCB._init_state(self)
        self._init_tracker()

    def _update(self, observations, window):
        base = self._gp_scores(observations)
        hp = self._hp_scores(observations, window)
        self.scores_ = combined_scores(base, hp, self.gamma)
        self.proba_ = softmax_probs(self.scores_, self.tau)


_REGISTRY = {
    "eps_greedy": EpsilonGreedy,
    "ucb1": UCB1,
    "spucb": SpUCB,
    "ucb1_hp": UCB1Hp,
    "ucb1_hpsp": UCB1HpSp,
    "hpspucb": HpSpUCB,
}


def make_policy(kind, cfg=None, random_state=None, **overrides):
    """Build a policy of ``kind`` from a :class:`PolicyConfig` (plus keyword overrides)."""
    if kind not in _REGISTRY:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {', '.join(POLICY_KINDS)}")
    cls = _REGISTRY[kind]
    cfg = cfg if cfg is not None else PolicyConfig()
    values = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    values.update(overrides)
    names = cls._get_param_names()
    unknown = set(overrides) - set(names)
    if unknown:
        raise ValueError(f"{kind} has no parameters {sorted(unknown)}")
    params = {k: v for k, v in values.items() if k in names}
    params["random_state"] = random_state if random_state is not None else overrides.get("random_state")
    return cls(**params)
