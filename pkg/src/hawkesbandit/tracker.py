"""Per-cell Hawkes state for the bandit: gap filling, best-realization
selection, history merging, posterior refresh and intensity scores.

Each cell keeps

* ``best_guess``: observed events merged with the simulated events judged
  most plausible at each visit,
* ``L`` posterior parameter draws, and
* ``L`` simulated continuations of ``best_guess`` since the cell's last
  visit, one per draw.

Times inside the tracker are in units of ``time_unit`` seconds (the runner
uses the visit window length), so prior hyperparameters read as rates per
window.  Public methods take and return seconds.

Since the kernel is exponential, each continuation is summarised for scoring
and for likelihood evaluation by its excitation at ``synced_to``; the event
times themselves are only materialised when a cell is visited and one of them
is merged into ``best_guess``.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from ._rng import stream, stream_seed
from ._validation import check_times
from .bayes import MHConfig, PosteriorSamples, PriorConfig, mh_sample, sample_prior
from .hawkes import TimeWindow, _log_likelihood, thin_batch
from .spatial import gaussian_filter


@dataclass
class CellState:
    best_guess: np.ndarray
    theta: np.ndarray
    excitation: np.ndarray
    synced_to: float = 0.0
    gap_start: float = 0.0
    chunks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.theta.shape[0]

    @property
    def posterior(self):
        return PosteriorSamples(self.theta)

    def realization(self, l):
        """Simulated events of continuation ``l`` over ``(gap_start, synced_to]``."""
        parts = []
        for flat, offsets in self.chunks:
            parts.append(flat[offsets[l]:offsets[l + 1]])
        return np.concatenate(parts) if parts else np.empty(0)

    @property
    def realizations(self):
        return [self.realization(l) for l in range(self.n_samples)]

    def intensities(self):
        """Intensity of every continuation at ``synced_to``."""
        return self.theta[:, 0] + self.excitation


def _excitation_at(theta, times, t):
    # Excitation at t (events <= t) under every parameter row.
    if times.size == 0:
        return np.zeros(theta.shape[0])
    dt = t - times[times <= t]
    alpha, beta = theta[:, 1:2], theta[:, 2:3]
    return (alpha * beta * np.exp(-beta * dt[None, :])).sum(axis=1)


class HawkesTracker:
    """Hawkes bookkeeping for every cell of an ``(X, Y)`` grid.

    Parameters
    ----------
    shape : (X, Y)
    n_samples : posterior draws ``L`` kept per cell.
    priors, mh_cfg : prior and sampler settings; ``mh_cfg.num_samples`` is
        overridden by ``n_samples``.
    time_unit : seconds per tracker time unit.
    seed : master seed; cell, visit and purpose select a substream.
    """

    def __init__(self, shape, n_samples=50, priors=PriorConfig(), mh_cfg=MHConfig(), time_unit=1.0, seed=0):
        self.shape = tuple(int(s) for s in shape)
        self.n_samples = int(n_samples)
        self.priors = priors
        self.mh_cfg = MHConfig(self.n_samples, mh_cfg.burn_in, mh_cfg.thin, mh_cfg.proposal_scales, mh_cfg.adapt)
        self.time_unit = float(time_unit)
        self.seed = int(seed)
        self.t_c = 0.0
        self.cells = []
        for a in range(self.n_cells):
            theta = sample_prior(priors, self.n_samples, stream(self.seed, "prior", a))
            self.cells.append(CellState(np.empty(0), theta, np.zeros(self.n_samples)))

    @property
    def n_cells(self):
        return self.shape[0] * self.shape[1]

    def _scaled_window(self, window):
        w = window if isinstance(window, TimeWindow) else TimeWindow(*window)
        return TimeWindow(w.start / self.time_unit, w.end / self.time_unit)

    def _extend(self, a, up_to, visit):
        cell = self.cells[a]
        if up_to <= cell.synced_to:
            return
        th = cell.theta
        flat, counts, exc = thin_batch(th[:, 0], th[:, 1], th[:, 2], cell.excitation, cell.synced_to, up_to,
                                       stream_seed(self.seed, "fill", a, visit))
        offsets = np.concatenate([[0], np.cumsum(counts)])
        cell.chunks.append((flat, offsets))
        cell.excitation = exc
        cell.synced_to = up_to

    def fill_gaps(self, up_to, visit=0):
        """Extend every cell's continuations up to ``up_to`` seconds."""
        up = float(up_to) / self.time_unit
        for a in range(self.n_cells):
            if up < self.cells[a].synced_to:
                raise ValueError(f"cell {a} is already synced past {up_to}")
            self._extend(a, up, visit)
        self.t_c = max(self.t_c, up)
        return self

    def selection_log_likelihoods(self, a, observed, window, visit=0):
        """Log-likelihood of ``observed`` over ``window`` under each continuation.

        Continuation ``l`` is scored with parameters ``theta_l`` and history
        ``best_guess`` plus its own simulated events.
        """
        w = self._scaled_window(window)
        obs = check_times(observed, "observed") / self.time_unit
        if obs.size and (obs[0] < w.start or obs[-1] > w.end):
            raise ValueError("observed events must lie inside the visit window")
        cell = self.cells[a]
        if cell.synced_to > w.start:
            raise ValueError(f"cell {a} is synced past the window start")
        self._extend(a, w.start, visit)
        th = cell.theta
        return np.array([_log_likelihood(th[l, 0], th[l, 1], th[l, 2], obs, w.start, w.end, cell.excitation[l])
                         for l in range(cell.n_samples)])

    def assimilate(self, a, observed, window, visit=0):
        """Fold one visit's observations into cell ``a``.

        Picks the continuation under which ``observed`` is most likely (lowest
        index on ties), merges it and the observations into ``best_guess``,
        refreshes the posterior on ``[0, window end]`` and restarts the
        continuations, now empty, at the window end.
        """
        loglik = self.selection_log_likelihoods(a, observed, window, visit)
        best = int(np.argmax(loglik))
        w = self._scaled_window(window)
        cell = self.cells[a]
        obs = np.asarray(observed, dtype=float) / self.time_unit
        merged = np.union1d(np.union1d(cell.best_guess, cell.realization(best)), obs)
        posterior = mh_sample(merged, (0.0, w.end), self.priors, self.mh_cfg, stream(self.seed, "mh", a, visit))
        cell.best_guess = merged
        cell.theta = posterior.theta
        cell.excitation = _excitation_at(posterior.theta, merged, w.end)
        cell.chunks = []
        cell.synced_to = w.end
        cell.gap_start = w.end
        cell.diagnostics = dict(posterior.diagnostics, selected=best, visit=visit)
        return cell

    def intensity_ucb(self, zeta_hp):
        """Mean plus ``zeta_hp`` population standard deviations of the
        continuation intensities, per cell, as an ``(X, Y)`` field."""
        lam = np.stack([c.intensities() for c in self.cells])
        score = lam.mean(axis=1) + zeta_hp * lam.std(axis=1)
        return score.reshape(self.shape)

    def smoothed_intensity_ucb(self, zeta_hp, sigma_gp):
        return gaussian_filter(self.intensity_ucb(zeta_hp), sigma_gp)

    def dump(self, path):
        """Write one JSON record per cell (debugging aid; times in seconds)."""
        with open(path, "w") as fh:
            for a, c in enumerate(self.cells):
                rec = {
                    "cell": a,
                    "synced_to": c.synced_to * self.time_unit,
                    "best_guess_length": int(c.best_guess.size),
                    "posterior": c.theta.tolist(),
                }
                fh.write(json.dumps(rec) + "\n")
