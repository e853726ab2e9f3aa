"""Univariate Hawkes processes with the exponential kernel.

The conditional intensity is

    lambda(t) = mu + sum_{t_i < t} alpha * beta * exp(-beta * (t - t_i))

so ``alpha`` is the branching ratio (mean number of direct offspring) and
``beta`` the decay rate.  Because the kernel is exponential the excitation
part is Markov: knowing its value at one instant is enough to continue a
simulation or a likelihood evaluation, which is what the compiled kernels
below exploit.

Also contains the spatio-temporal branching generator used to build
synthetic benchmarks.
"""
import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ._validation import check_positive, check_probability, check_rng, check_times

_TINY = 1e-300


@dataclass(frozen=True)
class HawkesParams:
    """Background rate ``mu``, branching ratio ``alpha`` and decay ``beta``."""

    mu: float
    alpha: float
    beta: float

    def __post_init__(self):
        check_positive(self.mu, "mu")
        check_positive(self.beta, "beta")
        check_probability(self.alpha, "alpha", open_interval=True)

    def as_array(self):
        return np.array([self.mu, self.alpha, self.beta], dtype=float)


@dataclass(frozen=True)
class TimeWindow:
    start: float
    end: float

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.end)):
            raise ValueError("window bounds must be finite")
        if self.end < self.start:
            raise ValueError(f"window end {self.end} precedes start {self.start}")

    @property
    def length(self):
        return self.end - self.start


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _excitation(times, t, alpha, beta, strict):
    # Sum of kernel terms from events before t (or at t when strict is False).
    total = 0.0
    ab = alpha * beta
    for i in range(times.shape[0]):
        ti = times[i]
        if ti < t or (not strict and ti == t):
            term = ab * math.exp(-beta * (t - ti))
            if term > _TINY:
                total += term
    return total


@numba.njit(cache=True)
def _log_likelihood(mu, alpha, beta, events, start, end, e0):
    # e0 is the context excitation at `start`; events lie in [start, end].
    ab = alpha * beta
    exc = e0
    last = start
    loglik = 0.0
    tail = 0.0
    for i in range(events.shape[0]):
        ti = events[i]
        dt = ti - last
        if dt < 0.0:
            dt = 0.0
        exc *= math.exp(-beta * dt)
        loglik += math.log(mu + exc)
        exc += ab
        last = ti
        tail += 1.0 - math.exp(-beta * max(end - ti, 0.0))
    comp = mu * (end - start) + e0 / beta * (1.0 - math.exp(-beta * (end - start))) + alpha * tail
    return loglik - comp


@numba.njit(cache=True)
def _thin_batch(mu, alpha, beta, e0, start, end, seed):
    # Ogata thinning, one path per parameter row, path j starting from
    # excitation e0[j] at `start`.  Returns flat times, per-path counts and
    # each path's excitation at `end`.
    np.random.seed(seed)
    m = mu.shape[0]
    buf = np.empty(64)
    counts = np.zeros(m, dtype=np.int64)
    exc_end = np.empty(m)
    n = 0
    for j in range(m):
        ab = alpha[j] * beta[j]
        exc = e0[j]
        t = start
        while True:
            bound = mu[j] + exc
            w = np.random.exponential(1.0 / bound)
            if t + w >= end:
                exc = exc * math.exp(-beta[j] * (end - t))
                break
            t += w
            exc = exc * math.exp(-beta[j] * w)
            if np.random.random() * bound <= mu[j] + exc:
                if n == buf.shape[0]:
                    bigger = np.empty(2 * n)
                    bigger[:n] = buf
                    buf = bigger
                buf[n] = t
                n += 1
                counts[j] += 1
                exc = exc + ab
        exc_end[j] = exc
    return buf[:n].copy(), counts, exc_end


def _draw_seed(rng):
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**31 - 1))


def thin_batch(mu, alpha, beta, e0, start, end, rng):
    """Simulate one path per parameter row over ``[start, end)``.

    ``e0`` holds each path's excitation at ``start`` (the whole effect of its
    history).  Returns ``(flat_times, counts, excitation_at_end)``; path ``j``
    owns ``flat_times[offsets[j]:offsets[j + 1]]`` with offsets from ``counts``.
    ``rng`` is a Generator or an integer seed.
    """
    mu = np.ascontiguousarray(mu, dtype=float)
    alpha = np.ascontiguousarray(alpha, dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    e0 = np.ascontiguousarray(e0, dtype=float)
    if end <= start:
        return np.empty(0), np.zeros(mu.shape[0], dtype=np.int64), e0 * np.exp(-beta * max(end - start, 0.0))
    return _thin_batch(mu, alpha, beta, e0, float(start), float(end), _draw_seed(rng))


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _as_params(params):
    if isinstance(params, HawkesParams):
        return params
    return HawkesParams(*params)


def excitation(params, history, t, strict=True):
    """Excitation sum at ``t`` from ``history`` (events strictly before ``t`` by default)."""
    p = _as_params(params)
    times = check_times(history, "history")
    return _excitation(times, float(t), p.alpha, p.beta, strict)


def intensity(params, history, t):
    """Conditional intensity at time ``t`` given the event ``history``."""
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    p = _as_params(params)
    return p.mu + excitation(p, history, t)


def _check_window(window):
    if isinstance(window, TimeWindow):
        return window
    return TimeWindow(*window)


def _check_in_window(events, window, name="events"):
    if events.size and (events[0] < window.start or events[-1] > window.end):
        raise ValueError(f"{name} must lie inside [{window.start}, {window.end}]")


def _context_excitation(p, context, window):
    ctx = check_times(context, "context")
    if ctx.size and ctx[-1] > window.start:
        raise ValueError("context events must precede the window start")
    return _excitation(ctx, window.start, p.alpha, p.beta, False)


def log_likelihood(params, events, window, context=()):
    """Log-likelihood of ``events`` observed over ``window``.

    ``context`` holds earlier events (all at or before ``window.start``) whose
    excitation carries into the window.  The compensator is integrated in
    closed form.
    """
    p = _as_params(params)
    window = _check_window(window)
    ev = check_times(events, "events")
    _check_in_window(ev, window)
    e0 = _context_excitation(p, context, window)
    return _log_likelihood(p.mu, p.alpha, p.beta, ev, window.start, window.end, e0)


def compensator(params, events, t, context=(), start=0.0):
    """Integrated intensity over ``[start, t]`` for each ``t`` (vectorised over ``t``).

    Events in ``events`` and ``context`` contribute only once they have occurred.
    """
    p = _as_params(params)
    hist = np.concatenate([check_times(context, "context"), check_times(events, "events")])
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lo = np.maximum(start - hist[None, :], 0.0)
    hi = np.maximum(t[:, None] - hist[None, :], 0.0)
    kern = p.alpha * (np.exp(-p.beta * lo) - np.exp(-p.beta * hi))
    return p.mu * (t - start) + kern.sum(axis=1)


def simulate_thinning(params, context, window, random_state=None):
    """Draw events over ``window`` conditional on the ``context`` history.

    Uses Ogata's thinning with a piecewise-constant bound that is refreshed
    after every candidate; exact here because the kernel only decays.
    """
    p = _as_params(params)
    window = _check_window(window)
    rng = check_rng(random_state)
    e0 = _context_excitation(p, context, window)
    times, _, _ = thin_batch([p.mu], [p.alpha], [p.beta], [e0], window.start, window.end, rng)
    return times


# ---------------------------------------------------------------------------
# spatio-temporal branching generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Branching-process benchmark settings.

    eta: immigrant rate per second; phi: mean offspring per event;
    omega: rate of the exponential parent-to-child waiting time;
    sigma: per-axis std of the Gaussian child displacement;
    horizon: total time span in seconds; domain: ((x0, x1), (y0, y1)).
    """

    eta: float = 8e-5
    phi: float = 0.99
    omega: float = 1e-4
    sigma: float = 1e-2
    horizon: float = 3.6e6
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        check_positive(self.eta, "eta", strict=False)
        check_positive(self.phi, "phi", strict=False)
        check_positive(self.omega, "omega")
        check_positive(self.sigma, "sigma", strict=False)
        check_positive(self.horizon, "horizon")
        (x0, x1), (y0, y1) = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError("domain bounds must satisfy max > min on both axes")

    @property
    def expected_immigrants(self):
        return self.eta * self.horizon


@dataclass
class SpatioTemporalEvents:
    """Time-sorted events ``(t, x, y)``; ``parent`` is -1 for immigrants."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    parent: np.ndarray = field(default=None)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.parent is None:
            self.parent = np.full(self.t.shape, -1, dtype=np.int64)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        if not (self.t.shape == self.x.shape == self.y.shape == self.parent.shape):
            raise ValueError("t, x, y and parent must have the same length")
        check_times(self.t, "t")

    def __len__(self):
        return self.t.shape[0]

    def to_csv(self, path, with_parent=False):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "parent"] if with_parent else ["t", "x", "y"])
            for i in range(len(self)):
                row = [repr(float(self.t[i])), repr(float(self.x[i])), repr(float(self.y[i]))]
                if with_parent:
                    row.append(int(self.parent[i]))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        t = [float(r["t"]) for r in rows]
        x = [float(r["x"]) for r in rows]
        y = [float(r["y"]) for r in rows]
        parent = [int(r["parent"]) for r in rows] if rows and "parent" in rows[0] else None
        return cls(t, x, y, parent)


def generate_synthetic(cfg, random_state=None):
    """Simulate a spatio-temporal branching process on ``cfg.domain`` x ``[0, horizon]``.

    Immigrants: Poisson(eta * T) of them, uniform in space and time.  Each
    accepted event spawns Poisson(phi) children after Exp(omega) waiting times,
    displaced by isotropic Gaussian noise of std ``sigma``.  Children outside
    the time horizon or the spatial domain are dropped and do not reproduce.
    """
    rng = check_rng(random_state)
    (x0, x1), (y0, y1) = cfg.domain
    n_imm = rng.poisson(cfg.eta * cfg.horizon)
    ts = [rng.uniform(0.0, cfg.horizon, n_imm)]
    xs = [rng.uniform(x0, x1, n_imm)]
    ys = [rng.uniform(y0, y1, n_imm)]
    parents = [np.full(n_imm, -1, dtype=np.int64)]
    gen = (ts[0], xs[0], ys[0], np.arange(n_imm))
    while gen[0].size:
        gt, gx, gy, gidx = gen
        n_kids = rng.poisson(cfg.phi, gt.size) if cfg.phi > 0 else np.zeros(gt.size, dtype=np.int64)
        src = np.repeat(np.arange(gt.size), n_kids)
        ct = gt[src] + rng.exponential(1.0 / cfg.omega, src.size)
        cx = gx[src] + cfg.sigma * rng.standard_normal(src.size)
        cy = gy[src] + cfg.sigma * rng.standard_normal(src.size)
        keep = (ct <= cfg.horizon) & (cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1)
        start = sum(a.size for a in ts)
        ts.append(ct[keep])
        xs.append(cx[keep])
        ys.append(cy[keep])
        parents.append(gidx[src[keep]])
        gen = (ct[keep], cx[keep], cy[keep], np.arange(start, start + int(keep.sum())))
    t = np.concatenate(ts)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    parent = np.concatenate(parents)
    order = np.argsort(t, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    parent = parent[order]
    parent = np.where(parent >= 0, rank[np.maximum(parent, 0)], -1)
    return SpatioTemporalEvents(t[order], x[order], y[order], parent)
