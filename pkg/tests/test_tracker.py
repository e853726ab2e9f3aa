import json

import numpy as np
import pytest

from hawkesbandit.bayes import MHConfig
from hawkesbandit.hawkes import log_likelihood
from hawkesbandit.spatial import gaussian_filter
from hawkesbandit.tracker import HawkesTracker
from oracles import double_loop_ucb

FAST = MHConfig(burn_in=100, thin=2)


def tracker(shape=(2, 2), L=5, seed=0, **kw):
    return HawkesTracker(shape, n_samples=L, mh_cfg=FAST, seed=seed, **kw)


def set_cell(tr, a, theta, realizations=None, t=0.0):
    """Overwrite a cell with given draws and simulated continuations ending at ``t``."""
    cell = tr.cells[a]
    cell.theta = np.asarray(theta, dtype=float)
    L = cell.theta.shape[0]
    reals = realizations if realizations is not None else [[]] * L
    flat = np.concatenate([np.asarray(r, dtype=float) for r in reals]) if L else np.empty(0)
    offsets = np.concatenate([[0], np.cumsum([len(r) for r in reals])])
    cell.chunks = [(flat, offsets)]
    cell.gap_start = 0.0
    cell.synced_to = t
    hist = [np.union1d(cell.best_guess, r) for r in reals]
    cell.excitation = np.array([
        sum(th[1] * th[2] * np.exp(-th[2] * (t - s)) for s in h if s <= t) for th, h in zip(cell.theta, hist)])


class TestSelection:
    def test_single_candidate(self):
        tr = tracker(L=1)
        tr.fill_gaps(10.0)
        cell = tr.assimilate(0, [10.5, 11.0], (10.0, 12.0))
        assert cell.diagnostics["selected"] == 0

    def test_burst_before_observed_burst(self):
        tr = tracker(L=2)
        theta = [[0.1, 0.9, 5.0], [0.1, 0.9, 5.0]]
        set_cell(tr, 0, theta, [[9.7, 9.8, 9.9], []], t=10.0)
        obs = [10.05, 10.1, 10.2]
        ll = tr.selection_log_likelihoods(0, obs, (10.0, 11.0))
        direct = [log_likelihood(theta[0], obs, (10.0, 11.0), context=[9.7, 9.8, 9.9]),
                  log_likelihood(theta[1], obs, (10.0, 11.0))]
        np.testing.assert_allclose(ll, direct, atol=1e-12)
        assert ll[0] > ll[1]
        assert tr.assimilate(0, obs, (10.0, 11.0)).diagnostics["selected"] == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_argmax(self, seed):
        rng = np.random.default_rng(seed)
        L = int(rng.integers(2, 6))
        tr = tracker(L=L, seed=seed)
        tr.assimilate(1, np.sort(rng.uniform(0, 1, 4)), (0.0, 1.0))
        tr.fill_gaps(3.0, visit=1)
        cell = tr.cells[1]
        obs = np.sort(rng.uniform(3.0, 4.0, 3))
        direct = [log_likelihood(cell.theta[l], obs, (3.0, 4.0),
                                 context=np.union1d(cell.best_guess, cell.realization(l))) for l in range(L)]
        ll = tr.selection_log_likelihoods(1, obs, (3.0, 4.0), visit=2)
        np.testing.assert_allclose(ll, direct, atol=1e-12)
        expected = int(np.argmax(direct))
        chosen = cell.realization(expected)
        before = cell.best_guess.copy()
        tr.assimilate(1, obs, (3.0, 4.0), visit=2)
        assert cell.diagnostics["selected"] == expected
        np.testing.assert_array_equal(cell.best_guess, np.union1d(np.union1d(before, chosen), obs))

    def test_ties_pick_lowest_index(self):
        tr = tracker(L=3)
        set_cell(tr, 0, [[1.0, 0.5, 1.0]] * 3, t=2.0)
        assert tr.assimilate(0, [2.5], (2.0, 3.0)).diagnostics["selected"] == 0

    def test_observed_outside_window(self):
        tr = tracker()
        with pytest.raises(ValueError):
            tr.assimilate(0, [5.0], (0.0, 1.0))


class TestAssimilate:
    def test_no_information_update(self):
        tr = tracker(L=3)
        set_cell(tr, 0, [[0.5, 0.5, 1.0]] * 3, t=0.0)
        cell = tr.assimilate(0, [], (0.0, 1.0))
        assert cell.best_guess.size == 0
        assert cell.theta.shape == (3, 3) and cell.synced_to == 1.0
        assert all(r.size == 0 for r in cell.realizations)

    def test_history_invariants(self):
        tr = tracker(L=4, seed=3)
        rng = np.random.default_rng(3)
        for v in range(6):
            obs = np.sort(rng.uniform(v, v + 1, rng.integers(0, 4)))
            tr.fill_gaps(v, visit=v)
            cell = tr.assimilate(0, obs, (v, v + 1), visit=v)
            assert np.all(np.diff(cell.best_guess) > 0)
            assert np.all(np.isin(obs, cell.best_guess))
            assert len(cell.realizations) == cell.theta.shape[0] == 4

    def test_realizations_follow_best_guess(self):
        tr = tracker(L=4)
        tr.assimilate(0, [0.2, 0.4], (0.0, 1.0))
        tr.fill_gaps(5.0, visit=1)
        cell = tr.cells[0]
        for r in cell.realizations:
            assert np.all(r > cell.best_guess[-1]) and np.all(r <= 5.0)

    def test_time_unit_scaling(self):
        a = tracker(L=3, time_unit=1.0)
        b = tracker(L=3, time_unit=100.0)
        a.assimilate(0, [0.2, 0.5], (0.0, 1.0))
        b.assimilate(0, [20.0, 50.0], (0.0, 100.0))
        np.testing.assert_allclose(a.cells[0].theta, b.cells[0].theta, rtol=1e-12)
        np.testing.assert_allclose(a.intensity_ucb(1.0), b.intensity_ucb(1.0), rtol=1e-12)


class TestFillGaps:
    def test_zero_gap(self):
        tr = tracker()
        tr.fill_gaps(0.0)
        assert all(c.realizations[0].size == 0 for c in tr.cells)

    def test_high_rate_nonempty(self):
        tr = tracker(L=5)
        for a in range(4):
            set_cell(tr, a, [[20.0, 0.1, 1.0]] * 5)
        tr.fill_gaps(1.0)
        assert all(r.size > 0 for c in tr.cells for r in c.realizations)

    def test_cannot_rewind(self):
        tr = tracker()
        tr.fill_gaps(2.0)
        with pytest.raises(ValueError):
            tr.fill_gaps(1.0)

    def test_prior_cells_simulated_from_zero(self):
        tr = tracker(L=5, seed=4)
        tr.fill_gaps(50.0)
        for c in tr.cells:
            for r in c.realizations:
                assert r.size == 0 or (r.min() >= 0.0 and r.max() <= 50.0)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            tr = tracker(L=4, seed=9)
            tr.fill_gaps(1.0)
            tr.assimilate(2, [1.2, 1.7], (1.0, 2.0), visit=1)
            tr.fill_gaps(2.0, visit=1)
            runs.append(tr.intensity_ucb(1.0))
        np.testing.assert_array_equal(*runs)


class TestScores:
    def test_hand_ucb(self):
        tr = tracker(shape=(1, 1), L=3)
        set_cell(tr, 0, [[1.0, 0.5, 1.0], [2.0, 0.5, 1.0], [3.0, 0.5, 1.0]])
        score = tr.intensity_ucb(1.0)[0, 0]
        assert score == pytest.approx(2 + np.sqrt(2 / 3), abs=1e-12)
        assert round(score, 5) == 2.81650
        assert tr.intensity_ucb(0.0)[0, 0] == pytest.approx(2.0, abs=1e-12)

    def test_identical_draws(self):
        tr = tracker(shape=(1, 1), L=4)
        set_cell(tr, 0, [[1.5, 0.5, 1.0]] * 4)
        assert tr.intensity_ucb(3.0)[0, 0] == pytest.approx(1.5, abs=1e-12)

    def test_matches_loop_oracle(self):
        tr = tracker(shape=(3, 2), L=5, seed=2)
        tr.fill_gaps(4.0)
        got = tr.intensity_ucb(1.3)
        for a, c in enumerate(tr.cells):
            lams = [c.theta[l, 0] + sum(c.theta[l, 1] * c.theta[l, 2] * np.exp(-c.theta[l, 2] * (4.0 - s))
                                        for s in c.realization(l)) for l in range(5)]
            assert got.ravel()[a] == pytest.approx(double_loop_ucb(lams, 1.3), rel=1e-10)
            assert got.ravel()[a] >= np.mean(lams) - 1e-12

    def test_smoothing(self):
        tr = tracker(shape=(4, 4), L=3, seed=1)
        tr.fill_gaps(2.0)
        raw = tr.intensity_ucb(1.0)
        np.testing.assert_array_equal(tr.smoothed_intensity_ucb(1.0, 0.0), raw)
        np.testing.assert_allclose(tr.smoothed_intensity_ucb(1.0, 1.0), gaussian_filter(raw, 1.0))

    def test_dump(self, tmp_path):
        tr = tracker(L=2)
        tr.fill_gaps(3.0)
        tr.dump(tmp_path / "state.jsonl")
        recs = [json.loads(line) for line in (tmp_path / "state.jsonl").read_text().splitlines()]
        assert len(recs) == 4 and recs[0]["synced_to"] == 3.0 and len(recs[0]["posterior"]) == 2
