import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkesbandit.environment import EndOfEpisode, EventDataset, GridSpec, ReplayEnvironment, cell_of, ingest
from hawkesbandit.hawkes import TimeWindow

DATA = os.path.join(os.path.dirname(__file__), "data")
HOUSTON = GridSpec((-95.800000, -95.018014), (29.580562, 30.112111), 10, 10)
HOUSTON_FILTERS = {"category": "Flooding", "start": "2017-08-23 00:00:00", "end": "2017-10-02 00:00:00"}
HOUSTON_SCHEMA = {"time": "SR CREATE DATE", "lat": "LATITUDE", "lon": "LONGITUDE", "category": "SR TYPE"}


def dataset(t, lon=None, lat=None, period=(0.0, 3.6e6)):
    t = np.asarray(t, dtype=float)
    lon = np.full(t.size, 0.05) if lon is None else lon
    lat = np.full(t.size, 0.05) if lat is None else lat
    return EventDataset(t, lon, lat, TimeWindow(*period))


class TestGrid:
    def test_edges(self):
        assert cell_of(-95.8, 30.0, HOUSTON)[0] == 0
        assert cell_of(-95.018014, 30.0, HOUSTON)[0] == 9
        assert cell_of(-95.8, 30.112111, HOUSTON)[1] == 9

    def test_houston_midpoint(self):
        assert cell_of(-95.4090070, 29.8, HOUSTON)[0] == 5

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            cell_of(-96.0, 30.0, HOUSTON)
        with pytest.raises(ValueError):
            cell_of(float("nan"), 30.0, HOUSTON)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(1, 12), st.integers(1, 12))
    def test_partition(self, lon, lat, X, Y):
        grid = GridSpec((0.0, 1.0), (0.0, 1.0), X, Y)
        x, y = cell_of(lon, lat, grid)
        assert 0 <= x < X and 0 <= y < Y
        # the point lies in the closed cell it maps to (up to the edge snap)
        assert x / X - 1e-9 <= lon <= (x + 1) / X + 1e-9
        assert grid.cell_ids([lon], [lat])[0] == x * Y + y

    def test_invalid(self):
        with pytest.raises(ValueError):
            GridSpec((1.0, 0.0), (0.0, 1.0), 2, 2)
        with pytest.raises(ValueError):
            GridSpec(X=0)


class TestReplay:
    def test_visit_counts(self):
        assert ReplayEnvironment(dataset([]), GridSpec(), 18_000).n_visits == 200
        assert ReplayEnvironment(dataset([], period=(0.0, 3_456_000.0)), GridSpec(), 72_000).n_visits == 48

    def test_empty_dataset(self):
        env = ReplayEnvironment(dataset([]), GridSpec(), 18_000)
        for _ in range(env.n_visits):
            assert all(ts.size == 0 for ts in env.step(range(5)).values())
        with pytest.raises(EndOfEpisode):
            env.step([0])

    def test_window_arithmetic(self):
        env = ReplayEnvironment(dataset([18_500.0]), GridSpec(), 18_000)
        assert env.step([0])[0].size == 0
        assert env.step([1, 2])[1].size == 0
        env.reset()
        env.step([0])
        obs = env.step([0, 1])
        np.testing.assert_array_equal(obs[0], [18_500.0])
        assert obs[1].size == 0

    def test_full_observation_and_tiling(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(0, 3.6e6, 2000)
        t[:3] = [0.0, 18_000.0, 3.6e6]  # edge of the first window, a window boundary, the period end
        ds = dataset(t, rng.uniform(0, 1, t.size), rng.uniform(0, 1, t.size))
        env = ReplayEnvironment(ds, GridSpec(), 18_000)
        seen = []
        for _ in range(env.n_visits):
            obs = env.step(range(100))
            seen.extend(np.concatenate(list(obs.values())).tolist())
        inside = t[t < env.n_visits * env.window]
        assert len(seen) == inside.size == env.total_events
        assert sorted(seen) == sorted(inside.tolist())

    def test_pure_replay(self):
        rng = np.random.default_rng(1)
        ds = dataset(rng.uniform(0, 3.6e6, 500), rng.uniform(0, 1, 500), rng.uniform(0, 1, 500))
        recs = [rng.permutation(100)[:5] for _ in range(200)]
        runs = []
        for _ in range(2):
            env = ReplayEnvironment(ds, GridSpec(), 18_000)
            runs.append([env.step(r) for r in recs])
        for a, b in zip(*runs):
            assert a.keys() == b.keys()
            for k in a:
                np.testing.assert_array_equal(a[k], b[k])

    def test_csv_roundtrip(self, tmp_path):
        ds = dataset([5.0, 1.0, 3.0])
        np.testing.assert_array_equal(ds.t, [1.0, 3.0, 5.0])
        ds.to_csv(tmp_path / "d.csv")
        back = EventDataset.from_csv(tmp_path / "d.csv", (0.0, 3.6e6))
        np.testing.assert_array_equal(back.t, ds.t)


class TestIngest:
    def test_fixture_counts(self):
        with open(os.path.join(DATA, "houston_fixture_expected.json")) as fh:
            expected = json.load(fh)
        ds, report = ingest(os.path.join(DATA, "houston_fixture.csv"), HOUSTON_SCHEMA, HOUSTON_FILTERS, HOUSTON)
        assert len(ds) == report.rows_out == expected["kept"]
        assert report.rows_in == expected["rows_in"]
        assert dict(report.dropped) == expected["dropped"]
        assert ds.period.length == 3_456_000.0
        assert np.all(np.diff(ds.t) >= 0) and ds.t.min() >= 0 and ds.t.max() < 3_456_000.0
        assert np.all(HOUSTON.contains(ds.lon, ds.lat))
        env = ReplayEnvironment(ds, HOUSTON, 72_000)
        assert env.n_visits == 48 and env.total_events == expected["kept"]

    def test_no_matching_category(self):
        ds, report = ingest(os.path.join(DATA, "houston_fixture.csv"), HOUSTON_SCHEMA, {"category": "Volcano"},
                            HOUSTON)
        assert len(ds) == 0 and report.warnings
        assert "rows kept: 0" in report.to_text()

    def test_missing_column(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text("when,lat\n2017-08-24 00:00:00,29.7\n")
        with pytest.raises(ValueError, match="missing columns"):
            ingest(p)

    def test_delimiter_and_format(self, tmp_path):
        p = tmp_path / "raw.tsv"
        p.write_text("ts\ty\tx\tkind\n08/24/2017 01:00\t0.5\t0.5\tA\n08/24/2017 00:00\t0.2\t0.1\ta\n")
        schema = {"time": "ts", "lat": "y", "lon": "x", "category": "kind", "time_format": "%m/%d/%Y %H:%M",
                  "delimiter": "\t"}
        ds, report = ingest(p, schema, {"category": "A"}, GridSpec())
        np.testing.assert_array_equal(ds.t, [0.0, 3600.0])
        assert report.rows_out == 2
