import json
from collections import Counter
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solarcast import synthetic
from solarcast.dataset import (
    FEATURE_ORDER,
    SampleSet,
    batches,
    build_dataset,
    fit_standardization,
    load_records,
    read_dataset,
    split,
    standardize,
    write_dataset,
)
from solarcast.errors import ValidationError
from solarcast.ingest_service import enrich, store_record

NOW = datetime(2024, 3, 2, tzinfo=timezone.utc)


def make_samples(n, seed=0):
    rng = np.random.default_rng(seed)
    return SampleSet(rng.normal(size=(n, 7)), rng.uniform(0, 1000, n),
                     np.array([f"t{i:05d}" for i in range(n)], dtype=object))


def rows(samples):
    return sorted(tuple(x) + (y, t) for x, y, t in zip(samples.features.tolist(), samples.targets, samples.timestamps))


@pytest.fixture
def populated_root(station, data_root):
    reports = synthetic.station_reports(100, station=station, seed=2)
    for r in reports:
        store_record(enrich(r, station, NOW), data_root)
    return data_root, reports


def test_feature_order_is_frozen():
    assert FEATURE_ORDER == ("temp_f", "humidity_pct", "dew_point_f", "wind_speed_mph", "rain_in",
                             "barometer_inhg", "solar_altitude_pct")


class TestLoad:
    def test_round_trip_chronological(self, populated_root):
        root, reports = populated_root
        samples, skipped = load_records(root)
        assert len(samples) == 100 and skipped == []
        assert list(samples.timestamps) == sorted(samples.timestamps)
        np.testing.assert_array_equal(samples.targets, [r.solar_radiation_wm2 for r in reports])
        np.testing.assert_array_equal(samples.features[:, 0], [r.temp_f for r in reports])

    def test_target_and_time_not_in_features(self, populated_root):
        samples, _ = load_records(populated_root[0])
        assert samples.features.shape[1] == 7
        for i in range(7):
            assert not np.array_equal(samples.features[:, i], samples.targets)

    def test_empty_directory(self, data_root, caplog):
        samples, skipped = load_records(data_root)
        assert len(samples) == 0 and skipped == []
        assert "no record files" in caplog.text

    def test_one_corrupt_file_skipped(self, populated_root):
        root, _ = populated_root
        victim = sorted(root.glob("*.json"))[40]
        victim.write_text("{not json")
        samples, skipped = load_records(root)
        assert len(samples) == 99 and skipped == [victim]

    def test_too_many_corrupt_files(self, populated_root):
        root, _ = populated_root
        for p in sorted(root.glob("*.json"))[:11]:
            p.write_text(json.dumps({"oops": 1}))
        with pytest.raises(ValidationError, match="malformed"):
            load_records(root)

    def test_missing_root(self, tmp_path):
        with pytest.raises(OSError):
            load_records(tmp_path / "absent")


class TestSplit:
    def test_sizes_and_determinism(self):
        s = make_samples(100)
        a, b = split(s, 0.8, 7), split(s, 0.8, 7)
        assert (len(a.train), len(a.validation)) == (80, 20)
        assert rows(a.train) == rows(b.train)
        assert rows(SampleSet.concat(a.train, a.validation)) == rows(s)

    def test_minimal(self):
        ds = split(make_samples(2), 0.5, 0)
        assert (len(ds.train), len(ds.validation)) == (1, 1)

    def test_different_seeds_same_multiset(self):
        s = make_samples(100)
        a, b = split(s, 0.8, 1), split(s, 0.8, 2)
        assert rows(a.train) != rows(b.train)
        assert rows(SampleSet.concat(a.train, a.validation)) == rows(SampleSet.concat(b.train, b.validation))

    def test_too_few(self):
        with pytest.raises(ValidationError):
            split(make_samples(1), 0.5, 0)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_bounds(self, frac):
        with pytest.raises(ValidationError):
            split(make_samples(10), frac, 0)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 300), frac=st.floats(0.01, 0.99), seed=st.integers(0, 1000))
    def test_partition(self, n, frac, seed):
        s = make_samples(n, seed)
        ds = split(s, frac, seed)
        assert abs(len(ds.train) - n * frac) <= 1
        assert not set(ds.train.timestamps) & set(ds.validation.timestamps)
        assert len(ds.train) + len(ds.validation) == n


class TestBatches:
    def test_sizes(self):
        assert [len(y) for _, y in batches(make_samples(300), 128, 0)] == [128, 128, 44]

    def test_singletons(self):
        assert [len(y) for _, y in batches(make_samples(300), 1, 0)] == [1] * 300

    def test_rejects_zero(self):
        with pytest.raises(ValidationError):
            list(batches(make_samples(3), 0, 0))

    def test_reshuffles_per_seed(self):
        s = make_samples(50)
        a = np.concatenate([y for _, y in batches(s, 10, 0)])
        b = np.concatenate([y for _, y in batches(s, 10, 1)])
        assert not np.array_equal(a, b)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 400), bs=st.integers(1, 150), seed=st.integers(0, 10**6))
    def test_epoch_is_permutation(self, n, bs, seed):
        s = make_samples(n, seed % 17)
        got = list(batches(s, bs, seed))
        assert all(X.shape[1] == 7 for X, _ in got)
        X = np.concatenate([x for x, _ in got])
        y = np.concatenate([t for _, t in got])
        assert Counter(map(tuple, np.column_stack([X, y]).tolist())) == Counter(
            map(tuple, np.column_stack([s.features, s.targets]).tolist())
        )


class TestStandardize:
    def test_statistics(self):
        ds, stats = standardize(split(make_samples(500), 0.8, 3))
        np.testing.assert_array_less(np.abs(ds.train.features.mean(axis=0)), 1e-9)
        np.testing.assert_allclose(ds.train.features.std(axis=0), 1.0, atol=1e-6)
        # validation uses train statistics, so it is not exactly centred
        assert np.abs(ds.validation.features.mean(axis=0)).max() > 1e-9

    def test_constant_feature_unchanged(self):
        s = make_samples(20)
        s.features[:, 4] = 0.25
        with pytest.warns(UserWarning, match="rain_in"):
            ds, stats = standardize(split(s, 0.5, 0))
        assert (ds.train.features[:, 4] == 0.25).all()

    def test_not_idempotent(self):
        s = make_samples(50)
        stats = fit_standardization(s.features + 10.0)
        once = stats.apply(s.features + 10.0)
        assert not np.allclose(stats.apply(once), once)


class TestDatasetFile:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = split(make_samples(64), 0.75, 4)
        path = write_dataset(ds, tmp_path / "d.csv")
        back = read_dataset(path)
        for a, b in ((ds.train, back.train), (ds.validation, back.validation)):
            assert a.features.tobytes() == b.features.tobytes()
            assert a.targets.tobytes() == b.targets.tobytes()
            assert list(a.timestamps) == list(b.timestamps)
        assert back.split_seed == 4 and back.train_fraction == 0.75

    def test_store_load_fixed_point(self, tmp_path):
        ds = split(make_samples(30), 0.8, 1)
        once = read_dataset(write_dataset(ds, tmp_path / "a.csv"))
        twice = read_dataset(write_dataset(once, tmp_path / "b.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert twice.train.features.tobytes() == once.train.features.tobytes()

    def test_header_names_features_target_and_timestamp(self, tmp_path):
        path = write_dataset(split(make_samples(4), 0.5, 0), tmp_path / "d.csv")
        header = path.read_text().splitlines()[0].split(",")
        assert header[:7] == list(FEATURE_ORDER) and header[7:] == ["solar_radiation_wm2", "timestamp", "split"]

    def test_rejects_permuted_header(self, tmp_path):
        path = write_dataset(split(make_samples(4), 0.5, 0), tmp_path / "d.csv")
        lines = path.read_text().splitlines()
        cols = lines[0].split(",")
        cols[0], cols[1] = cols[1], cols[0]
        path.write_text("\n".join([",".join(cols)] + lines[1:]) + "\n")
        with pytest.raises(ValidationError):
            read_dataset(path)

    def test_build_from_records(self, populated_root, tmp_path):
        root, _ = populated_root
        ds, stats, skipped = build_dataset(root, tmp_path / "d.csv", 0.8, 5, standardize_features=True)
        back = read_dataset(tmp_path / "d.csv")
        assert len(back.train) == 80 and len(back.validation) == 20
        np.testing.assert_array_equal(back.stats.mean, stats.mean)
