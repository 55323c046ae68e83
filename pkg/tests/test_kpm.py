import numpy as np
import pytest

from ricguard.kpm import (
    CSV_COLUMNS,
    FeatureScaler,
    KpmRecord,
    ScalerError,
    build_windows,
    fit_scaler,
    read_dataset_csv,
    records_to_matrix,
    write_dataset_csv,
)


def rec(ts, ue=0, values=None):
    if values is None:
        base = ts / 1000
        values = (1.0 + base, 2.0 + 2 * base, 3.0 + base, 4.0 + base,
                  5.0 + 3 * base, 6.0 + base)
    return KpmRecord.from_features(ts, ue, values)


class TestKpmRecord:
    def test_feature_order_is_fixed(self):
        r = KpmRecord.from_features(0, 1, (10, 20, 30, 40, 50, 60))
        assert r.ue_thp_ul == 10
        assert r.prb_used_ul == 20
        assert r.ue_thp_dl == 30
        assert r.prb_used_dl == 40
        assert r.tot_nbr_ul_per_sec == 50
        assert r.tot_nbr_dl_per_sec == 60

    def test_negative_feature_rejected(self):
        with pytest.raises(ValueError):
            KpmRecord.from_features(0, 1, (1, 2, -3, 4, 5, 6))

    def test_wrong_arity_rejected(self):
        with pytest.raises(ValueError):
            KpmRecord.from_features(0, 1, (1, 2, 3))


class TestScaler:
    def test_population_convention(self):
        records = [rec(0, values=(0, 1, 1, 1, 1, 1)), rec(1000, values=(2, 1.5, 1, 1, 1, 1))]
        # avoid constant features
        records = [
            KpmRecord.from_features(0, 1, (0, 1, 2, 3, 4, 5)),
            KpmRecord.from_features(1000, 1, (2, 3, 4, 5, 6, 7)),
        ]
        scaler = fit_scaler(records)
        assert scaler.mean[0] == pytest.approx(1.0)
        assert scaler.std[0] == pytest.approx(1.0)  # population std of {0, 2}

    def test_round_trip_identity(self):
        rng = np.random.default_rng(0)
        records = [
            KpmRecord.from_features(t * 1000, 1, np.abs(rng.standard_normal(6)) + 0.1)
            for t in range(20)
        ]
        scaler = fit_scaler(records)
        matrix = records_to_matrix(records)
        back = scaler.denormalize(scaler.normalize(matrix))
        assert np.max(np.abs(back - matrix)) < 1e-12

    def test_constant_feature_named_in_error(self):
        records = [
            KpmRecord.from_features(0, 1, (1, 5, 2, 3, 4, 5)),
            KpmRecord.from_features(1000, 1, (2, 5, 4, 5, 6, 7)),
        ]
        with pytest.raises(ScalerError, match="PrbUsedUl"):
            fit_scaler(records)

    def test_too_few_records_rejected(self):
        with pytest.raises(ScalerError):
            fit_scaler([rec(0)])

    def test_benign_validation_roughly_zero_mean(self):
        # independent oracle: refit statistics on a held-out split
        rng = np.random.default_rng(7)
        base = np.array([10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
        all_records = [
            KpmRecord.from_features(t * 1000, 1, base + rng.standard_normal(6))
            for t in range(400)
        ]
        train, held_out = all_records[:320], all_records[320:]
        scaler = fit_scaler(train)
        normalized = scaler.normalize(records_to_matrix(held_out))
        assert np.max(np.abs(normalized.mean(axis=0))) < 0.5

    def test_invalid_stats_rejected(self):
        with pytest.raises(ScalerError):
            FeatureScaler(mean=np.zeros(6), std=np.zeros(6))


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        records = [
            KpmRecord.from_features(t * 1000, t % 3, np.abs(rng.standard_normal(6)))
            for t in range(30)
        ]
        path = tmp_path / "data.csv"
        write_dataset_csv(records, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert read_dataset_csv(path) == records

    def test_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_dataset_csv(path)


class TestBuildWindows:
    def test_shapes_and_target_alignment(self):
        records = [rec(t * 1000) for t in range(15)]
        scaler = fit_scaler(records)
        inputs, targets = build_windows(records, scaler)
        assert inputs.shape == (5, 10, 6)
        assert targets.shape == (5, 6)
        expected_target = scaler.normalize(records[10].features())
        assert np.allclose(targets[0], expected_target)

    def test_gap_breaks_windows(self):
        records = [rec(t * 1000) for t in range(12) if t != 5]
        scaler = fit_scaler(records)
        inputs, _ = build_windows(records, scaler)
        assert inputs.shape[0] == 0  # no run of 11 consecutive ticks survives

    def test_streams_grouped_per_ue(self):
        records = [rec(t * 1000, ue=0) for t in range(12)]
        records += [rec(t * 1000, ue=1) for t in range(12)]
        scaler = fit_scaler(records)
        inputs, _ = build_windows(records, scaler)
        assert inputs.shape[0] == 4  # two windows per UE, never mixed
