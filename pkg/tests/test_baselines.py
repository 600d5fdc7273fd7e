import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsgad.baselines import (
    CusumConfig,
    cusum_detect,
    cusum_statistic,
    fit_cusum_config,
    spe_detect,
)
from tsgad.pca import fit_pca
from tsgad.scoring import metrics, threshold_for_fpr


class TestCusum:
    def test_constant_series_never_alarms(self):
        cfg = CusumConfig(target_mean=3.0, slack=0.1, threshold=1.0)
        npt.assert_array_equal(cusum_detect(np.full(50, 3.0), cfg), np.zeros(50))

    def test_hand_iterated_recurrence_with_reset(self):
        # mu0=0, k=0.5, h=2, eight ones: S+ walks 0.5,1.0,1.5,2.0,2.5 -> the
        # strict > rule first fires at the fifth step, then the reset restarts
        # the climb at 0.5
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=2.0, two_sided=False)
        flags = cusum_detect(np.ones(8), cfg)
        npt.assert_array_equal(flags, [0, 0, 0, 0, 1, 0, 0, 0])

    def test_tie_does_not_alarm(self):
        # S+ reaches exactly h and stays: never strictly exceeds
        cfg = CusumConfig(target_mean=0.0, slack=0.0, threshold=2.0, two_sided=False)
        series = np.array([2.0, 0.0, 0.0])
        npt.assert_array_equal(cusum_detect(series, cfg), [0, 0, 0])

    def test_one_sided_misses_downward_step(self):
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=2.0, two_sided=False)
        series = np.concatenate([np.zeros(10), np.full(20, -3.0)])
        npt.assert_array_equal(cusum_detect(series, cfg), np.zeros(30))

    def test_two_sided_catches_downward_step(self):
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=2.0, two_sided=True)
        series = np.concatenate([np.zeros(10), np.full(20, -3.0)])
        assert cusum_detect(series, cfg).sum() > 0

    def test_statistic_nonnegative(self):
        rng = np.random.default_rng(0)
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=5.0)
        stat = cusum_statistic(rng.normal(size=200), cfg)
        assert np.all(stat >= 0.0)

    def test_statistic_first_crossing_matches_first_alarm(self):
        rng = np.random.default_rng(1)
        series = np.concatenate([rng.normal(size=50), rng.normal(3.0, 1.0, 50)])
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=4.0)
        stat = cusum_statistic(series, cfg)
        alarms = cusum_detect(series, cfg)
        assert np.argmax(stat > 4.0) == np.argmax(alarms == 1)

    @given(st.floats(min_value=-100.0, max_value=100.0), st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_shift_equivariance(self, offset, seed):
        rng = np.random.default_rng(seed)
        series = rng.normal(size=80)
        base = CusumConfig(target_mean=0.0, slack=0.5, threshold=2.0)
        shifted = CusumConfig(target_mean=offset, slack=0.5, threshold=2.0)
        npt.assert_array_equal(
            cusum_detect(series, base), cusum_detect(series + offset, shifted)
        )

    def test_non_finite_input(self):
        cfg = CusumConfig(target_mean=0.0, slack=0.5, threshold=2.0)
        with pytest.raises(ValueError, match="non-finite"):
            cusum_detect(np.array([0.0, np.inf]), cfg)

    def test_fit_config_from_training_slice(self):
        rng = np.random.default_rng(2)
        train = rng.normal(5.0, 2.0, 5000)
        cfg = fit_cusum_config(train)
        assert cfg.target_mean == pytest.approx(5.0, abs=0.1)
        assert cfg.slack == pytest.approx(1.0, abs=0.1)     # 0.5 sigma
        assert cfg.threshold == pytest.approx(10.0, abs=0.5)  # 5 sigma

    def test_fit_config_constant_channel(self):
        cfg = fit_cusum_config(np.full(10, 1.0))
        assert cfg.threshold > 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CusumConfig(target_mean=0.0, slack=-0.1, threshold=1.0)
        with pytest.raises(ValueError):
            CusumConfig(target_mean=0.0, slack=0.1, threshold=0.0)


class TestSpeDetect:
    def test_full_rank_model_never_alarms(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(30, 3))
        model = fit_pca(data, 3)
        for threshold in (1e-12, 0.5, 10.0):
            assert spe_detect(model, data, threshold).sum() == 0

    def test_zero_threshold_flags_every_nonzero_residual(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(30, 3))
        model = fit_pca(data, 1)
        flags = spe_detect(model, data, 0.0)
        assert flags.sum() == 30

    def test_flags_monotone_in_threshold(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(40, 4))
        model = fit_pca(data, 2)
        test = rng.normal(size=(20, 4))
        previous = spe_detect(model, test, 0.0)
        for threshold in (0.5, 1.0, 2.0, 5.0):
            current = spe_detect(model, test, threshold)
            assert np.all(current <= previous)
            previous = current

    def test_detects_correlation_breaking_attack(self):
        # two strongly correlated channels; the attack decouples them
        rng = np.random.default_rng(6)
        t = np.arange(600)
        base = np.sin(2 * np.pi * t / 50)
        train = np.column_stack([base, 2.0 * base]) + rng.normal(0, 0.05, (600, 2))
        model = fit_pca(train, 1)

        holdout = np.column_stack([base, 2.0 * base]) + rng.normal(0, 0.05, (600, 2))
        test = np.column_stack([base, 2.0 * base]) + rng.normal(0, 0.05, (600, 2))
        truth = np.zeros(600, dtype=int)
        test[200:300, 1] = 0.4  # stuck sensor breaks the coupling
        truth[200:300] = 1

        from tsgad.pca import spe

        threshold = threshold_for_fpr(spe(model, holdout), 0.01)
        report = metrics(spe_detect(model, test, threshold), truth)
        assert report.f1 > 0.0
