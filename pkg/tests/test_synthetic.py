import numpy as np
import numpy.testing as npt
import pytest

from tsgad.ingest import CsvSchema, load_csv
from tsgad.synthetic import (
    AttackSpec,
    CoupledSensor,
    ScenarioSpec,
    SineSensor,
    SquareActuator,
    attack_mask,
    generate_scenario,
    save_scenario_csv,
)


def basic_spec(**overrides):
    base = dict(
        duration=200,
        variables=[
            SineSensor(period=40.0),
            SquareActuator(period=50.0, duty_cycle=0.4),
            CoupledSensor(source=0, gain=2.0, delay=3),
        ],
        noise_sigma=0.0,
        attacks=[],
        seed=1,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


class TestGenerateScenario:
    def test_no_attacks_all_labels_zero(self):
        series = generate_scenario(basic_spec())
        assert series.labels.sum() == 0
        assert series.values.shape == (200, 3)

    def test_stuck_value_zeroes_variance(self):
        spec = basic_spec(
            noise_sigma=0.05,
            attacks=[AttackSpec("stuck_value", target=0, start=50, duration=40)],
        )
        series = generate_scenario(spec)
        stuck = series.values[50:90, 0]
        assert stuck.var() == 0.0
        assert series.values[90:140, 0].var() > 0.0

    def test_coupled_column_matches_closed_form(self):
        spec = basic_spec()
        series = generate_scenario(spec)
        t = np.arange(200.0)
        expected = 2.0 * np.sin(2 * np.pi * (t - 3) / 40.0)
        npt.assert_allclose(series.values[:, 2], expected, atol=1e-12)

    def test_square_wave_duty_cycle(self):
        series = generate_scenario(basic_spec(duration=500))
        act = series.values[:, 1]
        assert set(np.unique(act)) == {0.0, 1.0}
        assert act.mean() == pytest.approx(0.4, abs=0.02)

    def test_same_seed_bitwise_identical(self):
        spec = basic_spec(noise_sigma=0.1)
        a = generate_scenario(spec)
        b = generate_scenario(spec)
        npt.assert_array_equal(a.values, b.values)

    def test_label_coverage_equals_attack_union(self):
        attacks = [
            AttackSpec("mean_shift", target=0, start=20, duration=10, magnitude=1.0),
            AttackSpec("spike", target=1, start=25, duration=10, magnitude=2.0),
            AttackSpec("stuck_value", target=2, start=100, duration=5),
        ]
        series = generate_scenario(basic_spec(attacks=attacks))
        expected = np.zeros(200, dtype=int)
        expected[20:35] = 1
        expected[100:105] = 1
        npt.assert_array_equal(series.labels, expected)

    def test_mean_shift_moves_interval(self):
        spec = basic_spec(
            attacks=[AttackSpec("mean_shift", target=0, start=40, duration=80, magnitude=5.0)]
        )
        series = generate_scenario(spec)
        clean = generate_scenario(basic_spec())
        npt.assert_allclose(series.values[40:120, 0] - clean.values[40:120, 0], 5.0)
        npt.assert_allclose(series.values[:40, 0], clean.values[:40, 0])

    def test_spike_alternates_sign(self):
        spec = basic_spec(
            attacks=[AttackSpec("spike", target=0, start=10, duration=4, magnitude=3.0)]
        )
        diff = generate_scenario(spec).values[10:14, 0] - generate_scenario(basic_spec()).values[10:14, 0]
        npt.assert_allclose(diff, [3.0, -3.0, 3.0, -3.0])

    def test_propagation_carries_attack_to_coupled_channel(self):
        attack = AttackSpec("mean_shift", target=0, start=50, duration=100, magnitude=4.0)
        isolated = generate_scenario(basic_spec(attacks=[attack]))
        propagated = generate_scenario(
            basic_spec(attacks=[attack], propagate_to_coupled=True)
        )
        # coupled channel (gain 2, delay 3) sees the shift only when enabled
        npt.assert_allclose(
            propagated.values[53:150, 2] - isolated.values[53:150, 2], 8.0
        )

    def test_coupled_labels_follow_delay_when_enabled(self):
        attack = AttackSpec("mean_shift", target=0, start=50, duration=20, magnitude=4.0)
        spec = basic_spec(attacks=[attack], label_coupled=True)
        mask = attack_mask(spec)
        npt.assert_array_equal(np.flatnonzero(mask[:, 2]), np.arange(53, 73))


class TestValidation:
    def test_attack_past_end(self):
        with pytest.raises(ValueError, match="past the scenario end"):
            basic_spec(attacks=[AttackSpec("spike", target=0, start=190, duration=20)])

    def test_bad_target(self):
        with pytest.raises(ValueError, match="out of range"):
            basic_spec(attacks=[AttackSpec("spike", target=9, start=0, duration=5)])

    def test_bad_kind(self):
        with pytest.raises(ValueError, match="unknown attack kind"):
            AttackSpec("drift", target=0, start=0, duration=5)

    def test_coupled_must_reference_earlier_variable(self):
        with pytest.raises(ValueError, match="earlier variable"):
            ScenarioSpec(
                duration=10,
                variables=[CoupledSensor(source=0), SineSensor(period=5.0)],
            )

    def test_noise_list_length(self):
        spec = basic_spec(noise_sigma=[0.1, 0.2])
        with pytest.raises(ValueError, match="noise_sigma"):
            generate_scenario(spec)


def test_csv_roundtrip_through_ingest(tmp_path):
    spec = basic_spec(
        noise_sigma=0.1,
        attacks=[AttackSpec("mean_shift", target=0, start=20, duration=30, magnitude=2.0)],
    )
    series = generate_scenario(spec)
    path = tmp_path / "scenario.csv"
    save_scenario_csv(series, path)
    loaded = load_csv(path, CsvSchema(timestamp_column="timestamp", label_column="label"))
    npt.assert_allclose(loaded.values, series.values, atol=0)
    npt.assert_array_equal(loaded.labels, series.labels)
    assert loaded.column_names == series.column_names
