"""Tests for the experiment task pipelines on small problems."""

import csv
import json
import math

import pytest

from ndo_sim.artifacts import ArtifactBundle
from ndo_sim.errors import ConfigError
from ndo_sim.experiment import parse_config
from ndo_sim.presets import catalog
from ndo_sim.semiclassical import steady_amplitudes, to_quantum_frame
from ndo_sim.tasks import REFERENCE_TOLERANCE, TASK_RUNNERS, run_task

SMALL_GRID = {"extent": 4.0, "points": 41}
NULLSPACE = {"steady_method": "nullspace"}


@pytest.fixture
def bundle(tmp_path):
    """An empty bundle in a temporary directory."""
    return ArtifactBundle(tmp_path)


def _config(**data):
    return parse_config(data)


def _bistable(engine):
    return _config(
        name="bistable",
        task="bistability",
        engine=engine,
        model={"delta": -8.0, "chi": 2.0, "omega_drive": 2.7},
        fock_dim=20,
        t_final=0.2,
        samples=3,
        grid=SMALL_GRID,
        solver=NULLSPACE,
        ensemble={"trajectories": 4, "dt": 1e-3},
        poincare={"points": 5, "transient": 2},
    )


def _pulsed(task, **extra):
    data = {
        "name": task,
        "task": task,
        "model": {"delta": -1.0, "chi": 0.5, "omega_drive": 1.0},
        "drive": {"kind": "pulse_train", "t0": 0.5, "width": 0.2, "period": 1.0},
        "fock_dim": 10,
        "t_final": 2.0,
        "samples": 5,
        "grid": SMALL_GRID,
    }
    data.update(extra)
    return parse_config(data)


class TestDispatch:
    """Test task lookup."""

    def test_every_task_registered(self):
        """Test that the runner table covers all tasks."""
        assert set(TASK_RUNNERS) == {
            "bistability", "dynamics", "chaos", "hysteresis", "amplitude_sweep",
            "scaling", "interference", "purity", "lyapunov_sweep", "minmax",
        }

    def test_run_task_dispatches(self, bundle):
        """Test that run_task calls the configured pipeline."""
        config = _config(task="hysteresis", engine="semiclassical",
                         model={"delta": -15.0, "chi": 2.0}, sweep={"omega_values": [0.5, 1.0]})

        summary = run_task(config, bundle)

        assert "window" in summary
        assert bundle.files == ["hysteresis.csv"]


class TestBistability:
    """Test the constant-drive steady-state task."""

    def test_semiclassical(self, bundle):
        """Test fixed points and the Poincare section."""
        summary = run_task(_bistable("semiclassical"), bundle)

        classical = summary["semiclassical"]
        assert classical["bistable"] is True
        assert [root["stable"] for root in classical["roots"]] == [True, False, True]
        assert classical["stable_count"] == 2
        assert set(bundle.files) == {"steady_roots.csv", "poincare.csv"}

    def test_master(self, bundle):
        """Test the steady-state distribution, Wigner grid and exact mean."""
        summary = run_task(_bistable("master"), bundle)

        master = summary["master"]
        assert master["relative_error"] < 1e-2
        assert 0.0 < master["purity"] <= 1.0
        assert {"number_distribution.csv", "wigner.csv"} <= set(bundle.files)
        assert "wigner" in bundle.grids

    def test_all_engines_cross_check(self, bundle, tmp_path):
        """Test the cross-engine comparison file."""
        summary = run_task(_bistable("all"), bundle)

        cross = json.loads((tmp_path / "cross_check.json").read_text())
        assert cross["stable_root_count"] == 2
        assert cross["master_vs_qsd"]["trajectories"] == 4
        assert summary["qsd"]["failed_seeds"] == []
        assert {"qsd_ensemble.csv", "master_dynamics.csv"} <= set(bundle.files)

    def test_rejects_pulse_train(self, bundle):
        """Test that bistability needs a constant drive."""
        with pytest.raises(ConfigError) as exc_info:
            run_task(_pulsed("bistability"), bundle)

        assert exc_info.value.field == "drive.kind"


class TestDynamics:
    """Test time evolution tasks."""

    def test_master_and_classical(self, bundle):
        """Test master dynamics, snapshots and the classical section."""
        config = _pulsed(
            "dynamics",
            engine="all",
            ensemble={"trajectories": 2, "dt": 1e-3},
            sweep={"snapshot_times": [1.0]},
            poincare={"points": 4, "transient": 1},
        )
        summary = run_task(config, bundle)

        assert summary["master"]["final_purity"] <= 1.0 + 1e-9
        assert summary["semiclassical"]["poincare_t0"] == 0.0
        assert {
            "master_dynamics.csv", "wigner_master.csv", "wigner_master_t1.csv",
            "wigner_qsd.csv", "wigner_qsd_t1.csv", "classical_amplitude.csv", "poincare.csv",
            "qsd_ensemble.csv", "cross_check.json",
        } <= set(bundle.files)

    def test_snapshot_off_grid(self, bundle):
        """Test that snapshot times must lie on the output grid."""
        config = _pulsed("dynamics", sweep={"snapshot_times": [0.3]})

        with pytest.raises(ConfigError) as exc_info:
            run_task(config, bundle)

        assert exc_info.value.field == "sweep.snapshot_times"

    def test_chaos_reference(self, bundle):
        """Test the comparison with reference values."""
        config = _pulsed("chaos", reference={"mean_excitation": 1.0, "unrelated": 2.0})
        summary = run_task(config, bundle)

        comparison = summary["reference_comparison"]
        assert set(comparison) == {"mean_excitation"}
        assert comparison["mean_excitation"]["difference"] == pytest.approx(
            summary["master"]["final_mean"] - 1.0
        )
        row = comparison["mean_excitation"]
        assert row["tolerance"] == REFERENCE_TOLERANCE
        assert row["within_tolerance"] is (abs(row["difference"]) <= REFERENCE_TOLERANCE)
        assert summary["reference_deviations"] == ([] if row["within_tolerance"] else ["mean_excitation"])

    def test_chaos_reference_outside_tolerance(self, bundle):
        """Test that values far from the reference are listed as deviations."""
        config = _pulsed("chaos", reference={"mean_excitation": 100.0, "max_excitation": 100.0})
        summary = run_task(config, bundle)

        assert summary["reference_deviations"] == ["max_excitation", "mean_excitation"]
        assert summary["reference_comparison"]["mean_excitation"]["within_tolerance"] is False


class TestSweeps:
    """Test amplitude, scaling and Lyapunov sweeps."""

    def test_hysteresis_with_master_check(self, bundle):
        """Test that the steady state matches the exact mean at a check amplitude."""
        config = _config(
            task="hysteresis",
            model={"delta": -15.0, "chi": 2.0},
            fock_dim=30,
            solver=NULLSPACE,
            sweep={"omega_values": [0.5, 1.0, 2.0], "check_omegas": [1.0]},
        )
        summary = run_task(config, bundle)

        assert summary["max_relative_error"] < 1e-3
        assert "master_check.csv" in bundle.files

    def test_hysteresis_needs_two_values(self, bundle):
        """Test that a single amplitude is rejected."""
        config = _config(task="hysteresis", sweep={"omega_values": [1.0]})

        with pytest.raises(ConfigError):
            run_task(config, bundle)

    def test_amplitude_sweep(self, bundle):
        """Test one Wigner grid per amplitude."""
        config = _config(
            task="amplitude_sweep",
            model={"delta": -8.0, "chi": 2.0},
            fock_dim=20,
            grid=SMALL_GRID,
            solver=NULLSPACE,
            sweep={"omega_values": [0.5, 2.7]},
        )
        summary = run_task(config, bundle)

        assert summary["bistable_omegas"] == [2.7]
        assert {"wigner_omega0.5.csv", "wigner_omega2.7.csv", "amplitude_sweep.csv"} <= set(bundle.files)

    def test_scaling(self, bundle):
        """Test the classical scaling identity through the task."""
        config = _config(
            task="scaling",
            engine="semiclassical",
            model={"delta": -8.0, "chi": 2.0, "omega_drive": 2.7},
            t_final=2.0,
            samples=11,
            poincare={"alpha0": [0.3, -0.2]},
            sweep={"scale_factors": [2.0, 0.5]},
        )
        summary = run_task(config, bundle)

        assert summary["max_classical_error"] < 1e-6
        assert summary["peak_counts"] == {"1": None, "2": None, "0.5": None}

    def test_lyapunov_sweep_linear(self, bundle):
        """Test that a linear oscillator gives the damping rate in both conventions."""
        config = _config(
            task="lyapunov_sweep",
            engine="semiclassical",
            model={"delta": -1.0, "chi": 0.0},
            poincare={"period": 1.0},
            lyapunov={"transient_periods": 1.0, "measure_periods": 5.0},
            sweep={"omega_values": [0.5, 1.0], "compare_conventions": True},
        )
        summary = run_task(config, bundle)

        with open(bundle.root / "lyapunov.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [float(row["L_t0_half"]) for row in rows] == pytest.approx([-0.5, -0.5], abs=1e-4)
        assert [float(row["L_t0_full"]) for row in rows] == pytest.approx([-1.0, -1.0], abs=1e-4)
        assert all(row["converged_t0_half"] == "true" for row in rows)
        assert set(summary["series"]) == {"t0_half", "t0_full"}
        assert summary["series"]["t0_full"]["crossings"] == []
        assert summary["series"]["t0_half"]["first_onset"] is None


class TestPulsedAnalyses:
    """Test tasks built on over-transient pulsed evolution."""

    def test_interference(self, bundle):
        """Test pulsed snapshots alongside the constant-drive contrast."""
        config = _pulsed("interference", solver=NULLSPACE, sweep={"widths": [0.2, 0.3], "periods": [1.0, 1.0]})
        summary = run_task(config, bundle)

        assert set(summary) == {"T0.2_tau1", "T0.3_tau1", "constant"}
        assert all(row["negativity_volume"] >= -1e-6 for row in summary.values())
        assert "wigner_constant.csv" in bundle.files

    def test_interference_unpaired(self, bundle):
        """Test that widths and periods must pair up."""
        config = _pulsed("interference", sweep={"widths": [0.2, 0.3], "periods": [1.0]})

        with pytest.raises(ConfigError):
            run_task(config, bundle)

    def test_purity(self, bundle):
        """Test purity scans over width and period."""
        config = _pulsed("purity", sweep={"widths": [0.1, 0.2], "periods": [1.0, 1.5]})
        summary = run_task(config, bundle)

        assert summary["fixed_period"] == 1.0
        assert summary["fixed_width"] == 0.2
        assert {"purity_vs_width.csv", "purity_vs_period.csv"} <= set(bundle.files)

    def test_minmax(self, bundle):
        """Test period extrema at each amplitude."""
        config = _pulsed("minmax", sweep={"omega_values": [0.5, 1.0]})
        summary = run_task(config, bundle)

        low, high = summary["n_min_range"], summary["n_max_range"]
        assert 0.0 <= low[0] <= high[1]
        assert "minmax.csv" in bundle.files

    def test_minmax_rejects_constant_drive(self, bundle):
        """Test that minmax needs a pulse train."""
        config = _config(task="minmax", sweep={"omega_values": [1.0]})

        with pytest.raises(ConfigError):
            run_task(config, bundle)


def _preset(name, **sections):
    data = catalog.get(name).to_dict()
    for key, value in sections.items():
        data[key].update(value)
    return parse_config(data)


@pytest.mark.slow
class TestPresetRuns:
    """Presets at their full scale."""

    def test_bistable_peaks_at_stable_roots(self, bundle):
        """Test two Wigner peaks, each next to a stable classical amplitude."""
        config = catalog.get("fig2").with_overrides(engine="master")
        summary = run_task(config, bundle)

        peaks = summary["master"]["wigner_peaks"]
        assert len(peaks) == 2
        for root in steady_amplitudes(config.params).stable:
            alpha = to_quantum_frame(root.alpha)
            distance = min(math.hypot(peak["x"] - alpha.real, peak["y"] - alpha.imag) for peak in peaks)
            assert distance < 0.5

    def test_scaling_suppresses_a_peak(self, bundle):
        """Test that the second Wigner peak disappears at the largest scale factor."""
        summary = run_task(catalog.get("fig4"), bundle)

        assert summary["peak_counts"]["2"] == 2
        assert summary["peak_counts"]["3"] == 1
        assert summary["max_classical_error"] < 1e-6

    def test_interference_negativity(self, bundle):
        """Test negative Wigner ranges under pulses and none under the constant drive."""
        summary = run_task(catalog.get("fig5"), bundle)

        pulsed = summary["T0.5_tau2"]
        assert pulsed["wigner_min"] < -0.01
        assert pulsed["negativity_volume"] > 0.0
        assert summary["constant"]["negativity_volume"] < 1e-2

    def test_purity_trends(self, bundle):
        """Test that short pulses and wide separations keep the state pure."""
        config = _preset("fig6", sweep={"widths": [0.1, 1.0], "periods": [1.0, 5.0]})
        summary = run_task(config, bundle)

        assert summary["width_trend"] < 0.0
        assert summary["period_trend"] > 0.0

    def test_chaos_onset(self, bundle):
        """Test the sign change of the exponent and the transient window that follows it."""
        summary = run_task(catalog.get("fig13"), bundle)

        series = summary["series"]
        half = [series["max_half"], series["min_half"]]
        assert any(s["first_onset"] is not None and 11.5 <= s["first_onset"] <= 13.5 for s in half)
        assert any(
            low <= 19.56 and high >= 17.61 for s in half for low, high in s["negative_windows"]
        )
        assert series["max_full"]["first_onset"] is None
        assert series["min_full"]["first_onset"] is None

    @pytest.mark.parametrize(
        "name, expected",
        [("fig7", 5.97), ("fig8", 6.84), ("fig9", 7.78), ("fig10", 6.42)],
    )
    def test_chaotic_means(self, bundle, name, expected):
        """Test the excitation at t=100 and the flagged mismatch with the quoted means."""
        summary = run_task(catalog.get(name).with_overrides(engine="master"), bundle)

        assert summary["master"]["final_mean"] == pytest.approx(expected, abs=0.05)
        assert "mean_excitation" in summary["reference_deviations"]

    def test_chaotic_section_is_scattered(self, bundle):
        """Test that the classical section at the shortest pulses fills a cloud of points."""
        summary = run_task(catalog.get("fig10").with_overrides(engine="semiclassical"), bundle)

        classical = summary["semiclassical"]
        assert classical["poincare_distinct_points"] > 300
        assert classical["poincare_spread"] > 0.1
