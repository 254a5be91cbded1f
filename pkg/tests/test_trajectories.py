"""Tests for quantum state diffusion trajectories."""

import numpy as np
import pytest
from scipy.linalg import expm

from ndo_sim.errors import InvalidStateError, StepFailureError
from ndo_sim.master import evolve_density
from ndo_sim.model import (
    ConstantDrive,
    ModelParams,
    coherent_state,
    fock_state,
    hamiltonian,
    make_fock_space,
    projector,
)
from ndo_sim.trajectories import (
    SEED_MASK,
    QSDConfig,
    TrajectoryRecord,
    calibrate_dt,
    dwell_levels,
    ensemble_run,
    excitation_histogram,
    qsd_step,
    run_trajectory,
    seed_stream,
)


@pytest.fixture
def space():
    """A small Fock space."""
    return make_fock_space(10)


@pytest.fixture
def bistable():
    """Parameters of the bistable regime."""
    return ModelParams(delta=-8.0, chi=2.0, omega_drive=2.7)


@pytest.fixture
def grid():
    """A short output grid."""
    return np.linspace(0.0, 0.2, 5)


class TestQSDConfig:
    """Test integration settings."""

    def test_defaults(self):
        """Test the default step and stream settings."""
        cfg = QSDConfig()

        assert cfg.dt == 2e-4
        assert cfg.substeps == 1
        assert cfg.noise_refine == 1
        assert cfg.workers == 1

    @pytest.mark.parametrize("dt", [0.0, -1e-3])
    def test_rejects_nonpositive_dt(self, dt):
        """Test that dt <= 0 raises."""
        with pytest.raises(ValueError):
            QSDConfig(dt=dt)

    def test_rejects_zero_substeps(self):
        """Test that substeps must be at least one."""
        with pytest.raises(ValueError):
            QSDConfig(substeps=0)


class TestSingleStep:
    """Test the one-step update."""

    def test_normalized(self, space, bistable):
        """Test that a step returns a normalized state."""
        psi = coherent_state(space, 0.5)
        stepped = qsd_step(psi, 0.0, 1e-3, np.array([0.02 + 0.01j]), space, bistable, ConstantDrive())

        assert np.linalg.norm(stepped) == pytest.approx(1.0)

    def test_vacuum_fixed_without_drive(self, space):
        """Test that the undriven vacuum does not move."""
        p = ModelParams(delta=1.0, chi=1.0, omega_drive=0.0)
        psi = fock_state(space, 0)
        stepped = qsd_step(psi, 0.0, 1e-2, np.array([0.3j]), space, p, ConstantDrive())

        np.testing.assert_allclose(stepped, psi)

    def test_noiseless_step_is_unitary_to_second_order(self, space):
        """Test the deterministic, nearly undamped limit against exp(-i H dt)."""
        p = ModelParams(delta=-1.0, chi=0.5, omega_drive=1.0, gamma=1e-12)
        psi = coherent_state(space, 0.5)
        dt = 1e-4
        stepped = qsd_step(psi, 0.0, dt, np.zeros(1), space, p, ConstantDrive())
        exact = expm(-1j * hamiltonian(space, p, ConstantDrive(), 0.0) * dt) @ psi

        assert np.linalg.norm(stepped - exact) < 1e-5

    def test_top_levels_stay_empty_at_large_dim(self, bistable):
        """Test that large Kerr energies at the truncation edge do not feed a runaway."""
        space = make_fock_space(30)
        record = run_trajectory(
            fock_state(space, 0), np.linspace(0.0, 2.0, 21), 1, space, bistable, ConstantDrive(), QSDConfig(dt=2e-4)
        )

        assert np.all(record.excitation < 8.0)

    def test_noise_shape(self, space, bistable):
        """Test that one increment per channel is required."""
        with pytest.raises(ValueError):
            qsd_step(fock_state(space, 0), 0.0, 1e-3, np.zeros(2), space, bistable, ConstantDrive())

    def test_thermal_bath_has_two_channels(self, space):
        """Test that n_bath > 0 adds a second noise channel."""
        p = ModelParams(delta=0.0, chi=1.0, omega_drive=0.0, n_bath=0.2)
        stepped = qsd_step(fock_state(space, 1), 0.0, 1e-3, np.zeros(2), space, p, ConstantDrive())

        assert np.linalg.norm(stepped) == pytest.approx(1.0)

    def test_rejects_nonpositive_dt(self, space, bistable):
        """Test that dt must be positive."""
        with pytest.raises(ValueError):
            qsd_step(fock_state(space, 0), 0.0, 0.0, np.zeros(1), space, bistable, ConstantDrive())

    def test_norm_collapse(self, space):
        """Test that a vanishing norm raises a step failure."""
        p = ModelParams(delta=0.0, chi=0.0, omega_drive=0.0)
        with pytest.raises(StepFailureError):
            qsd_step(fock_state(space, 1), 0.0, 2.0, np.zeros(1), space, p, ConstantDrive())


class TestTrajectory:
    """Test single seeded trajectories."""

    def test_reproducible(self, space, bistable, grid):
        """Test that the same seed gives the same path."""
        cfg = QSDConfig(dt=1e-3)
        a = run_trajectory(fock_state(space, 0), grid, 11, space, bistable, ConstantDrive(), cfg)
        b = run_trajectory(fock_state(space, 0), grid, 11, space, bistable, ConstantDrive(), cfg)

        np.testing.assert_array_equal(a.excitation, b.excitation)

    def test_negative_seed_wraps_to_64_bits(self, space, bistable, grid):
        """Test that a negative seed drives the stream of its unsigned 64-bit image."""
        cfg = QSDConfig(dt=1e-3)
        a = run_trajectory(fock_state(space, 0), grid, -1, space, bistable, ConstantDrive(), cfg)
        b = run_trajectory(fock_state(space, 0), grid, SEED_MASK, space, bistable, ConstantDrive(), cfg)

        assert seed_stream(-1) == SEED_MASK
        assert a.seed == -1
        np.testing.assert_array_equal(a.excitation, b.excitation)

    def test_seeds_differ(self, space, bistable, grid):
        """Test that different seeds give different paths."""
        cfg = QSDConfig(dt=1e-3)
        a = run_trajectory(fock_state(space, 0), grid, 1, space, bistable, ConstantDrive(), cfg)
        b = run_trajectory(fock_state(space, 0), grid, 2, space, bistable, ConstantDrive(), cfg)

        assert not np.array_equal(a.excitation, b.excitation)

    def test_snapshots_normalized(self, space, bistable, grid):
        """Test that stored states stay normalized."""
        cfg = QSDConfig(dt=1e-3, snapshot_times=(0.1, 0.2))
        record = run_trajectory(fock_state(space, 0), grid, 3, space, bistable, ConstantDrive(), cfg)

        assert set(record.snapshots) == {0.1, 0.2}
        for psi in record.snapshots.values():
            assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-10)

    def test_snapshot_off_grid(self, space, bistable, grid):
        """Test that snapshots must fall on the output grid."""
        cfg = QSDConfig(dt=1e-3, snapshot_times=(0.07,))
        with pytest.raises(ValueError):
            run_trajectory(fock_state(space, 0), grid, 3, space, bistable, ConstantDrive(), cfg)

    def test_rejects_unnormalized_state(self, space, bistable, grid):
        """Test that the initial state must be normalized."""
        with pytest.raises(InvalidStateError):
            run_trajectory(2.0 * fock_state(space, 0), grid, 1, space, bistable, ConstantDrive())

    def test_rejects_decreasing_grid(self, space, bistable):
        """Test that the output grid must increase."""
        with pytest.raises(ValueError):
            run_trajectory(fock_state(space, 0), [0.0, 0.2, 0.1], 1, space, bistable, ConstantDrive())


class TestEnsemble:
    """Test ensemble runs and their reduction."""

    def test_partition_invariance(self, space, bistable, grid):
        """Test that merging disjoint runs reproduces the full ensemble."""
        cfg = QSDConfig(dt=1e-3, snapshot_times=(0.2,))
        psi0 = fock_state(space, 0)
        whole = ensemble_run(psi0, grid, [1, 2, 3, 4], space, bistable, ConstantDrive(), cfg)
        merged = ensemble_run(psi0, grid, [3, 1], space, bistable, ConstantDrive(), cfg).merge(
            ensemble_run(psi0, grid, [4, 2], space, bistable, ConstantDrive(), cfg)
        )

        assert merged.seeds == [1, 2, 3, 4]
        np.testing.assert_allclose(merged.mean_excitation, whole.mean_excitation, rtol=0, atol=1e-12)
        np.testing.assert_allclose(merged.density_at(0.2), whole.density_at(0.2), rtol=0, atol=1e-12)

    def test_worker_count_invariance(self, space, bistable, grid):
        """Test that process parallelism does not change the result."""
        psi0 = fock_state(space, 0)
        serial = ensemble_run(psi0, grid, range(6), space, bistable, ConstantDrive(), QSDConfig(dt=1e-3))
        parallel = ensemble_run(
            psi0, grid, range(6), space, bistable, ConstantDrive(), QSDConfig(dt=1e-3, workers=2)
        )

        np.testing.assert_allclose(parallel.mean_excitation, serial.mean_excitation, rtol=0, atol=1e-12)

    def test_density_snapshot(self, space, bistable, grid):
        """Test that averaged projectors form a density matrix."""
        cfg = QSDConfig(dt=1e-3, snapshot_times=(0.2,))
        result = ensemble_run(fock_state(space, 0), grid, range(5), space, bistable, ConstantDrive(), cfg)
        rho = result.density_at(0.2)

        assert np.trace(rho).real == pytest.approx(1.0)
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)

    def test_density_at_unknown_time(self, space, bistable, grid):
        """Test that a missing snapshot raises KeyError."""
        result = ensemble_run(fock_state(space, 0), grid, [1], space, bistable, ConstantDrive(), QSDConfig(dt=1e-3))

        with pytest.raises(KeyError):
            result.density_at(0.1)

    def test_merge_overlap(self, space, bistable, grid):
        """Test that overlapping seed sets cannot be merged."""
        cfg = QSDConfig(dt=1e-3)
        a = ensemble_run(fock_state(space, 0), grid, [1, 2], space, bistable, ConstantDrive(), cfg)
        b = ensemble_run(fock_state(space, 0), grid, [2, 3], space, bistable, ConstantDrive(), cfg)

        with pytest.raises(ValueError):
            a.merge(b)

    @pytest.mark.parametrize("seeds", [[], [1, 1], [-1, SEED_MASK]])
    def test_invalid_seeds(self, space, bistable, grid, seeds):
        """Test that empty seed lists and seeds sharing a stream are rejected."""
        with pytest.raises(ValueError):
            ensemble_run(fock_state(space, 0), grid, seeds, space, bistable, ConstantDrive())

    def test_single_seed_has_zero_error(self, space, bistable, grid):
        """Test the standard error of a one-member ensemble."""
        result = ensemble_run(fock_state(space, 0), grid, [5], space, bistable, ConstantDrive(), QSDConfig(dt=1e-3))

        assert result.count == 1
        np.testing.assert_array_equal(result.std_error, np.zeros(grid.size))

    def test_decay_matches_master(self):
        """Test that the ensemble mean of a decaying |1> follows exp(-t)."""
        space = make_fock_space(4)
        p = ModelParams(delta=0.0, chi=1.0, omega_drive=0.0)
        times = np.linspace(0.0, 1.0, 6)
        result = ensemble_run(fock_state(space, 1), times, range(200), space, p, ConstantDrive(), QSDConfig(dt=1e-3))

        assert result.mean_excitation[0] == pytest.approx(1.0)
        assert np.all(np.abs(result.mean_excitation - np.exp(-times)) <= 4 * result.std_error + 5e-3)


class TestCalibration:
    """Test the coupled coarse/fine step-size calibration."""

    def test_converges_immediately_without_dynamics(self, space, grid):
        """Test that a stationary vacuum needs no refinement."""
        p = ModelParams(delta=0.0, chi=1.0, omega_drive=0.0)
        result = calibrate_dt(fock_state(space, 0), grid, [1, 2], space, p, ConstantDrive(), QSDConfig(dt=1e-2))

        assert result.converged
        assert result.dt == 1e-2
        assert result.drifts == [(1e-2, 0.0)]

    def test_records_every_halving(self, space, bistable, grid):
        """Test that an unreachable tolerance halves dt the allowed number of times."""
        result = calibrate_dt(
            fock_state(space, 0), grid, [1, 2], space, bistable, ConstantDrive(),
            QSDConfig(dt=1e-2), tol=0.0, max_halvings=2,
        )

        assert not result.converged
        assert [dt for dt, _ in result.drifts] == [1e-2, 5e-3, 2.5e-3]


class TestDwellLevels:
    """Test histogram modes of a trajectory."""

    @pytest.fixture
    def switching_record(self):
        """A synthetic trajectory alternating between two levels."""
        rng = np.random.default_rng(3)
        low = 1.0 + 0.2 * rng.standard_normal(600)
        high = 8.0 + 0.3 * rng.standard_normal(600)
        excitation = np.concatenate((low[:300], high[:300], low[300:], high[300:]))
        times = np.arange(excitation.size) * 0.1
        return TrajectoryRecord(seed=0, times=times, excitation=excitation)

    def test_histogram_skips_transient(self, switching_record):
        """Test that the histogram drops the first tenth of the record."""
        counts, edges = excitation_histogram(switching_record, bins=20)

        assert counts.sum() == switching_record.excitation.size - 120
        assert edges.size == 21

    def test_two_dwell_levels(self, switching_record):
        """Test that both levels are found."""
        levels = dwell_levels(switching_record)

        assert len(levels) == 2
        assert levels[0] == pytest.approx(1.0, abs=0.5)
        assert levels[1] == pytest.approx(8.0, abs=0.5)


@pytest.mark.slow
class TestAgreementWithMaster:
    """QSD ensemble against the master equation."""

    def test_bistable_transient(self, bistable):
        """Test that the ensemble mean stays within three standard errors plus step bias."""
        space = make_fock_space(15)
        times = np.linspace(0.0, 2.0, 11)
        psi0 = fock_state(space, 0)
        exact = evolve_density(projector(psi0), times, space, bistable, ConstantDrive()).mean_excitation()
        result = ensemble_run(psi0, times, range(1, 401), space, bistable, ConstantDrive(), QSDConfig(dt=2e-4))

        assert np.all(np.abs(result.mean_excitation - exact) <= 3 * result.std_error + 1e-2)

    def test_long_run_at_reference_scale(self, bistable):
        """Test 500 trajectories to t=20 against the master equation."""
        space = make_fock_space(30)
        times = np.linspace(0.0, 20.0, 5)
        psi0 = fock_state(space, 0)
        exact = evolve_density(projector(psi0), times, space, bistable, ConstantDrive()).mean_excitation()
        result = ensemble_run(psi0, times, range(1, 501), space, bistable, ConstantDrive(), QSDConfig(dt=2e-4))

        assert result.failed_seeds == {}
        assert abs(result.mean_excitation[-1] - exact[-1]) <= 3 * result.std_error[-1]
        assert result.std_error[-1] < 0.05 * result.mean_excitation[-1]
