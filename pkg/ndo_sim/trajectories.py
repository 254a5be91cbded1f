"""Quantum state diffusion unraveling of the master equation.

Trajectories are integrated with the Euler-Maruyama scheme. Every trajectory
draws its complex Wiener increments from its own Philox counter-based
generator seeded with the trajectory seed, so a trajectory is reproducible
bit for bit and independent of which other trajectories share its batch:
all per-trajectory arithmetic is elementwise along the Fock axis.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.ndimage import gaussian_filter1d

from .errors import InvalidStateError, StepFailureError
from .master import DensityMatrix, distribution_extrema
from .model import DriveEnvelope, FockSpace, ModelParams, make_fock_space

StateVector = np.ndarray

NORM_FLOOR = 1e-12
SEED_MASK = (1 << 64) - 1


def seed_stream(seed: int) -> int:
    """Key of the Philox stream behind a signed or unsigned 64-bit seed."""
    return int(seed) & SEED_MASK


@dataclass(frozen=True)
class QSDConfig:
    """Settings of the stochastic integration.

    Attributes:
        dt: Largest step; each output interval is split into equal steps.
        snapshot_times: Times (on the output grid) at which state vectors
            are stored.
        substeps: Extra subdivision of every step.
        noise_refine: Number of standard-normal pairs summed into one
            increment. Coupled coarse/fine runs use (substeps=1,
            noise_refine=2) against (substeps=2, noise_refine=1).
        noise_block: Steps of noise drawn per generator call.
        workers: Processes used by ensemble_run.
    """

    dt: float = 2e-4
    snapshot_times: Tuple[float, ...] = ()
    substeps: int = 1
    noise_refine: int = 1
    noise_block: int = 2048
    workers: int = 1

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.substeps < 1 or self.noise_refine < 1:
            raise ValueError("substeps and noise_refine must be >= 1")


@dataclass
class TrajectoryRecord:
    """Observables of one trajectory on the output grid."""

    seed: int
    times: np.ndarray
    excitation: np.ndarray
    snapshots: Dict[float, StateVector] = field(default_factory=dict)


@dataclass
class EnsembleResult:
    """Ensemble statistics, reduced over ascending seeds by pairwise summation."""

    times: np.ndarray
    seeds: List[int]
    mean_excitation: np.ndarray
    std_error: np.ndarray
    densities: Dict[float, DensityMatrix]
    failed_seeds: Dict[int, float]
    records: List[TrajectoryRecord] = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_records(
        cls,
        records: Sequence[TrajectoryRecord],
        failed_seeds: Optional[Dict[int, float]] = None,
    ) -> "EnsembleResult":
        if not records:
            raise StepFailureError("every trajectory in the ensemble failed", time=0.0)
        ordered = sorted(records, key=lambda record: record.seed)
        count = len(ordered)
        times = ordered[0].times
        mean = _pairwise_sum([record.excitation for record in ordered]) / count
        if count > 1:
            variance = _pairwise_sum(
                [(record.excitation - mean) ** 2 for record in ordered]
            ) / (count - 1)
            std_error = np.sqrt(variance / count)
        else:
            std_error = np.zeros_like(mean)
        densities = {}
        for t in ordered[0].snapshots:
            projectors = [
                np.outer(record.snapshots[t], record.snapshots[t].conj())
                for record in ordered
            ]
            densities[t] = _pairwise_sum(projectors) / count
        return cls(
            times=times,
            seeds=[record.seed for record in ordered],
            mean_excitation=mean,
            std_error=std_error,
            densities=densities,
            failed_seeds=dict(failed_seeds or {}),
            records=list(ordered),
        )

    def merge(self, other: "EnsembleResult") -> "EnsembleResult":
        """Combine two ensembles over disjoint seeds into the ensemble of all seeds."""
        overlap = set(self.seeds) & set(other.seeds)
        if overlap:
            raise ValueError(f"ensembles share seeds {sorted(overlap)}")
        failed = dict(self.failed_seeds)
        failed.update(other.failed_seeds)
        return EnsembleResult.from_records(self.records + other.records, failed)

    def density_at(self, t: float) -> DensityMatrix:
        for snapshot_time, rho in self.densities.items():
            if math.isclose(snapshot_time, t, rel_tol=0.0, abs_tol=1e-9):
                return rho
        raise KeyError(f"no snapshot stored at t={t}")


@dataclass
class CalibrationResult:
    dt: float
    drifts: List[Tuple[float, float]]
    converged: bool


def _pairwise_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    if len(arrays) == 1:
        return np.array(arrays[0], copy=True)
    middle = len(arrays) // 2
    return _pairwise_sum(arrays[:middle]) + _pairwise_sum(arrays[middle:])


class _Channel:
    """A Lindblad operator c*a (lowering) or c*a^dagger (raising)."""

    def __init__(self, coefficient: float, lowering: bool) -> None:
        self.coefficient = coefficient
        self.lowering = lowering


class _LadderTerms:
    """Elementwise application of H and the Lindblad operators to row-stacked states."""

    def __init__(self, space: FockSpace, p: ModelParams, env: DriveEnvelope) -> None:
        levels = space.levels
        self.sqrt_n = np.asarray(space.sqrt_n)
        self.diagonal = p.delta * levels + p.chi * levels**2
        self.omega = p.omega_drive
        self.env = env
        self._rotations: Dict[float, np.ndarray] = {}
        self.channels = [_Channel(math.sqrt((p.n_bath + 1.0) * p.gamma), True)]
        if p.n_bath > 0:
            self.channels.append(_Channel(math.sqrt(p.n_bath * p.gamma), False))

    def lower(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[:, :-1] = self.sqrt_n * psi[:, 1:]
        return out

    def raise_(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[:, 1:] = self.sqrt_n * psi[:, :-1]
        return out

    def apply(self, channel: _Channel, psi: np.ndarray) -> np.ndarray:
        shifted = self.lower(psi) if channel.lowering else self.raise_(psi)
        return channel.coefficient * shifted

    def apply_dag(self, channel: _Channel, psi: np.ndarray) -> np.ndarray:
        shifted = self.raise_(psi) if channel.lowering else self.lower(psi)
        return channel.coefficient * shifted

    def drive(self, psi: np.ndarray, t: float) -> np.ndarray:
        """Off-diagonal part f(t) * omega * (a + a^dagger) of H applied to psi."""
        if self.omega == 0.0:
            return np.zeros_like(psi)
        amplitude = self.env.value(t) * self.omega
        if amplitude == 0.0:
            return np.zeros_like(psi)
        return amplitude * (self.lower(psi) + self.raise_(psi))

    def rotation(self, dt: float) -> np.ndarray:
        """exp(-i H0 dt) for the diagonal part H0 = delta*n + chi*n**2."""
        if dt not in self._rotations:
            self._rotations[dt] = np.exp(-1j * self.diagonal * dt)
        return self._rotations[dt]


def _batch_step(
    psi: np.ndarray, t: float, dt: float, noise: np.ndarray, terms: _LadderTerms
) -> Tuple[np.ndarray, np.ndarray]:
    """One Euler-Maruyama step for every row; returns normalized states and raw norms.

    The diagonal part of H enters as the exact phase exp(-i H0 dt); drive,
    damping and noise terms are stepped explicitly.
    """
    drift = -1j * terms.drive(psi, t)
    diffusion = np.zeros_like(psi)
    for j, channel in enumerate(terms.channels):
        l_psi = terms.apply(channel, psi)
        expect = np.sum(psi.conj() * l_psi, axis=1)[:, None]
        drift += (
            expect.conj() * l_psi
            - 0.5 * terms.apply_dag(channel, l_psi)
            - 0.5 * (expect.conj() * expect) * psi
        )
        diffusion += (l_psi - expect * psi) * noise[:, j][:, None]
    stepped = (psi + drift * dt + diffusion) * terms.rotation(dt)
    norms = np.sqrt(np.sum(np.abs(stepped) ** 2, axis=1))
    safe = np.where(norms > NORM_FLOOR, norms, 1.0)
    return stepped / safe[:, None], norms


def qsd_step(
    psi: StateVector,
    t: float,
    dt: float,
    noise: np.ndarray,
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
) -> StateVector:
    """Advance one normalized state by dt with externally supplied increments.

    Args:
        noise: One complex Wiener increment per Lindblad channel.

    Raises:
        StepFailureError: If the norm collapses below 1e-12 before renormalization.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    terms = _LadderTerms(space, p, env)
    increments = np.asarray(noise, dtype=complex).reshape(1, -1)
    if increments.shape[1] != len(terms.channels):
        raise ValueError(
            f"expected {len(terms.channels)} noise increments, got {increments.shape[1]}"
        )
    stepped, norms = _batch_step(
        np.asarray(psi, dtype=complex).reshape(1, -1), t, dt, increments, terms
    )
    if norms[0] < NORM_FLOOR:
        raise StepFailureError(
            f"state norm {norms[0]:.2e} underflowed at t={t:.6g}; reduce dt", time=t
        )
    return stepped[0]


class _NoiseBatch:
    """Per-seed Philox streams delivering one increment row per step."""

    def __init__(self, seeds: Sequence[int], channels: int, refine: int, block: int) -> None:
        self.generators = [
            np.random.Generator(np.random.Philox(seed_stream(seed))) for seed in seeds
        ]
        self.channels = channels
        self.refine = refine
        self.block = block
        self.buffer = np.empty((len(seeds), 0))
        self.position = block

    def _refill(self) -> None:
        shape = (self.block, self.refine, self.channels, 2)
        self.buffer = np.stack([rng.standard_normal(shape) for rng in self.generators])
        self.position = 0

    def next(self, dt: float) -> np.ndarray:
        if self.position >= self.block:
            self._refill()
        raw = self.buffer[:, self.position]
        self.position += 1
        scale = math.sqrt(dt / (2.0 * self.refine))
        return (raw[..., 0] + 1j * raw[..., 1]).sum(axis=1) * scale


def _snapshot_indices(t_grid: np.ndarray, snapshot_times: Sequence[float]) -> Dict[int, float]:
    indices = {}
    for t in snapshot_times:
        matches = np.nonzero(np.isclose(t_grid, t, rtol=0.0, atol=1e-9))[0]
        if matches.size == 0:
            raise ValueError(f"snapshot time {t} is not on the output grid")
        indices[int(matches[0])] = float(t)
    return indices


def _integrate_batch(
    psi0: StateVector,
    t_grid: np.ndarray,
    seeds: Sequence[int],
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
    cfg: QSDConfig,
) -> Tuple[List[TrajectoryRecord], Dict[int, float]]:
    terms = _LadderTerms(space, p, env)
    count = len(seeds)
    psi = np.tile(np.asarray(psi0, dtype=complex), (count, 1))
    noise = _NoiseBatch(seeds, len(terms.channels), cfg.noise_refine, cfg.noise_block)
    snapshot_at = _snapshot_indices(t_grid, cfg.snapshot_times)

    alive = np.ones(count, dtype=bool)
    failed: Dict[int, float] = {}
    excitation = np.empty((count, t_grid.size))
    levels = space.levels
    excitation[:, 0] = np.abs(psi) ** 2 @ levels
    snapshots: Dict[float, np.ndarray] = {}
    if 0 in snapshot_at:
        snapshots[snapshot_at[0]] = psi.copy()

    for k in range(1, t_grid.size):
        start = t_grid[k - 1]
        interval = t_grid[k] - start
        n_steps = max(1, math.ceil(interval / cfg.dt - 1e-9)) * cfg.substeps
        h = interval / n_steps
        for j in range(n_steps):
            t = start + j * h
            stepped, norms = _batch_step(psi, t, h, noise.next(h), terms)
            collapsed = alive & (norms < NORM_FLOOR)
            if collapsed.any():
                for index in np.nonzero(collapsed)[0]:
                    failed[int(seeds[index])] = float(t)
                    logger.warning(f"Trajectory seed={seeds[index]} collapsed at t={t:.6g}")
                alive &= ~collapsed
            psi = np.where(alive[:, None], stepped, psi)
        excitation[:, k] = np.abs(psi) ** 2 @ levels
        if k in snapshot_at:
            snapshots[snapshot_at[k]] = psi.copy()

    records = [
        TrajectoryRecord(
            seed=int(seed),
            times=t_grid,
            excitation=excitation[i].copy(),
            snapshots={t: states[i].copy() for t, states in snapshots.items()},
        )
        for i, seed in enumerate(seeds)
        if alive[i]
    ]
    return records, failed


def _validated_grid(t_grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    return grid


def _validated_state(psi0: StateVector, space: FockSpace) -> np.ndarray:
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (space.dim,):
        raise InvalidStateError(f"state has shape {psi.shape}, expected ({space.dim},)")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise InvalidStateError("initial state is not normalized")
    return psi


def run_trajectory(
    psi0: StateVector,
    t_grid: Sequence[float],
    seed: int,
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
    cfg: Optional[QSDConfig] = None,
) -> TrajectoryRecord:
    """Integrate a single seeded trajectory and record <a^dagger a> on t_grid.

    Raises:
        StepFailureError: If the trajectory norm collapses.
    """
    cfg = cfg or QSDConfig()
    grid = _validated_grid(t_grid)
    psi = _validated_state(psi0, space)
    records, failed = _integrate_batch(psi, grid, [seed], space, p, env, cfg)
    if failed:
        raise StepFailureError(
            f"trajectory seed={seed} collapsed; reduce dt", time=failed[seed], seed=seed
        )
    return records[0]


def _run_chunk(
    args: Tuple[np.ndarray, np.ndarray, List[int], int, ModelParams, DriveEnvelope, QSDConfig]
) -> Tuple[List[TrajectoryRecord], Dict[int, float]]:
    psi0, grid, seeds, dim, p, env, cfg = args
    return _integrate_batch(psi0, grid, seeds, make_fock_space(dim), p, env, cfg)


def ensemble_run(
    psi0: StateVector,
    t_grid: Sequence[float],
    seeds: Sequence[int],
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
    cfg: Optional[QSDConfig] = None,
) -> EnsembleResult:
    """Run one trajectory per seed and reduce them to ensemble statistics.

    Failed trajectories are reported in EnsembleResult.failed_seeds and left
    out of the averages.
    """
    cfg = cfg or QSDConfig()
    grid = _validated_grid(t_grid)
    psi = _validated_state(psi0, space)
    seed_list = [int(seed) for seed in seeds]
    if not seed_list:
        raise ValueError("ensemble_run needs at least one seed")
    if len({seed_stream(seed) for seed in seed_list}) != len(seed_list):
        raise ValueError("ensemble seeds must map to distinct 64-bit streams")

    workers = max(1, min(cfg.workers, len(seed_list)))
    chunks = [seed_list[i::workers] for i in range(workers)]
    logger.info(
        f"Running {len(seed_list)} trajectories to t={grid[-1]:.6g} "
        f"(dim={space.dim}, dt={cfg.dt:g}, workers={workers})"
    )
    jobs = [(psi, grid, chunk, space.dim, p, env, cfg) for chunk in chunks]
    if workers == 1:
        outcomes = [_run_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_chunk, jobs))

    records: List[TrajectoryRecord] = []
    failed: Dict[int, float] = {}
    for chunk_records, chunk_failed in outcomes:
        records.extend(chunk_records)
        failed.update(chunk_failed)
    if failed:
        logger.warning(f"{len(failed)} trajectories dropped from the ensemble: {sorted(failed)}")
    result = EnsembleResult.from_records(records, failed)
    logger.info(f"Ensemble of {result.count} trajectories reduced")
    return result


def calibrate_dt(
    psi0: StateVector,
    t_grid: Sequence[float],
    seeds: Sequence[int],
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
    cfg: Optional[QSDConfig] = None,
    tol: float = 1e-3,
    max_halvings: int = 6,
) -> CalibrationResult:
    """Halve dt until the ensemble mean moves by less than tol against a dt/2 run.

    Both runs consume the same Wiener path: the coarse run sums pairs of the
    fine run's increments, so the difference measures discretisation drift.
    """
    cfg = cfg or QSDConfig()
    drifts: List[Tuple[float, float]] = []
    for _ in range(max_halvings + 1):
        coarse = ensemble_run(
            psi0, t_grid, seeds, space, p, env, replace(cfg, substeps=1, noise_refine=2)
        )
        fine = ensemble_run(
            psi0, t_grid, seeds, space, p, env, replace(cfg, substeps=2, noise_refine=1)
        )
        drift = float(np.max(np.abs(coarse.mean_excitation - fine.mean_excitation)))
        drifts.append((cfg.dt, drift))
        logger.info(f"QSD calibration dt={cfg.dt:g}: drift {drift:.3e}")
        if drift < tol:
            return CalibrationResult(dt=cfg.dt, drifts=drifts, converged=True)
        cfg = replace(cfg, dt=cfg.dt / 2.0)
    logger.warning(f"QSD calibration did not reach tolerance {tol:g}")
    return CalibrationResult(dt=cfg.dt, drifts=drifts, converged=False)


def excitation_histogram(
    record: TrajectoryRecord, bins: int = 40, skip_fraction: float = 0.1
) -> Tuple[np.ndarray, np.ndarray]:
    """Histogram of <a^dagger a> along a trajectory, dropping the initial transient."""
    start = int(skip_fraction * record.excitation.size)
    return np.histogram(record.excitation[start:], bins=bins)


def dwell_levels(
    record: TrajectoryRecord,
    bins: int = 40,
    skip_fraction: float = 0.1,
    smoothing: float = 1.5,
    min_weight: float = 0.1,
) -> List[float]:
    """Excitation levels around which a trajectory dwells (histogram modes)."""
    counts, edges = excitation_histogram(record, bins, skip_fraction)
    smooth = gaussian_filter1d(counts.astype(float), smoothing, mode="constant")
    extrema = distribution_extrema(np.concatenate((smooth, [0.0])))
    centers = 0.5 * (edges[:-1] + edges[1:])
    threshold = min_weight * smooth.max()
    return [float(centers[i]) for i in extrema.maxima if smooth[i] >= threshold]
