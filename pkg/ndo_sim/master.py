"""Lindblad master-equation dynamics and density-matrix observables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.integrate import DOP853, RK45
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gammaln, loggamma

from .errors import (
    ConvergenceError,
    IntegrationError,
    InvalidStateError,
    NumericalError,
    UnsupportedParameterError,
)
from .model import (
    ConstantDrive,
    DriveEnvelope,
    FockSpace,
    ModelParams,
    PulseTrain,
    hamiltonian_parts,
    lindblad_ops,
    make_fock_space,
)

DensityMatrix = np.ndarray
NumberDistribution = np.ndarray

_SOLVERS = {"RK45": RK45, "DOP853": DOP853}

# Generator residuals below this many ulps of its norm are rounding noise.
RESIDUAL_FLOOR_ULPS = 1e4
POLISH_STEPS = 2


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the adaptive Runge-Kutta integrator."""

    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "RK45"
    max_step: float = math.inf
    hermitize: bool = True
    check_states: bool = True


@dataclass(frozen=True)
class SteadyStateConfig:
    """Settings of the steady-state search.

    Attributes:
        eps: Frobenius-norm threshold on d(rho)/dt, raised to the
            rounding floor of the generator when that is larger.
        chunk: Integration time between convergence checks.
        max_time: Give up after integrating this long.
        method: "integrate" (long-time evolution) or "nullspace".
        polish: Refine a stalled integration with a linear solve.
        stall_ratio: A chunk that shrinks the residual by less than this
            factor counts as stalled.
    """

    eps: float = 1e-10
    chunk: float = 10.0
    max_time: float = 5000.0
    method: str = "integrate"
    polish: bool = True
    stall_ratio: float = 0.5
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass(frozen=True)
class ExactSolutionInputs:
    """Coefficients c and z of the hypergeometric steady-state formula."""

    c: complex
    z: float


@dataclass(frozen=True)
class Extrema:
    maxima: List[int]
    minima: List[int]


@dataclass
class DensityEvolution:
    """Density matrices at the requested output times."""

    times: np.ndarray
    states: np.ndarray

    def mean_excitation(self) -> np.ndarray:
        return np.array([mean_excitation(rho) for rho in self.states])

    def purity(self) -> np.ndarray:
        return np.array([purity(rho) for rho in self.states])

    @property
    def final(self) -> DensityMatrix:
        return self.states[-1]


@dataclass
class PeriodExtrema:
    """Minimum and maximum of <a^dagger a> over one drive period."""

    times: np.ndarray
    means: np.ndarray
    t_min: float
    n_min: float
    t_max: float
    n_max: float


def check_density_matrix(
    rho: DensityMatrix,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-8,
    eig_tol: float = 1e-8,
) -> None:
    """Raise InvalidStateError unless rho is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise InvalidStateError("density matrix is not Hermitian")
    trace = np.trace(rho)
    if abs(trace - 1.0) > trace_tol:
        raise InvalidStateError(f"density matrix trace is {trace.real:.12g}, expected 1")
    smallest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if smallest < -eig_tol:
        raise InvalidStateError(f"density matrix has eigenvalue {smallest:.3e} < 0")


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


class LindbladGenerator:
    """Right-hand side of the master equation for fixed space, rates and drive."""

    def __init__(self, space: FockSpace, p: ModelParams, env: DriveEnvelope) -> None:
        h0, v = hamiltonian_parts(space, p)
        self.ops = lindblad_ops(space, p)
        self.ops_dag = [op.conj().T for op in self.ops]
        decay = sum(op_dag @ op for op, op_dag in zip(self.ops, self.ops_dag))
        self.h0_eff = h0 - 0.5j * decay
        self.drive = p.omega_drive * v
        self.env = env
        self.dim = space.dim

    def effective_hamiltonian(self, t: float) -> np.ndarray:
        return self.h0_eff + self.env.value(t) * self.drive

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        heff = self.effective_hamiltonian(t)
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        for op, op_dag in zip(self.ops, self.ops_dag):
            out += op @ rho @ op_dag
        return out

    def flat(self, t: float, y: np.ndarray) -> np.ndarray:
        return self(t, y.reshape(self.dim, self.dim)).ravel()


def lindblad_rhs(
    rho: DensityMatrix,
    t: float,
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
) -> np.ndarray:
    """d(rho)/dt of the Lindblad master equation."""
    return LindbladGenerator(space, p, env)(t, np.asarray(rho, dtype=complex))


def evolve_density(
    rho0: DensityMatrix,
    t_span: Sequence[float],
    space: FockSpace,
    p: ModelParams,
    env: DriveEnvelope,
    solver_cfg: Optional[SolverConfig] = None,
) -> DensityEvolution:
    """Integrate the master equation and sample rho at the times in t_span.

    Args:
        rho0: Initial density matrix at t_span[0].
        t_span: Increasing output times.
        solver_cfg: Integrator settings; defaults to RK45 with rtol 1e-8.

    Raises:
        IntegrationError: If the integrator fails before t_span[-1].
        InvalidStateError: If an output state breaks the density-matrix invariants.
    """
    cfg = solver_cfg or SolverConfig()
    times = np.asarray(t_span, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("t_span must be a non-empty 1-D sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("t_span must be strictly increasing")

    rho_start = np.array(rho0, dtype=complex)
    if cfg.check_states:
        check_density_matrix(rho_start)
    states = [rho_start]
    if times.size == 1:
        return DensityEvolution(times=times, states=np.array(states))

    generator = LindbladGenerator(space, p, env)
    solver_cls = _SOLVERS.get(cfg.method)
    if solver_cls is None:
        raise ValueError(f"unknown solver method '{cfg.method}'")
    solver = solver_cls(
        generator.flat,
        times[0],
        rho_start.ravel(),
        times[-1],
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
    )

    dim = space.dim
    index = 1
    last_good = float(times[0])
    while index < times.size:
        message = solver.step()
        if solver.status == "failed":
            logger.error(f"Master-equation integration failed at t={last_good:.6g}")
            raise IntegrationError(message or "integration failed", last_good)
        if times[index] <= solver.t:
            dense = solver.dense_output()
            while index < times.size and times[index] <= solver.t:
                rho = dense(times[index]).reshape(dim, dim)
                rho = _hermitize(rho) if cfg.hermitize else rho
                if cfg.check_states:
                    check_density_matrix(rho)
                states.append(rho)
                index += 1
        if cfg.hermitize:
            solver.y = _hermitize(solver.y.reshape(dim, dim)).ravel()
            solver.f = solver.fun(solver.t, solver.y)
        last_good = float(solver.t)
        if solver.status == "finished":
            break

    if len(states) != times.size:
        raise IntegrationError("integrator stopped before the last output time", last_good)
    logger.debug(f"Evolved density matrix to t={times[-1]:.6g} (dim={dim})")
    return DensityEvolution(times=times, states=np.array(states))


def mean_excitation(rho: DensityMatrix) -> float:
    """<a^dagger a> = sum_n n rho_nn."""
    diag = np.real(np.diagonal(rho))
    return float(np.dot(np.arange(diag.size), diag))


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2)."""
    return float(np.real(np.sum(rho * rho.T)))


def number_distribution(rho: DensityMatrix) -> NumberDistribution:
    """p(n) = rho_nn."""
    return np.real(np.diagonal(rho)).copy()


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the trace norm of rho - sigma."""
    diff = _hermitize(np.asarray(rho) - np.asarray(sigma))
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def distribution_extrema(p: NumberDistribution, atol: float = 1e-14) -> Extrema:
    """Locate local maxima and minima of p(n).

    Plateaus count once, at their smallest n. n = 0 is a maximum when it
    exceeds its right neighbor; the last level is a truncation edge and is
    never reported.
    """
    values = np.asarray(p, dtype=float)
    runs: List[int] = []
    for n, value in enumerate(values):
        if not runs or abs(value - values[runs[-1]]) > atol:
            runs.append(n)

    maxima: List[int] = []
    minima: List[int] = []
    for i in range(len(runs) - 1):
        value = values[runs[i]]
        right = values[runs[i + 1]]
        left = values[runs[i - 1]] if i > 0 else -math.inf
        if value > left and value > right:
            maxima.append(runs[i])
        elif i > 0 and value < left and value < right:
            minima.append(runs[i])
    return Extrema(maxima=maxima, minima=minima)


def exact_solution_inputs(p: ModelParams) -> ExactSolutionInputs:
    """c = (delta + chi)/chi - i gamma/(2 chi) and z = 2 (omega/chi)^2."""
    if p.chi == 0:
        raise UnsupportedParameterError("exact solution requires chi != 0")
    c = complex((p.delta + p.chi) / p.chi, -p.gamma / (2.0 * p.chi))
    z = 2.0 * (p.omega_drive / p.chi) ** 2
    return ExactSolutionInputs(c=c, z=z)


def _log_hypergeometric(c: complex, z: float, rel_tol: float = 1e-16) -> float:
    """log F(c, c*, z) with F = sum_k Gamma(c)Gamma(c*)/(Gamma(c+k)Gamma(c*+k)) z^k/k!."""
    if z == 0:
        return 0.0
    base = loggamma(c) + loggamma(np.conj(c))
    terms = 64
    while True:
        k = np.arange(terms)
        log_terms = (
            base
            - loggamma(c + k)
            - loggamma(np.conj(c) + k)
            + k * math.log(z)
            - gammaln(k + 1)
        )
        real_part = np.real(log_terms)
        shift = real_part.max()
        tail_small = real_part[-1] - shift < math.log(rel_tol)
        decreasing = real_part[-1] < real_part[-2]
        if tail_small and decreasing:
            break
        terms *= 2
        if terms > 1 << 20:
            raise ConvergenceError(f"hypergeometric series did not converge for z={z}")

    total = np.sum(np.exp(log_terms - shift))
    if abs(total.imag) > 1e-10 * abs(total.real):
        raise NumericalError(f"hypergeometric sum has imaginary residue {total.imag:.3e}")
    return float(shift + math.log(total.real))


def exact_mean_excitation(p: ModelParams) -> float:
    """Exact steady-state <a^dagger a> for constant drive and zero bath quanta.

    Raises:
        UnsupportedParameterError: If chi = 0 (use linear_mean_excitation) or
            n_bath > 0.
    """
    if p.chi == 0:
        raise UnsupportedParameterError(
            "exact_mean_excitation needs chi != 0; use linear_mean_excitation"
        )
    if p.n_bath > 0:
        raise UnsupportedParameterError("exact solution holds for n_bath = 0 only")
    if p.omega_drive == 0:
        return 0.0
    inputs = exact_solution_inputs(p)
    prefactor = p.omega_drive**2 / (p.shifted_detuning**2 + (p.gamma / 2.0) ** 2)
    log_ratio = _log_hypergeometric(inputs.c + 1, inputs.z) - _log_hypergeometric(
        inputs.c, inputs.z
    )
    return float(prefactor * math.exp(log_ratio))


def linear_mean_excitation(p: ModelParams) -> float:
    """chi = 0 limit: omega^2 / (delta^2 + (gamma/2)^2)."""
    return p.omega_drive**2 / (p.delta**2 + (p.gamma / 2.0) ** 2)


def liouvillian(space: FockSpace, p: ModelParams) -> np.ndarray:
    """Superoperator of the constant-drive generator acting on row-major vec(rho)."""
    h0, v = hamiltonian_parts(space, p)
    h = h0 + p.omega_drive * v
    eye = np.eye(space.dim)
    superop = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in lindblad_ops(space, p):
        decay = op.conj().T @ op
        superop += np.kron(op, op.conj()) - 0.5 * (
            np.kron(decay, eye) + np.kron(eye, decay.T)
        )
    return superop


def _constrained_liouvillian(space: FockSpace, p: ModelParams) -> np.ndarray:
    superop = liouvillian(space, p)
    superop[0, :] = np.eye(space.dim).ravel()
    return superop


def _nullspace_steady_state(space: FockSpace, p: ModelParams) -> DensityMatrix:
    rhs = np.zeros(space.dim**2, dtype=complex)
    rhs[0] = 1.0
    rho = np.linalg.solve(_constrained_liouvillian(space, p), rhs).reshape(space.dim, space.dim)
    rho = _hermitize(rho)
    return rho / np.trace(rho).real


def _polish_steady_state(
    space: FockSpace, p: ModelParams, generator: LindbladGenerator, rho: DensityMatrix
) -> DensityMatrix:
    """Newton refinement of an integrated state against the trace-constrained Liouvillian."""
    factors = lu_factor(_constrained_liouvillian(space, p))
    for _ in range(POLISH_STEPS):
        rhs = -generator(0.0, rho).ravel()
        rhs[0] = 1.0 - np.trace(rho)
        rho = rho + lu_solve(factors, rhs).reshape(space.dim, space.dim)
    rho = _hermitize(rho)
    return rho / np.trace(rho).real


def residual_floor(generator: LindbladGenerator) -> float:
    """Smallest generator residual double precision can resolve for this problem."""
    heff = generator.effective_hamiltonian(0.0)
    scale = 2.0 * np.linalg.norm(heff, 2) + sum(np.linalg.norm(op, 2) ** 2 for op in generator.ops)
    return RESIDUAL_FLOOR_ULPS * float(np.finfo(float).eps) * float(scale)


def steady_state(
    space: FockSpace,
    p: ModelParams,
    env: Optional[DriveEnvelope] = None,
    cfg: Optional[SteadyStateConfig] = None,
    rho0: Optional[DensityMatrix] = None,
) -> DensityMatrix:
    """Stationary density matrix under constant drive.

    Integrates from rho0 (vacuum by default) until the Frobenius norm of the
    generator falls below max(cfg.eps, residual_floor). Once a chunk stops
    shrinking the residual by cfg.stall_ratio, the integrated state is
    refined with a linear solve instead of integrating further.

    Raises:
        UnsupportedParameterError: For a non-constant drive envelope.
        ConvergenceError: If cfg.max_time is reached first, or the refined
            state still misses the threshold.
    """
    env = env or ConstantDrive()
    cfg = cfg or SteadyStateConfig()
    if not isinstance(env, ConstantDrive):
        raise UnsupportedParameterError(
            "steady_state requires a constant drive; pulsed dynamics is periodic"
        )
    if cfg.method == "nullspace":
        return _nullspace_steady_state(space, p)
    if cfg.method != "integrate":
        raise ValueError(f"unknown steady-state method '{cfg.method}'")

    generator = LindbladGenerator(space, p, env)
    if rho0 is None:
        rho = np.zeros((space.dim, space.dim), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.array(rho0, dtype=complex)
    threshold = max(cfg.eps, residual_floor(generator))

    t = 0.0
    previous = math.inf
    while True:
        residual = float(np.linalg.norm(generator(t, rho)))
        if residual < threshold:
            logger.info(
                f"Steady state reached at t={t:.6g} (residual {residual:.2e}, dim={space.dim})"
            )
            return rho
        if cfg.polish and residual > cfg.stall_ratio * previous:
            logger.info(
                f"Steady-state integration stalled at t={t:.6g} (residual {residual:.2e}), "
                "refining with a linear solve"
            )
            rho = _polish_steady_state(space, p, generator, rho)
            residual = float(np.linalg.norm(generator(t, rho)))
            if residual < threshold:
                logger.info(f"Steady state refined (residual {residual:.2e}, dim={space.dim})")
                return rho
            raise ConvergenceError(
                f"steady state refinement left residual {residual:.2e} above {threshold:.2e}"
            )
        if t >= cfg.max_time:
            raise ConvergenceError(
                f"steady state not reached by t={t:.6g} (residual {residual:.2e})"
            )
        evolution = evolve_density(rho, [t, t + cfg.chunk], space, p, env, cfg.solver)
        rho = evolution.final
        t += cfg.chunk
        previous = residual
        logger.debug(f"Steady-state search t={t:.6g}, residual {residual:.2e}")


def auto_fock_dim(
    p: ModelParams,
    start: int = 20,
    cfg: Optional[SteadyStateConfig] = None,
    tol: float = 1e-6,
    max_dim: int = 160,
) -> int:
    """Double dim until the top-level population and the mean both settle below tol."""
    dim = start
    previous_mean: Optional[float] = None
    while True:
        space = make_fock_space(dim)
        rho = steady_state(space, p, cfg=cfg)
        top = number_distribution(rho)[-1]
        mean = mean_excitation(rho)
        settled = previous_mean is not None and abs(mean - previous_mean) < tol
        if top < tol and settled:
            logger.info(f"Auto Fock dimension {dim} (top population {top:.2e})")
            return dim
        if dim * 2 > max_dim:
            logger.warning(f"Auto Fock dimension capped at {dim} (top population {top:.2e})")
            return dim
        previous_mean = mean
        dim *= 2


def period_extrema(
    rho0: DensityMatrix,
    space: FockSpace,
    p: ModelParams,
    env: PulseTrain,
    t_start: float,
    samples: int = 64,
    solver_cfg: Optional[SolverConfig] = None,
) -> PeriodExtrema:
    """Extremes of <a^dagger a> over the drive period starting at t_start."""
    times = np.linspace(t_start, t_start + env.period, samples)
    if t_start > 0:
        times = np.concatenate(([0.0], times))
    evolution = evolve_density(rho0, times, space, p, env, solver_cfg)
    means = evolution.mean_excitation()
    if t_start > 0:
        times, means = times[1:], means[1:]
    i_min = int(np.argmin(means))
    i_max = int(np.argmax(means))
    return PeriodExtrema(
        times=times,
        means=means,
        t_min=float(times[i_min]),
        n_min=float(means[i_min]),
        t_max=float(times[i_max]),
        n_max=float(means[i_max]),
    )


def over_transient_purity(
    rho0: DensityMatrix,
    space: FockSpace,
    p: ModelParams,
    env: PulseTrain,
    t_start: float,
    samples: int = 32,
    solver_cfg: Optional[SolverConfig] = None,
) -> float:
    """Tr(rho^2) averaged over the drive period starting at t_start."""
    times = np.linspace(t_start, t_start + env.period, samples)
    if t_start > 0:
        times = np.concatenate(([0.0], times))
    evolution = evolve_density(rho0, times, space, p, env, solver_cfg)
    values = evolution.purity()
    if t_start > 0:
        values = values[1:]
    return float(np.mean(values))
