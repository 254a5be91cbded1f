"""Semiclassical amplitude dynamics of the driven Kerr oscillator.

The amplitude obeys

    d(alpha)/dt = -i (delta + chi + 2 chi |alpha|^2) alpha + i f(t) omega - kappa alpha

with kappa = gamma/2 (DampingConvention.HALF, the default) or kappa = gamma
(DampingConvention.FULL). Amplitudes here live in the classical frame; the
Wigner frame of the quantum model is rotated by pi, see to_quantum_frame.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp

from .errors import IntegrationError, InvalidParameterError
from .model import DriveEnvelope, ModelParams, PulseTrain

Amplitude = complex


class DampingConvention(str, Enum):
    """Damping coefficient of the amplitude equation."""

    HALF = "half"
    FULL = "full"

    def rate(self, gamma: float) -> float:
        return 0.5 * gamma if self is DampingConvention.HALF else gamma


@dataclass(frozen=True)
class ClassicalSolverConfig:
    """Settings of the adaptive ODE integration of the amplitude equation."""

    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "DOP853"
    max_step: float = math.inf


@dataclass(frozen=True)
class SteadyRoot:
    n: float
    alpha: complex
    stable: bool
    eigenvalues: Tuple[complex, complex] = field(default=(0j, 0j), repr=False)


@dataclass(frozen=True)
class SteadyRoots:
    """Fixed points of the constant-drive flow, ordered by n."""

    roots: Tuple[SteadyRoot, ...]
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)

    @property
    def stable(self) -> List[SteadyRoot]:
        return [root for root in self.roots if root.stable]


@dataclass(frozen=True)
class BistabilityResult:
    """Outcome of the three bistability inequalities; a margin > 0 means it holds."""

    bistable: bool
    margins: Tuple[float, float, float]


@dataclass
class HysteresisBranch:
    direction: str
    omega: np.ndarray
    n: np.ndarray


@dataclass
class HysteresisLoop:
    up: HysteresisBranch
    down: HysteresisBranch
    window: Optional[Tuple[float, float]]


@dataclass
class AmplitudeSeries:
    times: np.ndarray
    alpha: np.ndarray


@dataclass
class PoincareSection:
    """Stroboscopic samples alpha(t0 + k tau), k = transient_skip, ..."""

    t0: float
    tau: float
    points: np.ndarray
    transient_skip: int

    @property
    def spread(self) -> float:
        """Largest distance of a point from the section's centroid."""
        center = self.points.mean(axis=0)
        return float(np.max(np.linalg.norm(self.points - center, axis=1)))


@dataclass(frozen=True)
class LyapunovConfig:
    """Settings of the renormalized two-trajectory exponent estimate.

    Times are counted in drive periods. The flow is integrated on the
    autonomous state (Re alpha, Im alpha, beta) with d(beta)/dt = 1, and the
    separation is applied to alpha only.

    Attributes:
        d0: Separation restored after every renormalization.
        renorm_periods: Renormalization interval.
        transient_periods: Discarded evolution after t0.
        measure_periods: Averaging window.
        t0: Start time of the flow.
        tolerance: Allowed change of the exponent when the window is halved.
        max_extensions: Window doublings tried before flagging non-convergence.
        period: Drive period; required for a constant drive.
    """

    d0: float = 1e-8
    renorm_periods: float = 0.1
    transient_periods: float = 50.0
    measure_periods: float = 200.0
    t0: float = 0.0
    tolerance: float = 0.05
    max_extensions: int = 1
    convention: DampingConvention = DampingConvention.HALF
    alpha0: complex = 0j
    period: Optional[float] = None
    solver: ClassicalSolverConfig = field(default_factory=ClassicalSolverConfig)

    def __post_init__(self) -> None:
        if self.d0 <= 0:
            raise InvalidParameterError(f"d0 must be > 0, got {self.d0}")
        if self.renorm_periods <= 0 or self.measure_periods <= 10 * self.renorm_periods:
            raise InvalidParameterError(
                "measure_periods must be much longer than renorm_periods"
            )


@dataclass
class LyapunovEstimate:
    exponent: float
    half_window_exponent: float
    converged: bool
    interval: float
    log_growth: np.ndarray = field(repr=False)

    def __float__(self) -> float:
        return self.exponent


@dataclass
class RegimeClassification:
    regime: str
    early_exponent: float
    late_exponent: float


@dataclass
class LyapunovSweep:
    omega: np.ndarray
    exponents: np.ndarray
    converged: np.ndarray


@dataclass(frozen=True)
class Crossing:
    x: float
    direction: str


def to_quantum_frame(alpha: complex) -> complex:
    """Map a classical amplitude to the Wigner-frame amplitude <a>.

    The classical drive enters with +i omega while the quantum drive term
    omega (a + a^dagger) produces -i omega in the Heisenberg equation, so
    the two frames differ by a rotation of pi.
    """
    return -alpha


def amplitude_rhs(
    alpha: complex,
    t: float,
    p: ModelParams,
    env: DriveEnvelope,
    convention: DampingConvention = DampingConvention.HALF,
) -> complex:
    """d(alpha)/dt of the semiclassical amplitude equation."""
    kappa = convention.rate(p.gamma)
    frequency = p.delta + p.chi + 2.0 * p.chi * (alpha.real**2 + alpha.imag**2)
    return -1j * frequency * alpha + 1j * env.value(t) * p.omega_drive - kappa * alpha


def _jacobian(alpha: complex, p: ModelParams, kappa: float) -> np.ndarray:
    a = -1j * (p.shifted_detuning + 4.0 * p.chi * abs(alpha) ** 2) - kappa
    b = -2j * p.chi * alpha**2
    d_dx = a + b
    d_dy = 1j * (a - b)
    return np.array([[d_dx.real, d_dy.real], [d_dx.imag, d_dy.imag]])


def _cubic_real_roots(coeffs: Sequence[float]) -> Tuple[List[float], bool]:
    """Real roots of c3 x^3 + c2 x^2 + c1 x + c0 (c3 != 0) and a near-degeneracy flag."""
    c3, c2, c1, c0 = coeffs
    b, c, d = c2 / c3, c1 / c3, c0 / c3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = (q / 2.0) ** 2 + abs(p / 3.0) ** 3
    degenerate = scale > 0 and abs(disc) <= 1e-12 * scale
    if disc > 0 and not degenerate:
        root = math.sqrt(disc)
        t = float(np.cbrt(-q / 2.0 + root) + np.cbrt(-q / 2.0 - root))
        roots = [t]
    elif p == 0.0:
        roots = [0.0]
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        theta = math.acos(max(-1.0, min(1.0, 3.0 * q / (p * m)))) / 3.0
        roots = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    return [r - shift for r in roots], degenerate


def _polish(coeffs: Sequence[float], x: float) -> float:
    c3, c2, c1, c0 = coeffs
    value = ((c3 * x + c2) * x + c1) * x + c0
    slope = (3.0 * c3 * x + 2.0 * c2) * x + c1
    return x - value / slope if slope != 0 else x


def steady_cubic(
    p: ModelParams, convention: DampingConvention = DampingConvention.HALF
) -> Tuple[float, float, float, float]:
    """Coefficients of 4chi^2 n^3 + 4chi delta' n^2 + (delta'^2 + kappa^2) n - omega^2."""
    kappa = convention.rate(p.gamma)
    shifted = p.shifted_detuning
    return (
        4.0 * p.chi**2,
        4.0 * p.chi * shifted,
        shifted**2 + kappa**2,
        -(p.omega_drive**2),
    )


def steady_amplitudes(
    p: ModelParams, convention: DampingConvention = DampingConvention.HALF
) -> SteadyRoots:
    """Fixed points of the constant-drive amplitude equation with their stability."""
    kappa = convention.rate(p.gamma)
    coeffs = steady_cubic(p, convention)
    if p.omega_drive == 0:
        candidates, degenerate = [0.0], False
    elif p.chi == 0:
        candidates, degenerate = [-coeffs[3] / coeffs[2]], False
    else:
        raw, degenerate = _cubic_real_roots(coeffs)
        candidates = [_polish(coeffs, r) for r in raw]

    unique: List[float] = []
    for n in sorted(candidates):
        if n < 0:
            continue
        if unique and abs(n - unique[-1]) <= 1e-9 * max(1.0, abs(n)):
            degenerate = True
            continue
        unique.append(n)

    roots = []
    for n in unique:
        alpha = 1j * p.omega_drive / complex(kappa, p.shifted_detuning + 2.0 * p.chi * n)
        eigenvalues = np.linalg.eigvals(_jacobian(alpha, p, kappa))
        roots.append(
            SteadyRoot(
                n=float(n),
                alpha=complex(alpha),
                stable=bool(np.all(eigenvalues.real < 0)),
                eigenvalues=(complex(eigenvalues[0]), complex(eigenvalues[1])),
            )
        )
    if degenerate:
        logger.debug(f"Near-degenerate steady roots at omega={p.omega_drive}")
    return SteadyRoots(roots=tuple(roots), degenerate=degenerate)


def bistability_test(
    p: ModelParams, convention: DampingConvention = DampingConvention.HALF
) -> BistabilityResult:
    """Evaluate the sign, detuning and discriminant conditions for three fixed points."""
    kappa = convention.rate(p.gamma)
    shifted = p.shifted_detuning
    sign_margin = -p.chi * shifted
    if shifted == 0:
        return BistabilityResult(False, (sign_margin, -math.sqrt(3.0), -math.inf))
    ratio = kappa / shifted
    detuning_margin = abs(shifted / kappa) - math.sqrt(3.0)
    lhs = (1.0 + 27.0 * p.chi * p.omega_drive**2 / shifted**3 + 9.0 * ratio**2) ** 2
    rhs = (1.0 - 3.0 * ratio**2) ** 3
    margins = (sign_margin, detuning_margin, rhs - lhs)
    return BistabilityResult(all(m > 0 for m in margins), margins)


def scale_params(p: ModelParams, lam: float) -> ModelParams:
    """Parameters under which lam * alpha(t) solves the amplitude equation.

    Raises:
        InvalidParameterError: If lam <= 0.
    """
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidParameterError(f"scaling factor must be > 0, got {lam}")
    inv_sq = 1.0 / (lam * lam)
    return p.replace(
        chi=p.chi * inv_sq,
        omega_drive=p.omega_drive * lam,
        delta=p.delta + p.chi * (1.0 - inv_sq),
    )


def hysteresis_sweep(
    p: ModelParams,
    omega_values: Sequence[float],
    direction: str = "up",
    convention: DampingConvention = DampingConvention.HALF,
) -> HysteresisBranch:
    """Quasi-static continuation of a stable branch over a monotone omega range.

    The up-sweep starts on the lowest stable root and the down-sweep on the
    highest; afterwards the stable root nearest the previous n is followed,
    which jumps to the remaining branch at a fold. Results are returned in
    ascending omega order.
    """
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got '{direction}'")
    omegas = np.asarray(omega_values, dtype=float)
    steps = np.diff(omegas)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("omega_values must be strictly monotone")
    ordered = np.sort(omegas)
    if direction == "down":
        ordered = ordered[::-1]

    levels: List[float] = []
    previous: Optional[float] = None
    for omega in ordered:
        roots = steady_amplitudes(p.replace(omega_drive=float(omega)), convention)
        candidates = [root.n for root in (roots.stable or roots.roots)]
        if previous is None:
            chosen = min(candidates) if direction == "up" else max(candidates)
        else:
            chosen = min(candidates, key=lambda n: abs(n - previous))
        levels.append(chosen)
        previous = chosen

    n = np.array(levels)
    if direction == "down":
        ordered, n = ordered[::-1], n[::-1]
    return HysteresisBranch(direction=direction, omega=ordered, n=n)


def hysteresis_loop(
    p: ModelParams,
    omega_values: Sequence[float],
    convention: DampingConvention = DampingConvention.HALF,
    rtol: float = 1e-6,
) -> HysteresisLoop:
    """Both sweeps and the omega window over which they disagree."""
    up = hysteresis_sweep(p, omega_values, "up", convention)
    down = hysteresis_sweep(p, omega_values, "down", convention)
    differs = np.abs(up.n - down.n) > rtol * (1.0 + np.abs(up.n))
    window = None
    if differs.any():
        inside = up.omega[differs]
        window = (float(inside.min()), float(inside.max()))
    return HysteresisLoop(up=up, down=down, window=window)


def _step_limit(env: DriveEnvelope, cfg: ClassicalSolverConfig) -> float:
    if isinstance(env, PulseTrain):
        return min(cfg.max_step, 0.5 * env.width)
    return cfg.max_step


def _real_rhs(p: ModelParams, env: DriveEnvelope, kappa: float):
    shifted, chi, omega = p.shifted_detuning, p.chi, p.omega_drive

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x, v = y[0], y[1]
        frequency = shifted + 2.0 * chi * (x * x + v * v)
        drive = env.value(t) * omega
        return np.array([frequency * v - kappa * x, -frequency * x + drive - kappa * v])

    return rhs


def integrate_amplitude(
    alpha0: complex,
    t_span: Sequence[float],
    p: ModelParams,
    env: DriveEnvelope,
    cfg: Optional[ClassicalSolverConfig] = None,
    convention: DampingConvention = DampingConvention.HALF,
) -> AmplitudeSeries:
    """Integrate the amplitude equation and sample alpha at the times in t_span.

    Raises:
        IntegrationError: If the ODE solver stops early.
    """
    cfg = cfg or ClassicalSolverConfig()
    times = np.asarray(t_span, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("t_span must be a non-empty 1-D sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("t_span must be strictly increasing")
    if times.size == 1:
        return AmplitudeSeries(times=times, alpha=np.array([complex(alpha0)]))

    solution = solve_ivp(
        _real_rhs(p, env, convention.rate(p.gamma)),
        (times[0], times[-1]),
        [complex(alpha0).real, complex(alpha0).imag],
        method=cfg.method,
        t_eval=times,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=_step_limit(env, cfg),
    )
    if not solution.success:
        last = float(solution.t[-1]) if solution.t.size else float(times[0])
        logger.error(f"Amplitude integration failed: {solution.message}")
        raise IntegrationError(solution.message, last)
    return AmplitudeSeries(times=times, alpha=solution.y[0] + 1j * solution.y[1])


def _drive_period(env: DriveEnvelope, period: Optional[float]) -> float:
    if period is not None:
        if period <= 0:
            raise InvalidParameterError(f"period must be > 0, got {period}")
        return float(period)
    if isinstance(env, PulseTrain):
        return env.period
    raise InvalidParameterError("a constant drive needs an explicit sampling period")


def poincare_section(
    p: ModelParams,
    env: DriveEnvelope,
    alpha0: complex,
    t0_phase: float,
    n_points: int,
    transient_skip: int = 100,
    cfg: Optional[ClassicalSolverConfig] = None,
    convention: DampingConvention = DampingConvention.HALF,
    period: Optional[float] = None,
) -> PoincareSection:
    """Sample alpha(t0 + k tau) for k = transient_skip ... transient_skip + n_points - 1.

    The flow starts from alpha0 at t = 0. For a constant drive the sampling
    period must be given explicitly.
    """
    if n_points < 1:
        raise InvalidParameterError(f"n_points must be >= 1, got {n_points}")
    if transient_skip < 0 or t0_phase < 0:
        raise InvalidParameterError("transient_skip and t0_phase must be >= 0")
    tau = _drive_period(env, period)
    k = np.arange(transient_skip, transient_skip + n_points)
    sample_times = t0_phase + k * tau
    span = sample_times if sample_times[0] > 0 else sample_times[1:]
    series = integrate_amplitude(
        alpha0, np.concatenate(([0.0], span)), p, env, cfg, convention
    )
    alpha = series.alpha[1:] if sample_times[0] > 0 else series.alpha
    points = np.column_stack((alpha.real, alpha.imag))
    logger.debug(f"Poincare section with {n_points} points at t0={t0_phase:g}")
    return PoincareSection(t0=t0_phase, tau=tau, points=points, transient_skip=transient_skip)


def _flow_pair(p: ModelParams, env: DriveEnvelope, kappa: float):
    shifted, chi, omega = p.shifted_detuning, p.chi, p.omega_drive

    def rhs(_: float, y: np.ndarray) -> np.ndarray:
        out = np.empty(6)
        for offset in (0, 3):
            x, v, beta = y[offset], y[offset + 1], y[offset + 2]
            frequency = shifted + 2.0 * chi * (x * x + v * v)
            drive = env.value(beta) * omega
            out[offset] = frequency * v - kappa * x
            out[offset + 1] = -frequency * x + drive - kappa * v
            out[offset + 2] = 1.0
        return out

    return rhs


def _log_growth_history(
    p: ModelParams, env: DriveEnvelope, cfg: LyapunovConfig, transient: float, measure: float
) -> Tuple[np.ndarray, float]:
    """ln(d/d0) for consecutive renormalization intervals after the transient."""
    tau = _drive_period(env, cfg.period)
    interval = cfg.renorm_periods * tau
    kappa = cfg.convention.rate(p.gamma)
    max_step = _step_limit(env, cfg.solver)
    solver = cfg.solver

    start = np.array([cfg.alpha0.real, cfg.alpha0.imag, cfg.t0])
    if transient > 0:
        settle = integrate_amplitude(
            complex(cfg.alpha0),
            [cfg.t0, cfg.t0 + transient],
            p,
            env,
            solver,
            cfg.convention,
        )
        final = settle.alpha[-1]
        start = np.array([final.real, final.imag, cfg.t0 + transient])

    rhs = _flow_pair(p, env, kappa)
    offset = np.array([cfg.d0, 0.0, 0.0])
    state = np.concatenate((start, start + offset))
    count = int(round(measure / interval))
    history = np.empty(count)
    for k in range(count):
        t = start[2] + k * interval
        solution = solve_ivp(
            rhs,
            (t, t + interval),
            state,
            method=solver.method,
            rtol=solver.rtol,
            atol=solver.atol,
            max_step=max_step,
        )
        if not solution.success:
            raise IntegrationError(solution.message, float(solution.t[-1]))
        end = solution.y[:, -1]
        separation = end[3:] - end[:3]
        distance = float(np.linalg.norm(separation))
        history[k] = math.log(distance / cfg.d0)
        state = np.concatenate((end[:3], end[:3] + separation * (cfg.d0 / distance)))
    return history, interval


def lyapunov_exponent(
    p: ModelParams, env: DriveEnvelope, cfg: Optional[LyapunovConfig] = None
) -> LyapunovEstimate:
    """Largest Lyapunov exponent of the amplitude flow by repeated renormalization.

    The estimate is compared with the one from the first half of the window;
    if they differ by more than cfg.tolerance the window is doubled up to
    cfg.max_extensions times, after which the estimate is flagged.
    """
    cfg = cfg or LyapunovConfig()
    tau = _drive_period(env, cfg.period)
    measure = cfg.measure_periods * tau
    for attempt in range(cfg.max_extensions + 1):
        history, interval = _log_growth_history(
            p, env, cfg, cfg.transient_periods * tau, measure
        )
        exponent = float(history.sum() / (history.size * interval))
        half = history[: history.size // 2]
        half_exponent = float(half.sum() / (half.size * interval))
        converged = abs(exponent - half_exponent) < cfg.tolerance
        if converged:
            break
        measure *= 2.0
    if not converged:
        logger.warning(
            f"Lyapunov estimate at omega={p.omega_drive:g} not converged "
            f"({exponent:.4f} vs half window {half_exponent:.4f})"
        )
    logger.debug(f"Lyapunov exponent at omega={p.omega_drive:g}: {exponent:.4f}")
    return LyapunovEstimate(
        exponent=exponent,
        half_window_exponent=half_exponent,
        converged=converged,
        interval=interval,
        log_growth=history,
    )


def classify_regime(
    p: ModelParams,
    env: DriveEnvelope,
    cfg: Optional[LyapunovConfig] = None,
    early: Tuple[float, float] = (50.0, 150.0),
    late_start: float = 300.0,
    late_periods: float = 100.0,
) -> RegimeClassification:
    """Compare exponents over an early and a late window (in drive periods).

    A positive early exponent followed by a negative late one is transient
    chaos; a positive late exponent is chaos; anything else is regular.
    """
    cfg = cfg or LyapunovConfig()
    total = late_start + late_periods
    history, interval = _log_growth_history(
        p, env, cfg, transient=0.0, measure=total * _drive_period(env, cfg.period)
    )
    per_period = int(round(1.0 / cfg.renorm_periods))

    def window_exponent(first: float, last: float) -> float:
        chunk = history[int(first * per_period) : int(last * per_period)]
        return float(chunk.sum() / (chunk.size * interval))

    early_exponent = window_exponent(*early)
    late_exponent = window_exponent(late_start, total)
    if late_exponent > 0:
        regime = "chaotic"
    elif early_exponent > 0:
        regime = "transient"
    else:
        regime = "regular"
    return RegimeClassification(regime, early_exponent, late_exponent)


def _sweep_point(args: Tuple[ModelParams, DriveEnvelope, LyapunovConfig]) -> LyapunovEstimate:
    p, env, cfg = args
    return lyapunov_exponent(p, env, cfg)


def lyapunov_sweep(
    p: ModelParams,
    env: DriveEnvelope,
    omega_values: Sequence[float],
    cfg: Optional[LyapunovConfig] = None,
    workers: int = 1,
) -> LyapunovSweep:
    """Largest exponent at every drive amplitude in omega_values."""
    cfg = cfg or LyapunovConfig()
    omegas = np.asarray(omega_values, dtype=float)
    jobs = [(p.replace(omega_drive=float(omega)), env, cfg) for omega in omegas]
    logger.info(
        f"Lyapunov sweep over {omegas.size} amplitudes ({cfg.convention.value} damping)"
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(_sweep_point, jobs))
    else:
        estimates = [_sweep_point(job) for job in jobs]
    return LyapunovSweep(
        omega=omegas,
        exponents=np.array([e.exponent for e in estimates]),
        converged=np.array([e.converged for e in estimates]),
    )


def threshold_crossings(x: Sequence[float], values: Sequence[float]) -> List[Crossing]:
    """Linearly interpolated sign changes of values along x."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(values, dtype=float)
    crossings = []
    for i in range(xs.size - 1):
        y0, y1 = ys[i], ys[i + 1]
        if y0 < 0 <= y1 or y0 >= 0 > y1:
            if y0 == 0:
                continue
            root = xs[i] + (xs[i + 1] - xs[i]) * y0 / (y0 - y1)
            crossings.append(Crossing(float(root), "up" if y1 >= 0 else "down"))
    return crossings


