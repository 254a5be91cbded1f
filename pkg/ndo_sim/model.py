"""Physical model of the driven dissipative Kerr oscillator.

All quantities are expressed in units of the dissipation rate: rates in
units of gamma, times in units of 1/gamma, and hbar = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from .errors import InvalidDimensionError, InvalidParameterError, InvalidRateError

HermitianOperator = np.ndarray

# Pulses farther than this many widths from t contribute less than e**-36.
PULSE_CUTOFF_WIDTHS = 6.0


@dataclass(frozen=True)
class ModelParams:
    """Rates of the oscillator in units of gamma.

    Attributes:
        delta: Detuning between oscillator and drive frequency.
        chi: Kerr nonlinearity strength.
        omega_drive: Real, non-negative drive amplitude.
        gamma: Dissipation rate.
        n_bath: Mean number of bath quanta.
    """

    delta: float
    chi: float
    omega_drive: float
    gamma: float = 1.0
    n_bath: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delta", "chi", "omega_drive", "gamma", "n_bath"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.gamma <= 0:
            raise InvalidRateError(f"gamma must be > 0, got {self.gamma}")
        if self.n_bath < 0:
            raise InvalidParameterError(f"n_bath must be >= 0, got {self.n_bath}")
        if self.omega_drive < 0:
            raise InvalidParameterError(
                f"omega_drive must be >= 0, got {self.omega_drive}"
            )

    @property
    def shifted_detuning(self) -> float:
        """Detuning including the Kerr shift, delta + chi."""
        return self.delta + self.chi

    def replace(self, **changes: float) -> "ModelParams":
        """Return a copy with some fields changed."""
        values = {
            "delta": self.delta,
            "chi": self.chi,
            "omega_drive": self.omega_drive,
            "gamma": self.gamma,
            "n_bath": self.n_bath,
        }
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "chi": self.chi,
            "omega_drive": self.omega_drive,
            "gamma": self.gamma,
            "n_bath": self.n_bath,
        }


@dataclass(frozen=True)
class ConstantDrive:
    """Monochromatic drive, f(t) = 1."""

    def value(self, t: float) -> float:
        return 1.0

    def values(self, t: np.ndarray) -> np.ndarray:
        return np.ones_like(np.asarray(t, dtype=float))

    def as_dict(self) -> dict:
        return {"kind": "constant"}


@dataclass(frozen=True)
class PulseTrain:
    """Train of Gaussian pulses exp(-(t - t0 - n*period)**2 / width**2).

    Attributes:
        t0: Center of the pulse with index 0.
        width: Pulse duration T.
        period: Separation tau between pulse centers.
        pulse_count: If given, only pulses 0..pulse_count-1 exist;
            otherwise the train extends over all integers n.
    """

    t0: float
    width: float
    period: float
    pulse_count: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and math.isfinite(self.width)):
            raise InvalidParameterError("pulse train times must be finite")
        if self.width <= 0:
            raise InvalidParameterError(f"pulse width must be > 0, got {self.width}")
        if not math.isfinite(self.period) or self.period <= 0:
            raise InvalidParameterError(f"pulse period must be > 0, got {self.period}")
        if self.pulse_count is not None and self.pulse_count < 0:
            raise InvalidParameterError("pulse_count must be >= 0")

    def _pulse_indices(self, t: float) -> range:
        reach = PULSE_CUTOFF_WIDTHS * self.width
        n_lo = math.ceil((t - self.t0 - reach) / self.period)
        n_hi = math.floor((t - self.t0 + reach) / self.period)
        if self.pulse_count is not None:
            n_lo = max(n_lo, 0)
            n_hi = min(n_hi, self.pulse_count - 1)
        return range(n_lo, n_hi + 1)

    def value(self, t: float) -> float:
        total = 0.0
        for n in self._pulse_indices(t):
            offset = t - self.t0 - n * self.period
            total += math.exp(-(offset * offset) / (self.width * self.width))
        return total

    def values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.array([self.value(float(s)) for s in t.ravel()]).reshape(t.shape)

    def phase(self, t: float) -> float:
        """Time since the most recent pulse center, in [0, period)."""
        return (t - self.t0) % self.period

    def as_dict(self) -> dict:
        return {
            "kind": "pulse_train",
            "t0": self.t0,
            "width": self.width,
            "period": self.period,
            "pulse_count": self.pulse_count,
        }


DriveEnvelope = Union[ConstantDrive, PulseTrain]


def drive_envelope(env: DriveEnvelope, t: float) -> float:
    """Evaluate the drive envelope f(t)."""
    return env.value(t)


@dataclass(frozen=True)
class FockSpace:
    """Truncated Fock space {|0>, ..., |dim-1>} with cached ladder matrices."""

    dim: int
    a: np.ndarray = field(repr=False)
    adag: np.ndarray = field(repr=False)
    num: np.ndarray = field(repr=False)
    num2: np.ndarray = field(repr=False)
    sqrt_n: np.ndarray = field(repr=False)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.dim, dtype=float)


@lru_cache(maxsize=32)
def make_fock_space(dim: int) -> FockSpace:
    """Build the truncated Fock space of the given dimension.

    Raises:
        InvalidDimensionError: If dim < 2.
    """
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"Fock dimension must be an integer >= 2, got {dim}")
    dim = int(dim)
    sqrt_n = np.sqrt(np.arange(1, dim, dtype=float))
    a = np.diag(sqrt_n, k=1).astype(complex)
    adag = a.conj().T.copy()
    levels = np.arange(dim, dtype=float)
    num = np.diag(levels).astype(complex)
    num2 = np.diag(levels**2).astype(complex)
    for matrix in (a, adag, num, num2, sqrt_n):
        matrix.flags.writeable = False
    logger.debug(f"Built Fock space with dim={dim}")
    return FockSpace(dim=dim, a=a, adag=adag, num=num, num2=num2, sqrt_n=sqrt_n)


def hamiltonian_parts(space: FockSpace, p: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Split H(t) = H0 + f(t) * omega * V.

    Returns:
        H0 = delta*n + chi*n**2 and V = a + a^dagger.
    """
    h0 = p.delta * space.num + p.chi * space.num2
    v = space.a + space.adag
    return h0, v


def hamiltonian(
    space: FockSpace, p: ModelParams, env: DriveEnvelope, t: float
) -> HermitianOperator:
    """Hamiltonian delta*n + chi*n**2 + f(t)*omega*(a + a^dagger)."""
    h0, v = hamiltonian_parts(space, p)
    return h0 + drive_envelope(env, t) * p.omega_drive * v


def lindblad_ops(space: FockSpace, p: ModelParams) -> List[np.ndarray]:
    """Lindblad operators sqrt((N+1)gamma) a and, for N > 0, sqrt(N gamma) a^dagger.

    Raises:
        InvalidRateError: If gamma <= 0.
    """
    if p.gamma <= 0:
        raise InvalidRateError(f"gamma must be > 0, got {p.gamma}")
    ops = [math.sqrt((p.n_bath + 1.0) * p.gamma) * space.a]
    if p.n_bath > 0:
        ops.append(math.sqrt(p.n_bath * p.gamma) * space.adag)
    return ops


def fock_state(space: FockSpace, n: int) -> np.ndarray:
    """State vector of the number state |n>."""
    if not 0 <= n < space.dim:
        raise InvalidParameterError(f"level {n} outside Fock space of dim {space.dim}")
    psi = np.zeros(space.dim, dtype=complex)
    psi[n] = 1.0
    return psi


def coherent_state(space: FockSpace, alpha: complex) -> np.ndarray:
    """Truncated and renormalized coherent state |alpha>."""
    if alpha == 0:
        return fock_state(space, 0)
    n = np.arange(space.dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, space.dim)))))
    magnitude = np.exp(n * np.log(abs(alpha)) - 0.5 * log_fact)
    psi = magnitude * np.exp(1j * n * np.angle(alpha))
    return psi / np.linalg.norm(psi)


def projector(psi: np.ndarray) -> np.ndarray:
    """Density matrix |psi><psi| of a normalized state."""
    return np.outer(psi, psi.conj())
