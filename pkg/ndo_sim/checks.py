"""Fast invariant suite run by `ndo-sim validate`."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from loguru import logger

from .master import SolverConfig, check_density_matrix, evolve_density
from .model import ConstantDrive, ModelParams, PulseTrain, coherent_state, fock_state, make_fock_space, projector
from .semiclassical import integrate_amplitude, scale_params
from .trajectories import QSDConfig, ensemble_run
from .wigner import GridSpec, displaced_parity_value, wigner_grid

PEAK_TOL = 1e-6
NORMALIZATION_TOL = 1e-2


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def check_vacuum_peak() -> Tuple[bool, str]:
    space = make_fock_space(10)
    grid = wigner_grid(projector(fock_state(space, 0)), GridSpec.square(4.0, 161))
    peak = float(grid.values.max())
    error = abs(peak - 2.0 / math.pi)
    return error <= PEAK_TOL, f"max W = {peak:.9f}, |W - 2/pi| = {error:.1e}"


def check_single_photon_origin() -> Tuple[bool, str]:
    space = make_fock_space(10)
    grid = wigner_grid(projector(fock_state(space, 1)), GridSpec.square(4.0, 161))
    center = float(grid.values[80, 80])
    error = abs(center + 2.0 / math.pi)
    return error <= PEAK_TOL, f"W(0) = {center:.9f}, |W + 2/pi| = {error:.1e}"


def check_grid_normalization() -> Tuple[bool, str]:
    space = make_fock_space(30)
    rho = projector(coherent_state(space, 1.0 + 0.5j))
    grid = wigner_grid(rho, GridSpec.square(5.0, 201))
    residual = grid.normalization_residual
    return residual <= NORMALIZATION_TOL, f"|integral W - 1| = {residual:.1e}"


def check_displaced_parity() -> Tuple[bool, str]:
    space = make_fock_space(20)
    rho = projector(coherent_state(space, 0.8 - 0.3j))
    grid = wigner_grid(rho, GridSpec.square(2.0, 41))
    j, i = 25, 27
    alpha = complex(grid.x[i], grid.y[j])
    direct = displaced_parity_value(rho, alpha)
    error = abs(direct - grid.values[j, i])
    return error <= 1e-8, f"Laguerre vs displaced parity at {alpha:.2f}: {error:.1e}"


def check_master_invariants() -> Tuple[bool, str]:
    space = make_fock_space(15)
    p = ModelParams(delta=-8.0, chi=2.0, omega_drive=2.7)
    train = PulseTrain(t0=0.5, width=0.3, period=1.0)
    evolution = evolve_density(projector(fock_state(space, 0)), np.linspace(0.0, 3.0, 7), space, p, train)
    for rho in evolution.states:
        check_density_matrix(rho)
    return True, f"{len(evolution.states)} states Hermitian, unit trace, positive"


def check_decay_law() -> Tuple[bool, str]:
    space = make_fock_space(8)
    p = ModelParams(delta=1.0, chi=0.5, omega_drive=0.0)
    times = np.linspace(0.0, 3.0, 7)
    evolution = evolve_density(
        projector(fock_state(space, 3)), times, space, p, ConstantDrive(), SolverConfig(rtol=1e-10, atol=1e-12)
    )
    expected = 3.0 * np.exp(-p.gamma * times)
    error = float(np.max(np.abs(evolution.mean_excitation() - expected)))
    return error <= 1e-6, f"max |<n>(t) - 3 exp(-t)| = {error:.1e}"


def check_scaling_identity() -> Tuple[bool, str]:
    p = ModelParams(delta=-8.0, chi=2.0, omega_drive=2.7)
    times = np.linspace(0.0, 5.0, 51)
    alpha0 = 0.3 - 0.2j
    lam = 2.0
    base = integrate_amplitude(alpha0, times, p, ConstantDrive())
    scaled = integrate_amplitude(lam * alpha0, times, scale_params(p, lam), ConstantDrive())
    error = float(np.max(np.abs(scaled.alpha - lam * base.alpha)))
    return error <= 1e-6, f"max |alpha_lambda - lambda alpha| = {error:.1e}"


def check_seed_partition() -> Tuple[bool, str]:
    space = make_fock_space(10)
    p = ModelParams(delta=-8.0, chi=2.0, omega_drive=2.7)
    times = np.linspace(0.0, 0.2, 5)
    cfg = QSDConfig(dt=1e-3)
    psi0 = fock_state(space, 0)
    whole = ensemble_run(psi0, times, [1, 2, 3, 4], space, p, ConstantDrive(), cfg)
    first = ensemble_run(psi0, times, [3, 1], space, p, ConstantDrive(), cfg)
    second = ensemble_run(psi0, times, [4, 2], space, p, ConstantDrive(), cfg)
    merged = first.merge(second)
    difference = float(np.max(np.abs(whole.mean_excitation - merged.mean_excitation)))
    return difference <= 1e-12, f"max |full - merged| = {difference:.1e}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("wigner-vacuum-peak", check_vacuum_peak),
    ("wigner-fock1-origin", check_single_photon_origin),
    ("wigner-normalization", check_grid_normalization),
    ("wigner-displaced-parity", check_displaced_parity),
    ("master-invariants", check_master_invariants),
    ("master-decay-law", check_decay_law),
    ("classical-scaling", check_scaling_identity),
    ("qsd-seed-partition", check_seed_partition),
]


def run_checks() -> List[CheckResult]:
    """Run every check; an exception counts as a failure of that check."""
    results = []
    for name, check in CHECKS:
        started = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - started
        results.append(CheckResult(name, passed, detail, elapsed))
        if passed:
            logger.info(f"PASS {name}: {detail} ({elapsed:.2f}s)")
        else:
            logger.error(f"FAIL {name}: {detail}")
    return results
