"""Wigner quasi-probability of truncated density matrices.

Phase space uses alpha = x + i y with the vacuum at (2/pi) exp(-2|alpha|^2),
so the distribution integrates to one and is bounded by 2/pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import trapezoid
from scipy.linalg import expm
from scipy.ndimage import maximum_filter

from .master import DensityMatrix, check_density_matrix

MIN_POINTS = 32
NORMALIZATION_TOL = 1e-2
PEAK_THRESHOLD = 1e-3
# Standard deviation of the vacuum distribution exp(-2|alpha|^2) along each axis.
MIN_PEAK_SEPARATION = 0.5
DISPLACEMENT_PADDING = 20


@dataclass(frozen=True)
class GridSpec:
    """Rectangular phase-space window sampled uniformly."""

    x_min: float = -5.0
    x_max: float = 5.0
    y_min: float = -5.0
    y_max: float = 5.0
    points: int = 201

    def __post_init__(self) -> None:
        if self.points < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} points per axis")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("grid ranges must be increasing")

    @classmethod
    def square(cls, extent: float = 5.0, points: int = 201) -> "GridSpec":
        return cls(-extent, extent, -extent, extent, points)

    def expanded(self, factor: float) -> "GridSpec":
        return GridSpec(
            self.x_min * factor,
            self.x_max * factor,
            self.y_min * factor,
            self.y_max * factor,
            self.points,
        )

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.points)


@dataclass
class WignerGrid:
    """W sampled on a grid; values[j, i] belongs to (x[i], y[j])."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    normalization: float = 1.0
    support_warning: bool = False
    peaks: List[Tuple[float, float, float]] = field(default_factory=list)

    @property
    def normalization_residual(self) -> float:
        return abs(self.normalization - 1.0)

    def metadata(self) -> dict:
        return {
            "x_range": [float(self.x[0]), float(self.x[-1])],
            "y_range": [float(self.y[0]), float(self.y[-1])],
            "points": [int(self.x.size), int(self.y.size)],
            "normalization": self.normalization,
            "normalization_residual": self.normalization_residual,
            "support_warning": self.support_warning,
            "min": float(self.values.min()),
            "max": float(self.values.max()),
        }


def _laguerre_series(order: int, x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Clenshaw sum of c_n (-1)^n sqrt(order! n!/(order+n)!) L_n^order(x)."""
    if coeffs.size == 1:
        y0, y1 = coeffs[0], 0.0
    elif coeffs.size == 2:
        y0, y1 = coeffs[0], coeffs[1]
    else:
        k = coeffs.size
        y0, y1 = coeffs[-2], coeffs[-1]
        for i in range(3, coeffs.size + 1):
            k -= 1
            y0, y1 = (
                coeffs[-i] - y1 * math.sqrt((k - 1) * (order + k - 1) / ((order + k) * k)),
                y0 - y1 * ((order + 2 * k - 1) - x) / math.sqrt((order + k) * k),
            )
    return y0 - y1 * ((order + 1) - x) / math.sqrt(order + 1)


def _wigner_values(rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    dim = rho.shape[0]
    two_alpha = 2.0 * alpha
    radius = np.abs(two_alpha) ** 2
    weighted = rho * (2.0 * np.ones((dim, dim)) - np.eye(dim))
    total = weighted[0, -1] * np.ones_like(two_alpha)
    for order in range(dim - 2, -1, -1):
        total = _laguerre_series(order, radius, np.diagonal(weighted, order)) + (
            total * two_alpha / math.sqrt(order + 1)
        )
    return np.real(total) * np.exp(-0.5 * radius) * (2.0 / math.pi)


def _evaluate(rho: np.ndarray, spec: GridSpec) -> WignerGrid:
    x, y = spec.x, spec.y
    xx, yy = np.meshgrid(x, y)
    values = _wigner_values(rho, xx + 1j * yy)
    normalization = float(trapezoid(trapezoid(values, x, axis=1), y))
    grid = WignerGrid(x=x, y=y, values=values, normalization=normalization)
    grid.support_warning = grid.normalization_residual > NORMALIZATION_TOL
    return grid


def wigner_grid(
    rho: DensityMatrix,
    spec: Optional[GridSpec] = None,
    auto_expand: bool = False,
    max_expansions: int = 3,
    state_tol: float = 1e-6,
) -> WignerGrid:
    """Sample the Wigner function of rho on the grid described by spec.

    If the grid misses part of the state's support the normalization check
    fails and the result carries support_warning; with auto_expand the
    window is widened by half its size until the check passes.
    """
    spec = spec or GridSpec()
    rho = np.asarray(rho, dtype=complex)
    check_density_matrix(rho, herm_tol=state_tol, trace_tol=state_tol, eig_tol=state_tol)

    grid = _evaluate(rho, spec)
    expansions = 0
    while grid.support_warning and auto_expand and expansions < max_expansions:
        spec = spec.expanded(1.5)
        expansions += 1
        logger.debug(f"Expanding Wigner grid to x in [{spec.x_min:g}, {spec.x_max:g}]")
        grid = _evaluate(rho, spec)
    if grid.support_warning:
        logger.warning(
            f"Wigner grid misses state support: normalization {grid.normalization:.4f}"
        )
    grid.peaks = find_peaks(grid)
    return grid


def negativity_volume(w: WignerGrid) -> float:
    """Integral of |W| minus one, twice the negative volume of a normalized W.

    Grid truncation shows up here as an offset of w.normalization - 1.
    """
    absolute = trapezoid(trapezoid(np.abs(w.values), w.x, axis=1), w.y)
    return float(absolute - 1.0)


def find_peaks(
    w: WignerGrid,
    threshold: float = PEAK_THRESHOLD,
    min_separation: float = MIN_PEAK_SEPARATION,
) -> List[Tuple[float, float, float]]:
    """Local maxima of W above threshold * max(W), highest first.

    A candidate must exceed all 8 grid neighbors. Candidates within
    min_separation of a higher peak merge into it.
    """
    values = w.values
    footprint = np.ones((3, 3), dtype=bool)
    footprint[1, 1] = False
    neighbors = maximum_filter(values, footprint=footprint, mode="constant", cval=-np.inf)
    mask = values > neighbors
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    mask &= values > threshold * values.max()
    rows, cols = np.nonzero(mask)
    candidates = sorted(
        ((float(w.x[c]), float(w.y[r]), float(values[r, c])) for r, c in zip(rows, cols)),
        key=lambda peak: peak[2],
        reverse=True,
    )
    peaks: List[Tuple[float, float, float]] = []
    for x, y, value in candidates:
        if all(math.hypot(x - px, y - py) >= min_separation for px, py, _ in peaks):
            peaks.append((x, y, value))
    return peaks


def quadrature_marginal(w: WignerGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Distribution of the x quadrature, W integrated over y."""
    return w.x, trapezoid(w.values, w.y, axis=0)


def quadrature_distribution(rho: DensityMatrix, x: np.ndarray) -> np.ndarray:
    """<x|rho|x> for the quadrature X = (a + a^dagger)/2, from Hermite functions."""
    rho = np.asarray(rho, dtype=complex)
    q = math.sqrt(2.0) * np.asarray(x, dtype=float)
    functions = np.empty((rho.shape[0], q.size))
    functions[0] = math.pi**-0.25 * np.exp(-0.5 * q * q)
    if rho.shape[0] > 1:
        functions[1] = math.sqrt(2.0) * q * functions[0]
    for n in range(1, rho.shape[0] - 1):
        functions[n + 1] = (
            math.sqrt(2.0 / (n + 1)) * q * functions[n]
            - math.sqrt(n / (n + 1)) * functions[n - 1]
        )
    density = np.einsum("nx,nm,mx->x", functions, rho, functions)
    return math.sqrt(2.0) * np.real(density)


def displaced_parity_value(rho: DensityMatrix, alpha: complex) -> float:
    """W(alpha) = (2/pi) Tr[D(alpha)^dagger rho D(alpha) P] with an explicit D.

    D is built in a space of dim + 4|alpha|^2 + padding levels so its
    truncation does not reach the populated block of rho.
    """
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    size = dim + int(math.ceil(4.0 * abs(alpha) ** 2)) + DISPLACEMENT_PADDING
    a = np.diag(np.sqrt(np.arange(1, size, dtype=float)), k=1).astype(complex)
    displacement = expm(alpha * a.conj().T - np.conj(alpha) * a)
    padded = np.zeros((size, size), dtype=complex)
    padded[:dim, :dim] = rho
    displaced = displacement.conj().T @ padded @ displacement
    parity = (-1.0) ** np.arange(size)
    return float((2.0 / math.pi) * np.real(np.sum(parity * np.diagonal(displaced))))
