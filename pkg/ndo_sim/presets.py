"""Catalog of named experiments, one per reference figure."""

from __future__ import annotations

import copy
import math
from typing import Any, Dict, List

from .errors import UnknownPresetError
from .experiment import ExperimentConfig, parse_config

CHAOS_PERIOD = 2.0 * math.pi / 5.0


def _steps(start: float, stop: float, step: float) -> List[float]:
    count = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(count + 1)]


_BISTABLE_MODEL = {"delta": -8.0, "chi": 2.0, "omega_drive": 2.7}
_CHAOS_MODEL = {"delta": -15.0, "chi": 0.7, "omega_drive": 20.4}


def _chaos(width: float, t_final: float, reference: Dict[str, float]) -> Dict[str, Any]:
    return {
        "task": "chaos",
        "engine": "all",
        "model": dict(_CHAOS_MODEL),
        "drive": {"kind": "pulse_train", "t0": 0.0, "width": width, "period": CHAOS_PERIOD},
        "fock_dim": 30,
        "t_final": t_final,
        "samples": 1001,
        "grid": {"extent": 5.0, "points": 201},
        "ensemble": {"trajectories": 50, "dt": 2e-4},
        "poincare": {"points": 500, "transient": 100},
        "reference": reference,
    }


_PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1-hysteresis": {
        "task": "hysteresis",
        "engine": "all",
        "model": {"delta": -15.0, "chi": 2.0, "omega_drive": 0.0},
        "fock_dim": 30,
        "solver": {"steady_method": "nullspace"},
        "sweep": {
            "omega_values": _steps(0.0, 6.0, 0.05),
            "check_omegas": _steps(0.5, 6.0, 0.5),
        },
    },
    "fig2-bistable": {
        "task": "bistability",
        "engine": "all",
        "model": dict(_BISTABLE_MODEL),
        "fock_dim": 30,
        "solver": {"steady_method": "nullspace"},
        "t_final": 20.0,
        "samples": 201,
        "ensemble": {"trajectories": 50, "dt": 2e-4, "switching_time": 200.0},
        "poincare": {"points": 50, "transient": 100, "period": 1.0},
    },
    "fig3-amplitude-sweep": {
        "task": "amplitude_sweep",
        "engine": "all",
        "model": dict(_BISTABLE_MODEL),
        "fock_dim": 30,
        "solver": {"steady_method": "nullspace"},
        "sweep": {"omega_values": [2.1, 2.3, 2.5, 2.7, 2.9, 3.1]},
    },
    "fig4-scaling": {
        "task": "scaling",
        "engine": "all",
        "model": dict(_BISTABLE_MODEL),
        "fock_dim": 60,
        "solver": {"steady_method": "nullspace"},
        "t_final": 20.0,
        "poincare": {"alpha0": [0.3, -0.2]},
        "sweep": {"scale_factors": [2.0, 3.0]},
    },
    "fig5-interference": {
        "task": "interference",
        "engine": "master",
        "model": dict(_BISTABLE_MODEL),
        "drive": {"kind": "pulse_train", "t0": 0.0, "width": 0.5, "period": 2.0},
        "fock_dim": 30,
        "solver": {"steady_method": "nullspace"},
        "t_final": 30.0,
        "sweep": {"widths": [0.5, 0.1], "periods": [2.0, 2.0]},
    },
    "fig6-purity": {
        "task": "purity",
        "engine": "master",
        "model": dict(_BISTABLE_MODEL),
        "drive": {"kind": "pulse_train", "t0": 0.0, "width": 0.5, "period": 2.5},
        "fock_dim": 30,
        "t_final": 30.0,
        "samples": 33,
        "sweep": {
            "widths": _steps(0.1, 1.0, 0.1),
            "periods": _steps(1.0, 5.0, 0.5),
        },
    },
    "fig7-chaos-T0.25": _chaos(
        0.25, 100.0, {"mean_excitation": 1.54, "min_excitation": 1.26, "max_excitation": 4.98}
    ),
    "fig8-chaos-T0.205": _chaos(
        0.205, 100.0, {"mean_excitation": 1.74, "min_excitation": 1.29, "max_excitation": 5.11}
    ),
    "fig9-chaos-T0.15": _chaos(
        0.15, 100.0, {"mean_excitation": 2.04, "min_excitation": 1.43, "max_excitation": 5.13}
    ),
    "fig10-chaos-T0.1": _chaos(
        0.1, 100.0, {"mean_excitation": 2.46, "min_excitation": 1.62, "max_excitation": 4.83}
    ),
    "fig11-max-n": _chaos(0.1, 100.6, {}),
    "fig12-min-n": _chaos(0.1, 100.4, {}),
    "fig13-lyapunov-sweep": {
        "task": "lyapunov_sweep",
        "engine": "semiclassical",
        "model": dict(_CHAOS_MODEL),
        "drive": {"kind": "pulse_train", "t0": 0.0, "width": 0.1, "period": CHAOS_PERIOD},
        "sweep": {
            "omega_values": _steps(1.0, 26.0, 0.5),
            "t0_schedule": {
                "max": [[19.0, 39.1], [26.0, 39.0]],
                "min": [[8.5, 40.2], [26.0, 40.1]],
            },
            "compare_conventions": True,
        },
        "reference": {"chaos_onset": 12.55, "transient_low": 17.61, "transient_high": 19.56},
    },
    "fig14-minmax-n": {
        "task": "minmax",
        "engine": "master",
        "model": dict(_CHAOS_MODEL),
        "drive": {"kind": "pulse_train", "t0": 0.0, "width": 0.1, "period": CHAOS_PERIOD},
        "fock_dim": 30,
        "t_final": 39.0,
        "samples": 64,
        "sweep": {"omega_values": _steps(1.0, 26.0, 0.5)},
        "reference": {"onset_min_excitation": 0.94, "onset_max_excitation": 2.70},
    },
}


class PresetCatalog:
    """Lookup of preset experiments by name.

    A name may be abbreviated to any prefix that identifies one preset,
    so "fig7" and "fig7-chaos" both resolve to "fig7-chaos-T0.25".
    """

    def __init__(self, presets: Dict[str, Dict[str, Any]] = _PRESETS) -> None:
        self._presets = presets

    def names(self) -> List[str]:
        return list(self._presets)

    def resolve(self, name: str) -> str:
        if name in self._presets:
            return name
        matches = [n for n in self._presets if n.startswith(f"{name}-") or n.startswith(name)]
        exact_prefix = [n for n in matches if n.startswith(f"{name}-")]
        if len(exact_prefix) == 1:
            return exact_prefix[0]
        if len(matches) == 1:
            return matches[0]
        raise UnknownPresetError(name, self.names())

    def get(self, name: str) -> ExperimentConfig:
        key = self.resolve(name)
        data = copy.deepcopy(self._presets[key])
        data["name"] = key
        return parse_config(data)

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except UnknownPresetError:
            return False
        return True

    def __len__(self) -> int:
        return len(self._presets)


catalog = PresetCatalog()
