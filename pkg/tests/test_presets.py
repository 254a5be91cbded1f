"""Tests for the preset catalog."""

import math

import pytest

from ndo_sim.errors import UnknownPresetError
from ndo_sim.model import PulseTrain
from ndo_sim.presets import CHAOS_PERIOD, PresetCatalog, catalog

STEADY_STATE_TASKS = {"bistability", "hysteresis", "amplitude_sweep", "scaling", "interference"}


class TestCatalog:
    """Test lookup of named experiments."""

    def test_names(self):
        """Test the catalog size and ordering."""
        names = catalog.names()

        assert len(catalog) == 14
        assert names[0] == "fig1-hysteresis"
        assert "fig13-lyapunov-sweep" in names

    @pytest.mark.parametrize("name", PresetCatalog().names())
    def test_every_preset_validates(self, name):
        """Test that each preset parses into a valid configuration."""
        config = catalog.get(name)

        assert config.name == name

    @pytest.mark.parametrize(
        "prefix,expected",
        [
            ("fig7", "fig7-chaos-T0.25"),
            ("fig7-chaos", "fig7-chaos-T0.25"),
            ("fig1", "fig1-hysteresis"),
            ("fig12", "fig12-min-n"),
            ("fig2-bistable", "fig2-bistable"),
        ],
    )
    def test_prefix_resolution(self, prefix, expected):
        """Test that unique prefixes resolve."""
        assert catalog.resolve(prefix) == expected

    def test_ambiguous_prefix(self):
        """Test that a prefix matching many presets is rejected."""
        with pytest.raises(UnknownPresetError) as exc_info:
            catalog.resolve("fig")

        assert "fig1-hysteresis" in exc_info.value.available

    def test_unknown(self):
        """Test that unknown names list the alternatives."""
        assert "fig99" not in catalog
        assert "fig5" in catalog
        with pytest.raises(UnknownPresetError) as exc_info:
            catalog.get("fig99")

        assert "available" in str(exc_info.value)

    def test_get_returns_fresh_copies(self):
        """Test that changing one preset copy leaves the catalog alone."""
        first = catalog.get("fig2")
        first.model.omega_drive = 99.0

        assert catalog.get("fig2").model.omega_drive == 2.7


class TestPresetValues:
    """Test the published parameter values."""

    def test_bistable(self):
        """Test the bistability parameters."""
        config = catalog.get("fig2-bistable")

        assert (config.model.delta, config.model.chi, config.model.omega_drive) == (-8.0, 2.0, 2.7)
        assert config.fock_dim == 30
        assert config.task == "bistability"

    def test_hysteresis_sweep(self):
        """Test the hysteresis sweep range."""
        config = catalog.get("fig1-hysteresis")

        assert config.model.delta == -15.0
        assert config.sweep.omega_values[0] == 0.0
        assert config.sweep.omega_values[-1] == 6.0

    @pytest.mark.parametrize(
        "name,width",
        [("fig7", 0.25), ("fig8", 0.205), ("fig9", 0.15), ("fig10", 0.1)],
    )
    def test_chaos_widths(self, name, width):
        """Test the pulse widths of the chaos presets."""
        config = catalog.get(name)
        env = config.envelope

        assert isinstance(env, PulseTrain)
        assert env.width == width
        assert env.period == pytest.approx(2.0 * math.pi / 5.0)
        assert config.model.omega_drive == 20.4
        assert config.model.chi == 0.7

    def test_snapshot_times(self):
        """Test the maximum and minimum snapshot presets."""
        assert catalog.get("fig11").t_final == 100.6
        assert catalog.get("fig12").t_final == 100.4

    def test_lyapunov_sweep(self):
        """Test the Lyapunov sweep grid and references."""
        config = catalog.get("fig13")

        assert config.sweep.omega_values[0] == 1.0
        assert config.sweep.omega_values[-1] == 26.0
        assert len(config.sweep.omega_values) == 51
        assert config.sweep.compare_conventions
        assert config.reference["chaos_onset"] == 12.55

    def test_chaos_period(self):
        """Test the drive period constant."""
        assert CHAOS_PERIOD == pytest.approx(1.2566370614359172)

    @pytest.mark.parametrize("name", PresetCatalog().names())
    def test_quantum_steady_states_use_direct_solve(self, name):
        """Test that presets needing a quantum steady state solve for it directly."""
        config = catalog.get(name)
        needs_steady_state = config.task in STEADY_STATE_TASKS and config.engine != "semiclassical"

        if needs_steady_state:
            assert config.steady_config().method == "nullspace"
