"""Experiment runner: resolves a configuration, runs its task and writes the bundle."""

import asyncio
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from loguru import logger

from .artifacts import ArtifactBundle
from .config import Config
from .experiment import ExperimentConfig, load_config
from .presets import catalog
from .tasks import run_task


@dataclass
class RunResult:
    """Outcome of one experiment run."""

    config: ExperimentConfig
    output_dir: Path
    metadata_path: Path
    summary: Dict[str, Any]
    runtime_seconds: float


class ExperimentRunner:
    """Runs experiments off the event loop and writes their bundles."""

    def __init__(self, config: Optional[Config] = None, configure_logging: bool = True) -> None:
        """Initialize the runner.

        Args:
            config: Environment configuration. If None, creates default config.
            configure_logging: Replace loguru's handlers with the runner's stderr sink.
        """
        self.config = config or Config()

        if configure_logging:
            logger.remove()
            logger.add(
                sys.stderr,
                level=self.config.log_level,
                format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
                       "<level>{level: <8}</level> | "
                       "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
                       "<level>{message}</level>"
            )

        logger.debug("Experiment runner initialized")

    def output_dir_for(self, experiment: ExperimentConfig, out_dir: Optional[str] = None) -> Path:
        """Directory of the bundle: explicit argument, then config, then the output root."""
        if out_dir:
            return Path(out_dir)
        if experiment.output_dir:
            return Path(experiment.output_dir)
        return self.config.output_root / experiment.name

    def execute(self, experiment: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
        """Run synchronously; errors propagate to the caller."""
        experiment.validate()
        target = self.output_dir_for(experiment, out_dir)
        bundle = ArtifactBundle(target, emit_plots=self.config.emit_plots)

        logger.info(f"Starting '{experiment.name}' -> {target}")
        started = time.perf_counter()
        summary = run_task(experiment, bundle)
        runtime = time.perf_counter() - started

        uses_seeds = experiment.engine in ("qsd", "all")
        metadata_path = bundle.finalize(
            experiment.to_dict(),
            summary,
            runtime,
            seeds=experiment.seed_list() if uses_seeds else None,
        )
        logger.info(f"Finished '{experiment.name}' in {runtime:.1f}s")
        return RunResult(experiment, target, metadata_path, summary, runtime)

    async def run(self, experiment: ExperimentConfig, out_dir: Optional[str] = None) -> RunResult:
        """Run an experiment in the default executor."""
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, self.execute, experiment, out_dir)

    async def run_preset(self, name: str, out_dir: Optional[str] = None, **overrides: Any) -> RunResult:
        """Run a named preset, applying CLI-style overrides."""
        experiment = catalog.get(name).with_overrides(**overrides)
        return await self.run(experiment, out_dir)

    async def run_config(self, path: str, out_dir: Optional[str] = None, **overrides: Any) -> RunResult:
        """Run an experiment read from a JSON file."""
        experiment = load_config(path).with_overrides(**overrides)
        return await self.run(experiment, out_dir)
