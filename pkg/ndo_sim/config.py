"""Environment configuration for ndo-sim."""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from loguru import logger

from .semiclassical import DampingConvention

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


class Config:
    """Defaults for runs, read from the environment."""

    def __init__(self, env_file: Optional[str] = None) -> None:
        """Initialize configuration.

        Args:
            env_file: Path to .env file. If None, uses .env in the working directory.
        """
        if env_file is None:
            env_file = str(Path.cwd() / ".env")

        if Path(env_file).exists():
            load_dotenv(env_file)
            logger.info(f"Loaded configuration from {env_file}")
        else:
            logger.debug(f"No .env file found at {env_file}")

    @property
    def output_root(self) -> Path:
        """Get the directory under which run bundles are written."""
        return Path(os.getenv("NDO_OUTPUT_ROOT", "ndo-runs"))

    @property
    def log_level(self) -> str:
        """Get log level."""
        return os.getenv("LOG_LEVEL", "INFO").upper()

    @property
    def damping_convention(self) -> str:
        """Get the default damping convention name."""
        return os.getenv("NDO_DAMPING_CONVENTION", DampingConvention.HALF.value).lower()

    @property
    def qsd_dt(self) -> float:
        """Get the default QSD step."""
        return float(os.getenv("NDO_QSD_DT", "2e-4"))

    @property
    def trajectories(self) -> int:
        """Get the default ensemble size."""
        return int(os.getenv("NDO_TRAJECTORIES", "50"))

    @property
    def workers(self) -> int:
        """Get the number of worker processes for ensembles and sweeps."""
        return int(os.getenv("NDO_WORKERS", "1"))

    @property
    def emit_plots(self) -> bool:
        """Whether bundles include plot scripts by default."""
        return os.getenv("NDO_EMIT_PLOTS", "false").strip().lower() in ("1", "true", "yes")

    def validate(self) -> bool:
        """Validate configuration.

        Returns:
            True if configuration is valid, False otherwise.
        """
        if self.log_level not in LOG_LEVELS:
            logger.error(f"LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
            return False

        if self.damping_convention not in {c.value for c in DampingConvention}:
            logger.error("NDO_DAMPING_CONVENTION must be 'half' or 'full'")
            return False

        try:
            dt, trajectories, workers = self.qsd_dt, self.trajectories, self.workers
        except ValueError as e:
            logger.error(f"Invalid numeric setting: {e}")
            return False

        if dt <= 0 or trajectories < 1 or workers < 1:
            logger.error("NDO_QSD_DT must be > 0, NDO_TRAJECTORIES and NDO_WORKERS >= 1")
            return False

        if self.output_root.exists() and not self.output_root.is_dir():
            logger.error(f"Output root is not a directory: {self.output_root}")
            return False

        logger.info("Configuration validated successfully")
        return True
