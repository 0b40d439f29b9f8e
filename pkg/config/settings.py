"""Configuration settings for the application."""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()


class Settings:
    """Application settings and configuration."""

    # Parallel Processing Configuration
    MAX_CONCURRENT_WORKERS: int = int(os.getenv("REMQST_THREADS", "4"))

    # Output Configuration
    DEFAULT_OUTPUT_DIR: str = os.getenv("REMQST_OUTPUT_DIR", "./output")

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("REMQST_LOG_LEVEL", "INFO")

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("REMQST_DEFAULT_SEED", "1234"))

    TOOL_NAME: str = "remqst"
    TOOL_VERSION: str = "0.3.0"

    @classmethod
    def get_max_workers(cls) -> int:
        """Get the maximum number of concurrent workers for parallel processing."""
        override = os.getenv("REMQST_THREADS")
        if override is not None:
            return max(1, int(override))
        return max(1, cls.MAX_CONCURRENT_WORKERS)

    @classmethod
    def get_output_dir(cls) -> str:
        """Get the default output directory."""
        return cls.DEFAULT_OUTPUT_DIR

    @classmethod
    def get_log_level(cls) -> str:
        """Get the log level name used by the command-line front end."""
        return cls.LOG_LEVEL.upper()

    @classmethod
    def get_default_seed(cls) -> int:
        """Get the seed used when neither the config nor the CLI provides one."""
        return cls.DEFAULT_SEED


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances shared by the library and its tests."""

    hermitian: float = 1e-12
    trace: float = 1e-10
    psd: float = 1e-10
    effect_upper: float = 1e-10
    completeness: float = 1e-9
    trace_preserving: float = 1e-9
    probability: float = 1e-10
    probability_sum: float = 1e-9
    sqrt_clamp: float = 1e-8
    fidelity_upper: float = 1e-9
    purity: float = 1e-8
    unitary: float = 1e-10
    likelihood_floor: float = 1e-300
    ratio_floor: float = 1e-12
    centroid_separation: float = 1e-6
    ic_rank: float = 1e-9


TOL = Tolerances()
