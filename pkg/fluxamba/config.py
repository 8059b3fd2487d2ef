"""Configuration settings for fluxamba."""

from enum import StrEnum

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class LogLevel(StrEnum):
    """Enumeration of available logging levels.

    Used to specify the verbosity of logging output throughout the application.
    """

    debug = "debug"
    info = "info"
    warning = "warning"
    error = "error"
    critical = "critical"


class Precision(StrEnum):
    """Floating point precision of tensors."""

    f32 = "f32"
    f64 = "f64"


class Settings(BaseSettings):
    """Process-wide settings.

    Loaded from environment variables with the 'fluxamba_' prefix or from a .env
    file in the working directory. Command-line flags override these defaults.
    """

    # log
    log_formatter: str = (
        "asctime=%(asctime)s level=%(levelname)s pathname=%(pathname)s line=%(lineno)s message=%(message)s"
    )
    log_level: LogLevel = LogLevel.info

    # reproducibility
    seed: int = Field(default=42, ge=0)

    # model defaults
    variant: str = "tiny"
    input_size: int = Field(default=64, ge=32)
    dtype: Precision = Precision.f32

    # benchmark
    bench_repeat: int = Field(default=1000, ge=1)

    # load .env
    model_config = SettingsConfigDict(env_file=".env", env_prefix="fluxamba_")

    @field_validator("input_size")
    def validate_input_size(cls, v: int):
        """Validate that the default input size fits the encoder's total stride.

        Args:
            v: The input size to validate.

        Returns:
            The validated input size.

        Raises:
            ValueError: If the size is not a multiple of 32.
        """
        if v % 32 != 0:
            raise ValueError("must be a multiple of 32")
        return v

    @field_validator("variant")
    def validate_variant(cls, v: str):
        """Validate the default variant name.

        Args:
            v: The variant name to validate.

        Returns:
            The validated variant name.

        Raises:
            ValueError: If the variant is unknown.
        """
        if v not in ("micro", "tiny", "small", "base", "large"):
            raise ValueError("must be one of micro, tiny, small, base, large")
        return v


settings = Settings()
