# config.py
import copy
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Annotated, Literal

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOGGER_NAME = "presymplectic-strata"
TXT_REPORT_TEMPLATE = "report_template.txt"
REPORT_HEADER = "# presymplectic-strata report v1"
MANIFEST_HEADER = "# presymplectic-strata manifest v1"
DEFAULT_TOML_PATH = Path(__file__).parent / "default.toml"

logger = logging.getLogger(LOGGER_NAME)


class LogSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    file: Path = Path("./presymplectic_strata.log")
    encoding: str = "utf-8"
    format: str = "%(asctime)s %(name)s %(levelname)s: %(message)s"
    date_format: str = "%Y-%m-%d %H:%M:%S"
    console: bool = False


class NumericSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    gap_factor: Annotated[
        float,
        Field(gt=1, description="Minimum singular-value ratio accepted as a rank gap"),
    ] = 1e6
    zero_floor: Annotated[
        float,
        Field(gt=0, description="Largest singular value still read as the zero form"),
    ] = 1e-12
    newton_iterations: Annotated[int, Field(gt=0)] = 50
    newton_tolerance: Annotated[float, Field(gt=0)] = 1e-13


class SamplingSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    seed: int = 7
    workers: Annotated[int, Field(ge=1)] = 1
    samples_per_stratum: Annotated[int, Field(gt=0)] = 20
    pca_radius: Annotated[float, Field(gt=0)] = 1e-3
    pca_neighbors: Annotated[int, Field(gt=2)] = 24


class WhitneySettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    tolerance: Annotated[float, Field(gt=0)] = 1e-6
    sequence_length: Annotated[int, Field(ge=3)] = 12
    sequences: Annotated[int, Field(ge=1)] = 4


class JetSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    base_order: Annotated[int, Field(ge=0, description="D_base")] = 4
    fiber_order: Annotated[int, Field(ge=0, description="D_fiber")] = 3
    max_arity: Annotated[int, Field(ge=1, description="K_max")] = 4
    trials: Annotated[int, Field(ge=1)] = 3


class MoserSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    @model_validator(mode="after")
    def check_tolerances(self):
        if self.quadrature_tolerance >= self.residual_tolerance:
            raise ValueError(
                "quadrature_tolerance must be smaller than residual_tolerance"
            )
        return self

    steps: Annotated[int, Field(ge=1)] = 32
    quadrature_tolerance: Annotated[float, Field(gt=0)] = 1e-10
    residual_tolerance: Annotated[float, Field(gt=0)] = 1e-6
    halving_factor: Annotated[float, Field(gt=1)] = 8.0
    samples: Annotated[int, Field(gt=0)] = 100


class GaugeSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    steps: Annotated[int, Field(ge=1)] = 8
    max_terms: Annotated[int, Field(ge=1, description="adjoint series cap")] = 24
    kernel_times: Annotated[int, Field(ge=2)] = 3


class TangentComplexSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    include_degree_zero: bool = False


class ReportSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    template: str = TXT_REPORT_TEMPLATE
    csv_delimiter: str = ","
    float_digits: Annotated[int, Field(ge=1, le=17)] = 12


class AppSettings(BaseSettings):
    model_config = SettingsConfigDict(
        extra="ignore",
    )

    logging: LogSettings = LogSettings()
    numeric: NumericSettings = NumericSettings()
    sampling: SamplingSettings = SamplingSettings()
    whitney: WhitneySettings = WhitneySettings()
    jets: JetSettings = JetSettings()
    moser: MoserSettings = MoserSettings()
    gauge: GaugeSettings = GaugeSettings()
    tangent_complex: TangentComplexSettings = TangentComplexSettings()
    report: ReportSettings = ReportSettings()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="STRATA_",  # Prefix for environment variables
        env_ignore_empty=True,
        env_nested_delimiter="__",
        extra="ignore",
    )
    app: AppSettings = AppSettings()
    seed: int | None = None  # STRATA_SEED overrides app.sampling.seed

    @property
    def effective_seed(self) -> int:
        return self.seed if self.seed is not None else self.app.sampling.seed


def _deep_merge_dicts(a: dict, b: Mapping) -> dict:
    """Recursively merge dict b into dict a (b has precedence)."""
    result = copy.deepcopy(a)
    for k, v in b.items():
        if k in result and isinstance(result[k], Mapping) and isinstance(v, Mapping):
            result[k] = _deep_merge_dicts(result[k], v)
        else:
            result[k] = v
    return result


def load_settings_from_toml(toml_path: str | Path | None = None) -> Settings:
    """Load settings from the packaged defaults, merged with an optional user TOML."""
    with open(DEFAULT_TOML_PATH, "rb") as f:
        merged_data = tomllib.load(f)
    if toml_path:
        with open(Path(toml_path), "rb") as f:
            user_data = tomllib.load(f)
        merged_data = _deep_merge_dicts(merged_data, user_data)
    logger.debug(f"Loaded settings from {toml_path or DEFAULT_TOML_PATH}")
    return Settings(**merged_data)
