"""
Configuration for qroute
All tunable constants live in one settings block; every field can be
overridden with a QROUTE_<NAME> environment variable or a .env file.
"""

from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Constants block shared by every module"""

    model_config = SettingsConfigDict(env_prefix="QROUTE_", extra="ignore")

    # Walk detection
    walk_c1: float = Field(9.0, ge=1.0)
    walk_t_scale: float = Field(80.0, gt=0.0)
    walk_repetition_constant: float = Field(48.0, gt=0.0)
    walk_threshold_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    overlap_c2: float = Field(4.0, gt=0.0)

    # Message size: a word is max(ceil(log2 n), min_word_bits) bits
    word_budget: int = Field(4, ge=1)
    min_word_bits: int = Field(8, ge=1)

    # Algorithm round constants
    ping_round_constant: float = Field(4.0, gt=0.0)
    merge_round_factor: float = Field(2.0, gt=0.0)
    cover_congestion_constant: float = Field(2.0, gt=0.0)

    # Grover schedule
    grover_stage_growth: float = Field(1.2, gt=1.0)
    grover_stage_budget: float = Field(13.5, gt=0.0)
    grover_alpha_exponent: float = Field(2.0, gt=0.0)

    # Numerics
    dense_solve_limit: int = Field(2000, ge=1)
    cg_rtol: float = Field(1e-10, gt=0.0)
    dense_dimension_limit: int = Field(4000, ge=4)
    exact_step_budget: int = Field(50_000_000, ge=1)
    exact_node_limit: int = Field(64, ge=1)

    # Bookkeeping
    transcript_window: int = Field(4096, ge=1)
    lb_pair_budget: int = Field(200_000, ge=1)
    database_url: str = "sqlite:///./data/results.db"
    log_level: str = "INFO"

    def override(self, assignments: dict) -> "Settings":
        """Return a copy with the given constants replaced (validated)"""
        unknown = sorted(set(assignments) - set(type(self).model_fields))
        if unknown:
            raise KeyError(f"unknown constant(s): {', '.join(unknown)}")
        merged = {**self.model_dump(), **assignments}
        return type(self).model_validate(merged)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings built once from the environment"""
    return Settings()
