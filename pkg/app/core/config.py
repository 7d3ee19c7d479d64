from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Edge detection
    canny_sigma: float = Field(1.0, gt=0)
    canny_low: float = Field(0.1, gt=0, le=1)
    canny_high: float = Field(0.2, gt=0, le=1)

    # Guide simplification and sparse-to-dense propagation
    simplify_sigma_s: float = Field(7.0, gt=0)
    simplify_sigma_r: float = Field(0.5, gt=0)
    propagate_sigma_s: Optional[float] = Field(None, gt=0)  # None -> min(H, W) / 8
    propagate_sigma_r: float = Field(3.75, gt=0)
    psi: float = Field(100.0, ge=0)
    dt_iterations: int = Field(3, ge=1)

    # Networks
    weights_b: str = "bnet.cwts"
    weights_e: str = "enet.cwts"
    batch_size: int = Field(256, ge=1)
    threads: int = Field(1, ge=1)
    network_cache_ttl: int = Field(300, ge=0)

    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="BLURMAP_",
        extra="ignore",
        case_sensitive=False,
    )

settings = Settings()
