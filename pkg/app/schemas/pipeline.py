from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.core.config import Settings
from app.schemas.params import SIMPLIFY_PARAMS, CannyParams, DtParams, propagation_params


class PipelineConfig(BaseModel):
    canny: CannyParams = CannyParams()
    simplify: DtParams = SIMPLIFY_PARAMS
    propagate_sigma_s: Optional[float] = Field(None, gt=0)   # None -> min(H, W) / 8
    propagate_sigma_r: float = Field(3.75, gt=0)
    psi: float = Field(100.0, ge=0)
    iterations: int = Field(3, ge=1)
    weights_b: Path = Path("bnet.cwts")
    weights_e: Path = Path("enet.cwts")
    batch_size: int = Field(256, ge=1)
    threads: int = Field(1, ge=1)
    post_filter: Literal["none", "connected-median"] = "none"

    model_config = ConfigDict(frozen=True)

    def propagation(self, height: int, width: int) -> DtParams:
        return propagation_params(height, width, psi=self.psi, sigma_r=self.propagate_sigma_r,
                                  sigma_s=self.propagate_sigma_s, iterations=self.iterations)

    @classmethod
    def from_settings(cls, settings: Settings, **overrides) -> "PipelineConfig":
        """Settings values, replaced by any override that is not None."""
        values = dict(
            canny=CannyParams(sigma=settings.canny_sigma, low_frac=settings.canny_low,
                              high_frac=settings.canny_high),
            simplify=DtParams(sigma_s=settings.simplify_sigma_s, sigma_r=settings.simplify_sigma_r,
                              psi=0.0, iterations=settings.dt_iterations),
            propagate_sigma_s=settings.propagate_sigma_s,
            propagate_sigma_r=settings.propagate_sigma_r,
            psi=settings.psi,
            iterations=settings.dt_iterations,
            weights_b=Path(settings.weights_b),
            weights_e=Path(settings.weights_e),
            batch_size=settings.batch_size,
            threads=settings.threads,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
