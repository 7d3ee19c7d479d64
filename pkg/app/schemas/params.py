from pydantic import BaseModel, ConfigDict, Field, model_validator


class CannyParams(BaseModel):
    sigma: float = Field(1.0, gt=0)
    low_frac: float = Field(0.1, gt=0, le=1)
    high_frac: float = Field(0.2, gt=0, le=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def low_below_high(self):
        if not self.low_frac < self.high_frac:
            raise ValueError("low_frac must be strictly below high_frac")
        return self


class DtParams(BaseModel):
    """Domain-transform filter parameters."""
    sigma_s: float = Field(..., gt=0)
    sigma_r: float = Field(..., gt=0)
    psi: float = Field(0.0, ge=0)
    iterations: int = Field(3, ge=1)

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"sigma_s": 45.0, "sigma_r": 3.75, "psi": 100.0, "iterations": 3}
        },
    )


SIMPLIFY_PARAMS = DtParams(sigma_s=7.0, sigma_r=0.5, psi=0.0, iterations=3)


def propagation_params(height: int, width: int, psi: float = 100.0,
                       sigma_r: float = 3.75, sigma_s: float | None = None,
                       iterations: int = 3) -> DtParams:
    """Default propagation parameters for an image of the given size."""
    if sigma_s is None:
        sigma_s = min(height, width) / 8.0
    return DtParams(sigma_s=sigma_s, sigma_r=sigma_r, psi=psi, iterations=iterations)
