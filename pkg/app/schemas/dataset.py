from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.blur_map import FGBG_LEVELS


class FgBgRecipe(BaseModel):
    """
    One foreground/background composite: the salient image is cut out by `mask`,
    blurred with radius FGBG_LEVELS[k1] and blended over the background blurred with
    FGBG_LEVELS[k2].
    """
    salient: Any
    mask: Any
    background: Any
    k1: int = Field(..., ge=0, lt=len(FGBG_LEVELS))
    k2: int = Field(..., ge=0, lt=len(FGBG_LEVELS))
    recipe_id: str = "fgbg"

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("mask")
    @classmethod
    def mask_is_binary(cls, v):
        arr = np.asarray(v)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask must be binary (0/1)")
        return arr.astype(bool)

    @model_validator(mode="after")
    def near_blur_below_far_blur(self):
        if not FGBG_LEVELS[self.k1] < FGBG_LEVELS[self.k2]:
            raise ValueError("foreground radius must be strictly below background radius (k1 < k2)")
        return self

    @property
    def radii(self) -> tuple[float, float]:
        return FGBG_LEVELS[self.k1], FGBG_LEVELS[self.k2]


class ManifestRecord(BaseModel):
    image: str                 # path relative to the dataset root
    x: int = Field(..., ge=0)
    y: int = Field(..., ge=0)
    label: int = Field(..., ge=0)
    recipe: str
    kind: Literal["blur", "edge"] = "blur"

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"image": "images/cat_L11.png", "x": 40, "y": 17, "label": 10,
                        "recipe": "cat_L11", "kind": "blur"}
        },
    )
