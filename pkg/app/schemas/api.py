from pydantic import BaseModel, ConfigDict


class BlurMapSummary(BaseModel):
    height: int
    width: int
    edge_pixels: int
    pattern_pixels: int
    depth_pixels: int
    coverage: float
    blur_min: float
    blur_max: float
    blur_mean: float
    psi: float

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "height": 240, "width": 320, "edge_pixels": 5120, "pattern_pixels": 4410,
                "depth_pixels": 710, "coverage": 0.998, "blur_min": 0.5, "blur_max": 4.75,
                "blur_mean": 2.31, "psi": 100.0,
            }
        }
    )


class NetworkSummary(BaseModel):
    name: str
    parameters: int
    mflops: float
    classes: int
    layers: int
