from dataclasses import dataclass

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, Query, Request, Response
from fastapi.concurrency import run_in_threadpool

from app.core.config import settings
from app.core.errors import EmptyInputError, ImageIOError, InvalidArgumentError, WeightsIOError
from app.models.blur_map import RADIUS_MAX, EstimateResult
from app.models.edge_map import EdgeLabel
from app.schemas.api import BlurMapSummary
from app.schemas.pipeline import PipelineConfig
from app.services.io_service import image_from_bytes, image_to_png_bytes
from app.services.network_service import load_weights_cached
from app.services.pipeline_service import NetworkPredictor, Predictor, estimate_full

router = APIRouter(prefix="/blur-maps", tags=["Blur maps"])


@dataclass
class Predictors:
    bnet: Predictor
    enet: Predictor


async def get_predictors() -> Predictors:
    """
    Dependency that provides the B-NET / E-NET predictors loaded from the configured
    weight files (cached across requests).
    """
    try:
        bnet = await load_weights_cached(settings.weights_b, settings.network_cache_ttl)
        enet = await load_weights_cached(settings.weights_e, settings.network_cache_ttl)
    except WeightsIOError as exc:
        raise HTTPException(status_code=503, detail=f"network weights unavailable: {exc}")
    return Predictors(
        bnet=NetworkPredictor.from_store("bnet", bnet, settings.batch_size, settings.threads),
        enet=NetworkPredictor.from_store("enet", enet, settings.batch_size, settings.threads),
    )


async def _estimate(request: Request, psi: float, predictors: Predictors) -> EstimateResult:
    payload = await request.body()
    cfg = PipelineConfig.from_settings(settings, psi=psi)
    try:
        img = image_from_bytes(payload)
        return await run_in_threadpool(estimate_full, img, cfg, bnet=predictors.bnet, enet=predictors.enet)
    except (InvalidArgumentError, ImageIOError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except EmptyInputError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@router.post("", response_model=BlurMapSummary)
async def estimate_blur_map(
    request: Request,
    psi: float = Query(100.0, ge=0, description="depth-edge penalty; 0 disables blocking"),
    predictors: Predictors = Depends(get_predictors),
):
    """
    Estimate the dense blur map of the image sent as request body (PNG, PGM or PPM).

    ### Example
    **Request**
    ```
    POST /blur-maps?psi=100
    Content-Type: image/png
    <binary PNG>
    ```

    **Response**
    ```json
    {"height": 240, "width": 320, "edge_pixels": 5120, "pattern_pixels": 4410,
     "depth_pixels": 710, "coverage": 0.998, "blur_min": 0.5, "blur_max": 4.75,
     "blur_mean": 2.31, "psi": 100.0}
    ```
    """
    result = await _estimate(request, psi, predictors)
    covered = result.dense[result.coverage]
    h, w = result.dense.shape
    return BlurMapSummary(
        height=h,
        width=w,
        edge_pixels=int(result.edges.edges.sum()),
        pattern_pixels=int(result.edges.mask(EdgeLabel.PATTERN).sum()),
        depth_pixels=int(result.edges.mask(EdgeLabel.DEPTH).sum()),
        coverage=float(result.coverage.mean()),
        blur_min=float(covered.min()) if covered.size else 0.0,
        blur_max=float(covered.max()) if covered.size else 0.0,
        blur_mean=float(covered.mean()) if covered.size else 0.0,
        psi=psi,
    )


@router.post("/visualization", response_class=Response)
async def visualize_blur_map(
    request: Request,
    psi: float = Query(100.0, ge=0),
    predictors: Predictors = Depends(get_predictors),
):
    """
    Same estimation as `POST /blur-maps`, returned as an 8-bit grayscale PNG where
    255 corresponds to the largest radius (6 px).
    """
    result = await _estimate(request, psi, predictors)
    png = image_to_png_bytes(np.clip(result.dense / RADIUS_MAX, 0.0, 1.0))
    return Response(content=png, media_type="image/png")
