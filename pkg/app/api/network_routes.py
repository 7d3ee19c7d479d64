from typing import List

from fastapi import APIRouter

from app.schemas.api import NetworkSummary
from app.services.network_service import build_architecture, network_summary

router = APIRouter(prefix="/networks", tags=["Networks"])


@router.get("", response_model=List[NetworkSummary])
@router.get("/", response_model=List[NetworkSummary])
async def list_networks():
    """
    Parameter counts and per-patch-set MFLOPs of the B-NET and E-NET assemblies.
    """
    return network_summary(build_architecture())
