import sys
from pathlib import Path

import numpy as np
import pytest
import pytest_asyncio
from httpx import ASGITransport, AsyncClient

# Ensure project root is on sys.path
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from app.api import blur_map_routes
from app.core.cache import clear_cache
from app.main import app as fastapi_app
from app.schemas.dataset import FgBgRecipe
from app.schemas.training import ArchitectureWidths
from app.services.datagen_service import synth_fgbg
from app.services.pipeline_service import OracleBlurClassifier, OracleEdgeClassifier

# Layer widths small enough for finite differences and training smoke tests
TINY_WIDTHS = ArchitectureWidths(f1=3, f2=3, deep=4, hidden1=6, hidden2=5)
TINY_INPUTS = {"p41": (17, 17, 3), "p27": (15, 15, 3), "p15": (13, 13, 3)}

SCENE_SIZE = 96
SQUARE = slice(28, 68)


def stripes(h: int, w: int, period: int, dark: tuple, bright: tuple) -> np.ndarray:
    """Vertical RGB bars: half a period `dark`, half a period `bright`."""
    on = (np.arange(w) // (period // 2)) % 2 == 1
    row = np.where(on[:, np.newaxis], np.array(bright), np.array(dark))
    return np.broadcast_to(row, (h, w, 3)).copy()


def fgbg_recipe(k1: int = 1, k2: int = 3) -> FgBgRecipe:
    """Bright finely striped square over a dark coarsely striped background."""
    fg = stripes(SCENE_SIZE, SCENE_SIZE, 8, (0.6, 0.55, 0.5), (1.0, 0.95, 0.9))
    bg = stripes(SCENE_SIZE, SCENE_SIZE, 16, (0.0, 0.05, 0.1), (0.3, 0.35, 0.4))
    mask = np.zeros((SCENE_SIZE, SCENE_SIZE), dtype=bool)
    mask[SQUARE, SQUARE] = True
    return FgBgRecipe(salient=fg, mask=mask, background=bg, k1=k1, k2=k2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fgbg_scene():
    """Composite with foreground radius 1 and background radius 5."""
    return synth_fgbg(fgbg_recipe(k1=1, k2=3))


@pytest.fixture
def oracle_predictors(fgbg_scene):
    return blur_map_routes.Predictors(
        bnet=OracleBlurClassifier(fgbg_scene.gt),
        enet=OracleEdgeClassifier(fgbg_scene.depth_gt),
    )


@pytest.fixture
def override_dependencies(oracle_predictors):
    """Serve the oracle networks instead of weight files."""
    fastapi_app.dependency_overrides[blur_map_routes.get_predictors] = lambda: oracle_predictors
    yield
    fastapi_app.dependency_overrides.clear()


@pytest_asyncio.fixture(loop_scope="session")
async def clear_cache_between_tests():
    """Invalidate in-memory cache around a test to avoid cross-test pollution."""
    await clear_cache()
    yield
    await clear_cache()


@pytest_asyncio.fixture(loop_scope="session")
async def async_client():
    transport = ASGITransport(app=fastapi_app)
    async with AsyncClient(transport=transport, base_url="http://test") as client:
        yield client
