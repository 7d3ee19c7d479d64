from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.api import blur_map_routes, network_routes
from app.core.cache import clear_cache
from app.core.config import settings
from app.core.logging import configure_logging


@asynccontextmanager
async def lifespan(app: FastAPI):
    configure_logging(settings.log_level)
    yield
    await clear_cache()

app = FastAPI(
    title="Blur Map API",
    lifespan=lifespan,
)

app.include_router(blur_map_routes.router)
app.include_router(network_routes.router)
