import numpy as np
import pytest

from app.core.config import settings
from app.services.io_service import image_from_bytes, image_to_png_bytes


@pytest.mark.asyncio(loop_scope="session")
async def test_estimate_blur_map_summary(async_client, override_dependencies, fgbg_scene):
    png = image_to_png_bytes(fgbg_scene.composite)
    resp = await async_client.post("/blur-maps", content=png, headers={"Content-Type": "image/png"})
    assert resp.status_code == 200, resp.text
    data = resp.json()
    assert (data["height"], data["width"]) == fgbg_scene.gt.shape
    assert data["pattern_pixels"] > 0 and data["depth_pixels"] > 0
    assert data["edge_pixels"] == data["pattern_pixels"] + data["depth_pixels"]
    assert 0.0 < data["coverage"] <= 1.0
    assert 0.5 <= data["blur_min"] <= data["blur_mean"] <= data["blur_max"] <= 6.0
    assert data["psi"] == 100.0


@pytest.mark.asyncio(loop_scope="session")
async def test_estimate_accepts_psi(async_client, override_dependencies, fgbg_scene):
    png = image_to_png_bytes(fgbg_scene.composite)
    resp = await async_client.post("/blur-maps", params={"psi": 0}, content=png)
    assert resp.status_code == 200
    assert resp.json()["psi"] == 0.0

    resp = await async_client.post("/blur-maps", params={"psi": -1}, content=png)
    assert resp.status_code == 422


@pytest.mark.asyncio(loop_scope="session")
async def test_visualization_is_a_png(async_client, override_dependencies, fgbg_scene):
    resp = await async_client.post("/blur-maps/visualization", content=image_to_png_bytes(fgbg_scene.composite))
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    img = image_from_bytes(resp.content)
    assert img.shape == (*fgbg_scene.gt.shape, 1)


@pytest.mark.asyncio(loop_scope="session")
async def test_bad_images_are_rejected(async_client, override_dependencies):
    resp = await async_client.post("/blur-maps", content=b"definitely not a png")
    assert resp.status_code == 400

    flat = image_to_png_bytes(np.full((24, 24, 3), 0.5))
    resp = await async_client.post("/blur-maps", content=flat)
    assert resp.status_code == 422
    assert "no edges" in resp.json()["detail"]


@pytest.mark.asyncio(loop_scope="session")
async def test_missing_weights_give_503(async_client, clear_cache_between_tests, fgbg_scene, tmp_path,
                                        monkeypatch):
    monkeypatch.setattr(settings, "weights_b", str(tmp_path / "none.cwts"))
    resp = await async_client.post("/blur-maps", content=image_to_png_bytes(fgbg_scene.composite))
    assert resp.status_code == 503
    assert "weights unavailable" in resp.json()["detail"]


@pytest.mark.asyncio(loop_scope="session")
async def test_list_networks(async_client):
    resp = await async_client.get("/networks")
    assert resp.status_code == 200
    rows = resp.json()
    assert [r["name"] for r in rows] == ["bnet", "enet"]
    assert [r["classes"] for r in rows] == [23, 2]
    assert all(r["parameters"] > 0 for r in rows)
