import os

import numpy as np
import pytest

from app.core.errors import InvalidArgumentError, WeightsIOError
from app.models.blur_map import NUM_BLUR_LEVELS
from app.nn import init_weights, save_weights
from app.services.edge_service import extract_patchset
from app.services.network_service import (
    REFERENCE_MFLOPS,
    bnet_forward,
    build_architecture,
    enet_forward,
    infer_widths,
    load_weights_cached,
    network_summary,
    predict_blur,
)
from conftest import TINY_WIDTHS


@pytest.fixture(scope="module")
def tiny():
    arch = build_architecture(TINY_WIDTHS)
    return (
        arch,
        init_weights(arch.bnet.param_shapes(), seed=1, architecture="bnet"),
        init_weights(arch.enet.param_shapes(), seed=2, architecture="enet"),
    )


@pytest.fixture
def patchsets(rng):
    img = rng.uniform(size=(60, 60, 3))
    return [extract_patchset(img, c) for c in [(5, 5), (30, 30), (59, 12)]]


def test_default_architecture_shape():
    arch = build_architecture()
    assert arch.bnet.output_shapes()[arch.bnet.output] == (NUM_BLUR_LEVELS,)
    assert arch.enet.output_shapes()[arch.enet.output] == (2,)
    assert len(set(arch.enet.param_names())) == len(arch.enet.param_names())
    for net, value in arch.mflops().items():
        assert REFERENCE_MFLOPS[net] / 10 <= value <= REFERENCE_MFLOPS[net] * 10


def test_f1_is_shared_between_networks():
    arch = build_architecture(TINY_WIDTHS)
    b_shapes, e_shapes = arch.bnet.param_shapes(), arch.enet.param_shapes()
    assert arch.f1_params
    for name in arch.f1_params:
        assert b_shapes[name] == e_shapes[name]
    assert not any(n.startswith("f2.") for n in b_shapes)
    assert any(n.startswith("f2.") for n in e_shapes)


def test_posteriors_are_distributions(tiny, patchsets):
    arch, bw, ew = tiny
    b = bnet_forward(patchsets, bw, arch=arch)
    e = enet_forward(patchsets, ew, arch=arch)
    assert b.shape == (3, NUM_BLUR_LEVELS) and e.shape == (3, 2)
    assert np.allclose(b.sum(axis=1), 1.0) and np.allclose(e.sum(axis=1), 1.0)
    assert bnet_forward(patchsets[0], bw, arch=arch).shape == (NUM_BLUR_LEVELS,)


def test_posteriors_do_not_depend_on_batch(tiny, patchsets):
    arch, bw, _ = tiny
    batched = bnet_forward(patchsets, bw, arch=arch)
    for i, ps in enumerate(patchsets):
        assert np.array_equal(bnet_forward(ps, bw, arch=arch), batched[i])
    assert np.array_equal(bnet_forward(patchsets, bw, arch=arch, threads=3), batched)


def test_grayscale_patches_are_accepted(tiny, rng):
    arch, bw, _ = tiny
    ps = extract_patchset(rng.uniform(size=(50, 50)), (25, 25))
    assert bnet_forward(ps, bw, arch=arch).shape == (NUM_BLUR_LEVELS,)


def test_forward_requires_all_weights(tiny, patchsets):
    arch, _, ew = tiny
    with pytest.raises(InvalidArgumentError):
        bnet_forward(patchsets, ew, arch=arch)


def test_predict_blur_decodes_argmax():
    post = np.zeros(NUM_BLUR_LEVELS)
    post[0] = 1.0
    assert predict_blur(post) == 0.5
    rows = np.eye(NUM_BLUR_LEVELS)[[22, 2]]
    assert np.allclose(predict_blur(rows), [6.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        predict_blur(np.ones(5) / 5)


def test_infer_widths_round_trip(tiny):
    _, bw, ew = tiny
    assert infer_widths(ew) == TINY_WIDTHS
    widths = infer_widths(bw)
    assert (widths.f1, widths.deep, widths.hidden1, widths.hidden2) == (3, 4, 6, 5)


def test_network_summary_rows():
    rows = network_summary(build_architecture(TINY_WIDTHS))
    assert [r["name"] for r in rows] == ["bnet", "enet"]
    assert [r["classes"] for r in rows] == [NUM_BLUR_LEVELS, 2]
    assert all(r["parameters"] > 0 and r["mflops"] > 0 for r in rows)


@pytest.mark.asyncio(loop_scope="session")
async def test_weight_cache_reloads_modified_file(tmp_path, tiny, clear_cache_between_tests):
    _, bw, _ = tiny
    path = tmp_path / "bnet.cwts"
    save_weights(bw, path)
    first = await load_weights_cached(path, ttl=60)
    assert await load_weights_cached(path, ttl=60) is first

    stat = path.stat()
    os.utime(path, ns=(stat.st_atime_ns, stat.st_mtime_ns + 5_000_000_000))
    reloaded = await load_weights_cached(path, ttl=60)
    assert reloaded is not first
    assert np.array_equal(reloaded["f1.b41.conv1.weight"], first["f1.b41.conv1.weight"])


@pytest.mark.asyncio(loop_scope="session")
async def test_weight_cache_missing_file(tmp_path, clear_cache_between_tests):
    with pytest.raises(WeightsIOError):
        await load_weights_cached(tmp_path / "absent.cwts", ttl=60)
