import numpy as np
import pytest

from app.core.errors import EmptyInputError, ImageIOError, InvalidArgumentError
from app.services import io_service
from app.services.evaluation_service import (
    dbd_threshold,
    evaluate_dbd_dirs,
    evaluate_mae_dirs,
    mae_raw,
    mae_relative,
    mae_sparse,
    pr_eval,
    score_maps,
)


def two_region_map() -> tuple[np.ndarray, np.ndarray]:
    """Left half sharp (radius 0.5), right half blurred (radius 4)."""
    truth = np.zeros((10, 10), dtype=bool)
    truth[:, 5:] = True
    return np.where(truth, 4.0, 0.5), truth


def test_raw_and_relative_mae():
    est, gt = np.full((4, 4), 6.0), np.full((4, 4), 3.0)
    assert mae_raw(est, gt) == 3.0
    assert mae_relative(est, gt) == pytest.approx(0.5)
    assert mae_relative(est, gt, mode="per-image") == 0.0
    with pytest.raises(InvalidArgumentError):
        mae_relative(est, gt, mode="median")
    with pytest.raises(InvalidArgumentError):
        mae_raw(est, np.zeros((4, 5)))


def test_masked_and_sparse_mae():
    est = np.array([[1.0, 2.0], [3.0, 4.0]])
    gt = np.array([[1.0, 1.0], [1.0, 1.0]])
    mask = np.array([[False, True], [False, True]])
    assert mae_raw(est, gt, mask) == 2.0
    assert mae_sparse(est, mask, gt) == 2.0
    with pytest.raises(EmptyInputError):
        mae_raw(est, gt, np.zeros((2, 2), dtype=bool))


def test_threshold_endpoints():
    m = np.array([[0.5, 2.0, 6.0]])
    assert dbd_threshold(m, 0.0)[0].all()
    mask, tau = dbd_threshold(m, 1.0)
    assert tau == 6.0 and mask.tolist() == [[False, False, True]]
    mask, tau = dbd_threshold(m, 0.5)
    assert tau == pytest.approx(3.25) and mask.tolist() == [[False, False, True]]
    assert dbd_threshold(np.full((3, 3), 2.0), 0.7)[0].all()
    with pytest.raises(InvalidArgumentError):
        dbd_threshold(m, 1.5)


def test_pr_eval_on_a_perfect_map():
    m, truth = two_region_map()
    report = pr_eval([m], [truth])
    assert len(report.pr_curve) == 101
    assert report.best_accuracy == 1.0
    assert report.best_f_measure == 1.0
    recalls = [p.recall for p in report.pr_curve]
    assert all(a >= b for a, b in zip(recalls, recalls[1:]))
    first = report.pr_curve[0]
    assert first.recall == 1.0 and first.precision == 0.5


def test_pr_eval_pools_counts_over_images():
    m, truth = two_region_map()
    inverted = np.where(truth, 0.5, 4.0)
    report = pr_eval([m, inverted], [truth, truth], alphas=[0.5])
    point = report.pr_curve[0]
    assert point.accuracy == 0.5
    assert point.precision == 0.5 and point.recall == 0.5


def test_pr_eval_zero_denominators_give_zero():
    m = np.full((4, 4), 1.0)
    report = pr_eval([m], [np.zeros((4, 4), dtype=bool)], alphas=[0.0, 1.0])
    for p in report.pr_curve:
        assert p.precision == 0.0 and p.recall == 0.0 and p.f_measure == 0.0
        assert p.accuracy == 0.0


def test_pr_eval_input_errors():
    m, truth = two_region_map()
    with pytest.raises(EmptyInputError):
        pr_eval([], [])
    with pytest.raises(InvalidArgumentError):
        pr_eval([m, m], [truth])
    with pytest.raises(InvalidArgumentError):
        pr_eval([m], [truth[:5]])


def test_score_report_formats():
    report = score_maps([("a", np.full((2, 2), 1.0), np.full((2, 2), 2.0)),
                         ("b", np.full((2, 2), 2.0), np.full((2, 2), 2.0))])
    assert report.mae_raw_mean == 0.5 and report.mae_raw_std == 0.5
    table = report.to_table()
    assert "0.500 +/- 0.500" in table
    assert report.to_csv().splitlines()[0] == "image,mae_raw,mae_relative"


def test_directory_evaluation(tmp_path):
    est_dir, gt_dir = tmp_path / "est", tmp_path / "gt"
    m, truth = two_region_map()
    io_service.write_bmap(est_dir / "scene.bmap", m)
    io_service.write_bmap(gt_dir / "scene.bmap", m + 1.0)
    io_service.write_image(gt_dir / "scene.png", truth.astype(np.float64))

    mae = evaluate_mae_dirs(est_dir, gt_dir)
    assert mae.images[0].name == "scene"
    assert mae.images[0].mae_raw == pytest.approx(1.0)

    dbd = evaluate_dbd_dirs(est_dir, gt_dir)
    assert dbd.best_accuracy == 1.0
    assert "alpha,precision,recall,accuracy,f_measure" in dbd.to_csv()


def test_directory_evaluation_errors(tmp_path):
    (tmp_path / "est").mkdir()
    (tmp_path / "gt").mkdir()
    with pytest.raises(EmptyInputError):
        evaluate_mae_dirs(tmp_path / "est", tmp_path / "gt")
    io_service.write_bmap(tmp_path / "est" / "lonely.bmap", np.ones((2, 2)))
    with pytest.raises(ImageIOError):
        evaluate_mae_dirs(tmp_path / "est", tmp_path / "gt")
