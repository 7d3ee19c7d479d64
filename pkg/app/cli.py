"""
Command line entry point: `python -m app.cli <command> ...`.

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import BlurMapError
from app.core.logging import configure_logging
from app.models.edge_map import EdgeLabel
from app.nn import load_weights, save_weights
from app.nn.gradcheck import gradcheck
from app.schemas.params import CannyParams, DtParams
from app.schemas.pipeline import PipelineConfig
from app.schemas.training import BNET_SCHEDULE, ENET_SCHEDULE, ArchitectureWidths
from app.services import datagen_service, evaluation_service, io_service
from app.services.edge_service import canny
from app.services.network_service import build_architecture
from app.services.pipeline_service import classify_edges, estimate_full, load_predictor
from app.services.training_service import train_bnet, train_enet, write_history

logger = logging.getLogger("app.cli")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_INPUTS = {"p41": (17, 17, 3), "p27": (15, 15, 3), "p15": (13, 13, 3)}
GRADCHECK_WIDTHS = ArchitectureWidths(f1=3, f2=3, deep=4, hidden1=6, hidden2=5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _canny_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--canny-sigma", type=float, default=None, help="Gaussian std before edge detection")
    p.add_argument("--canny-low", type=float, default=None, help="low hysteresis threshold (fraction of max)")
    p.add_argument("--canny-high", type=float, default=None, help="high hysteresis threshold (fraction of max)")


def _datagen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, required=True, help="dataset root directory")
    p.add_argument("--count", type=int, default=50, help="edge samples per generated image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotate", action="store_true", help="rotate each generated image by a random allowed angle")
    _canny_flags(p)


def _train_flags(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("manifest", type=Path, help="manifest.jsonl of a generated dataset")
    p.add_argument("--out", type=Path, default=Path(default_out), help="output weights file")
    p.add_argument("--history", type=Path, default=None, help="CSV training history (default: <out>.csv)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="initial learning rate")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--widths", type=str, default=None, help="f1,f2,deep,hidden1,hidden2 layer widths")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blurmap", description="Edge-based defocus blur map estimation")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for inference, training and datagen (default: BLURMAP_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate the dense blur map of an image")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--psi", type=float, default=None, help="depth-edge penalty (0 disables blocking)")
    p.add_argument("--sigma-s", type=float, default=None, help="propagation spatial sigma (default min(H,W)/8)")
    p.add_argument("--sigma-r", type=float, default=None, help="propagation range sigma")
    p.add_argument("--simplify-sigma-s", type=float, default=None)
    p.add_argument("--simplify-sigma-r", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None, help="domain transform iterations")
    p.add_argument("--weights-b", type=Path, default=None)
    p.add_argument("--weights-e", type=Path, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--post-filter", choices=("none", "connected-median"), default=None)
    _canny_flags(p)

    p = sub.add_parser("edges", help="Canny edges, optionally classified by E-NET")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output PGM")
    p.add_argument("--weights-e", type=Path, default=None, help="classify edges into pattern/depth")
    _canny_flags(p)

    _train_flags(sub.add_parser("train-bnet", help="train the blur classifier"), settings.weights_b)
    p = sub.add_parser("train-enet", help="train the edge classifier on top of a trained B-NET")
    _train_flags(p, settings.weights_e)
    p.add_argument("--weights-b", type=Path, default=Path(settings.weights_b))

    p = sub.add_parser("datagen-blur", help="uniformly blurred images at all 23 levels")
    p.add_argument("sources", nargs="+", type=Path, help="sharp (all-in-focus) images")
    _datagen_flags(p)
    p = sub.add_parser("datagen-pattern", help="gradual and step-wise pattern blur fields")
    p.add_argument("sources", nargs="+", type=Path, help="sharp (all-in-focus) images")
    _datagen_flags(p)
    p = sub.add_parser("datagen-fgbg", help="foreground/background composites with depth edges")
    p.add_argument("--salient", nargs="+", type=Path, required=True)
    p.add_argument("--background", nargs="+", type=Path, required=True)
    p.add_argument("--mask", nargs="+", type=Path, default=None, help="binary masks (default: random ellipses)")
    _datagen_flags(p)

    p = sub.add_parser("eval-mae", help="raw and relative MAE of estimated vs ground-truth maps")
    p.add_argument("est_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.add_argument("--relative", choices=("global", "per-image"), default="global")
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("eval-dbd", help="blur detection precision/recall over a threshold grid")
    p.add_argument("est_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.add_argument("--alpha", type=float, default=None, help="evaluate this alpha only")
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("gradcheck", help="verify backward against central differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--net", choices=("bnet", "enet", "all"), default="all")
    p.add_argument("--samples", type=int, default=200, help="sampled parameters per layer")
    p.add_argument("--full-size", action="store_true", help="production widths and patch sizes")
    return parser


def _canny(args) -> CannyParams:
    return CannyParams(
        sigma=args.canny_sigma if args.canny_sigma is not None else settings.canny_sigma,
        low_frac=args.canny_low if args.canny_low is not None else settings.canny_low,
        high_frac=args.canny_high if args.canny_high is not None else settings.canny_high,
    )


def _widths(spec: Optional[str]) -> Optional[ArchitectureWidths]:
    if spec is None:
        return None
    try:
        f1, f2, deep, h1, h2 = (int(v) for v in spec.split(","))
    except ValueError as exc:
        raise UsageError(f"--widths expects five comma-separated integers, got '{spec}'") from exc
    return ArchitectureWidths(f1=f1, f2=f2, deep=deep, hidden1=h1, hidden2=h2)


def _threads(args) -> int:
    threads = settings.threads if args.threads is None else args.threads
    if threads < 1:
        raise UsageError(f"--threads must be at least 1, got {threads}")
    return threads


def cmd_estimate(args) -> int:
    cfg = PipelineConfig.from_settings(
        settings,
        canny=_canny(args),
        psi=args.psi,
        propagate_sigma_s=args.sigma_s,
        propagate_sigma_r=args.sigma_r,
        iterations=args.iterations,
        weights_b=args.weights_b,
        weights_e=args.weights_e,
        threads=_threads(args),
        batch_size=args.batch_size,
        post_filter=args.post_filter,
    )
    if args.simplify_sigma_s is not None or args.simplify_sigma_r is not None:
        cfg = cfg.model_copy(update={"simplify": DtParams(
            sigma_s=args.simplify_sigma_s or cfg.simplify.sigma_s,
            sigma_r=args.simplify_sigma_r or cfg.simplify.sigma_r,
            psi=0.0, iterations=cfg.simplify.iterations)})
    img = io_service.read_image(args.image)
    result = estimate_full(img, cfg)
    out, stem = args.out, args.image.stem
    io_service.write_bmap(out / f"{stem}_blur.bmap", result.dense)
    io_service.write_blur_png(out / f"{stem}_blur.png", result.dense)
    io_service.write_bmap(out / f"{stem}_sparse.bmap", result.sparse)
    io_service.write_edge_map(out / f"{stem}_edges.pgm", result.edges)
    io_service.write_mask(out / f"{stem}_coverage.pgm", result.coverage)
    print(f"{stem}: blur {result.dense.min():.3f}..{result.dense.max():.3f}, "
          f"coverage {result.coverage.mean():.4f}, written to {out}")
    return EXIT_OK


def cmd_edges(args) -> int:
    img = io_service.read_image(args.image)
    edges = canny(img, **_canny(args).model_dump())
    if args.weights_e is not None:
        cfg = PipelineConfig.from_settings(settings, weights_e=args.weights_e, threads=_threads(args))
        edges = classify_edges(img, edges, load_predictor("enet", cfg.weights_e, cfg))
    io_service.write_edge_map(args.out, edges)
    print(f"{int(edges.edges.sum())} edge pixels "
          f"({int(edges.mask(EdgeLabel.DEPTH).sum())} depth) written to {args.out}")
    return EXIT_OK


def _schedule(base, args):
    update = {k: v for k, v in (("epochs", args.epochs), ("initial_lr", args.lr),
                                ("batch_size", args.batch_size), ("seed", args.seed)) if v is not None}
    if "epochs" in update:
        update["decay_period"] = min(base.decay_period, update["epochs"])
    return base.model_validate({**base.model_dump(), **update})


def _finish_training(args, result) -> int:
    save_weights(result.weights, args.out)
    write_history(args.history or args.out.with_suffix(".csv"), result.history)
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs, final train_loss {last.train_loss:.4f}, "
          f"val_acc {'-' if last.val_acc is None else f'{last.val_acc:.4f}'}; weights in {args.out}")
    return EXIT_OK


def cmd_train_bnet(args) -> int:
    data = datagen_service.load_patch_dataset(args.manifest)
    result = train_bnet(data, _schedule(BNET_SCHEDULE, args), widths=_widths(args.widths),
                        progress=not args.quiet, threads=_threads(args))
    return _finish_training(args, result)


def cmd_train_enet(args) -> int:
    data = datagen_service.load_patch_dataset(args.manifest)
    bnet = load_weights(args.weights_b)
    result = train_enet(data, bnet, _schedule(ENET_SCHEDULE, args), widths=_widths(args.widths),
                        progress=not args.quiet, threads=_threads(args))
    return _finish_training(args, result)


def cmd_datagen(args) -> int:
    common = dict(count=args.count, seed=args.seed, rotate=args.rotate, canny_params=_canny(args),
                  progress=not args.quiet, threads=_threads(args))
    if args.command == "datagen-blur":
        records = datagen_service.build_blur_dataset(args.sources, args.out, **common)
    elif args.command == "datagen-pattern":
        records = datagen_service.build_pattern_dataset(args.sources, args.out, **common)
    else:
        records = datagen_service.build_fgbg_dataset(args.salient, args.background, args.out,
                                                     masks=args.mask, **common)
    print(f"{len(records)} samples written to {args.out / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_eval_mae(args) -> int:
    report = evaluation_service.evaluate_mae_dirs(args.est_dir, args.gt_dir, args.relative)
    print(report.to_table())
    if args.csv:
        args.csv.write_text(report.to_csv())
    return EXIT_OK


def cmd_eval_dbd(args) -> int:
    if args.alpha is not None and not 0.0 <= args.alpha <= 1.0:
        raise UsageError(f"--alpha must lie in [0, 1], got {args.alpha}")
    report = evaluation_service.evaluate_dbd_dirs(args.est_dir, args.gt_dir)
    if args.alpha is not None:
        point = min(report.pr_curve, key=lambda p: abs(p.alpha - args.alpha))
        print(f"alpha {point.alpha:.2f}: precision {point.precision:.3f} recall {point.recall:.3f} "
              f"accuracy {point.accuracy:.3f} F {point.f_measure:.3f}")
    print(report.to_table())
    if args.csv:
        args.csv.write_text(report.to_csv())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    arch = build_architecture(None if args.full_size else GRADCHECK_WIDTHS)
    graphs = {"bnet": [arch.bnet], "enet": [arch.enet], "all": [arch.bnet, arch.enet]}[args.net]
    shapes = None if args.full_size else GRADCHECK_INPUTS
    passed = True
    for seed in range(args.seed, args.seed + args.seeds):
        for graph in graphs:
            report = gradcheck(graph, seed, samples_per_layer=args.samples, input_shapes=shapes)
            print(report.to_table())
            passed &= report.passed
    return EXIT_OK if passed else EXIT_RUNTIME


COMMANDS = {
    "estimate": cmd_estimate,
    "edges": cmd_edges,
    "train-bnet": cmd_train_bnet,
    "train-enet": cmd_train_enet,
    "datagen-blur": cmd_datagen,
    "datagen-pattern": cmd_datagen,
    "datagen-fgbg": cmd_datagen,
    "eval-mae": cmd_eval_mae,
    "eval-dbd": cmd_eval_dbd,
    "gradcheck": cmd_gradcheck,
}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    level = "WARNING" if args.quiet else ("DEBUG" if args.verbose else settings.log_level)
    configure_logging(level)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError) as exc:
        print(f"blurmap {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BlurMapError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
