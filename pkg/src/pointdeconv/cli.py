"""Command-line entry point: ``pointdeconv <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import AnnotationError, DotAnnotations, dump_dots, load_dots, synthesize_label_map
from .deconv import DeconvParams
from .detect import DetectionSet, DetectParams, params_dict
from .evaluate import Metrics, compare_methods, match_detections, metrics_from_counts
from .io import atomic_write_text, read_float_map, sha256_file, write_float_map, write_json, write_png16
from .pipeline import MAP_KINDS, METHODS, detect_image
from .psf import MappingFilter, make_mapping_filter
from .regressor import (AdagradState, CheckpointError, NetworkConfig, init_network,
                        load_checkpoint, save_checkpoint, train)
from .synth import SynthesisError, SyntheticConfig, generate_image

log = logging.getLogger("pointdeconv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- dataset layout ----------------------------------------------------------
# <root>/images/<stem>.f32   float map (see io.encode_float_map)
# <root>/dots/<stem>.csv     "x,y" integer dot annotations

def dataset_items(root) -> list[tuple[str, Path, Path]]:
    root = Path(root)
    images = sorted((root / "images").glob("*.f32"))
    return [(p.stem, p, root / "dots" / f"{p.stem}.csv") for p in images]


def read_dots_for(image_path: Path, dots_path: Path) -> DotAnnotations:
    image = read_float_map(image_path)
    h, w = image.shape
    with open(dots_path, newline="") as fh:
        return load_dots(fh, w, h)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def write_manifest(out_dir: Path, command: str, config: dict, seeds: dict, inputs, outputs) -> None:
    """Run manifest; paths are relative to ``out_dir`` where possible, no timestamps."""
    def rel(p):
        p = Path(p)
        try:
            return str(p.resolve().relative_to(out_dir.resolve()))
        except ValueError:
            return str(p)

    write_json(out_dir / "manifest.json", {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": sorted(rel(p) for p in inputs),
        "outputs": {rel(p): sha256_file(p) for p in sorted(map(Path, outputs))},
        "code_version": __version__,
    })


# -- commands ----------------------------------------------------------------

def cmd_make_filter(args) -> int:
    if args.radius < 1:
        raise UsageError("--radius must be >= 1")
    filt = make_mapping_filter(args.radius)
    out = Path(args.output) if args.output else Path(args.out_dir) / f"filter_r{args.radius}.json"
    atomic_write_text(out, filt.to_json() + "\n")
    print(out)
    return EXIT_OK


def _load_filter(args) -> MappingFilter:
    if getattr(args, "filter", None):
        return MappingFilter.from_json(Path(args.filter).read_text())
    return make_mapping_filter(args.radius)


def cmd_map_labels(args) -> int:
    filt = _load_filter(args)
    out_dir = Path(args.out_dir)
    items = dataset_items(args.dataset)
    if not items:
        raise DataError(f"no images under {args.dataset}/images")
    outputs = []
    for stem, img_path, dots_path in items:
        label = synthesize_label_map(read_dots_for(img_path, dots_path), filt)
        write_float_map(out_dir / "labels" / f"{stem}.f32", label)
        write_png16(out_dir / "labels" / f"{stem}.png", label)
        outputs += [out_dir / "labels" / f"{stem}.f32", out_dir / "labels" / f"{stem}.png"]
    write_manifest(out_dir, "map-labels", {"radius": filt.radius, "filter_sha256": filt.digest()},
                   {}, [p for _, p, _ in items], outputs)
    log.info("wrote %d label maps", len(items))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        config = SyntheticConfig(
            image_size=args.image_size, n_images=args.n_images,
            cells_per_image=tuple(args.cells), cell_radius=tuple(args.cell_radius),
            min_separation=args.min_separation, noise_sigma=args.noise_sigma,
            background_level=args.background, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out_dir)
    results = _pool_map(lambda i: generate_image(config, i), range(config.n_images), args.threads)
    outputs = []
    for i, (image, dots) in enumerate(results):
        stem = f"img_{i:04d}"
        write_float_map(out_dir / "images" / f"{stem}.f32", image)
        atomic_write_text(out_dir / "dots" / f"{stem}.csv", dump_dots(dots))
        outputs += [out_dir / "images" / f"{stem}.f32", out_dir / "dots" / f"{stem}.csv"]
    write_manifest(out_dir, "synth", config.to_dict(), {"synth": args.seed}, [], outputs)
    log.info("synthesized %d images, %d annotations", len(results), sum(len(d) for _, d in results))
    return EXIT_OK


def _network_config(args) -> NetworkConfig:
    try:
        return NetworkConfig(
            input_size=args.input_size, channels=tuple(args.channels), filter_radius=args.radius,
            pos_weight=args.pos_weight, learning_rate=args.lr,
            epochs=200 if args.epochs is None else args.epochs, seed=args.seed,
            in_channels=1, batch_size=args.batch_size,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    out_dir = Path(args.out_dir)
    items = dataset_items(args.dataset)
    if not items:
        raise DataError(f"empty dataset: no images under {args.dataset}/images")
    samples = [(read_float_map(p), read_dots_for(p, d)) for _, p, d in items]
    if args.resume:
        net, state, start_epoch, history = load_checkpoint(args.resume)
        remaining = net.config.epochs - start_epoch if args.epochs is None else args.epochs
    else:
        net = init_network(_network_config(args))
        state, start_epoch, history = AdagradState.zeros_like(net.params), 0, []
        remaining = net.config.epochs
    filter_digest = net.mapping_filter.digest()
    if filter_digest != make_mapping_filter(net.config.filter_radius).digest():
        raise DataError("checkpoint mapping filter differs from the analytic filter")
    state, losses = train(net, samples, state, epochs=max(remaining, 0), start_epoch=start_epoch)
    history = history + losses
    if net.mapping_filter.digest() != filter_digest:
        raise FloatingPointError("mapping filter changed during training")
    epoch = start_epoch + len(losses)
    save_checkpoint(out_dir, net, state, epoch, history)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "loss"])
    writer.writerows([i + 1, f"{v:.8f}"] for i, v in enumerate(history))
    atomic_write_text(out_dir / "loss_curve.csv", buf.getvalue())
    write_manifest(
        out_dir, "train", net.config.to_dict(), {"init": net.config.seed, "augment": net.config.seed},
        [p for _, p, _ in items],
        [out_dir / "checkpoint.json", out_dir / "checkpoint.bin", out_dir / "loss_curve.csv"],
    )
    log.info("trained to epoch %d, final loss %.6f", epoch, history[-1] if history else float("nan"))
    return EXIT_OK


def _image_paths(inputs) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            sub = p / "images" if (p / "images").is_dir() else p
            paths += sorted(sub.glob("*.f32"))
        elif p.exists():
            paths.append(p)
        else:
            raise DataError(f"no such image or directory: {p}")
    return paths


def _deconv_params(args) -> DeconvParams:
    return DeconvParams(args.outer_iterations, args.image_iterations, args.psf_iterations,
                        args.psf_frozen)


def _detect_params(args) -> DetectParams:
    return DetectParams(args.threshold, args.min_region_area, args.maxima_min_distance,
                        args.maxima_min_value)


def cmd_detect(args) -> int:
    try:
        net, _, _, _ = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise DataError(str(exc)) from None
    paths = _image_paths(args.images)
    out_dir = Path(args.out_dir)
    if not paths:
        log.warning("no images given; nothing to do")
        return EXIT_OK
    try:
        dparams, dtparams = _deconv_params(args), _detect_params(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    params = {"method": args.method, "map": args.map, **params_dict(dparams, dtparams)}

    def run(path):
        return detect_image(net, read_float_map(path), args.method, args.map, dparams, dtparams)

    results = _pool_map(run, paths, args.threads)
    outputs = []
    for path, dets in zip(paths, results):
        atomic_write_text(out_dir / f"{path.stem}.csv", dets.to_csv())
        atomic_write_text(out_dir / f"{path.stem}.json", dets.sidecar(params))
        outputs += [out_dir / f"{path.stem}.csv", out_dir / f"{path.stem}.json"]
    write_manifest(out_dir, "detect", params, {}, paths + [Path(args.checkpoint) / "checkpoint.bin"], outputs)
    log.info("detected %d points in %d images", sum(len(d) for d in results), len(paths))
    return EXIT_OK


def evaluate_dirs(det_dir, gt_dir, radius: float, matcher: str = "greedy"):
    """Per-image rows and the aggregate Metrics for one detection directory."""
    det_dir = Path(det_dir)
    rows = []
    totals = np.zeros(3, dtype=np.int64)
    items = dataset_items(gt_dir)
    if not items:
        raise DataError(f"no ground truth images under {gt_dir}/images")
    for stem, img_path, dots_path in items:
        det_path = det_dir / f"{stem}.csv"
        if not det_path.exists():
            raise DataError(f"missing detections for {stem} in {det_dir}")
        gts = read_dots_for(img_path, dots_path)
        dets = DetectionSet.from_csv(det_path.read_text())
        m = match_detections(dets, gts, radius, matcher)
        counts = (len(m.pairs), len(dets) - len(m.pairs), len(gts) - len(m.pairs))
        totals += counts
        per = metrics_from_counts(*counts)
        rows.append([stem, len(gts), len(dets), *counts, per.precision, per.recall, per.f1])
    return rows, metrics_from_counts(*(int(v) for v in totals))


def metrics_json(metrics: Metrics, radius: float, n_images: int) -> dict:
    return {**metrics.as_dict(), "radius": radius, "n_images": n_images}


def _write_eval(out_dir: Path, rows, metrics: Metrics, radius: float) -> list[Path]:
    write_json(out_dir / "metrics.json", metrics_json(metrics, radius, len(rows)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image", "n_gt", "n_det", "tp", "fp", "fn", "precision", "recall", "f1"])
    for r in rows:
        writer.writerow(r[:6] + [f"{v:.6f}" for v in r[6:]])
    atomic_write_text(out_dir / "per_image.csv", buf.getvalue())
    return [out_dir / "metrics.json", out_dir / "per_image.csv"]


def cmd_eval(args) -> int:
    out_dir = Path(args.out_dir)
    labels = args.label or [Path(d).name for d in args.detections]
    if len(labels) != len(args.detections):
        raise UsageError("--label must be given once per detections directory")
    if args.radius <= 0:
        raise UsageError("--radius must be positive")
    results, outputs = [], []
    for label, det_dir in zip(labels, args.detections):
        rows, metrics = evaluate_dirs(det_dir, args.gt, args.radius, args.matcher)
        target = out_dir if len(args.detections) == 1 else out_dir / label
        outputs += _write_eval(target, rows, metrics, args.radius)
        results.append((label, metrics))
    table, table_json = compare_methods(results)
    atomic_write_text(out_dir / "table.txt", table)
    atomic_write_text(out_dir / "table.json", table_json + "\n")
    outputs += [out_dir / "table.txt", out_dir / "table.json"]
    write_manifest(out_dir, "eval", {"radius": args.radius, "matcher": args.matcher, "labels": labels},
                   {}, [], outputs)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_compare(args) -> int:
    results = []
    for spec in args.metrics:
        label, sep, path = spec.partition("=")
        if not sep:
            label, path = Path(spec).parent.name, spec
        try:
            m = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise DataError(f"no such metrics file: {path}") from None
        results.append((label, metrics_from_counts(int(m["tp"]), int(m["fp"]), int(m["fn"]))))
    try:
        table, table_json = compare_methods(results)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "comparison.txt", table)
    atomic_write_text(out_dir / "comparison.json", table_json + "\n")
    sys.stdout.write(table)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--config", help="TOML or JSON file of option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pointdeconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    parser.commands = sub.choices

    p = sub.add_parser("make-filter", parents=[common], help="write the mapping filter as JSON")
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_make_filter)

    p = sub.add_parser("map-labels", parents=[common], help="blur dot annotations into label maps")
    p.add_argument("dataset")
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--filter", help="filter JSON from make-filter (overrides --radius)")
    p.set_defaults(func=cmd_map_labels)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated dataset")
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--n-images", type=int, default=10)
    p.add_argument("--cells", type=int, nargs=2, default=[10, 20], metavar=("MIN", "MAX"))
    p.add_argument("--cell-radius", type=float, nargs=2, default=[3, 9], metavar=("MIN", "MAX"))
    p.add_argument("--min-separation", type=float, default=10.0)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--background", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the regressor on a dataset")
    p.add_argument("dataset")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--channels", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--radius", type=int, default=5)
    p.add_argument("--pos-weight", type=float, default=100.0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=None,
                   help="epochs to run (default 200, or the remainder when resuming)")
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--resume", help="checkpoint directory to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", parents=[common], help="detect cell centres with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="*", help="float-map files or dataset directories")
    p.add_argument("--method", choices=METHODS, default="deconv")
    p.add_argument("--map", choices=MAP_KINDS, default="logits")
    p.add_argument("--outer-iterations", type=int, default=10)
    p.add_argument("--image-iterations", type=int, default=5)
    p.add_argument("--psf-iterations", type=int, default=5)
    p.add_argument("--psf-frozen", action="store_true")
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--min-region-area", type=int, default=2)
    p.add_argument("--maxima-min-distance", type=int, default=5)
    p.add_argument("--maxima-min-value", type=float, default=0.2)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="score detections against ground truth")
    p.add_argument("detections", nargs="+", help="detection directories from `detect`")
    p.add_argument("--gt", required=True, help="dataset directory with images/ and dots/")
    p.add_argument("--label", action="append", help="row label per detections directory")
    p.add_argument("--radius", type=float, default=6.0)
    p.add_argument("--matcher", choices=("greedy", "hungarian"), default="greedy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="tabulate metrics JSON files")
    p.add_argument("metrics", nargs="+", help="LABEL=metrics.json (or a path)")
    p.set_defaults(func=cmd_compare)
    return parser


def _load_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = _load_config(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
        defaults = {k.replace("-", "_"): v for k, v in cfg.items() if not isinstance(v, dict)}
        defaults.update({k.replace("-", "_"): v for k, v in cfg.get(args.command, {}).items()})
        # explicit command-line flags still win over config values
        parser.commands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"pointdeconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=max(args.threads, 1)):
            return args.func(args)
    except UsageError as exc:
        print(f"pointdeconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AnnotationError, SynthesisError, CheckpointError, FileNotFoundError) as exc:
        print(f"pointdeconv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"pointdeconv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
