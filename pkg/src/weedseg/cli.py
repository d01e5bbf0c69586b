"""weedseg command-line pipeline.

Typical run::

    weedseg synth --out data
    weedseg ndvi --manifest data/manifest.json
    weedseg autolabel --manifest data/manifest.json
    weedseg stats --manifest data/manifest.json --out data/weights.json
    weedseg train --manifest data/manifest.json --weights data/weights.json --out data/model.ckpt
    weedseg infer --manifest data/manifest.json --checkpoint data/model.ckpt --out data/pred
    weedseg eval --manifest data/manifest.json --predictions data/pred/predictions.json --out data/report

Failures print one line ``error code=<code> message=<json string>`` on
stderr and exit with status 2 (usage errors) or 1 (everything else).

Option values come from, in order of precedence: command-line flags, the
section of ``--config FILE`` (JSON) named after the command (plus a
``"global"`` section for ``--seed`` and ``--jobs``), then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _backend
from .errors import MissingFileError, SchemaError, WeedsegError
from .imgcore import CROP, NDVI, NIR, RED, WEED, LabelMask, ProbabilityMap, compute_ndvi, network_input

log = logging.getLogger("weedseg")

PREDICTIONS_VERSION = "1.0"
GLOBAL_KEYS = ("seed", "jobs")


class UsageError(WeedsegError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _pmap(fn, items, jobs: int):
    """Ordered map; threads when ``jobs > 1``.  Output order always follows input."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _load_manifest(path):
    from .manifest import DatasetManifest

    return DatasetManifest.load(path)


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _rel(path: Path, root: Path) -> str:
    return os.path.relpath(path, root).replace(os.sep, "/")


def _parse_triple(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise UsageError(f"expected three comma-separated numbers, got {text!r}")
    return vals


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    from .register import Transform2D
    from .synth import FieldConfig, generate_dataset

    tx, ty, deg = _parse_triple(args.misalign)
    template = FieldConfig(width=args.width, height=args.height)
    if args.scale != 1.0:
        template = template.scaled(args.scale)
    template = replace(
        template,
        noise_sigma=args.noise,
        band_misalignment=Transform2D(tx, ty, np.deg2rad(deg)),
    )
    if args.weed_density is not None:
        template = replace(template, weed_density=args.weed_density)
    counts = {"crop": args.train_crop, "weed": args.train_weed, "mixed": args.test}
    manifest = generate_dataset(args.out, template, counts, seed=args.seed)
    print(f"synth frames={len(manifest.entries)} manifest={Path(args.out) / 'manifest.json'}")


def cmd_align(args) -> None:
    from .io import read_label_mask, write_band_image, write_label_mask
    from .manifest import DatasetManifest
    from .register import CameraIntrinsics, RigCalibration, calibrate_rig

    manifest = _load_manifest(args.manifest)
    out = Path(args.out_dir)
    (out / "bands").mkdir(parents=True, exist_ok=True)
    if args.calibration:
        if not Path(args.calibration).is_file():
            raise MissingFileError(f"calibration not found: {args.calibration}")
        cal = RigCalibration.load(args.calibration)
    else:
        entry = manifest.entries[0]
        if args.calibrate_frame:
            match = [e for e in manifest.entries if e.frame_id == args.calibrate_frame]
            if not match:
                raise SchemaError(f"no frame {args.calibrate_frame!r} in manifest")
            entry = match[0]
        frame = manifest.load_frame(entry)
        intr = None
        if args.focal is not None:
            h, w = frame.shape
            intr = CameraIntrinsics.centered(w, h, args.focal, args.k1, args.k2)
        cal = calibrate_rig(
            frame,
            reference=args.reference,
            intrinsics=intr,
            angle_search=_parse_triple(args.angle_search),
            search_radius=args.search_radius,
            min_confidence=args.min_confidence,
            margin=args.margin,
        )
    cal.save(out / "calibration.json")

    def one(entry):
        frame, (y0, y1, x0, x1) = cal.apply(manifest.load_frame(entry), return_rect=True)
        bands = {}
        for b in frame.bands:
            dst = out / "bands" / f"{entry.frame_id}_{b.band.lower()}.pgm"
            write_band_image(b, dst, 16)
            bands[b.band] = _rel(dst, out)
        changes = {"bands": bands}
        for key in ("mask", "truth"):
            rel = getattr(entry, key)
            if rel is not None:
                m = read_label_mask(manifest.resolve(rel))
                dst = out / ("masks" if key == "mask" else "truth") / f"{entry.frame_id}.png"
                dst.parent.mkdir(parents=True, exist_ok=True)
                write_label_mask(LabelMask(m.labels[y0:y1, x0:x1]), dst)
                changes[key] = _rel(dst, out)
        return replace(entry, **changes)

    entries = _pmap(one, manifest.entries, args.jobs)
    DatasetManifest(entries, root=out).save(out / "manifest.json")
    for name, t in sorted(cal.transforms.items()):
        print(f"align band={name} tx={t.tx:.4f} ty={t.ty:.4f} theta_deg={t.degrees:.4f}")
    print(f"align frames={len(entries)} manifest={out / 'manifest.json'}")


def cmd_ndvi(args) -> None:
    from .io import write_band_image

    manifest = _load_manifest(args.manifest)

    def one(entry):
        frame = manifest.load_frame(entry)
        ndvi = compute_ndvi(frame[NIR], frame[RED])
        rel = f"bands/{entry.frame_id}_ndvi.pgm"
        write_band_image(ndvi, manifest.resolve(rel), 16)
        return rel

    rels = _pmap(one, manifest.entries, args.jobs)
    for entry, rel in zip(list(manifest.entries), rels):
        manifest.updated(entry.frame_id, bands={**entry.bands, NDVI: rel})
    manifest.save(args.manifest)
    print(f"ndvi frames={len(rels)}")


def auto_min_blob(shape, full: int = 300, full_side: int = 512) -> int:
    """Blob threshold scaled by frame area relative to a 512 x 512 frame."""
    return max(1, int(round(full * shape[0] * shape[1] / (full_side * full_side))))


def cmd_autolabel(args) -> None:
    from .autolabel import AutolabelConfig, generate_mask
    from .errors import DegenerateImageError
    from .io import write_label_mask

    manifest = _load_manifest(args.manifest)
    entries = manifest.split(args.split)
    for e in entries:
        if e.plot_type == "mixed":
            raise SchemaError(f"entry {e.frame_id!r}: mixed plots cannot be autolabelled")
    (manifest.root / "masks").mkdir(parents=True, exist_ok=True)

    def one(entry):
        frame = manifest.load_frame(entry)
        ndvi = frame[NDVI] if NDVI in frame else compute_ndvi(frame[NIR], frame[RED])
        min_blob = auto_min_blob(frame.shape) if args.min_blob == "auto" else int(args.min_blob)
        cfg = AutolabelConfig(
            blur_sigma=args.blur_sigma,
            sharpen_amount=args.sharpen,
            min_blob_pixels=min_blob,
            vegetation_class=CROP if entry.plot_type == "crop" else WEED,
            connectivity=args.connectivity,
        )
        try:
            mask = generate_mask(ndvi, cfg)
        except DegenerateImageError as exc:
            return entry.frame_id, None, str(exc)
        rel = f"masks/{entry.frame_id}.png"
        write_label_mask(mask, manifest.resolve(rel))
        return entry.frame_id, rel, None

    labelled = 0
    for fid, rel, err in _pmap(one, entries, args.jobs):
        if err is not None:
            print(f"warning code=unlabelable frame={fid} message={json.dumps(err)}", file=sys.stderr)
            manifest.updated(fid, mask=None)
        else:
            manifest.updated(fid, mask=rel)
            labelled += 1
    manifest.save(args.manifest)
    print(f"autolabel labelled={labelled} unlabelable={len(entries) - labelled}")


def cmd_stats(args) -> None:
    from .balance import accumulate_stats, compute_class_weights, save_weights

    manifest = _load_manifest(args.manifest)
    manifest.require_masks(args.split)
    masks = _pmap(manifest.load_mask, manifest.split(args.split), args.jobs)
    stats = accumulate_stats(masks)
    weights = compute_class_weights(stats)
    save_weights(stats, weights, args.out)
    print("stats weights=" + ",".join(f"{w:.6f}" for w in weights.w) + f" out={args.out}")


def _training_set(manifest, in_channels: int, jobs: int):
    manifest.require_masks("train")
    entries = manifest.split("train")
    if not entries:
        raise SchemaError("manifest has no train entries")

    def one(entry):
        return network_input(manifest.load_frame(entry), in_channels), manifest.load_mask(entry)

    return _pmap(one, entries, jobs)


def cmd_train(args) -> None:
    from .balance import ClassWeights, load_weights
    from .net.checkpoint import save_checkpoint
    from .net.model import NetworkConfig
    from .net.train import TrainConfig, train
    from .synth import derive_seed

    manifest = _load_manifest(args.manifest)
    if args.weights:
        if not Path(args.weights).is_file():
            raise MissingFileError(f"weights not found: {args.weights}")
        _, weights = load_weights(args.weights)
    else:
        weights = ClassWeights.uniform()
    data = _training_set(manifest, args.in_channels, args.jobs)
    net_cfg = NetworkConfig(
        in_channels=args.in_channels,
        encoder_blocks=tuple(int(c) for c in args.encoder_blocks.split(",")),
        seed=derive_seed(args.seed, "init"),
        class_weights=weights,
    )
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        max_iterations=args.iterations,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        momentum=args.momentum,
        record_every=args.record_every,
    )
    result = train(data, net_cfg, train_cfg, rng_seed=derive_seed(args.seed, "batches"))
    save_checkpoint(args.out, result.params, result.net_cfg, extra={"train_cfg": train_cfg.to_json()})
    if args.history:
        _write_json(result.history_json(), args.history)
    last = result.loss_history[-1] if result.loss_history else float("nan")
    print(f"train iterations={train_cfg.max_iterations} final_loss={last:.6f} out={args.out}")


def cmd_infer(args) -> None:
    from .io import write_label_mask
    from .evaluate import argmax_labels
    from .net.checkpoint import load_checkpoint
    from .net.model import infer

    manifest = _load_manifest(args.manifest)
    params, cfg, _ = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = manifest.split(args.split) if args.split != "all" else list(manifest.entries)

    def one(entry):
        pm = infer(manifest.load_frame(entry), params, cfg)
        probs = out / f"{entry.frame_id}_probs.npy"
        mask = out / f"{entry.frame_id}_pred.png"
        np.save(probs, pm.probs.astype(np.float32))
        write_label_mask(argmax_labels(pm), mask)
        return {"frame_id": entry.frame_id, "probs": probs.name, "mask": mask.name}

    records = _pmap(one, entries, args.jobs)
    _write_json({"schema_version": PREDICTIONS_VERSION, "entries": records}, out / "predictions.json")
    print(f"infer frames={len(records)} predictions={out / 'predictions.json'}")


def load_predictions(path):
    """Read a predictions index into {frame_id: ProbabilityMap or LabelMask}."""
    from .io import read_label_mask

    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"predictions not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
        if str(obj["schema_version"]).split(".")[0] != PREDICTIONS_VERSION.split(".")[0]:
            raise SchemaError(f"{path}: unsupported predictions schema {obj['schema_version']!r}")
        records = obj["entries"]
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed predictions index ({exc})") from None
    out = {}
    for r in records:
        if r.get("probs"):
            f = path.parent / r["probs"]
            if not f.is_file():
                raise MissingFileError(f"missing file {f}")
            out[r["frame_id"]] = ProbabilityMap(np.load(f).astype(np.float64))
        elif r.get("mask"):
            out[r["frame_id"]] = read_label_mask(path.parent / r["mask"])
        else:
            raise SchemaError(f"{path}: entry {r.get('frame_id')!r} has neither probs nor mask")
    return out


def cmd_eval(args) -> None:
    from .evaluate import evaluate_dataset

    manifest = _load_manifest(args.manifest)
    preds = load_predictions(args.predictions)
    entries = [e for e in manifest.split(args.split) if e.frame_id in preds]
    if not entries:
        raise SchemaError(f"no predictions for any {args.split} entry")
    truths = _pmap(manifest.load_truth, entries, args.jobs)
    report = evaluate_dataset([preds[e.frame_id] for e in entries], truths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "report.json", out / "report.txt", out / "roc.csv")
    sys.stdout.write(report.to_text())


def cmd_render(args) -> None:
    from .imgcore import render_mask, render_probability
    from .io import write_rgb

    manifest = _load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for e in manifest.entries:
        for key in ("mask", "truth"):
            if getattr(e, key):
                jobs.append((f"{e.frame_id}_{key}.png", lambda e=e, key=key: render_mask(
                    manifest.load_mask(e) if key == "mask" else manifest.load_truth(e))))
    if args.predictions:
        for fid, p in load_predictions(args.predictions).items():
            if isinstance(p, ProbabilityMap):
                jobs.append((f"{fid}_probs.png", lambda p=p: render_probability(p)))
                from .evaluate import argmax_labels

                jobs.append((f"{fid}_pred.png", lambda p=p: render_mask(argmax_labels(p))))
            else:
                jobs.append((f"{fid}_pred.png", lambda p=p: render_mask(p)))
    _pmap(lambda j: write_rgb(j[1](), out / j[0]), jobs, args.jobs)
    print(f"render images={len(jobs)} out={out}")


def cmd_bench(args) -> None:
    from .bench import compare_backends, forward_latency

    channels = [int(c) for c in args.channels.split(",")]
    rows = [forward_latency(c, args.size, args.repeats, args.seed, args.warmup) for c in channels]
    result = {"backend": _backend.NAME, "forward": rows}
    for r in rows:
        print(
            f"bench in_channels={r['in_channels']} size={r['size']} repeats={r['repeats']} "
            f"mean_ms={r['mean_ms']:.3f} median_ms={r['median_ms']:.3f} p95_ms={r['p95_ms']:.3f}"
        )
    if args.backends:
        result["kernels"] = compare_backends(args.size, args.repeats, args.seed)
        for r in result["kernels"]:
            print(f"kernel backend={r['backend']} name={r['kernel']} median_ms={r['median_ms']:.3f}")
    if args.json:
        _write_json(result, args.json)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="weedseg", description="Multispectral crop/weed segmentation pipeline.")
    p.add_argument("--config", help="JSON file with per-command option defaults")
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for per-frame commands")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset and manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--scale", type=float, default=1.0, help="scale plant and weed sizes")
    s.add_argument("--train-crop", type=int, default=10)
    s.add_argument("--train-weed", type=int, default=10)
    s.add_argument("--test", type=int, default=5)
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--weed-density", type=float, default=None)
    s.add_argument("--misalign", default="0,0,0", help="Red band offset tx,ty,degrees")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("align", help="estimate or apply the rig registration")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--calibration", help="reuse a saved calibration instead of estimating")
    s.add_argument("--calibrate-frame", help="frame id to estimate from (default: first)")
    s.add_argument("--reference", default=NIR)
    s.add_argument("--angle-search", default="-3,3,0.25", help="lo,hi,step in degrees")
    s.add_argument("--search-radius", type=int, default=16)
    s.add_argument("--min-confidence", type=float, default=0.2)
    s.add_argument("--margin", type=int, default=0)
    s.add_argument("--focal", type=float, default=None, help="enable undistortion with this focal length")
    s.add_argument("--k1", type=float, default=0.0)
    s.add_argument("--k2", type=float, default=0.0)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("ndvi", help="add an NDVI band to every frame")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_ndvi)

    s = sub.add_parser("autolabel", help="generate training masks from NDVI")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="train", choices=("train", "test"))
    s.add_argument("--min-blob", default="auto", help="pixels, or 'auto' to scale 300 by frame area")
    s.add_argument("--blur-sigma", type=float, default=1.2)
    s.add_argument("--sharpen", type=float, default=1.0)
    s.add_argument("--connectivity", type=int, default=4, choices=(4, 8))
    s.set_defaults(func=cmd_autolabel)

    s = sub.add_parser("stats", help="class frequencies and median-frequency weights")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="train", choices=("train", "test"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", help="train the network")
    s.add_argument("--manifest", required=True)
    s.add_argument("--weights", help="class weights JSON from 'stats' (default uniform)")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="write loss/accuracy history JSON here")
    s.add_argument("--in-channels", type=int, default=3)
    s.add_argument("--encoder-blocks", default="16,32")
    s.add_argument("--iterations", type=int, default=2000)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--weight-decay", type=float, default=0.005)
    s.add_argument("--batch-size", type=int, default=6)
    s.add_argument("--momentum", type=float, default=0.0)
    s.add_argument("--record-every", type=int, default=10)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="per-pixel class probabilities")
    s.add_argument("--manifest", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", default="test", choices=("train", "test", "all"))
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="precision/recall/F1/AUC report")
    s.add_argument("--manifest", required=True)
    s.add_argument("--predictions", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", default="test", choices=("train", "test"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="colour images of masks and probability maps")
    s.add_argument("--manifest", required=True)
    s.add_argument("--predictions")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("bench", help="forward-pass latency per input channel count")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--repeats", type=int, default=20)
    s.add_argument("--warmup", type=int, default=2)
    s.add_argument("--channels", default="1,2,3")
    s.add_argument("--backends", action="store_true", help="also time kernels on every backend")
    s.add_argument("--json")
    s.set_defaults(func=cmd_bench)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    """Install config-file values as parser defaults so flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise MissingFileError(f"config not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise SchemaError(f"{path}: top level must be an object")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    for section, values in cfg.items():
        if section == "global":
            target, allowed = parser, set(GLOBAL_KEYS)
        elif section in subs:
            target = subs[section]
            allowed = {a.dest for a in target._actions if a.dest not in ("help", "func")}
        else:
            raise SchemaError(f"{path}: unknown config section {section!r}")
        if not isinstance(values, dict):
            raise SchemaError(f"{path}: section {section!r} must be an object")
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise SchemaError(f"{path}: unknown keys in {section!r}: {unknown}")
        target.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        args.func(args)
    except UsageError as exc:
        print(f"error code={exc.code} message={json.dumps(str(exc))}", file=sys.stderr)
        return 2
    except WeedsegError as exc:
        print(f"error code={exc.code} message={json.dumps(str(exc))}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error code=io message={json.dumps(str(exc))}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
