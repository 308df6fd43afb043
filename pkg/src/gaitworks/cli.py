"""Command-line front door for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
With --json each subcommand prints exactly one JSON document to stdout and
errors go to stderr as {"error": {"code", "message"}}.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import CLASS_NAMES, __version__
from . import dataset as ds
from . import explain as ex
from . import gait
from . import model as mdl
from . import silhouette as sil
from . import synth
from .service import Settings, serve


class DataError(Exception):
    """Bad input data or files; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaitworks", description=__doc__)
    p.add_argument("--version", action="version", version=f"gaitworks {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    sp = add_parser("segment", help="chroma-key frames into binary masks")
    sp.add_argument("--frames", required=True, help="directory of frame_NNNN.png RGB frames")
    sp.add_argument("--background", help="background-only frame (default: frames/background.png or the first frame)")
    sp.add_argument("--out", required=True, help="output mask directory")
    sp.add_argument("--min-blob-fraction", type=float, default=sil.DEFAULT_MIN_BLOB_FRACTION)
    sp.add_argument("--jobs", type=int, default=1)

    sp = add_parser("cycles", help="detect gait cycles from a mask directory")
    sp.add_argument("--masks", required=True)
    sp.add_argument("--fps", type=float, default=10.0, help="source framerate of the masks")
    sp.add_argument("--out", help="write the cycle JSON here instead of stdout")

    for kind in ("gei", "sei"):
        sp = add_parser(kind, help=f"compute per-cycle {kind.upper()} images")
        sp.add_argument("--masks", required=True)
        if kind == "sei":
            sp.add_argument("--poses", required=True, help="directory of frame_NNNN.json pose files")
        sp.add_argument("--fps", type=float, default=10.0)
        sp.add_argument("--out", required=True, help="output directory for cycle_NN.png")
        sp.add_argument("--full-sequence", action="store_true",
                        help="also write sequence.png over all frames")

    sp = add_parser("synth", help="generate a synthetic labeled dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--subjects", type=int, default=10)
    sp.add_argument("--seqs-per-class", type=int, default=2)
    sp.add_argument("--frames", type=int, default=64)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--green-screen", action="store_true")
    sp.add_argument("--kinds", default="gei,sei", help="comma list of energy kinds to precompute (may be empty)")

    sp = add_parser("train", help="train a model on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kind", choices=("gei", "sei"), default="gei")
    sp.add_argument("--out", required=True, help="model file to write")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--patience", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--holdout", help="comma list of subjects held out for evaluation")
    sp.add_argument("--history", help="write per-epoch loss/accuracy CSV here")
    sp.add_argument("--exclude-repeats", action="store_true")
    sp.add_argument("--quiet", action="store_true")

    sp = add_parser("crossval", help="10-fold subject-wise cross-validation (21 subjects)")
    sp.add_argument("--dataset")
    sp.add_argument("--kind", choices=("gei", "sei"), default="gei")
    sp.add_argument("--out", help="write metrics JSON here")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--patience", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--folds-only", action="store_true", help="print the fold triples and exit")
    sp.add_argument("--quiet", action="store_true")

    sp = add_parser("crossdataset", help="train on one dataset, test on another")
    sp.add_argument("--train-dataset", required=True)
    sp.add_argument("--test-dataset", required=True)
    sp.add_argument("--kind", choices=("gei", "sei"), default="gei")
    sp.add_argument("--out")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=0.001)
    sp.add_argument("--patience", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exclude-repeats", action="store_true",
                    help="drop repeat-subject acquisitions from the training set")
    sp.add_argument("--quiet", action="store_true")

    sp = add_parser("predict", help="classify one energy image")
    sp.add_argument("--model", required=True)
    sp.add_argument("--image", required=True)

    sp = add_parser("explain", help="write saliency / grad-CAM heatmaps for one image")
    sp.add_argument("--model", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--method", choices=("saliency", "gradcam"), default="gradcam")
    sp.add_argument("--layer", type=int, help="conv block index for grad-CAM (default: last)")
    sp.add_argument("--target-class", type=int)
    sp.add_argument("--out-prefix", required=True)

    sp = add_parser("model-info", help="report a model file's layer plan and sizes")
    sp.add_argument("--model", required=True)
    sp.add_argument("--latency", action="store_true", help="measure per-sample inference time")

    sp = add_parser("serve", help="start the HTTP service")
    sp.add_argument("--port", type=int)
    sp.add_argument("--model-gei")
    sp.add_argument("--model-sei")
    sp.add_argument("--session-ttl", type=float)
    sp.add_argument("--max-upload-mb", type=float)
    sp.add_argument("--static-dir")

    return p


# --- subcommand implementations ----------------------------------------------

def _load_model(path: str) -> mdl.GaitModel:
    try:
        return mdl.load_model(path)
    except FileNotFoundError as e:
        raise DataError(str(e)) from e
    except mdl.ModelFormatError as e:
        raise DataError(str(e)) from e


def _load_image(path: str, kind: str) -> gait.EnergyImage:
    try:
        return gait.load_energy_png(path, kind=kind)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from e


def _load_samples(root: str, kind: str, include_repeats: bool = True):
    try:
        return ds.load_energy_dataset(root, kind, include_repeats=include_repeats)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from e


def cmd_segment(args) -> dict:
    frames_dir = Path(args.frames)
    frame_paths = ds.list_frames(frames_dir, ".png")
    if not frame_paths:
        raise DataError(f"no frame_*.png under {frames_dir}")
    if args.background:
        bg = sil.read_frame(args.background)
    elif (frames_dir / "background.png").exists():
        bg = sil.read_frame(frames_dir / "background.png")
    else:
        bg = sil.read_frame(frame_paths[0])
    model = sil.learn_background(bg)

    def process(path: Path) -> str:
        mask = sil.denoise(sil.segment(sil.read_frame(path), model), args.min_blob_fraction)
        if mask.any():
            mask = sil.largest_component(mask)
        out_path = Path(args.out) / path.name
        sil.write_mask(out_path, mask)
        return str(out_path)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            written = list(pool.map(process, frame_paths))
    else:
        written = [process(p) for p in frame_paths]
    return {"frames": len(written), "out": str(args.out),
            "background_model": model.to_dict()}


def _analysis_payload(analysis: ds.SequenceAnalysis) -> dict:
    return {"fps": ds.TARGET_FPS,
            "frame_indices": analysis.frame_indices,
            "cycles": [{"start": c.start, "end": c.end, "length": c.length}
                       for c in analysis.cycles]}


def cmd_cycles(args) -> dict:
    paths = ds.list_frames(args.masks, ".png")
    if not paths:
        raise DataError(f"no frame_*.png under {args.masks}")
    masks = [sil.read_mask(p) for p in paths]
    try:
        analysis = ds.analyze_masks(masks, args.fps)
    except ValueError as e:
        raise DataError(str(e)) from e
    payload = _analysis_payload(analysis)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=1)
        payload["out"] = args.out
    return payload


def _cmd_energy(args, kind: str) -> dict:
    paths = ds.list_frames(args.masks, ".png")
    if not paths:
        raise DataError(f"no frame_*.png under {args.masks}")
    masks = [sil.read_mask(p) for p in paths]
    poses = None
    if kind == "sei":
        pose_paths = ds.list_frames(args.poses, ".json")
        if len(pose_paths) < len(paths):
            raise DataError(f"{len(pose_paths)} pose files for {len(paths)} masks")
        poses = [gait.load_pose_json(p) for p in pose_paths]
    try:
        analysis, per_cycle, full = ds.energy_images_from_masks(masks, args.fps, kind, poses=poses)
    except ValueError as e:
        raise DataError(str(e)) from e
    if not per_cycle:
        raise DataError("no complete gait cycle found")
    written = ds.write_energy_images(args.out, per_cycle, full,
                                     include_full_sequence=args.full_sequence)
    return {"kind": kind, "cycles": _analysis_payload(analysis)["cycles"],
            "written": [str(p) for p in written]}


def cmd_synth(args) -> dict:
    kinds = tuple(k for k in args.kinds.split(",") if k)
    for k in kinds:
        if k not in ("gei", "sei"):
            raise DataError(f"unknown energy kind {k!r}")
    manifest = synth.generate_dataset(args.out, n_subjects=args.subjects,
                                      seqs_per_class=args.seqs_per_class,
                                      seed=args.seed, n_frames=args.frames,
                                      kinds=kinds, green_screen=args.green_screen)
    return {"out": str(args.out), "subjects": len(manifest.subjects()),
            "sequences": len(manifest.sequences), "kinds": list(kinds)}


def _train_config(args) -> mdl.TrainConfig:
    return mdl.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                           max_epochs=args.epochs, patience=args.patience, seed=args.seed)


def cmd_train(args, log) -> dict:
    samples = _load_samples(args.dataset, args.kind,
                            include_repeats=not args.exclude_repeats)
    holdout = set(filter(None, (args.holdout or "").split(",")))
    subjects = {s.subject for s in samples}
    missing = holdout - subjects
    if missing:
        raise DataError(f"holdout subjects not in dataset: {sorted(missing)}")
    train_set = [s for s in samples if s.subject not in holdout]
    test_set = [s for s in samples if s.subject in holdout]
    if not train_set:
        raise DataError("holdout leaves an empty training set")

    model = mdl.build_model(rng=np.random.default_rng(args.seed), kind=args.kind)
    history = mdl.train(model, train_set, _train_config(args), log=log)
    mdl.save_model(model, args.out)
    if args.history:
        with open(args.history, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "accuracy"])
            for row in history:
                writer.writerow([row["epoch"], f"{row['loss']:.6f}", f"{row['accuracy']:.4f}"])
    payload = {"model": str(args.out), "kind": args.kind,
               "samples": len(train_set), "epochs_run": len(history),
               "final_loss": history[-1]["loss"], "final_accuracy": history[-1]["accuracy"],
               "parameters": model.parameter_counts()}
    if test_set:
        metrics = mdl.evaluate(model, test_set)
        payload["holdout_subjects"] = sorted(holdout)
        payload["holdout_accuracy"] = metrics.accuracy
    return payload


def cmd_crossval(args, log) -> dict:
    if args.folds_only:
        folds = [[f"S{i}" for i in triple] for triple in mdl.make_folds(21)]
        return {"folds": folds}
    if not args.dataset:
        raise DataError("--dataset is required unless --folds-only is given")
    samples = _load_samples(args.dataset, args.kind)
    try:
        result = mdl.cross_validate(samples, _train_config(args), kind=args.kind, log=log)
    except ValueError as e:
        raise DataError(str(e)) from e
    payload = {"mean_accuracy": result["mean_accuracy"],
               "pooled": result["pooled"].to_dict(),
               "folds": [{"fold": f.fold, "test_subjects": f.test_subjects,
                          "accuracy": f.metrics.accuracy} for f in result["folds"]]}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=1)
    return payload


def cmd_crossdataset(args, log) -> dict:
    train_samples = _load_samples(args.train_dataset, args.kind,
                                  include_repeats=not args.exclude_repeats)
    test_samples = _load_samples(args.test_dataset, args.kind)
    metrics = mdl.cross_dataset_eval(train_samples, test_samples,
                                     _train_config(args), kind=args.kind, log=log)
    payload = {"train_samples": len(train_samples), "test_samples": len(test_samples),
               **metrics.to_dict()}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=1)
    return payload


def cmd_predict(args) -> dict:
    model = _load_model(args.model)
    image = _load_image(args.image, model.kind)
    pred = mdl.predict(model, image)
    return {"label": pred.class_name, "label_index": pred.label,
            "probabilities": [float(p) for p in pred.probabilities],
            "class_names": list(CLASS_NAMES)}


def cmd_explain(args) -> dict:
    model = _load_model(args.model)
    image = _load_image(args.image, model.kind)
    try:
        if args.method == "saliency":
            heat = ex.saliency(model, image, target_class=args.target_class)
        else:
            heat = ex.grad_cam(model, image, conv_layer=args.layer,
                               target_class=args.target_class)
    except ValueError as e:
        raise DataError(str(e)) from e
    import cv2

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    heat_path = f"{prefix}_heat.png"
    overlay_path = f"{prefix}_overlay.png"
    cv2.imwrite(heat_path, ex.heatmap_to_u8(heat))
    overlay = ex.render_overlay(image.pixels, heat)
    cv2.imwrite(overlay_path, cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR))
    return {"method": heat.method, "target_class": heat.target_class,
            "target_label": CLASS_NAMES[heat.target_class],
            "layer": heat.source_layer,
            "outputs": [heat_path, overlay_path]}


def cmd_model_info(args) -> dict:
    model = _load_model(args.model)
    layout = mdl.model_file_layout(model)
    payload = {"kind": model.kind,
               "input_shape": [model.config.input_hw, model.config.input_hw,
                               model.config.input_channels],
               "parameters": model.parameter_counts(),
               "file_bytes": Path(args.model).stat().st_size,
               "file_mb": round(Path(args.model).stat().st_size / 1e6, 3),
               "layout": layout,
               "layers": model.layer_table()}
    if args.latency:
        payload["prediction_ms"] = round(mdl.measure_latency(model), 3)
    return payload


def cmd_serve(args) -> dict:
    settings = Settings.from_env()
    if args.port is not None:
        settings.port = args.port
    if args.model_gei:
        settings.model_gei = args.model_gei
    if args.model_sei:
        settings.model_sei = args.model_sei
    if args.session_ttl is not None:
        settings.session_ttl_secs = args.session_ttl
    if args.max_upload_mb is not None:
        settings.max_upload_mb = args.max_upload_mb
    if args.static_dir:
        settings.static_dir = args.static_dir
    try:
        serve(settings)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from e
    return {"status": "stopped"}


# --- human rendering ----------------------------------------------------------

def _print_human(command: str, payload: dict) -> None:
    if command == "predict":
        print(f"label: {payload['label']}")
        for name, p in zip(payload["class_names"], payload["probabilities"]):
            print(f"  {name:13s} {p:.4f}")
    elif command == "model-info":
        params = payload["parameters"]
        print(f"kind: {payload['kind']}  input: {'x'.join(map(str, payload['input_shape']))}")
        print(f"parameters: total {params['total']:,} "
              f"(trainable {params['trainable']:,}, running stats {params['non_trainable']:,})")
        print(f"file size: {payload['file_bytes']:,} bytes ({payload['file_mb']} MB)")
        if "prediction_ms" in payload:
            print(f"prediction latency: {payload['prediction_ms']} ms/sample")
        print(f"{'layer':12s} {'output shape':18s} {'params':>10s}")
        for row in payload["layers"]:
            shape = "x".join(str(v) for v in row["output_shape"])
            print(f"{row['kind']:12s} {shape:18s} {row['params']:>10,}")
    elif command == "crossval" and "folds" in payload and "mean_accuracy" not in payload:
        for triple in payload["folds"]:
            print("{" + ", ".join(triple) + "}")
    else:
        print(json.dumps(payload, indent=1))


def main(argv=None) -> int:
    parser = build_parser()
    json_mode = "--json" in (argv if argv is not None else sys.argv[1:])

    def fail(code: int, err_code: str, message: str) -> int:
        if json_mode:
            print(json.dumps({"error": {"code": err_code, "message": message}}), file=sys.stderr)
        else:
            print(f"error: {message}", file=sys.stderr)
        return code

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return fail(1, "usage", str(e))

    log = None if (args.json or getattr(args, "quiet", False)) else lambda line: print(line)
    try:
        if args.command == "segment":
            payload = cmd_segment(args)
        elif args.command == "cycles":
            payload = cmd_cycles(args)
        elif args.command in ("gei", "sei"):
            payload = _cmd_energy(args, args.command)
        elif args.command == "synth":
            payload = cmd_synth(args)
        elif args.command == "train":
            payload = cmd_train(args, log)
        elif args.command == "crossval":
            payload = cmd_crossval(args, log)
        elif args.command == "crossdataset":
            payload = cmd_crossdataset(args, log)
        elif args.command == "predict":
            payload = cmd_predict(args)
        elif args.command == "explain":
            payload = cmd_explain(args)
        elif args.command == "model-info":
            payload = cmd_model_info(args)
        elif args.command == "serve":
            payload = cmd_serve(args)
        else:  # pragma: no cover
            return fail(1, "usage", f"unknown command {args.command}")
    except DataError as e:
        return fail(2, "data", str(e))
    except (FileNotFoundError, PermissionError) as e:
        return fail(2, "data", str(e))
    except KeyboardInterrupt:
        return fail(3, "interrupted", "interrupted")
    except Exception as e:  # pragma: no cover
        return fail(3, "internal", f"{type(e).__name__}: {e}")

    if args.json:
        print(json.dumps(payload))
    else:
        _print_human(args.command, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
