"""Command-line entry points for the raw-to-raw mapping pipeline.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import annotations, baselines, calibfit, evalkit, nnmap, rawio, synthcam
from .errors import MetadataError, Raw2RawError
from .service.app import DATA_ROOT_ENV


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _size(text: str) -> tuple[int, int]:
    h, w = text.lower().split("x")
    return int(h), int(w)


def _data_root(value: str | None) -> Path:
    if value:
        return Path(value)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    raise Raw2RawError(
        f"no dataset root given and {DATA_ROOT_ENV} is not set")


def build_parser() -> _Parser:
    parser = _Parser(prog="raw2raw",
                     description="Raw-to-raw camera color mapping toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset root")
    p.add_argument("--scenes", type=int, default=16,
                   help="unpaired scenes per camera")
    p.add_argument("--anchors", type=int, default=4)
    p.add_argument("--tests", type=int, default=8)
    p.add_argument("--size", type=_size, default=(128, 128),
                   metavar="HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a-peaks", type=_floats, default=(600.0, 540.0, 460.0))
    p.add_argument("--a-widths", type=_floats, default=(45.0, 45.0, 45.0))
    p.add_argument("--b-peaks", type=_floats, default=(615.0, 525.0, 445.0))
    p.add_argument("--b-widths", type=_floats, default=(30.0, 30.0, 30.0))
    p.add_argument("--exposure-percentile", type=float, default=99.0)
    p.add_argument("--temp-range", type=_floats, default=(2800.0, 7500.0),
                   metavar="LO,HI", help="blackbody temperature range (K)")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("fit-calib",
                       help="fit a color map from an annotation record")
    p.add_argument("--root", help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--pair", required=True, help="pair id (scene id)")
    p.add_argument("--record", help="annotation JSON "
                   "(default <root>/annotations/<pair>.json)")
    p.add_argument("--kernel", choices=[k.value for k in calibfit.Kernel],
                   default=calibfit.Kernel.POLY11.value)
    p.add_argument("--out", help="write fitted map JSON here")
    p.set_defaults(func=cmd_fit_calib)

    p = sub.add_parser("build-anchors",
                       help="synthesize pixel-aligned anchor pairs from "
                            "annotated chart scenes")
    p.add_argument("--root", help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--out", required=True, help="anchor output directory")
    p.add_argument("--pairs", help="comma-separated pair ids "
                   "(default: every annotated pair)")
    p.set_defaults(func=cmd_build_anchors)

    p = sub.add_parser("train", help="train the mapping model")
    p.add_argument("--data", help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--anchors", help="anchor index JSON from build-anchors "
                   "(default: the dataset's anchor split)")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--ablate", action="append", default=[],
                   choices=["no-Lr", "no-La", "no-Lm", "m-only"],
                   help="disable loss terms")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--out", required=True,
                   help="output directory (model + loss log)")
    p.add_argument("--resume", help="checkpoint stem to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("map", help="map raw frames across cameras")
    p.add_argument("--model", required=True, help="model stem from train")
    p.add_argument("--input", required=True,
                   help="frame file or directory of frames")
    p.add_argument("--direction", choices=["A2B", "B2A"], default="A2B")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("eval", help="score mapped frames against ground truth")
    p.add_argument("--mapped", required=True, help="directory of mapped frames")
    p.add_argument("--gt", required=True, help="directory of reference frames")
    p.add_argument("--profile", required=True,
                   help="camera color profile JSON")
    p.add_argument("--method", default="model", help="report label")
    p.add_argument("--direction", default="A2B")
    p.add_argument("--csv", help="write per-image CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="run a reference baseline")
    p.add_argument("--data", help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--which", required=True,
                   choices=[baselines.GLOBAL_3X3_LABEL,
                            baselines.GLOBAL_POLY_LABEL,
                            baselines.FDA_LABEL])
    p.add_argument("--beta", type=float, default=0.01,
                   help="FDA low-frequency window fraction")
    p.add_argument("--csv", help="write per-anchor CSV here")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("annotate-serve", help="run the annotation service")
    p.add_argument("--root", help=f"dataset root (default ${DATA_ROOT_ENV})")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_annotate_serve)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_synth_gen(args) -> int:
    sensor_a = synthcam.gaussian_sensor("camA", peaks=args.a_peaks,
                                        widths=args.a_widths)
    sensor_b = synthcam.gaussian_sensor("camB", peaks=args.b_peaks,
                                        widths=args.b_widths)
    manifest = synthcam.make_paired_dataset(
        args.scenes, sensor_a, sensor_b, args.seed, args.out,
        image_size=args.size, n_anchor=args.anchors, n_test=args.tests,
        exposure_percentile=args.exposure_percentile,
        temperature_range=args.temp_range)
    profile_dir = Path(args.out) / "profiles"
    profile_dir.mkdir(exist_ok=True)
    for name, matrix in manifest["profiles"].items():
        evalkit.save_profile(
            evalkit.CameraColorProfile(np.asarray(matrix), name),
            profile_dir / f"{name}.json")
    n = len(manifest["entries"])
    print(f"wrote {n} frames under {args.out} "
          f"(cameras {sensor_a.name}/{sensor_b.name}, seed {args.seed})")
    return 0


def _store(root):
    from .service.store import DatasetStore

    return DatasetStore(_data_root(root))


def cmd_fit_calib(args) -> int:
    store = _store(args.root)
    pair = store.pair(args.pair)
    if pair is None:
        raise MetadataError(f"unknown pair {args.pair!r}")
    record_path = Path(args.record) if args.record \
        else store.record_path(args.pair)
    if not record_path.exists():
        raise MetadataError(f"no annotation record at {record_path}")
    record = annotations.load_record(record_path)
    store.validate_record(pair, record)
    samples = calibfit.collect_samples(
        store.image(pair.surface_a.image_id),
        store.image(pair.surface_b.image_id),
        {"chart_a": record.chart_a, "chart_b": record.chart_b,
         "regions": record.regions})
    cmap = calibfit.fit_map(samples, calibfit.Kernel(args.kernel),
                            store.camera_a, store.camera_b)
    if args.out:
        calibfit.save_map(cmap, args.out)
    print(f"fit {args.kernel} on {len(samples)} samples: "
          f"residual_rms {cmap.fit_residual_rms:.6f}")
    return 0


def cmd_build_anchors(args) -> int:
    store = _store(args.root)
    wanted = args.pairs.split(",") if args.pairs else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for pair in store.pairs():
        if wanted is not None and pair.pair_id not in wanted:
            continue
        if not store.record_path(pair.pair_id).exists():
            if wanted is not None:
                raise MetadataError(f"pair {pair.pair_id} has no annotations")
            continue
        record = store.load_record(pair.pair_id)
        store.validate_record(pair, record)
        if pair.free_a is None or pair.free_b is None:
            raise MetadataError(
                f"pair {pair.pair_id} lacks chart-free frames")
        pair_ab, pair_ba = calibfit.build_anchor_pair(
            store.image(pair.surface_a.image_id),
            store.image(pair.free_a.image_id),
            store.image(pair.surface_b.image_id),
            store.image(pair.free_b.image_id),
            {"chart_a": record.chart_a, "chart_b": record.chart_b,
             "regions": record.regions},
            scene_id=pair.pair_id)
        for tag, anchor in (("ab", pair_ab), ("ba", pair_ba)):
            entry = {"scene_id": pair.pair_id, "variant": tag}
            for side, img in (("a", anchor.image_a), ("b", anchor.image_b)):
                rel = f"{pair.pair_id}_{tag}_{side}"
                rawio.save_frame(
                    rawio.packed_to_frame(img, bit_depth=16,
                                          camera_id=img.camera_id),
                    out / rel)
                entry[f"path_{side}"] = rel
            entry["residual_rms"] = anchor.provenance["map"]["fit_residual_rms"]
            index.append(entry)
    if not index:
        raise MetadataError("no annotated pairs found to build anchors from")
    with open(out / "anchors.json", "w") as f:
        json.dump({"anchors": index}, f, indent=1, sort_keys=True)
    print(f"wrote {len(index)} anchor pairs under {out}")
    return 0


def _manifest_training_sets(root: Path):
    manifest = synthcam.load_manifest(root)
    unpaired_a = [e["image"] for e in synthcam.manifest_frames(
        manifest, root, split="unpaired_A", include_chart=False)]
    unpaired_b = [e["image"] for e in synthcam.manifest_frames(
        manifest, root, split="unpaired_B", include_chart=False)]
    by_scene: dict[str, dict] = {}
    for e in synthcam.manifest_frames(manifest, root, split="anchor",
                                      include_chart=False):
        by_scene.setdefault(e["scene_id"], {})[e["camera_id"]] = e["image"]
    cam_a = manifest["sensor_a"]["name"]
    cam_b = manifest["sensor_b"]["name"]
    anchors = [calibfit.AnchorPair(v[cam_a], v[cam_b], {"scene_id": k})
               for k, v in sorted(by_scene.items()) if len(v) == 2]
    return unpaired_a, unpaired_b, anchors


def _anchor_file_pairs(index_path: Path):
    with open(index_path) as f:
        index = json.load(f)
    root = index_path.parent
    anchors = []
    for entry in index["anchors"]:
        img_a = rawio.normalize(rawio.load_frame(root / entry["path_a"]))
        img_b = rawio.normalize(rawio.load_frame(root / entry["path_b"]))
        anchors.append(calibfit.AnchorPair(
            img_a, img_b, {"scene_id": entry["scene_id"],
                           "variant": entry["variant"]}))
    return anchors


def cmd_train(args) -> int:
    root = _data_root(args.data)
    unpaired_a, unpaired_b, anchors = _manifest_training_sets(root)
    if args.anchors:
        anchors = _anchor_file_pairs(Path(args.anchors))
    config_dict = {}
    if args.config:
        with open(args.config) as f:
            config_dict = json.load(f)
    config = nnmap.TrainConfig.from_dict(config_dict)
    switches = config.loss_switches
    for token in args.ablate:
        if token == "no-Lr":
            switches = nnmap.LossSwitches(False, switches.use_a, switches.use_m)
        elif token == "no-La":
            switches = nnmap.LossSwitches(switches.use_r, False, switches.use_m)
        elif token == "no-Lm":
            switches = nnmap.LossSwitches(switches.use_r, switches.use_a, False)
        elif token == "m-only":
            switches = nnmap.LossSwitches(False, False, True)
    config.loss_switches = switches
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.seed is not None:
        config.seed = args.seed
    out = Path(args.out)
    model = nnmap.train(
        {"unpaired_a": unpaired_a, "unpaired_b": unpaired_b,
         "anchors": anchors},
        config, out_dir=out, resume_from=args.resume)
    nnmap.save_model(model, out / "model")
    final = model.loss_history[-1]["total"] if model.loss_history else 0.0
    print(f"trained {config.epochs} epochs; final loss {final:.6f}; "
          f"model at {out / 'model'}")
    return 0


def cmd_map(args) -> int:
    model = nnmap.load_model(args.model)
    src = Path(args.input)
    paths = sorted(src.glob("*.raw16")) if src.is_dir() else [src]
    if not paths:
        raise MetadataError(f"no frames found under {src}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        img = rawio.normalize(rawio.load_frame(path))
        mapped = nnmap.map_image(img, model, args.direction)
        rawio.save_frame(
            rawio.packed_to_frame(mapped, bit_depth=16,
                                  camera_id=mapped.camera_id),
            out / path.stem)
    print(f"mapped {len(paths)} frames {args.direction} into {out}")
    return 0


def _frames_by_stem(directory: Path) -> dict:
    frames = {}
    for path in sorted(directory.glob("*.raw16")):
        frames[path.stem] = rawio.normalize(rawio.load_frame(path))
    if not frames:
        raise MetadataError(f"no frames found under {directory}")
    return frames


def cmd_eval(args) -> int:
    mapped = _frames_by_stem(Path(args.mapped))
    truth = _frames_by_stem(Path(args.gt))
    shared = sorted(set(mapped) & set(truth))
    if not shared:
        raise MetadataError("no filename overlap between --mapped and --gt")
    profile = evalkit.load_profile(args.profile)
    report = evalkit.evaluate([mapped[k] for k in shared],
                              [truth[k] for k in shared], profile,
                              method=args.method, direction=args.direction,
                              names=shared)
    print(report.to_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_baseline(args) -> int:
    root = _data_root(args.data)
    manifest = synthcam.load_manifest(root)
    cam_b = manifest["sensor_b"]["name"]
    profile = evalkit.CameraColorProfile(
        np.asarray(manifest["profiles"][cam_b]), cam_b)
    _, _, anchors = _manifest_training_sets(root)
    by_scene: dict[str, dict] = {}
    for e in synthcam.manifest_frames(manifest, root, split="test",
                                      include_chart=False):
        by_scene.setdefault(e["scene_id"], {})[e["camera_id"]] = e["image"]
    cam_a = manifest["sensor_a"]["name"]
    tests = [(v[cam_a], v[cam_b]) for _, v in sorted(by_scene.items())
             if len(v) == 2]
    if args.which == baselines.FDA_LABEL:
        report = baselines.fda_run([a.image_b for a in anchors], tests,
                                   baselines.FdaConfig(beta=args.beta),
                                   profile)
    else:
        kernel = calibfit.Kernel.IDENTITY \
            if args.which == baselines.GLOBAL_3X3_LABEL \
            else calibfit.Kernel.POLY11
        report = baselines.global_calibration_run(anchors, tests, kernel,
                                                  profile)
    print(report.to_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_annotate_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_data_root(args.root))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Raw2RawError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
