"""Dataset manifests, run configuration, file I/O, and the command line.

Subcommands expose each module as an independently testable surface:
normalize, tile, masks, score, grade, losscheck, anchors. Every
randomized step takes an explicit --seed and is bit-reproducible given
it; output files are written atomically (write-temp-then-rename).

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import annotation, evaluation, geometry, imaging, losses, tiling
from .errors import ManifestError, MitodetError

VALID_SPLITS = ("train", "validation", "test")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


# ---------------------------------------------------------------------------
# dataset manifest

@dataclass(frozen=True)
class ManifestEntry:
    """One slide: paths are recorded verbatim, existence checked at use."""

    slide_id: str
    image_path: str
    centroid_csv_path: str
    scanner: str
    resolution: float  # micrometers per pixel
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple


def load_manifest(path):
    """Load and validate a dataset manifest JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise ManifestError(f"{path}: expected an object with an 'entries' list")

    entries = []
    seen = set()
    for index, raw in enumerate(data["entries"]):
        where = f"{path}: entries[{index}]"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: expected an object")
        for key in ("slide_id", "image_path", "centroid_csv_path",
                    "scanner", "resolution", "split"):
            if key not in raw:
                raise ManifestError(f"{where}: missing field '{key}'")
        slide_id = str(raw["slide_id"])
        if slide_id in seen:
            raise ManifestError(f"{where}: duplicate slide_id '{slide_id}'")
        seen.add(slide_id)
        if raw["split"] not in VALID_SPLITS:
            raise ManifestError(
                f"{where}: unknown split '{raw['split']}' (expected {VALID_SPLITS})")
        try:
            resolution = float(raw["resolution"])
        except (TypeError, ValueError):
            raise ManifestError(f"{where}: resolution must be a number") from None
        entries.append(ManifestEntry(slide_id, str(raw["image_path"]),
                                     str(raw["centroid_csv_path"]),
                                     str(raw["scanner"]), resolution,
                                     str(raw["split"])))
    return DatasetManifest(tuple(entries))


@dataclass
class RunConfig:
    """Pipeline parameter bundle; defaults mirror the module defaults."""

    tile_size: int = tiling.DEFAULT_TILE_SIZE
    overlap: float = tiling.DEFAULT_OVERLAP
    mask_seed: int | None = None
    matching_radius: float = evaluation.MATCH_RADIUS
    dedup_radius: float = tiling.DEFAULT_DEDUP_RADIUS
    od_threshold: float = imaging.DEFAULT_OD_THRESHOLD
    angle_percentile: float = imaging.DEFAULT_ANGLE_PERCENTILE
    lam: float = 1.0
    pos_threshold: float = 0.7
    neg_threshold: float = 0.3

    def validate(self):
        if self.tile_size < 32:
            raise ValueError(f"tile_size must be >= 32, got {self.tile_size}")
        if not 0.0 <= self.overlap <= 0.95:
            raise ValueError(f"overlap must lie in [0, 0.95], got {self.overlap}")
        if self.matching_radius <= 0.0 or self.dedup_radius <= 0.0:
            raise ValueError("radii must be positive")
        if self.od_threshold <= 0.0:
            raise ValueError("od_threshold must be positive")
        if not 0.0 < self.angle_percentile < 50.0:
            raise ValueError("angle_percentile must lie in (0, 50)")
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")
        if not 0.0 <= self.neg_threshold < self.pos_threshold <= 1.0:
            raise ValueError("need 0 <= neg_threshold < pos_threshold <= 1")
        return self


# ---------------------------------------------------------------------------
# file I/O

def _atomic_write(path, write_fn):
    # write to a temp file in the same directory, then rename into place
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            write_fn(handle)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_image(path):
    """Read a raster file as an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_image(path, pixels):
    """Write an image atomically as PNG (uint8 RGB or single-channel)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    image = Image.fromarray(pixels)
    _atomic_write(path, lambda h: image.save(h, format="PNG", compress_level=1))


def write_json(path, obj):
    """Write JSON atomically with sorted keys (byte-reproducible)."""
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    _atomic_write(path, lambda h: h.write(text.encode("utf-8")))


def load_centroids(path, order="xy", slide_id=""):
    """Load a centroid CSV; order='rowcol' swaps the two columns."""
    with open(path, "r", encoding="utf-8") as handle:
        labels = annotation.parse_centroids(handle.read(), slide_id=slide_id)
    if order == "rowcol":
        labels = [annotation.CentroidLabel(lab.y, lab.x, lab.slide_id)
                  for lab in labels]
    return labels


def load_detections(path):
    """Load a detections JSON file -> (slide_id, list of Detection)."""
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict) or not isinstance(data.get("detections"), list):
        raise ValueError(f"{path}: expected an object with a 'detections' list")
    detections = []
    for index, raw in enumerate(data["detections"]):
        try:
            box = None
            if raw.get("box") is not None:
                box = geometry.BoundingBox(*[float(v) for v in raw["box"]])
            detections.append(evaluation.Detection(
                float(raw["x"]), float(raw["y"]),
                float(raw.get("confidence", 1.0)), box))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: detections[{index}]: {exc}") from None
    return str(data.get("slide_id", "")), detections


# ---------------------------------------------------------------------------
# subcommands

def _cmd_normalize(args):
    config = RunConfig(od_threshold=args.od_threshold,
                       angle_percentile=args.angle_percentile).validate()
    source_image = read_image(args.input)
    target_image = read_image(args.reference)
    source = imaging.estimate_stain_profile(
        source_image, config.od_threshold, config.angle_percentile, args.floor)
    target = imaging.estimate_stain_profile(
        target_image, config.od_threshold, config.angle_percentile, args.floor)
    write_image(args.out, imaging.normalize_stains(
        source_image, source, target, args.floor))
    if args.profiles_out:
        write_json(args.profiles_out,
                   {"source": source.to_dict(), "target": target.to_dict()})
    return EXIT_OK


def _tile_name(origin):
    return f"tile_x{origin[0]:05d}_y{origin[1]:05d}.png"


def _cmd_tile(args):
    config = RunConfig(tile_size=args.size, overlap=args.overlap).validate()
    image = read_image(args.input)
    height, width = image.shape[:2]
    plan = tiling.plan_tiles(width, height, config.tile_size, config.overlap)
    for ref in tiling.tile_refs(plan):
        tile = tiling.extract_tile(image, ref, plan.tile_size)
        write_image(os.path.join(args.out_dir, _tile_name(ref.origin)), tile)
    write_json(args.manifest, plan.to_dict())
    return EXIT_OK


def _shape_params(shape):
    if shape.kind == "circle":
        return {"r": shape.r}
    return {"a": shape.a, "b": shape.b, "theta": shape.theta}


def _cmd_masks(args):
    labels = load_centroids(args.centroids, order=args.coords)
    rng = np.random.default_rng(args.seed)
    canvas = np.zeros((args.height, args.width), dtype=np.uint8)
    objects = []
    for label in labels:
        obj = annotation.build_ground_truth(
            annotation.synthesize_shape(label, rng), args.width, args.height)
        np.maximum(canvas, obj.raster, out=canvas)
        objects.append({"kind": obj.shape.kind,
                        "center": [obj.shape.cx, obj.shape.cy],
                        "params": _shape_params(obj.shape),
                        "bbox": [obj.bbox.x1, obj.bbox.y1, obj.bbox.x2, obj.bbox.y2]})
    write_image(args.out_mask, canvas * 255)
    if args.out_objects:
        write_json(args.out_objects, {"objects": objects})
    return EXIT_OK


def _cmd_score(args):
    config = RunConfig(matching_radius=args.radius,
                       dedup_radius=args.dedup_radius).validate()
    _, detections = load_detections(args.pred)
    gts = [(lab.x, lab.y) for lab in load_centroids(args.gt, order=args.coords)]
    result = evaluation.evaluate_slide(detections, gts,
                                       config.matching_radius,
                                       config.dedup_radius)
    write_json(args.out, result.to_dict())
    return EXIT_OK


def _cmd_grade(args):
    score = evaluation.mitotic_activity_score(args.count)
    print(score)
    if args.out:
        write_json(args.out, {"count": args.count, "score": score})
    return EXIT_OK


def _cmd_losscheck(args):
    report = losses.run_loss_verification(args.trials, args.seed,
                                          args.step, args.tolerance)
    if args.out:
        write_json(args.out, report)
    for entry in report:
        status = "pass" if entry["pass"] else "FAIL"
        print(f"{entry['op']}: max_rel_err={entry['max_rel_err']:.3e} {status}")
    return EXIT_OK if all(entry["pass"] for entry in report) else EXIT_VALIDATION


def _cmd_anchors(args):
    config = RunConfig(pos_threshold=args.pos_threshold,
                       neg_threshold=args.neg_threshold).validate()
    anchors = geometry.generate_anchors(args.grid_width, args.grid_height,
                                        args.stride)
    payload = {"anchors": [{"box": list(a.box.as_array()),
                            "scale": a.scale,
                            "ratio": a.ratio,
                            "location": list(a.location)} for a in anchors]}
    if args.gt:
        with open(args.gt, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        gt_boxes = [geometry.BoundingBox(*[float(v) for v in b])
                    for b in data["boxes"]]
        targets = geometry.assign_rpn_targets(anchors, gt_boxes,
                                              config.pos_threshold,
                                              config.neg_threshold)
        payload["targets"] = [
            {"anchor_index": t.anchor_index, "label": t.label,
             "deltas": None if t.deltas is None else list(t.deltas)}
            for t in targets]
    write_json(args.out, payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point

def build_parser():
    parser = argparse.ArgumentParser(
        prog="mitodet",
        description="Deterministic mitosis-detection pipeline stages: stain "
                    "normalization, tiling, weak-label masks, detection "
                    "geometry, loss verification, and scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="stain-normalize an image onto a reference")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", required=True, help="target-profile image")
    p.add_argument("--out", required=True)
    p.add_argument("--od-threshold", type=float, default=imaging.DEFAULT_OD_THRESHOLD)
    p.add_argument("--angle-percentile", type=float,
                   default=imaging.DEFAULT_ANGLE_PERCENTILE)
    p.add_argument("--floor", type=int, default=1)
    p.add_argument("--profiles-out", help="also dump both stain profiles as JSON")
    p.set_defaults(func=_cmd_normalize)

    p = sub.add_parser("tile", help="sliding-window tiling with overlap")
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=tiling.DEFAULT_TILE_SIZE)
    p.add_argument("--overlap", type=float, default=tiling.DEFAULT_OVERLAP)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest", required=True, help="tile-plan JSON output")
    p.set_defaults(func=_cmd_tile)

    p = sub.add_parser("masks", help="synthesize circle/ellipse masks from centroids")
    p.add_argument("--centroids", required=True, help="CSV of x,y per line")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-mask", required=True, help="union mask PNG (0/255)")
    p.add_argument("--out-objects", help="objects JSON output")
    p.add_argument("--coords", choices=("xy", "rowcol"), default="xy")
    p.set_defaults(func=_cmd_masks)

    p = sub.add_parser("score", help="match detections against ground truth")
    p.add_argument("--pred", required=True, help="detections JSON")
    p.add_argument("--gt", required=True, help="ground-truth centroid CSV")
    p.add_argument("--radius", type=float, default=evaluation.MATCH_RADIUS)
    p.add_argument("--dedup-radius", type=float, default=tiling.DEFAULT_DEDUP_RADIUS)
    p.add_argument("--coords", choices=("xy", "rowcol"), default="xy")
    p.add_argument("--out", required=True, help="metrics JSON output")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("grade", help="mitotic-activity score from a count")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_grade)

    p = sub.add_parser("losscheck", help="finite-difference gradient verification")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--step", type=float, default=losses.GRAD_CHECK_STEP)
    p.add_argument("--tolerance", type=float, default=losses.GRAD_CHECK_TOLERANCE)
    p.add_argument("--out", help="JSON report output")
    p.set_defaults(func=_cmd_losscheck)

    p = sub.add_parser("anchors", help="dump anchors and RPN target assignments")
    p.add_argument("--grid-width", type=int, required=True)
    p.add_argument("--grid-height", type=int, required=True)
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--gt", help="JSON with ground-truth 'boxes'")
    p.add_argument("--pos-threshold", type=float, default=0.7)
    p.add_argument("--neg-threshold", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_anchors)

    return parser


def run_command(argv):
    """Run one CLI command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        return args.func(args)
    except (MitodetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
