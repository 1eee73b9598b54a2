"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report lines alongside the pytest verdicts.
"""

import json
import math
import time

import numpy as np
from PIL import Image

from mitodet import (BoundingBox, MaskShape, compute_prf,
                     estimate_stain_profile, iou, iou_matrix, generate_anchors,
                     mask_bce_loss, match_detections, mitotic_activity_score,
                     nms, normalize_stains, rasterize_shape,
                     roi_align, run_command, run_loss_verification, smooth_l1,
                     synthesize_shape, Detection, CentroidLabel, StainProfile)
from conftest import (beer_lambert_image, he_stain_matrix,
                      max_matching_bruteforce, random_stain_pair,
                      stain_angle_errors_deg, textured_he_image,
                      two_stain_concentrations)


def report(number, name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number:02d} {name}: PASS{suffix}")


def test_criterion_01_metric_arithmetic():
    rows = [((86, 14, 14), 0.86, 0.86, 0.86, 1e-12),
            ((627, 198, 323), 0.76, 0.66, 0.708, 0.005),
            ((2541, 759, 1309), 0.77, 0.66, 0.713, 0.005)]
    start = time.perf_counter()
    metrics = [compute_prf(*counts) for counts, _, _, _, _ in rows]
    elapsed = time.perf_counter() - start
    for m, (_, p, r, f, tol) in zip(metrics, rows):
        assert abs(m.precision - p) <= 1e-12
        assert abs(m.recall - r) <= 1e-12
        assert abs(m.f_score - f) <= tol
    assert elapsed < 1e-3
    report(1, "metric arithmetic on reference precision/recall rows",
           f"{elapsed * 1e6:.0f} us")


def test_criterion_02_matching_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    agreements = 0
    for _ in range(1000):
        n = int(rng.integers(0, 7))
        m = int(rng.integers(0, 7))
        det_xy = rng.uniform(0, 100, (n, 2))
        gt_xy = rng.uniform(0, 100, (m, 2))
        result = match_detections(
            [Detection(float(x), float(y)) for x, y in det_xy],
            [tuple(p) for p in gt_xy], radius=30.0)
        if n and m:
            dist = np.hypot(det_xy[:, None, 0] - gt_xy[None, :, 0],
                            det_xy[:, None, 1] - gt_xy[None, :, 1])
            expected = max_matching_bruteforce(dist, 30.0)
        else:
            expected = 0
        agreements += result.tp == expected
    elapsed = time.perf_counter() - start
    assert agreements == 1000
    assert elapsed < 5.0
    report(2, "matching equals exhaustive enumeration",
           f"1000/1000 in {elapsed:.2f} s")


def test_criterion_03_gradient_verification():
    start = time.perf_counter()
    results = run_loss_verification(trials=1000, seed=303, step=1e-6,
                                    tolerance=1e-5)
    elapsed = time.perf_counter() - start
    for entry in results:
        assert entry["pass"], entry
        assert entry["max_rel_err"] <= 1e-5
    assert elapsed < 10.0
    worst = max(entry["max_rel_err"] for entry in results)
    report(3, "gradient verification", f"max_rel_err={worst:.2e}, {elapsed:.2f} s")


def test_criterion_04_loss_landmarks():
    quad, _ = smooth_l1(math.nextafter(1.0, 0.0))
    linear, _ = smooth_l1(1.0)
    assert linear == 0.5
    assert abs(quad - 0.5) < 1e-15
    rng = np.random.default_rng(404)
    for shape in ((1, 1), (28, 28), (512, 512)):
        target = rng.integers(0, 2, shape).astype(np.float64)
        value, _ = mask_bce_loss(np.full(shape, 0.5), target)
        assert abs(value - math.log(2.0)) <= 1e-9
    report(4, "loss landmarks (kink continuity, uniform BCE = ln 2)")


def test_criterion_05_stain_recovery_and_identity():
    start = time.perf_counter()
    recovered = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        stains = random_stain_pair(rng)
        conc = two_stain_concentrations(rng, 64 * 64)
        image = beer_lambert_image(stains, conc, (64, 64))
        try:
            profile = estimate_stain_profile(image)
        except Exception:
            continue
        if stain_angle_errors_deg(profile.stain_vectors, stains) <= 1.0:
            recovered += 1
    assert recovered >= 95

    worst = 0
    base = he_stain_matrix()
    ordered = base if base[0, 2] >= base[1, 2] else base[::-1]
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        image, _, conc = textured_he_image(rng)
        ceilings = np.percentile(conc, 99, axis=0)
        if base[0, 2] < base[1, 2]:
            ceilings = ceilings[::-1]
        profile = StainProfile(ordered, ceilings)
        out = normalize_stains(image, profile, profile)
        worst = max(worst, int(np.abs(out.astype(int) - image.astype(int)).max()))
    elapsed = time.perf_counter() - start
    assert worst <= 1
    assert elapsed < 30.0
    report(5, "stain recovery and identity normalization",
           f"{recovered}/100 within 1 deg, identity max diff {worst}, {elapsed:.2f} s")


def test_criterion_06_tiling(tmp_path):
    gradient = (np.add.outer(np.arange(2000), np.arange(2000)) % 256).astype(np.uint8)
    image = np.stack([gradient, gradient.T, 255 - gradient], axis=2)
    source = tmp_path / "slide.png"
    Image.fromarray(image).save(source)
    out_dir = tmp_path / "tiles"
    manifest = tmp_path / "plan.json"

    start = time.perf_counter()
    code = run_command(["tile", "--input", str(source), "--size", "512",
                        "--overlap", "0.6", "--out-dir", str(out_dir),
                        "--manifest", str(manifest)])
    elapsed = time.perf_counter() - start
    assert code == 0

    data = json.loads(manifest.read_text())
    assert data["stride"] == 204
    assert len(data["origins"]) == 81
    assert len(list(out_dir.glob("*.png"))) == 81
    covered = np.zeros((2000, 2000), dtype=bool)
    for x, y in data["origins"]:
        covered[y:y + 512, x:x + 512] = True
    assert covered.all()
    assert elapsed < 2.0
    report(6, "tiling 2000x2000 -> 81 tiles, full coverage", f"{elapsed:.2f} s")


def test_criterion_07_mask_synthesis_bounds():
    rng = np.random.default_rng(707)
    label = CentroidLabel(40, 40)
    circle_radii = []
    for _ in range(10000):
        shape = synthesize_shape(label, rng)
        if shape.kind == "circle":
            assert 10 <= shape.r <= 16
            circle_radii.append(shape.r)
        else:
            assert 5 <= shape.a <= 13 and 5 <= shape.b <= 13
            assert shape.theta in (60, 90)
    assert circle_radii
    for r in circle_radii:
        count = int(rasterize_shape(MaskShape("circle", 40, 40, r=r), 80, 80).sum())
        assert math.pi * r * r - 4 * math.pi * r <= count <= math.pi * r * r + 4 * math.pi * r
    report(7, "mask synthesis bounds over 10000 draws",
           f"{len(circle_radii)} circles checked")


def test_criterion_08_geometry():
    anchors = generate_anchors(3, 3, 16)
    assert len(anchors) == 3 * 3 * 12
    for anchor in anchors:
        assert abs(anchor.box.area - anchor.scale ** 2) <= 0.01 * anchor.scale ** 2

    assert abs(iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 3, 3)) - 1 / 7) <= 1e-12

    rng = np.random.default_rng(808)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        x1 = rng.uniform(0, 80, n)
        y1 = rng.uniform(0, 80, n)
        boxes = np.stack([x1, y1, x1 + rng.uniform(1, 40, n),
                          y1 + rng.uniform(1, 40, n)], axis=1)
        scores = rng.uniform(0, 1, n)
        kept = nms(boxes, scores, 0.5)
        matrix = iou_matrix(boxes[kept], boxes[kept])
        np.fill_diagonal(matrix, 0.0)
        assert matrix.max(initial=0.0) <= 0.5

    feature = np.full((12, 12), 3.25)
    out = roi_align(feature, BoundingBox(0.7, 1.9, 10.3, 9.8), 4)
    assert np.abs(out - 3.25).max() <= 1e-9
    ramp = np.tile(np.arange(12, dtype=np.float64), (12, 1))
    box = BoundingBox(1.0, 1.0, 10.0, 10.0)
    out = roi_align(ramp, box, 3, samples_per_bin=2)
    centers = box.x1 + (np.arange(3) + 0.5) * (box.x2 - box.x1) / 3
    assert np.abs(out - np.tile(centers, (3, 1))).max() <= 1e-9
    report(8, "geometry (anchors, IoU, NMS, roi-align)")


def test_criterion_09_grading():
    assert mitotic_activity_score(5) == 1
    assert mitotic_activity_score(15) == 2
    assert mitotic_activity_score(30) == 3
    scores = [mitotic_activity_score(c) for c in range(51)]
    assert scores == sorted(scores)
    assert set(scores) == {1, 2, 3}
    report(9, "mitotic-activity grading bands and monotonicity")


def _write_reproducibility_inputs(root):
    rng = np.random.default_rng(1010)
    stains = random_stain_pair(rng)
    src = beer_lambert_image(stains, two_stain_concentrations(rng, 64 * 64),
                             (64, 64))
    ref = beer_lambert_image(stains, two_stain_concentrations(rng, 64 * 64),
                             (64, 64))
    Image.fromarray(src).save(root / "src.png")
    Image.fromarray(ref).save(root / "ref.png")
    tile_img = (np.add.outer(np.arange(300), np.arange(300)) % 256).astype(np.uint8)
    Image.fromarray(np.stack([tile_img] * 3, axis=2)).save(root / "tilesrc.png")
    (root / "gt.csv").write_text("40,40\n120,200\n250,60\n")
    (root / "pred.json").write_text(json.dumps({"slide_id": "S", "detections": [
        {"x": 42, "y": 41, "confidence": 0.9},
        {"x": 150, "y": 150, "confidence": 0.4}]}))
    (root / "gtboxes.json").write_text(json.dumps({"boxes": [[0, 0, 32, 32]]}))


def test_criterion_10_cli_reproducibility(tmp_path):
    _write_reproducibility_inputs(tmp_path)
    src, ref = str(tmp_path / "src.png"), str(tmp_path / "ref.png")

    def commands(run):
        run.mkdir()
        return {
            "normalize": (["normalize", "--input", src, "--reference", ref,
                           "--out", str(run / "norm.png"),
                           "--profiles-out", str(run / "profiles.json")],
                          ["norm.png", "profiles.json"]),
            "tile": (["tile", "--input", str(tmp_path / "tilesrc.png"),
                      "--size", "128", "--overlap", "0.6",
                      "--out-dir", str(run / "tiles"),
                      "--manifest", str(run / "plan.json")],
                     ["plan.json", "tiles"]),
            "masks": (["masks", "--centroids", str(tmp_path / "gt.csv"),
                       "--width", "300", "--height", "300", "--seed", "5",
                       "--out-mask", str(run / "mask.png"),
                       "--out-objects", str(run / "objects.json")],
                      ["mask.png", "objects.json"]),
            "score": (["score", "--pred", str(tmp_path / "pred.json"),
                       "--gt", str(tmp_path / "gt.csv"),
                       "--out", str(run / "metrics.json")],
                      ["metrics.json"]),
            "grade": (["grade", "--count", "17", "--out", str(run / "grade.json")],
                      ["grade.json"]),
            "losscheck": (["losscheck", "--trials", "15", "--seed", "2",
                           "--out", str(run / "losscheck.json")],
                          ["losscheck.json"]),
            "anchors": (["anchors", "--grid-width", "2", "--grid-height", "2",
                         "--stride", "16", "--gt", str(tmp_path / "gtboxes.json"),
                         "--out", str(run / "anchors.json")],
                        ["anchors.json"]),
        }

    def collect(run, outputs):
        blobs = {}
        for name in outputs:
            path = run / name
            if path.is_dir():
                for child in sorted(path.iterdir()):
                    blobs[f"{name}/{child.name}"] = child.read_bytes()
            else:
                blobs[name] = path.read_bytes()
        return blobs

    first, second = tmp_path / "run1", tmp_path / "run2"
    plans = (commands(first), commands(second))
    for name in plans[0]:
        for plan, run in zip(plans, (first, second)):
            argv, _ = plan[name]
            assert run_command(argv) == 0, name
        blobs1 = collect(first, plans[0][name][1])
        blobs2 = collect(second, plans[1][name][1])
        assert set(blobs1) == set(blobs2)
        for key in blobs1:
            assert blobs1[key] == blobs2[key], f"{name}: {key} differs"
    report(10, "CLI byte-reproducibility across reruns", "7 commands")
