"""Deterministic building blocks of a mitosis-detection pipeline.

Everything around the trained detector: Macenko stain normalization,
sliding-window tiling, weak-label mask synthesis, anchor/RPN geometry,
the multi-objective loss with gradient verification, and the
centroid-matching scoring protocol. The detector itself is out of
scope; detections enter through a JSON file interface.
"""

from .annotation import (CentroidLabel, GroundTruthObject, MaskShape,
                         build_ground_truth, parse_centroids, rasterize_shape,
                         shape_bbox, synthesize_shape)
from .errors import (DegenerateBox, InvalidTiling, MalformedAnnotation,
                     ManifestError, MitodetError, NonFiniteLoss,
                     StainEstimationDegenerate)
from .evaluation import (Detection, MatchResult, Metrics, SlideEvaluation,
                         compute_prf, evaluate_slide, match_detections,
                         mitotic_activity_score)
from .geometry import (Anchor, BoundingBox, RpnTarget, anchor_box,
                       assign_rpn_targets, decode_box_deltas,
                       encode_box_deltas, generate_anchors, iou, iou_matrix,
                       nms, roi_align)
from .imaging import (StainProfile, estimate_stain_profile, mean_normalize,
                      normalize_stains, od_to_rgb, rgb_to_od,
                      stain_concentrations)
from .losses import (ClsRegBatch, LossBreakdown, cls_log_loss, cls_reg_loss,
                     grad_check, mask_bce_loss, run_loss_verification,
                     smooth_l1, total_loss)
from .pipeline import (DatasetManifest, ManifestEntry, RunConfig,
                       load_manifest, run_command)
from .tiling import (TilePlan, TileRef, extract_tile, map_local_to_slide,
                     map_slide_to_local, merge_tile_detections, plan_tiles,
                     tile_refs)

__version__ = "0.1.0"
