"""Lane geometry, target encoding, decoding, and evaluation toolkit."""
from .decoder import (
    DecodedLane,
    DecoderConfig,
    Orientation,
    choose_orientation,
    decode_instance,
    decode_scene,
    extract_peaks,
)
from .errors import DomainError, EmptyMask, LaneGuideError, ParseError, TooFewAnchors
from .evaluation import (
    EvalConfig,
    MatchReport,
    angle_bucketed_recall,
    evaluate,
    evaluate_corpus,
    hungarian_match,
    lane_iou,
    rasterize_lane,
)
from .formats import (
    load_targets,
    parse_culane_lines,
    read_culane_file,
    read_heatmap_pgm,
    read_scene_file,
    save_targets,
    scene_from_json,
    scene_to_json,
    write_culane_file,
    write_culane_lines,
    write_heatmap_pgm,
    write_scene_file,
)
from .geometry import (
    CanvasDims,
    GuideKind,
    GuideLine,
    Lane,
    OriginRecord,
    grazing_angle_histogram,
    guide_point_and_tangent,
    lane_origin,
    make_guide_line,
    polyline_point_distance,
    response_range,
    segment_point_distance,
)
from .synth import (
    RNG_ALGORITHM,
    NoiseConfig,
    SceneConfig,
    corrupt_targets,
    gen_scene,
)
from .targets import (
    GridSpec,
    Heatmap,
    OffsetMaps,
    TargetConfig,
    TargetSet,
    encode_instance_mask,
    encode_keypoints,
    encode_scene,
    stamp_gaussian,
)

__version__ = "0.1.0"

__all__ = [
    "CanvasDims",
    "DecodedLane",
    "DecoderConfig",
    "DomainError",
    "EmptyMask",
    "EvalConfig",
    "GridSpec",
    "GuideKind",
    "GuideLine",
    "Heatmap",
    "Lane",
    "LaneGuideError",
    "MatchReport",
    "NoiseConfig",
    "OffsetMaps",
    "OriginRecord",
    "Orientation",
    "ParseError",
    "RNG_ALGORITHM",
    "SceneConfig",
    "TargetConfig",
    "TargetSet",
    "TooFewAnchors",
    "angle_bucketed_recall",
    "choose_orientation",
    "corrupt_targets",
    "decode_instance",
    "decode_scene",
    "encode_instance_mask",
    "encode_keypoints",
    "encode_scene",
    "evaluate",
    "evaluate_corpus",
    "extract_peaks",
    "gen_scene",
    "grazing_angle_histogram",
    "guide_point_and_tangent",
    "hungarian_match",
    "lane_iou",
    "lane_origin",
    "load_targets",
    "make_guide_line",
    "parse_culane_lines",
    "polyline_point_distance",
    "rasterize_lane",
    "read_culane_file",
    "read_heatmap_pgm",
    "read_scene_file",
    "response_range",
    "save_targets",
    "scene_from_json",
    "scene_to_json",
    "segment_point_distance",
    "stamp_gaussian",
    "write_culane_file",
    "write_culane_lines",
    "write_heatmap_pgm",
    "write_scene_file",
]
