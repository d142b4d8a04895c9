"""File formats: scene JSON, CULane-style lane lines, 16-bit PGM maps.

All writers are atomic (temp file + rename) and deterministic: fixed
key order, fixed float formatting, stable scene ordering by id.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .geometry import CanvasDims, Lane, OriginRecord
from .targets import GridSpec, Heatmap, OffsetMaps, TargetConfig, TargetSet

__all__ = [
    "atomic_write_bytes",
    "atomic_write_text",
    "scene_to_json",
    "scene_from_json",
    "write_scene_file",
    "read_scene_file",
    "parse_culane_lines",
    "write_culane_lines",
    "write_culane_file",
    "read_culane_file",
    "write_heatmap_pgm",
    "read_heatmap_pgm",
    "save_targets",
    "load_targets",
]

SCENE_VERSION = "1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------- scenes

def scene_to_json(lanes, canvas: CanvasDims) -> str:
    doc = {
        "version": SCENE_VERSION,
        "canvas": {"w": canvas.w, "h": canvas.h},
        "lanes": [[[float(x), float(y)] for x, y in lane.points] for lane in lanes],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def scene_from_json(text: str) -> tuple[list[Lane], CanvasDims]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid scene JSON: {exc}") from exc
    try:
        if doc["version"] != SCENE_VERSION:
            raise ParseError(f"unsupported scene version {doc['version']!r}")
        canvas = CanvasDims(int(doc["canvas"]["w"]), int(doc["canvas"]["h"]))
        lanes = [Lane([(float(x), float(y)) for x, y in pts]) for pts in doc["lanes"]]
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise ParseError(f"malformed scene document: {exc}") from exc
    return lanes, canvas


def write_scene_file(path, lanes, canvas: CanvasDims) -> None:
    atomic_write_text(path, scene_to_json(lanes, canvas))


def read_scene_file(path) -> tuple[list[Lane], CanvasDims]:
    return scene_from_json(Path(path).read_text(encoding="utf-8"))


# ----------------------------------------------------------- lane lines

def parse_culane_lines(text: str) -> list[Lane]:
    """Parse one-lane-per-line x y coordinate text.

    Whitespace-only lines are skipped; odd token counts, non-numeric
    tokens and single-point lanes raise ParseError with the 1-based
    line number.
    """
    lanes: list[Lane] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) % 2 != 0:
            raise ParseError(f"odd coordinate count ({len(tokens)} tokens)", line=lineno)
        try:
            vals = [float(tok) for tok in tokens]
        except ValueError:
            bad = next(tok for tok in tokens if not _is_number(tok))
            raise ParseError(f"non-numeric token {bad!r}", line=lineno) from None
        if any(not math.isfinite(v) for v in vals):
            raise ParseError("coordinates must be finite", line=lineno)
        points = list(zip(vals[0::2], vals[1::2]))
        if len(points) < 2:
            raise ParseError("a lane needs at least 2 points", line=lineno)
        try:
            lanes.append(Lane(points))
        except DomainError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return lanes


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def write_culane_lines(lanes) -> str:
    rows = []
    for lane in lanes:
        rows.append(" ".join(f"{v:.4f}" for xy in lane.points for v in xy) + "\n")
    return "".join(rows)


def write_culane_file(path, lanes) -> None:
    atomic_write_text(path, write_culane_lines(lanes))


def read_culane_file(path) -> list[Lane]:
    return parse_culane_lines(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------------ PGM

def write_heatmap_pgm(path, values: np.ndarray, vmax: float | None = None) -> None:
    """Store a non-negative map as 16-bit big-endian P5 PGM.

    Pixels are round(65535 * v / vmax); vmax rides along in a header
    comment so the scale survives the trip.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise DomainError("heatmap to serialize must be a finite non-negative 2D array")
    if vmax is None:
        vmax = float(values.max())
    if vmax < 0.0:
        raise DomainError("vmax must be non-negative")
    h, w = values.shape
    if vmax > 0.0:
        pix = np.round(values * (65535.0 / vmax)).astype(">u2")
    else:
        pix = np.zeros((h, w), dtype=">u2")
    header = f"P5\n# vmax={vmax!r}\n{w} {h}\n65535\n"
    atomic_write_bytes(path, header.encode("ascii") + pix.tobytes())


def read_heatmap_pgm(path) -> np.ndarray:
    """Load a PGM written by write_heatmap_pgm back to float values."""
    data = Path(path).read_bytes()
    pos = 0
    fields: list[bytes] = []
    vmax = None
    while len(fields) < 4:
        if pos >= len(data):
            raise ParseError("truncated PGM header")
        if data[pos:pos + 1].isspace():
            pos += 1
            continue
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise ParseError("unterminated PGM comment")
            comment = data[pos + 1:end].strip()
            if comment.startswith(b"vmax="):
                try:
                    vmax = float(comment[5:])
                except ValueError:
                    raise ParseError("bad vmax comment in PGM header") from None
            pos = end + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval, then raw pixels
    if fields[0] != b"P5":
        raise ParseError(f"not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError:
        raise ParseError("non-numeric PGM dimensions") from None
    if maxval != 65535:
        raise ParseError(f"expected 16-bit PGM, got maxval {maxval}")
    if vmax is None:
        raise ParseError("PGM lacks the vmax scale comment")
    raw = data[pos:pos + 2 * w * h]
    if len(raw) != 2 * w * h:
        raise ParseError("truncated PGM pixel data")
    pix = np.frombuffer(raw, dtype=">u2").reshape(h, w)
    if vmax == 0.0:
        return np.zeros((h, w))
    return pix.astype(float) * (vmax / 65535.0)


# ---------------------------------------------------------- target dirs

def _origin_to_doc(rec: OriginRecord) -> dict:
    return {
        "origin": [float(rec.origin[0]), float(rec.origin[1])],
        "t": float(rec.t),
        "lane_dir": [float(rec.lane_dir[0]), float(rec.lane_dir[1])],
        "guide_tangent": [float(rec.guide_tangent[0]), float(rec.guide_tangent[1])],
        "alpha": float(rec.alpha),
    }


def _origin_from_doc(doc: dict) -> OriginRecord:
    return OriginRecord(
        origin=np.array(doc["origin"], dtype=float),
        t=float(doc["t"]),
        lane_dir=np.array(doc["lane_dir"], dtype=float),
        guide_tangent=np.array(doc["guide_tangent"], dtype=float),
        alpha=float(doc["alpha"]),
    )


def save_targets(out_dir, targets: list[TargetSet], meta: dict) -> None:
    """Write encoded scenes as PGMs plus an index.json.

    The index stores offsets and origin records exactly (JSON floats);
    heatmaps go through 16-bit quantization.  `meta` rides along
    verbatim under the "meta" key.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not targets:
        raise DomainError("nothing to save: empty target list")
    grid = targets[0].keypoints.grid
    cfg = targets[0].cfg
    entries = []
    for i, t in enumerate(targets):
        if t.keypoints.grid != grid or t.cfg != cfg:
            raise DomainError("all saved targets must share one grid and config")
        sid = f"scene{i:05d}"
        kp_name = f"{sid}.keypoints.pgm"
        write_heatmap_pgm(out / kp_name, t.keypoints.values)
        instances = []
        for j, (rec, mask) in enumerate(t.instances):
            mask_name = f"{sid}.mask{j:02d}.pgm"
            write_heatmap_pgm(out / mask_name, mask.values)
            doc = _origin_to_doc(rec)
            doc["mask"] = mask_name
            instances.append(doc)
        off = t.offsets
        cells = [
            {"cell": [int(r), int(c)], "dx": float(off.dx[r, c]), "dy": float(off.dy[r, c])}
            for r, c in zip(*np.nonzero(off.valid_mask))
        ]
        entries.append({"id": sid, "keypoints": kp_name,
                        "offsets": cells, "instances": instances})
    index = {
        "version": SCENE_VERSION,
        "canvas": {"w": grid.canvas.w, "h": grid.canvas.h},
        "stride": grid.stride,
        "target_config": {"sigma": cfg.sigma, "d": cfg.d,
                          "kernel_radius_sigmas": cfg.kernel_radius_sigmas},
        "meta": meta,
        "scenes": entries,
    }
    atomic_write_text(out / "index.json", json.dumps(index, indent=1) + "\n")


def load_targets(in_dir) -> tuple[list[TargetSet], dict]:
    """Rebuild the target sets written by save_targets."""
    root = Path(in_dir)
    try:
        index = json.loads((root / "index.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"no index.json under {root}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid index.json: {exc}") from exc
    try:
        canvas = CanvasDims(int(index["canvas"]["w"]), int(index["canvas"]["h"]))
        grid = GridSpec(canvas, int(index["stride"]))
        tc = index["target_config"]
        cfg = TargetConfig(sigma=float(tc["sigma"]), d=float(tc["d"]),
                           kernel_radius_sigmas=float(tc["kernel_radius_sigmas"]))
        out = []
        for entry in index["scenes"]:
            kp = Heatmap(grid, read_heatmap_pgm(root / entry["keypoints"]))
            dx = np.zeros((grid.gh, grid.gw))
            dy = np.zeros((grid.gh, grid.gw))
            valid = np.zeros((grid.gh, grid.gw), dtype=bool)
            for cell in entry["offsets"]:
                r, c = int(cell["cell"][0]), int(cell["cell"][1])
                dx[r, c] = float(cell["dx"])
                dy[r, c] = float(cell["dy"])
                valid[r, c] = True
            instances = tuple(
                (_origin_from_doc(doc), Heatmap(grid, read_heatmap_pgm(root / doc["mask"])))
                for doc in entry["instances"]
            )
            out.append(TargetSet(kp, OffsetMaps(grid, dx, dy, valid), instances, cfg))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed target index: {exc}") from exc
    return out, index.get("meta", {})
