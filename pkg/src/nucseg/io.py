"""File formats: label PNGs, raw float grids, stain profiles and reports.

Instance maps travel as 16-bit grayscale PNG, class maps as 8-bit grayscale
PNG.  Float maps (offset targets, probabilities) use a small self-describing
binary format: one JSON header line {height, width, channels, dtype:"f32le"}
followed by the raw little-endian float32 grids, row-major, one after the
other.  Reports are JSON plus CSV mirroring the usual leaderboard column
order (aggregate first, then pla, neu, epi, lym, eos, con).
"""

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError
from .instances import REPORT_ORDER
from .metrics import MetricsReport
from .stain import StainProfile
from .targets import HoVerMaps

MAX_PNG16_LABEL = 65535


def write_instance_png(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.size and labels.max() > MAX_PNG16_LABEL:
        raise ValueError(f"instance ids exceed 16-bit PNG range ({MAX_PNG16_LABEL})")
    Image.fromarray(labels.astype(np.uint16), mode="I;16").save(path)


def read_instance_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int32)


def write_class_png(path, classes) -> None:
    classes = np.asarray(classes)
    if classes.size and classes.max() > 255:
        raise ValueError("class ids exceed 8-bit PNG range")
    Image.fromarray(classes.astype(np.uint8), mode="L").save(path)


def read_class_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int32)


def write_rgb_png(path, img) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path)


def read_rgb_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_f32_grids(path, grids) -> None:
    """Write 2D float grids as a JSON header line plus raw f32le payload."""
    grids = [np.asarray(g, dtype=np.float32) for g in grids]
    if not grids or any(g.ndim != 2 or g.shape != grids[0].shape for g in grids):
        raise ShapeMismatchError("grids must be 2D arrays of one common shape")
    height, width = grids[0].shape
    header = {
        "height": int(height),
        "width": int(width),
        "channels": len(grids),
        "dtype": "f32le",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        for grid in grids:
            fh.write(np.ascontiguousarray(grid, dtype="<f4").tobytes())


def read_f32_grids(path) -> list:
    """Read back the grids written by write_f32_grids."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("dtype") != "f32le":
            raise ValueError(f"unsupported dtype in {path}: {header.get('dtype')}")
        height, width = header["height"], header["width"]
        channels = header.get("channels", 1)
        payload = fh.read()
    expected = height * width * channels * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f4")
    return [
        flat[i * height * width : (i + 1) * height * width].reshape(height, width).copy()
        for i in range(channels)
    ]


def write_hover_file(path, hover: HoVerMaps) -> None:
    write_f32_grids(path, [hover.h, hover.v])


def read_hover_file(path) -> HoVerMaps:
    grids = read_f32_grids(path)
    if len(grids) != 2:
        raise ValueError(f"{path}: hover file must hold exactly 2 grids")
    return HoVerMaps(h=grids[0], v=grids[1])


def write_validation_report(path, violations) -> None:
    """One JSON object per line: {row, col, kind}."""
    with open(path, "w", encoding="ascii") as fh:
        for v in violations:
            fh.write(json.dumps({"row": v["row"], "col": v["col"], "kind": v["kind"]}))
            fh.write("\n")


def save_stain_profile(path, profile: StainProfile) -> None:
    payload = {
        "stain_matrix": [[float(x) for x in row] for row in profile.stain_matrix],
        "concentration_p99": [float(x) for x in profile.concentration_p99],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="ascii")


def load_stain_profile(path) -> StainProfile:
    payload = json.loads(Path(path).read_text(encoding="ascii"))
    return StainProfile(
        stain_matrix=np.asarray(payload["stain_matrix"], dtype=np.float64),
        concentration_p99=np.asarray(payload["concentration_p99"], dtype=np.float64),
    )


def _jsonable(value: float):
    return float(value) if np.isfinite(value) else None


def report_to_dict(report: MetricsReport) -> dict:
    """Report as a JSON-ready dict; non-finite r2 values become null."""
    pq_agg, *pq_cols = report.pq_row()
    r2_agg, *r2_cols = report.r2_row()
    return {
        "schema_version": 1,
        "columns": list(REPORT_ORDER),
        "pq": {"mpq_plus": _jsonable(pq_agg), **dict(zip(REPORT_ORDER, map(_jsonable, pq_cols)))},
        "r2": {"overall": _jsonable(r2_agg), **dict(zip(REPORT_ORDER, map(_jsonable, r2_cols)))},
        "flags": {
            "empty_pq_classes": list(report.empty_pq_classes),
            "degenerate_r2_classes": list(report.degenerate_r2_classes),
        },
    }


def write_report_json(path, report: MetricsReport) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2) + "\n", encoding="ascii"
    )


def write_report_csv(path, report: MetricsReport) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "aggregate", *REPORT_ORDER])
        writer.writerow(["pq", *[repr(v) for v in report.pq_row()]])
        writer.writerow(["r2", *[repr(v) for v in report.r2_row()]])
