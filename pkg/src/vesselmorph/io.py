"""Point-cloud files, stage outputs and the frame/manifest layout."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .segmentation import Centerline, PointAttribute

FRAME_DIGITS = 9


class FormatError(ValueError):
    pass


def _number(text: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"{path}: line {line}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise FormatError(f"{path}: line {line}: non-finite value {text!r}")
    return value


def _read_csv_table(path: Path) -> tuple[list[str], list[list[str]], list[int]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows, lines = [], []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            rows.append(row)
            lines.append(reader.line_num)
    if header[:3] != ["x", "y", "z"]:
        raise FormatError(f"{path}: line 1: expected header starting with x,y,z, got {','.join(header)}")
    for row, line in zip(rows, lines):
        if len(row) != len(header):
            raise FormatError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
    return header, rows, lines


def _read_ply(path: Path) -> np.ndarray:
    with path.open(encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: line 1: missing 'ply' magic")
    elements: list[tuple[str, int, list[str]]] = []
    body = None
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise FormatError(f"{path}: unsupported PLY format {' '.join(tok[1:2])!r}; only ascii is read")
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError(f"{path}: line {i}: property before any element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            body = i
            break
    if body is None:
        raise FormatError(f"{path}: missing end_header")
    pos = body
    for name, count, props in elements:
        if name != "vertex":
            pos += count
            continue
        try:
            cols = [props.index(c) for c in "xyz"]
        except ValueError:
            raise FormatError(f"{path}: vertex element lacks x/y/z properties") from None
        out = np.empty((count, 3))
        for k in range(count):
            line = pos + k + 1
            if line > len(lines):
                raise FormatError(f"{path}: line {line}: file ends before vertex {k}")
            tok = lines[line - 1].split()
            if len(tok) < len(props):
                raise FormatError(f"{path}: line {line}: expected {len(props)} values, got {len(tok)}")
            out[k] = [_number(tok[c], path, line) for c in cols]
        return out
    raise FormatError(f"{path}: no vertex element")


def read_cloud(path) -> np.ndarray:
    """Read an ``(n, 3)`` cloud from CSV (header ``x,y,z``) or ASCII PLY."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        pts = _read_ply(path)
    elif suffix in (".csv", ".txt"):
        _, rows, lines = _read_csv_table(path)
        pts = np.array([[_number(c, path, line) for c in row[:3]] for row, line in zip(rows, lines)],
                       dtype=np.float64).reshape(-1, 3)
    else:
        raise FormatError(f"{path}: unsupported format {suffix or '(none)'}; expected .csv or .ply")
    if len(pts) == 0:
        raise FormatError(f"{path}: empty cloud")
    return pts


def read_centerline(path) -> Centerline:
    """Centerline CSV; ``attribute`` and ``segment_id`` columns are optional."""
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return Centerline(_read_ply(path))
    header, rows, lines = _read_csv_table(path)
    pts = np.array([[_number(c, path, line) for c in row[:3]] for row, line in zip(rows, lines)],
                   dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise FormatError(f"{path}: empty cloud")
    attrs = ids = None
    if "attribute" in header:
        col = header.index("attribute")
        try:
            attrs = [PointAttribute(row[col].strip()) for row in rows]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if "segment_id" in header:
        col = header.index("segment_id")
        ids = np.array([int(_number(row[col], path, line)) for row, line in zip(rows, lines)])
    return Centerline(pts, attrs, ids)


def _fmt(value: float, digits: int) -> str:
    return format(float(value), f".{digits}g")


def write_table(path, header: list[str], columns: list, digits: int = FRAME_DIGITS) -> Path:
    """Write numeric/str columns as CSV with a fixed float format (``\\n`` line ends)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(columns[0]) if columns else 0
    out = [",".join(header)]
    for i in range(n):
        cells = []
        for col in columns:
            v = col[i]
            cells.append(_fmt(v, digits) if isinstance(v, (float, np.floating)) else str(v))
        out.append(",".join(cells))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def write_cloud(path, cloud, digits: int = FRAME_DIGITS) -> Path:
    pts = np.asarray(cloud, dtype=np.float64)
    return write_table(path, ["x", "y", "z"], [pts[:, 0], pts[:, 1], pts[:, 2]], digits)


# stage files between CLI subcommands must round-trip bit for bit
LOSSLESS_DIGITS = 17


def write_centerline(path, centerline: Centerline) -> Path:
    pts = centerline.points
    header, cols = ["x", "y", "z"], [pts[:, 0], pts[:, 1], pts[:, 2]]
    if centerline.attributes is not None:
        header.append("attribute")
        cols.append([a.value for a in centerline.attributes])
    if centerline.segment_ids is not None:
        header.append("segment_id")
        cols.append([int(k) for k in centerline.segment_ids])
    return write_table(path, header, cols, LOSSLESS_DIGITS)


def write_station_field(path, stations: np.ndarray, vectors: np.ndarray, segment_ids) -> Path:
    cols = [stations[:, 0], stations[:, 1], stations[:, 2],
            vectors[:, 0], vectors[:, 1], vectors[:, 2], [int(k) for k in segment_ids]]
    return write_table(path, ["x", "y", "z", "dx", "dy", "dz", "segment_id"], cols, LOSSLESS_DIGITS)


def read_station_field(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path = Path(path)
    header, rows, lines = _read_csv_table(path)
    need = ["dx", "dy", "dz", "segment_id"]
    if any(h not in header for h in need):
        raise FormatError(f"{path}: line 1: field file needs columns x,y,z,dx,dy,dz,segment_id")
    idx = [header.index(h) for h in ["x", "y", "z", "dx", "dy", "dz", "segment_id"]]
    data = np.array([[_number(row[i], path, line) for i in idx] for row, line in zip(rows, lines)])
    if len(data) == 0:
        raise FormatError(f"{path}: empty field")
    return data[:, :3], data[:, 3:6], data[:, 6].astype(np.int64)


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def frame_filename(phase: float) -> str:
    return f"frame_{int(round(phase * 1000)):04d}.csv"


@dataclass
class FrameFileSet:
    directory: Path
    frames: list[Path] = field(default_factory=list)
    manifest: Path | None = None


def write_sequence(sequence, directory, manifest: dict | None = None) -> FrameFileSet:
    """One CSV per frame plus ``manifest.json``; bytes depend only on the inputs."""
    directory = Path(directory)
    names = [frame_filename(f.phase) for f in sequence.frames]
    if len(set(names)) != len(names):
        raise ValueError("two phases map to the same frame file name")
    written = FrameFileSet(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for frame, name in zip(sequence.frames, names):
            written.frames.append(write_cloud(directory / name, frame.cloud))
        payload = dict(manifest or {})
        payload["frames"] = [{"phase": f.phase, "file": n} for f, n in zip(sequence.frames, names)]
        written.manifest = write_json(directory / "manifest.json", payload)
    except OSError as exc:
        remove_outputs(written)
        raise OSError(f"writing frames to {directory}: {exc.strerror or exc}") from exc
    return written


def remove_outputs(files: FrameFileSet) -> None:
    for p in files.frames + ([files.manifest] if files.manifest else []):
        Path(p).unlink(missing_ok=True)
