"""Bit-exact file formats: binary depth maps and sample tensors, CSV
measurement/point/verdict lists, and JSON config mirrors.

Binary layouts are little-endian with explicit magic and version so the
files interchange across languages.  All loaders report malformed content
as a :class:`FormatError` carrying the byte offset of the problem;
dimension or bound mismatches against other inputs surface as plain
``ValueError`` alignment errors instead.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import BinaryMask, DepthMap, SparseMeasurements, make_patch_grid
from .samplers import RectPlane, SamplerConfig, SampleSet, SceneSpec, random_scene
from .solver import SolverOptions

DEPTH_MAGIC = b"PMDP"
SAMPLES_MAGIC = b"PMDS"
FORMAT_VERSION = 1

MEASUREMENT_HEADER = "row,col,depth"
POINT_HEADER = "row,col"
VERDICT_HEADER = "relation"


class FormatError(ValueError):
    """Malformed file content, locating the problem by byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedError(
                f"file ends inside {what}: need {n} more bytes at offset "
                f"{self.offset}, have {len(self.data) - self.offset}",
                offset=len(self.data),
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def expect_end(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.offset} trailing bytes after payload",
                offset=self.offset,
            )


def _check_magic(reader: _Reader, magic: bytes) -> None:
    got = reader.take(len(magic), "magic")
    if got != magic:
        raise BadMagicError(
            f"bad magic {got!r}, expected {magic!r}", offset=0
        )


def _check_version(reader: _Reader) -> None:
    at = reader.offset
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}",
            offset=at,
        )


def _check_finite(values: np.ndarray, payload_start: int, what: str) -> None:
    finite = np.isfinite(values.ravel())
    if not finite.all():
        idx = int(np.argmin(finite))
        raise FormatError(
            f"non-finite {what} value at flat index {idx}",
            offset=payload_start + 4 * idx,
        )


# ------------------------------------------------------------ depth maps


def depth_to_bytes(depth: DepthMap) -> bytes:
    h, w = depth.shape
    flag = 0 if depth.valid is None else 1
    parts = [
        DEPTH_MAGIC,
        struct.pack("<IIIB", FORMAT_VERSION, h, w, flag),
        np.ascontiguousarray(depth.values, dtype="<f4").tobytes(),
    ]
    if depth.valid is not None:
        parts.append(depth.valid.astype(np.uint8).tobytes())
    return b"".join(parts)


def depth_from_bytes(data: bytes) -> DepthMap:
    reader = _Reader(data)
    _check_magic(reader, DEPTH_MAGIC)
    _check_version(reader)
    at = reader.offset
    h = reader.u32("height")
    w = reader.u32("width")
    if h < 1 or w < 1:
        raise FormatError(f"degenerate image size {h} x {w}", offset=at)
    at = reader.offset
    flag = reader.u8("validity flag")
    if flag not in (0, 1):
        raise FormatError(f"validity flag must be 0 or 1, got {flag}", offset=at)
    payload_start = reader.offset
    values = np.frombuffer(
        reader.take(h * w * 4, "depth payload"), dtype="<f4"
    ).reshape(h, w)
    _check_finite(values, payload_start, "depth")
    valid = None
    if flag:
        mask_start = reader.offset
        mask = np.frombuffer(reader.take(h * w, "validity mask"), dtype=np.uint8)
        bad = (mask > 1).nonzero()[0]
        if bad.size:
            raise FormatError(
                f"validity mask byte must be 0 or 1, got {mask[bad[0]]}",
                offset=mask_start + int(bad[0]),
            )
        valid = mask.reshape(h, w).astype(bool)
    reader.expect_end()
    return DepthMap(values.astype(np.float32), valid=valid)


def save_depth(path, depth: DepthMap) -> None:
    Path(path).write_bytes(depth_to_bytes(depth))


def load_depth(path) -> DepthMap:
    return depth_from_bytes(Path(path).read_bytes())


def mask_from_depth(depth: DepthMap) -> BinaryMask:
    """Reinterpret a 0/1-valued depth file as a binary mask."""
    values = depth.values
    if not np.isin(values, (0.0, 1.0)).all():
        raise ValueError("mask file must contain only 0 and 1 values")
    return BinaryMask(values.astype(np.uint8))


def mask_to_depth(mask: BinaryMask) -> DepthMap:
    return DepthMap(mask.values.astype(np.float32))


# ---------------------------------------------------------- sample tensors


def samples_to_bytes(ss: SampleSet) -> bytes:
    grid = ss.grid
    header = struct.pack(
        "<IIIIII",
        FORMAT_VERSION,
        grid.height,
        grid.width,
        grid.patch,
        grid.stride,
        ss.n_samples,
    )
    payload = np.ascontiguousarray(ss.samples, dtype="<f4").tobytes()
    return SAMPLES_MAGIC + header + payload


def samples_from_bytes(data: bytes) -> SampleSet:
    reader = _Reader(data)
    _check_magic(reader, SAMPLES_MAGIC)
    _check_version(reader)
    geo_at = reader.offset
    h = reader.u32("height")
    w = reader.u32("width")
    k = reader.u32("patch size")
    stride = reader.u32("stride")
    s_at = reader.offset
    n_samples = reader.u32("sample count")
    try:
        grid = make_patch_grid(h, w, k, stride)
    except ValueError as exc:
        raise FormatError(f"invalid patch geometry: {exc}", offset=geo_at) from exc
    if n_samples < 1:
        raise FormatError(
            f"sample count must be >= 1, got {n_samples}", offset=s_at
        )
    count = grid.rows * grid.cols * n_samples * k * k
    payload_start = reader.offset
    values = np.frombuffer(reader.take(count * 4, "sample payload"), dtype="<f4")
    _check_finite(values, payload_start, "sample")
    nonpos = (values <= 0).nonzero()[0]
    if nonpos.size:
        raise FormatError(
            f"sample depth must be > 0, got {values[nonpos[0]]} "
            f"at flat index {int(nonpos[0])}",
            offset=payload_start + 4 * int(nonpos[0]),
        )
    reader.expect_end()
    tensor = values.reshape(grid.rows, grid.cols, n_samples, k, k)
    return SampleSet(tensor.astype(np.float32), grid)


def save_samples(path, ss: SampleSet) -> None:
    Path(path).write_bytes(samples_to_bytes(ss))


def load_samples(path) -> SampleSet:
    return samples_from_bytes(Path(path).read_bytes())


# ------------------------------------------------------------- CSV tables


def _parse_csv(text: str, header: str, n_fields: int, what: str):
    """Yield (byte_offset, line_number, fields) for each data line."""
    data = text.encode("utf-8")
    offset = 0
    lines = text.split("\n")
    if not lines or lines[0].strip("\r") != header:
        raise FormatError(
            f"{what} must start with header {header!r}", offset=0
        )
    offset += len(lines[0].encode("utf-8")) + 1
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip("\r")
        if stripped:
            fields = stripped.split(",")
            if len(fields) != n_fields:
                raise FormatError(
                    f"{what} line {lineno} has {len(fields)} fields, "
                    f"expected {n_fields}",
                    offset=offset,
                )
            out.append((offset, lineno, fields))
        offset += len(line.encode("utf-8")) + 1
    return out


def _parse_int(token: str, offset: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"bad integer {token!r} in {what}", offset=offset)


def _parse_float(token: str, offset: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"bad number {token!r} in {what}", offset=offset)


def measurements_to_csv(meas: SparseMeasurements) -> str:
    lines = [MEASUREMENT_HEADER]
    for r, c, d in zip(meas.rows, meas.cols, meas.depths):
        lines.append(f"{int(r)},{int(c)},{float(d)!r}")
    return "\n".join(lines) + "\n"


def measurements_from_csv(text: str, shape: tuple[int, int]) -> SparseMeasurements:
    rows, cols, depths = [], [], []
    for offset, _, fields in _parse_csv(
        text, MEASUREMENT_HEADER, 3, "measurement file"
    ):
        rows.append(_parse_int(fields[0], offset, "measurement row"))
        cols.append(_parse_int(fields[1], offset, "measurement col"))
        depths.append(_parse_float(fields[2], offset, "measurement depth"))
    return SparseMeasurements.from_arrays(rows, cols, depths, shape)


def save_measurements(path, meas: SparseMeasurements) -> None:
    Path(path).write_text(measurements_to_csv(meas), encoding="utf-8")


def load_measurements(path, shape: tuple[int, int]) -> SparseMeasurements:
    return measurements_from_csv(Path(path).read_text(encoding="utf-8"), shape)


def points_to_csv(points: Sequence[tuple[int, int]]) -> str:
    lines = [POINT_HEADER]
    lines.extend(f"{int(r)},{int(c)}" for r, c in points)
    return "\n".join(lines) + "\n"


def points_from_csv(text: str) -> list[tuple[int, int]]:
    out = []
    for offset, _, fields in _parse_csv(text, POINT_HEADER, 2, "point file"):
        out.append(
            (
                _parse_int(fields[0], offset, "point row"),
                _parse_int(fields[1], offset, "point col"),
            )
        )
    return out


def verdicts_to_csv(relations: Sequence[str]) -> str:
    lines = [VERDICT_HEADER]
    lines.extend(relations)
    return "\n".join(lines) + "\n"


def verdicts_from_csv(text: str) -> list[str]:
    allowed = ("A-closer", "B-closer", "equal")
    out = []
    for offset, _, fields in _parse_csv(text, VERDICT_HEADER, 1, "verdict file"):
        if fields[0] not in allowed:
            raise FormatError(
                f"unknown relation {fields[0]!r}, expected one of {allowed}",
                offset=offset,
            )
        out.append(fields[0])
    return out


# ------------------------------------------------------------ JSON mirrors


def _reject_unknown(blob: dict, allowed: set[str], what: str) -> None:
    unknown = sorted(set(blob) - allowed)
    if unknown:
        raise ValueError(f"unknown {what} keys: {', '.join(unknown)}")


def solver_options_from_json(blob: dict) -> SolverOptions:
    _reject_unknown(blob, {"max_iters", "gamma", "grad_steps"}, "solver option")
    return SolverOptions(**blob)


def sampler_config_from_json(
    blob: dict, seed: Optional[int] = None
) -> SamplerConfig:
    fields = {f.name for f in dataclasses.fields(SamplerConfig)}
    _reject_unknown(blob, fields | {"preset"}, "sampler config")
    blob = dict(blob)
    preset = blob.pop("preset", None)
    if preset is not None:
        if preset not in ("mild", "ambiguous"):
            raise ValueError(f"unknown sampler preset {preset!r}")
        base = getattr(SamplerConfig, preset)()
        cfg = dataclasses.replace(base, **blob)
    else:
        cfg = SamplerConfig(**blob)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def scene_spec_from_json(blob: dict, seed: Optional[int] = None) -> SceneSpec:
    """Build a scene either from an explicit rectangle layout or from a
    ``random`` recipe; ``seed`` overrides the seed stored in the file."""
    _reject_unknown(
        blob,
        {"height", "width", "depth_range", "seed", "rects", "random"},
        "scene spec",
    )
    if "random" in blob:
        recipe = dict(blob["random"])
        _reject_unknown(
            recipe,
            {"height", "width", "n_rects", "depth_range", "seed"},
            "random scene recipe",
        )
        if seed is None:
            seed = int(recipe.pop("seed", 0))
        else:
            recipe.pop("seed", None)
        kwargs = {}
        if "n_rects" in recipe:
            kwargs["n_rects"] = int(recipe.pop("n_rects"))
        if "depth_range" in recipe:
            kwargs["depth_range"] = tuple(recipe.pop("depth_range"))
        return random_scene(
            int(recipe.pop("height")), int(recipe.pop("width")), seed, **kwargs
        )
    rects = [RectPlane(**r) for r in blob.get("rects", [])]
    return SceneSpec(
        height=int(blob["height"]),
        width=int(blob["width"]),
        depth_range=tuple(blob.get("depth_range", (1.0, 4.0))),
        seed=int(blob.get("seed", 0)) if seed is None else seed,
        layout=rects,
    )


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
