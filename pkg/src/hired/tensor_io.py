"""Attention-dump and selection-manifest I/O.

A dump directory holds one ``manifest.json`` plus one NPY file per image
partition, each shaped ``(layers_captured, heads, tokens)`` in float32.  The
NPY codec is implemented by hand against the published byte layout (magic
``\\x93NUMPY``, versions 1.0/2.0, little-endian f32/f64, C order only) so
that malformed files surface as typed errors instead of whatever a generic
loader happens to throw.

Attention values must be finite and nonnegative (they are post-softmax
rows); rows need not sum to 1, since exporters may drop the CLS self-
attention column.
"""

from __future__ import annotations

import ast
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    HiredError,
    MalformedHeader,
    ManifestInvalid,
    ManifestMissing,
    NegativeValue,
    NonFiniteValue,
    ShapeMismatch,
    UnsupportedDtype,
)

_MAGIC = b"\x93NUMPY"

# A partition tensor: np.ndarray, float32, C-contiguous, shape (L, H, N).
Tensor3 = np.ndarray


@dataclass(frozen=True)
class Partition:
    """One image partition's attention tensor plus identity."""

    partition_id: int
    role: str  # "full" for id 0, "sub" for ids 1..k
    tensor: Tensor3


@dataclass(frozen=True)
class AttentionDump:
    """All partitions of one image, with the capture metadata.

    ``layers_captured`` maps tensor slot -> model layer index, strictly
    increasing.  ``grid`` is the sub-image grid (g_w, g_h), or None when the
    image was not partitioned (k = 0).
    """

    partitions: list[Partition]
    layers_captured: list[int]
    num_heads: int
    tokens_per_partition: int
    patch_grid: tuple[int, int]
    grid: tuple[int, int] | None = None
    image_size: tuple[int, int] = (336, 336)

    @property
    def k(self) -> int:
        """Number of sub-images (partitions beyond the full image)."""
        return len(self.partitions) - 1

    def partition(self, partition_id: int) -> Partition:
        from .errors import UnknownPartition

        for p in self.partitions:
            if p.partition_id == partition_id:
                return p
        raise UnknownPartition(f"no partition with id {partition_id}")

    def layer_pos(self, layer: int) -> int:
        """Tensor slot holding model layer ``layer``."""
        from .errors import MissingLayer

        try:
            return self.layers_captured.index(layer)
        except ValueError:
            raise MissingLayer(layer, self.layers_captured) from None


def _check_values(arr: np.ndarray, subject: str | None) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteValue("attention values must be finite", subject)
    if (arr < 0).any():
        raise NegativeValue("attention values must be nonnegative", subject)


def read_npy(path: str | Path) -> Tensor3:
    """Read a 3-D little-endian f32/f64 NPY file; f64 narrows to f32.

    Raises MalformedHeader, UnsupportedDtype, ShapeMismatch,
    NonFiniteValue, or NegativeValue; genuine I/O failures propagate
    as OSError.
    """
    path = Path(path)
    subject = str(path)
    raw = path.read_bytes()

    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise MalformedHeader("not an NPY file (bad magic)", subject)
    major, minor = raw[6], raw[7]
    if (major, minor) == (1, 0):
        (header_len,) = struct.unpack_from("<H", raw, 8)
        header_start = 10
    elif (major, minor) == (2, 0):
        if len(raw) < 12:
            raise MalformedHeader("truncated version-2 header", subject)
        (header_len,) = struct.unpack_from("<I", raw, 8)
        header_start = 12
    else:
        raise MalformedHeader(f"unsupported NPY version {major}.{minor}", subject)

    data_start = header_start + header_len
    if len(raw) < data_start:
        raise MalformedHeader("header extends past end of file", subject)
    try:
        header = ast.literal_eval(raw[header_start:data_start].decode("latin-1"))
    except (ValueError, SyntaxError):
        raise MalformedHeader("header is not a Python dict literal", subject) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise MalformedHeader(
            "header must have exactly the keys descr, fortran_order, shape", subject
        )

    descr = header["descr"]
    if not isinstance(descr, str):
        raise MalformedHeader("descr must be a string", subject)
    if descr not in ("<f4", "<f8"):
        raise UnsupportedDtype(
            f"dtype {descr!r} not supported (need '<f4' or '<f8')", subject
        )
    fortran = header["fortran_order"]
    if not isinstance(fortran, bool):
        raise MalformedHeader("fortran_order must be a boolean", subject)
    if fortran:
        raise UnsupportedDtype("Fortran-order arrays are not supported", subject)

    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(
        type(s) is int and s >= 0 for s in shape
    ):
        raise MalformedHeader("shape must be a tuple of nonnegative ints", subject)
    if len(shape) != 3:
        raise ShapeMismatch(
            f"expected a 3-D (layers, heads, tokens) array, got {len(shape)}-D", subject
        )

    itemsize = 4 if descr == "<f4" else 8
    expected = math.prod(shape) * itemsize
    payload = raw[data_start:]
    if len(payload) != expected:
        raise MalformedHeader(
            f"payload is {len(payload)} bytes, header implies {expected}", subject
        )

    arr = np.frombuffer(payload, dtype=np.dtype(descr)).reshape(shape)
    _check_values(arr, subject)
    with np.errstate(over="ignore"):  # overflow is caught as NonFiniteValue below
        out = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.isfinite(out).all():  # f64 value overflowed the f32 range
        raise NonFiniteValue("value not representable in float32", subject)
    return out


def write_npy(tensor: Tensor3, path: str | Path) -> None:
    """Write a float32 C-order version-1.0 NPY file (read_npy's inverse)."""
    arr = np.ascontiguousarray(np.asarray(tensor), dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected a 3-D array, got {arr.ndim}-D", str(path))
    shape = tuple(int(s) for s in arr.shape)
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': %r, }" % (shape,)
    # pad with spaces so magic+version+length+header is a multiple of 64
    unpadded = len(_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes((1, 0)))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin-1"))
        fh.write(arr.tobytes("C"))


def _require(cond: bool, field_path: str, reason: str) -> None:
    if not cond:
        raise ManifestInvalid(f"{field_path}: {reason}", field_path)


def _int_pair(value, field_path: str) -> tuple[int, int]:
    _require(
        isinstance(value, list) and len(value) == 2
        and all(type(v) is int for v in value),
        field_path, "must be a pair of integers",
    )
    _require(value[0] >= 1 and value[1] >= 1, field_path, "entries must be >= 1")
    return (value[0], value[1])


def load_attention_dump(directory: str | Path) -> AttentionDump:
    """Load and cross-validate a dump directory written by this module.

    Unknown manifest keys are ignored for forward compatibility; every
    schema violation raises ManifestInvalid naming the offending field.
    """
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestMissing(f"{manifest_path} does not exist", str(manifest_path))
    try:
        doc = json.loads(manifest_path.read_text("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestInvalid(f"manifest.json: {exc}", str(manifest_path)) from None
    _require(isinstance(doc, dict), "manifest", "top level must be an object")
    for key in ("version", "image_width", "image_height", "patch_grid",
                "num_heads", "layers_captured", "partitions"):
        _require(key in doc, key, "missing required key")

    _require(type(doc["version"]) is int and doc["version"] >= 1,
             "version", "must be a positive integer")
    for key in ("image_width", "image_height", "num_heads"):
        _require(type(doc[key]) is int and doc[key] >= 1,
                 key, "must be a positive integer")
    patch_grid = _int_pair(doc["patch_grid"], "patch_grid")
    n_vit = patch_grid[0] * patch_grid[1]

    layers = doc["layers_captured"]
    _require(isinstance(layers, list) and layers
             and all(type(v) is int and v >= 0 for v in layers),
             "layers_captured", "must be a nonempty list of layer indices")
    _require(all(a < b for a, b in zip(layers, layers[1:])),
             "layers_captured", "must be strictly increasing")

    entries = doc["partitions"]
    _require(isinstance(entries, list) and entries,
             "partitions", "must be a nonempty list")
    k = len(entries) - 1

    grid: tuple[int, int] | None = None
    if doc.get("grid") is not None:
        grid = _int_pair(doc["grid"], "grid")
        _require(grid[0] * grid[1] == k, "grid",
                 f"covers {grid[0] * grid[1]} sub-images but manifest lists {k}")
    else:
        _require(k == 0, "grid", "required when sub-image partitions exist")

    partitions: list[Partition] = []
    seen: set[int] = set()
    for pos, entry in enumerate(entries):
        where = f"partitions[{pos}]"
        _require(isinstance(entry, dict), where, "must be an object")
        for key in ("id", "role", "file"):
            _require(key in entry, f"{where}.{key}", "missing required key")
        pid = entry["id"]
        _require(type(pid) is int and 0 <= pid <= k, f"{where}.id",
                 f"must be an integer in 0..{k}")
        _require(pid not in seen, f"{where}.id", "duplicate partition id")
        seen.add(pid)
        expected_role = "full" if pid == 0 else "sub"
        _require(entry["role"] == expected_role, f"{where}.role",
                 f"partition {pid} must have role {expected_role!r}")
        _require(isinstance(entry["file"], str) and entry["file"],
                 f"{where}.file", "must be a relative path")
        npy_path = directory / entry["file"]
        _require(npy_path.is_file(), f"{where}.file",
                 f"referenced file {entry['file']!r} does not exist")
        try:
            tensor = read_npy(npy_path)
        except HiredError as exc:
            exc.subject = f"partition {pid}: {npy_path}"
            raise
        expected_shape = (len(layers), doc["num_heads"], n_vit)
        _require(tensor.shape == expected_shape, f"{where}.file",
                 f"partition {pid} has shape {tensor.shape}, "
                 f"manifest implies {expected_shape}")
        partitions.append(Partition(pid, entry["role"], tensor))

    partitions.sort(key=lambda p: p.partition_id)
    return AttentionDump(
        partitions=partitions,
        layers_captured=list(layers),
        num_heads=doc["num_heads"],
        tokens_per_partition=n_vit,
        patch_grid=patch_grid,
        grid=grid,
        image_size=(doc["image_width"], doc["image_height"]),
    )


def write_attention_dump(dump: AttentionDump, directory: str | Path) -> None:
    """Write ``manifest.json`` + one NPY per partition (load's inverse)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in dump.partitions:
        filename = f"partition_{p.partition_id}.npy"
        write_npy(p.tensor, directory / filename)
        entries.append({"id": p.partition_id, "role": p.role, "file": filename})
    manifest = {
        "version": 1,
        "image_width": dump.image_size[0],
        "image_height": dump.image_size[1],
        "grid": list(dump.grid) if dump.grid is not None else None,
        "patch_grid": list(dump.patch_grid),
        "num_heads": dump.num_heads,
        "layers_captured": list(dump.layers_captured),
        "partitions": entries,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", "utf-8"
    )


def most_square_grid(n: int) -> tuple[int, int]:
    """Factor n into (w, h) with w >= h and w·h = n, as square as possible."""
    h = int(math.isqrt(n))
    while n % h:
        h -= 1
    return (n // h, h)


def generate_synthetic_dump(
    seed: int,
    k: int = 4,
    num_heads: int = 16,
    tokens_per_partition: int = 576,
    layers_captured: list[int] | None = None,
    grid: tuple[int, int] | None = None,
    image_size: tuple[int, int] | None = None,
    base_resolution: int = 336,
) -> AttentionDump:
    """Deterministic random dump: every (layer, head) row is a valid
    post-softmax attention row (nonnegative, sums to 1 within 1e-5).

    Unless given explicitly, the sub-image grid is the most-square
    factorization of k (the patch grid likewise for tokens_per_partition)
    and the image size is the grid times base_resolution.  The random
    stream depends only on the seed and tensor shape, never the geometry.
    """
    if k < 0 or num_heads < 1 or tokens_per_partition < 1:
        raise ValueError("need k >= 0, num_heads >= 1, tokens_per_partition >= 1")
    if grid is not None and grid[0] * grid[1] != k:
        raise ValueError(f"grid {grid} covers {grid[0] * grid[1]} sub-images, not {k}")
    layers = list(layers_captured) if layers_captured is not None else [0, 11, 22]
    rng = np.random.default_rng(seed)
    shape = (len(layers), num_heads, tokens_per_partition)
    partitions = []
    for pid in range(k + 1):
        raw = rng.random(shape, dtype=np.float32)
        sums = raw.sum(axis=2, dtype=np.float64)
        sums[sums == 0.0] = 1.0  # an all-zero row stays all-zero rather than NaN
        tensor = (raw.astype(np.float64) / sums[:, :, None]).astype(np.float32)
        partitions.append(Partition(pid, "full" if pid == 0 else "sub", tensor))
    if grid is None and k > 0:
        grid = most_square_grid(k)
    if image_size is None:
        image_size = (
            (grid[0] * base_resolution, grid[1] * base_resolution)
            if grid is not None
            else (base_resolution, base_resolution)
        )
    return AttentionDump(
        partitions=partitions,
        layers_captured=layers,
        num_heads=num_heads,
        tokens_per_partition=tokens_per_partition,
        patch_grid=most_square_grid(tokens_per_partition),
        grid=grid,
        image_size=image_size,
    )


def write_selection_manifest(result, plan, config, path: str | Path) -> None:
    """Serialize a selection run to JSON with a fixed key order.

    Keys: version, budget, alpha, init_layer, final_layer, aggregation,
    partitions (id, allocated, kept_indices [, importance]), total_kept.
    """
    doc = {
        "version": 1,
        "budget": plan.budget,
        "alpha": config.alpha,
        "init_layer": config.init_layer,
        "final_layer": config.final_layer,
        "aggregation": config.aggregation,
        "partitions": [
            _partition_entry(sel) for sel in result.partitions
        ],
        "total_kept": result.total_kept,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", "utf-8")


def _partition_entry(sel) -> dict:
    entry = {
        "id": sel.partition_id,
        "allocated": sel.allocated,
        "kept_indices": list(sel.kept_indices),
    }
    if sel.importance is not None:
        entry["importance"] = [float(v) for v in sel.importance]
    return entry


def read_selection_manifest(path: str | Path) -> dict:
    """Parse and validate a selection manifest; returns the JSON dict."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestInvalid(f"{path}: {exc}", str(path)) from None
    _require(isinstance(doc, dict), str(path), "top level must be an object")
    for key in ("version", "budget", "partitions", "total_kept"):
        _require(key in doc, f"{path}: {key}", "missing required key")
    _require(type(doc["total_kept"]) is int and doc["total_kept"] >= 0,
             f"{path}: total_kept", "must be a nonnegative integer")
    _require(type(doc["budget"]) is int and doc["budget"] >= 0,
             f"{path}: budget", "must be a nonnegative integer")
    _require(isinstance(doc["partitions"], list),
             f"{path}: partitions", "must be a list")
    for pos, entry in enumerate(doc["partitions"]):
        where = f"{path}: partitions[{pos}]"
        _require(isinstance(entry, dict)
                 and all(key in entry for key in ("id", "allocated", "kept_indices")),
                 where, "needs id, allocated, kept_indices")
        idx = entry["kept_indices"]
        _require(isinstance(idx, list) and all(type(v) is int and v >= 0 for v in idx),
                 f"{where}.kept_indices", "must be a list of nonnegative integers")
        _require(all(a < b for a, b in zip(idx, idx[1:])),
                 f"{where}.kept_indices", "must be strictly ascending")
    return doc
