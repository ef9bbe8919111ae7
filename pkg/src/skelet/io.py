"""File formats: sequence container, parameter container, keypoint records.

Sequence container (``.skl``), all integers little-endian:

    bytes 0-7    magic ``SKELSEQ\\0``
    bytes 8-11   format version (u32, currently 1)
    bytes 12-27  persons, joints, frames, channels (4 x u32)
    bytes 28-35  class label (i64, -1 when unlabeled)
    bytes 36-51  layout id (16 bytes, NUL-padded ASCII)
    bytes 52-    payload: I*J*T*C float64 values, row-major

Parameter container (``.sknet``):

    bytes 0-7    magic ``SKELNET\\0``
    bytes 8-11   format version (u32, currently 1)
    bytes 12-43  SHA-256 of the canonical network config text
    bytes 44-47  entry count (u32)
    then per entry: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
    float64 values row-major

Keypoint records are JSON lines, one detection per line:
``{"frame": t, "person": id, "keypoints": [[x, y, confidence] * 133]}``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParseError
from .network import Network, canonical_config_text
from .skeleton import KNOWN_LAYOUTS, SkeletonSequence

__all__ = [
    "read_sequence",
    "write_sequence",
    "save_network_params",
    "load_network_params",
    "import_keypoint_json",
    "RunConfig",
]

_SEQ_MAGIC = b"SKELSEQ\0"
_NET_MAGIC = b"SKELNET\0"
_VERSION = 1
_SEQ_HEADER = struct.Struct("<8sI4Iq16s")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what}: expected {n} bytes at offset {fh.tell() - len(data)}, got {len(data)}")
    return data


def write_sequence(seq: SkeletonSequence, path: str | Path) -> None:
    try:
        layout = seq.layout_id.encode("ascii")
    except UnicodeEncodeError as exc:
        raise FormatError(f"layout id {seq.layout_id!r} is not ASCII") from exc
    if len(layout) > 16:
        raise FormatError(f"layout id {seq.layout_id!r} exceeds 16 bytes")
    header = _SEQ_HEADER.pack(
        _SEQ_MAGIC,
        _VERSION,
        seq.persons,
        seq.joints,
        seq.frames,
        seq.channels,
        -1 if seq.label is None else seq.label,
        layout,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(seq.data, dtype="<f8").tobytes())


def read_sequence(path: str | Path) -> SkeletonSequence:
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _SEQ_HEADER.size, "sequence header")
        magic, version, i, j, t, c, label, layout_raw = _SEQ_HEADER.unpack(raw)
        if magic != _SEQ_MAGIC:
            raise FormatError(f"bad magic at offset 0: {magic!r}")
        if version != _VERSION:
            raise FormatError(f"unsupported sequence format version {version}")
        layout_id = layout_raw.rstrip(b"\0").decode("ascii")
        expected = KNOWN_LAYOUTS.get(layout_id)
        if expected is not None and expected != j:
            raise FormatError(f"layout id {layout_id!r} requires {expected} joints, header says {j}")
        n = i * j * t * c
        payload = fh.read()
        if len(payload) != 8 * n:
            raise FormatError(
                f"truncated payload at offset {_SEQ_HEADER.size}: expected {8 * n} bytes, got {len(payload)}"
            )
        data = np.frombuffer(payload, dtype="<f8").reshape(i, j, t, c)
    return SkeletonSequence(data=data.copy(), layout_id=layout_id, label=None if label < 0 else int(label))


# ---------------------------------------------------------------------------
# Parameter container

def config_hash(net: Network) -> bytes:
    return hashlib.sha256(canonical_config_text(net.config).encode()).digest()


def save_network_params(net: Network, path: str | Path) -> None:
    entries = net.named_parameters()
    with open(path, "wb") as fh:
        fh.write(_NET_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(config_hash(net))
        fh.write(struct.pack("<I", len(entries)))
        for name, param in entries:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            shape = param.value.shape
            fh.write(struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape) if shape else b"")
            fh.write(np.ascontiguousarray(param.value.data, dtype="<f8").tobytes())


def load_network_params(net: Network, path: str | Path) -> None:
    """Load a parameter container into an already-built network, in place."""
    by_name = dict(net.named_parameters())
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != _NET_MAGIC:
            raise FormatError(f"bad magic at offset 0: {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != _VERSION:
            raise FormatError(f"unsupported parameter container version {version}")
        digest = _read_exact(fh, 32, "config hash")
        if digest != config_hash(net):
            raise FormatError("parameter container was produced by a different network configuration")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        if count != len(by_name):
            raise FormatError(f"container has {count} entries, network has {len(by_name)} parameters")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims")) if rank else ()
            n = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(_read_exact(fh, 8 * n, f"values of {name}"), dtype="<f8").reshape(shape)
            param = by_name.get(name)
            if param is None:
                raise FormatError(f"container entry {name!r} has no matching parameter")
            param.assign(values.copy())


# ---------------------------------------------------------------------------
# Keypoint record import

def import_keypoint_json(path: str | Path, max_persons: int = 10, joints: int = 133) -> SkeletonSequence:
    """Build a sequence from per-frame, per-person keypoint records.

    Persons are ordered by id.  When more than *max_persons* ids appear, the
    ones with the highest mean confidence are kept (ties break toward lower
    ids); fewer are zero-padded.  A person missing from a frame contributes
    zeros with confidence 0 for that frame.
    """
    records = []
    max_frame = -1
    ids = set()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
        try:
            frame = int(rec["frame"])
            person = int(rec["person"])
            kp = rec["keypoints"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: record needs frame, person, keypoints") from exc
        if frame < 0 or person < 0:
            raise ParseError(f"{path}:{lineno}: frame and person ids must be non-negative")
        if len(kp) != joints:
            raise FormatError(f"{path}:{lineno}: expected {joints} keypoints, got {len(kp)}")
        arr = np.asarray(kp, dtype=np.float64)
        if arr.shape != (joints, 3):
            raise FormatError(f"{path}:{lineno}: keypoints must be (x, y, confidence) triples")
        records.append((frame, person, arr))
        max_frame = max(max_frame, frame)
        ids.add(person)
    if max_frame < 0:
        raise ParseError(f"{path}: no keypoint records found")

    frames = max_frame + 1
    ordered = sorted(ids)
    dense = np.zeros((len(ordered), joints, frames, 3))
    slot = {pid: k for k, pid in enumerate(ordered)}
    for frame, person, arr in records:
        dense[slot[person], :, frame, :] = arr

    if len(ordered) > max_persons:
        mean_conf = dense[..., 2].mean(axis=(1, 2))
        # Highest mean confidence first; ties keep the lower person id.
        keep = sorted(range(len(ordered)), key=lambda k: (-mean_conf[k], ordered[k]))[:max_persons]
        dense = dense[sorted(keep)]
    elif len(ordered) < max_persons:
        dense = np.concatenate(
            [dense, np.zeros((max_persons - len(ordered), joints, frames, 3))], axis=0
        )
    layout_id = "wholebody" if joints == 133 else ("expressive" if joints == 65 else f"custom{joints}")
    return SkeletonSequence(data=dense, layout_id=layout_id)


# ---------------------------------------------------------------------------
# Run configuration

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(tok) for tok in text.split(","))


def _parse_ranges(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        lo, _, hi = tok.partition("-")
        out.append((int(lo), int(hi or lo)))
    return tuple(out)


# key -> (parser, default); defaults mirror the standard training recipe.
_SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "network.channels": (_parse_int_list, (64, 64, 64, 64, 128, 128, 128, 256, 256, 256)),
    "network.downsample_blocks": (_parse_int_list, (5, 8)),
    "network.joints": (_parse_int_list, (65, 27, 11)),
    "network.groups": (_parse_int_list, (1, 2, 4)),
    "network.group_expand": (int, 2),
    "network.temporal_kernel": (int, 5),
    "network.in_channels": (int, 3),
    "network.num_classes": (int, 120),
    "network.frames": (int, 100),
    "network.adjacency_norm": (str, "row"),
    "network.pointwise_before_activation": (_parse_bool, True),
    "network.skeleton_transform": (_parse_bool, True),
    "train.learning_rate": (float, 0.1),
    "train.momentum": (float, 0.9),
    "train.weight_decay": (float, 0.0005),
    "train.epochs": (int, 120),
    "train.batch_size": (int, 128),
    "train.cosine_annealing": (_parse_bool, True),
    "ip.enabled": (_parse_bool, False),
    "ip.max_persons": (int, 10),
    "ip.channels": (int, 64),
    "ip.overflow": (str, "crop"),
    "select.protocol": (str, "wo-face"),
    "select.drop_ranges": (_parse_ranges, ((23, 90),)),
    "select.area_scale.body": (float, 1.0),
    "select.area_scale.face": (float, 0.2),
    "select.area_scale.hand": (float, 0.15),
    "select.area_scale.foot": (float, 0.15),
    "paths.edges": (str, ""),
    "paths.partitions": (str, ""),
}


class RunConfig:
    """Validated key=value run configuration with schema-checked keys."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in _SCHEMA.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        parser, _ = _SCHEMA[key]
        if isinstance(value, str):
            try:
                value = parser(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        self.values[key] = value

    def __getitem__(self, key: str):
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            try:
                cfg.set(key.strip(), value.strip())
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        return cfg

    def dump(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, tuple) and value and isinstance(value[0], tuple):
                rendered = ",".join(f"{lo}-{hi}" for lo, hi in value)
            elif isinstance(value, tuple):
                rendered = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = str(value)
            lines.append(f"{key} = {rendered}")
        return "\n".join(lines)
