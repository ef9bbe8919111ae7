"""Early fusion of multi-person skeletons into one skeleton representation.

Person-wise feature modeling makes network cost scale linearly with the
person count.  Pooling the instances first keeps the downstream network cost
constant: each person's keypoints are embedded with a shared pointwise map
plus a per-joint positional encoding, a concat-pool layer mixes the I
instance vectors at every (joint, frame) position back to one vector, the
mixed vector is residual-added to every instance and activated, and a final
elementwise max over instances removes the person axis:

    pooled = max_over_instances( relu( concat_pool(Y) + Y ) )

The concat-pool is order-sensitive by construction (it concatenates); the
closing max is permutation-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, Tape, Tensor
from .errors import ConfigError, ShapeError

__all__ = [
    "IPConfig",
    "IPParams",
    "make_ip_params",
    "pad_persons",
    "embed_instances",
    "concat_pool",
    "group_pool",
    "instance_pool",
]


@dataclass(frozen=True)
class IPConfig:
    """Instance-pooling shapes: fixed person budget and embedding width."""

    max_persons: int = 10
    joints: int = 65
    in_channels: int = 3
    channels: int = 64
    overflow: str = "crop"  # or "error"

    def __post_init__(self):
        if self.max_persons < 1:
            raise ConfigError(f"max_persons must be >= 1, got {self.max_persons}")
        if self.overflow not in ("crop", "error"):
            raise ConfigError(f"overflow policy must be 'crop' or 'error', got {self.overflow!r}")


@dataclass
class IPParams:
    """Learnable state: embedding map, positional encoding, concat-pool mix."""

    embed_weight: Parameter          # (C_in, C)
    encoding: Parameter              # (J, C), added per joint
    concat_weight: Parameter         # (I * C, C)

    def parameters(self) -> list[Parameter]:
        return [self.embed_weight, self.encoding, self.concat_weight]


def make_ip_params(cfg: IPConfig, rng: np.random.Generator) -> IPParams:
    bound = 1.0 / np.sqrt(cfg.in_channels)
    cbound = 1.0 / np.sqrt(cfg.max_persons * cfg.channels)
    return IPParams(
        embed_weight=Parameter(rng.uniform(-bound, bound, size=(cfg.in_channels, cfg.channels))),
        encoding=Parameter(rng.uniform(-0.1, 0.1, size=(cfg.joints, cfg.channels))),
        concat_weight=Parameter(rng.uniform(-cbound, cbound, size=(cfg.max_persons * cfg.channels, cfg.channels))),
    )


def pad_persons(x: Tensor, cfg: IPConfig) -> Tensor:
    """Zero-pad (or crop, per policy) the instance axis to exactly cfg.max_persons."""
    i = x.shape[0]
    if i > cfg.max_persons:
        if cfg.overflow == "error":
            raise ShapeError(f"{i} persons exceed the configured maximum {cfg.max_persons}")
        return Tensor(np.ascontiguousarray(x.data[: cfg.max_persons]))
    if i == cfg.max_persons:
        return x
    padded = np.zeros((cfg.max_persons,) + x.shape[1:])
    padded[:i] = x.data
    return Tensor(padded)


def embed_instances(x: Tensor, cfg: IPConfig, params: IPParams, tape: Tape | None = None) -> Tensor:
    """Pointwise channel embedding plus per-joint encoding: (I,J,T,C_in) -> (I,J,T,C)."""
    if x.data.ndim != 4:
        raise ShapeError(f"embed_instances expects (I,J,T,C), got {x.shape}")
    if x.shape[0] > cfg.max_persons:
        if cfg.overflow == "error":
            raise ShapeError(f"{x.shape[0]} persons exceed the configured maximum {cfg.max_persons}")
        x = Tensor(np.ascontiguousarray(x.data[: cfg.max_persons]))
    if x.shape[1] != cfg.joints or x.shape[3] != cfg.in_channels:
        raise ShapeError(f"embed_instances got {x.shape}, configured (J={cfg.joints}, C_in={cfg.in_channels})")
    y = dc.pointwise(x, params.embed_weight.value, tape)
    enc = dc.reshape(params.encoding.value, (1, cfg.joints, 1, cfg.channels), tape)
    return dc.add(y, enc, tape)


def concat_pool(y: Tensor, params: IPParams, tape: Tape | None = None) -> Tensor:
    """Mix the I instance vectors at each (j, t) back to one: (I,J,T,C) -> (1,J,T,C)."""
    i, j, t, c = y.shape
    if params.concat_weight.shape[0] != i * c:
        raise ShapeError(
            f"concat weight expects {params.concat_weight.shape[0]} = I*C inputs, got I={i}, C={c}"
        )
    stacked = dc.transpose(y, (1, 2, 0, 3), tape)          # (J, T, I, C)
    stacked = dc.reshape(stacked, (j, t, i * c), tape)
    mixed = dc.pointwise(stacked, params.concat_weight.value, tape)
    return dc.reshape(mixed, (1, j, t, c), tape)


def group_pool(z: Tensor, tape: Tape | None = None) -> Tensor:
    """Eliminate the instance axis with an elementwise maximum: (I,J,T,C) -> (J,T,C)."""
    if z.data.ndim != 4:
        raise ShapeError(f"group_pool expects (I,J,T,C), got {z.shape}")
    return dc.max_instances(z, tape)


def instance_pool(x: Tensor, cfg: IPConfig, params: IPParams, tape: Tape | None = None) -> Tensor:
    """Full pooling pipeline: pad, embed, concat-pool with residual, activate, max.

    Output is (J, T, C) for any person count in [1, cfg.max_persons]; it feeds
    the downstream network unchanged.
    """
    x = pad_persons(x, cfg)
    y = embed_instances(x, cfg, params, tape)
    mixed = concat_pool(y, params, tape)
    z = dc.relu(dc.add(mixed, y, tape), tape)
    return group_pool(z, tape)
