"""Learnable joint mapping matrices and the grouped mapping block.

A downsampling matrix (J_i x J_{i+1}) fuses correlated joints into a smaller
joint set; a re-weighting matrix is a learnable diagonal that scales joints
in place.  Downsampling matrices are seeded from a semantic partition of the
skeleton: entry (j, k) starts at 1/len(part_k) when joint j belongs to part
k and 0 otherwise, so each column is initially a mean over its part.  Both
kinds are unconstrained during training.

The grouped mapping block splits its input channels into K groups, maps each
group with its own matrix, runs a reference graph convolution per group on
the block's (possibly downsampled) adjacency, concatenates, applies a shared
pointwise weight and activation, then a strided temporal convolution, and
finally adds a residual.  Downsampling blocks also map the residual path and
halve its frame count so shapes chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, Tape, Tensor
from .errors import ConfigError, PartitionError, ShapeError
from .skeleton import AdjacencyMatrix, normalize_adjacency

__all__ = [
    "PartitionMap",
    "MappingMatrix",
    "BlockConfig",
    "BlockParams",
    "init_downsample_matrix",
    "init_reweight_matrix",
    "fresh_downsample_values",
    "apply_mapping",
    "transform_adjacency",
    "block_graph_operator",
    "grouped_mapping_block",
    "make_block_params",
    "load_partition_table",
    "save_partition_table",
    "expressive_partitions",
    "contiguous_partition",
]


@dataclass(frozen=True)
class PartitionMap:
    """Assignment of source joints to target parts: a disjoint, complete cover."""

    source_count: int
    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        clean = []
        seen: set[int] = set()
        for k, part in enumerate(self.parts):
            if not part:
                raise PartitionError(f"part {k} is empty")
            ordered = tuple(sorted(part))
            for j in ordered:
                if not (0 <= j < self.source_count):
                    raise PartitionError(f"part {k} references joint {j} outside 0..{self.source_count - 1}")
                if j in seen:
                    raise PartitionError(f"joint {j} assigned to more than one part")
                seen.add(j)
            clean.append(ordered)
        if len(seen) != self.source_count:
            missing = sorted(set(range(self.source_count)) - seen)
            raise PartitionError(f"joints {missing} not covered by any part")
        object.__setattr__(self, "parts", tuple(clean))

    @property
    def target_count(self) -> int:
        return len(self.parts)


@dataclass
class MappingMatrix:
    """A learnable joint transform: dense downsample or diagonal re-weight."""

    kind: str  # "downsample" | "reweight"
    param: Parameter

    def __post_init__(self):
        if self.kind not in ("downsample", "reweight"):
            raise ConfigError(f"unknown mapping kind {self.kind!r}")
        ndim = self.param.value.data.ndim
        if self.kind == "downsample" and ndim != 2:
            raise ShapeError(f"downsample mapping must be a matrix, got shape {self.param.shape}")
        if self.kind == "reweight" and ndim != 1:
            raise ShapeError(f"reweight mapping stores its diagonal, got shape {self.param.shape}")

    @property
    def source_count(self) -> int:
        return self.param.shape[0]

    @property
    def target_count(self) -> int:
        return self.param.shape[1] if self.kind == "downsample" else self.param.shape[0]


def fresh_downsample_values(partition: PartitionMap) -> np.ndarray:
    """The partition-seeded matrix: column k averages the joints of part k."""
    m = np.zeros((partition.source_count, partition.target_count))
    for k, part in enumerate(partition.parts):
        m[list(part), k] = 1.0 / len(part)
    return m


def init_downsample_matrix(partition: PartitionMap) -> MappingMatrix:
    return MappingMatrix(kind="downsample", param=Parameter(fresh_downsample_values(partition)))


def init_reweight_matrix(joints: int) -> MappingMatrix:
    if joints < 1:
        raise ConfigError(f"reweight mapping needs at least one joint, got {joints}")
    return MappingMatrix(kind="reweight", param=Parameter(np.ones(joints)))


def apply_mapping(m: MappingMatrix, x: Tensor, tape: Tape | None = None) -> Tensor:
    """Contract the joint axis of a (J, T, C) tensor with a mapping matrix.

    Downsample: out[k, t, c] = sum_j M[j, k] x[j, t, c].  Re-weight scales each
    joint by its diagonal entry.  Differentiable in both the matrix and x.
    """
    if x.shape[0] != m.source_count:
        raise ShapeError(f"mapping expects {m.source_count} joints, features have {x.shape[0]}")
    if m.kind == "downsample":
        return dc.joint_contract(m.param.value, x, tape)
    return dc.scale_joints(m.param.value, x, tape)


def transform_adjacency(a: AdjacencyMatrix, m: MappingMatrix) -> AdjacencyMatrix:
    """Carry an adjacency to the downsampled joint set: A' = M^T A M."""
    if m.kind != "downsample":
        raise ConfigError("adjacency transform needs a downsample mapping")
    if a.joint_count != m.source_count:
        raise ShapeError(f"adjacency has {a.joint_count} joints, mapping expects {m.source_count}")
    mv = m.param.value.data
    return AdjacencyMatrix(mv.T @ a.values @ mv)


# ---------------------------------------------------------------------------
# Block configuration and parameters

@dataclass(frozen=True)
class BlockConfig:
    """One spatial-temporal block: shapes, grouping, and downsampling role."""

    index: int
    kind: str  # "normal" | "downsample"
    in_channels: int
    out_channels: int
    groups: int
    temporal_kernel: int = 5
    temporal_stride: int = 1
    partition: PartitionMap | None = None
    use_mapping: bool = True
    pointwise_before_activation: bool = True
    adjacency_norm: str = "row"

    def __post_init__(self):
        if self.kind not in ("normal", "downsample"):
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if self.kind == "downsample":
            if self.partition is None:
                raise ConfigError(f"block {self.index}: downsampling blocks need a partition")
            if self.temporal_stride != 2:
                raise ConfigError(f"block {self.index}: joint downsampling implies temporal stride 2")
            if not self.use_mapping:
                raise ConfigError(f"block {self.index}: downsampling requires mapping matrices")
        else:
            if self.partition is not None:
                raise ConfigError(f"block {self.index}: normal blocks take no partition")
            if self.temporal_stride not in (1, 2):
                raise ConfigError(f"block {self.index}: temporal stride must be 1 or 2")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"block {self.index}: groups={self.groups} must divide channels "
                f"{self.in_channels}->{self.out_channels}"
            )

    def out_joints(self, in_joints: int) -> int:
        if self.kind == "downsample":
            return self.partition.target_count
        return in_joints


@dataclass
class BlockParams:
    """Learnable state of one block."""

    mappings: list[MappingMatrix]
    graph_weights: list[Parameter]
    graph_scale: Parameter
    graph_bias: Parameter
    shared_pointwise: Parameter
    temporal_kernel: Parameter
    temporal_scale: Parameter
    temporal_bias: Parameter
    residual_projection: Parameter | None = None

    def parameters(self) -> list[Parameter]:
        out = [m.param for m in self.mappings]
        out += self.graph_weights
        out += [
            self.graph_scale,
            self.graph_bias,
            self.shared_pointwise,
            self.temporal_kernel,
            self.temporal_scale,
            self.temporal_bias,
        ]
        if self.residual_projection is not None:
            out.append(self.residual_projection)
        return out


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def make_block_params(cfg: BlockConfig, in_joints: int, rng: np.random.Generator) -> BlockParams:
    """Initialize a block: partition-seeded or identity mappings, fan-in weights."""
    k, c_in, c_out = cfg.groups, cfg.in_channels, cfg.out_channels
    if cfg.use_mapping:
        if cfg.kind == "downsample":
            if cfg.partition.source_count != in_joints:
                raise ShapeError(
                    f"block {cfg.index}: partition covers {cfg.partition.source_count} joints, "
                    f"stage has {in_joints}"
                )
            mappings = [init_downsample_matrix(cfg.partition) for _ in range(k)]
        else:
            mappings = [init_reweight_matrix(in_joints) for _ in range(k)]
    else:
        mappings = []
    gw = [Parameter(_uniform(rng, (c_in // k, c_out // k), c_in // k)) for _ in range(k)]
    params = BlockParams(
        mappings=mappings,
        graph_weights=gw,
        graph_scale=Parameter(np.ones(c_out)),
        graph_bias=Parameter(np.zeros(c_out)),
        shared_pointwise=Parameter(_uniform(rng, (c_out, c_out), c_out)),
        temporal_kernel=Parameter(_uniform(rng, (cfg.temporal_kernel, c_out, c_out), cfg.temporal_kernel * c_out)),
        temporal_scale=Parameter(np.ones(c_out)),
        temporal_bias=Parameter(np.zeros(c_out)),
    )
    if c_in != c_out:
        params.residual_projection = Parameter(_uniform(rng, (c_in, c_out), c_in))
    return params


# ---------------------------------------------------------------------------
# Forward pass

def block_graph_operator(a: AdjacencyMatrix, cfg: BlockConfig) -> np.ndarray:
    """The constant normalized graph operator this block convolves with.

    Downsampling blocks first carry the adjacency to the target joint set
    using the partition-seeded matrix (a fixed transform: learned mapping
    values do not feed back into the graph), then self-links are added and
    the result is degree-normalized.
    """
    values = a.values
    if cfg.kind == "downsample":
        fresh = fresh_downsample_values(cfg.partition)
        values = fresh.T @ values @ fresh
    linked = AdjacencyMatrix(values + np.eye(values.shape[0]))
    return normalize_adjacency(linked, method=cfg.adjacency_norm).values


def _channel_affine(x: Tensor, scale: Parameter, bias: Parameter, tape) -> Tensor:
    return dc.add(dc.mul(x, scale.value, tape), bias.value, tape)


def _mapped_groups(x: Tensor, cfg: BlockConfig, params: BlockParams, tape) -> list[Tensor]:
    """Split channels into K groups and apply each group's mapping matrix."""
    k = cfg.groups
    width = x.shape[-1] // k
    groups = []
    for g in range(k):
        xg = dc.slice_channels(x, g * width, width, tape) if k > 1 else x
        if params.mappings:
            xg = apply_mapping(params.mappings[g], xg, tape)
        groups.append(xg)
    return groups


def grouped_mapping_block(
    x: Tensor,
    a: AdjacencyMatrix,
    cfg: BlockConfig,
    params: BlockParams,
    tape: Tape | None = None,
) -> Tensor:
    """Run one block on a (J, T, C_in) tensor, returning (J', T', C_out).

    J' is the partition target count for downsampling blocks (which also halve
    T); normal blocks preserve both.  The residual is the input itself for
    normal blocks and the mapped, frame-strided input for downsampling blocks,
    with a pointwise projection inserted whenever the channel width changes.
    """
    if x.data.ndim != 3:
        raise ShapeError(f"block input must be (J,T,C), got {x.shape}")
    if x.shape[-1] != cfg.in_channels:
        raise ShapeError(f"block {cfg.index}: expected {cfg.in_channels} channels, got {x.shape[-1]}")
    if a.joint_count != x.shape[0]:
        raise ShapeError(f"block {cfg.index}: adjacency joints {a.joint_count} != features {x.shape[0]}")
    if cfg.kind == "downsample" and cfg.partition.source_count != x.shape[0]:
        raise ShapeError(
            f"block {cfg.index}: partition source {cfg.partition.source_count} != joints {x.shape[0]}"
        )

    hat = Tensor(block_graph_operator(a, cfg).T)  # transposed for joint_contract
    k, c_out = cfg.groups, cfg.out_channels

    outs = []
    for g, xg in enumerate(_mapped_groups(x, cfg, params, tape)):
        gg = dc.joint_contract(hat, xg, tape)
        gg = dc.pointwise(gg, params.graph_weights[g].value, tape)
        outs.append(gg)
    y = outs[0] if k == 1 else dc.concat_channels(outs, tape)
    y = _channel_affine(y, params.graph_scale, params.graph_bias, tape)
    if cfg.pointwise_before_activation:
        y = dc.pointwise(y, params.shared_pointwise.value, tape)
        y = dc.relu(y, tape)
    else:
        y = dc.relu(y, tape)
        y = dc.pointwise(y, params.shared_pointwise.value, tape)
    y = dc.conv1d_temporal(y, params.temporal_kernel.value, stride=cfg.temporal_stride, tape=tape)
    y = _channel_affine(y, params.temporal_scale, params.temporal_bias, tape)

    res = x
    if cfg.temporal_stride == 2:
        res = dc.stride_frames(res, 2, tape)
    if cfg.kind == "downsample":
        mapped = _mapped_groups(res, cfg, params, tape)
        res = mapped[0] if k == 1 else dc.concat_channels(mapped, tape)
    if params.residual_projection is not None:
        res = dc.pointwise(res, params.residual_projection.value, tape)
    elif cfg.in_channels != c_out:
        raise ConfigError(f"block {cfg.index}: channel change {cfg.in_channels}->{c_out} needs a residual projection")
    return dc.add(y, res, tape)


# ---------------------------------------------------------------------------
# Partition tables

def load_partition_table(path: str | Path) -> PartitionMap:
    """Read 'k: j1 j2 ...' lines; parts must be numbered 0..K-1 in order."""
    parts: list[tuple[int, ...]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, tail = line.partition(":")
        try:
            k = int(head)
            joints = tuple(int(tok) for tok in tail.split())
        except ValueError as exc:
            raise PartitionError(f"{path}:{lineno}: malformed part line {raw!r}") from exc
        if k != len(parts):
            raise PartitionError(f"{path}:{lineno}: part index {k}, expected {len(parts)}")
        parts.append(joints)
    source = max((j for part in parts for j in part), default=-1) + 1
    return PartitionMap(source_count=source, parts=tuple(parts))


def save_partition_table(partition: PartitionMap, path: str | Path) -> None:
    lines = [f"{k}: " + " ".join(str(j) for j in part) for k, part in enumerate(partition.parts)]
    Path(path).write_text("\n".join(lines) + "\n")


def expressive_partitions() -> tuple[PartitionMap, PartitionMap]:
    """The packaged 65->27 and 27->11 partition tables."""
    from importlib import resources

    maps = []
    for name in ("expressive65_to_27.parts", "parts27_to_11.parts"):
        ref = resources.files("skelet").joinpath("data", name)
        parts: list[tuple[int, ...]] = []
        for raw in ref.read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            _, _, tail = line.partition(":")
            parts.append(tuple(int(tok) for tok in tail.split()))
        source = max(j for part in parts for j in part) + 1
        maps.append(PartitionMap(source_count=source, parts=tuple(parts)))
    return maps[0], maps[1]


def contiguous_partition(source: int, target: int) -> PartitionMap:
    """Evenly sized contiguous parts, for toy joint counts without a semantic table."""
    if not (1 <= target <= source):
        raise PartitionError(f"cannot partition {source} joints into {target} parts")
    bounds = [source * k // target for k in range(target + 1)]
    parts = tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(target))
    return PartitionMap(source_count=source, parts=parts)
