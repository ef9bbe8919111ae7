"""Network assembly, inference, and desk-scale training.

The default architecture stacks 10 grouped mapping blocks with output widths
64,64,64,64,128,128,128,256,256,256.  Blocks 5 and 8 downsample: each halves
the frame count, reduces the joint set along the partition chain 65->27->11,
and doubles the group count along the 1->2->4 schedule.  A joint/frame
average pool plus a linear map forms the classifier head.

The same configuration with joint transformation disabled builds the
baseline twin: every block keeps the full joint set and a single group,
with only the frame halving retained.  Training is plain SGD with Nesterov
momentum, L2 weight decay, and an optional cosine-annealed learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Parameter, Tape, Tensor
from .errors import ConfigError, NumericError, ShapeError, TrainingDivergedError
from .mapping import (
    BlockConfig,
    BlockParams,
    PartitionMap,
    fresh_downsample_values,
    grouped_mapping_block,
    make_block_params,
)
from .pooling import IPConfig, IPParams, instance_pool
from .skeleton import AdjacencyMatrix, KeypointLayout, SkeletonSequence, build_adjacency

__all__ = [
    "NetworkConfig",
    "TrainConfig",
    "Network",
    "build_network",
    "forward",
    "forward_features",
    "late_fusion_forward",
    "pooled_forward",
    "train",
    "uniform_sample",
    "cosine_lr",
    "canonical_config_text",
]

DEFAULT_CHANNELS = (64, 64, 64, 64, 128, 128, 128, 256, 256, 256)


@dataclass(frozen=True)
class NetworkConfig:
    """Block-level architecture description."""

    num_classes: int
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    downsample_blocks: tuple[int, ...] = (5, 8)  # 1-based block indices
    joints: tuple[int, ...] = (65, 27, 11)
    groups: tuple[int, ...] = (1, 2, 4)
    group_expand: int = 2
    temporal_kernel: int = 5
    in_channels: int = 3
    frames: int = 100
    adjacency_norm: str = "row"
    pointwise_before_activation: bool = True

    def __post_init__(self):
        blocks = len(self.channels)
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        down = tuple(self.downsample_blocks)
        if list(down) != sorted(set(down)):
            raise ConfigError(f"downsample block indices must be sorted and unique, got {down}")
        if down and not (1 <= down[0] and down[-1] <= blocks):
            raise ConfigError(f"downsample indices {down} outside 1..{blocks}")
        if len(self.joints) != len(down) + 1:
            raise ConfigError(
                f"joint schedule length {len(self.joints)} != downsample count {len(down)} + 1"
            )
        if len(self.groups) != len(self.joints):
            raise ConfigError(f"group schedule length {len(self.groups)} != stage count {len(self.joints)}")
        for a, b in zip(self.groups, self.groups[1:]):
            if b != a * self.group_expand:
                raise ConfigError(
                    f"group schedule {self.groups} must expand by factor {self.group_expand} per stage"
                )
        # 2 or 3 for raw (x, y[, confidence]) input; wider when an embedding
        # front end feeds the network instead.
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be positive, got {self.in_channels}")
        if self.frames < 1:
            raise ConfigError(f"frames must be positive, got {self.frames}")

    @property
    def block_count(self) -> int:
        return len(self.channels)

    def block_in_channels(self, index: int) -> int:
        """Input width of 1-based block *index*."""
        return self.in_channels if index == 1 else self.channels[index - 2]

    def input_stage(self, index: int) -> int:
        """Stage (count of completed downsamples) feeding 1-based block *index*."""
        return sum(1 for d in self.downsample_blocks if d < index)

    def output_stage(self, index: int) -> int:
        return sum(1 for d in self.downsample_blocks if d <= index)

    def shape_schedule(self) -> list[tuple[int, int]]:
        """Per-block output (joints, frames) for skeleton-transforming builds."""
        out = []
        t = self.frames
        for i in range(1, self.block_count + 1):
            if i in self.downsample_blocks:
                t = -(-t // 2)
            out.append((self.joints[self.output_stage(i)], t))
        return out


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings: SGD with Nesterov momentum and L2 weight decay."""

    epochs: int
    batch_size: int = 8
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0005
    cosine_annealing: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate, momentum, and weight decay must be non-negative")


class Network:
    """An instantiated block stack with its stage adjacencies and classifier."""

    def __init__(
        self,
        config: NetworkConfig,
        blocks: list[tuple[BlockConfig, BlockParams]],
        stage_adjacency: list[AdjacencyMatrix],
        classifier_weight: Parameter,
        classifier_bias: Parameter,
        skeleton_transform: bool,
    ):
        self.config = config
        self.blocks = blocks
        self.stage_adjacency = stage_adjacency
        self.classifier_weight = classifier_weight
        self.classifier_bias = classifier_bias
        self.skeleton_transform = skeleton_transform

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        out = []
        for i, (_, params) in enumerate(self.blocks, start=1):
            prefix = f"block{i:02d}"
            for g, m in enumerate(params.mappings):
                out.append((f"{prefix}.mapping{g}", m.param))
            for g, w in enumerate(params.graph_weights):
                out.append((f"{prefix}.graph_weight{g}", w))
            out.append((f"{prefix}.graph_scale", params.graph_scale))
            out.append((f"{prefix}.graph_bias", params.graph_bias))
            out.append((f"{prefix}.shared_pointwise", params.shared_pointwise))
            out.append((f"{prefix}.temporal_kernel", params.temporal_kernel))
            out.append((f"{prefix}.temporal_scale", params.temporal_scale))
            out.append((f"{prefix}.temporal_bias", params.temporal_bias))
            if params.residual_projection is not None:
                out.append((f"{prefix}.residual_projection", params.residual_projection))
        out.append(("classifier.weight", self.classifier_weight))
        out.append(("classifier.bias", self.classifier_bias))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def block_adjacency(self, index: int) -> AdjacencyMatrix:
        """Source-stage adjacency feeding 1-based block *index*."""
        return self.stage_adjacency[self.config.input_stage(index)]


def _stage_partitions(cfg: NetworkConfig, partitions) -> list[PartitionMap]:
    expected = len(cfg.joints) - 1
    partitions = list(partitions or [])
    if len(partitions) != expected:
        raise ConfigError(f"need {expected} partitions for joint schedule {cfg.joints}, got {len(partitions)}")
    for s, p in enumerate(partitions):
        if p.source_count != cfg.joints[s] or p.target_count != cfg.joints[s + 1]:
            raise ConfigError(
                f"partition {s} maps {p.source_count}->{p.target_count}, "
                f"schedule needs {cfg.joints[s]}->{cfg.joints[s + 1]}"
            )
    return partitions


def build_network(
    cfg: NetworkConfig,
    layout: KeypointLayout,
    partitions: list[PartitionMap] | None = None,
    skeleton_transform: bool = True,
    seed: int = 0,
) -> Network:
    """Instantiate the block stack (or its fixed-joint baseline twin).

    With ``skeleton_transform`` every block carries mapping matrices: diagonal
    re-weights in normal blocks, partition-seeded downsamplers in downsampling
    blocks.  Without it, all blocks run a single group on the full joint set
    with no mapping at all, keeping only the frame halving of the downsample
    schedule.
    """
    if layout.total_count != cfg.joints[0]:
        raise ConfigError(f"layout has {layout.total_count} joints, config expects {cfg.joints[0]}")
    rng = np.random.default_rng(seed)

    if skeleton_transform:
        partitions = _stage_partitions(cfg, partitions)
    stage_adjacency = [build_adjacency(layout)]
    if skeleton_transform:
        for p in partitions:
            fresh = fresh_downsample_values(p)
            prev = stage_adjacency[-1].values
            stage_adjacency.append(AdjacencyMatrix(fresh.T @ prev @ fresh))

    blocks: list[tuple[BlockConfig, BlockParams]] = []
    for i in range(1, cfg.block_count + 1):
        downsampling = i in cfg.downsample_blocks
        if skeleton_transform:
            stage_out = cfg.output_stage(i)
            block_cfg = BlockConfig(
                index=i,
                kind="downsample" if downsampling else "normal",
                in_channels=cfg.block_in_channels(i),
                out_channels=cfg.channels[i - 1],
                groups=cfg.groups[stage_out],
                temporal_kernel=cfg.temporal_kernel,
                temporal_stride=2 if downsampling else 1,
                partition=partitions[stage_out - 1] if downsampling else None,
                use_mapping=True,
                pointwise_before_activation=cfg.pointwise_before_activation,
                adjacency_norm=cfg.adjacency_norm,
            )
            in_joints = cfg.joints[cfg.input_stage(i)]
        else:
            block_cfg = BlockConfig(
                index=i,
                kind="normal",
                in_channels=cfg.block_in_channels(i),
                out_channels=cfg.channels[i - 1],
                groups=1,
                temporal_kernel=cfg.temporal_kernel,
                temporal_stride=2 if downsampling else 1,
                use_mapping=False,
                pointwise_before_activation=cfg.pointwise_before_activation,
                adjacency_norm=cfg.adjacency_norm,
            )
            in_joints = cfg.joints[0]
        blocks.append((block_cfg, make_block_params(block_cfg, in_joints, rng)))

    c_last = cfg.channels[-1] if cfg.channels else cfg.in_channels
    bound = 1.0 / math.sqrt(c_last)
    classifier_weight = Parameter(rng.uniform(-bound, bound, size=(c_last, cfg.num_classes)))
    classifier_bias = Parameter(np.zeros(cfg.num_classes))
    return Network(cfg, blocks, stage_adjacency, classifier_weight, classifier_bias, skeleton_transform)


# ---------------------------------------------------------------------------
# Inference

def forward_features(net: Network, x: Tensor, tape: Tape | None = None) -> Tensor:
    """Run the block stack and classifier on a (J, T, C) feature tensor."""
    if x.data.ndim != 3:
        raise ShapeError(f"features must be (J,T,C), got {x.shape}")
    if x.shape[0] != net.config.joints[0]:
        raise ShapeError(f"expected {net.config.joints[0]} joints, got {x.shape[0]}")
    if x.shape[2] != net.config.in_channels:
        raise ShapeError(f"expected {net.config.in_channels} channels, got {x.shape[2]}")
    h = x
    for i, (block_cfg, params) in enumerate(net.blocks, start=1):
        adjacency = net.block_adjacency(i) if net.skeleton_transform else net.stage_adjacency[0]
        h = grouped_mapping_block(h, adjacency, block_cfg, params, tape)
    pooled = dc.mean_joints_frames(h, tape)
    row = dc.reshape(pooled, (1, pooled.shape[0]), tape)
    logits = dc.matmul(row, net.classifier_weight.value, tape)
    logits = dc.add(logits, dc.reshape(net.classifier_bias.value, (1, net.config.num_classes), tape), tape)
    return dc.reshape(logits, (net.config.num_classes,), tape)


def forward(net: Network, x: SkeletonSequence | Tensor, tape: Tape | None = None) -> Tensor:
    """Class logits for a single-person input."""
    if isinstance(x, SkeletonSequence):
        if x.persons != 1:
            raise ShapeError(f"forward takes a single-person sequence, got {x.persons} persons")
        if x.frames != net.config.frames:
            raise ShapeError(f"expected {net.config.frames} frames, got {x.frames}")
        x = Tensor(x.person(0))
    return forward_features(net, x, tape)


def late_fusion_forward(net: Network, seq: SkeletonSequence, tape: Tape | None = None) -> Tensor:
    """Traditional multi-person handling: average per-person logits.

    Every non-empty person runs the full network, so cost scales linearly with
    the person count; all-zero padded slots are skipped.
    """
    live = [i for i in range(seq.persons) if seq.person(i).any()] or [0]
    acc = None
    for i in live:
        logits = forward_features(net, Tensor(seq.person(i)), tape)
        acc = logits if acc is None else dc.add(acc, logits, tape)
    return dc.mul(acc, Tensor(np.full(acc.shape, 1.0 / len(live))), tape)


def pooled_forward(
    net: Network,
    seq: SkeletonSequence,
    ip_cfg: IPConfig,
    ip_params: IPParams,
    tape: Tape | None = None,
) -> Tensor:
    """Instance-pool a multi-person sequence, then run the network once."""
    fused = instance_pool(Tensor(seq.data), ip_cfg, ip_params, tape)
    return forward_features(net, fused, tape)


# ---------------------------------------------------------------------------
# Training

def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Cosine-annealed rate: base at epoch 0, zero at epoch == total_epochs."""
    return base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


def _snapshot(params: list[Parameter]) -> list[np.ndarray]:
    return [p.value.data.copy() for p in params]


def _restore(params: list[Parameter], snap: list[np.ndarray]) -> None:
    for p, arr in zip(params, snap):
        p.assign(arr)


def train(
    net: Network,
    dataset: list[SkeletonSequence],
    tc: TrainConfig,
    ip: tuple[IPConfig, IPParams] | None = None,
) -> list[dict]:
    """Fit the network (and optional pooling front end) on a labeled dataset.

    Returns one log row per epoch: learning rate, mean loss, and training
    accuracy.  A non-finite loss rolls parameters back to the end of the last
    finished epoch and raises :class:`TrainingDivergedError` with the partial
    log attached.
    """
    if not dataset:
        raise ConfigError("training needs a non-empty dataset")
    for seq in dataset:
        if seq.label is None:
            raise ConfigError("every training sequence needs a label")
        if not (0 <= seq.label < net.config.num_classes):
            raise IndexError(f"label {seq.label} out of range for {net.config.num_classes} classes")

    params = net.parameters() + (list(ip[1].parameters()) if ip else [])
    velocity = [np.zeros(p.shape) for p in params]
    rng = np.random.default_rng(tc.seed)
    log: list[dict] = []
    checkpoint = _snapshot(params)

    def sample_loss(seq: SkeletonSequence, tape: Tape | None) -> tuple[Tensor, Tensor]:
        if ip is not None:
            logits = pooled_forward(net, seq, ip[0], ip[1], tape)
        else:
            logits = forward(net, seq, tape)
        return logits, dc.softmax_cross_entropy(logits, seq.label, tape)

    for epoch in range(tc.epochs):
        lr = cosine_lr(tc.learning_rate, epoch, tc.epochs) if tc.cosine_annealing else tc.learning_rate
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), tc.batch_size):
            batch = order[start : start + tc.batch_size]
            for p in params:
                p.zero_grad()
            for idx in batch:
                seq = dataset[int(idx)]
                tape = Tape()
                try:
                    logits, loss = sample_loss(seq, tape)
                    value = loss.item()
                except NumericError:
                    value = math.inf
                if not math.isfinite(value):
                    _restore(params, checkpoint)
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}; parameters rolled back", log
                    )
                total_loss += value
                correct += int(np.argmax(logits.data) == seq.label)
                grads = tape.backward(loss)
                for p in params:
                    g = grads.get(id(p.value))
                    if g is not None:
                        p.accumulate(g)
            scale = 1.0 / len(batch)
            for j, p in enumerate(params):
                g = p.grad.data * scale + tc.weight_decay * p.value.data
                velocity[j] = tc.momentum * velocity[j] + g
                step = g + tc.momentum * velocity[j]
                p.assign(p.value.data - lr * step)
        checkpoint = _snapshot(params)
        log.append(
            {
                "epoch": epoch,
                "lr": lr,
                "loss": total_loss / len(dataset),
                "accuracy": correct / len(dataset),
            }
        )
    return log


# ---------------------------------------------------------------------------
# Temporal resampling

def uniform_sample(seq: SkeletonSequence, target_frames: int, rng: np.random.Generator) -> SkeletonSequence:
    """Draw one frame from each of *target_frames* equal splits of the sequence.

    Splits are the uniform partition of [0, T): split i covers
    [floor(i*T/n), floor((i+1)*T/n)).  When the sequence is shorter than the
    target, empty splits repeat their boundary frame, so the output always has
    exactly *target_frames* frames.
    """
    if target_frames < 1:
        raise ConfigError(f"target frame count must be positive, got {target_frames}")
    t = seq.frames
    bounds = [i * t // target_frames for i in range(target_frames + 1)]
    picks = []
    for i in range(target_frames):
        lo, hi = bounds[i], bounds[i + 1]
        picks.append(int(rng.integers(lo, hi)) if hi > lo else min(lo, t - 1))
    return SkeletonSequence(
        data=np.ascontiguousarray(seq.data[:, :, picks, :]),
        layout_id=seq.layout_id,
        label=seq.label,
    )


def canonical_config_text(cfg: NetworkConfig) -> str:
    """Stable key=value rendering used for the parameter-container hash."""
    fields = {
        "adjacency_norm": cfg.adjacency_norm,
        "channels": ",".join(map(str, cfg.channels)),
        "downsample_blocks": ",".join(map(str, cfg.downsample_blocks)),
        "frames": cfg.frames,
        "group_expand": cfg.group_expand,
        "groups": ",".join(map(str, cfg.groups)),
        "in_channels": cfg.in_channels,
        "joints": ",".join(map(str, cfg.joints)),
        "num_classes": cfg.num_classes,
        "pointwise_before_activation": int(cfg.pointwise_before_activation),
        "temporal_kernel": cfg.temporal_kernel,
    }
    return "\n".join(f"{k}={v}" for k, v in sorted(fields.items()))
