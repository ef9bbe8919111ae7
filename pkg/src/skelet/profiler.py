"""Analytic cost accounting for blocks, networks, and the pooling front end.

Counts are multiply-accumulates derived in closed form from the
configuration, mirroring the forward implementation op for op; running the
same forward under :class:`~skelet.diffcore.MacCounter` must reproduce the
analytic totals exactly.  Following counter convention, one MAC is reported
as one FLOP by default (a flag switches to two), and plain additions,
activations, and pooling comparisons are kept out of the totals and reported
separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError, ShapeError
from .mapping import BlockConfig
from .network import Network
from .pooling import IPConfig

__all__ = [
    "BlockCost",
    "CostReport",
    "block_macs",
    "count_flops",
    "count_params",
    "count_ip_flops",
    "compare_networks",
]


@dataclass(frozen=True)
class BlockCost:
    """Cost of one profiled unit (block, classifier head, or pooling stage)."""

    index: int
    kind: str
    joints_in: int
    joints_out: int
    frames_in: int
    frames_out: int
    channels_in: int
    channels_out: int
    groups: int
    macs: int
    params: int

    def record(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "joints": [self.joints_in, self.joints_out],
            "frames": [self.frames_in, self.frames_out],
            "channels": [self.channels_in, self.channels_out],
            "groups": self.groups,
            "macs": self.macs,
            "params": self.params,
        }


@dataclass
class CostReport:
    """Per-row cost breakdown with totals and excluded-cost tallies."""

    label: str
    rows: list[BlockCost]
    excluded: dict[str, int] = field(default_factory=dict)
    flops_per_mac: int = 1

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self) -> int:
        return self.total_macs * self.flops_per_mac

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    def to_text(self) -> str:
        header = f"{'idx':>3} {'kind':<12} {'J':>9} {'T':>9} {'C':>9} {'K':>3} {'MACs':>14} {'params':>10}"
        lines = [f"== {self.label} ==", header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.index:>3} {r.kind:<12} {r.joints_in:>4}->{r.joints_out:<4} "
                f"{r.frames_in:>4}->{r.frames_out:<4} {r.channels_in:>4}->{r.channels_out:<4} "
                f"{r.groups:>3} {r.macs:>14,} {r.params:>10,}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"total: {self.total_macs:,} MACs ({self.total_flops:,} FLOPs at "
            f"{self.flops_per_mac}/MAC), {self.total_params:,} params"
        )
        if self.excluded:
            parts = ", ".join(f"{k}={v:,}" for k, v in sorted(self.excluded.items()))
            lines.append(f"excluded from totals: {parts}")
        return "\n".join(lines)

    def to_records(self) -> list[str]:
        """Line-delimited machine-readable rows plus a closing totals record."""
        out = [json.dumps({"label": self.label, **r.record()}, sort_keys=True) for r in self.rows]
        out.append(
            json.dumps(
                {
                    "label": self.label,
                    "kind": "total",
                    "macs": self.total_macs,
                    "flops": self.total_flops,
                    "flops_per_mac": self.flops_per_mac,
                    "params": self.total_params,
                    "excluded": dict(sorted(self.excluded.items())),
                },
                sort_keys=True,
            )
        )
        return out


# ---------------------------------------------------------------------------
# Closed-form per-block counts

def block_macs(cfg: BlockConfig, joints_in: int, frames_in: int) -> int:
    """MACs of one block forward, mirroring the implementation op for op."""
    k = cfg.groups
    c_in, c_out = cfg.in_channels, cfg.out_channels
    j_out = cfg.out_joints(joints_in)
    t_in = frames_in
    t_out = -(-t_in // cfg.temporal_stride)
    macs = 0
    if cfg.use_mapping:
        if cfg.kind == "downsample":
            macs += joints_in * j_out * t_in * (c_in // k) * k
        else:
            macs += joints_in * t_in * c_in                      # diagonal re-weight
    macs += j_out * j_out * t_in * (c_in // k) * k               # adjacency contraction
    macs += j_out * t_in * (c_in // k) * (c_out // k) * k        # per-group channel maps
    macs += j_out * t_in * c_out                                 # graph-side channel scale
    macs += j_out * t_in * c_out * c_out                         # shared pointwise
    macs += j_out * t_out * cfg.temporal_kernel * c_out * c_out  # temporal convolution
    macs += j_out * t_out * c_out                                # temporal-side channel scale
    if cfg.kind == "downsample":
        macs += joints_in * j_out * t_out * (c_in // k) * k      # residual mapping
    if c_in != c_out:
        macs += j_out * t_out * c_in * c_out                     # residual projection
    return macs


def _block_excluded(cfg: BlockConfig, joints_in: int, frames_in: int) -> dict[str, int]:
    j_out = cfg.out_joints(joints_in)
    t_in = frames_in
    t_out = -(-t_in // cfg.temporal_stride)
    c_out = cfg.out_channels
    return {
        "activation": j_out * t_in * c_out,
        "add": j_out * t_in * c_out + 2 * j_out * t_out * c_out,
    }


def _block_params(params) -> int:
    return sum(p.value.size for p in params.parameters())


def _merge(into: dict[str, int], extra: dict[str, int]) -> None:
    for k, v in extra.items():
        into[k] = into.get(k, 0) + v


def count_flops(net: Network, frames: int | None = None, flops_per_mac: int = 1) -> CostReport:
    """Closed-form cost of one single-person forward pass through *net*."""
    if flops_per_mac not in (1, 2):
        raise ConfigError(f"flops_per_mac must be 1 or 2, got {flops_per_mac}")
    cfg = net.config
    t = frames if frames is not None else cfg.frames
    if t < 1:
        raise ShapeError(f"frame count must be positive, got {t}")
    j = cfg.joints[0]
    rows: list[BlockCost] = []
    excluded: dict[str, int] = {}
    for i, (block_cfg, block_params) in enumerate(net.blocks, start=1):
        j_out = block_cfg.out_joints(j)
        t_out = -(-t // block_cfg.temporal_stride)
        rows.append(
            BlockCost(
                index=i,
                kind=block_cfg.kind,
                joints_in=j,
                joints_out=j_out,
                frames_in=t,
                frames_out=t_out,
                channels_in=block_cfg.in_channels,
                channels_out=block_cfg.out_channels,
                groups=block_cfg.groups,
                macs=block_macs(block_cfg, j, t),
                params=_block_params(block_params),
            )
        )
        _merge(excluded, _block_excluded(block_cfg, j, t))
        j, t = j_out, t_out
    c_last = cfg.channels[-1] if cfg.channels else cfg.in_channels
    rows.append(
        BlockCost(
            index=len(rows) + 1,
            kind="classifier",
            joints_in=j,
            joints_out=1,
            frames_in=t,
            frames_out=1,
            channels_in=c_last,
            channels_out=cfg.num_classes,
            groups=1,
            macs=c_last * cfg.num_classes,
            params=net.classifier_weight.value.size + net.classifier_bias.value.size,
        )
    )
    _merge(excluded, {"pool": j * t * c_last, "add": cfg.num_classes})
    label = "skeleton-transform" if net.skeleton_transform else "baseline"
    return CostReport(label=label, rows=rows, excluded=excluded, flops_per_mac=flops_per_mac)


def count_params(net: Network) -> CostReport:
    """Exact learnable-scalar counts; MAC columns are zeroed."""
    report = count_flops(net)
    rows = [
        BlockCost(
            index=r.index,
            kind=r.kind,
            joints_in=r.joints_in,
            joints_out=r.joints_out,
            frames_in=r.frames_in,
            frames_out=r.frames_out,
            channels_in=r.channels_in,
            channels_out=r.channels_out,
            groups=r.groups,
            macs=0,
            params=r.params,
        )
        for r in report.rows
    ]
    return CostReport(label=f"{report.label} parameters", rows=rows)


def count_ip_flops(
    cfg: IPConfig,
    persons: int,
    frames: int,
    net: Network | None = None,
    flops_per_mac: int = 1,
) -> CostReport:
    """Analytic pooling-front-end cost for embedding *persons* instances.

    The embed and concat-pool rows scale linearly with the person count; the
    group pool performs only comparisons and costs zero MACs.  When *net* is
    given, its (person-count independent) forward cost is appended, so the
    total models one multi-person classification with early fusion.  Note the
    executed pipeline zero-pads its input to ``cfg.max_persons`` before
    embedding; pass ``persons=cfg.max_persons`` to match an instrumented run.
    """
    if persons < 1:
        raise ConfigError(f"person count must be >= 1, got {persons}")
    if persons > cfg.max_persons:
        raise ShapeError(f"{persons} persons exceed the configured maximum {cfg.max_persons}")
    j, c_in, c = cfg.joints, cfg.in_channels, cfg.channels
    rows = [
        BlockCost(1, "embed", j, j, frames, frames, c_in, c, 1, persons * j * frames * c_in * c,
                  c_in * c + j * c),
        BlockCost(2, "concat_pool", j, j, frames, frames, c, c, 1,
                  persons * j * frames * c * c, cfg.max_persons * c * c),
        BlockCost(3, "group_pool", j, j, frames, frames, c, c, 1, 0, 0),
    ]
    excluded = {
        "add": 2 * persons * j * frames * c,          # encoding add + residual add
        "activation": persons * j * frames * c,
        "compare": (persons - 1) * j * frames * c,
    }
    if net is not None:
        if net.config.in_channels != c:
            raise ConfigError(
                f"network expects {net.config.in_channels} input channels, pooling emits {c}"
            )
        downstream = count_flops(net, frames=frames)
        rows.append(
            BlockCost(4, "network", j, 1, frames, 1, c, net.config.num_classes, 1,
                      downstream.total_macs, downstream.total_params)
        )
        _merge(excluded, downstream.excluded)
    return CostReport(label=f"instance-pooling I={persons}", rows=rows,
                      excluded=excluded, flops_per_mac=flops_per_mac)


def compare_networks(a: CostReport, b: CostReport) -> dict:
    """Paired comparison record: totals of *a* over *b*."""
    if b.total_macs == 0:
        raise ConfigError("cannot form a ratio against a zero-cost report")
    return {
        "numerator": a.label,
        "denominator": b.label,
        "macs_ratio": a.total_macs / b.total_macs,
        "params_ratio": (a.total_params / b.total_params) if b.total_params else None,
    }
