"""Command-line surface: stats, select, profile, infer, train, gradcheck,
partition-check.

Every command exits 0 on success.  Failures map to categorized codes:
2 for configuration/usage errors, 3 for data/format errors, 4 for numeric
errors.  All stochastic commands take an explicit ``--seed``, and with a
fixed configuration and seed the machine-readable outputs are
byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .errors import (
    ConfigError,
    FormatError,
    InsufficientDataError,
    LayoutError,
    NumericError,
    ParseError,
    PartitionError,
    ShapeError,
    SkeletError,
)
from .io import RunConfig, import_keypoint_json, load_network_params, read_sequence, save_network_params, write_sequence
from .mapping import (
    contiguous_partition,
    expressive_partitions,
    fresh_downsample_values,
    init_downsample_matrix,
    load_partition_table,
)
from .network import NetworkConfig, TrainConfig, build_network, forward, late_fusion_forward, train
from .pooling import IPConfig
from .profiler import compare_networks, count_flops, count_ip_flops
from .selection import (
    PROTOCOLS,
    SelectionConfig,
    compute_stats,
    format_rank_table,
    protocol_keep_indices,
    rank_keypoints,
    select_keypoints,
)
from .skeleton import KeypointLayout, expressive_layout, load_edge_table, wholebody_layout

_TOY_OVERRIDES = {
    "network.channels": (8, 16, 16),
    "network.downsample_blocks": (2, 3),
    "network.joints": (12, 6, 3),
    "network.groups": (1, 2, 4),
    "network.num_classes": 4,
    "network.frames": 16,
    "train.epochs": 200,
    "train.batch_size": 8,
    "train.learning_rate": 0.05,
}


# Only path-valued keys may be overridden from the environment.
_ENV_OVERRIDES = {
    "SKELET_PATHS_EDGES": "paths.edges",
    "SKELET_PATHS_PARTITIONS": "paths.partitions",
}


def resolve_config(source: str | None) -> RunConfig:
    """A run config from a file path or a named preset ('default', 'toy')."""
    if source is None or source == "default":
        cfg = RunConfig()
    elif source == "toy":
        cfg = RunConfig()
        for key, value in _TOY_OVERRIDES.items():
            cfg.set(key, value)
    else:
        cfg = RunConfig.load(source)
    for env, key in _ENV_OVERRIDES.items():
        if env in os.environ:
            cfg.set(key, os.environ[env])
    return cfg


def _chain_layout(joints: int) -> KeypointLayout:
    return KeypointLayout(
        layout_id=f"custom{joints}",
        names=tuple(f"kp{i}" for i in range(joints)),
        edges=tuple((i, i + 1) for i in range(joints - 1)),
        regions=("body",) * joints,
    )


def network_config_from(rc: RunConfig) -> NetworkConfig:
    return NetworkConfig(
        num_classes=rc["network.num_classes"],
        channels=rc["network.channels"],
        downsample_blocks=rc["network.downsample_blocks"],
        joints=rc["network.joints"],
        groups=rc["network.groups"],
        group_expand=rc["network.group_expand"],
        temporal_kernel=rc["network.temporal_kernel"],
        in_channels=rc["network.in_channels"],
        frames=rc["network.frames"],
        adjacency_norm=rc["network.adjacency_norm"],
        pointwise_before_activation=rc["network.pointwise_before_activation"],
    )


def layout_and_partitions(rc: RunConfig):
    cfg = network_config_from(rc)
    if rc["paths.edges"]:
        edges = load_edge_table(rc["paths.edges"])
        layout = KeypointLayout(
            layout_id=f"custom{cfg.joints[0]}",
            names=tuple(f"kp{i}" for i in range(cfg.joints[0])),
            edges=edges,
            regions=("body",) * cfg.joints[0],
        )
    elif cfg.joints[0] == 65:
        layout = expressive_layout()
    elif cfg.joints[0] == 133:
        layout = wholebody_layout()
    else:
        layout = _chain_layout(cfg.joints[0])
    if rc["paths.partitions"]:
        partitions = [load_partition_table(p.strip()) for p in rc["paths.partitions"].split(",")]
    elif cfg.joints == (65, 27, 11):
        partitions = list(expressive_partitions())
    else:
        partitions = [contiguous_partition(a, b) for a, b in zip(cfg.joints, cfg.joints[1:])]
    return cfg, layout, partitions


def _selection_config(rc: RunConfig) -> SelectionConfig:
    return SelectionConfig(
        drop_ranges=rc["select.drop_ranges"],
        area_scale={
            "body": rc["select.area_scale.body"],
            "face": rc["select.area_scale.face"],
            "hand": rc["select.area_scale.hand"],
            "foot": rc["select.area_scale.foot"],
        },
    )


def _load_dataset(root: str) -> list:
    paths = sorted(Path(root).glob("*.skl"))
    if not paths:
        raise ConfigError(f"no .skl sequence files under {root}")
    return [read_sequence(p) for p in paths]


# ---------------------------------------------------------------------------
# Commands

def cmd_stats(args) -> int:
    rc = resolve_config(args.config)
    dataset = _load_dataset(args.dataset)
    layout = wholebody_layout() if dataset[0].joints == 133 else _chain_layout(dataset[0].joints)
    stats = compute_stats(dataset, _selection_config(rc), layout)
    rows = rank_keypoints(stats, layout)
    table = format_rank_table(rows)
    if args.out:
        Path(args.out).write_text(table + "\n")
    else:
        print(table)
    return 0


def cmd_select(args) -> int:
    if args.protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {args.protocol!r}; known: {sorted(PROTOCOLS)}")
    seq = import_keypoint_json(args.input) if args.input.endswith(".jsonl") else read_sequence(args.input)
    keep = protocol_keep_indices(args.protocol)
    layout_id = "expressive" if args.protocol == "wo-face" else f"custom{len(keep)}"
    if args.protocol == "wholebody":
        layout_id = "wholebody"
    out = select_keypoints(seq, keep, layout_id)
    write_sequence(out, args.output)
    print(f"selected {out.joints} of {seq.joints} keypoints -> {args.output}")
    return 0


def _build_from(rc: RunConfig, skeleton_transform: bool, seed: int):
    cfg, layout, partitions = layout_and_partitions(rc)
    return build_network(
        cfg, layout, partitions if skeleton_transform else None,
        skeleton_transform=skeleton_transform, seed=seed,
    )


def cmd_profile(args) -> int:
    rc = resolve_config(args.config)
    frames = args.frames or rc["network.frames"]
    reports = []
    if args.skeleton_transform in ("on", "both"):
        reports.append(count_flops(_build_from(rc, True, 0), frames=frames, flops_per_mac=args.flops_per_mac))
    if args.skeleton_transform in ("off", "both"):
        reports.append(count_flops(_build_from(rc, False, 0), frames=frames, flops_per_mac=args.flops_per_mac))
    records = []
    for report in reports:
        print(report.to_text())
        print()
        records.extend(report.to_records())
    if len(reports) == 2:
        ratio = compare_networks(reports[0], reports[1])
        print(
            f"ratio {ratio['numerator']}/{ratio['denominator']}: "
            f"MACs {ratio['macs_ratio']:.4f}, params {ratio['params_ratio']:.4f}"
        )
        records.append(json.dumps({"kind": "ratio", **ratio}, sort_keys=True))
    if args.persons:
        ip = IPConfig(
            max_persons=max(args.persons, rc["ip.max_persons"]),
            joints=rc["network.joints"][0],
            in_channels=rc["network.in_channels"],
            channels=rc["ip.channels"],
        )
        ip_report = count_ip_flops(ip, args.persons, frames)
        print(ip_report.to_text())
        records.extend(ip_report.to_records())
    if args.jsonl:
        Path(args.jsonl).write_text("\n".join(records) + "\n")
    return 0


def cmd_infer(args) -> int:
    rc = resolve_config(args.config)
    net = _build_from(rc, rc["network.skeleton_transform"], seed=0)
    load_network_params(net, args.params)
    seq = read_sequence(args.input)
    logits = forward(net, seq) if seq.persons == 1 else late_fusion_forward(net, seq)
    shifted = logits.data - logits.data.max()
    probs = np.exp(shifted) / np.exp(shifted).sum()
    result = {
        "predicted_class": int(np.argmax(logits.data)),
        "logits": [float(v) for v in logits.data],
        "probabilities": [float(v) for v in probs],
    }
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    rc = resolve_config(args.config)
    dataset = _load_dataset(args.dataset)
    net = _build_from(rc, rc["network.skeleton_transform"], seed=args.seed)
    tc = TrainConfig(
        epochs=args.epochs or rc["train.epochs"],
        batch_size=rc["train.batch_size"],
        learning_rate=rc["train.learning_rate"],
        momentum=rc["train.momentum"],
        weight_decay=rc["train.weight_decay"],
        cosine_annealing=rc["train.cosine_annealing"],
        seed=args.seed,
    )
    log = train(net, dataset, tc)
    save_network_params(net, args.out)
    if args.log:
        Path(args.log).write_text("\n".join(json.dumps(row, sort_keys=True) for row in log) + "\n")
    last = log[-1]
    print(f"trained {tc.epochs} epochs: loss {last['loss']:.6f}, accuracy {last['accuracy']:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    rc = resolve_config(args.config)
    net = _build_from(rc, rc["network.skeleton_transform"], seed=args.seed)
    cfg = net.config
    rng = np.random.default_rng(args.seed)
    x = dc.Tensor(rng.standard_normal((cfg.joints[0], cfg.frames, cfg.in_channels)))
    label = int(rng.integers(cfg.num_classes))

    def loss(tape):
        from .network import forward_features

        return dc.softmax_cross_entropy(forward_features(net, x, tape), label, tape)

    err = dc.check_gradients(loss, net.parameters())
    print(f"max relative gradient error: {err:.3e} (tolerance {args.tolerance:.1e})")
    return 0 if err <= args.tolerance else 4


def cmd_partition_check(args) -> int:
    if args.tables:
        partitions = [load_partition_table(p) for p in args.tables]
    else:
        partitions = list(expressive_partitions())
    previous_target = None
    for idx, partition in enumerate(partitions):
        if previous_target is not None and partition.source_count != previous_target:
            raise PartitionError(
                f"table {idx} starts at {partition.source_count} joints, previous ended at {previous_target}"
            )
        matrix = init_downsample_matrix(partition).param.value.data
        sums = matrix.sum(axis=0)
        if np.abs(sums - 1.0).max() > 1e-12:
            raise PartitionError(f"table {idx}: column sums deviate from 1 by {np.abs(sums - 1.0).max():.3e}")
        fresh = fresh_downsample_values(partition)
        if ((matrix != 0) != (fresh != 0)).any():
            raise PartitionError(f"table {idx}: matrix support does not match the partition")
        print(
            f"partition {idx}: {partition.source_count} -> {partition.target_count} joints, "
            f"{len(partition.parts)} parts, column sums ok"
        )
        previous_target = partition.target_count
    print("all partition tables ok")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skelet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-keypoint video/motion variance report")
    p.add_argument("dataset", help="directory of .skl sequence files")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="write the TSV table here instead of stdout")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("select", help="apply a keypoint selection protocol")
    p.add_argument("input", help=".skl sequence or .jsonl keypoint records")
    p.add_argument("output", help="output .skl path")
    p.add_argument("--protocol", default="wo-face", choices=sorted(PROTOCOLS))
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("profile", help="analytic MAC/parameter report")
    p.add_argument("--config", default=None)
    p.add_argument("--skelet", dest="skeleton_transform", default="both", choices=["on", "off", "both"])
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--persons", type=int, default=0, help="also report the pooling front end for this many persons")
    p.add_argument("--flops-per-mac", type=int, default=1, choices=[1, 2])
    p.add_argument("--jsonl", default=None, help="write machine-readable records here")
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("infer", help="classify one sequence file")
    p.add_argument("input")
    p.add_argument("--config", default=None)
    p.add_argument("--params", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("train", help="train on a directory of labeled sequences")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="parameter container output path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--log", default=None, help="write per-epoch JSONL log here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full network gradient")
    p.add_argument("--config", default="toy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("partition-check", help="validate partition tables and their seeded matrices")
    p.add_argument("tables", nargs="*", help="partition table paths (default: packaged tables)")
    p.set_defaults(fn=cmd_partition_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (LayoutError, PartitionError, ShapeError, FormatError, ParseError, InsufficientDataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except SkeletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
