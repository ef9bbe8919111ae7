"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
report.  Tolerances and time budgets are pinned here; nothing is deferred
to later calibration.
"""

import time

import numpy as np
import pytest

from oracles import baseline_block_oracle
from skelet import diffcore as dc
from skelet.diffcore import MacCounter, Parameter, Tensor, check_gradients, mac_counting
from skelet.io import read_sequence, write_sequence
from skelet.mapping import (
    BlockConfig,
    contiguous_partition,
    expressive_partitions,
    grouped_mapping_block,
    init_downsample_matrix,
    make_block_params,
    transform_adjacency,
)
from skelet.network import (
    NetworkConfig,
    TrainConfig,
    build_network,
    forward_features,
    train,
)
from skelet.pooling import IPConfig
from skelet.profiler import count_flops, count_ip_flops
from skelet.selection import (
    SelectionConfig,
    compute_stats,
    motion_variance,
    protocol_keep_indices,
    rank_keypoints,
    select_expressive,
    video_variance,
)
from skelet.skeleton import (
    AdjacencyMatrix,
    KeypointLayout,
    SkeletonSequence,
    expressive_layout,
)


def report(n, text):
    print(f"ACCEPTANCE {n}: PASS - {text}")


def chain_layout(n):
    return KeypointLayout(
        f"custom{n}",
        tuple(f"kp{i}" for i in range(n)),
        tuple((i, i + 1) for i in range(n - 1)),
        ("body",) * n,
    )


def chain_adjacency(n):
    values = np.zeros((n, n))
    for j in range(1, n):
        values[j - 1, j] = values[j, j - 1] = 1.0
    return AdjacencyMatrix(values)


def test_criterion_1_baseline_block_equivalence():
    """Single-group identity-mapped block == straight-line reference, 1e-12."""
    start = time.time()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(120):
        joints = int(rng.integers(2, 8))
        frames = int(rng.integers(2, 7))
        chans = int(rng.integers(1, 6))
        cfg = BlockConfig(index=1, kind="normal", in_channels=chans, out_channels=chans, groups=1)
        params = make_block_params(cfg, joints, rng)
        for p in (params.graph_scale, params.graph_bias, params.temporal_scale, params.temporal_bias):
            p.assign(rng.standard_normal(p.shape))
        a = chain_adjacency(joints)
        x = rng.standard_normal((joints, frames, chans))
        ours = grouped_mapping_block(Tensor(x), a, cfg, params).data
        expected = baseline_block_oracle(
            x, a.values,
            params.graph_weights[0].value.data,
            params.graph_scale.value.data, params.graph_bias.value.data,
            params.shared_pointwise.value.data,
            params.temporal_kernel.value.data,
            params.temporal_scale.value.data, params.temporal_bias.value.data,
        )
        worst = max(worst, float(np.abs(ours - expected).max()))
    elapsed = time.time() - start
    assert worst < 1e-12, f"max deviation {worst}"
    assert elapsed < 1.0, f"took {elapsed:.2f}s (budget 1s)"
    report(1, f"120 random blocks match the straight-line oracle (max dev {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_2_partition_seeded_initialization():
    """Shipped 65->27 and 27->11 matrices: unit columns, supports match tables."""
    start = time.time()
    for partition in expressive_partitions():
        matrix = init_downsample_matrix(partition).param.value.data
        deviation = np.abs(matrix.sum(axis=0) - 1.0).max()
        assert deviation < 1e-12, f"column sums off by {deviation}"
        for k, part in enumerate(partition.parts):
            support = set(np.nonzero(matrix[:, k])[0].tolist())
            assert support == set(part), f"column {k} support {support} != part {sorted(part)}"
    elapsed = time.time() - start
    assert elapsed < 1.0
    report(2, f"65->27 and 27->11 seeded matrices verified ({elapsed:.2f}s)")


def test_criterion_3_adjacency_transform_properties():
    """Symmetry and non-negativity survive 1000 random transforms."""
    start = time.time()
    rng = np.random.default_rng(12)
    for _ in range(1000):
        joints = int(rng.integers(2, 12))
        sym = rng.uniform(0, 1, size=(joints, joints))
        sym = (sym + sym.T) / 2
        target = int(rng.integers(1, joints + 1))
        m = init_downsample_matrix(contiguous_partition(joints, target))
        m.param.assign(rng.uniform(0, 2, size=m.param.shape))
        out = transform_adjacency(AdjacencyMatrix(sym), m).values
        assert np.abs(out - out.T).max() < 1e-12
        assert (out >= 0).all()
    elapsed = time.time() - start
    assert elapsed < 5.0, f"took {elapsed:.2f}s (budget 5s)"
    report(3, f"1000 random symmetric inputs stayed symmetric and non-negative ({elapsed:.2f}s)")


def test_criterion_4_architecture_schedule():
    """Default per-block (J, T) trace matches the 10-block layout exactly."""
    start = time.time()
    cfg = NetworkConfig(num_classes=120)
    expected = [(65, 100)] * 4 + [(27, 50)] * 3 + [(11, 25)] * 3
    assert cfg.shape_schedule() == expected
    elapsed = time.time() - start
    assert elapsed < 1.0
    report(4, f"shape trace {expected[:1]}...{expected[-1:]} verified ({elapsed:.2f}s)")


def test_criterion_5_efficiency_ratio_and_flops_oracle():
    """Transform/baseline MAC ratio in [0.30, 0.50]; analytic == instrumented."""
    start = time.time()
    cfg = NetworkConfig(num_classes=120)
    layout = expressive_layout()
    parts = list(expressive_partitions())
    skel = build_network(cfg, layout, parts, skeleton_transform=True, seed=0)
    base = build_network(cfg, layout, None, skeleton_transform=False, seed=0)
    reports = {}
    rng = np.random.default_rng(13)
    x = Tensor(rng.standard_normal((65, 100, 3)))
    for name, net in (("skel", skel), ("base", base)):
        analytic = count_flops(net)
        counter = MacCounter()
        with mac_counting(counter):
            forward_features(net, x)
        assert counter.total_macs == analytic.total_macs, (
            f"{name}: instrumented {counter.total_macs} != analytic {analytic.total_macs}"
        )
        reports[name] = analytic
    ratio = reports["skel"].total_macs / reports["base"].total_macs
    assert 0.30 <= ratio <= 0.50, f"ratio {ratio:.4f} outside [0.30, 0.50]"
    elapsed = time.time() - start
    assert elapsed < 10.0, f"took {elapsed:.2f}s (budget 10s)"
    report(5, f"MAC ratio {ratio:.4f} in [0.30, 0.50]; counts match execution exactly ({elapsed:.2f}s)")


def test_criterion_6_gradient_suite():
    """Every differentiable op under 1e-4; end-to-end toy network under 1e-3."""
    start = time.time()
    rng = np.random.default_rng(14)

    def scalarize(x, tape, seed):
        w = Tensor(np.random.default_rng(seed).standard_normal(x.shape))
        flat = dc.reshape(dc.mul(x, w, tape), (1, x.size), tape)
        return dc.reshape(dc.matmul(flat, Tensor(np.ones((x.size, 1))), tape), (), tape)

    op_errors = {}

    def check(name, build, params):
        err = check_gradients(build, params)
        op_errors[name] = err
        assert err < 1e-4, f"{name}: rel err {err}"

    a = Parameter(rng.standard_normal((5, 4)))
    b = Parameter(rng.standard_normal((4, 3)))
    check("matmul", lambda t: scalarize(dc.matmul(a.value, b.value, t), t, 1), [a, b])

    x = Parameter(rng.standard_normal((3, 8, 2)))
    w = Parameter(rng.standard_normal((5, 2, 3)))
    check("conv1d_temporal/s1", lambda t: scalarize(dc.conv1d_temporal(x.value, w.value, 1, t), t, 2), [x, w])
    check("conv1d_temporal/s2", lambda t: scalarize(dc.conv1d_temporal(x.value, w.value, 2, t), t, 3), [x, w])

    r = Parameter(rng.standard_normal((4, 5)) + 0.2)
    check("relu", lambda t: scalarize(dc.relu(r.value, t), t, 4), [r])

    small = Parameter(rng.standard_normal((1, 3, 4, 2)))
    big = Parameter(rng.standard_normal((5, 3, 4, 2)))
    check("add/broadcast", lambda t: scalarize(dc.add(small.value, big.value, t), t, 5), [small, big])

    g = Parameter(rng.standard_normal(6))
    h = Parameter(rng.standard_normal((4, 3, 6)))
    check("mul/broadcast", lambda t: scalarize(dc.mul(h.value, g.value, t), t, 6), [g, h])

    m = Parameter(rng.standard_normal((5, 3)))
    xc = Parameter(rng.standard_normal((5, 4, 2)))
    check("joint_contract", lambda t: scalarize(dc.joint_contract(m.value, xc.value, t), t, 7), [m, xc])

    d = Parameter(rng.standard_normal(4))
    xs = Parameter(rng.standard_normal((4, 3, 2)))
    check("scale_joints", lambda t: scalarize(dc.scale_joints(d.value, xs.value, t), t, 8), [d, xs])

    pw = Parameter(rng.standard_normal((3, 7)))
    xp = Parameter(rng.standard_normal((4, 5, 3)))
    check("pointwise", lambda t: scalarize(dc.pointwise(xp.value, pw.value, t), t, 9), [pw, xp])

    xsl = Parameter(rng.standard_normal((3, 4, 6)))
    check("slice_channels", lambda t: scalarize(dc.slice_channels(xsl.value, 2, 3, t), t, 10), [xsl])
    check("stride_frames", lambda t: scalarize(dc.stride_frames(xsl.value, 2, t), t, 11), [xsl])
    check(
        "concat_channels",
        lambda t: scalarize(
            dc.concat_channels([dc.slice_channels(xsl.value, 0, 2, t), dc.slice_channels(xsl.value, 2, 4, t)], t),
            t,
            12,
        ),
        [xsl],
    )
    check("reshape", lambda t: scalarize(dc.reshape(xsl.value, (12, 6), t), t, 13), [xsl])
    check("transpose", lambda t: scalarize(dc.transpose(xsl.value, (2, 0, 1), t), t, 14), [xsl])
    check("mean_joints_frames", lambda t: scalarize(dc.mean_joints_frames(xsl.value, t), t, 15), [xsl])

    xm = Parameter(rng.standard_normal((4, 3, 2, 5)))
    check("max_instances", lambda t: scalarize(dc.max_instances(xm.value, t), t, 16), [xm])

    logits = Parameter(rng.standard_normal(6))
    check("softmax_cross_entropy", lambda t: dc.softmax_cross_entropy(logits.value, 2, t), [logits])

    # End-to-end toy network.
    cfg = NetworkConfig(
        num_classes=3, channels=(4, 8, 8), downsample_blocks=(2,), joints=(6, 3),
        groups=(1, 2), frames=6, in_channels=2,
    )
    net = build_network(cfg, chain_layout(6), [contiguous_partition(6, 3)], seed=6)
    xin = Tensor(np.random.default_rng(7).standard_normal((6, 6, 2)))

    def net_loss(tape):
        return dc.softmax_cross_entropy(forward_features(net, xin, tape), 1, tape)

    end_to_end = check_gradients(net_loss, net.parameters())
    assert end_to_end < 1e-3, f"end-to-end rel err {end_to_end}"
    elapsed = time.time() - start
    assert elapsed < 60.0, f"took {elapsed:.2f}s (budget 60s)"
    worst_op = max(op_errors.values())
    report(6, f"{len(op_errors)} ops under 1e-4 (worst {worst_op:.2e}); end-to-end {end_to_end:.2e} ({elapsed:.1f}s)")


def test_criterion_7_desk_scale_learning():
    """95% training accuracy on the seeded 4-class corpus; smoothed loss never rises."""
    start = time.time()
    rng = np.random.default_rng(0)
    classes, joints, frames = 4, 12, 16
    base = rng.standard_normal((classes, joints, frames, 2))
    dataset = []
    for i in range(64):
        label = i % classes
        coords = base[label] + 0.05 * rng.standard_normal((joints, frames, 2))
        sample = np.concatenate([coords, np.ones((joints, frames, 1))], axis=2)
        dataset.append(SkeletonSequence(data=sample[None], layout_id="custom12", label=label))

    cfg = NetworkConfig(
        num_classes=4, channels=(8, 16, 16), downsample_blocks=(2, 3), joints=(12, 6, 3),
        groups=(1, 2, 4), frames=16, in_channels=3,
    )
    parts = [contiguous_partition(12, 6), contiguous_partition(6, 3)]
    net = build_network(cfg, chain_layout(12), parts, skeleton_transform=True, seed=0)
    # Pure overfit check: decay off so the loss floor cannot drift upward.
    tc = TrainConfig(epochs=40, batch_size=8, learning_rate=0.05, weight_decay=0.0, seed=0)
    log = train(net, dataset, tc)
    accuracy = log[-1]["accuracy"]
    assert accuracy >= 0.95, f"train accuracy {accuracy}"
    assert len(log) <= 200
    losses = np.array([row["loss"] for row in log])
    ma = np.convolve(losses, np.ones(10) / 10, mode="valid")
    bumps = np.diff(ma)
    assert (bumps <= 0).all(), f"moving average rose by {bumps.max()}"
    elapsed = time.time() - start
    assert elapsed < 300.0, f"took {elapsed:.1f}s (budget 300s)"
    report(7, f"accuracy {accuracy:.3f} after {len(log)} epochs; smoothed loss monotone ({elapsed:.1f}s)")


def test_criterion_8_instance_pooling_scaling():
    """Downstream cost is person-independent; pooled 10-person run beats 2x late fusion."""
    start = time.time()
    ip = IPConfig(max_persons=10, joints=65, in_channels=3, channels=64)
    layout = expressive_layout()
    parts = list(expressive_partitions())
    embedded = build_network(
        NetworkConfig(num_classes=120, in_channels=ip.channels), layout, parts, seed=0
    )
    raw = build_network(NetworkConfig(num_classes=120, in_channels=3), layout, parts, seed=0)
    one = count_ip_flops(ip, 1, 100, net=embedded)
    ten = count_ip_flops(ip, 10, 100, net=embedded)
    assert one.rows[-1].kind == "network" and ten.rows[-1].kind == "network"
    assert one.rows[-1].macs == ten.rows[-1].macs
    with_ip = ten.total_macs
    without_ip = 2 * count_flops(raw).total_macs
    assert with_ip < without_ip, f"{with_ip} !< {without_ip}"
    elapsed = time.time() - start
    assert elapsed < 1.0, f"took {elapsed:.2f}s (budget 1s)"
    report(
        8,
        f"downstream MACs person-independent; pooled@10 {with_ip:,} < late-fusion@2 {without_ip:,} ({elapsed:.2f}s)",
    )


def test_criterion_9_keypoint_statistics():
    """Face block tops the removal ranking; metrics exactly invariant."""
    start = time.time()
    videos, frames = 4, 4
    dataset = []
    for s in range(videos):
        coords = np.zeros((133, frames, 2))
        for t in range(frames):
            coords[:23, t, 0] = t
            coords[91:, t, 0] = 2 * t
        coords[23:91, :, 0] = 4.0 * s
        dataset.append(SkeletonSequence(data=coords[None], layout_id="wholebody"))

    stats = compute_stats(dataset)
    rows = rank_keypoints(stats)
    top = {r.index for r in rows[:68]}
    assert top == set(range(23, 91)), "face block must fill the top-68 removal candidates"

    offset = np.array([16.0, -8.0])
    moved = [SkeletonSequence(data=seq.data + offset, layout_id="wholebody") for seq in dataset]
    np.testing.assert_array_equal(video_variance(dataset), video_variance(moved))
    from skelet.skeleton import wholebody_layout

    layout = wholebody_layout()
    cfg = SelectionConfig()
    np.testing.assert_array_equal(
        motion_variance(dataset, cfg, layout), motion_variance(moved, cfg, layout)
    )

    unit = SelectionConfig(area_scale={"body": 1.0, "face": 1.0, "hand": 1.0, "foot": 1.0})
    doubled = SelectionConfig(area_scale={"body": 2.0, "face": 2.0, "hand": 2.0, "foot": 2.0})
    np.testing.assert_array_equal(
        motion_variance(dataset, unit, layout) / 2.0, motion_variance(dataset, doubled, layout)
    )
    elapsed = time.time() - start
    assert elapsed < 10.0, f"took {elapsed:.2f}s (budget 10s)"
    report(9, f"face top-68, exact translation invariance and scale homogeneity ({elapsed:.2f}s)")


def test_criterion_10_format_round_trips(tmp_path):
    """Bit-exact containers; 133->65 selection with the documented remap."""
    start = time.time()
    rng = np.random.default_rng(15)
    data = rng.standard_normal((2, 133, 3, 3))
    data[..., 2] = rng.uniform(0, 1, size=data[..., 2].shape)
    seq = SkeletonSequence(data=data, layout_id="wholebody", label=5)
    path = tmp_path / "roundtrip.skl"
    write_sequence(seq, path)
    back = read_sequence(path)
    assert (back.data == seq.data).all() and back.label == 5

    from skelet.io import load_network_params, save_network_params

    cfg = NetworkConfig(
        num_classes=3, channels=(4, 8), downsample_blocks=(2,), joints=(6, 3),
        groups=(1, 2), frames=8, in_channels=2,
    )
    net = build_network(cfg, chain_layout(6), [contiguous_partition(6, 3)], seed=1)
    container = tmp_path / "net.sknet"
    save_network_params(net, container)
    twin = build_network(cfg, chain_layout(6), [contiguous_partition(6, 3)], seed=2)
    load_network_params(twin, container)
    for (_, pa), (_, pb) in zip(net.named_parameters(), twin.named_parameters()):
        assert (pa.value.data == pb.value.data).all()

    single = SkeletonSequence(data=seq.data[:1], layout_id="wholebody", label=5)
    selected = select_expressive(single)
    assert selected.joints == 65
    keep = protocol_keep_indices("wo-face")
    assert keep[:23] == list(range(23)) and keep[23:] == list(range(91, 133))
    np.testing.assert_array_equal(selected.data[0], single.data[0, keep])
    elapsed = time.time() - start
    assert elapsed < 1.0, f"took {elapsed:.2f}s (budget 1s)"
    report(10, f"sequence and parameter containers bit-exact; 133->65 remap verified ({elapsed:.2f}s)")
