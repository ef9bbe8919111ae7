"""Independent straight-line reference implementations used as test oracles.

Everything here is deliberately written against plain ndarrays with einsum
and explicit loops, sharing no code with the package's op layer.
"""

import math

import numpy as np


def rownorm_with_self_links(adjacency: np.ndarray) -> np.ndarray:
    linked = adjacency + np.eye(adjacency.shape[0])
    return linked / linked.sum(axis=1, keepdims=True)


def temporal_conv_oracle(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    """Loop-based centered 1-D convolution with zero padding."""
    j, t, _ = x.shape
    k, _, c_out = w.shape
    pad = (k - 1) // 2
    t_out = math.ceil(t / stride)
    out = np.zeros((j, t_out, c_out))
    for tt in range(t_out):
        for u in range(k):
            src = tt * stride + u - pad
            if 0 <= src < t:
                out[:, tt, :] += x[:, src, :] @ w[u]
    return out


def baseline_block_oracle(
    x: np.ndarray,
    adjacency: np.ndarray,
    graph_weight: np.ndarray,
    graph_scale: np.ndarray,
    graph_bias: np.ndarray,
    shared: np.ndarray,
    kernel: np.ndarray,
    temporal_scale: np.ndarray,
    temporal_bias: np.ndarray,
    stride: int = 1,
    residual_projection: np.ndarray | None = None,
) -> np.ndarray:
    """Single-group reference block: graph conv, pointwise, activation,
    temporal conv, residual."""
    a_hat = rownorm_with_self_links(adjacency)
    g = np.einsum("ij,jtc->itc", a_hat, x)
    g = np.einsum("jtc,cd->jtd", g, graph_weight)
    g = g * graph_scale + graph_bias
    y = np.einsum("jtc,cd->jtd", g, shared)
    y = np.maximum(y, 0.0)
    y = temporal_conv_oracle(y, kernel, stride)
    y = y * temporal_scale + temporal_bias
    res = x[:, ::stride, :] if stride == 2 else x
    if residual_projection is not None:
        res = np.einsum("jtc,cd->jtd", res, residual_projection)
    return y + res


def contraction_oracle(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Triple-loop joint contraction: out[k,t,c] = sum_j m[j,k] x[j,t,c]."""
    j_in, j_out = m.shape
    _, t, c = x.shape
    out = np.zeros((j_out, t, c))
    for k in range(j_out):
        for j in range(j_in):
            for tt in range(t):
                out[k, tt, :] += m[j, k] * x[j, tt, :]
    return out


def partition_matrix_oracle(partition) -> np.ndarray:
    m = np.zeros((partition.source_count, partition.target_count))
    for k, part in enumerate(partition.parts):
        for j in part:
            m[j, k] = 1.0 / len(part)
    return m


def network_forward_oracle(net, x: np.ndarray) -> np.ndarray:
    """Full-network forward re-derived with einsum and loops.

    Stage adjacencies are rebuilt from the partitions here; only parameter
    values and the raw stage-0 adjacency are taken from the network object.
    """
    cfg = net.config
    stage_raw = [net.stage_adjacency[0].values.copy()]
    if net.skeleton_transform:
        for block_cfg, _ in net.blocks:
            if block_cfg.kind == "downsample":
                fresh = partition_matrix_oracle(block_cfg.partition)
                stage_raw.append(fresh.T @ stage_raw[-1] @ fresh)

    h = x.copy()
    stage = 0
    for block_cfg, params in net.blocks:
        source = stage_raw[stage] if net.skeleton_transform else stage_raw[0]
        if block_cfg.kind == "downsample":
            fresh = partition_matrix_oracle(block_cfg.partition)
            graph_raw = fresh.T @ source @ fresh
            stage += 1
        else:
            graph_raw = source
        a_hat = rownorm_with_self_links(graph_raw)

        k = block_cfg.groups
        width_in = block_cfg.in_channels // k
        pieces = []
        for g in range(k):
            hg = h[..., g * width_in : (g + 1) * width_in]
            if params.mappings:
                m = params.mappings[g]
                if m.kind == "downsample":
                    hg = np.einsum("jk,jtc->ktc", m.param.value.data, hg)
                else:
                    hg = m.param.value.data[:, None, None] * hg
            hg = np.einsum("ij,jtc->itc", a_hat, hg)
            hg = np.einsum("jtc,cd->jtd", hg, params.graph_weights[g].value.data)
            pieces.append(hg)
        y = np.concatenate(pieces, axis=-1)
        y = y * params.graph_scale.value.data + params.graph_bias.value.data
        if block_cfg.pointwise_before_activation:
            y = np.einsum("jtc,cd->jtd", y, params.shared_pointwise.value.data)
            y = np.maximum(y, 0.0)
        else:
            y = np.maximum(y, 0.0)
            y = np.einsum("jtc,cd->jtd", y, params.shared_pointwise.value.data)
        y = temporal_conv_oracle(y, params.temporal_kernel.value.data, block_cfg.temporal_stride)
        y = y * params.temporal_scale.value.data + params.temporal_bias.value.data

        res = h[:, :: block_cfg.temporal_stride, :] if block_cfg.temporal_stride == 2 else h
        if block_cfg.kind == "downsample":
            chunks = []
            for g in range(k):
                m = params.mappings[g]
                chunks.append(
                    np.einsum("jk,jtc->ktc", m.param.value.data, res[..., g * width_in : (g + 1) * width_in])
                )
            res = np.concatenate(chunks, axis=-1)
        if params.residual_projection is not None:
            res = np.einsum("jtc,cd->jtd", res, params.residual_projection.value.data)
        h = y + res

    pooled = h.mean(axis=(0, 1))
    return pooled @ net.classifier_weight.value.data + net.classifier_bias.value.data
