"""Dense float64 tensors with explicit per-operation backward rules.

Every learnable computation in this package is expressed through the small
op set below.  Forward results are recorded on an explicit :class:`Tape` of
:class:`OpRecord` entries; ``Tape.backward`` walks the records in reverse and
dispatches each one through a static backward registry.  There is no general
expression compiler: the networks built on top are fixed DAGs, so a flat tape
is all the machinery required.

All arithmetic is 64-bit.  Tensors are immutable once created (the backing
array is marked read-only), which makes read-only sharing across threads safe
and keeps the finite-difference checker honest: perturbing a parameter means
swapping in a fresh tensor, never editing one in place.

A :class:`MacCounter` can be installed around any forward pass to tally the
multiply-accumulate count of each executed op; the analytic profiler is
required to agree with this instrumented count exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

__all__ = [
    "Tensor",
    "Parameter",
    "OpRecord",
    "Tape",
    "MacCounter",
    "mac_counting",
    "matmul",
    "pointwise",
    "joint_contract",
    "scale_joints",
    "conv1d_temporal",
    "relu",
    "add",
    "mul",
    "reshape",
    "transpose",
    "slice_channels",
    "stride_frames",
    "concat_channels",
    "mean_joints_frames",
    "max_instances",
    "softmax_cross_entropy",
    "check_gradients",
]


class Tensor:
    """An immutable dense array of 64-bit floats in row-major order."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt an array the caller owns, without copying."""
        t = object.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        t.data = arr
        return t

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Parameter:
    """A learnable tensor plus its gradient accumulator."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = True):
        self.value = as_tensor(value)
        self.grad = Tensor.zeros(self.value.shape)
        self.requires_grad = requires_grad

    def zero_grad(self) -> None:
        self.grad = Tensor.zeros(self.value.shape)

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.value.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {self.value.shape}")
        self.grad = Tensor._wrap(self.grad.data + g)

    def assign(self, values: np.ndarray) -> None:
        """Replace the value with a fresh tensor (training step / perturbation)."""
        if values.shape != self.value.shape:
            raise ShapeError(f"new value shape {values.shape} != parameter shape {self.value.shape}")
        self.value = Tensor._wrap(np.array(values, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


@dataclass
class OpRecord:
    """One executed forward op: enough to replay it and to run its backward."""

    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    args: dict = field(default_factory=dict)
    saved: dict = field(default_factory=dict)


class Tape:
    """Append-only record of forward ops, replayed in reverse for gradients."""

    def __init__(self):
        self.records: list[OpRecord] = []

    def record(self, kind, inputs, output, args=None, saved=None) -> None:
        self.records.append(OpRecord(kind, tuple(inputs), output, args or {}, saved or {}))

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Return gradients keyed by ``id`` of every tensor reachable from *loss*.

        The loss must be a single-element tensor produced on this tape.  Each
        tensor is the output of at most one record, so popping the output
        gradient when its record is processed is safe; tensors consumed by
        several later ops accumulate all contributions first.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=np.float64)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            for tensor, gi in zip(rec.inputs, _BACKWARD[rec.kind](rec, g)):
                if gi is None:
                    continue
                acc = grads.get(id(tensor))
                grads[id(tensor)] = gi if acc is None else acc + gi
        return grads

    def replay(self, rec: OpRecord) -> Tensor:
        """Re-run a record's forward rule on its saved inputs."""
        return _FORWARD[rec.kind](*(t.data for t in rec.inputs), **rec.args)


# ---------------------------------------------------------------------------
# MAC counting

class MacCounter:
    """Tallies multiply-accumulate work of ops executed while installed.

    Multiplies fused with an accumulate (matrix products, convolutions,
    per-element scales) count as MACs.  Plain additions, activations, and
    pooling comparisons are tallied separately in ``extras`` and excluded
    from the MAC total.
    """

    def __init__(self):
        self.macs_by_kind: dict[str, int] = {}
        self.extras: dict[str, int] = {}

    def add_macs(self, kind: str, n: int) -> None:
        self.macs_by_kind[kind] = self.macs_by_kind.get(kind, 0) + int(n)

    def add_extra(self, kind: str, n: int) -> None:
        self.extras[kind] = self.extras.get(kind, 0) + int(n)

    @property
    def total_macs(self) -> int:
        return sum(self.macs_by_kind.values())


_ACTIVE_COUNTER: MacCounter | None = None


class mac_counting:
    """Context manager installing a :class:`MacCounter` for the enclosed ops."""

    def __init__(self, counter: MacCounter):
        self.counter = counter

    def __enter__(self) -> MacCounter:
        global _ACTIVE_COUNTER
        self._previous = _ACTIVE_COUNTER
        _ACTIVE_COUNTER = self.counter
        return self.counter

    def __exit__(self, *exc) -> None:
        global _ACTIVE_COUNTER
        _ACTIVE_COUNTER = self._previous


def _count_macs(kind: str, n: int) -> None:
    if _ACTIVE_COUNTER is not None:
        _ACTIVE_COUNTER.add_macs(kind, n)


def _count_extra(kind: str, n: int) -> None:
    if _ACTIVE_COUNTER is not None:
        _ACTIVE_COUNTER.add_extra(kind, n)


# ---------------------------------------------------------------------------
# Forward rules (pure ndarray -> ndarray) and backward rules.
#
# Backward rules receive the OpRecord and the upstream gradient and return one
# gradient (or None) per input, in input order.

_FORWARD: dict[str, Callable] = {}
_BACKWARD: dict[str, Callable] = {}


def _op(kind: str, forward: Callable, backward: Callable) -> None:
    _FORWARD[kind] = forward
    _BACKWARD[kind] = backward


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum *g* over axes that were broadcast relative to *shape*."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _finish(kind, out_arr, inputs, tape, args=None, saved=None) -> Tensor:
    out = Tensor._wrap(out_arr)
    if tape is not None:
        tape.record(kind, inputs, out, args, saved)
    return out


# -- matmul -----------------------------------------------------------------

def _matmul_fwd(a, b):
    return a @ b


def _matmul_bwd(rec, g):
    a, b = (t.data for t in rec.inputs)
    return g @ b.T, a.T @ g


_op("matmul", _matmul_fwd, _matmul_bwd)


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    _count_macs("matmul", a.shape[0] * a.shape[1] * b.shape[1])
    return _finish("matmul", _matmul_fwd(a.data, b.data), (a, b), tape)


# -- pointwise channel map ---------------------------------------------------

def _pointwise_fwd(x, w):
    return x @ w


def _pointwise_bwd(rec, g):
    x, w = (t.data for t in rec.inputs)
    gx = g @ w.T
    gw = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return gx, gw


_op("pointwise", _pointwise_fwd, _pointwise_bwd)


def pointwise(x: Tensor, w: Tensor, tape: Tape | None = None) -> Tensor:
    """Linear map over the trailing channel axis: out[..., c'] = sum_c x[..., c] w[c, c']."""
    if w.data.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"pointwise channel mismatch: x {x.shape} vs w {w.shape}")
    _count_macs("pointwise", (x.size // x.shape[-1]) * w.shape[0] * w.shape[1])
    return _finish("pointwise", _pointwise_fwd(x.data, w.data), (x, w), tape)


# -- joint contraction --------------------------------------------------------

def _joint_contract_fwd(m, x):
    return np.einsum("jk,j...->k...", m, x, optimize=True)


def _joint_contract_bwd(rec, g):
    m, x = (t.data for t in rec.inputs)
    gm = np.einsum("j...,k...->jk", x, g, optimize=True)
    gx = np.einsum("jk,k...->j...", m, g, optimize=True)
    return gm, gx


_op("joint_contract", _joint_contract_fwd, _joint_contract_bwd)


def joint_contract(m: Tensor, x: Tensor, tape: Tape | None = None) -> Tensor:
    """Contract the leading joint axis: out[k, ...] = sum_j m[j, k] x[j, ...].

    Carries both learnable downsampling maps (gradient flows into *m*) and
    constant adjacency applications (pass the transposed adjacency as *m*).
    """
    if m.data.ndim != 2:
        raise ShapeError(f"joint_contract matrix must be rank 2, got {m.shape}")
    if x.shape[0] != m.shape[0]:
        raise ShapeError(f"joint axes disagree: matrix {m.shape} vs features {x.shape}")
    _count_macs("joint_contract", m.shape[0] * m.shape[1] * (x.size // x.shape[0]))
    return _finish("joint_contract", _joint_contract_fwd(m.data, x.data), (m, x), tape)


# -- per-joint diagonal scaling -----------------------------------------------

def _scale_joints_fwd(d, x):
    return d.reshape((-1,) + (1,) * (x.ndim - 1)) * x


def _scale_joints_bwd(rec, g):
    d, x = (t.data for t in rec.inputs)
    gd = (g * x).sum(axis=tuple(range(1, x.ndim)))
    gx = d.reshape((-1,) + (1,) * (x.ndim - 1)) * g
    return gd, gx


_op("scale_joints", _scale_joints_fwd, _scale_joints_bwd)


def scale_joints(d: Tensor, x: Tensor, tape: Tape | None = None) -> Tensor:
    """Multiply each leading-axis slice by its diagonal weight: out[j] = d[j] x[j]."""
    if d.data.ndim != 1 or d.shape[0] != x.shape[0]:
        raise ShapeError(f"diagonal length {d.shape} does not match joint axis of {x.shape}")
    _count_macs("scale_joints", x.size)
    return _finish("scale_joints", _scale_joints_fwd(d.data, x.data), (d, x), tape)


# -- temporal convolution -----------------------------------------------------

def _conv1d_fwd(x, w, stride):
    k = w.shape[0]
    pad = (k - 1) // 2
    j, t, _ = x.shape
    t_out = -(-t // stride)  # ceil(t / stride)
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    out = np.zeros((j, t_out, w.shape[2]), dtype=np.float64)
    for u in range(k):
        out += xp[:, u : u + stride * t_out : stride, :] @ w[u]
    return out


def _conv1d_bwd(rec, g):
    x, w = (t.data for t in rec.inputs)
    stride = rec.args["stride"]
    k = w.shape[0]
    pad = (k - 1) // 2
    t = x.shape[1]
    t_out = g.shape[1]
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    g_flat = g.reshape(-1, g.shape[-1])
    for u in range(k):
        sl = xp[:, u : u + stride * t_out : stride, :]
        gw[u] = sl.reshape(-1, sl.shape[-1]).T @ g_flat
        gxp[:, u : u + stride * t_out : stride, :] += g @ w[u].T
    gx = gxp[:, pad : pad + t, :]
    return gx, gw


_op("conv1d_temporal", _conv1d_fwd, _conv1d_bwd)


def conv1d_temporal(x: Tensor, w: Tensor, stride: int = 1, tape: Tape | None = None) -> Tensor:
    """1-D convolution along the frame axis, independently per joint.

    *x* has shape (J, T, C_in) and *w* has shape (k, C_in, C_out) with odd k.
    Zero padding of (k-1)//2 on each side keeps outputs centered; the output
    frame count is ceil(T / stride).
    """
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d_temporal needs (J,T,C) and (k,C_in,C_out), got {x.shape}, {w.shape}")
    k, c_in, c_out = w.shape
    if k % 2 == 0:
        raise ConfigError(f"temporal kernel size must be odd, got {k}")
    if stride not in (1, 2):
        raise ConfigError(f"temporal stride must be 1 or 2, got {stride}")
    if x.shape[2] != c_in:
        raise ShapeError(f"channel mismatch: input {x.shape} vs kernel {w.shape}")
    t_out = -(-x.shape[1] // stride)
    _count_macs("conv1d_temporal", x.shape[0] * t_out * k * c_in * c_out)
    return _finish(
        "conv1d_temporal",
        _conv1d_fwd(x.data, w.data, stride),
        (x, w),
        tape,
        args={"stride": stride},
    )


# -- elementwise --------------------------------------------------------------

def _relu_fwd(x):
    return np.maximum(x, 0.0)


def _relu_bwd(rec, g):
    (x,) = (t.data for t in rec.inputs)
    return (g * (x > 0.0),)


_op("relu", _relu_fwd, _relu_bwd)


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    _count_extra("activation", x.size)
    return _finish("relu", _relu_fwd(x.data), (x,), tape)


def _add_fwd(a, b):
    return a + b


def _add_bwd(rec, g):
    a, b = (t.data for t in rec.inputs)
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


_op("add", _add_fwd, _add_bwd)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Broadcasting addition; gradients sum over the broadcast axes."""
    try:
        out = _add_fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"add shapes do not broadcast: {a.shape} + {b.shape}") from exc
    _count_extra("add", out.size)
    return _finish("add", out, (a, b), tape)


def _mul_fwd(a, b):
    return a * b


def _mul_bwd(rec, g):
    a, b = (t.data for t in rec.inputs)
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


_op("mul", _mul_fwd, _mul_bwd)


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Broadcasting elementwise product (per-channel scales and gates)."""
    try:
        out = _mul_fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"mul shapes do not broadcast: {a.shape} * {b.shape}") from exc
    _count_macs("mul", out.size)
    return _finish("mul", out, (a, b), tape)


# -- layout ops ----------------------------------------------------------------

def _reshape_fwd(x, shape):
    return x.reshape(shape)


def _reshape_bwd(rec, g):
    return (g.reshape(rec.inputs[0].shape),)


_op("reshape", _reshape_fwd, _reshape_bwd)


def reshape(x: Tensor, shape: Sequence[int], tape: Tape | None = None) -> Tensor:
    shape = tuple(shape)
    if math.prod(shape) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    return _finish("reshape", _reshape_fwd(x.data, shape), (x,), tape, args={"shape": shape})


def _transpose_fwd(x, axes):
    return np.ascontiguousarray(np.transpose(x, axes))


def _transpose_bwd(rec, g):
    axes = rec.args["axes"]
    inverse = tuple(np.argsort(axes))
    return (np.transpose(g, inverse),)


_op("transpose", _transpose_fwd, _transpose_bwd)


def transpose(x: Tensor, axes: Sequence[int], tape: Tape | None = None) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ShapeError(f"axes {axes} are not a permutation for shape {x.shape}")
    return _finish("transpose", _transpose_fwd(x.data, axes), (x,), tape, args={"axes": axes})


def _slice_channels_fwd(x, start, width):
    return np.ascontiguousarray(x[..., start : start + width])


def _slice_channels_bwd(rec, g):
    x = rec.inputs[0].data
    start, width = rec.args["start"], rec.args["width"]
    gx = np.zeros_like(x)
    gx[..., start : start + width] = g
    return (gx,)


_op("slice_channels", _slice_channels_fwd, _slice_channels_bwd)


def slice_channels(x: Tensor, start: int, width: int, tape: Tape | None = None) -> Tensor:
    """Contiguous slice of the trailing channel axis (group split)."""
    if not (0 <= start and start + width <= x.shape[-1]):
        raise ShapeError(f"channel slice [{start}, {start + width}) exceeds {x.shape}")
    return _finish(
        "slice_channels",
        _slice_channels_fwd(x.data, start, width),
        (x,),
        tape,
        args={"start": start, "width": width},
    )


def _stride_frames_fwd(x, stride):
    return np.ascontiguousarray(x[:, ::stride, :])


def _stride_frames_bwd(rec, g):
    x = rec.inputs[0].data
    gx = np.zeros_like(x)
    gx[:, :: rec.args["stride"], :] = g
    return (gx,)


_op("stride_frames", _stride_frames_fwd, _stride_frames_bwd)


def stride_frames(x: Tensor, stride: int, tape: Tape | None = None) -> Tensor:
    """Subsample the frame axis of a (J, T, C) tensor, keeping frame 0."""
    if x.data.ndim != 3:
        raise ShapeError(f"stride_frames needs a (J,T,C) tensor, got {x.shape}")
    return _finish("stride_frames", _stride_frames_fwd(x.data, stride), (x,), tape, args={"stride": stride})


def _concat_channels_fwd(*xs):
    return np.concatenate(xs, axis=-1)


def _concat_channels_bwd(rec, g):
    widths = [t.shape[-1] for t in rec.inputs]
    splits = np.cumsum(widths)[:-1]
    return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=-1))


_op("concat_channels", _concat_channels_fwd, _concat_channels_bwd)


def concat_channels(xs: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    lead = xs[0].shape[:-1]
    if any(t.shape[:-1] != lead for t in xs):
        raise ShapeError(f"concat_channels leading shapes differ: {[t.shape for t in xs]}")
    return _finish("concat_channels", _concat_channels_fwd(*(t.data for t in xs)), tuple(xs), tape)


# -- reductions ----------------------------------------------------------------

def _mean_jt_fwd(x):
    return x.mean(axis=(0, 1))


def _mean_jt_bwd(rec, g):
    x = rec.inputs[0].data
    n = x.shape[0] * x.shape[1]
    return (np.broadcast_to(g / n, x.shape).copy(),)


_op("mean_joints_frames", _mean_jt_fwd, _mean_jt_bwd)


def mean_joints_frames(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Average a (J, T, C) tensor over joints and frames, leaving (C,)."""
    if x.data.ndim != 3:
        raise ShapeError(f"mean_joints_frames needs a (J,T,C) tensor, got {x.shape}")
    _count_extra("pool", x.size)
    return _finish("mean_joints_frames", _mean_jt_fwd(x.data), (x,), tape)


def _max_instances_fwd(x):
    return x.max(axis=0)


def _max_instances_bwd(rec, g):
    x = rec.inputs[0].data
    # Ties route the whole gradient to the first argmax for determinism.
    idx = x.argmax(axis=0)
    gx = np.zeros_like(x)
    np.put_along_axis(gx, idx[None], g[None], axis=0)
    return (gx,)


_op("max_instances", _max_instances_fwd, _max_instances_bwd)


def max_instances(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise maximum over the leading instance axis."""
    if x.data.ndim < 2:
        raise ShapeError(f"max_instances needs a leading instance axis, got {x.shape}")
    _count_extra("compare", (x.shape[0] - 1) * (x.size // x.shape[0]))
    return _finish("max_instances", _max_instances_fwd(x.data), (x,), tape)


# -- loss ------------------------------------------------------------------------

def _softmax_xent_fwd(logits, label):
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    return np.asarray(log_z - shifted[label])


def _softmax_xent_bwd(rec, g):
    probs = rec.saved["probs"]
    label = rec.args["label"]
    gl = probs.copy()
    gl[label] -= 1.0
    return (gl * g.reshape(()),)


_op("softmax_cross_entropy", _softmax_xent_fwd, _softmax_xent_bwd)


def softmax_cross_entropy(logits: Tensor, label: int, tape: Tape | None = None) -> Tensor:
    """Negative log softmax probability of *label*; returns a scalar tensor."""
    if logits.data.ndim != 1:
        raise ShapeError(f"logits must be rank 1, got {logits.shape}")
    if not (0 <= label < logits.shape[0]):
        raise IndexError(f"label {label} out of range for {logits.shape[0]} classes")
    if not np.isfinite(logits.data).all():
        raise NumericError("non-finite logits fed to softmax_cross_entropy")
    shifted = logits.data - logits.data.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    out = _softmax_xent_fwd(logits.data, label)
    return _finish(
        "softmax_cross_entropy", out, (logits,), tape, args={"label": int(label)}, saved={"probs": probs}
    )


# ---------------------------------------------------------------------------
# Finite-difference verification

def check_gradients(
    f: Callable[[Tape | None], Tensor],
    params: Iterable[Parameter],
    step: float = 1e-5,
) -> float:
    """Compare taped gradients of a scalar function against central differences.

    *f* must be deterministic: called with a tape it returns the loss tensor,
    called with ``None`` it runs forward-only.  Returns the maximum over all
    parameter coordinates of ``|analytic - numeric| / max(1, |numeric|)``.
    """
    params = [p for p in params if p.requires_grad]
    tape = Tape()
    loss = f(tape)
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss in check_gradients")
    grads = tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = grads.get(id(p.value))
        if analytic is None:
            analytic = np.zeros(p.shape)
        base = p.value.data.copy()
        flat = base.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            for sign, slot in ((+1.0, 0), (-1.0, 1)):
                bumped = base.copy().reshape(-1)
                bumped[i] += sign * step
                p.assign(bumped.reshape(base.shape))
                val = f(None).item()
                if not math.isfinite(val):
                    p.assign(base)
                    raise NumericError("non-finite loss during finite-difference probe")
                if slot == 0:
                    hi = val
                else:
                    numeric[i] = (hi - val) / (2.0 * step)
        p.assign(base)
        diff = np.abs(analytic.reshape(-1) - numeric)
        rel = diff / np.maximum(1.0, np.abs(numeric))
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst
