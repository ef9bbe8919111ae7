"""Unit and gradient tests for the tensor core."""

import numpy as np
import pytest

from skelet import diffcore as dc
from skelet.diffcore import Parameter, Tape, Tensor, check_gradients
from skelet.errors import ConfigError, NumericError, ShapeError


def fd_check(build_loss, params, tol, step=1e-5):
    err = check_gradients(build_loss, params, step=step)
    assert err < tol, f"finite-difference mismatch: {err} >= {tol}"


def scalarize(x: Tensor, tape: Tape, rng: np.random.Generator) -> Tensor:
    """Deterministic random projection of any tensor to a scalar loss."""
    w = Tensor(rng.standard_normal(x.shape))
    flat = dc.reshape(dc.mul(x, w, tape), (x.size,), tape)
    one = Tensor(np.ones((x.size, 1)))
    out = dc.matmul(dc.reshape(flat, (1, x.size), tape), one, tape)
    return dc.reshape(out, (), tape)


class TestMatmul:
    def test_identity_is_exact(self):
        rng = np.random.default_rng(0)
        b = Tensor(rng.standard_normal((3, 5)))
        out = dc.matmul(Tensor(np.eye(3)), b)
        assert (out.data == b.data).all()

    def test_hand_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[0.0], [1.0]])
        assert dc.matmul(a, b).data.tolist() == [[2.0], [4.0]]

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            dc.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        a = Parameter(rng.standard_normal((5, 4)))
        b = Parameter(rng.standard_normal((4, 3)))
        proj = rng.standard_normal((3, 5))

        def loss(tape):
            out = dc.matmul(a.value, b.value, tape)
            back = dc.matmul(out, Tensor(proj), tape)
            tr = dc.mul(back, Tensor(np.eye(5)), tape)
            return dc.reshape(
                dc.matmul(
                    dc.reshape(tr, (1, 25), tape),
                    Tensor(np.ones((25, 1))),
                    tape,
                ),
                (),
                tape,
            )

        fd_check(loss, [a, b], 1e-6)

    def test_backward_formulas(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.standard_normal((4, 3)))
        b = Tensor(rng.standard_normal((3, 2)))
        tape = Tape()
        out = dc.matmul(a, b, tape)
        rec = tape.records[-1]
        g = rng.standard_normal(out.shape)
        ga, gb = dc._BACKWARD["matmul"](rec, g)
        np.testing.assert_allclose(ga, g @ b.data.T)
        np.testing.assert_allclose(gb, a.data.T @ g)


class TestConv1dTemporal:
    def test_identity_kernel(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((3, 7, 2)))
        w = Tensor(np.eye(2)[None])  # k=1 identity channel map
        out = dc.conv1d_temporal(x, w, stride=1)
        np.testing.assert_array_equal(out.data, x.data)

    def test_stride_two_halves_frames(self):
        x = Tensor(np.full((2, 8, 1), 3.0))
        w = Tensor(np.ones((1, 1, 1)))
        out = dc.conv1d_temporal(x, w, stride=2)
        assert out.shape == (2, 4, 1)
        assert (out.data == 3.0).all()

    def test_interior_constant_propagation(self):
        # Away from the zero-padded borders an averaging kernel preserves constants.
        x = Tensor(np.full((1, 10, 1), 5.0))
        w = Tensor(np.full((5, 1, 1), 1.0 / 5.0))
        out = dc.conv1d_temporal(x, w, stride=1)
        np.testing.assert_allclose(out.data[0, 2:-2, 0], 5.0)

    def test_odd_frames_stride_two(self):
        x = Tensor(np.zeros((1, 9, 1)))
        w = Tensor(np.ones((3, 1, 1)))
        assert dc.conv1d_temporal(x, w, stride=2).shape == (1, 5, 1)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            dc.conv1d_temporal(Tensor(np.zeros((1, 4, 1))), Tensor(np.zeros((2, 1, 1))), stride=1)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_gradient(self, stride):
        rng = np.random.default_rng(4)
        x = Parameter(rng.standard_normal((3, 8, 2)))
        w = Parameter(rng.standard_normal((5, 2, 3)))
        proj = np.random.default_rng(5)

        def loss(tape):
            out = dc.conv1d_temporal(x.value, w.value, stride=stride, tape=tape)
            return scalarize(out, tape, np.random.default_rng(6))

        fd_check(loss, [x, w], 1e-5)


class TestElementwise:
    def test_relu_values(self):
        out = dc.relu(Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_uniform_cross_entropy_is_log_n(self):
        logits = Tensor(np.zeros(4))
        for label in range(4):
            loss = dc.softmax_cross_entropy(logits, label)
            assert abs(loss.item() - np.log(4.0)) < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            dc.softmax_cross_entropy(Tensor(np.zeros(3)), 3)

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(7)
        logits = Parameter(rng.standard_normal(6))

        def loss(tape):
            return dc.softmax_cross_entropy(logits.value, 2, tape)

        fd_check(loss, [logits], 1e-7)

    def test_broadcast_add_shape_and_backward(self):
        rng = np.random.default_rng(8)
        small = Parameter(rng.standard_normal((1, 3, 4, 2)))
        big = Parameter(rng.standard_normal((5, 3, 4, 2)))

        def loss(tape):
            out = dc.add(small.value, big.value, tape)
            assert out.shape == (5, 3, 4, 2)
            return scalarize(out, tape, np.random.default_rng(9))

        fd_check(loss, [small, big], 1e-6)

    def test_broadcast_add_sums_over_instances(self):
        small = Tensor(np.zeros((1, 2, 2, 1)))
        big = Tensor(np.zeros((3, 2, 2, 1)))
        tape = Tape()
        out = dc.add(small, big, tape)
        rec = tape.records[-1]
        g = np.ones(out.shape)
        gs, gb = dc._BACKWARD["add"](rec, g)
        assert gs.shape == (1, 2, 2, 1)
        assert (gs == 3.0).all()
        assert gb.shape == (3, 2, 2, 1)

    def test_mul_gradient(self):
        rng = np.random.default_rng(10)
        x = Parameter(rng.standard_normal((4, 3, 6)))
        g = Parameter(rng.standard_normal(6))

        def loss(tape):
            return scalarize(dc.mul(x.value, g.value, tape), tape, np.random.default_rng(11))

        fd_check(loss, [x, g], 1e-6)


class TestStructuralOps:
    def test_joint_contract_matches_loops(self):
        rng = np.random.default_rng(12)
        m = rng.standard_normal((5, 3))
        x = rng.standard_normal((5, 4, 2))
        out = dc.joint_contract(Tensor(m), Tensor(x))
        expect = np.zeros((3, 4, 2))
        for k in range(3):
            for j in range(5):
                expect[k] += m[j, k] * x[j]
        np.testing.assert_allclose(out.data, expect, atol=1e-13)

    def test_joint_contract_gradient(self):
        rng = np.random.default_rng(13)
        m = Parameter(rng.standard_normal((5, 3)))
        x = Parameter(rng.standard_normal((5, 4, 2)))

        def loss(tape):
            return scalarize(dc.joint_contract(m.value, x.value, tape), tape, np.random.default_rng(14))

        fd_check(loss, [m, x], 1e-6)

    def test_scale_joints_gradient(self):
        rng = np.random.default_rng(15)
        d = Parameter(rng.standard_normal(4))
        x = Parameter(rng.standard_normal((4, 3, 2)))

        def loss(tape):
            return scalarize(dc.scale_joints(d.value, x.value, tape), tape, np.random.default_rng(16))

        fd_check(loss, [d, x], 1e-6)

    def test_slice_and_concat_roundtrip(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.standard_normal((3, 4, 6)))
        parts = [dc.slice_channels(x, i * 2, 2) for i in range(3)]
        out = dc.concat_channels(parts)
        np.testing.assert_array_equal(out.data, x.data)

    def test_stride_frames_keeps_first(self):
        x = Tensor(np.arange(10.0).reshape(1, 10, 1))
        out = dc.stride_frames(x, 2)
        assert out.data[0, :, 0].tolist() == [0.0, 2.0, 4.0, 6.0, 8.0]

    def test_max_instances_gradient_and_invariance(self):
        rng = np.random.default_rng(18)
        base = rng.standard_normal((4, 3, 2, 5))
        x = Parameter(base)

        def loss(tape):
            return scalarize(dc.max_instances(x.value, tape), tape, np.random.default_rng(19))

        fd_check(loss, [x], 1e-6)
        perm = dc.max_instances(Tensor(base[::-1].copy()))
        np.testing.assert_array_equal(perm.data, dc.max_instances(Tensor(base)).data)

    def test_mean_joints_frames_gradient(self):
        rng = np.random.default_rng(20)
        x = Parameter(rng.standard_normal((3, 4, 5)))

        def loss(tape):
            return scalarize(dc.mean_joints_frames(x.value, tape), tape, np.random.default_rng(21))

        fd_check(loss, [x], 1e-6)

    def test_transpose_reshape_gradients(self):
        rng = np.random.default_rng(22)
        x = Parameter(rng.standard_normal((2, 3, 4)))

        def loss(tape):
            y = dc.transpose(x.value, (2, 0, 1), tape)
            y = dc.reshape(y, (4, 6), tape)
            return scalarize(y, tape, np.random.default_rng(23))

        fd_check(loss, [x], 1e-6)


class TestTapeMechanics:
    def test_quadratic_is_nearly_exact(self):
        rng = np.random.default_rng(24)
        w = Parameter(rng.standard_normal((6, 1)))

        def loss(tape):
            wt = dc.reshape(w.value, (1, 6), tape)
            return dc.reshape(dc.matmul(wt, w.value, tape), (), tape)

        err = check_gradients(loss, [w])
        assert err < 1e-8

    def test_fanout_accumulates(self):
        # The same tensor consumed twice must receive both gradient contributions.
        x = Parameter(np.array([2.0, 3.0]))

        def loss(tape):
            doubled = dc.add(x.value, x.value, tape)
            return scalarize(doubled, tape, np.random.default_rng(25))

        fd_check(loss, [x], 1e-8)

    def test_forward_determinism(self):
        rng = np.random.default_rng(26)
        x = Tensor(rng.standard_normal((4, 6, 3)))
        w = Tensor(rng.standard_normal((5, 3, 8)))
        a = dc.conv1d_temporal(x, w, stride=1)
        b = dc.conv1d_temporal(x, w, stride=1)
        assert (a.data == b.data).all()

    def test_replay_reproduces_outputs(self):
        rng = np.random.default_rng(27)
        tape = Tape()
        x = Tensor(rng.standard_normal((3, 6, 2)))
        w = Tensor(rng.standard_normal((3, 2, 4)))
        out = dc.conv1d_temporal(x, w, stride=2, tape=tape)
        out = dc.relu(out, tape)
        for rec in tape.records:
            replayed = tape.replay(rec)
            assert (replayed == rec.output.data).all()

    def test_tensors_are_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 5.0

    def test_nonfinite_loss_raises(self):
        p = Parameter(np.array([1.0]))

        def loss(tape):
            bad = dc.mul(p.value, Tensor([np.inf]), tape)
            return dc.reshape(bad, (), tape)

        with pytest.raises(NumericError):
            check_gradients(loss, [p])


class TestMacCounter:
    def test_matmul_count(self):
        counter = dc.MacCounter()
        with dc.mac_counting(counter):
            dc.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 5))))
        assert counter.total_macs == 3 * 4 * 5

    def test_additions_are_extras_not_macs(self):
        counter = dc.MacCounter()
        with dc.mac_counting(counter):
            dc.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))
            dc.relu(Tensor(np.zeros(7)))
        assert counter.total_macs == 0
        assert counter.extras["add"] == 4
        assert counter.extras["activation"] == 7
