import numpy as np
import pytest

from gradcheck import check_gradients
from op_cases import OP_CASES
from timegs.diffcore import (
    Adam,
    AdamState,
    DiffTensor,
    GradientError,
    ShapeError,
    Tape,
    adam_step,
    backward,
    ops,
)


def leaf(x):
    return DiffTensor(np.array(x, dtype=float), requires_grad=True)


@pytest.mark.parametrize("name", sorted(OP_CASES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_op_gradients_match_finite_differences(name, seed):
    fn, inputs = OP_CASES[name](np.random.default_rng(seed))
    check_gradients(fn, inputs, seed=seed)


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_allclose(ops.softmax(DiffTensor([0.0, 0.0, 0.0])).values, [1 / 3] * 3)


def test_softmax_rejects_empty_axis():
    with pytest.raises(ShapeError):
        ops.softmax(DiffTensor(np.zeros((2, 0))), axis=1)


def test_resize_keeps_constants():
    out = ops.resize_bilinear(DiffTensor(np.full((2, 2), 3.25)), (5, 5))
    np.testing.assert_allclose(out.values, 3.25, rtol=0, atol=1e-15)


def test_identity_kernel_conv_is_identity():
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 7))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(ops.conv2d(DiffTensor(x), DiffTensor(w), padding=1).values, x)


def test_matmul_hand_example():
    out = ops.matmul(DiffTensor([[1.0, 2.0], [3.0, 4.0]]), DiffTensor([[5.0], [6.0]]))
    np.testing.assert_array_equal(out.values, [[17.0], [39.0]])


def test_shape_errors_name_op_and_shapes():
    with pytest.raises(ShapeError) as err:
        ops.matmul(DiffTensor(np.zeros((2, 3))), DiffTensor(np.zeros((2, 3))))
    assert err.value.op == "matmul"
    assert err.value.shapes == ((2, 3), (2, 3))
    with pytest.raises(ShapeError, match="add"):
        ops.add(DiffTensor(np.zeros(3)), DiffTensor(np.zeros(4)))
    with pytest.raises(ShapeError, match="odd"):
        ops.conv2d(DiffTensor(np.zeros((1, 1, 4, 4))), DiffTensor(np.zeros((1, 1, 2, 2))))


def test_backward_square_sum():
    x = leaf([1.0, 2.0, 3.0])
    with Tape():
        root = ops.sum(ops.square(x))
    backward(root)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_fan_out_accumulates():
    a = leaf(5.0)
    with Tape():
        root = a + a
    backward(root)
    assert a.grad == 2.0


def test_shared_node_equals_sum_of_paths():
    rng = np.random.default_rng(3)
    xv = rng.normal(size=4)
    x = leaf(xv)
    with Tape():
        h = ops.exp(x)
        root = ops.sum(h * h) + ops.sum(ops.gelu(h))
    backward(root)
    # The same graph with the shared node duplicated into two independent leaves.
    x1, x2 = leaf(xv), leaf(xv)
    with Tape():
        h1, h1b, h2 = ops.exp(x1), ops.exp(x1), ops.exp(x2)
        root2 = ops.sum(h1 * h1b) + ops.sum(ops.gelu(h2))
    backward(root2)
    np.testing.assert_allclose(x.grad, x1.grad + x2.grad, rtol=1e-14)


def test_backward_requires_scalar_root_and_tape():
    x = leaf([1.0, 2.0])
    with Tape():
        y = ops.square(x)
    with pytest.raises(GradientError, match="scalar"):
        backward(y)
    with pytest.raises(GradientError, match="tape"):
        backward(ops.sum(ops.square(x)))


def test_tape_is_topological_and_replayed_in_reverse():
    x = leaf([0.5, -0.25])
    with Tape() as tape:
        root = ops.sum(ops.exp(ops.square(x)))
    seen = {x.node_id}
    for entry in tape.entries:
        assert all(i in seen for i in entry.input_ids)
        seen.add(entry.output_id)
    assert [e.op for e in tape.entries] == ["square", "exp", "sum"]
    order = []
    for entry in tape.entries:
        inner = entry.backward

        def spy(g, _inner=inner, _op=entry.op):
            order.append(_op)
            return _inner(g)

        entry.backward = spy
    backward(root)
    assert order == ["sum", "exp", "square"]


def test_no_tape_records_nothing():
    x = leaf([1.0])
    y = ops.exp(x)
    assert not y.requires_grad and y._tape is None


def test_gradients_are_deterministic():
    def run():
        rng = np.random.default_rng(11)
        x = leaf(rng.normal(size=(2, 2, 6, 6)))
        w = leaf(rng.normal(size=(3, 2, 3, 3)))
        with Tape():
            y = ops.gelu(ops.conv2d(x, w, padding=1))
            root = ops.mean(ops.square(ops.max_pool2d(y)))
        backward(root)
        return root.values.copy(), x.grad.copy(), w.grad.copy()

    a, b = run(), run()
    for u, v in zip(a, b):
        assert u.tobytes() == v.tobytes()


def test_finite_values_stay_finite_after_backward():
    rng = np.random.default_rng(5)
    x = leaf(rng.uniform(-2, 2, size=(3, 7)))
    with Tape():
        root = ops.sum(ops.softmax(x, axis=1) * ops.softplus(x)) + ops.mean(ops.absolute(x))
    backward(root)
    assert np.all(np.isfinite(x.grad)) and np.all(np.isfinite(x.values))


# -- forward values against an independent implementation --------------------

torch = pytest.importorskip("torch")
F = torch.nn.functional


def test_conv_family_matches_torch():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 8, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    for stride in (1, 2):
        ref = F.conv2d(torch.tensor(x), torch.tensor(w), torch.tensor(b), stride=stride, padding=1).numpy()
        got = ops.conv2d(DiffTensor(x), DiffTensor(w), DiffTensor(b), stride=stride, padding=1).values
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)
    wt = rng.normal(size=(3, 5, 2, 2))
    ref = F.conv_transpose2d(torch.tensor(x), torch.tensor(wt), torch.tensor(b[:1].repeat(5)), stride=2).numpy()
    got = ops.conv_transpose2d(DiffTensor(x), DiffTensor(wt), DiffTensor(b[:1].repeat(5)), stride=2).values
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)
    ref = F.max_pool2d(torch.tensor(x), 2).numpy()
    np.testing.assert_array_equal(ops.max_pool2d(DiffTensor(x)).values, ref)


@pytest.mark.parametrize("src,dst", [((4, 24), (16, 16)), ((3, 5), (7, 2)), ((1, 96), (16, 32)), ((6, 4), (8, 8))])
def test_bilinear_matches_torch(src, dst):
    x = np.random.default_rng(2).normal(size=(1, 1) + src)
    ref = F.interpolate(torch.tensor(x), size=dst, mode="bilinear", align_corners=False).numpy()
    np.testing.assert_allclose(ops.resize_bilinear(DiffTensor(x), dst).values, ref, rtol=1e-12, atol=1e-12)


# -- Adam --------------------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    p = leaf([1.0, -2.0])
    p.grad = np.zeros(2)
    st = AdamState.for_param(p)
    adam_step([p], [st], lr=0.1)
    np.testing.assert_array_equal(p.values, [1.0, -2.0])


def test_adam_first_step_hand_value():
    p = leaf(1.0)
    p.grad = np.array(1.0)
    st = AdamState.for_param(p)
    adam_step([p], [st], lr=0.1)
    # m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps).
    assert p.values == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
    assert p.values == pytest.approx(0.9, abs=1e-8)
    assert st.t == 1
    np.testing.assert_array_equal(p.grad, 0.0)


def test_adam_counts_steps_and_names_missing_grads():
    p, q = leaf([1.0]), leaf([2.0])
    q.name = "head.bias"
    opt = Adam([p, q], lr=0.01)
    p.grad = np.ones(1)
    with pytest.raises(GradientError, match="head.bias"):
        opt.step()
    q.grad = np.ones(1)
    opt.step()
    opt.step()
    assert [s.t for s in opt.states] == [2, 2]
