import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heavytail import autodiff as ad
from heavytail.autodiff import Tensor

from conftest import check_grads, numeric_grad, rel_err


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# --- forward values ---------------------------------------------------------

def test_matmul_identity_and_hand_case():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), m).data, m.data)
    out = ad.matmul(m, Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_l2_normalize_values():
    assert np.allclose(ad.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8], atol=0, rtol=1e-15)
    u = np.array([0.0, 1.0, 0.0])
    assert np.array_equal(ad.l2_normalize(Tensor(u)).data, u)


def test_l2_normalize_zero_vector_raises():
    with pytest.raises(ad.DegenerateInputError):
        ad.l2_normalize(Tensor([0.0, 0.0]))
    with pytest.raises(ad.DegenerateInputError):
        ad.l2_normalize(Tensor([[1.0, 0.0], [0.0, 0.0]]))


def test_cosine_similarity_values():
    assert ad.cosine_similarity(Tensor([1.0, 0.0]), Tensor([1.0, 0.0])).item() == 1.0
    assert ad.cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0
    with pytest.raises(ad.DegenerateInputError):
        ad.cosine_similarity(Tensor([0.0, 0.0]), Tensor([0.0, 1.0]))


def test_cosine_gradient_vanishes_at_parallel_inputs(rng):
    b = rng.standard_normal(6)
    a = Tensor(2.0 * b, requires_grad=True)
    ad.cosine_similarity(a, Tensor(b)).backward()
    assert np.max(np.abs(a.grad)) < 1e-12


def test_softmax_cross_entropy_values():
    assert math.isclose(ad.softmax_cross_entropy(Tensor(np.zeros(4)), 2).item(), math.log(4), rel_tol=1e-15)
    big = ad.softmax_cross_entropy(Tensor([1000.0, 0.0]), 0)
    assert np.isfinite(big.item()) and 0.0 <= big.item() < 1e-12


def test_softmax_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    z = param(rng, 5)
    ad.softmax_cross_entropy(z, 3).backward()
    expected = ad.softmax(z.data)
    expected[3] -= 1.0
    assert np.allclose(z.grad, expected, atol=1e-15)
    (num,) = numeric_grad(lambda: ad.softmax_cross_entropy(Tensor(z.data), 3).item(), [z.data])
    assert rel_err(z.grad, num) < 1e-6


def test_softmax_cross_entropy_target_range():
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy(Tensor(np.zeros(3)), 3)
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy(Tensor(np.zeros((2, 3))), [0, -1])


def test_broadcasting_only_for_scalars():
    a = Tensor(np.ones((2, 3)))
    assert ad.mul(Tensor(2.0), a).data.sum() == 12.0
    with pytest.raises(ad.ShapeError):
        ad.add(a, Tensor(np.ones(3)))


def test_hinge_and_relu():
    z = Tensor([-1.0, 0.0, 2.5], requires_grad=True)
    out = ad.hinge(z)
    assert out.data.tolist() == [0.0, 0.0, 2.5]
    ad.sum(out).backward()
    assert z.grad.tolist() == [0.0, 0.0, 1.0]


def test_backward_accumulates_until_zeroed(rng):
    a = param(rng, 3)
    ad.sum(a).backward()
    ad.sum(a).backward()
    assert np.array_equal(a.grad, np.full(3, 2.0))
    a.zero_grad()
    assert a.grad is None


def test_every_path_tensor_gets_a_grad(rng):
    a, b = param(rng, 2, 3), param(rng, 3, 2)
    mid = ad.matmul(a, b)
    out = ad.mean(ad.relu(mid))
    out.backward()
    for t in (a, b, mid, out):
        assert t.grad is not None and t.grad.shape == t.shape


def test_tape_is_topological_and_unique(rng):
    a = param(rng, 3)
    b = ad.mul(a, a)
    c = ad.add(b, a)
    tape = ad.build_tape(ad.sum(c))
    pos = {id(t): i for i, t in enumerate(tape)}
    assert len(pos) == len(tape)
    for t in tape:
        for p in t._parents:
            assert pos[id(p)] < pos[id(t)]


def test_sgd_step():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.array([0.5, 0.5])
    opt = ad.SGD([p], lr=0.1)
    opt.step()
    assert np.allclose(p.data, [0.95, -2.05])
    opt.zero_grad()
    assert p.grad is None


def test_sgd_momentum_and_decay():
    p = Tensor([1.0], requires_grad=True)
    opt = ad.SGD([p], lr=1.0, momentum=0.5, weight_decay=0.1)
    p.grad = np.array([1.0])
    opt.step()  # v = 1.1
    p.grad = np.array([1.0])
    opt.step()  # v = 0.55 + 1 + 0.1*(-0.1)
    assert np.allclose(p.data, [1.0 - 1.1 - (0.55 + 1.0 - 0.01)])


# --- gradient checks (finite differences, 10 seeds) -------------------------

OPS = {
    "add": (lambda a, b: ad.sum(ad.mul(ad.add(a, b), ad.add(a, b))), [(3, 4), (3, 4)]),
    "sub": (lambda a, b: ad.sum(ad.mul(ad.sub(a, b), ad.sub(a, b))), [(5,), (5,)]),
    "mul": (lambda a, b: ad.sum(ad.mul(a, b)), [(2, 3), (2, 3)]),
    "scalar_mul": (lambda s, a: ad.sum(ad.mul(ad.mul(s, a), a)), [(), (4,)]),
    "scale": (lambda a: ad.sum(ad.mul(ad.scale(a, -2.5), a)), [(4,)]),
    "matmul": (lambda a, b: ad.sum(ad.matmul(a, b)), [(3, 4), (4, 2)]),
    "matmul_sq": (lambda a, b: ad.mean(ad.mul(ad.matmul(a, b), ad.matmul(a, b))), [(3, 4), (4, 2)]),
    "transpose": (lambda a: ad.sum(ad.mul(ad.transpose(a), ad.transpose(a))), [(2, 3)]),
    "add_rowwise": (lambda x, v: ad.sum(ad.mul(ad.add_rowwise(x, v), ad.add_rowwise(x, v))), [(3, 2), (2,)]),
    "relu": (lambda a: ad.sum(ad.mul(ad.relu(a), a)), [(6,)]),
    "mean": (lambda a: ad.mean(ad.mul(a, a)), [(3, 3)]),
    "sum_axis": (lambda a: ad.sum(ad.mul(ad.sum(a, axis=-1), ad.sum(a, axis=-1))), [(3, 4)]),
    "take": (lambda a: ad.sum(ad.mul(a[np.array([0, 2, 2])], a[np.array([1, 1, 0])])), [(3, 2)]),
    "concat": (lambda a, b: ad.sum(ad.mul(ad.concat([a, b]), ad.concat([b, a]))), [(2, 3), (2, 3)]),
    "l2_normalize": (lambda a, w: ad.sum(ad.mul(ad.l2_normalize(a), w)), [(8,), (8,)]),
    "l2_normalize_rows": (lambda a, w: ad.sum(ad.mul(ad.l2_normalize(a), w)), [(3, 5), (3, 5)]),
    "cosine_similarity": (lambda a, b: ad.cosine_similarity(a, b), [(6,), (6,)]),
    "hinge": (lambda a, b: ad.sum(ad.hinge(ad.sub(a, b))), [(7,), (7,)]),
    "softmax_ce": (lambda z: ad.softmax_cross_entropy(z, 2), [(5,)]),
    "softmax_ce_batch": (lambda z: ad.mean(ad.softmax_cross_entropy(z, np.array([0, 3, 1]))), [(3, 4)]),
}


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("name", sorted(OPS))
def test_finite_difference_gradients(name, seed):
    rng = np.random.default_rng(seed)
    fn, shapes = OPS[name]
    params = [param(rng, *s) for s in shapes]
    check_grads(lambda: fn(*params), params, tol=1e-4)


def test_matmul_grad_tight(rng):
    a, b = param(rng, 3, 4), param(rng, 4, 2)
    assert check_grads(lambda: ad.sum(ad.matmul(a, b)), [a], tol=1e-6) < 1e-6


def test_l2_normalize_grad_tight(rng):
    v, w = param(rng, 8), rng.standard_normal(8)
    assert check_grads(lambda: ad.sum(ad.mul(ad.l2_normalize(v), Tensor(w))), [v], tol=1e-6) < 1e-6


# --- properties -------------------------------------------------------------

finite = st.floats(-10, 10, allow_nan=False).filter(lambda x: abs(x) > 1e-3)
vectors = arrays(np.float64, st.integers(1, 8), elements=finite)


@settings(max_examples=50, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(v, alpha):
    assert np.allclose(ad.l2_normalize(Tensor(alpha * v)).data, ad.l2_normalize(Tensor(v)).data, atol=1e-12, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite))),
    st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_cosine_scale_invariant_and_bounded(ab, alpha, beta):
    a, b = ab
    c = ad.cosine_similarity(Tensor(a), Tensor(b)).item()
    assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12
    assert abs(ad.cosine_similarity(Tensor(alpha * a), Tensor(beta * b)).item() - c) < 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 10), elements=st.floats(-50, 50)), st.data())
def test_cross_entropy_nonnegative(z, data):
    t = data.draw(st.integers(0, len(z) - 1))
    assert ad.softmax_cross_entropy(Tensor(z), t).item() >= 0.0
