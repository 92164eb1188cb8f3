import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from acorl import autodiff as ad
from acorl.autodiff import Tape, Tensor
from acorl.errors import ContractViolation, DomainError
from acorl.gradcheck import primitive_cases, random_chain, run_suite
from acorl.rng import make_rng, normal

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_elementwise_examples():
    assert ad.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data.tolist() == [4.0, 6.0]
    assert ad.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert ad.exp(Tensor([0.0])).data.tolist() == [1.0]


def test_apply_primitive_dispatch():
    a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
    assert ad.apply_primitive("sub", a, b).data.tolist() == [-2.0, -3.0]
    assert ad.apply_primitive("scale", a, c=3.0).data.tolist() == [3.0, 6.0]
    with pytest.raises(ContractViolation):
        ad.apply_primitive("frobnicate", a, b)


def test_shape_mismatch_is_contract_violation():
    with pytest.raises(ContractViolation):
        ad.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(ContractViolation):
        ad.broadcast_add_row(Tensor(np.ones((2, 3))), Tensor(np.ones(2)))


def test_domain_errors_name_the_index():
    with pytest.raises(DomainError, match="index 1"):
        ad.log(Tensor([1.0, 0.0, 2.0]))
    with pytest.raises(DomainError, match=r"\(1, 0\)"):
        ad.div(Tensor(np.ones((2, 2))), Tensor([[1.0, 1.0], [0.0, 1.0]]))


def test_matmul_examples():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert ad.matmul(Tensor(np.eye(2)), m).data.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert ad.matmul(m, Tensor([[5.0], [6.0]])).data.tolist() == [[17.0], [39.0]]
    assert not ad.matmul(Tensor(np.zeros((2, 3))), Tensor(normal(make_rng(0), (3, 2)))).data.any()
    with pytest.raises(ContractViolation):
        ad.matmul(m, Tensor(np.ones((3, 1))))


def test_softmax_examples():
    np.testing.assert_array_equal(ad.softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    np.testing.assert_allclose(ad.softmax_rows(Tensor([[0.0, np.log(2)]])).data, [[1 / 3, 2 / 3]], atol=1e-15)
    np.testing.assert_array_equal(ad.softmax_rows(Tensor([[1000.0, 1000.0]])).data, [[0.5, 0.5]])
    with pytest.raises(DomainError):
        ad.softmax_rows(Tensor([[0.0, np.nan]]))


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite), finite)
def test_softmax_rows_on_simplex_and_shift_invariant(x, c):
    p = ad.softmax_rows(Tensor(x)).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(ad.softmax_rows(Tensor(x + c)).data, p, atol=1e-12)


def test_grad_reverse_examples():
    tape = Tape()
    x = tape.parameter([1.5, -2.0])
    y = ad.grad_reverse(x, 1.0)
    assert y.data.tolist() == [1.5, -2.0]
    g = tape.backward(ad.sum(y * Tensor([0.5, -1.0])))[x]
    assert g.tolist() == [-0.5, 1.0]
    tape = Tape()
    x = tape.parameter([1.5, -2.0])
    g = tape.backward(ad.sum(ad.grad_reverse(x, 0.0) * Tensor([0.5, -1.0])))[x]
    assert not g.any()
    with pytest.raises(ContractViolation):
        ad.grad_reverse(x, -0.5)


def test_backward_examples():
    tape = Tape()
    x = tape.parameter([1.0, 2.0])
    p = tape.parameter(np.ones((2, 2)))
    loss = ad.sum(x * x)
    grads = tape.backward(loss)
    assert grads[x].tolist() == [2.0, 4.0]
    assert grads[p].shape == (2, 2) and not grads[p].any()

    tape = Tape()
    x = tape.parameter([1.0, 2.0])
    assert tape.backward(ad.grad_reverse(ad.sum(x * x), 1.0))[x].tolist() == [-2.0, -4.0]


def test_backward_rejects_non_scalar_and_untracked():
    tape = Tape()
    x = tape.parameter([1.0, 2.0])
    with pytest.raises(ContractViolation):
        tape.backward(x * x)
    with pytest.raises(ContractViolation):
        ad.backward(Tensor(1.0))


def test_backward_twice_is_identical():
    rng = make_rng(3)
    tape = Tape()
    w = tape.parameter(normal(rng, (4, 3)))
    x = Tensor(normal(rng, (5, 4)))
    loss = ad.mean(ad.log_softmax_rows(ad.matmul(x, w)) * Tensor(normal(rng, (5, 3))))
    first = tape.backward(loss)[w]
    second = tape.backward(loss)[w]
    np.testing.assert_array_equal(first, second)
    assert first is not second


def test_relu_subgradient_at_zero_is_zero():
    tape = Tape()
    x = tape.parameter([0.0, 1.0, -1.0])
    assert tape.backward(ad.sum(ad.relu(x)))[x].tolist() == [0.0, 1.0, 0.0]


def test_mixing_tapes_is_an_error():
    a = Tape().parameter([1.0])
    b = Tape().parameter([2.0])
    with pytest.raises(ContractViolation):
        ad.add(a, b)


def test_finite_difference_examples():
    assert ad.finite_difference_check(lambda x: ad.sum(ad.exp(x)), np.array([0.3, -0.7]), 1e-5) < 1e-6
    assert ad.finite_difference_check(lambda x: Tensor(3.0), np.array([0.3, -0.7]), 1e-5) == 0.0
    err = ad.finite_difference_check(lambda x: ad.sum(ad.grad_reverse(ad.exp(x), 2.0)), np.array([0.3, -0.7]), 1e-5, -2.0)
    assert err < 1e-6


@pytest.mark.parametrize("name", sorted(primitive_cases(0)))
def test_every_primitive_passes_gradcheck(name):
    f, x, factor = primitive_cases(0)[name]
    assert ad.finite_difference_check(f, x, 1e-5, factor) < 1e-6


def test_gradcheck_suite_counts_compositions():
    res = run_suite(seed=2, compositions=20)
    assert res["compositions"] == 20
    assert res["passed"]


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 2.0])
def test_grl_upstream_gradients_are_scaled_copies(lam):
    rng = make_rng(11)
    for _ in range(10):
        pre, post = random_chain(rng, 3), random_chain(rng, 3)
        w = Tensor(normal(rng, (4, 4)))
        x0 = normal(rng, (4, 4))
        tape = Tape()
        x = tape.parameter(x0)
        g_plain = tape.backward(ad.sum(post(pre(x)) * w))[x]
        tape = Tape()
        x = tape.parameter(x0)
        h = pre(x)
        r = ad.grad_reverse(h, lam)
        assert np.array_equal(r.data, h.data)
        g_grl = tape.backward(ad.sum(post(r) * w))[x]
        np.testing.assert_allclose(g_grl, -lam * g_plain, rtol=0, atol=1e-12)


@settings(max_examples=30)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=st.floats(-3, 3)))
def test_sum_gradient_is_ones(x):
    tape = Tape()
    t = tape.parameter(x)
    np.testing.assert_array_equal(tape.backward(ad.sum(t))[t], np.ones_like(x))


def test_l2_normalize_rows_unit_norm():
    x = normal(make_rng(0), (6, 5))
    n = np.linalg.norm(ad.l2_normalize_rows(Tensor(x)).data, axis=1)
    np.testing.assert_allclose(n, 1.0, atol=1e-12)
