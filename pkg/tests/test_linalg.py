import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rewardfree.errors import InvalidDimensionError, InvalidInputError, NormViolationError
from rewardfree.linalg import (
    REFACTOR_EVERY,
    CovarianceAccumulator,
    cov_new,
    cov_rank1_update,
    elliptical_potential,
    quadratic_form,
    ridge_solve,
)

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_new_is_identity():
    acc = cov_new(3)
    assert np.array_equal(acc.matrix, np.eye(3))
    assert np.array_equal(acc.inverse, np.eye(3))
    assert acc.count == 0
    assert quadratic_form(cov_new(1), [1.0]) == 1.0
    assert quadratic_form(cov_new(2), [0.6, 0.8]) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("dim", [0, -1, 2.5])
def test_bad_dimension(dim):
    with pytest.raises(InvalidDimensionError):
        cov_new(dim)


def test_single_update_closed_form():
    acc = cov_rank1_update(cov_new(2), E1)
    assert np.allclose(acc.matrix, np.diag([2.0, 1.0]))
    assert quadratic_form(acc, E1) == pytest.approx(0.5)
    assert quadratic_form(acc, E2) == pytest.approx(1.0)


def test_zero_update_counts():
    acc = cov_rank1_update(cov_new(2), np.zeros(2))
    assert acc.count == 1
    assert np.array_equal(acc.matrix, np.eye(2))


def test_repeated_unit_vector():
    acc = cov_new(3)
    e1 = np.eye(3)[0]
    for _ in range(3):
        acc.update(e1)
    assert quadratic_form(acc, e1) == pytest.approx(0.25, abs=1e-15)


def test_update_rejects_bad_inputs():
    acc = cov_new(2)
    with pytest.raises(InvalidDimensionError):
        acc.update(np.ones(3))
    with pytest.raises(NormViolationError):
        acc.update([1.0, 0.01])
    acc.update([1.0 + 5e-10, 0.0])  # inside the slack
    with pytest.raises(InvalidDimensionError):
        acc.quadratic_form([1.0])


def test_ridge_examples():
    assert np.array_equal(ridge_solve(cov_new(3), [], []).weights, np.zeros(3))
    acc = cov_new(1).update([1.0])
    assert ridge_solve(acc, [[1.0]], [3.0]).weights == pytest.approx([1.5])
    acc = cov_new(2).update(E1).update(E2)
    sol = ridge_solve(acc, [E1, E2], [1.0, 1.0])
    assert sol.weights == pytest.approx([0.5, 0.5])
    assert sol.design is acc


def test_ridge_length_mismatch():
    acc = cov_new(2).update(E1)
    with pytest.raises(InvalidInputError):
        ridge_solve(acc, [E1], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        ridge_solve(acc, [E1, E2], [1.0, 2.0])


def test_refactor_keeps_inverse_tight():
    rng = np.random.default_rng(0)
    acc = cov_new(5)
    for phi in unit_rows(rng, 3 * REFACTOR_EVERY + 7, 5):
        acc.update(phi)
    assert np.abs(acc.matrix @ acc.inverse - np.eye(5)).max() <= 1e-9
    assert np.linalg.eigvalsh(acc.matrix).min() >= 1.0 - 1e-12


def test_from_rows_matches_sequential():
    rng = np.random.default_rng(1)
    rows = unit_rows(rng, 300, 4)
    seq = cov_new(4)
    for r in rows:
        seq.update(r)
    batch = CovarianceAccumulator.from_rows(rows)
    assert batch.count == seq.count
    assert np.allclose(batch.matrix, seq.matrix, atol=1e-12)
    assert np.allclose(batch.inverse, seq.inverse, atol=1e-12)


def test_copy_is_independent():
    acc = cov_new(2).update(E1)
    other = acc.copy()
    other.update(E2)
    assert acc.count == 1 and other.count == 2
    assert quadratic_form(acc, E2) == pytest.approx(1.0)


@given(st.integers(1, 6), st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_inverse_matches_solve(d, n, seed):
    rng = np.random.default_rng(seed)
    acc = cov_new(d)
    for phi in unit_rows(rng, n, d) * rng.random((n, 1)):
        acc.update(phi)
    for q in unit_rows(rng, 5, d):
        exact = q @ np.linalg.solve(acc.matrix, q)
        assert abs(acc.quadratic_form(q) - exact) <= 1e-8 * max(exact, 1e-300)


@given(st.integers(1, 5), st.integers(0, 20), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_superset_dominates(d, n_a, n_extra, seed):
    rng = np.random.default_rng(seed)
    rows = unit_rows(rng, n_a + n_extra, d)
    a = cov_new(d)
    for r in rows[:n_a]:
        a.update(r)
    b = a.copy()
    for r in rows[n_a:]:
        b.update(r)
    for q in unit_rows(rng, 5, d):
        assert b.quadratic_form(q) <= a.quadratic_form(q) + 1e-9


@given(st.integers(1, 8), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_elliptical_potential_bound(d, K, seed):
    phis = unit_rows(np.random.default_rng(seed), K, d)
    assert elliptical_potential(phis).sum() <= 2 * d * np.log(K + 1)


def test_elliptical_potential_first_term_is_norm():
    phis = np.array([[0.6, 0.8], [1.0, 0.0]])
    terms = elliptical_potential(phis)
    assert terms[0] == pytest.approx(1.0)
    acc = cov_new(2).update(phis[0])
    assert terms[1] == pytest.approx(acc.quadratic_form(phis[1]))
