import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wassdl import oracles
from wassdl.errors import NumericError, PreconditionError
from wassdl.simplex import (
    as_simplex,
    as_simplex_stack,
    fstar_grad,
    fstar_value,
    fstar_value_closed,
    project_columns,
    project_simplex,
    random_simplex,
)

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 12).flatmap(lambda r: arrays(np.float64, r, elements=finite))


def point(rng, r):
    return random_simplex(rng, r, 1)[:, 0]


class TestProjection:
    def test_fixed_point(self, rng):
        v = point(rng, 6)
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)

    def test_dominant_coordinate(self):
        np.testing.assert_array_equal(project_simplex([10.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_bisection_oracle(self, rng):
        for _ in range(50):
            v = rng.normal(size=5) * 2
            np.testing.assert_allclose(project_simplex(v), oracles.project_bisection(v), atol=1e-12)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            project_simplex([1.0, np.nan])

    def test_columns_independent(self, rng):
        V = rng.normal(size=(4, 6))
        P, c = project_columns(V)
        for j in range(6):
            np.testing.assert_allclose(P[:, j], project_simplex(V[:, j]), atol=1e-15)
            np.testing.assert_allclose(P[:, j], np.maximum(V[:, j] - c[j], 0.0), atol=1e-15)

    @given(v=vectors)
    def test_on_simplex_and_idempotent(self, v):
        p = project_simplex(v)
        assert p.min() >= 0.0
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)

    @given(u=arrays(np.float64, 7, elements=finite), v=arrays(np.float64, 7, elements=finite))
    def test_nonexpansive(self, u, v):
        d = np.linalg.norm(project_simplex(u) - project_simplex(v))
        assert d <= np.linalg.norm(u - v) + 1e-12

    @given(v=vectors)
    def test_is_closest_point(self, v):
        p = project_simplex(v)
        # variational inequality: <v - p, q - p> <= 0 for all vertices q
        for i in range(v.size):
            q = np.zeros(v.size)
            q[i] = 1.0
            assert float((v - p) @ (q - p)) <= 1e-9 * (1 + np.abs(v).max())


class TestFstar:
    def test_zero_gradient(self, rng):
        lam0 = point(rng, 5)
        lam, c = fstar_grad(np.zeros(5), lam0)
        np.testing.assert_allclose(lam, lam0, atol=1e-15)
        assert c == pytest.approx(0.0, abs=1e-15)
        assert fstar_value(np.zeros(5), lam0) == pytest.approx(0.0, abs=1e-15)

    def test_constant_shift(self, rng):
        lam0 = point(rng, 4)
        lam, c = fstar_grad(np.full(4, 2.5), lam0)
        np.testing.assert_allclose(lam, lam0, atol=1e-14)
        assert c == pytest.approx(2.5, abs=1e-14)
        assert fstar_value(np.full(4, 2.5), lam0) == pytest.approx(2.5, abs=1e-14)

    def test_grid_search_oracle(self, rng):
        for _ in range(5):
            g = rng.normal(size=4)
            lam0 = point(rng, 4)
            lam, _ = fstar_grad(g, lam0)
            np.testing.assert_allclose(lam, oracles.fstar_grid_search(g, lam0), atol=1e-4)

    @given(g=arrays(np.float64, 6, elements=st.floats(-5, 5)))
    def test_closed_form_matches_definition(self, g):
        lam0 = np.full(6, 1 / 6)
        assert fstar_value_closed(g, lam0) == pytest.approx(fstar_value(g, lam0), abs=1e-12)

    @given(g1=arrays(np.float64, 5, elements=st.floats(-5, 5)), g2=arrays(np.float64, 5, elements=st.floats(-5, 5)))
    def test_convex(self, g1, g2):
        lam0 = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
        mid = fstar_value(0.5 * (g1 + g2), lam0)
        assert mid <= 0.5 * (fstar_value(g1, lam0) + fstar_value(g2, lam0)) + 1e-12

    def test_gradient_finite_differences(self, rng):
        for _ in range(10):
            g = rng.normal(size=5)
            lam0 = point(rng, 5)
            lam, _ = fstar_grad(g, lam0)
            fd = oracles.central_difference(lambda x: fstar_value(x, lam0), g)
            assert np.linalg.norm(fd - lam) / np.linalg.norm(lam) < 1e-5

    @given(g=vectors)
    def test_gradient_on_simplex(self, g):
        lam0 = np.full(g.size, 1.0 / g.size)
        lam, _ = fstar_grad(g, lam0)
        as_simplex(lam)


class TestValidation:
    def test_renormalizes_small_drift(self):
        np.testing.assert_allclose(as_simplex([0.5, 0.5 + 5e-10]).sum(), 1.0, atol=1e-15)

    def test_rejects_large_drift(self):
        with pytest.raises(PreconditionError):
            as_simplex([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(PreconditionError):
            as_simplex([1.5, -0.5])

    def test_stack_fibers(self, rng):
        T = random_simplex(rng, 6, 3).reshape(2, 3, 3)
        np.testing.assert_allclose(as_simplex_stack(T, n_lead=2), T, atol=1e-15)
        with pytest.raises(PreconditionError):
            as_simplex_stack(T, n_lead=1)
