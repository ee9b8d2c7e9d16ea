import numpy as np
import pytest

from synthpanel import ValidationError, WeightVector, minimize_simplex_qp, project_to_simplex


class TestWeightVector:
    def test_valid(self):
        w = WeightVector([0.25, 0.75])
        assert len(w) == 2
        assert w[1] == 0.75
        assert w.values.sum() == 1.0

    def test_clamps_tiny_negatives(self):
        w = WeightVector([1.0 + 5e-13, -5e-13])
        assert w[1] == 0.0

    def test_rejects_real_negatives(self):
        with pytest.raises(ValidationError):
            WeightVector([1.1, -0.1])

    def test_rejects_bad_sum(self):
        with pytest.raises(ValidationError):
            WeightVector([0.5, 0.4])

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            WeightVector([])

    def test_immutable(self):
        w = WeightVector([0.5, 0.5])
        with pytest.raises(ValueError):
            w.values[0] = 1.0

    def test_as_mapping(self):
        w = WeightVector([0.3, 0.7])
        assert w.as_mapping(["a", "b"]) == {"a": 0.3, "b": 0.7}
        with pytest.raises(ValidationError):
            w.as_mapping(["a"])


class TestProjection:
    def test_already_on_simplex(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_to_simplex(v), v)

    def test_matches_quadratic_oracle(self):
        # Oracle: dense scan over the 2-simplex for argmin ||x - v||^2.
        rng = np.random.default_rng(5)
        step = 0.001
        w1 = np.arange(0.0, 1.0 + step / 2, step)
        for _ in range(20):
            v = rng.normal(0, 2, size=3)
            best, best_d = None, np.inf
            for a in w1:
                b = np.arange(0.0, 1.0 - a + step / 2, step)
                c = 1.0 - a - b
                pts = np.stack([np.full_like(b, a), b, c])
                d = np.sum((pts - v[:, None]) ** 2, axis=0)
                j = int(np.argmin(d))
                if d[j] < best_d:
                    best_d, best = d[j], pts[:, j]
            proj = project_to_simplex(v)
            assert float(np.sum((proj - v) ** 2)) <= best_d + 1e-9
            np.testing.assert_allclose(proj, best, atol=2 * step)

    def test_output_is_feasible(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            v = rng.normal(0, 5, size=rng.integers(1, 12))
            p = project_to_simplex(v)
            assert p.min() >= 0.0
            assert abs(p.sum() - 1.0) < 1e-12


class TestSimplexQp:
    def test_single_column(self):
        w = minimize_simplex_qp(np.array([[2.0], [1.0]]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(w, [1.0])

    def test_interior_solution(self):
        w = minimize_simplex_qp(np.array([[1.0, 3.0]]), np.array([2.0]))
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-10)

    def test_vertex_solution(self):
        A = np.array([[1.0, 5.0], [2.0, 6.0]])
        w = minimize_simplex_qp(A, np.array([1.0, 2.0]))
        np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-10)

    def test_constant_objective_keeps_uniform_start(self):
        w = minimize_simplex_qp(np.zeros((3, 4)), np.zeros(3))
        np.testing.assert_allclose(w, np.full(4, 0.25))

    def test_beats_vertices_and_uniform(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            k = int(rng.integers(1, 6))
            m = int(rng.integers(2, 8))
            A = rng.normal(size=(k, m))
            b = rng.normal(size=k)
            w = minimize_simplex_qp(A, b)
            obj = float(np.sum((A @ w - b) ** 2))
            for j in range(m):
                e = np.zeros(m)
                e[j] = 1.0
                assert obj <= float(np.sum((A @ e - b) ** 2)) + 1e-9
            u = np.full(m, 1.0 / m)
            assert obj <= float(np.sum((A @ u - b) ** 2)) + 1e-9

    def test_duplicate_column_never_hurts(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            k, m = int(rng.integers(1, 5)), int(rng.integers(2, 6))
            A = rng.normal(size=(k, m))
            b = rng.normal(size=k)
            base = float(np.sum((A @ minimize_simplex_qp(A, b) - b) ** 2))
            A_dup = np.hstack([A, A[:, :1]])
            dup = float(np.sum((A_dup @ minimize_simplex_qp(A_dup, b) - b) ** 2))
            assert dup <= base + 1e-9

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValidationError):
            minimize_simplex_qp(np.ones((2, 2)), np.ones(3))
