import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqrank.errors import ConfigurationError, ConvergenceError, DegeneracyError, DisconnectedGraphError
from seqrank.model import MethodOperator
from seqrank.spectral import (
    SolveOptions,
    fiedler_vector,
    solve_incidence_least_squares,
    stationary_distribution,
    top_eigenvector_hermitian,
    top_singular_pairs,
)


def stochastic(s):
    return MethodOperator("stochastic-pagerank", {"matrix": np.asarray(s, dtype=float)})


def laplacian(l):
    return MethodOperator("similarity-laplacian", {"laplacian": np.asarray(l, dtype=float)})


def incidence(edges, w, n):
    b = np.zeros((len(edges), n))
    for e, (i, j) in enumerate(edges):
        b[e, i], b[e, j] = 1.0, -1.0
    return MethodOperator("incidence-system", {"incidence": b, "measurements": np.asarray(w, float)})


def linear_solve_stationary(s):
    n = len(s)
    a = np.vstack([s.T - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(a, rhs, rcond=None)[0]


# -- stationary distributions ---------------------------------------------------

def test_two_state_closed_form():
    s = [[0.075, 0.925], [0.5, 0.5]]
    q = stationary_distribution(stochastic(s))
    assert q == pytest.approx([0.5 / 1.425, 0.925 / 1.425], abs=1e-10)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_stationary_matches_linear_solve(n, seed):
    rng = np.random.default_rng(seed)
    s = rng.random((n, n)) + 0.05
    s /= s.sum(axis=1, keepdims=True)
    q = stationary_distribution(stochastic(s))
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(q @ s - q).sum() <= 1e-10
    assert q == pytest.approx(linear_solve_stationary(s), abs=1e-8)


def test_stationary_nonconvergence_reports_residual():
    s = [[0.5, 0.5], [0.0, 1.0]]
    with pytest.raises(ConvergenceError) as exc:
        stationary_distribution(stochastic(s), SolveOptions(tolerance=1e-14, max_iterations=3))
    assert exc.value.iterations == 3 and exc.value.residual > 0


def test_solve_options_validation():
    with pytest.raises(ConfigurationError):
        SolveOptions(tolerance=0)
    with pytest.raises(ConfigurationError):
        SolveOptions(max_iterations=0)


# -- Fiedler vectors ------------------------------------------------------------

def test_path_fiedler_is_analytic():
    v, val = fiedler_vector(laplacian([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    assert val == pytest.approx(1.0, abs=1e-12)
    assert v == pytest.approx(np.array([1, 0, -1]) / np.sqrt(2), abs=1e-12)


def test_two_nodes():
    v, val = fiedler_vector(laplacian([[1, -1], [-1, 1]]))
    assert val == pytest.approx(2.0)
    assert v == pytest.approx(np.array([1, -1]) / np.sqrt(2), abs=1e-12)


def test_complete_graph_canonical_vector():
    v, val = fiedler_vector(laplacian(3 * np.eye(3) - np.ones((3, 3))))
    assert val == pytest.approx(3.0)
    assert v == pytest.approx(np.array([2, -1, -1]) / np.sqrt(6), abs=1e-12)


def test_disconnected_similarity_is_degenerate():
    l = np.zeros((4, 4))
    l[:2, :2] = [[1, -1], [-1, 1]]
    l[2:, 2:] = [[1, -1], [-1, 1]]
    with pytest.raises(DegeneracyError):
        fiedler_vector(laplacian(l))


@given(st.integers(3, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_fiedler_orthogonal_to_ones(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.random((n, n)) + 0.1
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0)
    l = np.diag(w.sum(1)) - w
    v, val = fiedler_vector(laplacian(l))
    assert abs(v.sum()) < 1e-12
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert val == pytest.approx(np.linalg.eigvalsh(l)[1], abs=1e-10)
    assert l @ v == pytest.approx(val * v, abs=1e-9)


# -- Hermitian eigenvectors -----------------------------------------------------

def test_two_by_two_phase_offset():
    phi = 0.7 * np.pi
    h = np.array([[0, np.exp(1j * phi)], [np.exp(-1j * phi), 0]])
    v, val = top_eigenvector_hermitian(MethodOperator("hermitian-phase", {"matrix": h}))
    assert val == pytest.approx(1.0)
    diff = np.mod(np.angle(v[0]) - np.angle(v[1]), 2 * np.pi)
    assert diff == pytest.approx(phi, abs=1e-12)
    # equal magnitudes: the lowest index carries the real positive phase
    assert abs(v[0].imag) < 1e-12 and v[0].real > 0


def test_repeated_top_eigenvalue_is_degenerate():
    h = np.eye(3) - np.ones((3, 3))  # every phase exp(i pi) = -1
    with pytest.raises(DegeneracyError):
        top_eigenvector_hermitian(MethodOperator("hermitian-phase", {"matrix": h.astype(complex)}))


# -- SVD ------------------------------------------------------------------------

@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_singular_values_match_gram_eigenvalues(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    a = a - a.T
    pairs = top_singular_pairs(a, n)
    gram = np.linalg.eigvalsh(a.T @ a)[::-1]
    assert [s * s for s, _, _ in pairs] == pytest.approx(gram, abs=1e-9)
    for s, u, v in pairs[:1]:
        assert a @ v == pytest.approx(s * u, abs=1e-9)
        k = int(np.argmax(np.abs(u)))
        assert u[k] > 0


def test_singular_pairs_k_range():
    with pytest.raises(ConfigurationError):
        top_singular_pairs(np.zeros((2, 2)), 3)


# -- least squares ----------------------------------------------------------------

def test_triangle_with_consistent_offsets():
    # x = (2/3, 0, -2/3) minimises (x0-x1-1)^2 + (x0-x2-1)^2 + (x1-x2-1)^2
    x, res = solve_incidence_least_squares(incidence([(0, 1), (0, 2), (1, 2)], [1, 1, 1], 3))
    assert x == pytest.approx([2 / 3, 0, -2 / 3], abs=1e-12)
    assert res == pytest.approx(1 / 3, abs=1e-12)


def test_cyclic_triangle_has_zero_solution():
    x, res = solve_incidence_least_squares(incidence([(0, 1), (1, 2), (0, 2)], [1, 1, -1], 3))
    assert x == pytest.approx([0, 0, 0], abs=1e-12)
    assert res == pytest.approx(3.0, abs=1e-12)


def test_disconnected_least_squares():
    with pytest.raises(DisconnectedGraphError) as exc:
        solve_incidence_least_squares(incidence([(0, 1), (2, 3)], [1, 1], 4))
    assert exc.value.components == [[0, 1], [2, 3]]


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_least_squares_matches_normal_equations(n, seed):
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += [(i, j) for i in range(n) for j in range(i + 2, n) if rng.random() < 0.5]
    w = rng.standard_normal(len(edges))
    op = incidence(edges, w, n)
    x, res = solve_incidence_least_squares(op)
    b = op["incidence"]
    ref = np.linalg.pinv(b.T @ b) @ b.T @ w
    assert x == pytest.approx(ref - ref.mean(), abs=1e-9)
    assert abs(x.sum()) < 1e-9
    assert res == pytest.approx(float(np.sum((b @ ref - w) ** 2)), abs=1e-9)
