import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bt_matrices, chain_matrices, tp
from seqrank import ingest, rankers
from seqrank.errors import ConfigurationError, DegeneracyError, DisconnectedGraphError
from seqrank.evaluation import gamma
from seqrank.model import TransitionMatrix
from seqrank.rankers import METHODS, PageRankParams
from seqrank.spectral import fiedler_vector, stationary_distribution
from seqrank.synth import bt_probabilities

CHAIN3 = [[0, 1, 1], [0, 0, 1], [0, 0, 0]]
FIVE = ["pagerank", "rankcentrality", "serialrank", "leastsquares", "svd"]


def run(name, p: TransitionMatrix, **kw):
    f = ingest.build_flow_matrix(p)
    g = ingest.graph_from_probs(p)
    return rankers.run_method(name, p, f, g, **kw)


def test_pagerank_two_items_closed_form():
    p = tp([[0, 1], [0, 0]])
    q = stationary_distribution(rankers.pagerank_operator(p, 0.15))
    assert q == pytest.approx([0.5 / 1.425, 0.925 / 1.425], abs=1e-10)
    assert run("pagerank", p).order == (0, 1)


def test_pagerank_operator_rows_sum_to_one():
    p = tp(CHAIN3)
    s = rankers.pagerank_operator(p, 0.3)["matrix"]
    assert np.abs(s.sum(axis=1) - 1).max() <= 1e-12
    assert s[2] == pytest.approx(np.full(3, 1 / 3))  # dangling row


def test_pagerank_alpha_bounds():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigurationError):
            PageRankParams(alpha=bad)


def test_personalized_pagerank_recovers_chain():
    res = chain_matrices(8)
    r = rankers.rank_pagerank(res.transition, PageRankParams(personalized=True))
    assert r.order == tuple(range(8))
    assert "personalized" in r.orientation_note


def test_rank_centrality_bt_weights():
    p = TransitionMatrix(bt_probabilities([1.0, 2.0, 4.0]))
    q = stationary_distribution(rankers.rankcentrality_operator(p))
    assert q == pytest.approx([1 / 7, 2 / 7, 4 / 7], abs=1e-9)
    assert run("rankcentrality", p).order == (0, 1, 2)


def test_rank_centrality_operator_is_lazy_walk():
    s = rankers.rankcentrality_operator(tp(CHAIN3))["matrix"]
    assert np.abs(s.sum(axis=1) - 1).max() <= 1e-12
    assert (s >= 0).all()


def test_serial_similarity_three_chain():
    p = tp(CHAIN3)
    s = rankers.serialrank_similarity(p)
    assert s == pytest.approx(np.array([[2.5, 2, 1.5], [2, 2.5, 2], [1.5, 2, 2.5]]))
    op = rankers.serialrank_operator(p)
    assert op["laplacian"] == pytest.approx(0.5 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    v, val = fiedler_vector(op)
    assert val == pytest.approx(0.5)
    assert run("serialrank", p).order == (0, 1, 2)


def test_sync_operator_is_hermitian_phase():
    p = TransitionMatrix(bt_probabilities([1.0, 2.0, 3.0]))
    f = ingest.build_flow_matrix(p)
    h = rankers.sync_operator(f, ingest.graph_from_probs(p))["matrix"]
    assert np.allclose(h, h.conj().T)
    assert np.allclose(np.abs(h[~np.eye(3, dtype=bool)]), 1.0)


def test_sync_binary_chain_is_degenerate():
    res = chain_matrices(6)
    with pytest.raises(DegeneracyError):
        rankers.rank_sync(res.flow, res.graph, res.transition)


def test_sync_two_items_is_fine():
    assert run("syncrank", tp([[0, 1], [0, 0]])).order == (0, 1)


def test_incidence_operator_rows():
    p = tp(CHAIN3)
    op = rankers.incidence_operator(ingest.build_flow_matrix(p), ingest.graph_from_probs(p))
    assert op["incidence"].tolist() == [[1, -1, 0], [1, 0, -1], [0, 1, -1]]
    assert op["measurements"].tolist() == [1, 1, 1]


@pytest.mark.parametrize("name", FIVE)
def test_noiseless_chain(name, chain12):
    r = rankers.run_method(name, chain12.transition, chain12.flow, chain12.graph)
    assert r.order == tuple(range(12))
    assert gamma(r, chain12.transition) == pytest.approx(1.0, abs=1e-9)


def disconnected_p():
    p = np.zeros((4, 4))
    p[0, 1] = p[2, 3] = 0.8
    p[1, 0] = p[3, 2] = 0.2
    return TransitionMatrix(p)


@pytest.mark.parametrize("name", ["rankcentrality", "syncrank", "leastsquares"])
def test_disconnected_graph_raises(name):
    with pytest.raises(DisconnectedGraphError):
        run(name, disconnected_p())


def test_svd_zero_flow_is_degenerate():
    with pytest.raises(DegeneracyError):
        run("svd", TransitionMatrix(np.zeros((3, 3))))


def test_unknown_method():
    with pytest.raises(ConfigurationError):
        run("borda", tp(CHAIN3))


def test_orientation_tie_keeps_ascending():
    p = TransitionMatrix(np.full((2, 2), 0.5) - 0.5 * np.eye(2))
    r = rankers.orient_by_gamma([0.0, 1.0], p)
    assert r.order == (0, 1) and not r.descending


@pytest.mark.parametrize("w", [(1, 2, 4), (1, 2, 3, 4, 5, 6, 7, 8)])
@pytest.mark.parametrize("name", list(METHODS))
def test_bradley_terry_recovery(name, w):
    p, f, g = bt_matrices(w)
    assert rankers.run_method(name, p, f, g).order == tuple(range(len(w)))


weights = st.lists(st.floats(0.3, 1.5), min_size=3, max_size=9).map(np.cumsum)


@given(weights, st.randoms(use_true_random=False))
@settings(max_examples=25, deadline=None)
def test_relabeling_equivariance(w, rnd):
    n = len(w)
    p = bt_probabilities(w)
    perm = list(range(n))
    rnd.shuffle(perm)
    q = p[np.ix_(perm, perm)]
    for name in METHODS:
        base = run(name, TransitionMatrix(p)).order
        moved = run(name, TransitionMatrix(q)).order
        assert tuple(perm[k] for k in moved) == base, name


@given(weights, st.randoms(use_true_random=False))
@settings(max_examples=25, deadline=None)
def test_orientation_is_gamma_optimal(w, rnd):
    n = len(w)
    p = bt_probabilities(w)
    perm = list(range(n))
    rnd.shuffle(perm)
    pt = TransitionMatrix(p[np.ix_(perm, perm)])
    for name in ("serialrank", "leastsquares", "svd"):
        r = run(name, pt)
        assert gamma(r, pt) >= gamma(r.reversed(), pt), name
