"""The six rank-aggregation methods.

Every ranker returns a :class:`~seqrank.model.Ranking` whose position 0 is the
item taken earliest. Methods whose score vector has no intrinsic sign
(Fiedler vector, least-squares offsets, singular vectors, synchronization
angles) pick their reading direction by the consistency coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DegeneracyError, DisconnectedGraphError, AngleUndefinedError
from .evaluation import gamma
from .ingest import graph_from_probs
from .model import FlowMatrix, MeasurementGraph, MethodOperator, Ranking, TransitionMatrix
from .spectral import (
    DEFAULT_OPTIONS,
    SolveOptions,
    fiedler_vector,
    leading_left_basis,
    solve_incidence_least_squares,
    stationary_distribution,
    top_eigenvector_hermitian,
)


@dataclass(frozen=True)
class PageRankParams:
    alpha: float = 0.15
    personalized: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")


# -- operators ---------------------------------------------------------------

def pagerank_operator(p: TransitionMatrix, alpha: float,
                      teleport: np.ndarray | None = None) -> MethodOperator:
    """``(1 - alpha) D^-1 P + alpha 1 v^T`` with dangling rows made uniform first."""
    probs = p.probs
    n = p.n_c
    v = np.full(n, 1.0 / n) if teleport is None else np.asarray(teleport, dtype=float)
    out_deg = probs.sum(axis=1)
    walk = np.full((n, n), 1.0 / n)
    live = out_deg > 0
    walk[live] = probs[live] / out_deg[live, None]
    s = (1 - alpha) * walk + alpha * v[None, :]
    s /= s.sum(axis=1, keepdims=True)
    return MethodOperator("stochastic-pagerank", {"matrix": s})


def rankcentrality_operator(p: TransitionMatrix) -> MethodOperator:
    """``P / d_max + (I - D / d_max)``: a lazy walk along comparison weights."""
    probs = p.probs
    n = p.n_c
    deg = probs.sum(axis=1)
    d_max = deg.max() if n else 0.0
    if d_max == 0:
        s = np.eye(n)
    else:
        s = probs / d_max
        s[np.diag_indices(n)] = 1.0 - deg / d_max
    return MethodOperator("stochastic-rankcentrality", {"matrix": s})


def serialrank_similarity(p: TransitionMatrix) -> np.ndarray:
    """Sum over reference items k of the agreement matrices A_k.

    ``(A_k)_ij = 1 - |P_ik - P_jk| / 2`` when both i and j were compared with k,
    otherwise 1/2. An item is never compared with itself, so k = i or k = j
    contributes the constant 1/2.
    """
    probs = p.probs
    cmp = p.compared
    n = p.n_c
    s = np.zeros((n, n))
    for k in range(n):
        col = probs[:, k]
        both = cmp[:, k][:, None] & cmp[:, k][None, :]
        s += np.where(both, 1.0 - np.abs(col[:, None] - col[None, :]) / 2.0, 0.5)
    return s


def serialrank_operator(p: TransitionMatrix) -> MethodOperator:
    """Shift the similarity so the least similar pair sits at 0, then form ``L = D - S``."""
    s = serialrank_similarity(p)
    n = p.n_c
    off = ~np.eye(n, dtype=bool)
    if n > 1:
        s = s - s[off].min()
    np.fill_diagonal(s, 0.0)
    s = (s + s.T) / 2
    lap = np.diag(s.sum(axis=1)) - s
    return MethodOperator("similarity-laplacian", {"laplacian": lap, "similarity": s})


def sync_operator(f: FlowMatrix, g: MeasurementGraph) -> MethodOperator:
    """``H_ij = exp(i pi F_ij)`` on measured pairs, 0 elsewhere."""
    adj = g.adjacency()
    h = np.where(adj, np.exp(1j * np.pi * f.flows), 0.0)
    return MethodOperator("hermitian-phase", {"matrix": h, "edges": adj})


def incidence_operator(f: FlowMatrix, g: MeasurementGraph) -> MethodOperator:
    """One row per edge (i < j): +1 at i, -1 at j, measurement ``F_ij``."""
    edges = g.sorted_edges()
    b = np.zeros((len(edges), g.n_c))
    w = np.zeros(len(edges))
    for e, (i, j) in enumerate(edges):
        b[e, i] = 1.0
        b[e, j] = -1.0
        w[e] = f.flows[i, j]
    return MethodOperator("incidence-system", {"incidence": b, "measurements": w})


# -- orientation -------------------------------------------------------------

def orient_by_gamma(scores, p: TransitionMatrix, method_tag: str = "", note: str = "") -> Ranking:
    """Read ``scores`` ascending or descending, whichever is more consistent with P.

    An exact tie keeps ascending.
    """
    up = Ranking.from_scores(scores, False, method_tag)
    down = Ranking.from_scores(scores, True, method_tag)
    if p.n_c < 2:
        return Ranking.from_scores(scores, False, method_tag, _join(note, "ascending"))
    g_up, g_down = gamma(up, p), gamma(down, p)
    if g_down > g_up:
        return Ranking.from_scores(scores, True, method_tag,
                                   _join(note, f"descending (gamma {g_down:.6f} vs {g_up:.6f})"))
    return Ranking.from_scores(scores, False, method_tag,
                               _join(note, f"ascending (gamma {g_up:.6f} vs {g_down:.6f})"))


def _join(*parts: str) -> str:
    return "; ".join(x for x in parts if x)


def _require_connected(g: MeasurementGraph) -> None:
    comps = g.components()
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)


# -- rankers -----------------------------------------------------------------

def rank_pagerank(p: TransitionMatrix, params: PageRankParams = PageRankParams(),
                  opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    """Ascending stationary distribution of the damped walk on P.

    With ``personalized`` a second solve teleports to the distribution
    proportional to ``1 - q`` from the first solve, favouring items that look early.
    """
    q = stationary_distribution(pagerank_operator(p, params.alpha), opts)
    note = f"alpha={params.alpha}; ascending stationary mass"
    if params.personalized:
        v = np.clip(1.0 - q, 0.0, None)
        if v.sum() > 0:
            v = v / v.sum()
            q = stationary_distribution(pagerank_operator(p, params.alpha, v), opts)
            note += "; personalized teleport ~ (1 - q)"
    return Ranking.from_scores(q, False, "pagerank", note)


def rank_centrality(p: TransitionMatrix, opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    """Ascending stationary distribution of the lazy comparison walk.

    Mass flows from each item toward the items taken after it, so later items
    collect more stationary mass.
    """
    _require_connected(graph_from_probs(p))
    q = stationary_distribution(rankcentrality_operator(p), opts)
    return Ranking.from_scores(q, False, "rankcentrality", "ascending stationary mass")


def rank_serial(p: TransitionMatrix, opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    if p.n_c < 2:
        raise DegeneracyError("SerialRank needs at least two items")
    vec, val = fiedler_vector(serialrank_operator(p), opts)
    return orient_by_gamma(vec, p, "serialrank", f"fiedler eigenvalue {val:.6g}")


def _circular_candidates(theta: np.ndarray):
    """Every rotation start and direction of the circular order given by ``theta``.

    Yields ``(scores, note)`` where ascending ``scores`` reproduces the candidate.
    """
    two_pi = 2 * np.pi
    starts = sorted(set(np.round(theta, 12).tolist()))
    for direction, sign in (("counterclockwise", 1.0), ("clockwise", -1.0)):
        for start in starts:
            shifted = np.mod(sign * (theta - start), two_pi)
            shifted[np.isclose(shifted, two_pi, atol=1e-12, rtol=0)] = 0.0
            shifted[np.abs(theta - start) <= 1e-12] = 0.0
            yield shifted, f"{direction} from angle {start:.6f}"


def rank_sync(f: FlowMatrix, g: MeasurementGraph, p: TransitionMatrix,
              opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    """Angular synchronization of ``pi * F`` followed by the best circular cut.

    Angles come from the top eigenvector of the phase matrix; all rotations
    and both directions of the resulting circular order are scored and the
    most consistent one is returned.
    """
    _require_connected(g)
    v, val = top_eigenvector_hermitian(sync_operator(f, g), opts)
    mod = np.abs(v)
    for i, m in enumerate(mod):
        if m < opts.tolerance:
            raise AngleUndefinedError(i, float(m))
    theta = np.mod(np.angle(v / mod), 2 * np.pi)
    best: tuple[float, np.ndarray, str] | None = None
    for scores, note in _circular_candidates(theta):
        r = Ranking.from_scores(scores)
        value = gamma(r, p) if p.n_c >= 2 else 0.0
        if best is None or value > best[0]:
            best = (value, scores, note)
    assert best is not None
    return Ranking.from_scores(best[1], False, "syncrank",
                               f"top eigenvalue {val:.6g}; {best[2]} (gamma {best[0]:.6f})")


def rank_least_squares(f: FlowMatrix, g: MeasurementGraph, p: TransitionMatrix,
                       opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    x, res = solve_incidence_least_squares(incidence_operator(f, g), opts)
    return orient_by_gamma(x, p, "leastsquares", f"residual^2 {res:.6g}")


def svd_ranking(matrix: np.ndarray, p: TransitionMatrix,
                opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    """Best of the two leading left singular directions of a skew matrix, each read both ways.

    See :func:`~seqrank.spectral.leading_left_basis` for how the directions are
    fixed when the top singular value is doubled. Candidates are scored by the consistency coefficient against ``p``.
    """
    best: tuple[float, Ranking] | None = None
    for idx, (sigma, u) in enumerate(leading_left_basis(matrix, opts), start=1):
        for descending in (False, True):
            r = Ranking.from_scores(
                u, descending, "svd",
                f"u{idx} (sigma {sigma:.6g}) {'descending' if descending else 'ascending'}",
            )
            value = gamma(r, p) if p.n_c >= 2 else 0.0
            if best is None or value > best[0]:
                best = (value, r)
    assert best is not None
    r = best[1]
    return Ranking(r.order, r.scores, "svd", f"{r.orientation_note} (gamma {best[0]:.6f})",
                   r.descending)


def rank_svd(f: FlowMatrix, p: TransitionMatrix, opts: SolveOptions = DEFAULT_OPTIONS) -> Ranking:
    if not np.any(f.flows):
        raise DegeneracyError("flow matrix is zero; it carries no ordering information")
    return svd_ranking(f.flows, p, opts)


# -- registry ----------------------------------------------------------------

Runner = Callable[[TransitionMatrix, FlowMatrix, MeasurementGraph, SolveOptions, PageRankParams], Ranking]

METHODS: dict[str, Runner] = {
    "pagerank": lambda p, f, g, o, pr: rank_pagerank(p, pr, o),
    "rankcentrality": lambda p, f, g, o, pr: rank_centrality(p, o),
    "serialrank": lambda p, f, g, o, pr: rank_serial(p, o),
    "syncrank": lambda p, f, g, o, pr: rank_sync(f, g, p, o),
    "leastsquares": lambda p, f, g, o, pr: rank_least_squares(f, g, p, o),
    "svd": lambda p, f, g, o, pr: rank_svd(f, p, o),
}

DISPLAY_NAMES = {
    "pagerank": "PageRank",
    "rankcentrality": "Rank Centrality",
    "serialrank": "SerialRank",
    "syncrank": "SyncRank",
    "leastsquares": "Least Squares",
    "svd": "SVD",
}


def run_method(name: str, p: TransitionMatrix, f: FlowMatrix, g: MeasurementGraph,
               opts: SolveOptions = DEFAULT_OPTIONS,
               pagerank_params: PageRankParams = PageRankParams()) -> Ranking:
    try:
        runner = METHODS[name]
    except KeyError:
        raise ConfigurationError(f"unknown method {name!r}; choose from {sorted(METHODS)}")
    return runner(p, f, g, opts, pagerank_params)
