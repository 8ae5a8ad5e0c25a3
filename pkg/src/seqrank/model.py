"""Domain types shared by every stage of the pipeline.

All values are immutable after construction. Matrices are dense numpy arrays
flagged read-only; every constructor validates its invariants and raises
:class:`~seqrank.errors.InvariantError` instead of repairing bad input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvariantError

PAIR_TOL = 1e-12
ROW_SUM_TOL = 1e-12

OPERATOR_KINDS = (
    "stochastic-pagerank",
    "stochastic-rankcentrality",
    "similarity-laplacian",
    "hermitian-phase",
    "incidence-system",
)


def _frozen(array, dtype=None) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _square(name: str, a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvariantError(f"{name} must be square, got shape {a.shape}")


@dataclass(frozen=True)
class EventRecord:
    actor_id: str
    item_id: str
    period: int
    grade_points: float | None = None
    cohort_label: str | None = None
    transfer_flag: bool = False

    def __post_init__(self):
        if isinstance(self.period, bool) or not isinstance(self.period, (int, np.integer)):
            raise InvariantError(f"period must be an integer, got {self.period!r}")
        if self.period < 0:
            raise InvariantError(f"period must be non-negative, got {self.period}")
        if self.grade_points is not None and not self.grade_points >= 0:
            raise InvariantError(f"grade_points must be >= 0, got {self.grade_points}")


@dataclass(frozen=True)
class ItemCatalog:
    """Ordered id -> display-name map; position in ``entries`` is the item index."""

    entries: tuple[tuple[str, str], ...] = ()
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((str(i), str(n)) for i, n in self.entries)
        object.__setattr__(self, "entries", entries)
        index = {item_id: k for k, (item_id, _) in enumerate(entries)}
        if len(index) != len(entries):
            raise InvariantError("item ids in a catalog must be unique")
        object.__setattr__(self, "index", index)

    @classmethod
    def from_ids(cls, ids: Iterable[str], names: Mapping[str, str] | None = None) -> ItemCatalog:
        names = names or {}
        return cls(tuple((i, names.get(i, i)) for i in ids))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self.index

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    @property
    def names(self) -> list[str]:
        return [n for _, n in self.entries]

    def name(self, item_id: str) -> str:
        return self.entries[self.index[item_id]][1]

    def subset(self, keep: Iterable[str]) -> ItemCatalog:
        """Restrict to ``keep``, preserving catalog order."""
        keep = set(keep)
        return ItemCatalog(tuple(e for e in self.entries if e[0] in keep))

    def relabel(self, names: Mapping[str, str]) -> ItemCatalog:
        return ItemCatalog(tuple((i, names.get(i, n)) for i, n in self.entries))


@dataclass(frozen=True)
class EventLog:
    """Records plus the item catalog and the actor population.

    ``actors`` is stored explicitly: pruning rare items can leave an actor with
    no records, and such actors still count toward ``actor_count``.
    ``columns`` names the optional CSV columns that were present at parse time.
    """

    records: tuple[EventRecord, ...]
    items: ItemCatalog
    actors: tuple[str, ...]
    columns: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "actors", tuple(self.actors))
        object.__setattr__(self, "columns", frozenset(self.columns))
        if len(set(self.actors)) != len(self.actors):
            raise InvariantError("duplicate actor ids in EventLog.actors")
        known = set(self.actors)
        for r in self.records:
            if r.item_id not in self.items:
                raise InvariantError(f"record item {r.item_id!r} missing from catalog")
            if r.actor_id not in known:
                raise InvariantError(f"record actor {r.actor_id!r} missing from actors")

    @property
    def actor_count(self) -> int:
        return len(self.actors)

    @property
    def n_items(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class CountMatrix:
    """``counts[i, j]`` = number of actors who took item i strictly before item j."""

    counts: np.ndarray
    n_actors: int | None = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        _square("counts", c)
        if c.size and not np.issubdtype(c.dtype, np.integer):
            if not np.array_equal(c, np.round(c)):
                raise InvariantError("counts must be integers")
        c = _frozen(c, dtype=np.int64)
        if (c < 0).any():
            raise InvariantError("counts must be non-negative")
        if np.diagonal(c).any():
            raise InvariantError("count matrix must have a zero diagonal")
        if self.n_actors is not None and c.size and c.max() > self.n_actors:
            raise InvariantError("a pair count exceeds the number of actors")
        object.__setattr__(self, "counts", c)

    @property
    def n_c(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """``probs[i, j]`` = fraction of co-takers who took i before j (0 if never compared)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs, dtype=float)
        _square("probs", p)
        if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
            raise InvariantError("transition probabilities must lie in [0, 1]")
        if np.diagonal(p).any():
            raise InvariantError("transition matrix must have a zero diagonal")
        s = p + p.T
        off = ~np.eye(p.shape[0], dtype=bool)
        ok = (np.abs(s) <= PAIR_TOL) | (np.abs(s - 1.0) <= PAIR_TOL)
        if not ok[off].all():
            raise InvariantError("P_ij + P_ji must be 0 or 1 for every pair")
        object.__setattr__(self, "probs", p)

    @property
    def n_c(self) -> int:
        return self.probs.shape[0]

    @property
    def compared(self) -> np.ndarray:
        """Boolean mask of compared pairs (symmetric, false on the diagonal)."""
        return (self.probs + self.probs.T) > 0.5


@dataclass(frozen=True)
class FlowMatrix:
    """Skew-symmetric recoding of P with ``|F_ij|`` in {0} or [0.5, 1]."""

    flows: np.ndarray

    def __post_init__(self):
        f = _frozen(self.flows, dtype=float)
        _square("flows", f)
        if not np.array_equal(f, -f.T):
            raise InvariantError("flow matrix must be skew-symmetric")
        a = np.abs(f)
        bad = (a > PAIR_TOL) & ((a < 0.5 - PAIR_TOL) | (a > 1 + PAIR_TOL))
        if bad.any():
            raise InvariantError("|F_ij| must be 0 or lie in [0.5, 1]")
        object.__setattr__(self, "flows", f)

    @property
    def n_c(self) -> int:
        return self.flows.shape[0]


@dataclass(frozen=True)
class MeasurementGraph:
    n_c: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j or not (0 <= i < self.n_c and 0 <= j < self.n_c):
                raise InvariantError(f"invalid edge ({i}, {j})")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @property
    def m(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_c, self.n_c), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a

    def components(self) -> list[list[int]]:
        """Connected components as sorted index lists, ordered by smallest member."""
        if self.n_c == 0:
            return []
        e = self.sorted_edges()
        rows = [i for i, _ in e]
        cols = [j for _, j in e]
        graph = coo_matrix((np.ones(len(e)), (rows, cols)), shape=(self.n_c, self.n_c))
        _, labels = connected_components(graph, directed=False)
        groups: dict[int, list[int]] = {}
        for node, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(node)
        return sorted(groups.values(), key=lambda g: g[0])

    def is_connected(self) -> bool:
        return len(self.components()) <= 1


def sort_order(scores: Sequence[float], descending: bool = False) -> tuple[int, ...]:
    """Indices sorted by score, ties broken by ascending index."""
    s = np.asarray(scores, dtype=float)
    idx = np.arange(len(s))
    key = -s if descending else s
    return tuple(int(k) for k in np.lexsort((idx, key)))


@dataclass(frozen=True)
class Ranking:
    """An ordering of item indices (position 0 = earliest) and the scores it was read from."""

    order: tuple[int, ...]
    scores: np.ndarray
    method_tag: str = ""
    orientation_note: str = ""
    descending: bool = False

    def __post_init__(self):
        order = tuple(int(k) for k in self.order)
        scores = _frozen(self.scores, dtype=float)
        n = len(order)
        if sorted(order) != list(range(n)):
            raise InvariantError("ranking order must be a permutation of 0..n-1")
        if scores.shape != (n,):
            raise InvariantError("score vector length must match the order length")
        if order != sort_order(scores, self.descending):
            raise InvariantError("ranking order is not sorted by its scores")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def from_scores(cls, scores, descending: bool = False, method_tag: str = "",
                    orientation_note: str = "") -> Ranking:
        return cls(sort_order(scores, descending), scores, method_tag, orientation_note, descending)

    @classmethod
    def from_order(cls, order: Sequence[int], method_tag: str = "",
                   orientation_note: str = "") -> Ranking:
        """Ranking whose scores are simply the positions."""
        order = [int(k) for k in order]
        pos = np.empty(len(order))
        pos[order] = np.arange(len(order))
        return cls(tuple(order), pos, method_tag, orientation_note)

    def __len__(self) -> int:
        return len(self.order)

    def positions(self) -> np.ndarray:
        pos = np.empty(len(self.order), dtype=np.int64)
        pos[list(self.order)] = np.arange(len(self.order))
        return pos

    def reversed(self) -> Ranking:
        return Ranking.from_order(self.order[::-1], self.method_tag,
                                  (self.orientation_note + "; reversed").lstrip("; "))

    def item_ids(self, catalog: ItemCatalog) -> list[str]:
        ids = catalog.ids
        return [ids[k] for k in self.order]


@dataclass(frozen=True)
class MethodOperator:
    """A method's intermediate operator.

    Payload keys by kind:
        stochastic-*: ``matrix``
        similarity-laplacian: ``laplacian`` (optionally ``similarity``)
        hermitian-phase: ``matrix`` (optionally ``edges``)
        incidence-system: ``incidence`` (m x n), ``measurements`` (m,)
    """

    kind: str
    payload: Mapping[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise InvariantError(f"unknown operator kind {self.kind!r}")
        frozen = {k: _frozen(v) for k, v in self.payload.items()}
        object.__setattr__(self, "payload", frozen)
        getattr(self, "_check_" + self.kind.split("-")[0])()

    def __getitem__(self, key: str) -> np.ndarray:
        return self.payload[key]

    def _check_stochastic(self):
        s = self.payload["matrix"]
        _square("stochastic matrix", s)
        if (s < 0).any():
            raise InvariantError("stochastic matrix has negative entries")
        if s.size and np.abs(s.sum(axis=1) - 1).max() > ROW_SUM_TOL:
            raise InvariantError("stochastic matrix rows must sum to 1")

    def _check_similarity(self):
        lap = self.payload["laplacian"]
        _square("laplacian", lap)
        if not np.allclose(lap, lap.T, atol=ROW_SUM_TOL, rtol=0):
            raise InvariantError("laplacian must be symmetric")
        scale = max(1.0, float(np.abs(lap).max())) if lap.size else 1.0
        if lap.size and np.abs(lap.sum(axis=1)).max() > ROW_SUM_TOL * scale:
            raise InvariantError("laplacian rows must sum to 0")
        off = lap - np.diag(np.diagonal(lap))
        if (off > ROW_SUM_TOL * scale).any():
            # nonpositive off-diagonal + zero row sums => diagonally dominant => PSD
            raise InvariantError("laplacian off-diagonal entries must be <= 0")

    def _check_hermitian(self):
        h = self.payload["matrix"]
        _square("hermitian matrix", h)
        if not np.allclose(h, h.conj().T, atol=1e-12, rtol=0):
            raise InvariantError("phase matrix must be conjugate-symmetric")
        mod = np.abs(h)
        off = ~np.eye(h.shape[0], dtype=bool)
        ok = (mod < 1e-12) | (np.abs(mod - 1) < 1e-12)
        if not ok[off].all():
            raise InvariantError("off-diagonal phase entries must have modulus 0 or 1")
        if "edges" in self.payload:
            on_edge = np.asarray(self.payload["edges"], dtype=bool)
            if not np.array_equal(on_edge[off], (mod > 0.5)[off]):
                raise InvariantError("phase entries must be nonzero exactly on edges")

    def _check_incidence(self):
        b = self.payload["incidence"]
        w = self.payload["measurements"]
        if b.ndim != 2 or w.shape != (b.shape[0],):
            raise InvariantError("incidence system shapes do not match")
        for row in b:
            if (row == 1).sum() != 1 or (row == -1).sum() != 1 or (row != 0).sum() != 2:
                raise InvariantError("each incidence row needs exactly one +1 and one -1")
