"""Consistency scoring, rank correlation, method comparison and table/grid emitters."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ItemMismatchError, SeqRankError, UndefinedMetricError
from .model import FlowMatrix, ItemCatalog, MeasurementGraph, Ranking, TransitionMatrix

logger = logging.getLogger(__name__)


def gamma_details(order: Sequence[int], p: TransitionMatrix) -> tuple[float, int]:
    """Consistency coefficient of an ordering plus the number of skipped pairs.

    Items are relabelled so that position in ``order`` becomes the index, then
    ``4 / (n^2 - n) * sum_{i<j} (P_ij - 0.5)`` is taken over compared pairs.
    Uncompared pairs (stored as P_ij = P_ji = 0) are left out of the sum but the
    normalisation is kept, so reversing a ranking negates the score exactly.
    """
    n = p.n_c
    if n < 2:
        raise UndefinedMetricError("the consistency coefficient needs at least two items")
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(n)):
        raise ItemMismatchError("ranking does not cover the transition matrix items")
    pr = p.probs[np.ix_(order, order)]
    iu = np.triu_indices(n, k=1)
    upper = pr[iu]
    compared = (upper + pr.T[iu]) > 0.5
    total = float((upper[compared] - 0.5).sum())
    return 4.0 * total / (n * n - n), int((~compared).sum())


def gamma(r: Ranking | Sequence[int], p: TransitionMatrix) -> float:
    order = r.order if isinstance(r, Ranking) else r
    return gamma_details(order, p)[0]


def kendall_tau(a: Ranking | Sequence[int], b: Ranking | Sequence[int]) -> float:
    """Kendall rank correlation between two orderings of the same items.

    Both inputs are permutations (no ties), so this is (concordant -
    discordant) / C(n, 2), counted in integers.
    """
    oa = list(a.order if isinstance(a, Ranking) else a)
    ob = list(b.order if isinstance(b, Ranking) else b)
    if sorted(oa) != sorted(ob) or len(set(oa)) != len(oa):
        raise ItemMismatchError("rankings cover different item sets")
    n = len(oa)
    if n < 2:
        return 1.0
    items = sorted(oa)
    pos_a = {item: k for k, item in enumerate(oa)}
    pos_b = {item: k for k, item in enumerate(ob)}
    pa = np.array([pos_a[i] for i in items])
    pb = np.array([pos_b[i] for i in items])
    iu = np.triu_indices(n, k=1)
    agree = np.sign(pa[:, None] - pa[None, :])[iu] * np.sign(pb[:, None] - pb[None, :])[iu]
    return int(agree.sum()) / (n * (n - 1) // 2)


@dataclass
class MethodReport:
    method_tag: str
    ranking: Ranking | None
    gamma: float | None
    runtime_ms: float
    notes: str = ""
    skipped_pairs: int = 0
    error_type: str | None = None
    error: SeqRankError | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.ranking is not None


def _run_one(name: str, p: TransitionMatrix, f: FlowMatrix, g: MeasurementGraph,
             opts, pagerank_params) -> MethodReport:
    from .rankers import run_method

    start = time.perf_counter()
    try:
        ranking = run_method(name, p, f, g, opts, pagerank_params)
    except SeqRankError as exc:
        ms = (time.perf_counter() - start) * 1000
        logger.info("%s failed: %s", name, exc)
        return MethodReport(name, None, None, ms, f"{type(exc).__name__}: {exc}",
                            error_type=type(exc).__name__, error=exc)
    ms = (time.perf_counter() - start) * 1000
    value, skipped = gamma_details(ranking.order, p)
    return MethodReport(name, ranking, value, ms, ranking.orientation_note, skipped)


def method_report(methods: Sequence[str], p: TransitionMatrix, f: FlowMatrix,
                  g: MeasurementGraph, opts=None, pagerank_params=None,
                  max_workers: int = 1) -> list[MethodReport]:
    """Run each requested ranker and score it.

    A failing method becomes a report with ``ranking=None`` and the error in
    ``notes``; the batch never aborts. Reports come back in canonical method
    order regardless of the order requested or of thread completion.
    """
    from .rankers import METHODS, PageRankParams
    from .spectral import DEFAULT_OPTIONS

    opts = opts or DEFAULT_OPTIONS
    pagerank_params = pagerank_params or PageRankParams()
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigurationError(f"unknown methods: {unknown}")
    wanted = [m for m in METHODS if m in set(methods)]
    if max_workers > 1 and len(wanted) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_run_one, m, p, f, g, opts, pagerank_params) for m in wanted]
            return [fut.result() for fut in futures]
    return [_run_one(m, p, f, g, opts, pagerank_params) for m in wanted]


def _truncate(text: str, width: int | None) -> str:
    if width is None or len(text) <= width:
        return text
    return text[: max(width - 1, 1)] + "…"


@dataclass
class TextTable:
    """A rectangular table of strings with headers, rendered as aligned text or CSV."""

    headers: list[str]
    rows: list[list[str]]
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        cols = [self.headers] + self.rows
        widths = [max(len(r[k]) for r in cols) for k in range(len(self.headers))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(self.headers, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for r in self.rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        lines.extend(f"# {n}" for n in self.notes)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.headers)
        w.writerows(self.rows)
        return buf.getvalue()


def emit_comparison_table(columns: Sequence, catalog: ItemCatalog | None, top_k: int,
                          name_width: int | None = 24) -> TextTable:
    """One column per ranking, one row per position 1..top_k, cells are display names.

    Columns may be reports (failed reports are skipped), rankings (headed by
    their method tag), ``(header, ranking)`` pairs, or ``(header, ranking,
    catalog)`` triples for columns over different item sets (one column per
    cohort). ``top_k`` beyond the longest column is clamped and noted; shorter
    columns are padded with blanks.
    """
    named: list[tuple[str, Ranking, ItemCatalog]] = []
    for col in columns:
        if isinstance(col, MethodReport):
            if col.ranking is not None:
                named.append((col.method_tag, col.ranking, catalog))
        elif isinstance(col, Ranking):
            named.append((col.method_tag, col, catalog))
        elif len(col) == 3:
            named.append((col[0], col[1], col[2]))
        else:
            named.append((col[0], col[1], catalog))
    for header, r, cat in named:
        if cat is None:
            raise ItemMismatchError(f"no catalog for column {header!r}")
        if len(r) != len(cat):
            raise ItemMismatchError(
                f"ranking {header!r} has {len(r)} items, catalog has {len(cat)}")
    notes = []
    n = max((len(r) for _, r, _ in named), default=0)
    k = top_k
    if top_k > n:
        k = n
        notes.append(f"top_k={top_k} clamped to {n} items")
        logger.warning(notes[-1])
    rows = []
    for pos in range(k):
        row = [str(pos + 1)]
        for _, r, cat in named:
            row.append(_truncate(cat.names[r.order[pos]], name_width) if pos < len(r) else "")
        rows.append(row)
    return TextTable(["rank"] + [h for h, _, _ in named], rows, notes)


def gamma_table(reports_by_cohort: dict[str, list[MethodReport]], digits: int = 3) -> TextTable:
    """Methods as rows, cohorts as columns, consistency coefficients as cells."""
    cohorts = list(reports_by_cohort)
    methods: list[str] = []
    for reps in reports_by_cohort.values():
        for r in reps:
            if r.method_tag not in methods:
                methods.append(r.method_tag)
    rows = []
    for m in methods:
        row = [m]
        for c in cohorts:
            rep = next((r for r in reports_by_cohort[c] if r.method_tag == m), None)
            if rep is None:
                row.append("")
            elif rep.gamma is None:
                row.append("error")
            else:
                row.append(f"{rep.gamma:.{digits}f}")
        rows.append(row)
    notes = [f"{c}/{r.method_tag}: {r.notes}" for c in cohorts
             for r in reports_by_cohort[c] if not r.ok]
    return TextTable(["method"] + cohorts, rows, notes)


def emit_heatmap_matrix(p: TransitionMatrix, r: Ranking, catalog: ItemCatalog,
                        digits: int = 4, labels: str = "id") -> str:
    """P with rows and columns permuted into ranking order, as CSV text.

    Never-compared pairs are written as ``NA``; the diagonal is left empty.
    ``labels`` selects item ids or display names for the header row/column.
    """
    if len(r) != p.n_c or len(catalog) != p.n_c:
        raise ItemMismatchError("ranking, catalog and transition matrix sizes differ")
    tags = catalog.ids if labels == "id" else catalog.names
    order = list(r.order)
    compared = p.compared
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [tags[k] for k in order])
    for i in order:
        row = [tags[i]]
        for j in order:
            if i == j:
                row.append("")
            elif not compared[i, j]:
                row.append("NA")
            else:
                row.append(f"{p.probs[i, j]:.{digits}f}")
        w.writerow(row)
    return buf.getvalue()
