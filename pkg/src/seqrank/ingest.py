"""Event-log parsing, cohort cleaning, and the pairwise matrices built from it."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, ParseError, SchemaError
from .model import (
    CountMatrix,
    EventLog,
    EventRecord,
    FlowMatrix,
    ItemCatalog,
    MeasurementGraph,
    TransitionMatrix,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("actor", "item", "period")
OPTIONAL_COLUMNS = ("grade_points", "cohort_label", "transfer_flag")

DEFAULT_SCHEMA: dict[str, str] = {
    "actor": "actor_id",
    "item": "item_id",
    "period": "period",
    "grade_points": "grade_points",
    "cohort_label": "cohort_label",
    "transfer_flag": "transfer_flag",
}

DEFAULT_BAND_EDGES = (1.5, 2.5, 3.5)  # lower edges of C, B, A

_TRUE = {"1", "true"}
_FALSE = {"0", "false", ""}


@dataclass(frozen=True)
class FilterSpec:
    """Cohort selection applied before matrix construction.

    ``band_edges`` are the lower edges of the C, B and A bands; band X spans
    ``[edge_X, next_edge)`` and A is open above.
    """

    cohort_label: str | None = None
    exclude_transfers: bool = False
    gpa_band: str = "all"
    band_edges: tuple[float, float, float] = DEFAULT_BAND_EDGES
    min_item_frac: float = 0.10

    def __post_init__(self):
        if self.gpa_band not in ("all", "A", "B", "C"):
            raise ConfigurationError(f"gpa_band must be one of all/A/B/C, got {self.gpa_band!r}")
        edges = tuple(float(e) for e in self.band_edges)
        if len(edges) != 3 or not (edges[0] < edges[1] < edges[2]):
            raise ConfigurationError("band edges must be three strictly increasing values")
        object.__setattr__(self, "band_edges", edges)
        if not 0.0 <= self.min_item_frac <= 1.0:
            raise ConfigurationError("min_item_frac must lie in [0, 1]")

    def band_interval(self) -> tuple[float, float]:
        c, b, a = self.band_edges
        return {"A": (a, math.inf), "B": (b, a), "C": (c, b)}[self.gpa_band]

    def as_dict(self) -> dict:
        return {
            "cohort_label": self.cohort_label,
            "exclude_transfers": self.exclude_transfers,
            "gpa_band": self.gpa_band,
            "band_edges": list(self.band_edges),
            "min_item_frac": self.min_item_frac,
        }


def _parse_flag(raw: str, line: int) -> bool:
    v = raw.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ParseError(f"transfer_flag must be 0/1/true/false, got {raw!r}", line)


def parse_event_log(source: IO[str] | IO[bytes] | str,
                    schema: Mapping[str, str] | None = None,
                    catalog: ItemCatalog | None = None) -> EventLog:
    """Read a CSV event log. No cleaning is applied; duplicate rows are kept.

    Args:
        source: an open text/binary stream or the CSV text itself.
        schema: logical column -> header name overrides (see ``DEFAULT_SCHEMA``).
        catalog: optional item catalog fixing item order and display names;
            items absent from it are appended in lexicographic order.

    Raises:
        SchemaError: a required column is missing from the header.
        ParseError: a row has the wrong arity, a non-integer or negative
            period, or an invalid grade / flag value.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)
    if isinstance(source, str):
        stream: IO[str] = io.StringIO(source)
    else:
        stream = source
        if isinstance(stream.read(0), bytes):
            stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")  # type: ignore[arg-type]

    # leading "#" lines carry run metadata and are skipped
    lines = iter(stream)
    offset = 0
    head: list[str] = []
    for raw_line in lines:
        if raw_line.startswith("#"):
            offset += 1
            continue
        head = [raw_line]
        break
    reader = csv.reader(itertools.chain(head, lines))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: missing header row", offset + 1)
    header = [h.strip() for h in header]
    if header and header[0].startswith("\ufeff"):
        header[0] = header[0][1:]
    pos = {name: k for k, name in enumerate(header)}
    for key in REQUIRED_COLUMNS:
        if cols[key] not in pos:
            raise SchemaError(f"missing required column {cols[key]!r}", offset + 1)
    present = frozenset(k for k in OPTIONAL_COLUMNS if cols[k] in pos)

    records: list[EventRecord] = []
    actors: dict[str, None] = {}
    for row in reader:
        line = offset + reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
        actor = row[pos[cols["actor"]]].strip()
        item = row[pos[cols["item"]]].strip()
        if not actor or not item:
            raise ParseError("actor and item must be non-empty", line)
        raw_period = row[pos[cols["period"]]].strip()
        try:
            period = int(raw_period)
        except ValueError:
            raise ParseError(f"period must be an integer, got {raw_period!r}", line)
        if period < 0:
            raise ParseError(f"period must be non-negative, got {period}", line)
        grade = None
        if "grade_points" in present:
            raw = row[pos[cols["grade_points"]]].strip()
            if raw:
                try:
                    grade = float(raw)
                except ValueError:
                    raise ParseError(f"grade_points must be a number, got {raw!r}", line)
                if not grade >= 0 or math.isinf(grade):
                    raise ParseError(f"grade_points must be a finite value >= 0, got {raw!r}", line)
        label = None
        if "cohort_label" in present:
            label = row[pos[cols["cohort_label"]]].strip() or None
        transfer = False
        if "transfer_flag" in present:
            transfer = _parse_flag(row[pos[cols["transfer_flag"]]], line)
        records.append(EventRecord(actor, item, period, grade, label, transfer))
        actors.setdefault(actor, None)

    seen = {r.item_id for r in records}
    if catalog is None:
        items = ItemCatalog.from_ids(sorted(seen))
    else:
        extra = sorted(seen - set(catalog.ids))
        items = ItemCatalog(catalog.entries + tuple((i, i) for i in extra))
    return EventLog(tuple(records), items, tuple(actors), present)


def load_catalog(source: IO[str] | str) -> ItemCatalog:
    """Read an ``item_id,display_name`` CSV; ``"sample"`` loads the bundled course catalog."""
    if source == "sample":
        text = resources.files("seqrank").joinpath("data", "sample_catalog.csv").read_text("utf-8")
        stream: IO[str] = io.StringIO(text)
    elif isinstance(source, str):
        stream = open(source, encoding="utf-8", newline="")
    else:
        stream = source
    with stream:
        rows = [r for r in csv.reader(stream) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError("catalog is empty", 1)
    body = rows[1:] if rows[0][0].strip().lower() in ("item_id", "id") else rows
    entries = []
    for k, r in enumerate(body, start=2):
        if len(r) < 2:
            raise ParseError("catalog rows need an id and a display name", k)
        entries.append((r[0].strip(), r[1].strip()))
    return ItemCatalog(tuple(entries))


def _by_actor(records: Iterable[EventRecord]) -> dict[str, list[EventRecord]]:
    out: dict[str, list[EventRecord]] = {}
    for r in records:
        out.setdefault(r.actor_id, []).append(r)
    return out


def dedup_retakes(records: Iterable[EventRecord]) -> list[EventRecord]:
    """Keep one record per (actor, item): the one with the largest period.

    Equal-period duplicates resolve to the later row in file order. Output
    preserves the file position of each surviving record.
    """
    records = list(records)
    best: dict[tuple[str, str], int] = {}
    for k, r in enumerate(records):
        key = (r.actor_id, r.item_id)
        if key not in best or r.period >= records[best[key]].period:
            best[key] = k
    keep = sorted(best.values())
    return [records[k] for k in keep]


def _last_label(recs: list[EventRecord]) -> str | None:
    top = max(r.period for r in recs)
    label = None
    for r in recs:
        if r.period == top:
            label = r.cohort_label
    return label


def actor_gpa(recs: Iterable[EventRecord]) -> float | None:
    grades = [r.grade_points for r in recs if r.grade_points is not None]
    return sum(grades) / len(grades) if grades else None


def apply_cohort_filter(log: EventLog, spec: FilterSpec, stats: dict | None = None) -> EventLog:
    """Select the cohort and deduplicate retakes.

    Rules, in order: cohort label taken from the actor's latest-period record;
    transfer exclusion; retake dedup (largest period wins); GPA band on the
    mean grade of the deduplicated records. Actors with no grades fall outside
    every band. The item catalog is left untouched (see ``prune_rare_items``).

    If ``stats`` is given it receives counts describing what was removed.
    """
    if spec.gpa_band != "all" and "grade_points" not in log.columns:
        raise ConfigurationError("gpa_band filter requires a grade_points column")

    groups = _by_actor(log.records)
    kept_actors: list[str] = []
    dropped = {"cohort": 0, "transfer": 0, "gpa_band": 0}
    deduped_total = 0
    survivors: set[str] = set()

    for actor in log.actors:
        recs = groups.get(actor, [])
        if spec.cohort_label is not None:
            if not recs or _last_label(recs) != spec.cohort_label:
                dropped["cohort"] += 1
                continue
        if spec.exclude_transfers and any(r.transfer_flag for r in recs):
            dropped["transfer"] += 1
            continue
        clean = dedup_retakes(recs)
        if spec.gpa_band != "all":
            gpa = actor_gpa(clean)
            lo, hi = spec.band_interval()
            if gpa is None or not (lo <= gpa < hi):
                dropped["gpa_band"] += 1
                continue
        deduped_total += len(recs) - len(clean)
        kept_actors.append(actor)
        survivors.update(id(r) for r in clean)

    records = tuple(r for r in log.records if id(r) in survivors)
    if stats is not None:
        stats.update(
            n_s_before=log.actor_count,
            n_s_after=len(kept_actors),
            dropped_actors=dropped,
            retakes_removed=deduped_total,
        )
    if not kept_actors:
        logger.warning("cohort filter removed every actor")
    return EventLog(records, log.items, tuple(kept_actors), log.columns)


def item_threshold(min_frac: float, n_actors: int) -> int:
    """Minimum number of distinct actors an item needs: ceil(min_frac * n_actors).

    The fraction is read from its decimal repr so that 0.1 * 30 gives 3, not 4.
    """
    return math.ceil(Fraction(repr(float(min_frac))) * n_actors)


def prune_rare_items(log: EventLog, min_frac: float, stats: dict | None = None) -> EventLog:
    """Drop items taken by fewer than ``ceil(min_frac * n_s)`` distinct actors.

    Actors left without records stay in the population.
    """
    if not 0.0 <= min_frac <= 1.0:
        raise ConfigurationError("min_frac must lie in [0, 1]")
    threshold = item_threshold(min_frac, log.actor_count)
    takers: dict[str, set[str]] = {i: set() for i in log.items.ids}
    for r in log.records:
        takers[r.item_id].add(r.actor_id)
    keep = {i for i, s in takers.items() if len(s) >= threshold}
    if stats is not None:
        stats.update(
            item_threshold=threshold,
            items_removed=sorted(set(takers) - keep),
        )
    records = tuple(r for r in log.records if r.item_id in keep)
    return EventLog(records, log.items.subset(keep), log.actors, log.columns)


def build_count_matrix(log: EventLog) -> CountMatrix:
    """Count, for each ordered pair, the actors who took i in a strictly earlier period than j.

    Same-period pairs count in neither direction. If a log still holds
    retakes, the latest period per (actor, item) is used.
    """
    n = log.n_items
    index = log.items.index
    periods: dict[str, dict[int, int]] = {}
    for r in log.records:
        taken = periods.setdefault(r.actor_id, {})
        k = index[r.item_id]
        if k not in taken or r.period > taken[k]:
            taken[k] = r.period
    counts = np.zeros((n, n), dtype=np.int64)
    for taken in periods.values():
        if len(taken) < 2:
            continue
        idx = np.fromiter(taken.keys(), dtype=np.int64)
        per = np.fromiter(taken.values(), dtype=np.int64)
        before = per[:, None] < per[None, :]
        counts[np.ix_(idx, idx)] += before
    return CountMatrix(counts, n_actors=log.actor_count)


def build_transition_matrix(c: CountMatrix) -> TransitionMatrix:
    """``P_ij = C_ij / (C_ij + C_ji)``; uncompared pairs stay 0.

    For each pair the majority side is divided out and the minority side is
    ``1 - majority``, which makes ``P_ij + P_ji == 1`` hold exactly in floating point.
    """
    cnt = c.counts.astype(float)
    total = cnt + cnt.T
    p = np.zeros_like(cnt)
    major = (cnt >= cnt.T) & (total > 0)
    np.divide(cnt, total, out=p, where=major)
    minor = (cnt < cnt.T) & (total > 0)
    p[minor] = 1.0 - p.T[minor]
    np.fill_diagonal(p, 0.0)
    return TransitionMatrix(p)


def flow_from_probs(probs: np.ndarray) -> np.ndarray:
    """Skew-symmetric flow values from a transition array.

    Computed on the upper triangle then mirrored, so skew-symmetry is exact.
    An exact 0.5/0.5 tie gives +0.5 to the lower index.
    """
    p = np.asarray(probs, dtype=float)
    n = p.shape[0]
    upper = np.zeros_like(p)
    iu = np.triu_indices(n, k=1)
    pij = p[iu]
    compared = (pij + p.T[iu]) > 0.5
    val = np.where(pij >= 0.5, pij, pij - 1.0)
    upper[iu] = np.where(compared, val, 0.0)
    return upper - upper.T


def build_flow_matrix(p: TransitionMatrix) -> FlowMatrix:
    return FlowMatrix(flow_from_probs(p.probs))


def build_measurement_graph(c: CountMatrix) -> MeasurementGraph:
    total = c.counts + c.counts.T
    iu = np.triu_indices(c.n_c, k=1)
    mask = total[iu] > 0
    edges = frozenset(zip(iu[0][mask].tolist(), iu[1][mask].tolist()))
    return MeasurementGraph(c.n_c, edges)


def graph_from_probs(p: TransitionMatrix) -> MeasurementGraph:
    iu = np.triu_indices(p.n_c, k=1)
    mask = p.compared[iu]
    return MeasurementGraph(p.n_c, frozenset(zip(iu[0][mask].tolist(), iu[1][mask].tolist())))


@dataclass
class PipelineResult:
    """Everything the ingest stage produces for one cohort."""

    log: EventLog
    counts: CountMatrix
    transition: TransitionMatrix
    flow: FlowMatrix
    graph: MeasurementGraph
    provenance: dict = field(default_factory=dict)


def run_pipeline(raw: EventLog, spec: FilterSpec) -> PipelineResult:
    """Filter, prune, and build C, P, F, G for one cohort."""
    prov: dict = {"filter": spec.as_dict()}
    filtered = apply_cohort_filter(raw, spec, prov)
    pruned = prune_rare_items(filtered, spec.min_item_frac, prov)
    active = {r.actor_id for r in pruned.records}
    prov["zero_record_actors_kept"] = sum(1 for a in pruned.actors if a not in active)
    c = build_count_matrix(pruned)
    p = build_transition_matrix(c)
    return PipelineResult(pruned, c, p, build_flow_matrix(p), build_measurement_graph(c), prov)
