"""Command-line entry point: ``seqrank {ingest,rank,synth,eval}``.

Exit codes: 0 success, 1 internal error, 2 usage, 3 parse, 4 numerical
degeneracy, 5 disconnected measurement graph, 6 non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConfigurationError, ItemMismatchError, ParseError, SeqRankError, UsageError
from .evaluation import (
    MethodReport,
    emit_comparison_table,
    emit_heatmap_matrix,
    gamma_details,
    gamma_table,
    kendall_tau,
    method_report,
)
from .ingest import FilterSpec, PipelineResult, graph_from_probs, load_catalog, parse_event_log, run_pipeline
from .model import CountMatrix, FlowMatrix, ItemCatalog, MeasurementGraph, Ranking, TransitionMatrix
from .rankers import METHODS, PageRankParams
from .spectral import SolveOptions
from .synth import (
    SynthSpec,
    gen_bradley_terry_matrix,
    gen_chain_log,
    gen_flip_log,
    item_ids,
    true_ranking,
)

logger = logging.getLogger("seqrank")

EMIT_CHOICES = ("rankings", "gamma_table", "comparison_table", "heatmap", "matrices")
DEFAULT_EMIT = ("rankings", "gamma_table")


# -- file helpers -------------------------------------------------------------

def atomic_write(path: str | Path, text: str) -> None:
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_metadata(config: dict, seed: int | None = None, filter_prov: dict | None = None,
                  solver: dict | None = None) -> dict:
    return {
        "tool": "seqrank",
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": seed,
        "filter": filter_prov,
        "solver": solver,
    }


def comment_header(meta: dict) -> str:
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True)}\n" for k, v in meta.items())


def _matrix(a: np.ndarray) -> list[list]:
    return [[x.item() for x in row] for row in np.asarray(a)]


@dataclass
class Bundle:
    catalog: ItemCatalog
    transition: TransitionMatrix
    flow: FlowMatrix
    graph: MeasurementGraph
    counts: CountMatrix | None = None
    metadata: dict | None = None


def bundle_dict(catalog: ItemCatalog, p: TransitionMatrix, f: FlowMatrix, g: MeasurementGraph,
                counts: CountMatrix | None, n_s_before: int | None, n_s_after: int | None,
                provenance: dict, metadata: dict) -> dict:
    return {
        "metadata": metadata,
        "catalog": [{"id": i, "name": n} for i, n in catalog.entries],
        "n_s_before": n_s_before,
        "n_s_after": n_s_after,
        "C": _matrix(counts.counts) if counts is not None else None,
        "P": _matrix(p.probs),
        "F": _matrix(f.flows),
        "edges": [list(e) for e in g.sorted_edges()],
        "provenance": provenance,
    }


def load_bundle(path: str | Path) -> Bundle:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        catalog = ItemCatalog(tuple((e["id"], e["name"]) for e in data["catalog"]))
        n = len(catalog)
        p = TransitionMatrix(np.array(data["P"], dtype=float).reshape(n, n))
        f = FlowMatrix(np.array(data["F"], dtype=float).reshape(n, n))
        g = MeasurementGraph(n, frozenset(tuple(e) for e in data["edges"]))
        counts = None
        if data.get("C") is not None:
            counts = CountMatrix(np.array(data["C"], dtype=np.int64).reshape(n, n),
                                 n_actors=data.get("n_s_after"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read matrix bundle {path}: {exc}") from exc
    if g != graph_from_probs(p):
        raise ParseError(f"bundle {path}: edge list disagrees with P")
    return Bundle(catalog, p, f, g, counts, data.get("metadata"))


def ranking_dict(r: Ranking, catalog: ItemCatalog, metadata: dict, gamma: float | None = None) -> dict:
    out = {
        "metadata": metadata,
        "method_tag": r.method_tag,
        "order": r.item_ids(catalog),
        "scores": {catalog.ids[k]: float(r.scores[k]) for k in r.order},
        "orientation_note": r.orientation_note,
    }
    if gamma is not None:
        out["gamma"] = gamma
    return out


def load_ranking(path: str | Path, catalog: ItemCatalog) -> Ranking:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        ids = [str(i) for i in data["order"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read ranking file {path}: {exc}") from exc
    if sorted(ids) != sorted(catalog.ids) or len(set(ids)) != len(ids):
        raise ItemMismatchError(f"ranking {path} does not cover the bundle's items")
    return Ranking.from_order([catalog.index[i] for i in ids], data.get("method_tag", ""),
                              data.get("orientation_note", ""))


# -- argument handling --------------------------------------------------------

def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _methods(text: str) -> list[str]:
    names = list(METHODS) if text.strip() == "all" else _csv_list(text)
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {bad}; choose from {', '.join(METHODS)} or 'all'")
    return names


def _emit(text: str) -> list[str]:
    names = _csv_list(text)
    bad = [e for e in names if e not in EMIT_CHOICES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown emit target(s) {bad}; choose from {EMIT_CHOICES}")
    return names


def _band_edges(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(x) for x in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError("band edges must be numbers")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("give three band edges: C,B,A lower bounds")
    return vals  # type: ignore[return-value]


def _gpa_bands(text: str) -> list[str]:
    bands = _csv_list(text)
    bad = [b for b in bands if b not in ("all", "A", "B", "C")]
    if bad or not bands:
        raise argparse.ArgumentTypeError("gpa bands must be drawn from all,A,B,C")
    return bands


def _add_filter_args(p: argparse.ArgumentParser, multi: bool) -> None:
    if multi:
        p.add_argument("--cohort", action="append", default=None,
                       help="keep actors whose latest label matches (repeat for several cohorts)")
        p.add_argument("--gpa-band", type=_gpa_bands, default=["all"],
                       help="comma list from all,A,B,C; one run per band")
    else:
        p.add_argument("--cohort", default=None, help="keep actors whose latest label matches")
        p.add_argument("--gpa-band", choices=("all", "A", "B", "C"), default="all")
    p.add_argument("--exclude-transfers", action="store_true")
    p.add_argument("--band-edges", type=_band_edges, default=(1.5, 2.5, 3.5),
                   help="lower edges of the C,B,A bands (default 1.5,2.5,3.5)")
    p.add_argument("--min-item-frac", type=float, default=0.10)
    p.add_argument("--catalog", default=None,
                   help="item_id,display_name CSV, or 'sample' for the bundled course list")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"seqrank {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="event CSV -> matrix bundle")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_filter_args(p, multi=False)

    p = sub.add_parser("rank", help="run rankers on a bundle or event CSV")
    p.add_argument("--input", required=True, help="bundle .json or event .csv")
    p.add_argument("--out", required=True)
    p.add_argument("--methods", type=_methods, default=list(METHODS))
    p.add_argument("--alpha", type=float, default=0.15)
    p.add_argument("--personalized", action="store_true")
    p.add_argument("--emit", type=_emit, default=list(DEFAULT_EMIT))
    p.add_argument("--top-k", type=int, default=11)
    p.add_argument("--heatmap-method", default="pagerank",
                   help="ranking that orders the heatmap (falls back to the first success)")
    p.add_argument("--table-method", default="serialrank",
                   help="method whose per-cohort lists form the cohort table")
    p.add_argument("--workers", type=int, default=1)
    _add_filter_args(p, multi=True)
    _add_solver_args(p)

    p = sub.add_parser("synth", help="generate synthetic data and its ground truth")
    p.add_argument("--model", choices=("chain", "flip", "bradley_terry", "bt"), required=True)
    p.add_argument("--n-items", type=int, required=True)
    p.add_argument("--n-actors", type=int, default=1)
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--edge-prob", type=float, default=1.0)
    p.add_argument("--bt-weights", default=None, help="comma list of positive lateness weights")
    p.add_argument("--bt-mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a ranking file against a bundle")
    p.add_argument("--input", required=True, help="matrix bundle")
    p.add_argument("--ranking", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--out", default=None, help="directory for metrics.json")
    return parser


def _filter_spec(args, cohort=None, band=None) -> FilterSpec:
    return FilterSpec(
        cohort_label=cohort if cohort is not None else (args.cohort if isinstance(args.cohort, str) else None),
        exclude_transfers=args.exclude_transfers,
        gpa_band=band if band is not None else (args.gpa_band if isinstance(args.gpa_band, str) else "all"),
        band_edges=args.band_edges,
        min_item_frac=args.min_item_frac,
    )


def _config(args, drop=("out", "input", "verbose", "func", "workers")) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in drop}
    if getattr(args, "input", None) and Path(args.input).exists():
        cfg["input_sha256"] = file_digest(args.input)
    # file arguments are identified by content so the hash ignores where they live
    for key in ("ranking", "truth", "catalog"):
        value = cfg.get(key)
        if value and value != "sample" and Path(value).is_file():
            cfg[key] = {"sha256": file_digest(value)}
    return cfg


def _read_log(args):
    catalog = load_catalog(args.catalog) if args.catalog else None
    try:
        with open(args.input, "rb") as fh:
            return parse_event_log(fh, catalog=catalog)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc


def _pipeline_bundle(raw, spec: FilterSpec, meta: dict) -> tuple[dict, PipelineResult]:
    res = run_pipeline(raw, spec)
    if res.provenance["n_s_after"] == 0:
        logger.warning("cohort filter %s kept no actors", spec.as_dict())
    prov = dict(res.provenance)
    prov["n_items"] = res.log.n_items
    doc = bundle_dict(res.log.items, res.transition, res.flow, res.graph, res.counts,
                      prov["n_s_before"], prov["n_s_after"], prov, meta)
    return doc, res


# -- commands -----------------------------------------------------------------

def cmd_ingest(args) -> int:
    raw = _read_log(args)
    spec = _filter_spec(args)
    cfg = _config(args)
    meta = make_metadata(cfg, None, spec.as_dict(), None)
    doc, res = _pipeline_bundle(raw, spec, meta)
    out = Path(args.out) / "bundle.json"
    atomic_write(out, dump_json(doc))
    print(f"wrote {out}: {res.log.n_items} items, n_s {doc['n_s_before']} -> {doc['n_s_after']}, "
          f"{res.graph.m} edges, {doc['provenance']['retakes_removed']} retakes removed")
    return 0


def _cohort_label(spec: FilterSpec) -> str:
    parts = [spec.cohort_label or "all-cohorts"]
    parts.append(spec.gpa_band)
    return "/".join(parts)


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)


def cmd_rank(args) -> int:
    solve = SolveOptions(args.tol, args.max_iter, args.seed)
    pr = PageRankParams(args.alpha, args.personalized)
    cfg = _config(args)
    runs: list[tuple[str, Bundle, dict | None]] = []

    if args.input.endswith(".json"):
        bundle = load_bundle(args.input)
        filt = (bundle.metadata or {}).get("filter")
        runs.append(("bundle", bundle, filt))
    else:
        raw = _read_log(args)
        cohorts = args.cohort or [None]
        for cohort in cohorts:
            for band in args.gpa_band:
                spec = _filter_spec(args, cohort, band)
                meta = make_metadata(cfg, args.seed, spec.as_dict(), solve.as_dict())
                doc, res = _pipeline_bundle(raw, spec, meta)
                label = _cohort_label(spec)
                if "matrices" in args.emit:
                    name = "bundle.json" if len(cohorts) * len(args.gpa_band) == 1 else f"bundle_{_slug(label)}.json"
                    atomic_write(Path(args.out) / name, dump_json(doc))
                runs.append((label, Bundle(res.log.items, res.transition, res.flow, res.graph,
                                           res.counts), spec.as_dict()))

    out = Path(args.out)
    multi = len(runs) > 1
    reports_by_cohort: dict[str, list[MethodReport]] = {}
    any_ok = False
    first_error: SeqRankError | None = None
    for label, b, filt in runs:
        meta = make_metadata(cfg, args.seed, filt, solve.as_dict())
        if b.catalog and len(b.catalog) >= 2:
            reports = method_report(args.methods, b.transition, b.flow, b.graph, solve, pr,
                                    max_workers=args.workers)
        else:
            reports = [MethodReport(m, None, None, 0.0, "fewer than two items after filtering",
                                    error_type="DegeneracyError") for m in args.methods]
        reports_by_cohort[label] = reports
        sub = out / _slug(label) if multi else out
        for rep in reports:
            status = f"gamma {rep.gamma:.6f}" if rep.ok else f"FAILED ({rep.notes})"
            print(f"[{label}] {rep.method_tag:15s} {status}  {rep.runtime_ms:.1f} ms")
            if rep.ok:
                any_ok = True
                if "rankings" in args.emit:
                    atomic_write(sub / "rankings" / f"{rep.method_tag}.json",
                                 dump_json(ranking_dict(rep.ranking, b.catalog, meta, rep.gamma)))
            elif first_error is None:
                first_error = rep.error
        atomic_write(sub / "report.json", dump_json({
            "metadata": meta,
            "methods": [{
                "method_tag": r.method_tag, "gamma": r.gamma, "ok": r.ok,
                "skipped_pairs": r.skipped_pairs, "notes": r.notes, "error_type": r.error_type,
            } for r in reports],
        }))
        ok_reports = [r for r in reports if r.ok]
        if "comparison_table" in args.emit and ok_reports:
            table = emit_comparison_table(ok_reports, b.catalog, args.top_k)
            atomic_write(sub / "comparison_table.txt", comment_header(meta) + table.to_text())
            atomic_write(sub / "comparison_table.csv", comment_header(meta) + table.to_csv())
        if "heatmap" in args.emit and ok_reports:
            chosen = next((r for r in ok_reports if r.method_tag == args.heatmap_method), ok_reports[0])
            grid = emit_heatmap_matrix(b.transition, chosen.ranking, b.catalog)
            atomic_write(sub / "heatmap.csv",
                         comment_header({**meta, "ordered_by": chosen.method_tag}) + grid)

    top_meta = make_metadata(cfg, args.seed, None, solve.as_dict())
    if "gamma_table" in args.emit:
        table = gamma_table(reports_by_cohort)
        atomic_write(out / "gamma_table.txt", comment_header(top_meta) + table.to_text())
        atomic_write(out / "gamma_table.csv", comment_header(top_meta) + table.to_csv())
    if multi and "comparison_table" in args.emit:
        cols = []
        for (label, b, _), reps in zip(runs, reports_by_cohort.values()):
            rep = next((r for r in reps if r.method_tag == args.table_method and r.ok), None)
            if rep is not None:
                cols.append((f"{label} (n_s={b.counts.n_actors if b.counts else '?'})", rep.ranking, b.catalog))
        if cols:
            table = emit_comparison_table(cols, None, args.top_k)
            atomic_write(out / f"cohort_table_{args.table_method}.txt",
                         comment_header(top_meta) + table.to_text())
            atomic_write(out / f"cohort_table_{args.table_method}.csv",
                         comment_header(top_meta) + table.to_csv())

    if not any_ok:
        if first_error is not None:
            raise first_error
        return 1
    return 0


def cmd_synth(args) -> int:
    model = "bradley_terry" if args.model == "bt" else args.model
    weights = None
    if args.bt_weights:
        try:
            weights = tuple(float(w) for w in _csv_list(args.bt_weights))
        except ValueError:
            raise ConfigurationError("bt weights must be numbers")
    spec = SynthSpec(model, args.n_items, args.n_actors, args.flip_prob, weights,
                     args.edge_prob, args.seed, args.bt_mode)
    cfg = _config(args)
    meta = make_metadata(cfg, args.seed, None, None)
    meta["synth"] = spec.as_dict()
    out = Path(args.out)

    if model == "bradley_terry":
        p, f, g = gen_bradley_terry_matrix(spec)
        catalog = ItemCatalog.from_ids(item_ids(spec.n_items))
        doc = bundle_dict(catalog, p, f, g, None, None, None, {"synth": spec.as_dict()}, meta)
        atomic_write(out / "bundle.json", dump_json(doc))
        written = "bundle.json"
    else:
        log = gen_chain_log(spec) if model == "chain" else gen_flip_log(spec)
        catalog = log.items
        lines = [comment_header(meta), "actor_id,item_id,period\n"]
        lines.extend(f"{r.actor_id},{r.item_id},{r.period}\n" for r in log.records)
        atomic_write(out / "events.csv", "".join(lines))
        written = "events.csv"
    truth = true_ranking(spec)
    atomic_write(out / "truth.json", dump_json(ranking_dict(truth, catalog, meta)))
    print(f"wrote {out / written} and {out / 'truth.json'}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_bundle(args.input)
    r = load_ranking(args.ranking, bundle.catalog)
    value, skipped = gamma_details(r.order, bundle.transition)
    metrics = {"gamma": value, "skipped_pairs": skipped}
    if args.truth:
        t = load_ranking(args.truth, bundle.catalog)
        metrics["kendall_tau"] = kendall_tau(r, t)
    meta = make_metadata(_config(args), None, (bundle.metadata or {}).get("filter"), None)
    print(f"gamma       {value:.6f}  ({skipped} uncompared pairs skipped)")
    if "kendall_tau" in metrics:
        print(f"kendall_tau {metrics['kendall_tau']:.6f}")
    doc = {"metadata": meta, **metrics}
    if args.out:
        atomic_write(Path(args.out) / "metrics.json", dump_json(doc))
    else:
        print(json.dumps(metrics, sort_keys=True))
    return 0


COMMANDS = {"ingest": cmd_ingest, "rank": cmd_rank, "synth": cmd_synth, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SeqRankError as exc:
        print(f"seqrank {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
