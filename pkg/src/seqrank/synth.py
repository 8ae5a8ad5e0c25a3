"""Synthetic ground-truth inputs.

Randomness comes from ``numpy.random.Generator(PCG64(seed))`` and draws are
taken in a fixed documented order, so outputs are reproducible across
platforms for a given numpy PCG64 stream.

Bradley-Terry weights are read as *lateness*: an item with a larger weight is
taken later, and ``P_ij = w_j / (w_i + w_j)`` is the chance that i comes before j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DisconnectedGraphError
from .ingest import build_transition_matrix, flow_from_probs, graph_from_probs
from .model import (
    CountMatrix,
    EventLog,
    EventRecord,
    FlowMatrix,
    ItemCatalog,
    MeasurementGraph,
    Ranking,
    TransitionMatrix,
)

GENERATOR_NAME = "numpy.random.PCG64"
MODELS = ("chain", "flip", "bradley_terry")
MAX_REGENERATIONS = 100


@dataclass(frozen=True)
class SynthSpec:
    model: str
    n_items: int
    n_actors: int = 1
    flip_prob: float = 0.0
    bt_weights: tuple[float, ...] | None = None
    edge_prob: float = 1.0
    seed: int = 0
    bt_mode: str = "exact"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n_items < 2:
            raise ConfigurationError("n_items must be >= 2")
        if self.n_actors < 1:
            raise ConfigurationError("n_actors must be >= 1")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ConfigurationError("flip_prob must lie in [0, 0.5)")
        if not 0.0 < self.edge_prob <= 1.0:
            raise ConfigurationError("edge_prob must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.bt_mode not in ("exact", "sampled"):
            raise ConfigurationError("bt_mode must be 'exact' or 'sampled'")
        if self.model == "bradley_terry":
            if self.bt_weights is None or len(self.bt_weights) != self.n_items:
                raise ConfigurationError("bt_weights must have one entry per item")
            if any(not w > 0 for w in self.bt_weights):
                raise ConfigurationError("bt_weights must be strictly positive")
        if self.bt_weights is not None:
            object.__setattr__(self, "bt_weights", tuple(float(w) for w in self.bt_weights))

    def as_dict(self) -> dict:
        return {
            "model": self.model, "n_items": self.n_items, "n_actors": self.n_actors,
            "flip_prob": self.flip_prob,
            "bt_weights": list(self.bt_weights) if self.bt_weights is not None else None,
            "edge_prob": self.edge_prob, "seed": self.seed, "bt_mode": self.bt_mode,
            "generator": GENERATOR_NAME,
        }


def item_ids(n: int) -> list[str]:
    """Zero-padded ids whose lexicographic order equals the ground-truth order."""
    width = len(str(n))
    return [f"i{k:0{width}d}" for k in range(1, n + 1)]


def actor_ids(n: int) -> list[str]:
    width = len(str(n))
    return [f"s{k:0{width}d}" for k in range(1, n + 1)]


def _rng(spec: SynthSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(spec.seed))


def _log_from_sequences(spec: SynthSpec, sequences: list[list[int | None]]) -> EventLog:
    items = item_ids(spec.n_items)
    actors = actor_ids(spec.n_actors)
    records = []
    for actor, seq in zip(actors, sequences):
        for period, k in enumerate(seq, start=1):
            if k is not None:
                records.append(EventRecord(actor, items[k], period))
    return EventLog(tuple(records), ItemCatalog.from_ids(items), tuple(actors))


def gen_chain_log(spec: SynthSpec) -> EventLog:
    """Every actor takes item k in period k."""
    if spec.model != "chain":
        raise ConfigurationError("gen_chain_log needs model='chain'")
    seq = list(range(spec.n_items))
    return _log_from_sequences(spec, [list(seq) for _ in range(spec.n_actors)])


def gen_flip_log(spec: SynthSpec) -> EventLog:
    """Chain order perturbed by adjacent swaps, then thinned.

    Per actor, in this order: draw ``n - 1`` uniforms and sweep the sequence
    left to right, swapping positions s and s+1 when the s-th uniform is below
    ``flip_prob``; then draw ``n`` uniforms and keep position s when the s-th
    is below ``edge_prob``. Periods are the positions in the perturbed sequence.
    """
    if spec.model != "flip":
        raise ConfigurationError("gen_flip_log needs model='flip'")
    rng = _rng(spec)
    n = spec.n_items
    sequences: list[list[int | None]] = []
    for _ in range(spec.n_actors):
        swaps = rng.random(n - 1)
        keep = rng.random(n)
        seq: list[int | None] = list(range(n))
        for s in range(n - 1):
            if swaps[s] < spec.flip_prob:
                seq[s], seq[s + 1] = seq[s + 1], seq[s]
        sequences.append([k if keep[s] < spec.edge_prob else None for s, k in enumerate(seq)])
    return _log_from_sequences(spec, sequences)


def bt_probabilities(weights) -> np.ndarray:
    """Complete matrix ``P_ij = w_j / (w_i + w_j)`` with exact pair sums of 1."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    p = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if w[j] >= w[i]:
                p[i, j] = w[j] / (w[i] + w[j])
                p[j, i] = 1.0 - p[i, j]
            else:
                p[j, i] = w[i] / (w[i] + w[j])
                p[i, j] = 1.0 - p[j, i]
    return p


def gen_bradley_terry_matrix(spec: SynthSpec) -> tuple[TransitionMatrix, FlowMatrix, MeasurementGraph]:
    """Bradley-Terry transition matrix, its flow matrix and measurement graph.

    Each pair i < j is retained when a uniform draw (taken in row-major upper
    triangle order) is below ``edge_prob``; disconnected draws are regenerated
    from the same stream up to ``MAX_REGENERATIONS`` times. In sampled mode,
    each retained pair then gets ``n_actors`` Bernoulli trials (one binomial
    draw per pair, same order) and P is estimated from the resulting counts.
    """
    if spec.model != "bradley_terry":
        raise ConfigurationError("gen_bradley_terry_matrix needs model='bradley_terry'")
    rng = _rng(spec)
    n = spec.n_items
    exact = bt_probabilities(spec.bt_weights)
    iu = np.triu_indices(n, k=1)
    for _ in range(MAX_REGENERATIONS):
        keep = rng.random(len(iu[0])) < spec.edge_prob
        mask = np.zeros((n, n), dtype=bool)
        mask[iu[0][keep], iu[1][keep]] = True
        mask |= mask.T
        g = MeasurementGraph(n, frozenset(zip(iu[0][keep].tolist(), iu[1][keep].tolist())))
        if g.is_connected():
            break
    else:
        raise DisconnectedGraphError(g.components())

    if spec.bt_mode == "exact":
        p = TransitionMatrix(np.where(mask, exact, 0.0))
    else:
        counts = np.zeros((n, n), dtype=np.int64)
        for i, j in g.sorted_edges():
            before = int(rng.binomial(spec.n_actors, exact[i, j]))
            counts[i, j] = before
            counts[j, i] = spec.n_actors - before
        p = build_transition_matrix(CountMatrix(counts, n_actors=spec.n_actors))
    # sampled pairs with zero observations on both sides cannot occur (n_actors >= 1)
    return p, FlowMatrix(flow_from_probs(p.probs)), graph_from_probs(p)


def true_ranking(spec: SynthSpec) -> Ranking:
    """Ground truth: chain order, or ascending lateness weight (ties by index)."""
    if spec.model == "bradley_terry":
        return Ranking.from_scores(np.asarray(spec.bt_weights), False, "truth",
                                   "ascending Bradley-Terry lateness weight")
    return Ranking.from_scores(np.arange(spec.n_items, dtype=float), False, "truth", "chain order")
