from __future__ import annotations

import sys

import numpy as np
import pytest

from seqrank import ingest, synth
from seqrank.model import FlowMatrix, TransitionMatrix


def chain_matrices(n: int, actors: int = 3):
    log = synth.gen_chain_log(synth.SynthSpec("chain", n, actors))
    return ingest.run_pipeline(log, ingest.FilterSpec(min_item_frac=0.0))


def bt_matrices(weights, edge_prob: float = 1.0, seed: int = 0):
    spec = synth.SynthSpec("bradley_terry", len(weights), bt_weights=tuple(weights),
                           edge_prob=edge_prob, seed=seed)
    return synth.gen_bradley_terry_matrix(spec)


def tp(probs) -> TransitionMatrix:
    return TransitionMatrix(np.array(probs, dtype=float))


def flows_of(p: TransitionMatrix) -> FlowMatrix:
    return ingest.build_flow_matrix(p)


@pytest.fixture
def chain12():
    return chain_matrices(12, 50)


@pytest.fixture
def bt124():
    return bt_matrices((1.0, 2.0, 4.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(results, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
