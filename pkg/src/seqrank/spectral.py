"""Numerical kernels: stationary distributions, extremal eigenvectors, SVD, least squares.

Dense LAPACK routines (via numpy) do the heavy lifting; this module adds the
determinism rules (sign/phase fixing, canonical vectors in degenerate
eigenspaces) and the degeneracy / connectivity checks the rankers rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegeneracyError,
    DisconnectedGraphError,
    InvariantError,
)
from .model import MeasurementGraph, MethodOperator


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-10
    max_iterations: int = 10000
    seed: int = 0  # reserved for randomized starts; power iteration starts uniform

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")

    def as_dict(self) -> dict:
        return {"tolerance": self.tolerance, "max_iterations": self.max_iterations,
                "seed": self.seed}


DEFAULT_OPTIONS = SolveOptions()


def _expect(op: MethodOperator, *kinds: str) -> None:
    if op.kind not in kinds:
        raise InvariantError(f"expected operator of kind {kinds}, got {op.kind!r}")


def _eig_tol(opts: SolveOptions, values: np.ndarray) -> float:
    scale = max(1.0, float(np.abs(values).max())) if values.size else 1.0
    return opts.tolerance * scale


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` by a unit scalar so its largest-magnitude entry is real positive.

    Magnitude near-ties (within 1e-9 relative) resolve to the lowest index.
    """
    mag = np.abs(v)
    if not mag.size or mag.max() == 0:
        return v
    k = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-9))[0])
    return v * (np.conj(v[k]) / mag[k])


def _canonical_in_span(basis: np.ndarray) -> np.ndarray:
    """Deterministic unit vector from the column span of an orthonormal ``basis``.

    Projects the standard basis vectors onto the span and takes the one with
    the largest projection (lowest index on near-ties).
    """
    norms = np.linalg.norm(basis, axis=1)  # |proj(e_k)| = norm of row k
    k = int(np.flatnonzero(norms >= norms.max() * (1 - 1e-9))[0])
    v = basis @ basis[k].conj()
    return _fix_sign(v / np.linalg.norm(v))


def stationary_distribution(op: MethodOperator, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Power iteration ``q <- q S`` from the uniform vector.

    Stops once ``||q S - q||_1 <= tolerance``; the returned q satisfies that bound.

    Raises:
        ConvergenceError: the bound was not reached in ``max_iterations`` steps.
    """
    _expect(op, "stochastic-pagerank", "stochastic-rankcentrality")
    s = op["matrix"]
    n = s.shape[0]
    if n == 0:
        return np.zeros(0)
    q = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(opts.max_iterations):
        nxt = q @ s
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - q).sum())
        q = nxt
        if residual <= opts.tolerance:
            final = float(np.abs(q @ s - q).sum())
            if final <= opts.tolerance:
                return q
            residual = final
    raise ConvergenceError(opts.max_iterations, residual)


def fiedler_vector(op: MethodOperator, opts: SolveOptions = DEFAULT_OPTIONS) -> tuple[np.ndarray, float]:
    """Unit eigenvector of the second-smallest Laplacian eigenvalue, orthogonal to ones.

    The eigenproblem is solved on the orthogonal complement of the all-ones
    vector, so the constraint holds exactly. When the relevant eigenvalue is
    repeated a canonical vector from its eigenspace is returned.

    Returns:
        (vector, eigenvalue)

    Raises:
        DegeneracyError: the similarity graph is disconnected (a second zero
            eigenvalue). With two items the orthogonality constraint alone fixes
            the vector, so no error is raised there.
    """
    _expect(op, "similarity-laplacian")
    lap = np.asarray(op["laplacian"], dtype=float)
    n = lap.shape[0]
    if n < 2:
        raise DegeneracyError("a Fiedler vector needs at least two items")
    # orthonormal basis of the complement of ones: drop the first column of a QR of [1 | I]
    q, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
    basis = q[:, 1:]
    reduced = basis.T @ lap @ basis
    vals, vecs = np.linalg.eigh((reduced + reduced.T) / 2)
    tol = _eig_tol(opts, vals)
    if n > 2 and vals[0] <= tol:
        raise DegeneracyError(
            f"second-smallest Laplacian eigenvalue {vals[0]:.3e} is zero within tolerance; "
            "the similarity graph is disconnected"
        )
    cluster = np.flatnonzero(vals - vals[0] <= tol)
    if len(cluster) == 1:
        v = _fix_sign(basis @ vecs[:, 0])
    else:
        v = _canonical_in_span(basis @ vecs[:, cluster])
    return v, float(vals[0])


def top_eigenvector_hermitian(op: MethodOperator,
                              opts: SolveOptions = DEFAULT_OPTIONS) -> tuple[np.ndarray, float]:
    """Unit eigenvector of the largest eigenvalue of a Hermitian matrix.

    The global phase is fixed so the largest-magnitude entry is real positive.

    Returns:
        (vector, eigenvalue)

    Raises:
        DegeneracyError: the top eigenvalue is repeated within tolerance.
    """
    _expect(op, "hermitian-phase")
    h = np.asarray(op["matrix"], dtype=complex)
    n = h.shape[0]
    if n == 0:
        raise DegeneracyError("empty phase matrix")
    vals, vecs = np.linalg.eigh((h + h.conj().T) / 2)
    if n > 1 and vals[-1] - vals[-2] <= _eig_tol(opts, vals):
        raise DegeneracyError(
            f"top eigenvalue {vals[-1]:.6g} of the phase matrix is repeated "
            f"(next {vals[-2]:.6g}); the leading eigenvector is not unique"
        )
    return _fix_sign(vecs[:, -1]), float(vals[-1])


def top_singular_pairs(matrix: np.ndarray, k: int,
                       opts: SolveOptions = DEFAULT_OPTIONS) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """The ``k`` largest singular triples ``(sigma, u, v)``, sigma descending.

    Each left vector's largest-magnitude entry is made positive and the right
    vector is flipped to match, so ``M v = sigma u`` still holds.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise InvariantError("top_singular_pairs needs a 2-D matrix")
    if not 0 <= k <= min(a.shape):
        raise ConfigurationError(f"k={k} out of range for shape {a.shape}")
    u, s, vt = np.linalg.svd(a)
    out = []
    for i in range(k):
        ui = u[:, i]
        mag = np.abs(ui)
        lead = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-9))[0])
        sign = -1.0 if ui[lead] < 0 else 1.0
        out.append((float(s[i]), sign * ui, sign * vt[i]))
    return out


def leading_left_basis(matrix: np.ndarray,
                       opts: SolveOptions = DEFAULT_OPTIONS) -> list[tuple[float, np.ndarray]]:
    """The two leading left singular directions of ``matrix`` in a deterministic basis.

    A real skew-symmetric matrix has its singular values in equal pairs, so the
    SVD's basis of the leading plane is arbitrary. When ``sigma_1 == sigma_2``
    within tolerance the plane is re-spanned by the unit vector orthogonal to
    the all-ones vector and by the projection of the all-ones vector. Under an
    exact ``r 1^T - 1 r^T`` structure the first of these is the centred ``r``.

    Returns:
        ``[(sigma, u), ...]`` with at most two entries, sigma descending.
    """
    n = matrix.shape[0]
    pairs = top_singular_pairs(matrix, min(2, n), opts)
    out = [(s, u) for s, u, _ in pairs]
    if len(out) < 2 or out[0][0] - out[1][0] > opts.tolerance * max(1.0, out[0][0]):
        return out
    basis = np.column_stack([out[0][1], out[1][1]])
    c = basis.T @ np.ones(n)
    norm = float(np.linalg.norm(c))
    if norm <= 1e-9 * np.sqrt(n):
        # ones is orthogonal to the plane; fall back to a canonical basis
        first = _canonical_in_span(basis)
        a = basis.T @ first
        second = basis @ np.array([-a[1], a[0]])
        return [(out[0][0], first), (out[1][0], _fix_sign(second))]
    across = _fix_sign(basis @ np.array([-c[1], c[0]]) / norm)
    along = _fix_sign(basis @ c / norm)
    return [(out[0][0], across), (out[1][0], along)]


def incidence_components(op: MethodOperator) -> list[list[int]]:
    b = op["incidence"]
    n = b.shape[1]
    edges = set()
    for row in b:
        i = int(np.flatnonzero(row == 1)[0])
        j = int(np.flatnonzero(row == -1)[0])
        edges.add((i, j))
    return MeasurementGraph(n, frozenset(edges)).components()


def solve_incidence_least_squares(op: MethodOperator,
                                  opts: SolveOptions = DEFAULT_OPTIONS) -> tuple[np.ndarray, float]:
    """Minimum-norm, mean-zero minimizer of ``||B x - w||_2^2``.

    Returns:
        (x, squared residual)

    Raises:
        DisconnectedGraphError: the edges do not connect all items, so offsets
            between components cannot be identified.
    """
    _expect(op, "incidence-system")
    b = np.asarray(op["incidence"], dtype=float)
    w = np.asarray(op["measurements"], dtype=float)
    comps = incidence_components(op)
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)
    if b.shape[1] == 0:
        return np.zeros(0), 0.0
    x, *_ = np.linalg.lstsq(b, w, rcond=None)
    x = x - x.mean()
    r = b @ x - w
    return x, float(r @ r)
