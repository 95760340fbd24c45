"""User-user / item-item networks and their structural similarities."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .similarity import SimilarityMatrix

log = logging.getLogger(__name__)

STRUCTURAL = ("net-cn", "net-jaccard", "net-katz")


class SpectralRadiusError(ArithmeticError):
    """Power iteration did not converge."""

    def __init__(self, message, vector, residual):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.vector = vector
        self.residual = residual


class KatzDivergenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Network:
    """Weighted undirected graph; ``adjacency`` is symmetric with zero diagonal."""

    axis: str
    adjacency: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz // 2

    def binary(self) -> sp.csr_matrix:
        B = self.adjacency.copy()
        B.data = np.ones_like(B.data)
        return B

    def neighbors(self, i) -> np.ndarray:
        A = self.adjacency
        return A.indices[A.indptr[i]:A.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @property
    def content_hash(self) -> str:
        A = self.adjacency
        h = hashlib.sha256(repr((self.axis, A.shape)).encode())
        for arr in (A.indptr, A.indices, A.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def to_edge_csv(self, path, ids=None):
        """Write the weighted edge list ``i,j,weight`` with i < j."""
        upper = sp.triu(self.adjacency, 1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "weight"])
            for k in order.tolist():
                i, j = int(upper.row[k]), int(upper.col[k])
                if ids is not None:
                    i, j = ids[i], ids[j]
                w.writerow([i, j, repr(float(upper.data[k]))])


@dataclass(frozen=True, eq=False)
class StructuralSimilarity:
    kind: str
    axis: str
    scores: np.ndarray
    beta: float | None = None
    lambda1: float | None = None

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def to_similarity(self) -> SimilarityMatrix:
        """All off-diagonal pairs defined; the diagonal stays undefined."""
        defined = ~np.eye(self.n, dtype=bool)
        return SimilarityMatrix.build(self.axis, self.scores, defined, self.kind)


def build_network(s: SimilarityMatrix) -> Network:
    """Link every pair with a defined, nonzero score, weighted by that score."""
    W = np.where(s.defined & (s.values != 0), s.values, 0.0)
    np.fill_diagonal(W, 0.0)
    return Network(s.axis, sp.csr_matrix(W))


def _finish(scores):
    np.fill_diagonal(scores, 0.0)
    upper = np.triu(scores, 1)
    return upper + upper.T


def common_neighbors(g: Network) -> StructuralSimilarity:
    """|N(i) & N(j)| on the binarized graph (any nonzero weight is a link)."""
    B = g.binary()
    cn = (B @ B).toarray()
    return StructuralSimilarity("net-cn", g.axis, _finish(cn))


def jaccard_network(g: Network) -> StructuralSimilarity:
    B = g.binary()
    cn = (B @ B).toarray()
    deg = g.degrees().astype(float)
    union = deg[:, None] + deg[None, :] - cn
    with np.errstate(divide="ignore", invalid="ignore"):
        jac = np.where(union > 0, cn / np.where(union > 0, union, 1.0), 0.0)
    return StructuralSimilarity("net-jaccard", g.axis, _finish(jac))


def _matvec_op(A):
    if sp.issparse(A):
        return lambda v: A @ v
    A = np.asarray(A, dtype=float)
    return lambda v: A @ v


def spectral_radius(g, tol=1e-8, max_iter=10000, seed=0, lanczos_fallback=True) -> float:
    """Largest eigenvalue magnitude of the (symmetric) adjacency.

    Power iteration on ``x <- Ax/|Ax|`` starting from the all-ones vector. The
    estimate ``theta = |Ax|`` for unit ``x`` is the square root of the Rayleigh
    quotient of ``A^2``, so it tends to ``|lambda_1|`` even when ``+lambda_1``
    and ``-lambda_1`` are both eigenvalues. Iteration stops once the relative
    eigen-residual ``|A^2 x - theta^2 x| / theta^2`` drops below ``tol``; a
    plain change-in-estimate test stops too early when ``|lambda_2|`` is close
    to ``|lambda_1|``. If the iterate collapses to zero, the iteration restarts
    once from a fixed-seed random vector.

    Clustered top eigenvalues can make power iteration exhaust ``max_iter``;
    the estimate is then refined with Lanczos (ARPACK), and the error is raised
    only when that fails too or ``lanczos_fallback`` is off.
    """
    A = g.adjacency if isinstance(g, Network) else g
    n = A.shape[0]
    if n == 0:
        raise ValueError("spectral radius of an empty adjacency")
    if (A.nnz if sp.issparse(A) else np.count_nonzero(A)) == 0:
        return 0.0
    matvec = _matvec_op(A)
    starts = [np.ones(n), np.random.Generator(np.random.PCG64(seed)).standard_normal(n)]
    x = starts[0]
    residual = np.inf
    for start in starts:
        x = start / np.linalg.norm(start)
        y = matvec(x)
        theta = float(np.linalg.norm(y))
        if theta == 0.0:
            log.debug("power iteration collapsed; restarting from a random vector")
            continue
        for _ in range(max_iter):
            x_next = y / theta
            y_next = matvec(x_next)
            theta_next = float(np.linalg.norm(y_next))
            if theta_next == 0.0:
                break
            # A^2 x = theta * A x_next = theta * y_next
            residual = float(np.linalg.norm(y_next - theta * x)) / theta
            x, y, theta = x_next, y_next, theta_next
            if residual < tol:
                return theta
        else:
            if lanczos_fallback:
                lam = _lanczos_radius(A, x, tol, max_iter)
                if lam is not None:
                    return lam
            raise SpectralRadiusError("power iteration did not converge", x, residual)
        log.debug("power iteration collapsed; restarting from a random vector")
    raise SpectralRadiusError("power iteration collapsed", x, residual)


def _lanczos_radius(A, x0, tol, max_iter):
    log.debug("power iteration hit its cap; refining with Lanczos")
    try:
        vals = spla.eigsh(sp.csr_matrix(A, dtype=float), k=1, which="LM", v0=x0, tol=tol,
                          maxiter=max_iter, return_eigenvectors=False)
    except spla.ArpackError:
        return None
    return float(np.abs(vals).max())


def katz(g: Network, beta="auto", tol=1e-10, max_terms=1000) -> StructuralSimilarity:
    """Katz index ``sum_l beta^l A^l`` by truncated series.

    ``beta="auto"`` uses ``0.85 / lambda_1``. Terms are accumulated until the
    max-norm of the newest term drops below ``tol`` or ``max_terms`` is hit.
    """
    lam = spectral_radius(g)
    n = g.n
    if lam == 0.0:
        b = 0.0 if beta == "auto" else float(beta)
        return StructuralSimilarity("net-katz", g.axis, np.zeros((n, n)), b, 0.0)
    b = 0.85 / lam if beta == "auto" else float(beta)
    if b <= 0:
        raise ValueError("Katz beta must be positive")
    if b * lam >= 1:
        raise KatzDivergenceError(f"beta * lambda_1 = {b * lam:.6g} >= 1; the Katz series diverges")
    S = katz_series(g.adjacency.toarray(), b, tol, max_terms)
    return StructuralSimilarity("net-katz", g.axis, _finish(S), b, lam)


def katz_series(A, beta, tol=1e-10, max_terms=1000) -> np.ndarray:
    """Raw ``beta A + beta^2 A^2 + ...`` including the diagonal."""
    A = np.asarray(A, dtype=float)
    term = beta * A
    S = term.copy()
    for _ in range(max_terms - 1):
        if np.abs(term).max() < tol:
            break
        term = beta * (A @ term)
        S += term
    return S


def katz_closed_form(g: Network, beta) -> np.ndarray:
    """``(I - beta A)^{-1} - I`` by a direct linear solve."""
    A = g.adjacency.toarray() if isinstance(g, Network) else np.asarray(g, dtype=float)
    return np.linalg.solve(np.eye(A.shape[0]) - beta * A, beta * A)


def structural(kind: str, g: Network, beta="auto") -> StructuralSimilarity:
    if kind == "net-cn":
        return common_neighbors(g)
    if kind == "net-jaccard":
        return jaccard_network(g)
    if kind == "net-katz":
        return katz(g, beta)
    raise ValueError(f"unknown structural similarity {kind!r}; available: {', '.join(STRUCTURAL)}")
