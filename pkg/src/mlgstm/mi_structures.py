"""Moran's I operators, eigenvector bases and the random-effect precision model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EIG_TIE = 1e-10
PSD_FLOOR = 1e-8


@dataclass
class AdjacencyStructure:
    n_regions: int
    edges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        clean = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (0 <= i < self.n_regions and 0 <= j < self.n_regions):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.n_regions - 1}")
            if i == j:
                raise ValueError(f"self-loop at region {i}")
            key = (min(i, j), max(i, j))
            if key not in seen:
                seen.add(key)
                clean.append(key)
        self.edges = clean

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.n_regions, self.n_regions))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    @classmethod
    def from_matrix(cls, A) -> "AdjacencyStructure":
        A = np.asarray(A)
        if A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
            raise ValueError("adjacency matrix must be square and symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency matrix must have a zero diagonal")
        i, j = np.nonzero(np.triu(A, 1))
        return cls(A.shape[0], list(zip(i.tolist(), j.tolist())))

    @classmethod
    def grid(cls, nrow: int, ncol: int) -> "AdjacencyStructure":
        """Rook adjacency on an nrow x ncol lattice, row-major region order."""
        edges = []
        for r in range(nrow):
            for c in range(ncol):
                k = r * ncol + c
                if c + 1 < ncol:
                    edges.append((k, k + 1))
                if r + 1 < nrow:
                    edges.append((k, k + ncol))
        return cls(nrow * ncol, edges)

    @classmethod
    def read(cls, path) -> "AdjacencyStructure":
        """Parse an edge list with header line ``n <N>`` and ``i j`` lines (0-based)."""
        path = Path(path)
        n = None
        edges = []
        with path.open() as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if n is None:
                    if len(parts) != 2 or parts[0] != "n":
                        raise ValueError(f"{path}:{lineno}: expected header 'n <N>'")
                    n = _parse_int(parts[1], path, lineno)
                    continue
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'i j'")
                edges.append((_parse_int(parts[0], path, lineno), _parse_int(parts[1], path, lineno)))
        if n is None:
            raise ValueError(f"{path}: missing header 'n <N>'")
        try:
            return cls(n, edges)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None

    def write(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write(f"n {self.n_regions}\n")
            for i, j in self.edges:
                fh.write(f"{i} {j}\n")


def _parse_int(tok, path, lineno) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: not an integer: {tok!r}") from None


def precision_target(A, kind: str = "identity_minus_adjacency") -> np.ndarray:
    """Q = I - A (default) or the ICAR form D - A."""
    A = np.asarray(A, dtype=float)
    if kind == "identity_minus_adjacency":
        return np.eye(A.shape[0]) - A
    if kind == "degree_minus_adjacency":
        return np.diag(A.sum(axis=1)) - A
    raise ValueError(f"unknown precision target {kind!r}")


def _orth_complement_projector(X, rank_revealing=False, scale=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, p = X.shape
    if p == 0:
        return np.eye(N)
    if rank_revealing:
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        ref = (s[0] if s.size else 0.0) if scale is None else scale
        tol = 1e-10 * ref
        U = U[:, s > tol] if s.size and s[0] > 0 else U[:, :0]
    else:
        U, R = np.linalg.qr(X)
        d = np.abs(np.diag(R))
        if d.size == 0 or d.max() == 0 or np.any(d < 1e-10 * d.max()):
            raise np.linalg.LinAlgError("X does not have full column rank")
    return np.eye(N) - U @ U.T


def mi_operator(X, A) -> np.ndarray:
    """(I - P_X) A (I - P_X) with P_X the projection onto col(X)."""
    A = np.asarray(A, dtype=float)
    P = _orth_complement_projector(X)
    G = P @ A @ P
    if np.allclose(A, A.T, rtol=0, atol=0):
        G = 0.5 * (G + G.T)
    return G


def _ordered_eig(G) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs sorted descending with a fixed sign and tie order."""
    vals, vecs = np.linalg.eigh(0.5 * (G + G.T))
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    # sign: largest-magnitude entry positive (first such entry on exact ties)
    big = np.argmax(np.abs(vecs), axis=0)
    flip = vecs[big, np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0
    # within groups of tied eigenvalues order by the first nonzero component
    order = list(range(len(vals)))
    scale = max(1.0, np.max(np.abs(vals))) if vals.size else 1.0
    i = 0
    out = []
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(vals[order[i]] - vals[order[j]]) <= EIG_TIE * scale:
            j += 1
        group = order[i:j]
        if len(group) > 1:
            group.sort(key=lambda k: _tie_key(vecs[:, k]))
        out.extend(group)
        i = j
    out = np.array(out, dtype=int)
    return vals[out], vecs[:, out]


def _tie_key(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size == 0:
        return (len(v), 0.0)
    return (int(nz[0]), -float(v[nz[0]]))


def positive_eigen_count(G, tol: float = 1e-10) -> int:
    vals = np.linalg.eigvalsh(0.5 * (G + G.T))
    scale = max(1.0, np.max(np.abs(vals)))
    return int(np.sum(vals > tol * scale))


def default_rank(X, A) -> int:
    """ceil(10% of the positive eigenvalues of the MI operator)."""
    npos = positive_eigen_count(mi_operator(X, A))
    if npos == 0:
        raise ValueError("MI operator has no positive eigenvalues")
    return max(1, math.ceil(0.1 * npos))


def mi_basis(X, A, r: int | None = None, return_values: bool = False):
    """First r eigenvectors (descending eigenvalues) of the MI operator."""
    G = mi_operator(X, A)
    vals, vecs = _ordered_eig(G)
    scale = max(1.0, np.max(np.abs(vals)))
    npos = int(np.sum(vals > 1e-10 * scale))
    if r is None:
        if npos == 0:
            raise ValueError("MI operator has no positive eigenvalues")
        r = max(1, math.ceil(0.1 * npos))
    if not 1 <= r <= npos:
        raise ValueError(f"r={r} must lie in 1..{npos} (number of positive eigenvalues)")
    if return_values:
        return vecs[:, :r], vals[:r]
    return vecs[:, :r]


def mi_propagator(Psi, X, U=None) -> np.ndarray:
    """r x r propagator from the eigenvectors of P U P, P projecting off col(Psi'X).

    The covariate block Psi'X of (Psi'X, I_r) takes the covariate slot and U
    (default I_r) the weight slot. The projector is rank revealing, so
    Psi'X = 0 is allowed and gives the eigenvectors of U itself.
    """
    Psi = np.asarray(Psi, dtype=float)
    X = np.asarray(X, dtype=float)
    r = Psi.shape[1]
    if X.shape[0] != Psi.shape[0]:
        raise ValueError("Psi and X must have the same number of rows")
    U = np.eye(r) if U is None else np.asarray(U, dtype=float)
    if U.shape != (r, r):
        raise ValueError(f"U must be {r}x{r}")
    C = Psi.T @ X
    if not np.all(np.isfinite(C)):
        raise np.linalg.LinAlgError("degenerate covariate block")
    # singular values of Psi'X below 1e-10 |Psi| |X| count as zero
    scale = np.linalg.norm(Psi, 2) * np.linalg.norm(X, 2) if X.size else 0.0
    P = _orth_complement_projector(C, rank_revealing=True, scale=scale)
    G = P @ U @ P
    _, vecs = _ordered_eig(G)
    return vecs


def k_star(Psi, Q, eps: float = PSD_FLOOR) -> np.ndarray:
    """Frobenius-closest random-effect covariance: inverse of clipped Psi'Q Psi."""
    Psi = np.asarray(Psi, dtype=float)
    Q = np.asarray(Q, dtype=float)
    C = Psi.T @ Q @ Psi
    C = 0.5 * (C + C.T)
    vals, vecs = np.linalg.eigh(C)
    if np.max(np.abs(vals)) <= eps:
        raise np.linalg.LinAlgError("projected precision Psi'Q Psi is numerically zero")
    clipped = np.maximum(vals, eps)
    K = (vecs / clipped) @ vecs.T
    return 0.5 * (K + K.T)


def k_star_objective(K, Psi, Q) -> float:
    return float(np.linalg.norm(Q - Psi @ np.linalg.inv(K) @ Psi.T, "fro"))


@dataclass
class BasisSet:
    Psi: list[np.ndarray]          # prediction-cell basis per time, N_t x r
    M: list[np.ndarray | None]     # propagator per time; None at t = 1
    Kstar: list[np.ndarray]
    r: int
