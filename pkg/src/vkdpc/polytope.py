"""Halfspace polytopes ``{v : A v <= b}`` with LP-based set operations."""

from __future__ import annotations

import csv
import itertools

import numpy as np

from .optim import INFEASIBLE, OPTIMAL, UNBOUNDED, QpProblem, solve_lp, solve_qp

ROW_TOL = 1e-14


class EmptyPolytopeError(ValueError):
    pass


class Polytope:
    """Intersection of halfspaces with unit-norm normals.

    Rows whose normal vanishes are dropped when trivially satisfied; a
    violated zero row is kept as ``0 <= -1`` so the set stays empty.
    """

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        norms = np.linalg.norm(A, axis=1)
        zero = norms < ROW_TOL
        if np.any(zero & (b < -ROW_TOL)):
            A = np.zeros((1, A.shape[1]))
            b = -np.ones(1)
        else:
            keep = ~zero
            A = A[keep] / norms[keep, None]
            b = b[keep] / norms[keep]
        self.A = A
        self.b = b

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_rows})"

    @classmethod
    def box(cls, lb, ub) -> "Polytope":
        lb = np.asarray(lb, dtype=float).reshape(-1)
        ub = np.asarray(ub, dtype=float).reshape(-1)
        n = len(lb)
        I = np.eye(n)
        return cls(np.vstack([I, -I]), np.concatenate([ub, -lb]))

    @classmethod
    def symmetric_box(cls, bound, dim: int) -> "Polytope":
        ub = np.broadcast_to(np.asarray(bound, dtype=float), (dim,))
        return cls.box(-ub, ub)

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float).reshape(-1)
        return bool(np.all(self.A @ v <= self.b + tol))

    def violation(self, v) -> float:
        """Largest constraint violation at ``v`` (negative inside)."""
        if self.n_rows == 0:
            return -np.inf
        return float(np.max(self.A @ np.asarray(v, dtype=float).reshape(-1) - self.b))

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def translate(self, c) -> "Polytope":
        """The set ``{v + c : v in self}``."""
        c = np.asarray(c, dtype=float).reshape(-1)
        return Polytope(self.A, self.b + self.A @ c)

    def scale(self, factor: float) -> "Polytope":
        return Polytope(self.A, factor * self.b)

    def linear_preimage(self, M) -> "Polytope":
        """``{v : M v in self}``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Polytope(self.A @ M, self.b)

    def support(self, direction) -> float:
        """``max d'v`` over the set (``inf`` when unbounded, ``-inf`` when empty)."""
        d = np.asarray(direction, dtype=float).reshape(-1)
        sol = solve_lp(-d, self.A, self.b)
        if sol.status == OPTIMAL:
            return -sol.value
        if sol.status == UNBOUNDED:
            return np.inf
        if sol.status == INFEASIBLE:
            return -np.inf
        raise RuntimeError("support LP failed")

    def chebyshev(self):
        """Center and radius of the largest inscribed ball; radius < 0 means empty."""
        n = self.dim
        norms = np.linalg.norm(self.A, axis=1)
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A = np.hstack([self.A, norms[:, None]])
        sol = solve_lp(c, A, self.b, bounds=[(None, None)] * n + [(None, 1e6)])
        if sol.status != OPTIMAL:
            return None, -np.inf
        return sol.x[:n], float(sol.x[-1])

    def is_empty(self, tol: float = 0.0) -> bool:
        if self.n_rows == 0:
            return False
        _, r = self.chebyshev()
        return r < -tol or not np.isfinite(r)

    def has_interior_point(self, point=None, margin: float = 1e-9) -> bool:
        if point is None:
            _, r = self.chebyshev()
            return r > margin
        return bool(np.all(self.A @ np.asarray(point, dtype=float) < self.b - margin))

    def is_subset(self, other: "Polytope", tol: float = 1e-9) -> bool:
        for a, bi in zip(other.A, other.b):
            if self.support(a) > bi + tol:
                return False
        return True

    def reduce(self, tol: float = 1e-9) -> "Polytope":
        return polytope_reduce(self, tol)

    def vertices(self, tol: float = 1e-9) -> np.ndarray:
        return vertices(self, tol)

    def diameter(self) -> float:
        V = self.vertices()
        if len(V) < 2:
            return 0.0
        diff = V[:, None, :] - V[None, :, :]
        return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))

    def project_point(self, v) -> np.ndarray:
        """Euclidean projection of ``v`` onto the set."""
        v = np.asarray(v, dtype=float).reshape(-1)
        sol = solve_qp(QpProblem(np.eye(self.dim), -v, self.A, self.b), tol=1e-9)
        return sol.v_star

    def distance(self, v) -> float:
        v = np.asarray(v, dtype=float).reshape(-1)
        if self.contains(v, 0.0):
            return 0.0
        return float(np.linalg.norm(self.project_point(v) - v))

    def slice(self, coord: int, value: float) -> "Polytope":
        """Section at ``v[coord] == value`` in the remaining coordinates."""
        keep = [i for i in range(self.dim) if i != coord]
        return Polytope(self.A[:, keep], self.b - self.A[:, coord] * value)

    def polygon(self) -> np.ndarray:
        """Vertices of a 2-D polytope in counter-clockwise order."""
        if self.dim != 2:
            raise ValueError("polygon() needs a 2-D polytope")
        V = self.vertices()
        if len(V) < 3:
            return V
        c = V.mean(axis=0)
        ang = np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])
        return V[np.argsort(ang)]

    def to_csv(self, path) -> None:
        names = [f"a{i + 1}" for i in range(self.dim)] + ["b"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for a, bi in zip(self.A, self.b):
                w.writerow([repr(float(x)) for x in a] + [repr(float(bi))])

    @classmethod
    def from_csv(cls, path) -> "Polytope":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(x) for x in r] for r in rows[1:]])
        return cls(data[:, :-1], data[:, -1])

    def vertices_to_csv(self, path) -> None:
        V = self.vertices()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"v{i + 1}" for i in range(self.dim)])
            for v in V:
                w.writerow([repr(float(x)) for x in v])


def polytope_pre(A_cl, P: Polytope) -> Polytope:
    """Pre-set ``{v : A_cl v in P}``."""
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    if A_cl.shape != (P.dim, P.dim):
        raise ValueError(f"A_cl has shape {A_cl.shape}, polytope has dimension {P.dim}")
    return P.linear_preimage(A_cl)


def _sorted_rows(A, b):
    if len(b) == 0:
        return A, b
    order = np.lexsort(np.vstack([b, A.T[::-1]]))
    return A[order], b[order]


def polytope_reduce(P: Polytope, tol: float = 1e-9) -> Polytope:
    """Minimal halfspace representation, rows sorted lexicographically.

    A row is redundant when maximising its normal over the remaining rows
    cannot exceed its offset by more than ``tol``.
    """
    if P.n_rows == 0:
        return P
    if P.is_empty():
        raise EmptyPolytopeError("cannot reduce an empty polytope")
    A, b = P.A, P.b
    # exact and near duplicates first
    keep = []
    for i in range(len(b)):
        if any(np.abs(A[i] - A[j]).max() <= 1e-12 and abs(b[i] - b[j]) <= 1e-12 for j in keep):
            continue
        keep.append(i)
    active = list(keep)
    for i in list(keep):
        others = [j for j in active if j != i]
        if not others:
            continue
        Ao = np.vstack([A[others], A[i]])
        bo = np.concatenate([b[others], [b[i] + 1.0]])
        sol = solve_lp(-A[i], Ao, bo)
        if sol.status == OPTIMAL and -sol.value <= b[i] + tol:
            active.remove(i)
    A2, b2 = _sorted_rows(A[active], b[active])
    out = Polytope.__new__(Polytope)
    out.A, out.b = A2, b2
    return out


def vertices(P: Polytope, tol: float = 1e-9) -> np.ndarray:
    """Vertices by intersecting every ``dim``-subset of facets and keeping feasible points."""
    d = P.dim
    m = P.n_rows
    if m < d:
        raise ValueError("polytope is unbounded or lower-dimensional")
    combos = np.array(list(itertools.combinations(range(m), d)), dtype=int)
    if combos.size == 0:
        return np.zeros((0, d))
    M = P.A[combos]  # (K, d, d)
    rhs = P.b[combos]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-12
    M, rhs = M[ok], rhs[ok]
    pts = np.linalg.solve(M, rhs[..., None])[..., 0]
    feas = np.all(pts @ P.A.T <= P.b + tol * (1.0 + np.abs(P.b)), axis=1)
    pts = pts[feas]
    if len(pts) == 0:
        return pts
    # merge points closer than the tolerance
    pts = pts[np.lexsort(pts.T[::-1])]
    out = []
    for p in pts:
        if not any(np.abs(p - q).max() <= 1e-8 * (1.0 + np.abs(q).max()) for q in out):
            out.append(p)
    return np.array(out)


def hausdorff(P1: Polytope, P2: Polytope) -> float:
    """Hausdorff distance; attained at a vertex of one of the two sets."""
    d12 = max(P2.distance(v) for v in P1.vertices())
    d21 = max(P1.distance(v) for v in P2.vertices())
    return float(max(d12, d21))
