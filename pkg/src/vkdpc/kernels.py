"""Kernel functions and stacked kernel-section vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("inverse-multiquadric", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and squared length scale ``sigma2``.

    The inverse multiquadric is ``1 / sqrt(1 + |a - b|^2 / sigma2)``; the
    gaussian is ``exp(-|a - b|^2 / (2 sigma2))``.
    """

    family: str = "inverse-multiquadric"
    sigma2: float = 200.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}, expected one of {FAMILIES}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def from_sqdist(self, sqdist):
        sqdist = np.asarray(sqdist, dtype=float)
        if self.family == "inverse-multiquadric":
            return 1.0 / np.sqrt(1.0 + sqdist / self.sigma2)
        return np.exp(-0.5 * sqdist / self.sigma2)

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma2": self.sigma2}


class CenterSet:
    """Ordered set of distinct kernel centers, one per row of ``points``."""

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("a center set needs at least one point")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("center points must be pairwise distinct")
        pts.setflags(write=False)
        self.points = pts

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"CenterSet(size={self.size}, dim={self.dim})"


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(spec.from_sqdist(diff @ diff))


def kernel_vector(spec: KernelSpec, centers: CenterSet, p) -> np.ndarray:
    """Entries ``k(c_i, p)`` in center storage order."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape != (centers.dim,):
        raise ValueError(f"query has shape {p.shape}, centers have dimension {centers.dim}")
    diff = centers.points - p
    return spec.from_sqdist(np.einsum("ij,ij->i", diff, diff))


def kernel_matrix(spec: KernelSpec, centers: CenterSet, P, chunk: int = 256) -> np.ndarray:
    """Kernel vectors for a batch of queries, one column per row of ``P``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] != centers.dim:
        raise ValueError(f"queries have dimension {P.shape[1]}, centers have {centers.dim}")
    C = centers.points
    out = np.empty((C.shape[0], P.shape[0]))
    for j in range(0, P.shape[0], chunk):
        diff = C[:, None, :] - P[None, j:j + chunk, :]
        out[:, j:j + chunk] = spec.from_sqdist(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def gram(spec: KernelSpec, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts[:, None, :] - pts[None, :, :]
    return spec.from_sqdist(np.einsum("ijk,ijk->ij", diff, diff))
