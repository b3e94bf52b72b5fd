"""Fine meshes inside dilated delta-balls and the induced degree bookkeeping."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .balls import BallCollection

ALPHA, BETA = 1.5, 1.25


@dataclass(frozen=True)
class Mesh:
    center: np.ndarray
    delta: float
    spacing: float
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def build_mesh(center, delta: float, alpha: float = ALPHA) -> Mesh:
    """Grid of spacing delta^alpha anchored at ``center``, kept inside the closed
    ball of radius 2*delta."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    h = delta ** alpha
    if h >= 2 * delta:
        raise ValueError("mesh coarser than ball")
    K = int(math.floor(2 * delta / h * (1 + 1e-12)))
    ks = np.array(list(itertools.product(range(-K, K + 1), repeat=c.size)), dtype=float)
    keep = np.sum(ks ** 2, axis=1) * h * h <= (2 * delta) ** 2 * (1 + 1e-12)
    pts = c + h * ks[keep]
    pts.setflags(write=False)
    return Mesh(c, delta, h, pts)


def expected_mesh_size(dim: int, delta: float, alpha: float) -> float:
    """Lattice-point heuristic: volume of the 2*delta ball over the cell volume."""
    vol = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * (2 * delta) ** dim
    return vol / delta ** (alpha * dim)


def merge_meshes(meshes) -> np.ndarray:
    """Union of mesh points with exact duplicates removed."""
    if not meshes:
        return np.zeros((0, 0))
    return np.unique(np.vstack([m.points for m in meshes]), axis=0)


def collection_meshes(C: BallCollection, alpha: float = ALPHA) -> list:
    return [build_mesh(c, C.delta, alpha) for c in C.centers]


def degree_budget(degrees, collections, alpha: float = ALPHA) -> list:
    """deg(B_j) * sum over balls of #mesh, one bound per map."""
    out = []
    for deg, C in zip(degrees, collections):
        out.append(float(deg * sum(len(m) for m in collection_meshes(C, alpha))))
    return out


def scaling_exponent(dim: int, deltas, alpha: float = ALPHA) -> float:
    """Least-squares slope of log #mesh against log delta."""
    counts = [len(build_mesh(np.zeros(dim), d, alpha)) for d in deltas]
    return float(np.polyfit(np.log(deltas), np.log(counts), 1)[0])
