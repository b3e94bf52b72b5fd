"""delta-ball collections and the discrete form of the weighted inequality."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..integrate import IntegrationSpec, TestFunction, lhs_functional
from ..polynomial import NonlinearDatum


@dataclass(frozen=True)
class BallCollection:
    """Multiset of closed balls of common radius ``delta`` in R^dim."""
    dim: int
    centers: np.ndarray
    delta: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float).reshape(-1, self.dim)
        if self.delta <= 0:
            raise ValueError("ball radius must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    def __len__(self) -> int:
        return len(self.centers)

    def with_duplicate(self, k: int = 0) -> "BallCollection":
        return BallCollection(self.dim, np.vstack([self.centers, self.centers[k:k + 1]]), self.delta)

    def as_test_function(self) -> TestFunction:
        return TestFunction("ball-indicator-sum", self.dim,
                            {"centers": np.array(self.centers), "radius": self.delta})


def indicator_sum(C: BallCollection, z) -> np.ndarray | int:
    """Number of balls containing z, boundary included, counted with multiplicity."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = z.reshape(-1, C.dim)
    d2 = np.sum((z[:, None, :] - C.centers[None, :, :]) ** 2, axis=-1)
    out = np.sum(d2 <= C.delta ** 2, axis=1)
    return int(out[0]) if single else out


def discrete_rhs(datum: NonlinearDatum, collections) -> float:
    out = 1.0
    for deg, C, p, k in zip(datum.degrees, collections, datum.exponents, datum.dims):
        if p:
            out *= (deg * C.delta ** k * len(C)) ** p
    return out


def discrete_inequality_report(datum: NonlinearDatum, collections, spec: IntegrationSpec) -> dict:
    """lhs = int_box prod_j (sum_V chi_V(B_j x))^{p_j} BL(dB(x))^{-1} dx,
    rhs = prod_j (deg_j delta^{n_j} #C_j)^{p_j}."""
    deltas = {C.delta for C in collections}
    if len(deltas) != 1:
        raise ValueError("all collections must share one delta")
    fs = [C.as_test_function() for C in collections]
    lhs = lhs_functional(datum, fs, spec)
    rhs = discrete_rhs(datum, collections)
    return {"delta": deltas.pop(), "lhs": lhs.value, "error": lhs.error, "rhs": rhs,
            "ratio": lhs.value / rhs if rhs else float("inf"), "ratio_err": lhs.error / rhs if rhs else 0.0}


def delta_ladder(datum: NonlinearDatum, make_collections, deltas, make_spec) -> dict:
    """Run the discrete report for each delta; ``spread`` is max/min ratio."""
    rows = [discrete_inequality_report(datum, make_collections(d), make_spec(d)) for d in deltas]
    ratios = [r["ratio"] for r in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
    return {"rows": rows, "spread": spread}
