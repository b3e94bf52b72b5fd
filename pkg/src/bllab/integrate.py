"""Both sides of the global weighted inequality on compact boxes.

The left side is the integral of prod_j f_j(B_j(x))^{p_j} against the weight
BL(dB(x), p)^{-1}; the right side is prod_j (deg B_j * int f_j)^{p_j}.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from scipy.special import gamma

from .polynomial import NonlinearDatum, Polynomial, PolynomialMap, WeightField

KINDS = ("ball-indicator-sum", "gaussian-mixture", "grid-sampled")


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative integrable input f_j on R^{n_j}.

    ``params`` by kind:
      ball-indicator-sum: centers (K, d), radius, optional weights (K,)
      gaussian-mixture:   means (K, d), sigmas (K,), weights (K,) = component masses
      grid-sampled:       axes (list of d increasing arrays), values (array on the grid)
    """
    __test__ = False

    kind: str
    dim: int
    params: dict = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("test functions must be nonnegative")

    @classmethod
    def indicator(cls, center, radius: float) -> "TestFunction":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return cls("ball-indicator-sum", c.size, {"centers": c[None, :], "radius": float(radius)})

    @classmethod
    def gaussian(cls, mean, sigma: float, mass: float = 1.0) -> "TestFunction":
        m = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls("gaussian-mixture", m.size,
                   {"means": m[None, :], "sigmas": np.array([sigma]), "weights": np.array([mass])})

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.kind, self.dim, self.params, self.scale * c)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.dim)
        P = self.params
        if self.kind == "ball-indicator-sum":
            centers = np.asarray(P["centers"], dtype=float).reshape(-1, self.dim)
            w = np.asarray(P.get("weights", np.ones(len(centers))), dtype=float)
            d2 = np.sum((z[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
            out = (d2 <= P["radius"] ** 2).astype(float) @ w
        elif self.kind == "gaussian-mixture":
            means = np.asarray(P["means"], dtype=float).reshape(-1, self.dim)
            s = np.asarray(P["sigmas"], dtype=float)
            w = np.asarray(P["weights"], dtype=float)
            d2 = np.sum((z[:, None, :] - means[None, :, :]) ** 2, axis=-1)
            dens = np.exp(-0.5 * d2 / s ** 2) / (2 * math.pi * s ** 2) ** (self.dim / 2)
            out = dens @ w
        else:
            interp = RegularGridInterpolator(tuple(np.asarray(a, dtype=float) for a in P["axes"]),
                                             np.asarray(P["values"], dtype=float),
                                             bounds_error=False, fill_value=0.0)
            out = interp(z)
        return self.scale * out

    def integral(self) -> float:
        P = self.params
        if self.kind == "ball-indicator-sum":
            k = len(np.asarray(P["centers"]).reshape(-1, self.dim))
            w = np.asarray(P.get("weights", np.ones(k)), dtype=float)
            return self.scale * float(np.sum(w)) * unit_ball_volume(self.dim) * P["radius"] ** self.dim
        if self.kind == "gaussian-mixture":
            return self.scale * float(np.sum(P["weights"]))
        # multilinear interpolant integrates exactly by the trapezoid rule
        v = np.asarray(P["values"], dtype=float)
        for ax in reversed(range(self.dim)):
            v = np.trapezoid(v, np.asarray(P["axes"][ax], dtype=float), axis=ax)
        return self.scale * float(v)

    def to_json(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else (
                [conv(x) for x in v] if isinstance(v, (list, tuple)) else v)
        return {"kind": self.kind, "dim": self.dim, "scale": self.scale,
                "params": {k: conv(v) for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "TestFunction":
        P = {k: (np.asarray(v, dtype=float) if k in ("centers", "means", "sigmas", "weights", "values")
                 else v) for k, v in obj.get("params", {}).items()}
        if obj["kind"] == "grid-sampled":
            P["axes"] = [np.asarray(a, dtype=float) for a in P["axes"]]
        return cls(obj["kind"], int(obj["dim"]), P, float(obj.get("scale", 1.0)))


@dataclass(frozen=True)
class IntegrationSpec:
    box: tuple
    method: str = "monte-carlo"
    order: int = 200
    samples: int = 100000
    seed: int = 0

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("integration box is degenerate")
        if self.method not in ("monte-carlo", "tensor-quadrature"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.method == "monte-carlo" and self.samples < 1000:
            raise ValueError("monte-carlo integration needs at least 1000 samples")
        object.__setattr__(self, "box", tuple(map(tuple, box)))

    @property
    def box_array(self) -> np.ndarray:
        return np.asarray(self.box, dtype=float)

    def with_box(self, box) -> "IntegrationSpec":
        return IntegrationSpec(box, self.method, self.order, self.samples, self.seed)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float
    method: str
    samples: int

    def __float__(self) -> float:
        return self.value


def integrand(datum: NonlinearDatum, fs, x: np.ndarray, field_: WeightField | None = None) -> np.ndarray:
    """prod_j f_j(B_j(x))^{p_j} * weight(x), with weights evaluated only where needed."""
    if len(fs) != len(datum.maps):
        raise ValueError("one test function per map is required")
    vals = np.ones(x.shape[0])
    for B, f, p in zip(datum.maps, fs, datum.exponents):
        if p == 0:
            continue
        if f.dim != B.target_dim:
            raise ValueError("test function dimension does not match map target")
        vals *= f(B.evaluate(x)) ** p
    live = vals > 0
    if np.any(live):
        w = (field_ or WeightField(datum)).weights(x[live])
        vals[live] *= w
    return vals


def _midpoint_nodes(box: np.ndarray, N: int):
    axes = [lo + (np.arange(N) + 0.5) * (hi - lo) / N for lo, hi in box]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    return x, float(np.prod((box[:, 1] - box[:, 0]) / N))


def _midpoint(fn, box: np.ndarray, N: int, chunk: int = 250000) -> float:
    x, cell = _midpoint_nodes(box, N)
    parts = [math.fsum(fn(x[lo:lo + chunk])) for lo in range(0, len(x), chunk)]
    return math.fsum(parts) * cell


def integrate_box(fn, spec: IntegrationSpec) -> Estimate:
    """Integrate a vectorised nonnegative function over the spec's box."""
    box = spec.box_array
    n = len(box)
    if spec.method == "tensor-quadrature":
        coarse = _midpoint(fn, box, spec.order)
        fine = _midpoint(fn, box, 2 * spec.order)
        return Estimate(fine, abs(fine - coarse), spec.method, (2 * spec.order) ** n)

    rng = np.random.default_rng(spec.seed)
    mids = box.mean(axis=1)
    per = max(2, spec.samples // 2 ** n)
    total, var = [], []
    for corner in itertools.product((0, 1), repeat=n):
        lo = np.where(corner, mids, box[:, 0])
        hi = np.where(corner, box[:, 1], mids)
        vol = float(np.prod(hi - lo))
        x = lo + (hi - lo) * rng.random((per, n))
        v = fn(x)
        total.append(vol * math.fsum(v) / per)
        var.append(vol ** 2 * np.var(v, ddof=1) / per)
    return Estimate(math.fsum(total), math.sqrt(math.fsum(var)), spec.method, per * 2 ** n)


def lhs_functional(datum: NonlinearDatum, fs, spec: IntegrationSpec,
                   field_: WeightField | None = None) -> Estimate:
    field_ = field_ or WeightField(datum)
    return integrate_box(lambda x: integrand(datum, fs, x, field_), spec)


def rhs_functional(datum: NonlinearDatum, fs) -> float:
    out = 1.0
    for deg, f, p in zip(datum.degrees, fs, datum.exponents):
        if p == 0:
            continue
        out *= (deg * f.integral()) ** p
    return out


def inequality_report(datum: NonlinearDatum, fs, spec: IntegrationSpec,
                      budget: float = 1.0) -> dict:
    """lhs, rhs and their ratio; ``ok`` when ratio <= budget within 3 error budgets."""
    lhs = lhs_functional(datum, fs, spec)
    rhs = rhs_functional(datum, fs)
    if rhs == 0:
        ratio = math.inf if lhs.value > 0 else 0.0
        ratio_err = 0.0
    else:
        ratio = lhs.value / rhs
        ratio_err = lhs.error / rhs
    return {"lhs": lhs.value, "stderr": lhs.error, "rhs": rhs, "ratio": ratio,
            "ratio_err": ratio_err, "budget": budget, "method": spec.method,
            "seed": spec.seed, "box": [list(b) for b in spec.box],
            "ok": bool(ratio <= budget + 3 * ratio_err)}


# -- diffeomorphism invariance ------------------------------------------------

def cubic_perturbation(n: int, box, eps: float = 0.1) -> tuple:
    """phi(x) = x + eps * s(x), s_i(x) = x_{i+1}^3 (cyclic), with eps halved
    until det dphi > 1/2 on a sample of the box. Returns (phi, eps)."""
    box = np.asarray(box, dtype=float).reshape(n, 2)
    comps = []
    for i in range(n):
        xi = Polynomial.variable(n, i)
        nxt = Polynomial.variable(n, (i + 1) % n)
        comps.append((xi, nxt ** 3))
    probe, _ = _midpoint_nodes(box, 41)
    corners = np.array(list(itertools.product(*box)))
    probe = np.vstack([probe, corners])
    while eps > 1e-12:
        phi = PolynomialMap(tuple(a + b * eps for a, b in comps))
        if np.min(np.linalg.det(phi.jacobian_at(probe))) > 0.5:
            return phi, eps
        eps *= 0.5
    raise ValueError("no admissible perturbation size")


def invert(phi, y: np.ndarray, x0: np.ndarray | None = None, iters: int = 50) -> np.ndarray:
    """Solve phi(x) = y by Newton's method from x0 (default y), halving steps
    that would increase the residual. Points that stall are left where they stop."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.array(y if x0 is None else x0, dtype=float)
    tol = 1e-14 * (1.0 + np.abs(y).max(axis=-1))
    active = np.arange(len(y))
    r = phi.evaluate(x) - y
    for _ in range(iters):
        res = np.linalg.norm(r, axis=-1)
        keep = res > tol[active]
        active, r, res = active[keep], r[keep], res[keep]
        if active.size == 0:
            break
        xa = x[active]
        try:
            step = np.linalg.solve(phi.jacobian_at(xa), r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.einsum("nij,nj->ni", np.linalg.pinv(phi.jacobian_at(xa)), r)
        t = np.ones(len(active))
        for _ in range(30):
            trial = xa - t[:, None] * step
            r_trial = phi.evaluate(trial) - y[active]
            worse = np.linalg.norm(r_trial, axis=-1) > res
            if not np.any(worse):
                break
            t = np.where(worse, 0.5 * t, t)
        moved = ~worse
        x[active[moved]] = trial[moved]
        r = np.where(moved[:, None], r_trial, r)
        active, r = active[moved], r[moved]
        if active.size == 0:
            break
    return x


def _check_diffeo(phi, pts: np.ndarray) -> None:
    if np.any(np.linalg.det(phi.jacobian_at(pts)) <= 0):
        raise ValueError("not a diffeomorphism on box")


@dataclass
class ImageRegion:
    """phi(box) for a map phi that is injective on the box.

    Membership of y is decided by inverting phi from the nearest image of a
    reference grid and checking that the preimage lies in the box.
    """
    phi: object
    box: np.ndarray
    grid_n: int = 81

    def __post_init__(self):
        self.nodes, _ = _midpoint_nodes(self.box, self.grid_n)
        corners = np.array(list(itertools.product(*self.box)))
        self.nodes = np.vstack([self.nodes, corners])
        _check_diffeo(self.phi, self.nodes)
        self.tree = cKDTree(self.phi.evaluate(self.nodes))

    def bounding_box(self, per_edge: int = 401) -> np.ndarray:
        n = len(self.box)
        axes = [np.linspace(lo, hi, per_edge) for lo, hi in self.box]
        faces = []
        for i in range(n):
            for side in (0, 1):
                grids = [axes[k] if k != i else np.array([self.box[i, side]]) for k in range(n)]
                faces.append(np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, n))
        img = self.phi.evaluate(np.vstack(faces))
        lo, hi = img.min(axis=0), img.max(axis=0)
        pad = 1e-6 * (hi - lo)
        return np.stack([lo - pad, hi + pad], axis=1)

    def preimage(self, y: np.ndarray) -> tuple:
        _, idx = self.tree.query(y)
        x = invert(self.phi, y, self.nodes[idx])
        ok = np.linalg.norm(self.phi.evaluate(x) - y, axis=-1) <= 1e-10 * (1 + np.abs(y).max(axis=-1))
        ok &= np.all((x >= self.box[:, 0]) & (x <= self.box[:, 1]), axis=1)
        return x, ok


def diffeo_invariance_check(datum: NonlinearDatum, fs, phi, spec: IntegrationSpec,
                            mode: str | None = None) -> dict:
    """Compare the functional of (B_j o phi) over the box with that of (B_j) over phi(box).

    ``mode="pullback"`` evaluates the original side at phi of the box nodes
    with the substitution factor det dphi, which is exact quadrature for
    linear phi; ``mode="direct"`` integrates the original side over a bounding
    box of phi(box) masked to the image. Default: pullback for affine phi,
    direct otherwise.
    """
    box = spec.box_array
    if mode is None:
        mode = "pullback" if isinstance(phi, PolynomialMap) and phi.degree <= 1 else "direct"
    moved = datum.compose(phi)
    transformed = lhs_functional(moved, fs, spec)
    field_base = WeightField(datum)

    if mode == "pullback":
        probe, _ = _midpoint_nodes(box, 41)
        _check_diffeo(phi, probe)

        def fn(x):
            return integrand(datum, fs, phi.evaluate(x), field_base) * \
                np.abs(np.linalg.det(phi.jacobian_at(x)))

        base = integrate_box(fn, spec)
    elif mode == "direct":
        region = ImageRegion(phi, box)

        def fn(y):
            _, inside = region.preimage(y)
            out = np.zeros(len(y))
            if np.any(inside):
                out[inside] = integrand(datum, fs, y[inside], field_base)
            return out

        base = integrate_box(fn, spec.with_box(region.bounding_box()))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    scale = max(abs(base.value), abs(transformed.value), 1e-300)
    disc = abs(base.value - transformed.value) / scale
    err = math.hypot(base.error, transformed.error) / scale
    return {"base": base.value, "transformed": transformed.value, "discrepancy": disc,
            "error": err, "budget": max(2 * err, 1e-3), "mode": mode,
            "ok": bool(disc < max(2 * err, 1e-3))}
