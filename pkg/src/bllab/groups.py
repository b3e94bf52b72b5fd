"""Chart models of matrix groups, Haar measure, the modular character, and
weighted Young convolution inequalities."""
from __future__ import annotations

import functools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .kernels import threads
from .solver import BLDatum, SolverOptions, bl_constant


@dataclass(frozen=True)
class GroupModel:
    name: str
    k: int
    domain: np.ndarray                      # (k, 2) open chart box
    multiply: Callable                      # (..., k), (..., k) -> (..., k)
    invert: Callable
    identity: np.ndarray
    haar_density: Callable                  # (..., k) -> (...,)
    mult_degree: int
    degree: int = 1

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return np.all((x > lo + margin) & (x < hi - margin), axis=-1)

    def integrate(self, values: np.ndarray, nodes: np.ndarray, cell: float) -> float:
        return math.fsum(values * self.haar_density(nodes)) * cell


def euclidean(k: int = 1, half_width: float = 50.0) -> GroupModel:
    return GroupModel(
        name=f"R{k}", k=k, domain=np.array([[-half_width, half_width]] * k),
        multiply=lambda g, h: np.asarray(g) + np.asarray(h),
        invert=lambda g: -np.asarray(g),
        identity=np.zeros(k),
        haar_density=lambda x: np.ones(np.shape(x)[:-1]),
        mult_degree=1)


def positive_reals() -> GroupModel:
    return GroupModel(
        name="Rpos", k=1, domain=np.array([[1e-3, 1e3]]),
        multiply=lambda g, h: np.asarray(g) * np.asarray(h),
        invert=lambda g: 1.0 / np.asarray(g),
        identity=np.ones(1),
        haar_density=lambda x: 1.0 / np.asarray(x)[..., 0],
        mult_degree=2)


def _axb_mul(g, h):
    g, h = np.asarray(g, dtype=float), np.asarray(h, dtype=float)
    a, b = g[..., 0], g[..., 1]
    c, d = h[..., 0], h[..., 1]
    return np.stack(np.broadcast_arrays(a * c, a * d + b), axis=-1)


def _axb_inv(g):
    g = np.asarray(g, dtype=float)
    return np.stack([1.0 / g[..., 0], -g[..., 1] / g[..., 0]], axis=-1)


def affine_line() -> GroupModel:
    """The ax+b group, (a, b)(c, d) = (ac, ad + b), left Haar da db / a^2."""
    return GroupModel(
        name="axb", k=2, domain=np.array([[1e-2, 1e2], [-1e2, 1e2]]),
        multiply=_axb_mul, invert=_axb_inv, identity=np.array([1.0, 0.0]),
        haar_density=lambda x: 1.0 / np.asarray(x)[..., 0] ** 2,
        mult_degree=2)


def _heis_mul(g, h):
    g, h = np.asarray(g, dtype=float), np.asarray(h, dtype=float)
    return np.stack(np.broadcast_arrays(g[..., 0] + h[..., 0], g[..., 1] + h[..., 1],
                                        g[..., 2] + h[..., 2] + g[..., 0] * h[..., 1]), axis=-1)


def _heis_inv(g):
    g = np.asarray(g, dtype=float)
    return np.stack([-g[..., 0], -g[..., 1], -g[..., 2] + g[..., 0] * g[..., 1]], axis=-1)


def heisenberg() -> GroupModel:
    return GroupModel(
        name="heisenberg", k=3, domain=np.array([[-50.0, 50.0]] * 3),
        multiply=_heis_mul, invert=_heis_inv, identity=np.zeros(3),
        haar_density=lambda x: np.ones(np.shape(x)[:-1]),
        mult_degree=2)


MODELS = {"R1": lambda: euclidean(1), "R2": lambda: euclidean(2), "Rpos": positive_reals,
          "axb": affine_line, "heisenberg": heisenberg}


def verify_model(G: GroupModel, seed: int = 0) -> GroupModel:
    """Check the group law and left invariance of the Haar density on the chart."""
    rng = np.random.default_rng(seed)
    g = G.identity + 0.3 * (rng.random((16, G.k)) - 0.5)
    err = np.max(np.abs(G.multiply(g, G.invert(g)) - G.identity))
    if err > 1e-10:
        raise ValueError(f"{G.name}: g g^-1 misses the identity by {err:.1e}")
    d = modular_character(G, G.identity)
    if abs(d - 1) > 1e-6:
        raise ValueError(f"{G.name}: Haar density fails the identity probe ({d})")
    return G


@functools.lru_cache(maxsize=None)
def get_model(name: str) -> GroupModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown group model {name!r}; choose from {sorted(MODELS)}") from None
    return verify_model(factory())


# -- functions on the chart ---------------------------------------------------

@dataclass(frozen=True)
class GroupFunction:
    """Nonnegative function compactly supported in a box of the chart.

    kinds: bump (center, radius), gaussian-in-chart (center, sigma, cut at
    ``cut`` sigmas), grid-sampled (axes, values; multilinear interpolation).
    """
    kind: str
    params: dict
    scale: float = 1.0

    @classmethod
    def bump(cls, center, radius) -> "GroupFunction":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        r = np.broadcast_to(np.asarray(radius, dtype=float), c.shape).copy()
        return cls("bump", {"center": c, "radius": r})

    @classmethod
    def gaussian(cls, center, sigma, cut: float = 9.0) -> "GroupFunction":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        s = np.broadcast_to(np.asarray(sigma, dtype=float), c.shape).copy()
        return cls("gaussian-in-chart", {"center": c, "sigma": s, "cut": cut})

    def scaled(self, c: float) -> "GroupFunction":
        return GroupFunction(self.kind, self.params, self.scale * c)

    @property
    def support(self) -> np.ndarray:
        P = self.params
        if self.kind == "bump":
            return np.stack([P["center"] - P["radius"], P["center"] + P["radius"]], axis=1)
        if self.kind == "gaussian-in-chart":
            w = P["cut"] * P["sigma"]
            return np.stack([P["center"] - w, P["center"] + w], axis=1)
        return np.array([[a[0], a[-1]] for a in P["axes"]])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        P = self.params
        if self.kind == "bump":
            t = np.sum(((x - P["center"]) / P["radius"]) ** 2, axis=-1)
            with np.errstate(divide="ignore", over="ignore"):
                out = np.where(t < 1, np.exp(1.0 - 1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        elif self.kind == "gaussian-in-chart":
            u = (x - P["center"]) / P["sigma"]
            inside = np.all(np.abs(u) <= P["cut"], axis=-1)
            out = np.where(inside, np.exp(-0.5 * np.sum(u * u, axis=-1)), 0.0)
        else:
            interp = P.get("_interp")
            if interp is None:
                interp = RegularGridInterpolator(tuple(P["axes"]), P["values"],
                                                 bounds_error=False, fill_value=0.0)
                P["_interp"] = interp
            out = interp(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1])
        return self.scale * out


def _weighted(f: GroupFunction, G: GroupModel, expo: float) -> Callable:
    if expo == 0:
        return f
    return lambda x: f(x) * modular_function(G, x) ** expo


# -- quadrature lattice -------------------------------------------------------

@dataclass(frozen=True)
class QuadSpec:
    """Quadrature on the lattice h Z^k: integral ~ sum F(x) omega(x) h^k."""
    h: float = 0.02
    chunk: int = 2_000_000

    def nodes(self, box: np.ndarray) -> tuple:
        box = np.asarray(box, dtype=float)
        axes = [self.h * np.arange(math.floor(lo / self.h), math.ceil(hi / self.h) + 1)
                for lo, hi in box]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return axes, x, self.h ** len(box)


def integrate(G: GroupModel, f: Callable, box, quad: QuadSpec, power: float = 1.0) -> float:
    _, x, cell = quad.nodes(box)
    x = x.reshape(-1, G.k)
    return G.integrate(np.asarray(f(x)) ** power, x, cell)


def _check_box(G: GroupModel, box: np.ndarray, what: str) -> None:
    lo, hi = G.domain[:, 0], G.domain[:, 1]
    if np.any(box[:, 0] <= lo) or np.any(box[:, 1] >= hi):
        raise ValueError(what)


def _box_points(box: np.ndarray, per_axis: int = 9) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def _image_box(points: np.ndarray, pad: float) -> np.ndarray:
    return np.stack([points.min(axis=0) - pad, points.max(axis=0) + pad], axis=1)


# -- modular character --------------------------------------------------------

PROBES = ((0.0, 0.30), (0.1, 0.20), (-0.05, 0.25))


def _probes(G: GroupModel) -> list:
    out = []
    for shift, rad in PROBES:
        c = G.identity + shift * np.linspace(1.0, 0.5, G.k)
        out.append(GroupFunction.bump(c, rad))
    return out


def modular_character(G: GroupModel, g, quad: QuadSpec | None = None,
                      rtol: float = 1e-5) -> float:
    """Delta(g) = int f dmu / int f(x g) dmu, agreed on by three reference bumps."""
    g = np.asarray(g, dtype=float)
    quad = quad or QuadSpec(h={1: 0.001, 2: 0.0025, 3: 0.015}.get(G.k, 0.015))
    g_inv = G.invert(g)
    vals = []
    for f in _probes(G):
        box = f.support
        moved = G.multiply(_box_points(box, 17), g_inv)
        mbox = _image_box(moved, 2 * quad.h)
        if not np.all(G.contains(moved)):
            raise ValueError("chart too small for g")
        _check_box(G, mbox, "chart too small for g")
        num = integrate(G, f, box + np.array([-quad.h, quad.h]), quad)
        den = integrate(G, lambda x: f(G.multiply(x, g)), mbox, quad)
        vals.append(num / den)
    spread = (max(vals) - min(vals)) / min(vals)
    if spread > rtol:
        raise RuntimeError(f"probe-dependent modular character (spread {spread:.2e})")
    return float(np.mean(vals))


def modular_function(G: GroupModel, x, h: float = 1e-6) -> np.ndarray:
    """Delta at chart points from the infinitesimal form of the definition:
    Delta(g) = omega(g) |det d(R_g)(e)| / omega(e), with the right-translation
    Jacobian taken by central differences. Cross-checked against
    ``modular_character``."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, G.k)
    e = G.identity
    J = np.empty((len(flat), G.k, G.k))
    for i in range(G.k):
        step = np.zeros(G.k)
        step[i] = h
        J[:, :, i] = (G.multiply(e + step, flat) - G.multiply(e - step, flat)) / (2 * h)
    out = G.haar_density(flat) * np.abs(np.linalg.det(J)) / G.haar_density(e[None, :])[0]
    return out.reshape(x.shape[:-1])


def left_invariance_defect(G: GroupModel, f: GroupFunction, g, quad: QuadSpec) -> float:
    """|int f(g x) dmu - int f dmu| / int f dmu."""
    box = f.support
    moved = G.multiply(G.invert(g), _box_points(box, 17))
    mbox = _image_box(moved, 2 * quad.h)
    _check_box(G, mbox, "chart too small for g")
    base = integrate(G, f, box + np.array([-quad.h, quad.h]), quad)
    other = integrate(G, lambda x: f(G.multiply(g, x)), mbox, quad)
    return abs(other - base) / base


# -- convolution and Young ----------------------------------------------------

def convolve(G: GroupModel, f, g, quad: QuadSpec, f_support=None, g_support=None) -> GroupFunction:
    """(f * g)(x) = int f(x y^{-1}) g(y) dmu(y), sampled on the lattice over supp f . supp g."""
    fs = np.asarray(f.support if f_support is None else f_support, dtype=float)
    gs = np.asarray(g.support if g_support is None else g_support, dtype=float)
    _check_box(G, fs, "product support escapes chart")
    _check_box(G, gs, "product support escapes chart")
    prod = G.multiply(_box_points(fs)[:, None, :], _box_points(gs)[None, :, :]).reshape(-1, G.k)
    out_box = _image_box(prod, 2 * quad.h)
    _check_box(G, out_box, "product support escapes chart")
    axes, X, _ = quad.nodes(out_box)
    _, Y, cell = quad.nodes(gs)
    Y = Y.reshape(-1, G.k)
    gy = g(Y) * G.haar_density(Y) * cell
    live = gy != 0
    Y, gy = Y[live], gy[live]
    Yinv = G.invert(Y)
    Xf = X.reshape(-1, G.k)
    vals = np.zeros(len(Xf))
    step = max(1, quad.chunk // max(1, len(Y)))

    def work(lo):
        xs = Xf[lo:lo + step]
        vals[lo:lo + step] = f(G.multiply(xs[:, None, :], Yinv[None, :, :])) @ gy

    starts = range(0, len(Xf), step)
    if threads() > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads()) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    values = vals.reshape(X.shape[:-1])
    return GroupFunction("grid-sampled", {"axes": axes, "values": values})


def lp_norm(G: GroupModel, F: GroupFunction, p: float, quad: QuadSpec) -> float:
    if math.isinf(p):
        if F.kind == "grid-sampled":
            return float(np.max(F.params["values"]))
        _, x, _ = quad.nodes(F.support)
        return float(np.max(F(x.reshape(-1, G.k))))
    box = F.support
    if F.kind != "grid-sampled":
        box = box + np.array([-quad.h, quad.h])
    return integrate(G, F, box, quad, power=p) ** (1.0 / p)


def conj(p: float) -> float:
    """1/p' = 1 - 1/p."""
    return 1.0 if math.isinf(p) else 1.0 - 1.0 / p


def young_exponents(p) -> list:
    """Delta exponent for f_j: sum over l < j of 1/p_l'."""
    return [sum(conj(p[l]) for l in range(j)) for j in range(len(p))]


def young_report(G: GroupModel, fs, p, r: float, quad: QuadSpec) -> dict:
    """|| *_j f_j Delta^{sum_{l<j} 1/p_l'} ||_{L^r} against
    deg(G) deg(m_G)^sigma prod_j ||f_j||_{p_j}, sigma = sum_j 1/p_j."""
    p = [float(x) for x in p]
    if len(fs) != len(p) or len(p) not in (2, 3):
        raise ValueError("young_report supports m = 2 or 3 functions")
    if abs(conj(r) - sum(conj(x) for x in p)) > 1e-9:
        raise ValueError("exponent relation 1/r' = sum 1/p_j' violated")
    expo = young_exponents(p)

    def run(weighted: bool):
        acc, support = None, None
        for f, e in zip(fs, expo):
            term = _weighted(f, G, e) if weighted else f
            if acc is None:
                acc, support = term, f.support
            else:
                acc = convolve(G, _as_function(acc, support), _as_function(term, f.support), quad)
                support = acc.support
        return acc

    conv = run(True)
    lhs = lp_norm(G, conv, r, quad)
    norms = [lp_norm(G, f, pj, quad) for f, pj in zip(fs, p)]
    sigma = sum(1.0 / x for x in p)
    rhs = G.degree * G.mult_degree ** sigma * math.prod(norms)
    out = {"group": G.name, "p": p, "r": r, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs,
           "delta_exponents": expo, "norms": norms, "sigma": sigma}
    if math.isinf(r):
        fine = QuadSpec(quad.h / 2, quad.chunk)
        out["lhs_refined"] = lp_norm(G, _conv_chain(G, fs, expo, fine), r, fine)
    return out


def _conv_chain(G, fs, expo, quad):
    acc = None
    for f, e in zip(fs, expo):
        term = _weighted(f, G, e)
        acc = term if acc is None else convolve(G, _as_function(acc, acc.support),
                                                _as_function(term, f.support), quad)
    return acc


class _as_function:
    """Attach a support box to a plain callable."""

    def __init__(self, fn, support):
        self.fn = fn
        self.support = np.asarray(support, dtype=float)

    def __call__(self, x):
        return self.fn(x)


def mass_identity(G: GroupModel, f: GroupFunction, g: GroupFunction, quad: QuadSpec) -> dict:
    """int f*g dmu against int f dmu * int g Delta dmu (and the naive int f * int g).

    The Delta-weighted run convolves f with g Delta^{-1}, for which the naive
    product of masses is exact."""
    pad = np.array([-quad.h, quad.h])
    mf = integrate(G, f, f.support + pad, quad)
    mg = integrate(G, g, g.support + pad, quad)
    mg_delta = integrate(G, lambda x: g(x) * modular_function(G, x), g.support + pad, quad)
    plain = convolve(G, f, g, quad)
    m_plain = integrate(G, plain, plain.support, quad)
    g_w = _as_function(lambda x: g(x) / modular_function(G, x), g.support)
    weighted = convolve(G, f, g_w, quad)
    m_weighted = integrate(G, weighted, weighted.support, quad)
    return {"mass_fg": m_plain, "mass_f": mf, "mass_g": mg, "mass_g_delta": mg_delta,
            "unweighted_ratio": m_plain / (mf * mg),
            "predicted_ratio": mg_delta / mg,
            "weighted_ratio": m_weighted / (mf * mg)}


# -- connection with Brascamp-Lieb --------------------------------------------

def euclidean_young_constant(k: int, q, opts: SolverOptions | None = None) -> float:
    """B_{p,n}: BL of x, y, x + y on R^k x R^k with exponents q."""
    I, Z = np.eye(k), np.zeros((k, k))
    maps = (np.hstack([I, Z]), np.hstack([Z, I]), np.hstack([I, I]))
    return bl_constant(BLDatum(2 * k, maps, tuple(q)), opts).value


def bl_connection_check(G: GroupModel, p, points: int = 50, seed: int = 0,
                        box=None, h: float = 1e-5, opts: SolverOptions | None = None) -> dict:
    """At seeded (x1, x2) compare the BL constant of the derivative datum of
    (x1, x2, x1 x2), measured against Haar measure on the targets, with the
    closed form B_{p,n} omega(x1)^{-1} omega(x2)^{-1} Delta(x2)^{-1/p1'}."""
    p = [float(x) for x in p]
    if len(p) != 2:
        raise ValueError("the connection check is for m = 2")
    q = (1.0 / p[0], 1.0 / p[1], conj(p[0]) + conj(p[1]))
    k = G.k
    B_pn = euclidean_young_constant(k, q, opts)
    rng = np.random.default_rng(seed)
    if box is None:
        box = np.stack([G.identity - 0.5, G.identity + 0.5], axis=1)
        if G.name in ("axb", "Rpos"):
            box[0] = [0.5, 2.0]
    box = np.asarray(box, dtype=float)
    worst, skipped, rows = 0.0, 0, []
    for _ in range(points):
        x1 = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(k)
        x2 = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(k)
        J3 = np.empty((k, 2 * k))
        for i in range(2 * k):
            e = np.zeros(2 * k)
            e[i] = h
            a = G.multiply(x1 + e[:k], x2 + e[k:])
            b = G.multiply(x1 - e[:k], x2 - e[k:])
            J3[:, i] = (a - b) / (2 * h)
        I, Z = np.eye(k), np.zeros((k, k))
        maps = (np.hstack([I, Z]), np.hstack([Z, I]), J3)
        if np.linalg.matrix_rank(J3) < k:
            warnings.warn(f"degenerate Jacobian at {x1}, {x2}; point skipped")
            skipped += 1
            continue
        bl = bl_constant(BLDatum(2 * k, maps, q), opts).value
        x3 = G.multiply(x1, x2)
        om = [G.haar_density(v[None, :])[0] for v in (x1, x2, x3)]
        chart = bl * math.prod(o ** (-qj) for o, qj in zip(om, q))
        delta2 = modular_function(G, x2[None, :])[0]
        closed = B_pn / (om[0] * om[1]) * delta2 ** (-conj(p[0]))
        disc = abs(chart - closed) / closed
        worst = max(worst, disc)
        rows.append((x1.tolist(), x2.tolist(), chart, closed, disc))
    return {"group": G.name, "p": p, "q": list(q), "B_pn": B_pn, "max_discrepancy": worst,
            "points": len(rows), "skipped": skipped, "rows": rows}
