"""Sparse polynomial maps, their Jacobians, and the weight field x -> BL(dB(x), p)^{-1}."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .solver import SCALING_TOL, ScalingError, SolverOptions, bl_constant_batch


def _points(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Polynomial:
    num_vars: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for exp, c in dict(self.terms).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.num_vars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for {self.num_vars} variables")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError("polynomial coefficients must be finite")
            clean[exp] = clean.get(exp, 0.0) + c
        clean = {e: c for e, c in sorted(clean.items()) if c != 0.0}
        object.__setattr__(self, "terms", clean)
        exps = np.array(list(clean), dtype=float).reshape(-1, self.num_vars)
        object.__setattr__(self, "_exps", exps)
        object.__setattr__(self, "_coefs", np.array(list(clean.values()), dtype=float))

    @classmethod
    def constant(cls, n: int, c: float) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def evaluate(self, x) -> np.ndarray:
        """Value at a point or at a stack of points (last axis = variables)."""
        x = _points(x, self.num_vars)
        if not self.terms:
            return np.zeros(x.shape[:-1])
        mons = np.prod(x[..., None, :] ** self._exps, axis=-1)
        return mons @ self._coefs

    def derivative(self, i: int) -> "Polynomial":
        out = {}
        for exp, c in self.terms.items():
            if exp[i] == 0:
                continue
            e = list(exp)
            e[i] -= 1
            out[tuple(e)] = c * exp[i]
        return Polynomial(self.num_vars, out)

    def __add__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.num_vars, other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.num_vars, terms)

    __radd__ = __add__

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            return Polynomial(self.num_vars, {e: c * float(other) for e, c in self.terms.items()})
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(self.num_vars, terms)

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return self * -1.0

    def __sub__(self, other) -> "Polynomial":
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.constant(self.num_vars, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def compose(self, polys) -> "Polynomial":
        """self(polys[0], ..., polys[n-1]) as a polynomial in the inner variables."""
        polys = list(polys)
        if len(polys) != self.num_vars:
            raise ValueError("need one inner polynomial per variable")
        inner_n = polys[0].num_vars
        out = Polynomial(inner_n, {})
        for exp, c in self.terms.items():
            term = Polynomial.constant(inner_n, c)
            for q, e in zip(polys, exp):
                if e:
                    term = term * (q ** e)
            out = out + term
        return out

    def to_json(self) -> dict:
        return {"vars": self.num_vars,
                "terms": [{"exp": list(e), "c": c} for e, c in self.terms.items()]}

    @classmethod
    def from_json(cls, obj: dict) -> "Polynomial":
        n = int(obj["vars"])
        terms: dict = {}
        for t in obj.get("terms", []):
            e = tuple(t["exp"])
            terms[e] = terms.get(e, 0.0) + float(t["c"])
        return cls(n, terms)


def _linear_polys(A, b=None) -> list:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    polys = []
    for row, off in zip(A, b):
        terms = {(0,) * n: off}
        for i, a in enumerate(row):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = a
        polys.append(Polynomial(n, terms))
    return polys


@dataclass(frozen=True)
class PolynomialMap:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a polynomial map needs at least one component")
        if len({c.num_vars for c in comps}) != 1:
            raise ValueError("all components must share the same number of variables")
        object.__setattr__(self, "components", comps)

    @property
    def domain_dim(self) -> int:
        return self.components[0].num_vars

    @property
    def target_dim(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    @classmethod
    def linear(cls, A, b=None) -> "PolynomialMap":
        return cls(tuple(_linear_polys(A, b)))

    def evaluate(self, x) -> np.ndarray:
        x = _points(x, self.domain_dim)
        return np.stack([c.evaluate(x) for c in self.components], axis=-1)

    def jacobian(self) -> tuple:
        """Formal partial derivatives as a tuple of rows of Polynomials."""
        return tuple(tuple(c.derivative(i) for i in range(self.domain_dim))
                     for c in self.components)

    def jacobian_at(self, x) -> np.ndarray:
        """dB at a point (shape (n_j, n)) or a stack of points (shape (..., n_j, n))."""
        x = _points(x, self.domain_dim)
        J = self._jac_cache()
        return np.stack([np.stack([d.evaluate(x) for d in row], axis=-1) for row in J], axis=-2)

    def _jac_cache(self):
        cached = self.__dict__.get("_jac")
        if cached is None:
            cached = self.jacobian()
            object.__setattr__(self, "_jac", cached)
        return cached

    def compose_linear(self, A, b=None) -> "PolynomialMap":
        """The map x -> B(A x + b)."""
        inner = _linear_polys(A, b)
        return PolynomialMap(tuple(c.compose(inner) for c in self.components))

    def compose(self, inner: "PolynomialMap") -> "PolynomialMap":
        return PolynomialMap(tuple(c.compose(inner.components) for c in self.components))

    def to_json(self) -> dict:
        return {"components": [c.to_json() for c in self.components]}


@dataclass(frozen=True)
class RationalMap:
    """Componentwise quotients num_i / den_i, differentiated by the quotient rule."""
    numerators: tuple
    denominators: tuple

    def __post_init__(self):
        if len(self.numerators) != len(self.denominators) or not self.numerators:
            raise ValueError("need matching numerator and denominator lists")
        object.__setattr__(self, "numerators", tuple(self.numerators))
        object.__setattr__(self, "denominators", tuple(self.denominators))

    @property
    def domain_dim(self) -> int:
        return self.numerators[0].num_vars

    @property
    def target_dim(self) -> int:
        return len(self.numerators)

    @property
    def degree(self) -> int:
        """Conservative fiber-degree bound max(deg num, deg den) + deg den."""
        return max(max(a.degree, b.degree) + b.degree
                   for a, b in zip(self.numerators, self.denominators))

    def evaluate(self, x) -> np.ndarray:
        x = _points(x, self.domain_dim)
        return np.stack([a.evaluate(x) / b.evaluate(x)
                         for a, b in zip(self.numerators, self.denominators)], axis=-1)

    def jacobian_at(self, x) -> np.ndarray:
        x = _points(x, self.domain_dim)
        rows = []
        for a, b in zip(self.numerators, self.denominators):
            av, bv = a.evaluate(x), b.evaluate(x)
            rows.append(np.stack([(a.derivative(i).evaluate(x) * bv - av * b.derivative(i).evaluate(x))
                                  / bv ** 2 for i in range(self.domain_dim)], axis=-1))
        return np.stack(rows, axis=-2)

    def to_json(self) -> dict:
        return {"components": [{"num": a.to_json(), "den": b.to_json()}
                               for a, b in zip(self.numerators, self.denominators)]}


@dataclass(frozen=True)
class ComposedMap:
    """x -> B(phi(x)) for a polynomial or rational B and a smooth phi."""
    outer: object
    inner: object

    @property
    def domain_dim(self) -> int:
        return self.inner.domain_dim

    @property
    def target_dim(self) -> int:
        return self.outer.target_dim

    @property
    def degree(self) -> int:
        return self.outer.degree

    def evaluate(self, x) -> np.ndarray:
        return self.outer.evaluate(self.inner.evaluate(x))

    def jacobian_at(self, x) -> np.ndarray:
        return self.outer.jacobian_at(self.inner.evaluate(x)) @ self.inner.jacobian_at(x)


def map_from_json(obj) -> PolynomialMap | RationalMap:
    comps = obj["components"] if isinstance(obj, dict) else obj
    if any("num" in c for c in comps):
        nums, dens = [], []
        for c in comps:
            if "num" in c:
                nums.append(Polynomial.from_json(c["num"]))
                dens.append(Polynomial.from_json(c["den"]))
            else:
                p = Polynomial.from_json(c)
                nums.append(p)
                dens.append(Polynomial.constant(p.num_vars, 1.0))
        return RationalMap(tuple(nums), tuple(dens))
    return PolynomialMap(tuple(Polynomial.from_json(c) for c in comps))


@dataclass(frozen=True)
class NonlinearDatum:
    maps: tuple
    exponents: tuple
    degrees: tuple | None = None

    def __post_init__(self):
        maps = tuple(self.maps)
        p = tuple(float(x) for x in self.exponents)
        if len(maps) != len(p):
            raise ValueError("one exponent per map is required")
        if len({B.domain_dim for B in maps}) != 1:
            raise ValueError("all maps must share a domain dimension")
        defect = abs(sum(pj * B.target_dim for pj, B in zip(p, maps)) - maps[0].domain_dim)
        if defect > SCALING_TOL:
            raise ScalingError(f"scaling condition violated (defect {defect:.3e})")
        degs = tuple(B.degree for B in maps) if self.degrees is None else tuple(self.degrees)
        if len(degs) != len(maps):
            raise ValueError("one degree per map is required")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "exponents", p)
        object.__setattr__(self, "degrees", degs)

    @property
    def n(self) -> int:
        return self.maps[0].domain_dim

    @property
    def dims(self) -> tuple:
        return tuple(B.target_dim for B in self.maps)

    def compose(self, phi) -> "NonlinearDatum":
        """The datum (B_j o phi)_j, keeping the degree bounds of B_j."""
        if isinstance(phi, PolynomialMap):
            maps = tuple(B.compose(phi) if isinstance(B, PolynomialMap) else ComposedMap(B, phi)
                         for B in self.maps)
        else:
            maps = tuple(ComposedMap(B, phi) for B in self.maps)
        return NonlinearDatum(maps, self.exponents, self.degrees)

    def compose_linear(self, A) -> "NonlinearDatum":
        return self.compose(PolynomialMap.linear(A))

    def to_json(self) -> dict:
        return {"maps": [B.to_json() for B in self.maps], "exponents": list(self.exponents),
                "degrees": list(self.degrees)}

    @classmethod
    def from_json(cls, obj: dict) -> "NonlinearDatum":
        maps = tuple(map_from_json(m) for m in obj["maps"])
        return cls(maps, tuple(obj["exponents"]), tuple(obj["degrees"]) if "degrees" in obj else None)


def stacked_jacobian(datum: NonlinearDatum, x) -> np.ndarray:
    """All dB_j(x) stacked row-wise: shape (N, sum n_j, n)."""
    x = np.atleast_2d(_points(x, datum.n))
    return np.concatenate([B.jacobian_at(x) for B in datum.maps], axis=1)


@dataclass(frozen=True)
class WeightField:
    datum: NonlinearDatum
    surjectivity_tol: float = 1e-8
    opts: SolverOptions = field(default_factory=SolverOptions)
    chunk: int = 200000

    def weights(self, x) -> np.ndarray:
        """BL(dB(x), p)^{-1} at a stack of points; 0 where some dB_j drops rank."""
        x = np.atleast_2d(_points(x, self.datum.n))
        out = np.zeros(x.shape[0])
        for lo in range(0, x.shape[0], self.chunk):
            out[lo:lo + self.chunk] = self._weights(x[lo:lo + self.chunk])
        return out

    def _weights(self, x: np.ndarray) -> np.ndarray:
        d = self.datum
        J = stacked_jacobian(d, x)
        ok = np.ones(x.shape[0], dtype=bool)
        offsets = np.concatenate([[0], np.cumsum(d.dims)])
        for j, p in enumerate(d.exponents):
            if p == 0:
                continue
            s = np.linalg.svd(J[:, offsets[j]:offsets[j + 1], :], compute_uv=False)
            ok &= s[:, -1] > self.surjectivity_tol * s[:, 0]
        w = np.zeros(x.shape[0])
        if not np.any(ok):
            return w
        if all(p == 0 for p in d.exponents):
            w[ok] = 1.0
            return w
        values, _ = bl_constant_batch(J[ok], d.dims, d.exponents, self.opts)
        with np.errstate(divide="ignore"):
            w[ok] = np.where(np.isfinite(values), 1.0 / values, 0.0)
        return w

    def weight_at(self, x) -> float:
        return float(self.weights(np.asarray(x, dtype=float)[None, :])[0])


def fiber_points(B, z, box, grid_n: int) -> np.ndarray:
    """Grid samples of the fiber B^{-1}(z) inside ``box``.

    Grid points with |B(x) - z| <= (h/2)|dB(x)| (a band one cell wide around the
    fiber) are moved onto the fiber by one minimum-norm Newton step. For a curve
    in the plane the expected count is length / h.
    """
    if B.target_dim > 2 or B.domain_dim > 3:
        raise ValueError("fiber sampling is limited to target_dim <= 2 and domain_dim <= 3")
    box = np.asarray(box, dtype=float).reshape(B.domain_dim, 2)
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in box]
    h = max((hi - lo) / (grid_n - 1) for lo, hi in box)
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, B.domain_dim)
    z = np.asarray(z, dtype=float).reshape(B.target_dim)
    r = B.evaluate(x) - z
    J = B.jacobian_at(x)
    lip = np.linalg.norm(J, ord=2, axis=(-2, -1))
    near = np.linalg.norm(r, axis=-1) <= 0.5 * h * lip
    if not np.any(near):
        return np.zeros((0, B.domain_dim))
    x, r, J = x[near], r[near], J[near]
    step = np.einsum("nij,nj->ni", np.linalg.pinv(J), r)
    y = x - step
    inside = np.all((y >= box[:, 0] - 1e-12) & (y <= box[:, 1] + 1e-12), axis=1)
    return y[inside]
