"""Composable p-variate distributions with seeded sampling and exact covariance.

Every distribution here is zero-mean and square integrable. The algebra is
closed under affine maps (any ``k x l`` matrix, rank-deficient included) and
under independent sums, which is what the property checks need::

    x = Product([Marginal.laplace(1.0)] * 3)
    y = Affine(np.diag([2.0, 1.0, 1.0]), None, StandardNormal(3))
    s = sample(IndependentSum(x, y), n=1000, seed=7)

Sampling is a pure function of ``(spec, n, seed)``. Replicates never share a
generator; they derive child seeds with `child_seed`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Sample, SpdMatrix, as_spd
from .errors import ConfigError, DimensionMismatch, MissingCertificate, Unsupported

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, index: int) -> int:
    """Derive the seed of replicate `index` from a parent seed.

    The finalizer is a bijection on 64-bit words, so for a fixed parent the
    children of distinct indices below 2**32 never collide.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    base = _splitmix64(seed & _MASK64)
    return _splitmix64((base + (index + 1) * _GOLDEN) & _MASK64)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK64)


# --------------------------------------------------------------------------
# marginals

_MARGINAL_PARAMS = {
    "standard_normal": None,
    "laplace": "scale",
    "uniform": "halfwidth",
    "centered_exponential": "rate",
    "student_t": "df",
}


@dataclass(frozen=True)
class Marginal:
    """A zero-mean univariate law with known variance."""

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in _MARGINAL_PARAMS:
            raise ValueError(f"unknown marginal kind {self.kind!r}")
        needs = _MARGINAL_PARAMS[self.kind]
        if needs is None:
            object.__setattr__(self, "param", None)
            return
        if self.param is None or not self.param > 0:
            raise ValueError(f"{self.kind} needs a positive {needs}")
        if self.kind == "student_t" and not self.param > 2:
            raise ValueError("student_t needs df > 2 for a finite variance")

    @classmethod
    def normal(cls):
        return cls("standard_normal")

    @classmethod
    def laplace(cls, scale=1.0):
        return cls("laplace", float(scale))

    @classmethod
    def uniform(cls, halfwidth=1.0):
        return cls("uniform", float(halfwidth))

    @classmethod
    def exponential(cls, rate=1.0):
        return cls("centered_exponential", float(rate))

    @classmethod
    def student_t(cls, df):
        return cls("student_t", float(df))

    @property
    def variance(self) -> float:
        k, a = self.kind, self.param
        if k == "standard_normal":
            return 1.0
        if k == "laplace":
            return 2.0 * a * a
        if k == "uniform":
            return a * a / 3.0
        if k == "centered_exponential":
            return 1.0 / (a * a)
        return a / (a - 2.0)

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        k, a = self.kind, self.param
        if k == "standard_normal":
            return gen.standard_normal(n)
        if k == "laplace":
            return gen.laplace(0.0, a, n)
        if k == "uniform":
            return gen.uniform(-a, a, n)
        if k == "centered_exponential":
            return gen.exponential(1.0 / a, n) - 1.0 / a
        return gen.standard_t(a, n)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.param is not None:
            d[_MARGINAL_PARAMS[self.kind]] = self.param
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Marginal":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in _MARGINAL_PARAMS:
            raise ConfigError(f"unknown marginal kind {kind!r}")
        name = _MARGINAL_PARAMS[kind]
        param = d.pop(name, None) if name else None
        if d:
            raise ConfigError(f"unknown keys for marginal {kind}: {sorted(d)}")
        try:
            return cls(kind, param)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# radial laws for elliptical families

@dataclass(frozen=True)
class Radial:
    """Law of the radius ``R`` in ``x = R * L u`` with ``u`` uniform on the sphere.

    kinds: ``gaussian`` (``R^2 ~ chi2_p``), ``student_t`` (multivariate t with
    ``df > 2``), ``sphere`` (constant radius).
    """

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind == "gaussian":
            object.__setattr__(self, "param", None)
        elif self.kind == "student_t":
            if self.param is None or not self.param > 2:
                raise ValueError("student_t radial needs df > 2")
        elif self.kind == "sphere":
            if self.param is None or not self.param > 0:
                raise ValueError("sphere radial needs a positive radius")
        else:
            raise ValueError(f"unknown radial kind {self.kind!r}")

    def second_moment(self, p: int) -> float:
        if self.kind == "gaussian":
            return float(p)
        if self.kind == "student_t":
            return p * self.param / (self.param - 2.0)
        return self.param ** 2

    def draw(self, gen, n, p) -> np.ndarray:
        if self.kind == "gaussian":
            return np.sqrt(gen.chisquare(p, n))
        if self.kind == "student_t":
            return np.sqrt(gen.chisquare(p, n) / (gen.chisquare(self.param, n) / self.param))
        return np.full(n, self.param)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "student_t":
            d["df"] = self.param
        elif self.kind == "sphere":
            d["radius"] = self.param
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        param = d.pop({"student_t": "df", "sphere": "radius"}.get(kind, "_"), None)
        if d:
            raise ConfigError(f"unknown keys for radial {kind}: {sorted(d)}")
        try:
            return cls(kind, param)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# distribution specs

def _singletons(p):
    return [frozenset([i]) for i in range(p)]


def _merge(p, groups):
    """Union-find over coordinates; returns the partition into merged blocks."""
    parent = list(range(p))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for g in groups:
        g = sorted(g)
        for j in g[1:]:
            parent[find(j)] = find(g[0])
    out = {}
    for i in range(p):
        out.setdefault(find(i), set()).add(i)
    return [frozenset(v) for _, v in sorted(out.items())]


class DistributionSpec:
    """Base of the distribution algebra. Subclasses are frozen dataclasses."""

    dim: int

    def covariance(self) -> np.ndarray:
        raise Unsupported(f"{type(self).__name__} has no closed-form covariance")

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_gaussian(self) -> bool:
        return False

    def sources(self) -> list[frozenset]:
        """Per coordinate, the mutually independent building blocks it is a function of.

        Coordinates with disjoint source sets are independent. The default
        is one shared source, which certifies nothing.
        """
        return [frozenset([0])] * self.dim

    def _gaussian_dependent(self):
        c = self.covariance()
        tol = 1e-12 * max(1.0, float(np.max(np.abs(c))))
        return np.abs(c) > tol

    def independence_blocks(self) -> list[frozenset]:
        """Partition of the coordinates into mutually independent groups."""
        if self.is_gaussian:
            dep = self._gaussian_dependent()
            return _merge(self.dim, [(i, j) for i in range(self.dim) for j in range(i + 1, self.dim) if dep[i, j]])
        owners = {}
        for i, src in enumerate(self.sources()):
            for a in src:
                owners.setdefault(a, []).append(i)
        return _merge(self.dim, owners.values())

    def certifies_independent(self, j: int, k: int) -> bool:
        """Pairwise certificate; unlike the blocks it need not be transitive."""
        if not (0 <= j < self.dim and 0 <= k < self.dim):
            raise IndexError(f"components ({j}, {k}) out of range for dim {self.dim}")
        if j == k:
            return False
        if self.is_gaussian:
            return not self._gaussian_dependent()[j, k]
        src = self.sources()
        return not (src[j] & src[k])

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class StandardNormal(DistributionSpec):
    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")

    @property
    def dim(self):
        return self.p

    def covariance(self):
        return np.eye(self.p)

    def draw(self, gen, n):
        return gen.standard_normal((n, self.p))

    @property
    def is_gaussian(self):
        return True

    def sources(self):
        return _singletons(self.p)

    def to_dict(self):
        return {"kind": "standard_normal", "p": self.p}


@dataclass(frozen=True, eq=False)
class Product(DistributionSpec):
    """Independent components with the given marginals."""

    marginals: tuple

    def __post_init__(self):
        m = tuple(self.marginals)
        if not m:
            raise ValueError("product needs at least one marginal")
        object.__setattr__(self, "marginals", m)

    @property
    def dim(self):
        return len(self.marginals)

    def covariance(self):
        return np.diag([m.variance for m in self.marginals])

    def draw(self, gen, n):
        return np.column_stack([m.draw(gen, n) for m in self.marginals])

    @property
    def is_gaussian(self):
        return all(m.kind == "standard_normal" for m in self.marginals)

    def sources(self):
        return _singletons(self.dim)

    def to_dict(self):
        return {"kind": "product", "marginals": [m.to_dict() for m in self.marginals]}


@dataclass(frozen=True, eq=False)
class Affine(DistributionSpec):
    """Image ``A x + b`` of `inner`; ``A`` is ``k x l`` with any rank."""

    A: np.ndarray
    b: np.ndarray | None
    inner: DistributionSpec

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        if A.ndim != 2:
            raise ValueError("A must be a matrix")
        if A.shape[1] != self.inner.dim:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, inner dim is {self.inner.dim}")
        b = np.zeros(A.shape[0]) if self.b is None else np.array(self.b, dtype=float).reshape(-1)
        if b.shape != (A.shape[0],):
            raise DimensionMismatch(f"b has length {b.size}, A has {A.shape[0]} rows")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self):
        return self.A.shape[0]

    def covariance(self):
        return self.A @ self.inner.covariance() @ self.A.T

    def draw(self, gen, n):
        return self.inner.draw(gen, n) @ self.A.T + self.b

    @property
    def is_gaussian(self):
        return self.inner.is_gaussian

    def sources(self):
        inner = self.inner.sources()
        return [frozenset().union(*(inner[c] for c in np.flatnonzero(row))) for row in self.A]

    def to_dict(self):
        return {"kind": "affine", "A": self.A.tolist(), "b": self.b.tolist(), "inner": self.inner.to_dict()}


@dataclass(frozen=True, eq=False)
class IndependentSum(DistributionSpec):
    left: DistributionSpec
    right: DistributionSpec

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise DimensionMismatch(f"summands have dims {self.left.dim} and {self.right.dim}")

    @property
    def dim(self):
        return self.left.dim

    def covariance(self):
        return self.left.covariance() + self.right.covariance()

    def draw(self, gen, n):
        return self.left.draw(gen, n) + self.right.draw(gen, n)

    @property
    def is_gaussian(self):
        return self.left.is_gaussian and self.right.is_gaussian

    def sources(self):
        return [frozenset(("left", a) for a in l) | frozenset(("right", a) for a in r)
                for l, r in zip(self.left.sources(), self.right.sources())]

    def to_dict(self):
        return {"kind": "sum", "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True, eq=False)
class Elliptical(DistributionSpec):
    """``x = R * L u`` with ``L L^T = sigma``; covariance ``E(R^2)/p * sigma``."""

    sigma: SpdMatrix
    radial: Radial

    def __post_init__(self):
        s = as_spd(self.sigma)
        if not s.is_strict:
            raise ValueError("elliptical scatter must be positive definite")
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self):
        return self.sigma.p

    def covariance(self):
        return self.radial.second_moment(self.dim) / self.dim * self.sigma.entries

    def draw(self, gen, n):
        p = self.dim
        u = gen.standard_normal((n, p))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self.radial.draw(gen, n, p)
        L = np.linalg.cholesky(self.sigma.entries)
        return (r[:, None] * u) @ L.T

    @property
    def is_gaussian(self):
        return self.radial.kind == "gaussian"

    def to_dict(self):
        return {"kind": "elliptical", "sigma": self.sigma.entries.tolist(), "radial": self.radial.to_dict()}


@dataclass(frozen=True, eq=False)
class StandardizedSum(DistributionSpec):
    """Law of ``(x_1 + ... + x_terms) / sqrt(terms)`` for i.i.d. ``x_i`` from `inner`."""

    inner: DistributionSpec
    terms: int

    def __post_init__(self):
        if self.terms < 1:
            raise ValueError("terms must be positive")

    @property
    def dim(self):
        return self.inner.dim

    def covariance(self):
        return self.inner.covariance()

    def draw(self, gen, n):
        x = self.inner.draw(gen, n * self.terms).reshape(n, self.terms, self.dim)
        return x.sum(axis=1) / math.sqrt(self.terms)

    @property
    def is_gaussian(self):
        return self.inner.is_gaussian

    def sources(self):
        return self.inner.sources()

    def to_dict(self):
        return {"kind": "standardized_sum", "terms": self.terms, "inner": self.inner.to_dict()}


def gaussian(sigma) -> Affine:
    """``N(0, sigma)`` as the Cholesky image of a standard normal."""
    s = as_spd(sigma)
    return Affine(np.linalg.cholesky(s.entries), None, StandardNormal(s.p))


def product(*marginals: Marginal) -> Product:
    return Product(tuple(marginals))


# --------------------------------------------------------------------------
# operations

def sample(spec: DistributionSpec, n: int, seed: int) -> Sample:
    """Draw `n` i.i.d. rows from `spec`; deterministic in ``(spec, n, seed)``."""
    if n < 1:
        raise ValueError("n must be positive")
    return Sample(spec.draw(rng(seed), n))


def true_covariance(spec: DistributionSpec) -> SpdMatrix:
    return SpdMatrix(spec.covariance())


def standardized_sum_spec(spec: DistributionSpec, n: int) -> StandardizedSum:
    return StandardizedSum(spec, n)


def require_independent(spec: DistributionSpec, pairs: Sequence[tuple[int, int]]):
    for j, k in pairs:
        if not spec.certifies_independent(j, k):
            raise MissingCertificate(f"distribution does not certify components {j} and {k} independent")


# --------------------------------------------------------------------------
# JSON

def _take(d, kind, *keys, optional=()):
    d = dict(d)
    d.pop("kind")
    out = []
    for k in keys:
        if k not in d:
            raise ConfigError(f"{kind} distribution needs key {k!r}")
        out.append(d.pop(k))
    for k in optional:
        out.append(d.pop(k, None))
    if d:
        raise ConfigError(f"unknown keys for {kind} distribution: {sorted(d)}")
    return out


def spec_from_dict(d: dict) -> DistributionSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"distribution must be an object with a 'kind', got {d!r}")
    kind = d["kind"]
    try:
        if kind == "standard_normal":
            (p,) = _take(d, kind, "p")
            return StandardNormal(int(p))
        if kind == "product":
            (ms,) = _take(d, kind, "marginals")
            return Product(tuple(Marginal.from_dict(m) for m in ms))
        if kind == "affine":
            A, inner, b = _take(d, kind, "A", "inner", optional=("b",))
            return Affine(A, b, spec_from_dict(inner))
        if kind == "sum":
            left, right = _take(d, kind, "left", "right")
            return IndependentSum(spec_from_dict(left), spec_from_dict(right))
        if kind == "elliptical":
            sigma, radial = _take(d, kind, "sigma", "radial")
            return Elliptical(SpdMatrix(sigma), Radial.from_dict(radial))
        if kind == "standardized_sum":
            inner, terms = _take(d, kind, "inner", "terms")
            return StandardizedSum(spec_from_dict(inner), int(terms))
        if kind == "gaussian":
            (sigma,) = _take(d, kind, "sigma")
            return gaussian(sigma)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {kind} distribution: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")


def spec_to_dict(spec: DistributionSpec) -> dict:
    return spec.to_dict()
