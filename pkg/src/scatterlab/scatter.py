"""Scatter functionals evaluated on samples.

Every family is standardized so that it returns ``I_p`` at the standard
normal: the raw estimate is divided by a Gaussian-consistency constant. The
constant is analytic where a closed form exists (Cov4, symmetrized Cov, MCD,
and the M-estimators through a one-dimensional chi-square equation) and can
always be re-estimated by Monte Carlo with `calibrate_gaussian`.

Functionals read nothing but their sample argument. Any randomness they need
(MCD starts) is seeded from the spec, so the value depends on the data alone.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats

from .core import Sample, SpdMatrix, as_sample, mahalanobis_distances
from .distributions import StandardNormal, child_seed, rng, sample
from .errors import (
    ConfigError,
    ConvergenceWarning,
    NoConvergence,
    SingularMatrix,
    SingularScatter,
    ZeroVector,
)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 500
# ordered differences kept by `symmetrize` before switching to a cyclic design
DEFAULT_MAX_PAIRS = 1_000_000
# largest n for which MCD enumerates every h-subset
MCD_EXHAUSTIVE_MAX_N = 25

FAMILIES = ("cov", "cov4", "m_scatter", "tyler", "symmetrized", "mcd")


@dataclass(frozen=True)
class Weight:
    """Weight function ``w(d)`` of an M-functional of scatter.

    ``student_t``: ``w(d) = (p + nu) / (nu + d)``, the multivariate t likelihood weight.
    ``huber``: ``w(d) = min(1, k / d)`` with `param` ``k`` on the squared-distance scale.

    Both keep ``d * w(d)`` bounded and non-decreasing. A fixed point exists
    only when that bound exceeds p, which for Huber weights means ``k > p``.
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("student_t", "huber"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not self.param > 0:
            raise ValueError("weight parameter must be positive")

    @classmethod
    def student_t(cls, nu):
        return cls("student_t", float(nu))

    @classmethod
    def huber(cls, threshold):
        return cls("huber", float(threshold))

    def __call__(self, d, p):
        d = np.asarray(d, dtype=float)
        if self.kind == "student_t":
            return (p + self.param) / (self.param + d)
        with np.errstate(divide="ignore", over="ignore"):
            return np.minimum(1.0, self.param / d)

    def check_dimension(self, p):
        if self.kind == "huber" and not self.param > p:
            raise ValueError(f"huber threshold {self.param:g} must exceed p={p} for a solution to exist")

    def to_dict(self):
        key = "nu" if self.kind == "student_t" else "threshold"
        return {"kind": self.kind, key: self.param}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        key = {"student_t": "nu", "huber": "threshold"}.get(kind)
        if key is None:
            raise ConfigError(f"unknown weight kind {kind!r}")
        if key not in d:
            raise ConfigError(f"{kind} weight needs {key!r}")
        param = d.pop(key)
        if d:
            raise ConfigError(f"unknown keys for {kind} weight: {sorted(d)}")
        try:
            return cls(kind, float(param))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ScatterSpec:
    """Identifies a scatter family and its parameters.

    ``calibration=None`` means "use the family's Gaussian-consistency
    constant for whatever dimension the functional is applied in"; a number
    fixes the divisor explicitly (``1.0`` gives the raw functional).
    """

    family: str
    weight: Weight | None = None
    inner: "ScatterSpec | None" = None
    alpha: float = 0.5
    starts: int = 20
    seed: int = 0
    calibration: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown scatter family {self.family!r}")
        if self.family == "m_scatter" and self.weight is None:
            raise ValueError("m_scatter needs a weight")
        if self.family == "symmetrized" and self.inner is None:
            raise ValueError("symmetrized needs an inner functional")
        if self.family == "mcd" and not 0 < self.alpha <= 1:
            raise ValueError("mcd alpha must lie in (0, 1]")
        if self.calibration is not None and not self.calibration > 0:
            raise ValueError("calibration must be positive")

    @classmethod
    def cov(cls):
        return cls("cov")

    @classmethod
    def cov4(cls):
        return cls("cov4")

    @classmethod
    def t(cls, nu):
        return cls("m_scatter", weight=Weight.student_t(nu))

    @classmethod
    def huber(cls, threshold):
        return cls("m_scatter", weight=Weight.huber(threshold))

    @classmethod
    def tyler(cls):
        return cls("tyler")

    @classmethod
    def symmetrized(cls, inner):
        return cls("symmetrized", inner=inner)

    @classmethod
    def mcd(cls, alpha=0.5, starts=20, seed=0):
        return cls("mcd", alpha=alpha, starts=starts, seed=seed)

    def raw(self) -> "ScatterSpec":
        return replace(self, calibration=1.0)

    def calibrated(self, constant) -> "ScatterSpec":
        return replace(self, calibration=float(constant))

    @property
    def label(self) -> str:
        if self.family == "m_scatter":
            w = self.weight
            return f"m_scatter[{w.kind}={w.param:g}]"
        if self.family == "symmetrized":
            return f"symmetrized[{self.inner.label}]"
        if self.family == "mcd":
            return f"mcd[alpha={self.alpha:g}]"
        return self.family

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.weight is not None:
            d["weight"] = self.weight.to_dict()
        if self.inner is not None:
            d["inner"] = self.inner.to_dict()
        if self.family == "mcd":
            d.update(alpha=self.alpha, starts=self.starts, seed=self.seed)
        if self.tol != DEFAULT_TOL:
            d["tol"] = self.tol
        if self.max_iter != DEFAULT_MAX_ITER:
            d["max_iter"] = self.max_iter
        d["calibration"] = self.calibration
        return d

    @classmethod
    def from_dict(cls, d) -> "ScatterSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"functional must be an object, got {d!r}")
        allowed = {"family", "weight", "inner", "alpha", "starts", "seed", "calibration", "tol", "max_iter"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown keys for functional: {sorted(extra)}")
        if "family" not in d:
            raise ConfigError("functional needs a 'family'")
        kw = {k: v for k, v in d.items() if k not in ("weight", "inner")}
        if d.get("weight") is not None:
            kw["weight"] = Weight.from_dict(d["weight"])
        if d.get("inner") is not None:
            kw["inner"] = cls.from_dict(d["inner"])
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid functional: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ScatterEstimate:
    matrix: SpdMatrix
    iterations: int
    converged: bool
    functional: ScatterSpec
    support: np.ndarray | None = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


# --------------------------------------------------------------------------
# helpers

def _centered(s, center=True):
    x = np.asarray(as_sample(s))
    return x - x.mean(axis=0) if center else x


def _spd(m, allow_singular=False, what="scatter") -> SpdMatrix:
    m = 0.5 * (m + m.T)
    try:
        out = SpdMatrix(m)
    except ValueError as exc:
        raise SingularScatter(f"{what} is not positive semidefinite: {exc}") from exc
    if not allow_singular and not out.is_strict:
        raise SingularScatter(f"{what} is singular (min eigenvalue {out.eigenvalues[0]:.3g})")
    return out


def _second_moment(x):
    return x.T @ x / x.shape[0]


def _divide(m, c):
    return m if c == 1.0 else m / c


# --------------------------------------------------------------------------
# Gaussian-consistency constants

@lru_cache(maxsize=None)
def _m_constant(kind: str, param: float, p: int) -> float:
    """Solve ``c = E[w(r^2/c) r^2] / p`` with ``r^2 ~ chi2_p``.

    At ``N(0, I)`` the raw M-functional is ``c I``; dividing by ``c`` standardizes it.
    """
    w = Weight(kind, param)
    w.check_dimension(p)
    pdf = stats.chi2(p).pdf

    def excess(log_c):
        c = math.exp(log_c)
        val, _ = integrate.quad(lambda r2: float(w(r2 / c, p)) * r2 * pdf(r2), 0, np.inf, limit=200)
        return val / p - c

    return math.exp(optimize.brentq(excess, math.log(1e-8), math.log(1e6), xtol=1e-14, rtol=1e-14))


def mcd_constant(alpha: float, p: int) -> float:
    """Raw MCD value at ``N(0, I)`` is ``c I`` with ``c = F_{p+2}(q_alpha) / alpha``."""
    if alpha >= 1:
        return 1.0
    q = stats.chi2.ppf(alpha, p)
    return float(stats.chi2.cdf(q, p + 2) / alpha)


def gaussian_constant(spec: ScatterSpec, p: int) -> float:
    """Divisor making the raw functional equal ``I_p`` at the standard normal."""
    f = spec.family
    if f in ("cov", "tyler"):
        return 1.0
    if f == "cov4":
        return float(p + 2)
    if f == "m_scatter":
        return _m_constant(spec.weight.kind, spec.weight.param, p)
    if f == "mcd":
        return mcd_constant(spec.alpha, p)
    # symmetrized: the difference of two copies of N(0, I) is N(0, 2I)
    return 1.0 if spec.inner.family == "tyler" else 2.0


def _constant(spec: ScatterSpec, p: int) -> float:
    return gaussian_constant(spec, p) if spec.calibration is None else spec.calibration


# --------------------------------------------------------------------------
# estimators

def cov(s, *, allow_singular=False, center=True) -> ScatterEstimate:
    """Covariance with divisor ``n`` (the empirical-measure convention).

    With ``allow_singular`` a positive semidefinite value is accepted, which
    is the range needed for rank-deficient affine images.
    """
    s = as_sample(s)
    if s.n < 2 and center:
        raise SingularScatter("covariance needs at least two observations")
    m = _second_moment(_centered(s, center))
    return ScatterEstimate(_spd(m, allow_singular, "covariance"), 0, True, ScatterSpec.cov())


def cov4(s, *, calibration=None, center=True) -> ScatterEstimate:
    """Fourth-moment scatter ``E{x x^T (x^T Cov^-1 x)}``, divided by ``p + 2`` by default."""
    s = as_sample(s)
    x = _centered(s, center)
    c = cov(x, center=False).matrix
    d = mahalanobis_distances(x, c)
    m = (x * d[:, None]).T @ x / s.n
    spec = ScatterSpec("cov4", calibration=calibration)
    return ScatterEstimate(_spd(_divide(m, _constant(spec, s.p)), what="cov4"), 0, True, spec)


def _fixed_point(x, step, tol, max_iter, what):
    v = _second_moment(x)
    _spd(v, what=what)
    for it in range(1, max_iter + 1):
        try:
            d = mahalanobis_distances(x, SpdMatrix(v))
        except (SingularMatrix, ValueError) as exc:
            raise SingularScatter(f"{what} iterate lost definiteness") from exc
        new = step(v, d)
        new = 0.5 * (new + new.T)
        change = np.linalg.norm(new - v) / np.linalg.norm(v)
        v = new
        if change <= tol:
            return v, it, True
    warnings.warn(f"{what} did not converge in {max_iter} iterations (last change {change:.3g})",
                  ConvergenceWarning, stacklevel=3)
    return v, max_iter, False


def m_scatter(s, weight: Weight, *, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
              calibration=None, center=True) -> ScatterEstimate:
    """M-functional of scatter by the fixed-point iteration
    ``V <- mean_i w(d_i) x_i x_i^T`` with ``d_i = x_i^T V^-1 x_i``, started at Cov."""
    s = as_sample(s)
    if s.n <= s.p:
        raise SingularScatter(f"m_scatter needs n > p (n={s.n}, p={s.p})")
    weight.check_dimension(s.p)
    x = _centered(s, center)
    p, n = s.p, s.n

    def step(v, d):
        return (x * weight(d, p)[:, None]).T @ x / n

    v, it, ok = _fixed_point(x, step, tol, max_iter, "m_scatter")
    spec = ScatterSpec("m_scatter", weight=weight, calibration=calibration, tol=tol, max_iter=max_iter)
    return ScatterEstimate(_spd(_divide(v, _constant(spec, p)), what="m_scatter"), it, ok, spec)


def tyler_shape(s, *, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, center=True) -> ScatterEstimate:
    """Tyler's shape matrix, normalized to trace ``p``."""
    s = as_sample(s)
    if s.n <= s.p:
        raise SingularScatter(f"tyler_shape needs n > p (n={s.n}, p={s.p})")
    x = _centered(s, center)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= 1e-12 * max(norms.max(), 1e-300)):
        raise ZeroVector("a centered observation is numerically zero")
    p, n = s.p, s.n
    x = x / norms.max()

    def step(v, d):
        new = (x / d[:, None]).T @ x * (p / n)
        return new * (p / np.trace(new))

    v, it, ok = _fixed_point(x, step, tol, max_iter, "tyler_shape")
    v = v * (p / np.trace(v))
    spec = ScatterSpec("tyler", tol=tol, max_iter=max_iter)
    return ScatterEstimate(_spd(v, what="tyler_shape"), it, ok, spec)


def difference_sample(s, *, max_pairs=DEFAULT_MAX_PAIRS, include_zero=True) -> Sample:
    """Pairwise differences ``x_i - x_j`` of the rows of `s`.

    While ``n**2 <= max_pairs`` every ordered pair is used, the diagonal
    included (`include_zero`), which is the empirical law of ``x_1 - x_2``
    for independent copies drawn from the sample. Beyond that a balanced
    cyclic design keeps the lags ``1..K`` in both signs, ``2 n K`` rows.
    """
    x = np.asarray(as_sample(s))
    n, p = x.shape
    if n * n <= max_pairs:
        d = (x[:, None, :] - x[None, :, :]).reshape(-1, p)
        if not include_zero:
            d = d[np.repeat(np.arange(n), n) != np.tile(np.arange(n), n)]
        return Sample(d)
    lags = min(max(1, math.ceil(max_pairs / (2 * n))), (n - 1) // 2)
    d = np.concatenate([x - np.roll(x, -k, axis=0) for k in range(1, lags + 1)])
    return Sample(np.concatenate([d, -d]))


def symmetrize(inner: ScatterSpec, s, *, max_pairs=DEFAULT_MAX_PAIRS, calibration=None) -> ScatterEstimate:
    """Symmetrized functional ``S(x_1 - x_2)`` on pairwise differences.

    The inner functional is applied uncentered (the difference sample is
    centro-symmetric) and the result divided by 2 by default, since the
    difference of two standard normal copies has covariance ``2 I``.
    """
    s = as_sample(s)
    if s.n < 2:
        raise SingularScatter("symmetrization needs at least two observations")
    diffs = difference_sample(s, max_pairs=max_pairs, include_zero=inner.family != "tyler")
    est = evaluate(inner, diffs, center=False)
    spec = ScatterSpec("symmetrized", inner=inner, calibration=calibration)
    m = _divide(np.asarray(est.matrix), _constant(spec, s.p))
    return ScatterEstimate(_spd(m, what="symmetrized scatter"), est.iterations, est.converged, spec)


def _subset_scatter(x, idx):
    xs = x[idx]
    xc = xs - xs.mean(axis=0)
    return xc.T @ xc / len(idx), xs.mean(axis=0)


def _batch_dets(x, combos):
    xs = x[combos]
    xc = xs - xs.mean(axis=1, keepdims=True)
    m = np.einsum("khi,khj->kij", xc, xc) / combos.shape[1]
    return np.linalg.det(m)


def mcd_exhaustive(x, h, chunk=20000):
    """Enumerate every h-subset; ties resolve to the first in lexicographic order."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    best_det, best = np.inf, None
    it = itertools.combinations(range(n), h)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        dets = _batch_dets(x, block)
        k = int(np.argmin(dets))
        if dets[k] < best_det:
            best_det, best = float(dets[k]), block[k]
    return best_det, np.array(best)


def c_steps(x, h, idx, max_steps=200):
    """Concentrate a start subset: refit on the h smallest distances until it stops changing."""
    x = np.asarray(x, dtype=float)
    idx = np.sort(np.asarray(idx, dtype=np.intp))
    for _ in range(max_steps):
        m, mu = _subset_scatter(x, idx)
        det = float(np.linalg.det(m))
        if det <= 0:
            return det, idx
        try:
            d = mahalanobis_distances(x - mu, SpdMatrix(m))
        except (SingularMatrix, ValueError):
            return det, idx
        new = np.sort(np.argsort(d, kind="stable")[:h])
        if np.array_equal(new, idx):
            return det, idx
        new_det = float(np.linalg.det(_subset_scatter(x, new)[0]))
        if new_det >= det:
            return det, idx
        idx = new
    m, _ = _subset_scatter(x, idx)
    return float(np.linalg.det(m)), idx


def mcd_size(alpha, n):
    return min(n, math.ceil(alpha * n - 1e-9))


def mcd(s, alpha=0.5, starts=20, seed=0, *, calibration=None, method="auto",
        initial_subsets=None) -> ScatterEstimate:
    """Minimum covariance determinant with ``h = ceil(alpha n)``.

    ``method="auto"`` enumerates all subsets for ``n <= 25`` and otherwise
    runs C-steps from `starts` random h-subsets (or from `initial_subsets`).
    The winner is the smallest determinant, ties going to the earliest start.
    The returned support lists the chosen row indices.
    """
    s = as_sample(s)
    x = np.asarray(s)
    n, p = x.shape
    h = mcd_size(alpha, n)
    if h <= p:
        raise SingularScatter(f"mcd subset size h={h} must exceed p={p}")
    if method == "auto":
        method = "exhaustive" if n <= MCD_EXHAUSTIVE_MAX_N and initial_subsets is None else "cstep"
    if method == "exhaustive":
        _, best = mcd_exhaustive(x, h)
        iterations = math.comb(n, h)
    elif method == "cstep":
        if initial_subsets is None:
            initial_subsets = [rng(child_seed(seed, k)).choice(n, h, replace=False) for k in range(starts)]
        best_det, best = np.inf, None
        for start in initial_subsets:
            det, idx = c_steps(x, h, start)
            if det < best_det:
                best_det, best = det, idx
        iterations = len(initial_subsets)
    else:
        raise ValueError(f"unknown mcd method {method!r}")
    m, _ = _subset_scatter(x, best)
    spec = ScatterSpec("mcd", alpha=alpha, starts=starts, seed=seed, calibration=calibration)
    return ScatterEstimate(_spd(_divide(m, _constant(spec, p)), what="mcd subset covariance"),
                           iterations, True, spec, support=best)


# --------------------------------------------------------------------------
# dispatch and calibration

def evaluate(spec: ScatterSpec, s, *, center=True, allow_singular=False,
             require_convergence=False) -> ScatterEstimate:
    """Evaluate the functional described by `spec` on sample `s`."""
    s = as_sample(s)
    f = spec.family
    if f == "cov":
        est = cov(s, allow_singular=allow_singular, center=center)
        if spec.calibration not in (None, 1.0):
            est = ScatterEstimate(SpdMatrix(np.asarray(est.matrix) / spec.calibration), 0, True, spec)
        else:
            est = replace(est, functional=spec)
    elif f == "cov4":
        est = cov4(s, calibration=spec.calibration, center=center)
    elif f == "m_scatter":
        est = m_scatter(s, spec.weight, tol=spec.tol, max_iter=spec.max_iter,
                        calibration=spec.calibration, center=center)
    elif f == "tyler":
        est = tyler_shape(s, tol=spec.tol, max_iter=spec.max_iter, center=center)
        if spec.calibration not in (None, 1.0):
            est = ScatterEstimate(SpdMatrix(np.asarray(est.matrix) / spec.calibration),
                                  est.iterations, est.converged, spec)
    elif f == "symmetrized":
        est = symmetrize(spec.inner, s, calibration=spec.calibration)
    else:
        est = mcd(s, spec.alpha, spec.starts, spec.seed, calibration=spec.calibration)
    if require_convergence and not est.converged:
        raise NoConvergence(f"{spec.label} did not converge")
    return est


def calibrate_gaussian(spec: ScatterSpec, p: int, n_cal: int, replicates: int, seed: int,
                       *, with_error=False):
    """Monte Carlo Gaussian-consistency constant of the raw functional.

    Returns the median over replicates of ``trace(S_raw(z)) / p`` on standard
    normal samples of size `n_cal`; with ``with_error`` also its standard
    error (``1.2533 * sd / sqrt(replicates)``).
    """
    if n_cal < 1000:
        raise ValueError("n_cal must be at least 1000")
    if replicates < 3:
        raise ValueError("replicates must be at least 3")
    raw = spec.raw()
    vals = []
    for r in range(replicates):
        z = sample(StandardNormal(p), n_cal, child_seed(seed, r))
        vals.append(np.trace(np.asarray(evaluate(raw, z).matrix)) / p)
    vals = np.array(vals)
    med = float(np.median(vals))
    if not with_error:
        return med
    return med, float(1.2533 * vals.std(ddof=1) / math.sqrt(replicates))

