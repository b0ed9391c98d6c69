"""Monte Carlo and algebraic checks of scatter-functional properties.

Each ``*_check`` returns a `PropertyReport`. By default a report passes when
its statistic is at most the threshold (the property holds). Checks that
exist to demonstrate a failure can be run with ``direction="ge"``, in which
case passing means the statistic reached the threshold; the direction is
kept in ``details``.

Replicates use child seeds of the report seed and are reduced in replicate
order, so a report is a deterministic function of its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ortho_group

from .core import frobenius_distance, trace_normalize
from .distributions import (
    DistributionSpec,
    Marginal,
    Product,
    StandardNormal,
    child_seed,
    require_independent,
    rng,
    sample,
    standardized_sum_spec,
    true_covariance,
)
from .errors import MissingCertificate, ScatterLabError, SingularScatter
from .scatter import ScatterSpec, evaluate

PROPERTIES = (
    "AffineEquivariance",
    "Additivity",
    "IndependenceProperty",
    "JointIndependence",
    "FullAffineEquivariance",
    "NormalContinuity",
    "FaeExpansion",
    "SumExpansion",
    "SubvectorConsistency",
    "Proportionality",
)

ALGEBRAIC_TOL = 1e-10
STATISTICAL_TOL = 0.05


@dataclass(frozen=True)
class PropertyReport:
    property: str
    statistic: float
    threshold: float
    passed: bool
    n: int
    replicates: int
    seed: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "pass": self.passed,
            "n": self.n,
            "replicates": self.replicates,
            "seed": self.seed,
            "details": self.details,
        }


def _report(prop, statistic, threshold, n, replicates, seed, direction="le", **details):
    if direction not in ("le", "ge"):
        raise ValueError("direction must be 'le' or 'ge'")
    statistic = float(statistic)
    if math.isnan(statistic):
        passed = False
    else:
        passed = statistic <= threshold if direction == "le" else statistic >= threshold
    details = {"direction": direction, **details}
    return PropertyReport(prop, statistic, float(threshold), bool(passed), int(n), int(replicates), int(seed), details)


def _failed(prop, threshold, n, replicates, seed, direction, exc, **details):
    return _report(prop, float("nan"), threshold, n, replicates, seed, direction,
                   error=type(exc).__name__, message=str(exc), **details)


def _mat(spec, x, **kw):
    return np.asarray(evaluate(spec, x, require_convergence=True, **kw).matrix)


def _default_tol(spec: ScatterSpec) -> float:
    iterative = {"m_scatter", "tyler"}
    fams = {spec.family, spec.inner.family if spec.inner is not None else None}
    if fams & iterative:
        inner = spec.inner if spec.family == "symmetrized" else spec
        return max(ALGEBRAIC_TOL, 10 * inner.tol)
    return ALGEBRAIC_TOL


def random_affine(gen: np.random.Generator, k: int, p: int, cond_max: float = 100.0) -> np.ndarray:
    """Random ``k x p`` matrix of rank ``min(k, p)`` with condition number at most `cond_max`.

    Singular values are log-uniform on ``[cond_max**-0.5, cond_max**0.5]``
    between Haar-distributed orthogonal factors.
    """
    r = min(k, p)
    half = 0.5 * math.log(cond_max)
    sv = np.exp(gen.uniform(-half, half, r))
    U = ortho_group.rvs(k, random_state=gen) if k > 1 else np.array([[gen.choice([-1.0, 1.0])]])
    V = ortho_group.rvs(p, random_state=gen) if p > 1 else np.array([[gen.choice([-1.0, 1.0])]])
    return U[:, :r] @ np.diag(sv) @ V[:r, :]


# --------------------------------------------------------------------------
# equivariance, additivity, independence and joint independence

def equivariance_check(spec: ScatterSpec, dist: DistributionSpec, n: int, seed: int, *,
                       threshold=None, maps=10, direction="le") -> PropertyReport:
    """Largest relative deviation ``|S(As+b) - A S(s) A^T|_F / |A S(s) A^T|_F`` over random maps."""
    threshold = _default_tol(spec) if threshold is None else threshold
    x = sample(dist, n, child_seed(seed, 0))
    stats_ = []
    try:
        base = _mat(spec, x)
        for k in range(maps):
            gen = rng(child_seed(seed, k + 1))
            A = random_affine(gen, dist.dim, dist.dim)
            b = gen.standard_normal(dist.dim)
            target = A @ base @ A.T
            image = _mat(spec, x.affine(A, b))
            stats_.append(frobenius_distance(image, target) / np.linalg.norm(target))
    except ScatterLabError as exc:
        return _failed("AffineEquivariance", threshold, n, 1, seed, direction, exc, functional=spec.label)
    return _report("AffineEquivariance", max(stats_), threshold, n, 1, seed, direction,
                   functional=spec.label, maps=maps)


def additivity_check(spec: ScatterSpec, dx: DistributionSpec, dy: DistributionSpec, n: int,
                     replicates: int, seed: int, *, threshold=0.08, direction="le") -> PropertyReport:
    """Mean over replicates of ``|S(x + y) - S(x) - S(y)|_F`` for independent x and y."""
    if dx.dim != dy.dim:
        raise ValueError("summands must have equal dimension")
    if n < 1000:
        raise ValueError("additivity_check needs n >= 1000 for stable estimates")
    vals = []
    for r in range(replicates):
        rs = child_seed(seed, r)
        x = np.asarray(sample(dx, n, child_seed(rs, 0)))
        y = np.asarray(sample(dy, n, child_seed(rs, 1)))
        sx, sy = _mat(spec, x), _mat(spec, y)
        vals.append(frobenius_distance(_mat(spec, x + y), sx + sy))
    return _report("Additivity", np.mean(vals), threshold, n, replicates, seed, direction,
                   functional=spec.label, per_replicate=[float(v) for v in vals])


def _replicate_mean(spec, dist, n, replicates, seed):
    return np.mean([_mat(spec, sample(dist, n, child_seed(seed, r))) for r in range(replicates)], axis=0)


def independence_check(spec: ScatterSpec, dist: DistributionSpec, n: int, replicates: int, seed: int,
                       *, pairs=None, threshold=STATISTICAL_TOL, direction="le") -> PropertyReport:
    """Largest ``|S_jk|`` over certified independent pairs, with ``S`` averaged over replicates.

    Without explicit `pairs` every pair the distribution certifies is used.
    """
    p = dist.dim
    if pairs is None:
        pairs = [(j, k) for j in range(p) for k in range(j + 1, p) if dist.certifies_independent(j, k)]
        if not pairs:
            raise MissingCertificate("distribution certifies no independent pair of components")
    pairs = [tuple(pr) for pr in pairs]
    require_independent(dist, pairs)
    m = _replicate_mean(spec, dist, n, replicates, seed)
    vals = [abs(m[j, k]) for j, k in pairs]
    return _report("IndependenceProperty", max(vals), threshold, n, replicates, seed, direction,
                   functional=spec.label, pairs=[list(pr) for pr in pairs],
                   per_pair=[float(v) for v in vals])


def joint_independence_check(spec: ScatterSpec, dist: DistributionSpec, n: int, replicates: int, seed: int,
                             *, threshold=STATISTICAL_TOL, direction="le") -> PropertyReport:
    """Largest off-diagonal ``|S_jk|`` of the replicate-averaged estimate when all
    components are mutually independent."""
    if any(len(b) > 1 for b in dist.independence_blocks()):
        raise MissingCertificate("joint independence needs mutually independent components")
    p = dist.dim
    m = _replicate_mean(spec, dist, n, replicates, seed)
    stat = np.abs(m[~np.eye(p, dtype=bool)]).max() if p > 1 else 0.0
    return _report("JointIndependence", stat, threshold, n, replicates, seed, direction,
                   functional=spec.label)


# --------------------------------------------------------------------------
# full affine equivariance and its sub-matrix face

def full_equivariance_check(spec: ScatterSpec, dist: DistributionSpec, k: int, n: int, seed: int, *,
                            threshold=STATISTICAL_TOL, maps=10, A=None, cond_max=4.0,
                            direction="le") -> PropertyReport:
    """Largest ``|S_k(A x) - A S_p(x) A^T|_F`` over random rank-k ``A`` in ``R^{k x p}``.

    ``S_k`` is the same family evaluated in dimension k. Passing an explicit
    `A` (rank-deficient allowed) replaces the random maps.
    """
    p = dist.dim
    if not 1 <= k < p:
        raise ValueError(f"need 1 <= k < p, got k={k}, p={p}")
    psd = spec.family == "cov"
    x = sample(dist, n, child_seed(seed, 0))
    if A is not None:
        mats = [np.atleast_2d(np.asarray(A, dtype=float))]
    else:
        mats = [random_affine(rng(child_seed(seed, j + 1)), k, p, cond_max) for j in range(maps)]
    vals = []
    try:
        base = _mat(spec, x)
        for M in mats:
            image = _mat(spec, x.affine(M), allow_singular=psd)
            vals.append(frobenius_distance(image, M @ base @ M.T))
    except ScatterLabError as exc:
        return _failed("FullAffineEquivariance", threshold, n, 1, seed, direction, exc,
                       functional=spec.label, k=k, p=p)
    return _report("FullAffineEquivariance", max(vals), threshold, n, 1, seed, direction,
                   functional=spec.label, k=k, p=p, maps=len(mats))


def subvector_consistency_check(spec: ScatterSpec, dist: DistributionSpec, n: int, seed: int, *,
                                threshold=ALGEBRAIC_TOL, direction="le") -> PropertyReport:
    """Largest gap between entries of ``S_p(x)`` and the one- and two-dimensional
    functionals of the corresponding coordinates."""
    p = dist.dim
    if p < 2:
        raise ValueError("subvector consistency needs p >= 2")
    x = sample(dist, n, child_seed(seed, 0))
    full = _mat(spec, x)
    diag = [abs(full[i, i] - _mat(spec, x.columns([i]))[0, 0]) for i in range(p)]
    offd = [abs(full[i, j] - _mat(spec, x.columns([i, j]))[0, 1]) for i in range(p) for j in range(i + 1, p)]
    return _report("SubvectorConsistency", max(diag + offd), threshold, n, 1, seed, direction,
                   functional=spec.label, max_diagonal_gap=float(max(diag)), max_offdiagonal_gap=float(max(offd)))


def proportionality_statistic(image, original, A) -> float:
    """``|tn(S(As)) - tn(A S(s) A^T)|_F`` with ``tn`` scaling to trace p."""
    A = np.asarray(A, dtype=float)
    return frobenius_distance(trace_normalize(image), trace_normalize(A @ np.asarray(original) @ A.T))


def proportionality_check(spec: ScatterSpec, dist: DistributionSpec, n: int, seed: int, *,
                          threshold=None, maps=10, direction="le") -> PropertyReport:
    """Affine equivariance up to a scalar: the shape-functional version of equivariance."""
    threshold = _default_tol(spec) if threshold is None else threshold
    x = sample(dist, n, child_seed(seed, 0))
    vals = []
    try:
        base = _mat(spec, x)
        for k in range(maps):
            gen = rng(child_seed(seed, k + 1))
            A = random_affine(gen, dist.dim, dist.dim)
            b = gen.standard_normal(dist.dim)
            vals.append(proportionality_statistic(_mat(spec, x.affine(A, b)), base, A))
    except ScatterLabError as exc:
        return _failed("Proportionality", threshold, n, 1, seed, direction, exc, functional=spec.label)
    return _report("Proportionality", max(vals), threshold, n, 1, seed, direction,
                   functional=spec.label, maps=maps)


# --------------------------------------------------------------------------
# normal continuity and the uniqueness constructions

def normal_continuity_experiment(spec: ScatterSpec, dist: DistributionSpec, n_grid, m: int,
                                 replicates: int, seed: int) -> list[tuple[int, float]]:
    """Error of the functional at standardized sums of `n` i.i.d. copies of `dist`.

    For each ``n`` in `n_grid`, the functional is evaluated on `replicates`
    samples of size `m` from the law of ``(x_1 + ... + x_n) / sqrt(n)``; the
    replicate mean estimates the functional at that law, and the recorded
    error is its Frobenius distance to ``Cov(x)``.
    """
    n_grid = [int(v) for v in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly ascending")
    if m < 1000:
        raise ValueError("m must be at least 1000")
    sigma = np.asarray(true_covariance(dist))
    out = []
    for i, n in enumerate(n_grid):
        law = standardized_sum_spec(dist, n)
        est = np.mean([_mat(spec, sample(law, m, child_seed(child_seed(seed, i), r)))
                       for r in range(replicates)], axis=0)
        out.append((n, frobenius_distance(est, sigma)))
    return out


def normal_continuity_check(spec, dist, n_grid, m, replicates, seed, *, threshold=STATISTICAL_TOL,
                            direction="le") -> PropertyReport:
    """Report wrapper: the statistic is the error at the largest n."""
    errs = normal_continuity_experiment(spec, dist, n_grid, m, replicates, seed)
    return _report("NormalContinuity", errs[-1][1], threshold, m, replicates, seed, direction,
                   functional=spec.label, n_grid=[e[0] for e in errs], errors=[e[1] for e in errs],
                   ratio_last_first=errs[-1][1] / errs[0][1] if errs[0][1] > 0 else float("inf"))


@dataclass(frozen=True)
class FaeExpansion:
    n: int
    m: int
    lhs: float
    s1_hat: float
    c_hat: float
    residual: float
    variance: float


def fae_expansion_experiment(spec: ScatterSpec, marginal: Marginal, n: int, m: int, seed: int,
                             *, max_pairs=None) -> FaeExpansion:
    """Numerical form of ``S_1(sum y_i / sqrt n) = S_1(x_1) + (n - 1) c``.

    One ``m x n`` table of i.i.d. draws is shared by all three estimates:
    `lhs` is ``S_1`` of the scaled row sums, `s1_hat` averages ``S_1`` over
    the columns and `c_hat` averages the off-diagonal of ``S_2`` over column
    pairs. For Cov the three satisfy the expansion exactly, so `residual`
    is rounding error; for other families it measures the failure.
    """
    if n < 1 or m < 1000:
        raise ValueError("need n >= 1 and m >= 1000")
    y = Product((marginal,) * n).draw(rng(seed), m)
    lhs = _mat(spec, y.sum(axis=1, keepdims=True) / math.sqrt(n))[0, 0]
    s1 = np.mean([_mat(spec, y[:, [i]])[0, 0] for i in range(n)])
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if max_pairs is not None and len(pairs) > max_pairs:
        pick = np.sort(rng(child_seed(seed, 1)).choice(len(pairs), max_pairs, replace=False))
        pairs = [pairs[t] for t in pick]
    c = np.mean([_mat(spec, y[:, [i, j]])[0, 1] for i, j in pairs]) if pairs else 0.0
    residual = abs(lhs - s1 - (n - 1) * c)
    return FaeExpansion(n, m, float(lhs), float(s1), float(c), float(residual), marginal.variance)


def sum_expansion_check(spec: ScatterSpec, joint: DistributionSpec, p_total: int, n: int, seed: int, *,
                        threshold=0.1, direction="le") -> PropertyReport:
    """Two routes to the first diagonal entry of ``S_p`` at ``(y1 + y2, z_2, ..., z_p)``.

    The direct route evaluates ``S_p`` on the constructed vector; the
    expansion route computes ``1^T S_2(y1, y2) 1``. The statistic is their gap.
    """
    if joint.dim != 2:
        raise ValueError("joint distribution must be bivariate")
    if p_total < 2:
        raise ValueError("p_total must be at least 2")
    pair = np.asarray(sample(joint, n, child_seed(seed, 0)))
    z = np.asarray(sample(StandardNormal(p_total - 1), n, child_seed(seed, 1)))
    y = np.column_stack([pair.sum(axis=1), z])
    ones = np.ones(2)
    population = float(ones @ np.asarray(true_covariance(joint)) @ ones)
    details = {"functional": spec.label, "population": population}
    try:
        direct = _mat(spec, y)[0, 0]
        expansion = ones @ _mat(spec, pair) @ ones
    except SingularScatter as exc:
        details.update(error=type(exc).__name__, message=str(exc))
        if spec.family != "cov":
            return _report("SumExpansion", float("nan"), threshold, n, 1, seed, direction, **details)
        direct = _mat(spec, y, allow_singular=True)[0, 0]
        expansion = ones @ _mat(spec, pair, allow_singular=True) @ ones
    return _report("SumExpansion", abs(direct - expansion), threshold, n, 1, seed, direction,
                   direct=float(direct), expansion=float(expansion), **details)

