"""Dense symmetric linear algebra and the two value types used everywhere.

`Sample` wraps an ``n x p`` data matrix (rows are observations) and
`SpdMatrix` wraps a symmetric positive (semi)definite ``p x p`` matrix. Both
are immutable and convert transparently with ``np.asarray``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, SingularMatrix

SPD_RELATIVE_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations in rows, components in columns."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"sample must be a non-empty 2-d array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("sample contains non-finite entries")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __len__(self):
        return self.n

    def affine(self, A, b=None) -> "Sample":
        """Row-wise image ``x -> A x + b``; ``A`` may be rectangular."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != self.p:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, sample has p={self.p}")
        out = self.data @ A.T
        if b is not None:
            out = out + np.asarray(b, dtype=float)
        return Sample(out)

    def columns(self, idx) -> "Sample":
        return Sample(self.data[:, list(idx)])


def as_sample(x) -> Sample:
    return x if isinstance(x, Sample) else Sample(x)


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive semidefinite matrix with a symmetry/definiteness slack.

    ``tolerance`` defaults to ``1e-9 * max|entry|``. Construction fails if the
    matrix is asymmetric or has an eigenvalue below ``-tolerance``; use
    `is_strict` to ask for positive definiteness.
    """

    entries: np.ndarray
    tolerance: float | None = None
    _eigvals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix contains non-finite entries")
        tol = self.tolerance
        if tol is None:
            tol = SPD_RELATIVE_TOL * float(np.max(np.abs(a), initial=0.0))
        if tol < 0:
            raise ValueError("tolerance must be non-negative")
        if np.max(np.abs(a - a.T), initial=0.0) > tol:
            raise ValueError("matrix is not symmetric within tolerance")
        a = 0.5 * (a + a.T)
        ev = np.linalg.eigvalsh(a)
        if ev[0] < -tol:
            raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {ev[0]:.3g})")
        object.__setattr__(self, "entries", _frozen(a))
        object.__setattr__(self, "tolerance", float(tol))
        object.__setattr__(self, "_eigvals", _frozen(ev))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigvals

    @property
    def is_strict(self) -> bool:
        return bool(self._eigvals[0] > self.tolerance)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def congruence(self, A) -> "SpdMatrix":
        """``A M A^T`` for any (possibly rectangular) ``A``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return SpdMatrix(A @ self.entries @ A.T)


def as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def _cholesky(m: SpdMatrix):
    if not m.is_strict:
        raise SingularMatrix(f"smallest eigenvalue {m.eigenvalues[0]:.3g} <= tolerance {m.tolerance:.3g}")
    try:
        return linalg.cho_factor(m.entries, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def spd_inverse(m) -> SpdMatrix:
    """Inverse through a Cholesky factorization, re-symmetrized."""
    m = as_spd(m)
    cf = _cholesky(m)
    inv = linalg.cho_solve(cf, np.eye(m.p), check_finite=False)
    return SpdMatrix(0.5 * (inv + inv.T))


def mahalanobis_distances(s, m) -> np.ndarray:
    """Squared distances ``d_i = x_i^T M^{-1} x_i`` of the rows of `s` (no centering)."""
    x = np.asarray(as_sample(s))
    m = as_spd(m)
    if x.shape[1] != m.p:
        raise DimensionMismatch(f"sample has p={x.shape[1]}, matrix is {m.p}x{m.p}")
    c, _ = _cholesky(m)
    z = linalg.solve_triangular(c, x.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)


def frobenius_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def trace_normalize(m) -> np.ndarray:
    """Scale a matrix to trace ``p``; the shape-class representative."""
    m = np.asarray(m, dtype=float)
    return m * (m.shape[0] / np.trace(m))
