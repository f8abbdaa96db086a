"""Covariance and scatter estimators.

Sample covariance (SCM), normalized SCM, linear shrinkage toward a target,
and the shrinkage Tyler estimator (STE) solved by fixed-point iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInputError, NumericalFailureError


class Provenance(str, enum.Enum):
    SCM = "SCM"
    NSCM = "NSCM"
    S2CM = "S2CM"
    STE = "STE"
    ORACLE = "Oracle"
    EXTERNAL = "External"


class TargetKind(str, enum.Enum):
    IDENTITY = "identity"
    GENERAL = "general"


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return ``(A + A^H) / 2``."""
    return 0.5 * (a + a.conj().T)


def as_matrix(x) -> np.ndarray:
    """Underlying complex array of an estimate, a target, or a raw array."""
    if isinstance(x, (HermitianEstimate, ShrinkageTarget)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def as_data(samples) -> np.ndarray:
    if isinstance(samples, SnapshotSet):
        return samples.data
    return SnapshotSet(samples).data


@dataclass(frozen=True)
class SnapshotSet:
    """``L`` training snapshots stored as the columns of an ``N x L`` array."""

    data: np.ndarray
    model: str = "gaussian"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2:
            raise InvalidInputError(f"snapshots must be a 2-D array, got shape {data.shape}")
        n, l_count = data.shape
        if n < 2:
            raise InvalidInputError(f"dimension N must be >= 2, got {n}")
        if l_count < 1:
            raise InvalidInputError("empty snapshot set")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("snapshots contain NaN or Inf entries")
        if self.model not in ("gaussian", "compound-gaussian"):
            raise InvalidInputError(f"unknown sample model {self.model!r}")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def l_count(self) -> int:
        return self.data.shape[1]

    def rescaled(self, scales) -> "SnapshotSet":
        """Copy with column ``l`` multiplied by ``scales[l]``."""
        return SnapshotSet(self.data * np.asarray(scales)[None, :], self.model)


@dataclass(frozen=True)
class HermitianEstimate:
    """An ``N x N`` Hermitian matrix tagged with how it was produced.

    The matrix is re-symmetrized on construction so that downstream
    Cholesky/EVD calls always see exactly Hermitian input.
    """

    matrix: np.ndarray
    provenance: Provenance = Provenance.EXTERNAL
    rho: float | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
        object.__setattr__(self, "matrix", hermitize(m))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ShrinkageTarget:
    """Hermitian positive-definite shrinkage target ``T``."""

    matrix: np.ndarray
    kind: TargetKind = field(default=None)

    def __post_init__(self):
        m = hermitize(np.asarray(self.matrix, dtype=complex))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
        eig = np.linalg.eigvalsh(m)
        if not eig[0] > 0.0:
            raise InvalidInputError(
                f"shrinkage target is not positive-definite (min eigenvalue {eig[0]:.3g})")
        object.__setattr__(self, "matrix", m)
        kind = self.kind
        if kind is None:
            is_eye = np.array_equal(m, np.eye(m.shape[0]))
            kind = TargetKind.IDENTITY if is_eye else TargetKind.GENERAL
        object.__setattr__(self, "kind", TargetKind(kind))

    @classmethod
    def identity(cls, n: int) -> "ShrinkageTarget":
        return cls(np.eye(n, dtype=complex), TargetKind.IDENTITY)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SteConfig:
    """Stopping rule for the Tyler-type iterations.

    ``rescale`` moves every iterate onto ``Tr(R^-1 T) = N`` before the next
    update. ``anderson`` is the mixing memory of the accelerated solver;
    zero gives the plain recursion. Neither option moves the fixed point,
    and with both off the iteration is the textbook one.
    """

    delta: float = 1e-6
    max_iter: int = 100
    initial: HermitianEstimate | None = None
    rescale: bool = True
    anderson: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidInputError(f"delta must be positive, got {self.delta}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidInputError(f"max_iter must be a positive integer, got {self.max_iter}")
        if int(self.anderson) != self.anderson or self.anderson < 0:
            raise InvalidInputError(f"anderson must be a non-negative integer, got {self.anderson}")


@dataclass
class SteResult:
    estimate: HermitianEstimate
    iterations: int
    final_distance: float
    converged: bool
    distances: np.ndarray

    def __iter__(self):
        # (estimate, iterations, final_distance) unpacking
        return iter((self.estimate, self.iterations, self.final_distance))


def scm(samples) -> HermitianEstimate:
    """Sample covariance matrix ``(1/L) sum_l x_l x_l^H``."""
    x = as_data(samples)
    return HermitianEstimate(x @ x.conj().T / x.shape[1], Provenance.SCM)


def unit_columns(y: np.ndarray) -> np.ndarray:
    """Columns scaled to unit Euclidean norm; zero columns are an input error."""
    norms = np.linalg.norm(y, axis=0)
    if np.any(norms == 0.0):
        raise InvalidInputError("snapshot set contains a zero-norm column")
    return y / norms


def nscm(samples) -> HermitianEstimate:
    """Trace-normalized normalized SCM, ``(N/L) sum_l y_l y_l^H / (y_l^H y_l)``.

    The trace equals ``N`` by construction.
    """
    y = as_data(samples)
    n, l_count = y.shape
    u = unit_columns(y)
    return HermitianEstimate(n / l_count * (u @ u.conj().T), Provenance.NSCM)


def shrink(sigma, target, rho: float) -> HermitianEstimate:
    """Convex combination ``(1 - rho) * sigma + rho * target``."""
    if not 0.0 <= rho < 1.0:
        raise InvalidInputError(f"shrinkage factor must lie in [0, 1), got {rho}")
    s = as_matrix(sigma)
    t = as_matrix(target)
    if s.shape != t.shape:
        raise InvalidInputError(f"dimension mismatch: {s.shape} vs {t.shape}")
    return HermitianEstimate((1.0 - rho) * s + rho * t, Provenance.S2CM, float(rho))


def relative_distance(a, b) -> float:
    """``||A - B||_F / ||B||_F`` (unsquared ratio)."""
    am, bm = as_matrix(a), as_matrix(b)
    if am.shape != bm.shape:
        raise InvalidInputError(f"dimension mismatch: {am.shape} vs {bm.shape}")
    den = np.linalg.norm(bm)
    if den == 0.0:
        raise InvalidInputError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(am - bm) / den)


def ste_admissible_low(n: int, l_count: int) -> float:
    """Lower end of the open interval of shrinkage factors where the STE exists."""
    return max(0.0, 1.0 - l_count / n)


def check_ste_rho(rho: float, n: int, l_count: int) -> None:
    lo = ste_admissible_low(n, l_count)
    if rho == 0.0 and l_count >= n:
        return
    if not lo < rho < 1.0:
        raise InvalidInputError(
            f"shrinkage factor {rho} outside the STE existence interval ({lo:.6g}, 1)")


def fixed_point_scale(r: np.ndarray, target: np.ndarray) -> float:
    """Scalar ``c`` with ``Tr((c R)^-1 T) = N``; every STE fixed point has ``c = 1``."""
    return float(np.trace(np.linalg.solve(r, target)).real / r.shape[0])


def tyler_map(y: np.ndarray, r: np.ndarray, target: np.ndarray, rho: float) -> np.ndarray:
    """One application of the shrinkage Tyler map to ``r``."""
    n, l_count = y.shape
    quad = np.einsum("il,il->l", y.conj(), np.linalg.solve(r, y)).real / n
    w = y / np.sqrt(quad)
    return hermitize((1.0 - rho) / l_count * (w @ w.conj().T) + rho * target)


def ste_fixed_point(samples, target: ShrinkageTarget, rho: float,
                    cfg: SteConfig | None = None) -> SteResult:
    """Shrinkage Tyler estimator at a fixed shrinkage factor.

    Iterates ``R <- (1-rho)/L sum_l y_l y_l^H / ((1/N) y_l^H R^{-1} y_l) + rho T``
    from ``cfg.initial`` (identity by default) until the relative residual
    ``||F(R) - R|| / ||R||`` drops below ``cfg.delta`` or ``cfg.max_iter``
    map evaluations were made. Hitting
    the iteration cap is reported through ``converged=False``, not raised.
    """
    cfg = cfg or SteConfig()
    y = as_data(samples)
    n, l_count = y.shape
    t = as_matrix(target)
    if t.shape != (n, n):
        raise InvalidInputError(f"target shape {t.shape} does not match N={n}")
    check_ste_rho(rho, n, l_count)
    # Tyler weights cancel per-sample scale; unit columns keep that exact in floating point
    u = np.ascontiguousarray(unit_columns(y))
    r0 = np.eye(n, dtype=complex) if cfg.initial is None else as_matrix(cfg.initial)
    r, iters, dist, distances, status = kernels.ste_iterate(
        u, np.ascontiguousarray(t), float(rho), np.ascontiguousarray(r0, dtype=complex),
        float(cfg.delta), int(cfg.max_iter), bool(cfg.rescale), int(cfg.anderson))
    if status == kernels.BREAKDOWN:
        raise NumericalFailureError(
            f"Tyler iteration broke down at step {iters} (non-positive quadratic form)")
    est = HermitianEstimate(r, Provenance.STE, float(rho))
    return SteResult(est, int(iters), float(dist), status == kernels.CONVERGED,
                     np.asarray(distances, dtype=float))
