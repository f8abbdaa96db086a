"""MVDR weights and beamformer performance metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalFailureError
from .estimators import as_matrix


@dataclass(frozen=True)
class SteeringVector:
    """Signal template ``s`` with ``||s||^2 = N``."""

    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=complex).ravel()
        n = s.shape[0]
        if abs(np.vdot(s, s).real - n) > 1e-9 * n:
            raise InvalidInputError(f"steering vector must satisfy ||s||^2 = N = {n}")
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class BeamformerWeights:
    w: np.ndarray


def as_vector(s) -> np.ndarray:
    if isinstance(s, SteeringVector):
        return s.s
    return np.asarray(s, dtype=complex).ravel()


def cholesky(a: np.ndarray):
    """Lower Cholesky factor in ``cho_solve`` form; failure is a numerical error."""
    try:
        return sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("matrix is not numerically positive-definite") from exc


def solve_pd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.cho_solve(cholesky(a), b, check_finite=False)


def mvdr_weights(sigma, s) -> BeamformerWeights:
    """``w = Sigma^{-1} s / (s^H Sigma^{-1} s)``."""
    sv = as_vector(s)
    z = solve_pd(as_matrix(sigma), sv)
    return BeamformerWeights(z / np.vdot(sv, z))


def output_power(w, r) -> float:
    """Quadratic form ``w^H R w``."""
    wv = w.w if isinstance(w, BeamformerWeights) else np.asarray(w, dtype=complex)
    rm = as_matrix(r)
    if rm.shape != (wv.shape[0], wv.shape[0]):
        raise InvalidInputError(f"dimension mismatch: w has {wv.shape[0]}, R is {rm.shape}")
    return float(np.vdot(wv, rm @ wv).real)


def sdr_loss(r_hat, r_true, s) -> float:
    """Output SDR with ``r_hat`` relative to the optimum with ``r_true``.

    ``|s^H Rh^-1 s|^2 / ((s^H Rh^-1 R Rh^-1 s)(s^H R^-1 s))``. The value is
    capped at 1, its Cauchy-Schwarz bound, to absorb round-off.
    """
    sv = as_vector(s)
    rt = as_matrix(r_true)
    z = solve_pd(as_matrix(r_hat), sv)
    num = abs(np.vdot(sv, z)) ** 2
    den = np.vdot(z, rt @ z).real * np.vdot(sv, solve_pd(rt, sv)).real
    return float(min(num / den, 1.0))


def nmse(r_hat, r_true) -> float:
    """Squared Frobenius error between trace-normalized matrices, relative."""
    rh, rt = as_matrix(r_hat), as_matrix(r_true)
    tr_h, tr_t = np.trace(rh).real, np.trace(rt).real
    if tr_h <= 0 or tr_t <= 0:
        raise InvalidInputError("NMSE needs matrices with positive trace")
    ref = rt / tr_t
    return float(np.linalg.norm(ref - rh / tr_h) ** 2 / np.linalg.norm(ref) ** 2)


def to_db(x):
    return 10.0 * np.log10(x)
