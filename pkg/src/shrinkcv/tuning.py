"""Shrinkage-factor selection for MVDR beamforming.

Every method scores a grid of shrinkage factors ``rho`` with some estimate of
the MVDR output disturbance power and keeps the minimizer:

* ``tune_s2cm_cv`` / ``tune_s2cm_ae``: leave-one-out and asymptotic costs for
  the shrinkage SCM (Gaussian data);
* ``tune_ste_cv1``: the same leave-one-out cost on samples whitened by a
  fixed plug-in matrix, followed by one shrinkage Tyler solve;
* ``tune_ste_cv2`` / ``tune_ste_ae``: re-tune ``rho`` at every Tyler step,
  using the current iterate as the plug-in;
* ``oracle_s2cm`` / ``oracle_ste``: minimize the true cost (simulation only).

Costs are evaluated in the loading parameterization
``R~(alpha) = SCM + alpha*T`` with ``alpha = rho (L-1) / (L (1-rho))``; the
leave-one-out inverse is never formed explicitly, one factorization of
``R~(alpha)`` serves all ``L`` validation samples.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from . import kernels
from .beamforming import as_vector, cholesky, solve_pd
from .errors import InvalidInputError, NumericalFailureError
from .estimators import (HermitianEstimate, Provenance, ShrinkageTarget, SteConfig,
                         TargetKind, as_data, as_matrix, hermitize, scm, shrink,
                         ste_admissible_low, ste_fixed_point, fixed_point_scale, nscm, relative_distance,
                         unit_columns)

#: lower guard on the leave-one-out factors g_l and h
EPS_GUARD = 1e-12
# round-off allowance above the upper bound 1
_UPPER_SLACK = 1e-9


class FactorAudit:
    """Process-wide tally of leave-one-out factors checked against ``(0, 1]``."""

    def __init__(self):
        self._lock = threading.Lock()
        self.checked = 0
        self.violations = 0

    def record(self, count: int, bad: int) -> None:
        with self._lock:
            self.checked += count
            self.violations += bad

    def reset(self) -> None:
        with self._lock:
            self.checked = 0
            self.violations = 0


FACTOR_AUDIT = FactorAudit()


@dataclass(frozen=True)
class TuningGrid:
    """Strictly increasing candidate shrinkage factors inside ``(0, 1)``."""

    rho_values: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho_values, dtype=float).ravel()
        if rho.size == 0:
            raise InvalidInputError("empty tuning grid")
        if np.any(np.diff(rho) <= 0):
            raise InvalidInputError("tuning grid must be strictly increasing")
        if rho[0] <= 0.0 or rho[-1] >= 1.0:
            raise InvalidInputError("tuning grid values must lie in the open interval (0, 1)")
        object.__setattr__(self, "rho_values", rho)

    @classmethod
    def uniform(cls, count: int = 100, lo: float = 0.0, eps: float = 1e-3) -> "TuningGrid":
        """``count`` points evenly spaced over ``[lo + eps, 1 - eps]``."""
        if count < 1:
            raise InvalidInputError(f"grid count must be >= 1, got {count}")
        return cls(np.linspace(lo + eps, 1.0 - eps, count))

    @classmethod
    def for_ste(cls, n: int, l_count: int, count: int = 100, eps: float = 1e-3) -> "TuningGrid":
        return cls.uniform(count, ste_admissible_low(n, l_count), eps)

    @property
    def count(self) -> int:
        return self.rho_values.size

    @property
    def step(self) -> float:
        """Largest spacing between neighbours (0 for a one-point grid)."""
        if self.count == 1:
            return 0.0
        return float(np.max(np.diff(self.rho_values)))

    def alphas(self, l_count: int) -> np.ndarray:
        return rho_to_alpha(self.rho_values, l_count)


@dataclass
class TuningResult:
    rho_star: float
    alpha_star: float
    rho_grid: np.ndarray
    costs: np.ndarray
    converged: bool = True
    iterations: int = 0
    rho_history: list[float] | None = None
    distances: list[float] | None = None
    reused_rho: int = 0
    factor_range: tuple[float, float] = (np.nan, np.nan)

    @property
    def curve(self) -> list[tuple[float, float]]:
        return list(zip(self.rho_grid.tolist(), self.costs.tolist()))


def rho_to_alpha(rho, l_count: int):
    """Loading ``alpha = rho (L-1) / (L (1 - rho))`` equivalent to shrinkage ``rho``."""
    if l_count < 2:
        raise InvalidInputError(f"need L >= 2 to map rho to alpha, got L={l_count}")
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0.0) or np.any(r >= 1.0):
        raise InvalidInputError("shrinkage factor must lie in [0, 1)")
    out = r * (l_count - 1) / (l_count * (1.0 - r))
    return float(out) if out.ndim == 0 else out


def j_metric(sigma, r_true, s) -> float:
    """Disturbance output power of the MVDR built on ``sigma`` (unit texture mean)."""
    sv = as_vector(s)
    z = solve_pd(as_matrix(sigma), sv)
    return float(np.vdot(z, as_matrix(r_true) @ z).real / np.vdot(sv, z).real ** 2)


# ---------------------------------------------------------------------------
# leave-one-out factors
# ---------------------------------------------------------------------------
def check_factors(values, name: str = "g") -> None:
    """Raise unless every leave-one-out factor lies in ``(EPS_GUARD, 1]``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return
    bad = int(np.count_nonzero(~((v > EPS_GUARD) & (v <= 1.0 + _UPPER_SLACK))))
    FACTOR_AUDIT.record(v.size, bad)
    lo, hi = np.min(v), np.max(v)
    if not lo > EPS_GUARD:
        raise NumericalFailureError(
            f"leave-one-out factor {name} = {lo:.3g} <= {EPS_GUARD:g}; corrupt or degenerate input")
    if not hi <= 1.0 + _UPPER_SLACK:
        raise NumericalFailureError(f"leave-one-out factor {name} = {hi!r} exceeds 1")


def _check_alpha(alpha: float, n: int, l_count: int) -> None:
    if l_count < 2:
        raise InvalidInputError("leave-one-out needs at least two samples")
    if alpha < 0 or (alpha == 0 and l_count < n):
        raise InvalidInputError(f"loading alpha={alpha} not admissible for N={n}, L={l_count}")


def _direct_terms(x, s, t, alpha):
    """``a_l = s^H R~^-1 x_l``, ``b_l = x_l^H R~^-1 x_l``, ``c = s^H R~^-1 s``."""
    l_count = x.shape[1]
    r_tilde = x @ x.conj().T / l_count + alpha * t
    fac = cholesky(hermitize(r_tilde))
    zs = sla.cho_solve(fac, s, check_finite=False)
    zx = sla.cho_solve(fac, x, check_finite=False)
    a = zs.conj() @ x
    b = np.einsum("il,il->l", x.conj(), zx).real
    c = np.vdot(s, zs).real
    return a, b, c


def _cv_from_terms(a, b, c, l_count):
    a2 = np.abs(a) ** 2
    g = 1.0 - b / l_count + a2 / (l_count * c)
    return float(np.mean(a2 / g**2) / c**2), g


def _ae_from_terms(a, b, c, l_count):
    h = 1.0 - np.sum(b) / l_count**2
    return float(np.mean(np.abs(a) ** 2) / (h**2 * c**2)), h


def loocv_cost_gaussian(samples, s, target, alpha: float, return_factors: bool = False):
    """Leave-one-out output power for loading ``alpha``, fast form.

    ``(1/L) sum_l |s^H R~^-1 x_l|^2 / ((1 - (N/L) phi_l)^2 (s^H R~^-1 s)^2)``
    with a single Cholesky factorization of ``R~(alpha) = SCM + alpha*T``.
    """
    x = as_data(samples)
    n, l_count = x.shape
    _check_alpha(alpha, n, l_count)
    a, b, c = _direct_terms(x, as_vector(s), as_matrix(target), alpha)
    cost, g = _cv_from_terms(a, b, c, l_count)
    check_factors(g, "g_l")
    return (cost, g) if return_factors else cost


def ae_cost_gaussian(samples, s, target, alpha: float, return_factors: bool = False):
    """Asymptotic counterpart of :func:`loocv_cost_gaussian`.

    The per-sample factors are replaced by ``h = 1 - (1/L) Tr(SCM R~^-1)``.
    """
    x = as_data(samples)
    n, l_count = x.shape
    _check_alpha(alpha, n, l_count)
    a, b, c = _direct_terms(x, as_vector(s), as_matrix(target), alpha)
    cost, h = _ae_from_terms(a, b, c, l_count)
    check_factors([h], "h")
    return (cost, h) if return_factors else cost


def _evd_setup(x, s):
    l_count = x.shape[1]
    lam, v = np.linalg.eigh(hermitize(x @ x.conj().T / l_count))
    return lam, np.ascontiguousarray(v.conj().T @ s), np.ascontiguousarray(v.conj().T @ x)


def _evd_grid(x, s, alphas):
    lam, vs, vx = _evd_setup(x, s)
    cv, ae, g_min, g_max, h = kernels.evd_grid(lam, vs, vx, np.ascontiguousarray(alphas,
                                                                                dtype=float))
    return cv, ae, np.concatenate([g_min, g_max]), h


def loocv_cost_gaussian_evd(samples, s, alpha_grid, target=None, return_factors: bool = False):
    """Leave-one-out costs on a grid of loadings for the identity target.

    One eigendecomposition of the SCM is shared by all grid points; each
    point then costs ``O(L N)``.
    """
    if target is not None and ShrinkageTarget(as_matrix(target)).kind != TargetKind.IDENTITY:
        raise InvalidInputError("the eigendecomposition path requires the identity target")
    x = as_data(samples)
    n, l_count = x.shape
    alphas = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if alphas.size == 0:
        raise InvalidInputError("empty loading grid")
    for alpha in alphas:
        _check_alpha(alpha, n, l_count)
    cv, _, g, _ = _evd_grid(x, as_vector(s), alphas)
    check_factors(g, "g_l")
    return (cv, g) if return_factors else cv


def cost_curve(samples, s, target, alphas, kind: str = "cv"):
    """Cost at every loading in ``alphas``; EVD path for the identity target.

    Returns ``(costs, factor_min, factor_max)`` where the factors are the
    ``g_l`` (``kind="cv"``) or ``h`` (``kind="ae"``) values seen.
    """
    if kind not in ("cv", "ae"):
        raise InvalidInputError(f"unknown cost kind {kind!r}")
    x = as_data(samples)
    sv = as_vector(s)
    t = target if isinstance(target, ShrinkageTarget) else ShrinkageTarget(target)
    n, l_count = x.shape
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    for alpha in alphas:
        _check_alpha(alpha, n, l_count)
    if t.kind == TargetKind.IDENTITY:
        cv, ae, g, h = _evd_grid(x, sv, alphas)
        costs, factors = (cv, g) if kind == "cv" else (ae, h)
    else:
        costs = np.empty(alphas.size)
        factors = []
        for k, alpha in enumerate(alphas):
            a, b, c = _direct_terms(x, sv, t.matrix, alpha)
            if kind == "cv":
                costs[k], g = _cv_from_terms(a, b, c, l_count)
                factors.extend((g.min(), g.max()))
            else:
                costs[k], h = _ae_from_terms(a, b, c, l_count)
                factors.append(h)
    check_factors(factors, "g_l" if kind == "cv" else "h")
    factors = np.asarray(factors)
    return costs, float(factors.min()), float(factors.max())


# ---------------------------------------------------------------------------
# compound-Gaussian costs on whitened samples
# ---------------------------------------------------------------------------
def weighted_samples(samples, r_plugin) -> np.ndarray:
    """``q_l = y_l / sqrt((1/N) y_l^H R^-1 y_l)`` for a plug-in ``R``."""
    y = unit_columns(as_data(samples))
    n = y.shape[0]
    r = as_matrix(r_plugin)
    if r.shape != (n, n):
        raise InvalidInputError(f"plug-in shape {r.shape} does not match N={n}")
    quad = np.einsum("il,il->l", y.conj(), solve_pd(r, y)).real / n
    if not np.all(quad > 0.0):
        raise NumericalFailureError("non-positive quadratic form y^H R^-1 y")
    return y / np.sqrt(quad)


def trace_normalized(r) -> np.ndarray:
    m = as_matrix(r)
    return m * (m.shape[0] / np.trace(m).real)


def ste_cv2_cost(samples, s, target, alpha: float, r_current) -> float:
    """Leave-one-out cost with the current Tyler iterate as plug-in."""
    return loocv_cost_gaussian(weighted_samples(samples, r_current), s, target, alpha)


def ste_cv1_cost(samples, s, target, alpha: float, r_plugin) -> float:
    """Leave-one-out cost on samples whitened by a fixed plug-in.

    ``r_plugin`` is rescaled to trace ``N`` first.
    """
    return ste_cv2_cost(samples, s, target, alpha, trace_normalized(r_plugin))


def ste_ae_cost(samples, s, target, alpha: float, r_current) -> float:
    return ae_cost_gaussian(weighted_samples(samples, r_current), s, target, alpha)


# ---------------------------------------------------------------------------
# tuners
# ---------------------------------------------------------------------------
def _as_target(target, n) -> ShrinkageTarget:
    t = target if isinstance(target, ShrinkageTarget) else ShrinkageTarget(target)
    if t.n != n:
        raise InvalidInputError(f"target dimension {t.n} does not match N={n}")
    return t


def _check_ste_grid(grid: TuningGrid, n: int, l_count: int) -> None:
    lo = ste_admissible_low(n, l_count)
    if grid.rho_values[0] <= lo:
        raise InvalidInputError(
            f"grid starts at {grid.rho_values[0]:.6g}, outside the STE interval ({lo:.6g}, 1)")


def parabolic_vertex(x, f, idx: int) -> float:
    """Vertex of the parabola through the grid minimum and its two neighbours.

    Falls back to ``x[idx]`` at the grid ends. The vertex stays inside the
    bracket and is continuous when the minimum moves to a neighbour.
    """
    if idx == 0 or idx == len(x) - 1:
        return float(x[idx])
    x0, x1, x2 = x[idx - 1], x[idx], x[idx + 1]
    f0, f1, f2 = f[idx - 1], f[idx], f[idx + 1]
    num = (x1 - x0) ** 2 * (f1 - f2) - (x1 - x2) ** 2 * (f1 - f0)
    den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0)
    if not den != 0.0 or not np.isfinite(den):
        return float(x1)
    return float(np.clip(x1 - 0.5 * num / den, x0, x2))


def select_rho(grid: TuningGrid, costs, refine: bool = False) -> float:
    """Grid minimizer (first one on ties, i.e. the smaller rho), optionally refined."""
    idx = int(np.argmin(costs))
    if refine:
        return parabolic_vertex(grid.rho_values, costs, idx)
    return float(grid.rho_values[idx])


def _grid_search(samples, s, target, grid, kind, refine=False) -> TuningResult:
    l_count = as_data(samples).shape[1]
    alphas = grid.alphas(l_count)
    costs, fmin, fmax = cost_curve(samples, s, target, alphas, kind)
    rho = select_rho(grid, costs, refine)
    return TuningResult(rho, rho_to_alpha(rho, l_count), grid.rho_values.copy(),
                        costs, factor_range=(fmin, fmax))


def tune_s2cm_cv(samples, s, target, grid: TuningGrid | None = None) -> TuningResult:
    """Shrinkage factor of the shrinkage SCM minimizing the leave-one-out cost."""
    x = as_data(samples)
    return _grid_search(x, s, _as_target(target, x.shape[0]), grid or TuningGrid.uniform(), "cv")


def tune_s2cm_ae(samples, s, target, grid: TuningGrid | None = None) -> TuningResult:
    x = as_data(samples)
    return _grid_search(x, s, _as_target(target, x.shape[0]), grid or TuningGrid.uniform(), "ae")


def s2cm_estimate(samples, target, result: TuningResult) -> HermitianEstimate:
    """Shrinkage SCM at the tuned factor."""
    return shrink(scm(samples), target, result.rho_star)


def tune_ste_cv1(samples, s, target, grid: TuningGrid | None = None, r_plugin=None,
                 cfg: SteConfig | None = None):
    """Fixed plug-in leave-one-out tuning, then one Tyler solve at the chosen factor.

    The plug-in defaults to the (trace-``N``) normalized SCM.
    """
    y = as_data(samples)
    n, l_count = y.shape
    t = _as_target(target, n)
    grid = grid or TuningGrid.for_ste(n, l_count)
    _check_ste_grid(grid, n, l_count)
    plug = nscm(y) if r_plugin is None else r_plugin
    q = weighted_samples(y, trace_normalized(plug))
    result = _grid_search(q, s, t, grid, "cv")
    ste = ste_fixed_point(y, t, result.rho_star, cfg)
    result.converged = ste.converged
    result.iterations = ste.iterations
    result.distances = ste.distances.tolist()
    return result, ste.estimate


def _adaptive_ste(samples, s, target, grid, cfg, kind, refine):
    cfg = cfg or SteConfig()
    y = unit_columns(as_data(samples))
    n, l_count = y.shape
    t = _as_target(target, n)
    grid = grid or TuningGrid.for_ste(n, l_count)
    _check_ste_grid(grid, n, l_count)
    alphas = grid.alphas(l_count)
    sv = as_vector(s)

    r = np.eye(n, dtype=complex) if cfg.initial is None else as_matrix(cfg.initial)
    rho_hist, dists = [], []
    reused = 0
    costs = np.full(grid.count, np.nan)
    fmin, fmax = np.inf, -np.inf
    converged = False
    for _ in range(cfg.max_iter):
        if cfg.rescale:
            r = r * fixed_point_scale(r, t.matrix)
        q = weighted_samples(y, r)
        try:
            costs, lo, hi = cost_curve(q, sv, t, alphas, kind)
            rho = select_rho(grid, costs, refine)
            fmin, fmax = min(fmin, lo), max(fmax, hi)
        except NumericalFailureError:
            if not rho_hist:
                raise
            rho = rho_hist[-1]
            reused += 1
        rho_hist.append(rho)
        r_new = hermitize((1.0 - rho) / l_count * (q @ q.conj().T) + rho * t.matrix)
        dist = relative_distance(r_new, r)
        dists.append(dist)
        r = r_new
        if dist < cfg.delta:
            converged = True
            break
    result = TuningResult(rho_hist[-1], rho_to_alpha(rho_hist[-1], l_count),
                          grid.rho_values.copy(), costs,
                          converged=converged, iterations=len(dists), rho_history=rho_hist,
                          distances=dists, reused_rho=reused, factor_range=(fmin, fmax))
    return result, HermitianEstimate(r, Provenance.STE, rho_hist[-1])


def tune_ste_cv2(samples, s, target, grid: TuningGrid | None = None,
                 cfg: SteConfig | None = None, refine: bool = True):
    """Tyler iteration with the shrinkage factor re-tuned by leave-one-out at every step.

    With ``refine`` the grid minimizer is moved to the vertex of the parabola
    through it and its neighbours. The selected factor then depends
    continuously on the iterate; on the bare grid it can hop between two
    neighbours forever and the iteration never settles.
    """
    return _adaptive_ste(samples, s, target, grid, cfg, "cv", refine)


def tune_ste_ae(samples, s, target, grid: TuningGrid | None = None,
                cfg: SteConfig | None = None, refine: bool = True):
    """As :func:`tune_ste_cv2` with the asymptotic cost."""
    return _adaptive_ste(samples, s, target, grid, cfg, "ae", refine)


def oracle_s2cm(samples, s, target, r_true, grid: TuningGrid | None = None) -> TuningResult:
    """Grid minimizer of the true disturbance power of the shrinkage SCM."""
    x = as_data(samples)
    t = _as_target(target, x.shape[0])
    grid = grid or TuningGrid.uniform()
    sigma = scm(x)
    costs = np.array([j_metric(shrink(sigma, t, rho), r_true, s) for rho in grid.rho_values])
    idx = int(np.argmin(costs))
    return TuningResult(float(grid.rho_values[idx]), float(grid.alphas(x.shape[1])[idx]),
                        grid.rho_values.copy(), costs)


def oracle_ste(samples, s, target, r_true, grid: TuningGrid | None = None,
               cfg: SteConfig | None = None, return_estimates: bool = False):
    """Grid minimizer of the true disturbance power of the shrinkage Tyler estimator.

    Grid points are solved in increasing order, each warm-started from the
    previous solution; the fixed point is unique, so only the iteration
    count depends on the starting matrix. Points whose solve hits
    ``cfg.max_iter`` are skipped by the minimization; ``converged`` is False
    only when no point converged.
    """
    cfg = cfg or SteConfig()
    y = as_data(samples)
    n, l_count = y.shape
    t = _as_target(target, n)
    grid = grid or TuningGrid.for_ste(n, l_count)
    _check_ste_grid(grid, n, l_count)
    costs = np.empty(grid.count)
    ok = np.zeros(grid.count, dtype=bool)
    estimates = []
    total_iter = 0
    init = cfg.initial
    for k, rho in enumerate(grid.rho_values):
        res = ste_fixed_point(y, t, float(rho), replace(cfg, initial=init))
        total_iter += res.iterations
        ok[k] = res.converged
        costs[k] = j_metric(res.estimate, r_true, s)
        estimates.append(res.estimate)
        init = res.estimate
    # unconverged solves are not STE estimates and cannot be selected
    idx = int(np.argmin(np.where(ok, costs, np.inf))) if ok.any() else int(np.argmin(costs))
    result = TuningResult(float(grid.rho_values[idx]), float(grid.alphas(l_count)[idx]),
                          grid.rho_values.copy(), costs, converged=bool(ok[idx]),
                          iterations=total_iter)
    if return_estimates:
        return result, estimates
    return result, estimates[idx]
