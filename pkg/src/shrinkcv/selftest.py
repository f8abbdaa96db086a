"""Quick equivalence checks of the fast paths against brute-force evaluation.

Run through ``shrinkcv selftest``. Every check works on small seeded
instances and prints one ``PASS``/``FAIL`` line.
"""

from __future__ import annotations

import sys
import time
from typing import Callable

import numpy as np

from . import kernels
from .beamforming import mvdr_weights, sdr_loss
from .estimators import ShrinkageTarget, nscm, ste_fixed_point, tyler_map, unit_columns
from .scenarios import complex_normal
from .tuning import (ae_cost_gaussian, loocv_cost_gaussian, loocv_cost_gaussian_evd,
                     ste_ae_cost, ste_cv2_cost, weighted_samples)


def _instance(seed: int, n: int = 6, l_count: int = 9):
    rng = np.random.default_rng(seed)
    x = complex_normal(rng, (n, l_count))
    s = np.exp(2j * np.pi * rng.random(n))
    b = complex_normal(rng, (n, n))
    t = b @ b.conj().T / n + np.eye(n)
    return x, s, t


def brute_loocv(x, s, t, alpha) -> float:
    """Average held-out MVDR output power with every fold refactorized."""
    n, l_count = x.shape
    total = 0.0
    for l in range(l_count):
        keep = np.delete(x, l, axis=1)
        r_l = keep @ keep.conj().T / l_count + alpha * t
        z = np.linalg.solve(r_l, s)
        total += abs(np.vdot(z, x[:, l])) ** 2 / abs(np.vdot(s, z)) ** 2
    return total / l_count


def brute_ae(x, s, t, alpha) -> float:
    n, l_count = x.shape
    sigma = x @ x.conj().T / l_count
    r_inv = np.linalg.inv(sigma + alpha * t)
    h = 1.0 - np.trace(sigma @ r_inv).real / l_count
    num = (s.conj() @ r_inv @ sigma @ r_inv @ s).real
    return num / (h**2 * (s.conj() @ r_inv @ s).real ** 2)


def _rel(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))))


def check_loocv() -> str:
    worst = 0.0
    for seed in range(10):
        x, s, t = _instance(seed)
        for tt in (np.eye(x.shape[0]), t):
            for alpha in (0.05, 0.7, 4.0):
                worst = max(worst, _rel(loocv_cost_gaussian(x, s, tt, alpha),
                                        brute_loocv(x, s, tt, alpha)))
    assert worst < 1e-10, worst
    return f"max rel err {worst:.1e}"


def check_ae() -> str:
    worst = 0.0
    for seed in range(10):
        x, s, t = _instance(seed)
        for alpha in (0.05, 0.7, 4.0):
            worst = max(worst, _rel(ae_cost_gaussian(x, s, t, alpha), brute_ae(x, s, t, alpha)))
    assert worst < 1e-10, worst
    return f"max rel err {worst:.1e}"


def check_evd() -> str:
    worst = 0.0
    alphas = np.linspace(0.01, 5.0, 25)
    for seed in range(5):
        x, s, _ = _instance(seed, 12, 12)
        fast = loocv_cost_gaussian_evd(x, s, alphas)
        ref = [loocv_cost_gaussian(x, s, np.eye(12), a) for a in alphas]
        worst = max(worst, _rel(fast, ref))
    assert worst < 1e-8, worst
    return f"max rel err {worst:.1e}"


def check_weighted() -> str:
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        x, s, t = _instance(seed)
        y = x * rng.gamma(1.5, 1.0, x.shape[1])
        r = nscm(y).matrix + 0.1 * np.eye(x.shape[0])
        q = weighted_samples(y, r)
        worst = max(worst, _rel(ste_cv2_cost(y, s, t, 0.3, r), brute_loocv(q, s, t, 0.3)))
        worst = max(worst, _rel(ste_ae_cost(y, s, t, 0.3, r), brute_ae(q, s, t, 0.3)))
    assert worst < 1e-10, worst
    return f"max rel err {worst:.1e}"


def check_kernels() -> str:
    x, s, _ = _instance(3, 10, 14)
    lam, v = np.linalg.eigh(x @ x.conj().T / x.shape[1])
    vs = np.ascontiguousarray(v.conj().T @ s)
    vx = np.ascontiguousarray(v.conj().T @ x)
    alphas = np.linspace(0.01, 3.0, 30)
    a = kernels.evd_grid_numba(lam, vs, vx, alphas)
    b = kernels.evd_grid_numpy(lam, vs, vx, alphas)
    worst = max(_rel(p, q) for p, q in zip(a, b))
    u = np.ascontiguousarray(unit_columns(x))
    eye = np.eye(10, dtype=complex)
    for memory in (0, 1):
        r1 = kernels.ste_iterate_numba(u, eye, 0.4, eye, 1e-10, 200, True, memory)[0]
        r2 = kernels.ste_iterate_numpy(u, eye, 0.4, eye, 1e-10, 200, True, memory)[0]
        worst = max(worst, float(np.linalg.norm(r1 - r2) / np.linalg.norm(r2)))
    assert worst < 1e-9, worst
    return f"numba vs numpy max rel diff {worst:.1e}"


def check_ste() -> str:
    x, _, _ = _instance(7, 8, 12)
    t = ShrinkageTarget.identity(8)
    res = ste_fixed_point(x, t, 0.3)
    assert res.converged
    u = unit_columns(x)
    resid = np.linalg.norm(tyler_map(u, res.estimate.matrix, t.matrix, 0.3)
                           - res.estimate.matrix) / np.linalg.norm(res.estimate.matrix)
    assert resid < 1e-5, resid
    return f"{res.iterations} iterations, residual {resid:.1e}"


def check_mvdr() -> str:
    x, s, t = _instance(11)
    w = mvdr_weights(t, s).w
    gap = abs(np.vdot(w, s) - 1.0)
    loss = sdr_loss(3.0 * t, t, s)
    assert gap < 1e-9 and abs(loss - 1.0) < 1e-10, (gap, loss)
    return f"|w^H s - 1| = {gap:.1e}, loss at 3R = {loss!r}"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("leave-one-out fast form vs per-fold refactorization", check_loocv),
    ("asymptotic cost vs explicit inverse", check_ae),
    ("eigendecomposition path vs Cholesky path", check_evd),
    ("weighted-sample costs vs explicit weighting", check_weighted),
    ("compiled kernels vs numpy kernels", check_kernels),
    ("Tyler fixed point residual", check_ste),
    ("MVDR distortionless and scale-invariant loss", check_mvdr),
]


def run(stream=None) -> bool:
    """Run every check; returns True when all pass."""
    out = stream or sys.stdout
    ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = fn()
            status = "PASS"
        except Exception as exc:  # report and keep going
            detail = f"{type(exc).__name__}: {exc}"
            status = "FAIL"
            ok = False
        print(f"{status}  {name}  ({detail}; {time.perf_counter() - t0:.2f}s)", file=out)
    print("selftest " + ("passed" if ok else "FAILED"), file=out)
    return ok
