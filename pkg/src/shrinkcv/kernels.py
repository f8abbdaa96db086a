"""Hot numeric kernels, each in a numba and a vectorized-numpy flavour.

Two loops dominate the runtime of every tuner:

* ``evd_grid`` evaluates the leave-one-out and asymptotic costs for a whole
  grid of loadings once the sample covariance has been diagonalized
  (``O(N_G * L * N)``);
* ``ste_iterate`` runs the shrinkage Tyler fixed-point recursion.

With ``rescale`` set, each iterate is first multiplied by the scalar that
puts it on the surface ``Tr(R^-1 T) = N``. Every fixed point of the
recursion lies on that surface, so the limit is unchanged, but the slow
scale mode (contraction close to 1 for small shrinkage) is removed.
With ``memory > 0`` the projected map is further accelerated by Anderson
mixing over the last ``memory`` residual differences; an extrapolated
iterate that is not positive definite is replaced by the plain step.
The reported distance is always the fixed-point residual
``||F(R) - R|| / ||R||``, which for ``memory == 0`` is the usual distance
between successive iterates.

The public names ``evd_grid`` / ``ste_iterate`` are bound to the jitted
version unless the JIT is disabled (see :mod:`shrinkcv._accel`). Both
flavours are always importable so the test-suite can cross-check them.
"""

import numpy as np
import scipy.linalg as sla

from ._accel import JIT_ENABLED, njit

# termination codes for ste_iterate
CONVERGED = 0
MAX_ITER = 1
BREAKDOWN = 2


# ---------------------------------------------------------------------------
# grid costs from an eigendecomposition of the sample covariance
# ---------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def evd_grid_numba(lam, vs, vx, alphas):
    n, l_count = vx.shape
    n_grid = alphas.shape[0]
    cv = np.empty(n_grid)
    ae = np.empty(n_grid)
    g_min = np.empty(n_grid)
    g_max = np.empty(n_grid)
    h = np.empty(n_grid)
    abs_vs2 = np.empty(n)
    for i in range(n):
        abs_vs2[i] = vs[i].real * vs[i].real + vs[i].imag * vs[i].imag
    d = np.empty(n)
    inv_l = 1.0 / l_count
    for k in range(n_grid):
        c_s = 0.0
        for i in range(n):
            d[i] = 1.0 / (lam[i] + alphas[k])
            c_s += abs_vs2[i] * d[i]
        acc_cv = 0.0
        acc_num = 0.0
        acc_b = 0.0
        lo = np.inf
        hi = -np.inf
        for l in range(l_count):
            a_re = 0.0
            a_im = 0.0
            b = 0.0
            for i in range(n):
                z = vx[i, l]
                w = vs[i].conjugate() * z
                a_re += w.real * d[i]
                a_im += w.imag * d[i]
                b += (z.real * z.real + z.imag * z.imag) * d[i]
            a2 = a_re * a_re + a_im * a_im
            g = 1.0 - b * inv_l + a2 * inv_l / c_s
            if g < lo:
                lo = g
            if g > hi:
                hi = g
            acc_cv += a2 / (g * g)
            acc_num += a2
            acc_b += b
        hk = 1.0 - acc_b * inv_l * inv_l
        cv[k] = acc_cv * inv_l / (c_s * c_s)
        ae[k] = acc_num * inv_l / (hk * hk * c_s * c_s)
        g_min[k] = lo
        g_max[k] = hi
        h[k] = hk
    return cv, ae, g_min, g_max, h


def evd_grid_numpy(lam, vs, vx, alphas):
    l_count = vx.shape[1]
    d = 1.0 / (lam[None, :] + alphas[:, None])  # (G, N)
    c_s = d @ np.abs(vs) ** 2  # (G,)
    a = d @ (vs.conj()[:, None] * vx)  # (G, L)
    b = d @ (np.abs(vx) ** 2)  # (G, L)
    a2 = np.abs(a) ** 2
    g = 1.0 - b / l_count + a2 / (l_count * c_s[:, None])
    cv = np.mean(a2 / g**2, axis=1) / c_s**2
    h = 1.0 - b.sum(axis=1) / l_count**2
    ae = np.mean(a2, axis=1) / (h**2 * c_s**2)
    return cv, ae, g.min(axis=1), g.max(axis=1), h


# ---------------------------------------------------------------------------
# shrinkage Tyler fixed-point recursion
# ---------------------------------------------------------------------------
@njit(cache=True, nogil=True)
def _tyler_step_numba(y, target, rho, r):
    # returns (image, ok); ok is False when a quadratic form is not positive
    n, l_count = y.shape
    z = np.linalg.solve(r, y)
    w = np.empty((n, l_count), dtype=np.complex128)
    for l in range(l_count):
        quad = 0.0
        for i in range(n):
            quad += (y[i, l].conjugate() * z[i, l]).real
        quad /= n
        if not quad > 0.0 or not np.isfinite(quad):
            return r, False
        scale = 1.0 / np.sqrt(quad)
        for i in range(n):
            w[i, l] = y[i, l] * scale
    f = (1.0 - rho) / l_count * (w @ w.conj().T) + rho * target
    return 0.5 * (f + f.conj().T), True


@njit(cache=True, nogil=True)
def _anderson_weights(d_g, g, count):
    # least-squares mixing weights over the real inner product Re<a, b>
    a = np.empty((count, count))
    rhs = np.empty(count)
    for i in range(count):
        rhs[i] = np.vdot(d_g[i], g).real
        for j in range(count):
            a[i, j] = np.vdot(d_g[i], d_g[j]).real
    ridge = 1e-12 * max(np.trace(a), 1e-300)
    for i in range(count):
        a[i, i] += ridge
    return np.linalg.solve(a, rhs)


@njit(cache=True, nogil=True)
def ste_iterate_numba(y, target, rho, r0, delta, max_iter, rescale, memory):
    n = y.shape[0]
    nn = n * n
    distances = np.empty(max_iter)
    d_g = np.zeros((max(memory, 1), nn), dtype=np.complex128)
    d_f = np.zeros((max(memory, 1), nn), dtype=np.complex128)
    g_prev = np.zeros(nn, dtype=np.complex128)
    f_prev = r0.copy()
    count = 0
    head = 0
    have_prev = False
    r = r0.copy()
    status = MAX_ITER
    k = 0
    while k < max_iter:
        if have_prev and count > 0 and np.linalg.eigvalsh(r)[0] <= 0.0:
            # extrapolation left the cone: take the plain step, forget history
            r = f_prev.copy()
            count = 0
            have_prev = False
        if rescale:
            r = r * (np.trace(np.linalg.solve(r, target)).real / n)
        f, ok = _tyler_step_numba(y, target, rho, r)
        if not ok:
            return r, k, np.nan, distances[:k], BREAKDOWN
        g_mat = f - r
        dist = np.linalg.norm(g_mat) / np.linalg.norm(r)
        distances[k] = dist
        k += 1
        if dist < delta:
            r = f
            status = CONVERGED
            break
        g = g_mat.ravel().copy()
        fv = f.ravel().copy()
        nxt = f
        if memory > 0:
            if have_prev:
                d_g[head] = g - g_prev
                d_f[head] = fv - f_prev.ravel()
                head = (head + 1) % memory
                count = min(count + 1, memory)
                gamma = _anderson_weights(d_g, g, count)
                step = fv.copy()
                for i in range(count):
                    step -= gamma[i] * d_f[i]
                m = step.reshape((n, n))
                nxt = 0.5 * (m + m.conj().T)
            g_prev = g
            f_prev = f.copy()
            have_prev = True
        r = nxt
    if k == 0:
        return r, 0, np.nan, distances[:0], status
    return r, k, distances[k - 1], distances[:k], status


def _tyler_step_numpy(y, target, rho, fac):
    n, l_count = y.shape
    z = sla.cho_solve(fac, y, check_finite=False)
    quad = np.einsum("il,il->l", y.conj(), z).real / n
    if not np.all(quad > 0.0) or not np.all(np.isfinite(quad)):
        return None
    w = y / np.sqrt(quad)
    f = (1.0 - rho) / l_count * (w @ w.conj().T) + rho * target
    return 0.5 * (f + f.conj().T)


def ste_iterate_numpy(y, target, rho, r0, delta, max_iter, rescale, memory):
    n = y.shape[0]
    distances = []
    d_g, d_f = [], []
    g_prev = f_prev = None
    r = r0.copy()
    status = MAX_ITER
    while len(distances) < max_iter:
        try:
            fac = sla.cho_factor(r, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            if not d_g:
                return r, len(distances), np.nan, np.asarray(distances), BREAKDOWN
            r, d_g, d_f, g_prev = f_prev.copy(), [], [], None
            fac = sla.cho_factor(r, lower=True, check_finite=False)
        if rescale:
            c = np.trace(sla.cho_solve(fac, target, check_finite=False)).real / n
            r = r * c
            fac = (fac[0] * np.sqrt(c), fac[1])
        f = _tyler_step_numpy(y, target, rho, fac)
        if f is None:
            return r, len(distances), np.nan, np.asarray(distances), BREAKDOWN
        g = f - r
        dist = np.linalg.norm(g) / np.linalg.norm(r)
        distances.append(dist)
        if dist < delta:
            r = f
            status = CONVERGED
            break
        nxt = f
        if memory > 0:
            if g_prev is not None:
                d_g = (d_g + [(g - g_prev).ravel()])[-memory:]
                d_f = (d_f + [(f - f_prev).ravel()])[-memory:]
                dg = np.array(d_g)
                a = (dg.conj() @ dg.T).real
                a[np.diag_indices_from(a)] += 1e-12 * max(np.trace(a), 1e-300)
                gamma = np.linalg.solve(a, (dg.conj() @ g.ravel()).real)
                m = (f.ravel() - gamma @ np.array(d_f)).reshape(n, n)
                nxt = 0.5 * (m + m.conj().T)
            g_prev, f_prev = g, f
        r = nxt
    final = distances[-1] if distances else np.nan
    return r, len(distances), final, np.asarray(distances), status


if JIT_ENABLED:
    evd_grid = evd_grid_numba
    ste_iterate = ste_iterate_numba
else:
    evd_grid = evd_grid_numpy
    ste_iterate = ste_iterate_numpy
