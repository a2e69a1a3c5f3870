"""JIT-compiled hot-path kernels for superposed field evaluation.

The formulas are literal transcriptions of the verified numpy closed forms in
field.py (rectangle four-corner arctangent derivatives; polygon per-edge
form). Results are in geometry units (1/um, 1/um^2); callers apply SI scaling.
Falls back to the numpy implementations when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard speedup, soft dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def rect_EH_weighted(x1, y1, x2, y2, w, pts, grad, hess):
    """Accumulate weighted rectangle potential gradients and Hessians."""
    n_pts = pts.shape[0]
    n_rect = x1.shape[0]
    for i in range(n_pts):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        z2 = z * z
        gx = 0.0
        gy = 0.0
        gz = 0.0
        hxx = 0.0
        hyy = 0.0
        hzz = 0.0
        hxy = 0.0
        hxz = 0.0
        hyz = 0.0
        for r in range(n_rect):
            wr = w[r]
            if wr == 0.0:
                continue
            a_lo = x1[r] - x
            a_hi = x2[r] - x
            b_lo = y1[r] - y
            b_hi = y2[r] - y
            for corner in range(4):
                if corner == 0:
                    a = a_hi
                    b = b_hi
                    s = wr
                elif corner == 1:
                    a = a_lo
                    b = b_hi
                    s = -wr
                elif corner == 2:
                    a = a_hi
                    b = b_lo
                    s = -wr
                else:
                    a = a_lo
                    b = b_lo
                    s = wr
                a2 = a * a
                b2 = b * b
                R2 = a2 + b2 + z2
                R = np.sqrt(R2)
                R3 = R * R2
                az = a2 + z2
                bz = b2 + z2
                # first derivatives of t(a, b, z)
                ta = z * b / (R * az)
                tb = z * a / (R * bz)
                tz = -a * b * (R2 + z2) / (R * az * bz)
                gx -= s * ta
                gy -= s * tb
                gz += s * tz
                # second derivatives
                taa = -a * b * z * (az + 2.0 * R2) / (R3 * az * az)
                tbb = -a * b * z * (bz + 2.0 * R2) / (R3 * bz * bz)
                tab = z / R3
                ab2 = a2 + b2
                taz = b * (ab2 * az - 2.0 * z2 * R2) / (R3 * az * az)
                tbz = a * (ab2 * bz - 2.0 * z2 * R2) / (R3 * bz * bz)
                N = -a * b * (R2 + z2)
                D = R * az * bz
                Nz = -4.0 * a * b * z
                Dz = z * (az * bz / R + 2.0 * R * bz + 2.0 * R * az)
                tzz = (Nz * D - N * Dz) / (D * D)
                hxx += s * taa
                hyy += s * tbb
                hzz += s * tzz
                hxy += s * tab
                hxz -= s * taz
                hyz -= s * tbz
        grad[i, 0] += gx / TWO_PI
        grad[i, 1] += gy / TWO_PI
        grad[i, 2] += gz / TWO_PI
        hess[i, 0, 0] += hxx / TWO_PI
        hess[i, 1, 1] += hyy / TWO_PI
        hess[i, 2, 2] += hzz / TWO_PI
        hess[i, 0, 1] += hxy / TWO_PI
        hess[i, 1, 0] += hxy / TWO_PI
        hess[i, 0, 2] += hxz / TWO_PI
        hess[i, 2, 0] += hxz / TWO_PI
        hess[i, 1, 2] += hyz / TWO_PI
        hess[i, 2, 1] += hyz / TWO_PI


@njit(cache=True)
def poly_EH_weighted(exo, eyo, ext, eyt, we, pts, grad, hess):
    """Accumulate weighted polygon-edge potential gradients and Hessians."""
    n_pts = pts.shape[0]
    n_edge = exo.shape[0]
    inv_pi = 1.0 / np.pi
    for i in range(n_pts):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        z2 = z * z
        gx = 0.0
        gy = 0.0
        gz = 0.0
        hxx = 0.0
        hxy = 0.0
        hxz = 0.0
        hyx = 0.0
        hyy = 0.0
        hyz = 0.0
        hzx = 0.0
        hzy = 0.0
        hzz = 0.0
        for e in range(n_edge):
            w = we[e]
            if w == 0.0:
                continue
            xo = exo[e]
            yo = eyo[e]
            xt = ext[e]
            yt = eyt[e]
            dox = x - xo
            doy = y - yo
            dtx = x - xt
            dty = y - yt
            ro = np.sqrt(dox * dox + doy * doy + z2)
            rt = np.sqrt(dtx * dtx + dty * dty + z2)
            l2 = (xt - xo) * (xt - xo) + (yt - yo) * (yt - yo)
            S = ro + rt
            D = ro * rt * (S * S - l2)
            n = S / D
            dx = xt - xo
            dy = yo - yt
            c = xt * yo - xo * yt
            q = c - dx * y - dy * x
            gx += w * dy * z * n
            gy += w * dx * z * n
            gz += w * q * n
            # dn/du
            for k in range(3):
                if k == 0:
                    ro_u = dox / ro
                    rt_u = dtx / rt
                elif k == 1:
                    ro_u = doy / ro
                    rt_u = dty / rt
                else:
                    ro_u = z / ro
                    rt_u = z / rt
                S_u = ro_u + rt_u
                D_u = (ro_u * rt + ro * rt_u) * (S * S - l2) + ro * rt * 2.0 * S * S_u
                n_u = (S_u * D - S * D_u) / (D * D)
                if k == 0:
                    hxx += w * dy * z * n_u
                    hyx += w * dx * z * n_u
                    hzx += w * (-dy * n + q * n_u)
                elif k == 1:
                    hxy += w * dy * z * n_u
                    hyy += w * dx * z * n_u
                    hzy += w * (-dx * n + q * n_u)
                else:
                    hxz += w * dy * (n + z * n_u)
                    hyz += w * dx * (n + z * n_u)
                    hzz += w * q * n_u
        grad[i, 0] += gx * inv_pi
        grad[i, 1] += gy * inv_pi
        grad[i, 2] += gz * inv_pi
        hess[i, 0, 0] += hxx * inv_pi
        hess[i, 0, 1] += hxy * inv_pi
        hess[i, 0, 2] += hxz * inv_pi
        hess[i, 1, 0] += hyx * inv_pi
        hess[i, 1, 1] += hyy * inv_pi
        hess[i, 1, 2] += hyz * inv_pi
        hess[i, 2, 0] += hzx * inv_pi
        hess[i, 2, 1] += hzy * inv_pi
        hess[i, 2, 2] += hzz * inv_pi
