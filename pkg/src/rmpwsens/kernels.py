"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The numba versions are scalar loops compiled with ``njit``; the numpy versions
are vectorised over the unit axis. Both flavours are always importable as
``<name>_numpy`` and (when numba is installed) ``<name>_numba``; the plain
``<name>`` binding points at whichever the ``RMPWSENS_DISABLE_NUMBA`` flag
selects.

Bivariate normal probabilities follow Genz's BVNU scheme: Gauss-Legendre
quadrature of the Plackett/Drezner-Wesolowsky integral for |r| < 0.925 and a
series-corrected integral in the high-correlation regime.
"""
import math

import numpy as np
from scipy.special import ndtr

from ._accel import USE_NUMBA, jit

_TWOPI = 2.0 * math.pi
_SQRT_2PI = math.sqrt(_TWOPI)
_SQRT_PI = math.sqrt(math.pi)


def _half_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x[: n // 2].copy(), w[: n // 2].copy()


_GL6_X, _GL6_W = _half_legendre(6)
_GL12_X, _GL12_W = _half_legendre(12)
_GL20_X, _GL20_W = _half_legendre(20)


# ---------------------------------------------------------------------------
# bivariate normal upper-orthant probability P(A > h, B > k)
# ---------------------------------------------------------------------------

def _phi_scalar(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


_phi_scalar = jit(_phi_scalar) or _phi_scalar


def _bvnu_scalar(dh, dk, r, x6, w6, x12, w12, x20, w20):
    ar = abs(r)
    if ar < 0.3:
        xs_, ws_ = x6, w6
    elif ar < 0.75:
        xs_, ws_ = x12, w12
    else:
        xs_, ws_ = x20, w20
    lg = xs_.shape[0]
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(lg):
            sn = math.sin(asr * (1.0 - xs_[i]) / 2.0)
            bvn += ws_[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = math.sin(asr * (1.0 + xs_[i]) / 2.0)
            bvn += ws_[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * _TWOPI) + _phi_scalar(-h) * _phi_scalar(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            bvn = a * math.exp(-(bs / as_ + hk) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
            if hk > -160.0:
                b = math.sqrt(bs)
                bvn -= (
                    math.exp(-hk / 2.0) * _SQRT_2PI * _phi_scalar(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
                )
            a = a / 2.0
            for i in range(lg):
                for sgn in (-1.0, 1.0):
                    xs = (a * (sgn * xs_[i] + 1.0)) ** 2
                    rs = math.sqrt(1.0 - xs)
                    ex = -(bs / xs + hk) / 2.0
                    if ex > -100.0:
                        bvn += a * ws_[i] * math.exp(ex) * (
                            math.exp(-hk * xs / (2.0 * (1.0 + rs) ** 2)) / rs
                            - (1.0 + c * xs * (1.0 + d * xs))
                        )
            bvn = -bvn / _TWOPI
        if r > 0.0:
            bvn += _phi_scalar(-max(h, k))
        else:
            bvn = -bvn
            if k > h:
                if h < 0.0:
                    bvn += _phi_scalar(k) - _phi_scalar(h)
                else:
                    bvn += _phi_scalar(-h) - _phi_scalar(-k)
    return min(max(bvn, 0.0), 1.0)


def _bvn_cdf_loop(x, y, rho, out, x6, w6, x12, w12, x20, w20):
    for i in range(x.shape[0]):
        out[i] = _bvnu_call(-x[i], -y[i], rho[i], x6, w6, x12, w12, x20, w20)
    return out


def _bvnu_numpy(h, k, r):
    """Vectorised BVNU on 1-d float arrays of equal length."""
    out = np.empty_like(h)
    ar = np.abs(r)
    low = ar < 0.925
    for sel, (xs_, ws_) in (
        (ar < 0.3, (_GL6_X, _GL6_W)),
        ((ar >= 0.3) & (ar < 0.75), (_GL12_X, _GL12_W)),
        ((ar >= 0.75) & low, (_GL20_X, _GL20_W)),
    ):
        if not sel.any():
            continue
        hh, kk, rr = h[sel], k[sel], r[sel]
        hk = hh * kk
        hs = (hh * hh + kk * kk) / 2.0
        asr = np.arcsin(rr)
        acc = np.zeros_like(hh)
        for xi, wi in zip(xs_, ws_):
            sn = np.sin(asr * (1.0 - xi) / 2.0)
            acc += wi * np.exp((sn * hk - hs) / (1.0 - sn * sn))
            sn = np.sin(asr * (1.0 + xi) / 2.0)
            acc += wi * np.exp((sn * hk - hs) / (1.0 - sn * sn))
        out[sel] = acc * asr / (2.0 * _TWOPI) + ndtr(-hh) * ndtr(-kk)

    high = ~low
    if high.any():
        hh, kk, rr = h[high], k[high].copy(), r[high]
        neg = rr < 0.0
        kk[neg] = -kk[neg]
        hk = hh * kk
        bvn = np.zeros_like(hh)
        inner = np.abs(rr) < 1.0
        if inner.any():
            hi, ki, ri, hki = hh[inner], kk[inner], rr[inner], hk[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            v = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
            )
            b = np.sqrt(bs)
            corr = np.where(
                hki > -160.0,
                np.exp(-np.minimum(hki, 160.0) / 2.0) * _SQRT_2PI * ndtr(-b / a) * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0),
                0.0,
            )
            v = v - corr
            a = a / 2.0
            for xi, wi in zip(_GL20_X, _GL20_W):
                for sgn in (-1.0, 1.0):
                    xs = (a * (sgn * xi + 1.0)) ** 2
                    rs = np.sqrt(1.0 - xs)
                    ex = -(bs / xs + hki) / 2.0
                    ok = ex > -100.0
                    term = a * wi * np.exp(np.where(ok, ex, -100.0)) * (
                        np.exp(-hki * xs / (2.0 * (1.0 + rs) ** 2)) / rs
                        - (1.0 + c * xs * (1.0 + d * xs))
                    )
                    v = v + np.where(ok, term, 0.0)
            bvn[inner] = -v / _TWOPI
        pos = rr > 0.0
        bvn[pos] += ndtr(-np.maximum(hh[pos], kk[pos]))
        nz = ~pos
        bn = -bvn[nz]
        hn, kn = hh[nz], kk[nz]
        add = np.where(
            kn > hn,
            np.where(hn < 0.0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn)),
            0.0,
        )
        bvn[nz] = bn + add
        out[high] = bvn
    return np.clip(out, 0.0, 1.0)


def bvn_cdf_numpy(x, y, rho):
    x, y, rho = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(rho, dtype=float)
    )
    shape = x.shape
    res = _bvnu_numpy(-x.ravel(), -y.ravel(), rho.ravel().copy())
    return res.reshape(shape)


_bvnu_scalar_nb = jit(_bvnu_scalar)
_bvnu_call = _bvnu_scalar_nb or _bvnu_scalar

if _bvnu_scalar_nb is not None:
    _bvn_cdf_loop_nb = jit(_bvn_cdf_loop)

    def bvn_cdf_numba(x, y, rho):
        x, y, rho = np.broadcast_arrays(
            np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(rho, dtype=float)
        )
        shape = x.shape
        xf = np.ascontiguousarray(x.ravel())
        yf = np.ascontiguousarray(y.ravel())
        rf = np.ascontiguousarray(rho.ravel())
        out = np.empty(xf.shape[0])
        _bvn_cdf_loop_nb(xf, yf, rf, out, _GL6_X, _GL6_W, _GL12_X, _GL12_W, _GL20_X, _GL20_W)
        return out.reshape(shape)
else:
    bvn_cdf_numba = None


# ---------------------------------------------------------------------------
# quadrature-averaged RMPW weights for a continuous confounder
# ---------------------------------------------------------------------------

def integrated_weights_numpy(m, lin0, gamma, mean, sd, p_den, nodes, qweights):
    """Average the weight ratio over a normal law by Gauss-Hermite quadrature.

    For unit i the numerator propensity at confounder value z' is
    ``expit(lin0[i] + gamma * z')`` and z' runs over
    ``mean[i] + sqrt(2) * sd[i] * node``. Returns ``(wbar, bad)`` where
    ``bad`` is the index of the first unit hitting a degenerate propensity,
    or -1.
    """
    zq = mean[:, None] + math.sqrt(2.0) * sd[:, None] * nodes[None, :]
    eta = lin0[:, None] + gamma * zq
    p_num = 1.0 / (1.0 + np.exp(-eta))
    degenerate = (p_num < 1e-12) | (p_num > 1.0 - 1e-12)
    rows = np.flatnonzero(degenerate.any(axis=1))
    if rows.size:
        return np.full(m.shape[0], np.nan), int(rows[0])
    one = m[:, None] == 1
    ratio = np.where(one, p_num / p_den[:, None], (1.0 - p_num) / (1.0 - p_den[:, None]))
    return ratio @ (qweights / _SQRT_PI), -1


def _integrated_weights_loop(m, lin0, gamma, mean, sd, p_den, nodes, qweights, out):
    s2 = math.sqrt(2.0)
    for i in range(m.shape[0]):
        acc = 0.0
        for j in range(nodes.shape[0]):
            zq = mean[i] + s2 * sd[i] * nodes[j]
            p = 1.0 / (1.0 + math.exp(-(lin0[i] + gamma * zq)))
            if p < 1e-12 or p > 1.0 - 1e-12:
                return i
            if m[i] == 1:
                acc += qweights[j] * (p / p_den[i])
            else:
                acc += qweights[j] * ((1.0 - p) / (1.0 - p_den[i]))
        out[i] = acc / _SQRT_PI
    return -1


_integrated_weights_loop_nb = jit(_integrated_weights_loop)

if _integrated_weights_loop_nb is not None:

    def integrated_weights_numba(m, lin0, gamma, mean, sd, p_den, nodes, qweights):
        out = np.empty(m.shape[0])
        bad = _integrated_weights_loop_nb(
            np.ascontiguousarray(m, dtype=np.int64),
            np.ascontiguousarray(lin0, dtype=float),
            float(gamma),
            np.ascontiguousarray(mean, dtype=float),
            np.ascontiguousarray(sd, dtype=float),
            np.ascontiguousarray(p_den, dtype=float),
            np.ascontiguousarray(nodes, dtype=float),
            np.ascontiguousarray(qweights, dtype=float),
            out,
        )
        if bad >= 0:
            return np.full(m.shape[0], np.nan), int(bad)
        return out, -1
else:
    integrated_weights_numba = None


if USE_NUMBA:
    bvn_cdf = bvn_cdf_numba
    integrated_weights = integrated_weights_numba
else:
    bvn_cdf = bvn_cdf_numpy
    integrated_weights = integrated_weights_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
