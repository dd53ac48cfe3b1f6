"""Batched adaptive Gauss-Kronrod quadrature.

Many independent integrals are advanced together: every subinterval carries the
index of the integral it belongs to, so one vectorized integrand call serves the
whole batch.
"""
from __future__ import annotations

import numpy as np

from .errors import QuadratureError

# 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
_XK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980029535,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(21)
# Gauss nodes are the odd-indexed Kronrod nodes (xk[1], xk[3], ..., xk[9]).
for _j, _w in enumerate(_WG):
    _k = 2 * _j + 1
    GAUSS_WEIGHTS[_k] = _w
    GAUSS_WEIGHTS[20 - _k] = _w


def _rule(f, a, b, own):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    fx = np.asarray(f(x, np.broadcast_to(own[:, None], x.shape)), dtype=float)
    kron = half * (fx @ KRONROD_WEIGHTS)
    gauss = half * (fx @ GAUSS_WEIGHTS)
    absk = np.abs(half) * (np.abs(fx) @ KRONROD_WEIGHTS)
    return kron, np.abs(kron - gauss), absk


def integrate_batch(f, a, b, owner, n_owner, rtol=1e-10, atol=0.0, max_iter=60, raise_on_fail=True,
                    max_intervals=400_000):
    """Integrate ``f`` over a set of subintervals grouped by owner.

    ``f(x, own)`` receives equally shaped arrays of abscissae and owner indices.
    Integral ``k`` is the sum over the intervals with ``owner == k``; it is
    refined until its error estimate is below ``max(rtol * int|f|, atol[k])``.
    Refinement stops once ``max_intervals`` subintervals are live (noise-bound
    integrands would otherwise split forever).  Returns ``(values, errors)``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    own = np.asarray(owner, dtype=np.intp).ravel()
    atol = np.broadcast_to(np.asarray(atol, dtype=float), (n_owner,))
    if a.size == 0:
        return np.zeros(n_owner), np.zeros(n_owner)

    kron, err, absk = _rule(f, a, b, own)
    for _ in range(max_iter):
        est = np.bincount(own, kron, n_owner)
        tot_err = np.bincount(own, err, n_owner)
        scale = np.bincount(own, absk, n_owner)
        tol = np.maximum(rtol * scale, atol)
        bad = tot_err > tol
        if not bad.any():
            return est, tot_err
        count = np.bincount(own, minlength=n_owner)
        share = tol / np.maximum(count, 1)
        worst = np.zeros(n_owner)
        np.maximum.at(worst, own, err)
        split = bad[own] & ((err > share[own]) | (err >= worst[own]))
        # intervals already at floating-point resolution cannot be refined
        width = b - a
        split &= np.abs(width) > 64 * np.finfo(float).eps * np.maximum(np.abs(a), np.abs(b))
        if not split.any() or a.size + split.sum() > max_intervals:
            break
        mid = 0.5 * (a[split] + b[split])
        na = np.concatenate([a[split], mid])
        nb = np.concatenate([mid, b[split]])
        nown = np.concatenate([own[split], own[split]])
        k2, e2, ab2 = _rule(f, na, nb, nown)
        keep = ~split
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        own = np.concatenate([own[keep], nown])
        kron = np.concatenate([kron[keep], k2])
        err = np.concatenate([err[keep], e2])
        absk = np.concatenate([absk[keep], ab2])

    est = np.bincount(own, kron, n_owner)
    tot_err = np.bincount(own, err, n_owner)
    scale = np.bincount(own, absk, n_owner)
    tol = np.maximum(rtol * scale, atol)
    if raise_on_fail and np.any(tot_err > tol):
        failing = np.flatnonzero(tot_err > tol)
        raise QuadratureError(
            f"adaptive quadrature did not converge for {failing.size} of {n_owner} integrals",
            {"owners": failing.tolist()[:20], "error": tot_err[failing][:20].tolist(),
             "tolerance": tol[failing][:20].tolist(), "estimate": est[failing][:20].tolist()},
        )
    return est, tot_err


def integrate(f, points, rtol=1e-10, atol=0.0, max_iter=60):
    """Integrate a scalar-valued vectorized ``f(x)`` over consecutive ``points``."""
    pts = np.asarray(points, dtype=float)
    val, err = integrate_batch(lambda x, _o: f(x), pts[:-1], pts[1:], np.zeros(len(pts) - 1, dtype=np.intp), 1,
                               rtol=rtol, atol=atol, max_iter=max_iter)
    return float(val[0]), float(err[0])
