"""Nonlocal dissipation functionals of a modulus of continuity.

``d_alpha`` evaluates

    c_alpha * ( int_0^{xi/2}   [w(xi+2e) + w(xi-2e) - 2w(xi)] e^{-1-2a} de
              + int_{xi/2}^inf [w(2e+xi) - w(2e-xi) - 2w(xi)] e^{-1-2a} de )

which is nonpositive for concave w.  Both integrands are evaluated pointwise
without splitting off closed-form pieces wherever possible, so the sign
survives rounding.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError, ValidationError
from .fields import BreakthroughPair, ScalarField
from .moduli import Modulus
from .quadrature import integrate_batch


@dataclass(frozen=True)
class QuadratureConfig:
    c_alpha: float = 1.0
    rel_tol: float = 1e-8
    eta_split: float = 1e-3
    # Power-law tails are integrated numerically out to tail_start * max(xi, last
    # breakpoint) and asymptotically beyond; constant and linear tails are exact.
    tail_start: float = 1e12

    def __post_init__(self):
        if not self.c_alpha > 0:
            raise ValidationError("c_alpha must be positive")
        if not 0 < self.rel_tol < 1e-2:
            raise ValidationError("rel_tol must lie in (0, 1e-2)")
        if not 0 < self.eta_split < 0.5:
            raise ValidationError("eta_split must lie in (0, 1/2)")
        if not self.tail_start > 1:
            raise ValidationError("tail_start must exceed 1")


DEFAULT_CONFIG = QuadratureConfig()


def fractional_laplacian_constant(alpha, d=1):
    """Constant C with (-Delta)^a f(x) = C p.v. int (f(x) - f(y)) |x-y|^{-d-2a} dy."""
    return 4**alpha * math.gamma(d / 2 + alpha) * alpha / (math.pi ** (d / 2) * math.gamma(1 - alpha))


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _piecewise(omega):
    m = omega.as_piecewise()
    rep = m.report
    if not rep.ok:
        raise ValidationError(f"modulus is not admissible: {rep.violation} at xi={rep.location}")
    return m


def _kink_geometry(bp, xi):
    """Snap xi onto nearby breakpoints; return (xi, distance to next other breakpoint)."""
    if bp.size == 0:
        return xi, np.full(xi.shape, np.inf)
    ext = np.concatenate([[-np.inf], bp, [np.inf]])
    i = np.searchsorted(bp, xi, side="left") + 1  # ext[i-1] < xi <= ext[i]
    near_hi = np.abs(ext[i] - xi) <= 1e-13 * xi
    near_lo = np.abs(xi - ext[i - 1]) <= 1e-13 * xi
    xi = np.where(near_hi, ext[i], np.where(near_lo, ext[i - 1], xi))
    at_hi = xi == ext[i]
    at_lo = xi == ext[i - 1]
    lo = np.where(at_lo, ext[np.maximum(i - 2, 0)], ext[i - 1])
    hi = np.where(at_hi, ext[np.minimum(i + 1, len(ext) - 1)], ext[i])
    return xi, np.minimum(xi - lo, hi - xi)


def _geometric(lo, hi, ratio):
    if hi <= lo:
        return np.array([lo])
    n = max(1, int(math.ceil(math.log(hi / lo) / math.log(ratio))))
    return np.geomspace(lo, hi, n + 1)


_RATIO = 8.0


def d_alpha_split(omega: Modulus, alpha, xi, cfg: QuadratureConfig = DEFAULT_CONFIG):
    """Return the near (|eta| < xi/2) and far contributions to D_alpha separately."""
    _check_alpha(alpha)
    m = _piecewise(omega)
    x_in = np.asarray(xi, dtype=float)
    if np.any(~(x_in > 0)):
        raise DomainError("xi must be positive")
    shape = x_in.shape
    bp = np.asarray(m.breakpoints, dtype=float)
    xs, dist = _kink_geometry(bp, x_in.ravel().copy())
    n = xs.size
    two_a = 2.0 * alpha
    w_xi = m.value(xs)

    # near part: Taylor expansion on [0, eps], quadrature on [eps, xi/2]
    eps = np.minimum(cfg.eta_split * xs, 0.5 * dist)
    dl = [m.deriv(xs, k, "left") for k in (1, 2, 3, 4)]
    dr = [m.deriv(xs, k, "right") for k in (1, 2, 3, 4)]
    jump = dr[0] - dl[0]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        taylor = (2 * (dr[1] + dl[1]) * eps ** (2 - two_a) / (2 - two_a)
                  + 4 / 3 * (dr[2] - dl[2]) * eps ** (3 - two_a) / (3 - two_a)
                  + 2 / 3 * (dr[3] + dl[3]) * eps ** (4 - two_a) / (4 - two_a))
        if alpha < 0.5:
            taylor = taylor + 2 * jump * eps ** (1 - two_a) / (1 - two_a)
    divergent = (jump < 0) & (alpha >= 0.5)

    a_list, b_list, o_list = [], [], []
    for k in range(n):
        x = xs[k]
        pts = [eps[k], *(_geometric(eps[k], 0.25 * x, _RATIO)[1:])]
        gaps = 0.25 * x / _RATIO ** np.arange(1, 14)
        pts.extend(0.5 * x - gaps[gaps > 1e-12 * x])
        pts.append(0.5 * x)
        kinks = np.abs(bp - x) / 2
        pts.extend(kinks[(kinks > eps[k]) & (kinks < 0.5 * x)])
        pts = np.unique(np.asarray(pts))
        a_list.append(pts[:-1])
        b_list.append(pts[1:])
        o_list.append(np.full(len(pts) - 1, k))

    def near(eta, own):
        x = xs[own]
        bracket = m.value(x + 2 * eta) + m.value(np.maximum(x - 2 * eta, 0.0)) - 2 * w_xi[own]
        return bracket * eta ** (-1 - two_a)

    scale = np.maximum(w_xi, 1e-300) * xs**-two_a
    atol = 1e-3 * cfg.rel_tol * scale
    near_q, _ = integrate_batch(near, np.concatenate(a_list), np.concatenate(b_list),
                                np.concatenate(o_list), n, rtol=cfg.rel_tol, atol=atol)

    # far part in s = 2*eta - xi: int_0^inf [w(s+2xi) - w(s) - 2w(xi)] ((s+xi)/2)^{-1-2a} ds/2
    last = m.pieces[-1]
    power_tail = not last.is_linear
    R = m.last_breakpoint
    tail = np.zeros(n)
    a_list, b_list, o_list = [], [], []
    for k in range(n):
        x = xs[k]
        if power_tail:
            upper = cfg.tail_start * max(x, R)
        else:
            upper = R
        if upper > 0:
            lo_pts = x * _RATIO ** np.arange(-17.0, 0.0)
            pts = [0.0, *lo_pts[lo_pts < upper], *(_geometric(x, upper, _RATIO) if upper > x else [upper])]
            extra = np.concatenate([bp, bp - 2 * x])
            pts.extend(extra[(extra > 0) & (extra < upper)])
            pts.append(upper)
            pts = np.unique(np.asarray(pts))
            a_list.append(pts[:-1])
            b_list.append(pts[1:])
            o_list.append(np.full(len(pts) - 1, k))
        if power_tail:
            # -2w(xi) exactly plus the leading asymptotics of w(s+2xi) - w(s)
            S = upper
            tail[k] = (-2 * w_xi[k] * ((S + x) / 2) ** -two_a / two_a
                       + 2**two_a * 2 * x * last.coef * last.expo
                       * S ** (last.expo - 1 - two_a) / (1 + two_a - last.expo))
        else:
            slope = last.coef if last.expo == 1.0 else 0.0
            numer = 2 * x * slope - 2 * w_xi[k]
            tail[k] = numer * ((upper + x) / 2) ** -two_a / two_a

    def far(s, own):
        x = xs[own]
        numer = m.increment(s, 2 * x) - 2 * w_xi[own]
        return numer * ((s + x) / 2) ** (-1 - two_a) / 2

    if a_list:
        far_q, _ = integrate_batch(far, np.concatenate(a_list), np.concatenate(b_list),
                                   np.concatenate(o_list), n, rtol=cfg.rel_tol, atol=atol)
    else:
        far_q = np.zeros(n)

    near_total = cfg.c_alpha * np.where(divergent, -np.inf, taylor + near_q)
    far_total = cfg.c_alpha * (far_q + tail)
    if shape == ():
        return float(near_total[0]), float(far_total[0])
    return near_total.reshape(shape), far_total.reshape(shape)


def d_alpha(omega: Modulus, alpha, xi, cfg: QuadratureConfig = DEFAULT_CONFIG):
    """Nonlocal dissipation D_alpha(xi) of a concave modulus (vectorized in xi)."""
    near, far = d_alpha_split(omega, alpha, xi, cfg)
    return near + far


class TailBound(NamedTuple):
    value: float
    degenerate: bool


def d_alpha_tail_bound(omega: Modulus, alpha, xi, cfg: QuadratureConfig = DEFAULT_CONFIG) -> TailBound:
    """Upper bound -c * 2 w(0+) (xi/2)^{-2a} / (2a) for the far part of D_alpha.

    ``degenerate`` is set when w(0+) = 0 and the bound carries no information.
    """
    _check_alpha(alpha)
    if not xi > 0:
        raise DomainError("xi must be positive")
    w0 = omega.at_zero()
    if w0 <= 0:
        return TailBound(0.0, True)
    return TailBound(-cfg.c_alpha * 2 * w0 * (xi / 2) ** (-2 * alpha) / (2 * alpha), False)


# ---------------------------------------------------------------------------
# perpendicular dissipation


def _gauss_panels(lo, hi, panels, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def d_perp(theta, pair: BreakthroughPair, omega: Modulus, alpha, c=0.125,
           cfg: QuadratureConfig = DEFAULT_CONFIG, prefactor=1.0, core=None, max_level=5):
    """Perpendicular dissipation bound around a pair in a 2D field.

    The pair is rotated to ``(+-xi/2, 0)``; the window ``|eta - xi/2| <= c xi``,
    ``0 <= nu <= c xi`` is integrated in polar coordinates about ``(xi/2, 0)``
    with a disc of radius ``core`` removed.  ``core`` defaults to the grid
    spacing for a ScalarField and to ``1e-2 c xi`` for a callable; fields
    are interpolated bilinearly, so resolving the window is the caller's job.

    ``theta`` is a 2D ScalarField or a callable ``f(X, Y)`` of physical coordinates.
    """
    _check_alpha(alpha)
    if not 0 < c < 0.25:
        raise DomainError("window fraction c must lie in (0, 1/4)")
    if isinstance(theta, ScalarField):
        if theta.d != 2:
            raise DomainError("d_perp needs a 2D field")
        sample = theta.interpolate
        default_core = theta.h
    elif callable(theta):
        sample = theta
        default_core = None
    else:
        raise TypeError("theta must be a ScalarField or a callable")
    if len(pair.x) != 2:
        raise DomainError("d_perp needs a pair of 2D points")
    xi = pair.xi
    rho = core if core is not None else (default_core if default_core is not None else 1e-2 * c * xi)
    half_width = c * xi
    if not 0 < rho < half_width:
        raise DomainError(f"core radius {rho} must lie in (0, c*xi={half_width})")

    mid = np.asarray(pair.midpoint)
    el = np.asarray(pair.direction)
    perp = np.array([-el[1], el[0]])

    def at(eta, nu):
        X = mid[0] + eta * el[0] + nu * perp[0]
        Y = mid[1] + eta * el[1] + nu * perp[1]
        return sample(X, Y)

    two_a = 2.0 * alpha
    sectors = [(0.0, math.pi / 4), (math.pi / 4, 3 * math.pi / 4), (3 * math.pi / 4, math.pi)]
    span = math.log(half_width / rho) + 0.5 * math.log(2)

    def evaluate(level):
        total = 0.0
        scale = 0.0
        for lo, hi in sectors:
            phi, wphi = _gauss_panels(lo, hi, 2**level)
            rmax = half_width / np.maximum(np.abs(np.cos(phi)), np.sin(phi))
            u, wu = _gauss_panels(0.0, 1.0, 2**level * max(2, int(math.ceil(span))))
            # t = log r runs from log(rho) to log(rmax(phi)); u in [0, 1] parametrizes it
            tlo = math.log(rho)
            thi = np.log(rmax)
            t = tlo + (thi - tlo)[:, None] * u[None, :]
            jac = (thi - tlo)[:, None] * wu[None, :] * wphi[:, None]
            r = np.exp(t)
            du = r * np.cos(phi)[:, None]
            nu = r * np.sin(phi)[:, None]
            eta = 0.5 * xi + du
            w2 = 2 * omega.value(2 * eta)
            vals = (at(eta, nu), at(-eta, nu), at(eta, -nu), at(-eta, -nu))
            numer = w2 - vals[0] + vals[1] - vals[2] + vals[3]
            weight = r**-two_a * jac
            total += float(np.sum(numer * weight))
            # term-level scale, so exact cancellation in the numerator still converges
            scale += float(np.sum((np.abs(w2) + sum(np.abs(v) for v in vals)) * weight))
        return total, scale

    prev, _ = evaluate(0)
    for level in range(1, max_level + 1):
        cur, scale = evaluate(level)
        if abs(cur - prev) <= cfg.rel_tol * max(scale, 1e-300) or scale == 0.0:
            return -prefactor * cur
        prev = cur
    msg = (f"d_perp did not reach rel_tol={cfg.rel_tol}: last change {abs(cur - prev):.3g} "
           f"against integral scale {scale:.3g}")
    if isinstance(theta, ScalarField):
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return -prefactor * cur
    raise QuadratureError(msg, {"change": abs(cur - prev), "scale": scale})


def d_perp_core_closed_form(omega_const, alpha, xi, c=0.125, core=None, prefactor=1.0):
    """D_perp for a field with theta = 0 where the window sees a constant w(2 eta) = omega_const.

    Reduces the window integral to a single angular quadrature of
    (rho^{-2a} - R(phi)^{-2a}) / (2a).
    """
    half_width = c * xi
    rho = core if core is not None else 1e-2 * half_width
    two_a = 2 * alpha

    def inner(phi):
        R = half_width / max(abs(math.cos(phi)), math.sin(phi))
        return (rho**-two_a - R**-two_a) / two_a

    total = sum(integrate.quad(inner, lo, hi, epsabs=0, epsrel=1e-13)[0]
                for lo, hi in [(0, math.pi / 4), (math.pi / 4, 3 * math.pi / 4), (3 * math.pi / 4, math.pi)])
    return -prefactor * 2 * omega_const * total


# ---------------------------------------------------------------------------
# fractional heat kernel


@dataclass(frozen=True, eq=False)
class KernelTable:
    alpha: float
    d: int
    radii: np.ndarray
    values: np.ndarray


def _cosine_transform(f, r, cutoff, decay):
    """int_0^inf f(k) cos(rk) dk for positive decreasing f that underflows beyond ``cutoff``.

    A few cycles are done chunk by chunk with QAWO so the mass near k = 0 is
    resolved (up to at least ``decay``); the remainder goes to QAWF unless the alternating-tail bound
    2 f(a)/r already makes it negligible.
    """
    a = min(cutoff, max(16 * math.pi / r, decay))
    edges = np.unique(np.concatenate([[0.0], np.geomspace(min(1e-3, a), a, 48)]))
    val = err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = integrate.quad(f, lo, hi, weight="cos", wvar=r, epsabs=1e-17, epsrel=1e-13, limit=200)
            val += v
            err += e
        if a < cutoff and 2 * f(a) / r > 1e-16 * abs(val):
            v, e = integrate.quad(f, a, np.inf, weight="cos", wvar=r, epsabs=1e-17, limlst=200)
            val += v
            err += e
    return val, err


def kernel_value(alpha, d, r, rel_tol=1e-10):
    """Fractional heat kernel (2pi)^{-d} int exp(i x.k - |k|^{2a}) dk at |x| = r, t = 1."""
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if d not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {d}")
    r = abs(float(r))
    two_a = 2.0 * alpha
    if r == 0.0:
        if d == 1:
            return math.gamma(1 + 1 / two_a) / math.pi
        return math.gamma(1 / alpha) / (4 * math.pi * alpha)
    if d == 1:
        val, err = _cosine_transform(lambda k: math.exp(-(k**two_a)), r, 745.0 ** (1 / two_a),
                                     40.0 ** (1 / two_a))
        p0 = math.gamma(1 + 1 / two_a)
        if not np.isfinite(val) or err > max(rel_tol * abs(val), 1e-14 * p0):
            raise QuadratureError(f"cosine transform did not converge at r={r}", {"error": err, "value": val})
        return val / math.pi
    import mpmath as mp

    with mp.workdps(25):
        f = lambda k: mp.besselj(0, k * r) * mp.exp(-(k**two_a)) * k
        val = mp.quadosc(f, [0, mp.inf], zeros=lambda n: mp.besseljzero(0, n) / r)
    val = float(val) / (2 * math.pi)
    if not np.isfinite(val):
        raise QuadratureError(f"Hankel transform did not converge at r={r}")
    return val


def kernel_table(alpha, d, radii) -> KernelTable:
    radii = np.asarray(radii, dtype=float)
    vals = np.array([kernel_value(alpha, d, r) for r in radii])
    return KernelTable(alpha, d, radii, vals)


@dataclass(frozen=True)
class KernelBoundsReport:
    ok: bool
    C1: float
    C2: float
    tail_exponent: float
    message: str = ""

    def __bool__(self):
        return self.ok


def verify_kernel_bounds(t: KernelTable) -> KernelBoundsReport:
    """Fit C1 <= C2 with C1/(1+|x|^{d+2a}) <= P(x) <= C2/(1+|x|^{d+2a}) on the table."""
    order = np.argsort(t.radii)
    r = np.abs(t.radii[order])
    p = t.values[order]
    expo = t.d + 2 * t.alpha
    # values below the absolute quadrature floor are not resolved
    floor = 1e-12 * np.max(np.abs(p)) if p.size else 0.0
    bad = ~np.isfinite(p) | (p < -floor) | (p == 0) & (floor == 0)
    if np.any(bad):
        return KernelBoundsReport(False, math.nan, math.nan, math.nan,
                                  f"nonpositive kernel value at r={r[bad][0]:g}")
    resolved = p > floor
    if np.any(np.diff(p[resolved]) > 1e-12 * p[resolved][:-1]):
        k = int(np.argmax(np.diff(p[resolved])))
        return KernelBoundsReport(False, math.nan, math.nan, math.nan,
                                  f"kernel increases at r={r[resolved][k + 1]:g}")
    lost = r[~resolved]
    r, p = r[resolved], p[resolved]
    ratio = p * (1 + r**expo)
    C1, C2 = float(ratio.min()), float(ratio.max())
    far = r >= max(2.0, 0.5 * r.max())
    tail = math.nan
    if far.sum() >= 2:
        tail = float(np.polyfit(np.log(r[far]), np.log(p[far]), 1)[0])
    msg = ""
    ok = True
    if lost.size or ratio[-1] < 1e-3 * C2 or (np.isfinite(tail) and tail < -1.5 * expo):
        ok = False
        where = f"drops below the quadrature floor at r={lost[0]:g}" if lost.size else f"tail exponent {tail:.3g}"
        msg = (f"kernel decays faster than |x|^-{expo:g} ({where}); the power-law "
               "lower bound has no positive constant")
        if t.alpha >= 1:
            msg += "; the two-sided bound is only claimed for alpha < 1"
    return KernelBoundsReport(ok, C1, C2, tail, msg)
