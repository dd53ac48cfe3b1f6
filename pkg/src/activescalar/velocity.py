"""Velocity bounds Omega(xi) for Burgers, modified SQG and SQG."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .dissipation import DEFAULT_CONFIG, QuadratureConfig, d_perp
from .errors import DomainError, ValidationError
from .moduli import Modulus, ModulusParams
from .quadrature import integrate_batch

KINDS = ("burgers", "sqg", "modified_sqg")


@dataclass(frozen=True)
class EquationParams:
    kind: str
    alpha: float
    gamma: float = 0.5
    epsilon: float = 0.0
    A: float = 1.0
    c_window: float = 0.125

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")
        if self.A <= 0:
            raise ValidationError("A must be positive")
        if not 0 < self.c_window < 0.25:
            raise ValidationError("c_window must lie in (0, 1/4)")
        if self.kind == "sqg" and self.gamma != 0.5:
            raise ValidationError("SQG has gamma = 1/2")
        if self.kind == "modified_sqg" and not 0.5 < self.gamma < 1:
            raise ValidationError(f"modified SQG needs 1/2 < gamma < 1, got {self.gamma}")

    @property
    def dimension(self):
        return 1 if self.kind == "burgers" else 2

    @property
    def size_exponent(self):
        """Exponent e in the admissibility constraint H <= C1 delta**e."""
        if self.kind == "burgers":
            return 1 - 2 * self.alpha
        return 2 - 2 * self.alpha - 2 * self.gamma

    @property
    def supercritical(self):
        if self.kind == "burgers":
            return self.alpha < 0.5
        return self.alpha + self.gamma < 1

    def beta_range(self):
        """Open interval of Holder exponents covered by the regularization theorems."""
        if self.kind == "burgers":
            return 1 - 2 * self.alpha, 1.0
        return 2 - 2 * self.gamma - 2 * self.alpha, 2 - 2 * self.gamma

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        fields = {k: obj[k] for k in ("kind", "alpha", "gamma", "epsilon", "A", "c_window") if k in obj}
        if fields.get("kind") == "sqg":
            fields.setdefault("gamma", 0.5)
        return cls(**fields)


def _piece_moment(a, p, c, q, u, v):
    """int_u^v (a r^p + c) r^q dr for arrays of limits (v may be inf)."""

    def prim(e, coef):
        if coef == 0.0:
            return np.zeros_like(u)
        if e == -1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.log(v / u)
        else:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = (v ** (e + 1) - u ** (e + 1)) / (e + 1)
        out = np.where(v <= u, 0.0, out)
        if np.any(~np.isfinite(out)):
            raise DomainError("power moment diverges (modulus too large at 0 or infinity)")
        return coef * out

    return prim(p + q, a) + prim(q, c)


def power_moment(omega: Modulus, q, lo, hi):
    """Exact int_lo^hi omega(r) r^q dr, piece by piece (vectorized over limits)."""
    m = omega.as_piecewise()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    edges = (0.0,) + m.breakpoints + (math.inf,)
    total = np.zeros(lo.shape)
    for i, piece in enumerate(m.pieces):
        u = np.clip(lo, edges[i], edges[i + 1])
        v = np.clip(hi, edges[i], edges[i + 1])
        if not np.any(v > u):
            continue
        total = total + _piece_moment(piece.coef, piece.expo, piece.const, q, u, v)
    return float(total) if total.ndim == 0 else total


def _check_xi(xi):
    x = np.asarray(xi, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("xi must be positive")
    return x


def omega_bound_burgers(omega: Modulus, xi):
    """For u = theta the velocity increment is bounded by omega itself."""
    _check_xi(xi)
    return omega.value(xi)


def omega_bound_msqg(omega: Modulus, gamma, xi, A=1.0):
    """A * (int_0^xi w(r) r^{2g-2} dr + xi int_xi^inf w(r) r^{2g-3} dr), exactly."""
    if not 0.5 < gamma < 1:
        raise DomainError(f"gamma must lie in (1/2, 1), got {gamma}")
    m = omega.as_piecewise()
    last = m.pieces[-1]
    if not last.is_constant and last.expo >= 2 - 2 * gamma:
        raise DomainError("modulus grows too fast at infinity for the far integral to converge")
    x = _check_xi(xi)
    near = power_moment(m, 2 * gamma - 2, 0.0, x)
    far = x * power_moment(m, 2 * gamma - 3, x, math.inf)
    return A * (near + far)


def far_average(omega: Modulus, xi):
    """xi * int_xi^inf w(r) / r^2 dr, exactly."""
    x = _check_xi(xi)
    return x * power_moment(omega, -2.0, x, math.inf)


class SQGBound(NamedTuple):
    value: float
    d_perp: float
    coupled: bool


def omega_bound_sqg(omega: Modulus, alpha, xi=None, theta=None, pair=None, A=1.0, c=0.125,
                    cfg: QuadratureConfig = DEFAULT_CONFIG, form="auto", **perp_kw) -> SQGBound:
    """SQG velocity bound with the perpendicular-dissipation credit.

    ``form="om15"``: A (w(xi) - xi^{2a} D_perp), valid for the capped power family;
    ``form="om14"`` keeps the middle term xi int_xi^inf w/r^2; ``"auto"`` picks
    om15 for ModulusParams and om14 otherwise.  Without a field, D_perp is taken
    as 0 and ``coupled`` is False.
    """
    if form == "auto":
        form = "om15" if isinstance(omega, ModulusParams) else "om14"
    if form not in ("om14", "om15"):
        raise ValueError(f"unknown form {form!r}")
    if (theta is None) != (pair is None):
        raise TypeError("theta and pair must be given together")
    if pair is not None:
        if xi is not None and abs(xi - pair.xi) > 1e-12 * pair.xi:
            raise DomainError("xi disagrees with the pair separation")
        xi = pair.xi
        dp = d_perp(theta, pair, omega, alpha, c=c, cfg=cfg, **perp_kw)
    else:
        if xi is None:
            raise TypeError("xi is required without a pair")
        dp = 0.0
    _check_xi(xi)
    val = omega.value(xi) - xi ** (2 * alpha) * dp
    if form == "om14":
        val = val + far_average(omega, xi)
    return SQGBound(float(A * val), float(dp), pair is not None)


def lemma43_constant(gamma, beta):
    """Constant C with Omega(xi, xi0) <= C xi^{2g-1} w(xi, xi0) on 0 < xi <= delta (A = 1).

    Sums the near-integral bound with the larger of the two far-integral bounds
    (xi <= xi0 versus xi0 < xi <= delta).
    """
    if not 0.5 < gamma < 1 or not 0 < beta < 2 - 2 * gamma:
        raise DomainError("need 1/2 < gamma < 1 and 0 < beta < 2 - 2 gamma")
    near = 1 / (2 * gamma - 1)
    below = 1 / ((2 - 2 * gamma) * (1 - beta)) + 1 / ((2 - 2 * gamma - beta) * (1 - beta))
    above = 1 / (2 - 2 * gamma - beta)
    return near + max(below, above)


@dataclass(frozen=True, eq=False)
class LemmaReport:
    ok: bool
    xi: np.ndarray
    xi0: np.ndarray
    ratio: np.ndarray
    bound: np.ndarray
    regime: np.ndarray
    worst_excess: float
    message: str = ""

    def __bool__(self):
        return self.ok


def _quad_far_average(m: ModulusParams, xi, rtol):
    """xi int_xi^inf w/r^2 by adaptive quadrature up to delta plus the exact constant tail."""
    p = m.as_piecewise()
    bp = np.asarray(p.breakpoints)
    a_list, b_list, o_list = [], [], []
    for k, x in enumerate(xi):
        if x >= m.delta:
            continue
        pts = np.unique(np.concatenate([[x, m.delta], bp[(bp > x) & (bp < m.delta)],
                                        np.geomspace(x, m.delta, 8)]))
        a_list.append(pts[:-1])
        b_list.append(pts[1:])
        o_list.append(np.full(len(pts) - 1, k))
    inner = np.zeros(len(xi))
    if a_list:
        inner, _ = integrate_batch(lambda r, own: p.value(r) / r**2, np.concatenate(a_list),
                                   np.concatenate(b_list), np.concatenate(o_list), len(xi), rtol=rtol)
    tail = m.H / np.maximum(xi, m.delta)
    return xi * (inner + tail)


def verify_ll23(base: ModulusParams, xi_grid, xi0_grid, rtol=1e-10, tol=1e-8) -> LemmaReport:
    """Check xi int_xi^inf w(r, xi0)/r^2 dr against w(xi, xi0) on a (xi, xi0) grid.

    Regimes: 0 for xi >= delta (ratio must equal 1), 1 for xi0 <= xi < delta
    (ratio <= 1/(1-b)), 2 for xi < xi0 (ratio <= 2/(1-b)^2).
    """
    b = base.beta
    XI, X0 = np.meshgrid(np.asarray(xi_grid, float), np.asarray(xi0_grid, float), indexing="ij")
    ratio = np.empty(XI.shape)
    for j in range(X0.shape[1]):
        m = base.with_xi0(X0[0, j])
        ratio[:, j] = _quad_far_average(m, XI[:, j], rtol) / m.value(XI[:, j])
    regime = np.where(XI >= base.delta, 0, np.where(XI >= X0, 1, 2))
    bound = np.choose(regime, [1.0, 1 / (1 - b), 2 / (1 - b) ** 2])
    excess = np.where(regime == 0, np.abs(ratio - 1), ratio - bound)
    worst = float(excess.max())
    ok = worst <= tol
    msg = "" if ok else f"bound exceeded by {worst:.3g}"
    return LemmaReport(ok, XI, X0, ratio, bound, regime, worst, msg)


def verify_lemma43(base: ModulusParams, gamma, xi_grid, xi0_grid, tol=1e-10) -> LemmaReport:
    """Check Omega(xi, xi0) <= C xi^{2g-1} w(xi, xi0) for 0 < xi <= delta."""
    C = lemma43_constant(gamma, base.beta)
    XI, X0 = np.meshgrid(np.asarray(xi_grid, float), np.asarray(xi0_grid, float), indexing="ij")
    if np.any(XI > base.delta):
        raise DomainError("the bound is only claimed for xi <= delta")
    ratio = np.empty(XI.shape)
    for j in range(X0.shape[1]):
        m = base.with_xi0(X0[0, j])
        x = XI[:, j]
        ratio[:, j] = omega_bound_msqg(m, gamma, x) / (x ** (2 * gamma - 1) * m.value(x))
    regime = np.where(XI > X0, 1, 2)
    bound = np.full(XI.shape, C)
    excess = ratio / C - 1
    worst = float(excess.max())
    ok = worst <= tol
    return LemmaReport(ok, XI, X0, ratio, bound, regime, worst, "" if ok else f"bound exceeded by {worst:.3g}")
