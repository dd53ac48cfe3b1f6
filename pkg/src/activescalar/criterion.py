"""Key differential inequality for the moving modulus family and constant search.

For the family w(xi, xi0(t)) with dxi0/dt = -C2 xi0^{1-2a}, xi0(0) = delta, the
checked inequality is

    dt w > Omega dxi w + D_a + 2 eps dxixi w

wherever w <= 2 sup|theta|.  All terms scale as H delta^{-2a} times a function of
(xi/delta, xi0/delta) once H is tied to delta by the size constraint, so the
expensive dissipation values are tabulated once on normalized coordinates and
reused across the whole constant search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .dissipation import DEFAULT_CONFIG, QuadratureConfig, d_alpha
from .errors import DomainError, ValidationError
from .moduli import ModulusParams
from .velocity import EquationParams, omega_bound_msqg


@dataclass(frozen=True)
class CriterionConstants:
    C1: float
    C2: float
    margin_tol: float = 1e-10

    def __post_init__(self):
        if not (self.C1 > 0 and self.C2 > 0):
            raise ValidationError("C1 and C2 must be positive")
        if self.margin_tol < 0:
            raise ValidationError("margin_tol must be nonnegative")

    def to_json(self):
        return {"C1": self.C1, "C2": self.C2, "margin_tol": self.margin_tol}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["C1"]), float(obj["C2"]), float(obj.get("margin_tol", 1e-10)))


@dataclass(frozen=True)
class GridSpec:
    """Grids in units of delta: xi log-spaced on [xi_min, xi_max], xi0 log-spaced on [xi0_min, 1].

    Each xi0 value is one time slice t(xi0); xi0 = 0 (t >= T) is always included,
    and the kinks xi0 and delta are inserted into every xi row.
    """

    xi_min: float = 1e-6
    xi_max: float = 10.0
    per_decade: int = 400
    xi0_min: float = 1e-6
    xi0_per_decade: int = 3

    def __post_init__(self):
        if not 0 < self.xi_min < 1 < self.xi_max:
            raise ValidationError("need 0 < xi_min < 1 < xi_max")
        if not 0 < self.xi0_min <= 1:
            raise ValidationError("xi0_min must lie in (0, 1]")
        if self.per_decade < 1 or self.xi0_per_decade < 1:
            raise ValidationError("grid densities must be positive")

    def refined(self, factor=2):
        return replace(self, per_decade=self.per_decade * factor, xi0_per_decade=self.xi0_per_decade * factor)

    def xi_base(self):
        n = int(round(math.log10(self.xi_max / self.xi_min) * self.per_decade)) + 1
        return np.geomspace(self.xi_min, self.xi_max, n)

    def xi0_values(self):
        n = int(round(-math.log10(self.xi0_min) * self.xi0_per_decade)) + 1
        return np.concatenate([np.geomspace(1.0, self.xi0_min, n), [0.0]])


def xi0_solve(C2, alpha, delta, t):
    """xi0(t) = (delta^{2a} - 2a C2 t)^{1/(2a)} clamped at 0, and the extinction time T."""
    if not (C2 > 0 and 0 < alpha < 1 and delta > 0):
        raise DomainError("need C2 > 0, 0 < alpha < 1, delta > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    two_a = 2 * alpha
    T = delta**two_a / (two_a * C2)
    xi0 = np.maximum(delta**two_a - two_a * C2 * t, 0.0) ** (1 / two_a)
    return (float(xi0) if xi0.ndim == 0 else xi0), T


def time_of_xi0(C2, alpha, delta, xi0):
    """Inverse of xi0_solve."""
    two_a = 2 * alpha
    return (delta**two_a - np.asarray(xi0, dtype=float) ** two_a) / (two_a * C2)


def _dxi0_shape(beta, x, s):
    """d/ds of the normalized family at (x, s); zero off the linear branch."""
    x = np.asarray(x, dtype=float)
    if s <= 0:
        return np.zeros_like(x)
    out = beta * (1 - beta) * (s ** (beta - 1) - s ** (beta - 2) * x)
    return np.where(x < s, out, 0.0)


def dt_omega_family(m: ModulusParams, C2, alpha, xi, t):
    """Time derivative of w(xi, xi0(t)) along the ODE for xi0 (xi0(0) = delta)."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise DomainError("xi must be positive")
    xi0, _ = xi0_solve(C2, alpha, m.delta, t)
    if xi0 <= 0:
        out = np.zeros_like(xi)
    else:
        dxi0 = -C2 * xi0 ** (1 - 2 * alpha)
        out = (m.H / m.delta) * _dxi0_shape(m.beta, xi / m.delta, xi0 / m.delta) * dxi0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class _FamilyTable:
    """Normalized (H = delta = 1) terms on the concatenated (x, s) rows."""

    beta: float
    s: np.ndarray          # xi0/delta per time slice
    row: np.ndarray        # slice index of each point
    x: np.ndarray
    w: np.ndarray
    dw: np.ndarray         # larger one-sided first derivative
    d2w: np.ndarray        # larger one-sided second derivative
    dis: np.ndarray        # D_alpha including c_alpha
    vel: np.ndarray        # Omega / (A H delta^{2g-1}) (w itself for Burgers and SQG)
    dxi0: np.ndarray       # d w / d s


@lru_cache(maxsize=32)
def _family_table(beta, alpha, kind, gamma, grid: GridSpec, cfg: QuadratureConfig, stationary: bool):
    base = grid.xi_base()
    svals = np.array([0.0]) if stationary else grid.xi0_values()
    parts = {k: [] for k in ("row", "x", "w", "dw", "d2w", "dis", "vel", "dxi0")}
    for j, s in enumerate(svals):
        m = ModulusParams(1.0, 1.0, beta, float(s))
        kinks = [1.0] + ([float(s)] if s > 0 else [])
        x = np.unique(np.concatenate([base, [k for k in kinks if grid.xi_min <= k <= grid.xi_max]]))
        parts["row"].append(np.full(x.size, j))
        parts["x"].append(x)
        parts["w"].append(m.value(x))
        parts["dw"].append(m.deriv(x, 1, "max"))
        parts["d2w"].append(m.deriv(x, 2, "max"))
        parts["dis"].append(np.asarray(d_alpha(m, alpha, x, cfg)))
        if kind == "modified_sqg":
            parts["vel"].append(np.asarray(omega_bound_msqg(m, gamma, x)))
        else:
            parts["vel"].append(m.value(x))
        parts["dxi0"].append(_dxi0_shape(beta, x, s))
    arrays = {k: np.concatenate(v) for k, v in parts.items()}
    for v in arrays.values():
        v.setflags(write=False)
    return _FamilyTable(beta, svals, **arrays)


@dataclass(frozen=True, eq=False)
class CriterionReport:
    """Margins of the key inequality on the (xi, t) grid.

    ``margin = dt_term - (adv_term + dissipation + eps_term)``; a point passes when
    ``margin > margin_tol * scale`` with ``scale`` the sum of the absolute terms.
    For SQG ``perp_coeff = 1 - A xi^{2a} dxi w`` multiplies the perpendicular
    dissipation (which is <= 0) and must be nonnegative.  ``worst`` is the checked
    point with the smallest relative margin ``margin / scale``.
    """

    ok: bool
    xi: np.ndarray
    t: np.ndarray
    xi0: np.ndarray
    omega: np.ndarray
    dt_term: np.ndarray
    adv_term: np.ndarray
    dissipation: np.ndarray
    eps_term: np.ndarray
    margin: np.ndarray
    scale: np.ndarray
    checked: np.ndarray
    perp_coeff: np.ndarray | None = None
    worst: int = -1
    message: str = ""
    meta: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok

    @property
    def relative_margin(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.scale > 0, self.margin / self.scale, np.sign(self.margin))

    @property
    def worst_margin(self):
        return float(self.relative_margin[self.worst]) if self.worst >= 0 else math.inf

    @property
    def worst_location(self):
        if self.worst < 0:
            return None
        return {"xi": float(self.xi[self.worst]), "t": float(self.t[self.worst]), "xi0": float(self.xi0[self.worst])}

    def summary(self):
        return {"ok": self.ok, "points": int(self.xi.size), "checked": int(self.checked.sum()),
                "worst_relative_margin": self.worst_margin, "worst_location": self.worst_location,
                "message": self.message, **self.meta}

    def rows(self):
        cols = ["xi", "t", "xi0", "omega", "dt_term", "adv_term", "dissipation", "eps_term", "margin", "checked"]
        data = [getattr(self, c) for c in cols]
        if self.perp_coeff is not None:
            cols.append("perp_coeff")
            data.append(self.perp_coeff)
        return cols, zip(*data)


def _assemble(eq: EquationParams, tab: _FamilyTable, H, delta, C2, margin_tol, theta_sup, ignore_eps, meta):
    a = eq.alpha
    s = tab.s[tab.row]
    x = tab.x
    xi = delta * x
    xi0 = delta * s
    two_a = 2 * a
    t = (delta**two_a - xi0**two_a) / (two_a * C2)
    w = H * tab.w
    dw = (H / delta) * tab.dw
    dt_term = -C2 * H * delta**-two_a * tab.dxi0 * s ** (1 - two_a)
    if eq.kind == "modified_sqg":
        vel = eq.A * H * delta ** (2 * eq.gamma - 1) * tab.vel
    elif eq.kind == "sqg":
        vel = eq.A * w
    else:
        vel = w
    adv = vel * dw
    dis = H * delta**-two_a * tab.dis
    eps_term = np.zeros_like(x) if ignore_eps else 2 * eq.epsilon * (H / delta**2) * tab.d2w
    with np.errstate(invalid="ignore"):
        margin = dt_term - (adv + dis + eps_term)
        scale = np.abs(dt_term) + np.abs(adv) + np.abs(dis) + np.abs(eps_term)
    checked = w <= 2 * theta_sup
    passed = margin > margin_tol * scale
    perp = None
    if eq.kind == "sqg":
        perp = 1 - eq.A * xi**two_a * dw
        passed &= perp >= 0
    bad = checked & ~passed
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, margin / scale, np.sign(margin))
    if perp is not None:
        rel = np.where(perp < 0, np.minimum(rel, perp), rel)
    rel = np.where(checked & ~np.isnan(rel), rel, np.inf)
    worst = int(np.argmin(rel)) if checked.any() else -1
    ok = not bad.any()
    msg = ""
    if not ok:
        k = int(np.flatnonzero(bad)[np.argmin(rel[bad])])
        branch = "linear" if x[k] < s[k] else ("power" if x[k] < 1 else "constant")
        msg = (f"{int(bad.sum())} of {int(checked.sum())} points fail; worst at xi={xi[k]:.4g} "
               f"(xi/delta={x[k]:.3g}, {branch} branch), t={t[k]:.4g}")
        if perp is not None and perp[k] < 0:
            msg += "; perpendicular-dissipation coefficient is negative there"
        worst = k
    return CriterionReport(ok, xi, t, xi0, w, dt_term, adv, dis, eps_term, margin, scale, checked, perp,
                           worst, msg, meta)


def check_keyineq(eq: EquationParams, m: ModulusParams, consts: CriterionConstants, grid: GridSpec = GridSpec(),
                  theta_sup=math.inf, ignore_eps=False, cfg: QuadratureConfig = DEFAULT_CONFIG,
                  stationary=False) -> CriterionReport:
    """Evaluate the key inequality for the family built on ``m`` (its xi0 is ignored).

    With ``stationary`` the family is frozen at xi0 = 0 (dt w = 0); otherwise
    xi0 follows the ODE with rate ``consts.C2``.  H and delta are taken from
    ``m`` as given; ``consts.C1`` is not enforced here.
    """
    if not isinstance(eq, EquationParams):
        raise TypeError("eq must be EquationParams")
    tab = _family_table(m.beta, eq.alpha, eq.kind, eq.gamma, grid, cfg, stationary)
    meta = {"H": m.H, "delta": m.delta, "beta": m.beta, "kind": eq.kind, "alpha": eq.alpha,
            "gamma": eq.gamma, "C1": consts.C1, "C2": consts.C2, "stationary": stationary}
    return _assemble(eq, tab, m.H, m.delta, consts.C2, consts.margin_tol, theta_sup, ignore_eps, meta)


@dataclass(frozen=True)
class SearchConfig:
    start: float = 1.0
    floor: float = 1e-8
    ceiling: float = 1e8
    factor: float = 1.05
    deltas: tuple = (0.1, 1.0, 10.0)
    extend_decades: int = 2
    max_shrink: int = 30


@dataclass(frozen=True, eq=False)
class ConstantSearch:
    ok: bool
    constants: CriterionConstants | None
    report: CriterionReport | None
    message: str = ""
    history: list = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def to_json(self):
        out = {"ok": self.ok, "message": self.message, "history": self.history}
        if self.constants is not None:
            out["constants"] = self.constants.to_json()
        if self.report is not None:
            out["report"] = self.report.summary()
        return out


def _largest_passing(passes, start, floor, ceiling, factor):
    """Largest x in [floor, ceiling] (to a ratio ``factor``) with passes(x), assuming monotonicity."""
    if passes(start):
        lo = start
        hi = None
        while lo < ceiling:
            cand = min(lo * 4, ceiling)
            if passes(cand):
                lo = cand
            else:
                hi = cand
                break
        if hi is None:
            return lo
    else:
        hi = start
        lo = None
        while hi > floor:
            cand = max(hi / 4, floor)
            if passes(cand):
                lo = cand
                break
            hi = cand
        if lo is None:
            return None
    while hi / lo > factor:
        mid = math.sqrt(lo * hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def find_constants(eq: EquationParams, beta, grid: GridSpec = GridSpec(), search: SearchConfig = SearchConfig(),
                   cfg: QuadratureConfig = DEFAULT_CONFIG, theta_sup=math.inf, margin_tol=1e-10) -> ConstantSearch:
    """Bisect for the largest C1 (stationary family), then the largest C2 (moving family).

    H = C1 delta^e with e the size exponent of ``eq``; every delta in
    ``search.deltas`` must pass.  A C1 whose binding point sits in the lowest
    grid decade and keeps dropping when the grid is extended towards 0 is
    reported as a failure: the power-law balance reverses at small xi.
    """
    lo_b, hi_b = eq.beta_range()
    history = []
    e = eq.size_exponent

    def run(C1, C2, stationary, g=grid):
        reports = []
        for delta in search.deltas:
            m = ModulusParams(C1 * delta**e, delta, beta)
            consts = CriterionConstants(C1, C2, margin_tol)
            reports.append(check_keyineq(eq, m, consts, g, theta_sup, cfg=cfg, stationary=stationary))
        return reports

    def passes_c1(C1, g=grid):
        return all(run(C1, 1.0, True, g))

    C1 = _largest_passing(passes_c1, search.start, search.floor, search.ceiling, search.factor)
    in_range = lo_b < beta < hi_b
    note = "" if in_range else f"beta={beta} outside the theorem range ({lo_b:g}, {hi_b:g})"
    if C1 is None:
        return ConstantSearch(False, None, None, "no C1 above the floor passes the stationary family. " + note, history)
    history.append({"stage": "C1", "C1": C1})

    # the failing neighbour shows where the balance binds
    binding = run(C1 * search.factor, 1.0, True)
    failing = [r for r in binding if not r.ok]
    if failing:
        loc = failing[0].worst_location
        history.append({"stage": "C1-binding", **loc})
        lowest_decade = loc["xi"] / failing[0].meta["delta"] < grid.xi_min * 10
        if lowest_decade:
            ext = replace(grid, xi_min=grid.xi_min * 10.0**-search.extend_decades)
            C1_ext = _largest_passing(lambda c: passes_c1(c, ext), C1, search.floor, search.ceiling, search.factor)
            history.append({"stage": "C1-extended", "xi_min": ext.xi_min, "C1": C1_ext})
            if C1_ext is None or C1_ext < C1 / search.factor**2:
                msg = (f"C1 binds at the smallest tested xi ({loc['xi']:.3g}) and drops from {C1:.4g} to "
                       f"{C1_ext if C1_ext is not None else 0:.4g} when the grid is extended to xi_min="
                       f"{ext.xi_min:.0e}: no positive C1 survives xi -> 0. " + note)
                return ConstantSearch(False, None, binding[0], msg.strip(), history)

    for _ in range(search.max_shrink):
        C2 = _largest_passing(lambda c: all(run(C1, c, False)), search.start, search.floor, search.ceiling,
                              search.factor)
        history.append({"stage": "C2", "C1": C1, "C2": C2})
        if C2 is not None:
            consts = CriterionConstants(C1, C2, margin_tol)
            reports = run(C1, C2, False)
            rep = min(reports, key=lambda r: r.worst_margin)
            return ConstantSearch(True, consts, rep, note, history)
        C1 /= 2
        if C1 < search.floor:
            break
    return ConstantSearch(False, None, None, "no C2 above the floor passes the moving family. " + note, history)
