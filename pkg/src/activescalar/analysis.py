"""Empirical moduli, Holder seminorms, breakthrough margins and regularization experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criterion import CriterionConstants, xi0_solve
from .errors import BlowUpError, ValidationError
from .fields import BreakthroughPair, ExperimentRecord, ScalarField
from .moduli import Modulus, ModulusParams
from .solver import SimConfig, rough_field, run

DEFAULT_SAMPLES = 100_000


# ---------------------------------------------------------------------------
# pair scans


@dataclass(frozen=True, eq=False)
class PairScan:
    """Largest |theta(x) - theta(y)| found at each scanned separation.

    ``x`` and ``y`` are the grid indices (rows of length d) of the maximizing
    ordered pair, oriented so that theta(x) >= theta(y).
    """

    xi: np.ndarray
    increment: np.ndarray
    x: np.ndarray
    y: np.ndarray
    exhaustive: bool


def _scan_1d(v, chunk=256):
    N = v.size
    shifts = np.arange(1, N // 2 + 1)
    idx = np.arange(N)
    inc = np.empty(shifts.size)
    xs = np.empty(shifts.size, dtype=np.intp)
    ys = np.empty(shifts.size, dtype=np.intp)
    for lo in range(0, shifts.size, chunk):
        s = shifts[lo:lo + chunk]
        shifted = (idx[None, :] + s[:, None]) % N
        D = v[shifted] - v[None, :]
        imax = D.argmax(axis=1)
        imin = D.argmin(axis=1)
        rows = np.arange(s.size)
        dmax = D[rows, imax]
        dmin = D[rows, imin]
        up = dmax >= -dmin
        inc[lo:lo + chunk] = np.where(up, dmax, -dmin)
        # up: theta(i+s) - theta(i) is the increment; otherwise theta(i) - theta(i+s)
        xs[lo:lo + chunk] = np.where(up, shifted[rows, imax], imin)
        ys[lo:lo + chunk] = np.where(up, imax, shifted[rows, imin])
    h = 2 * math.pi / N
    return PairScan(shifts * h, inc, xs[:, None], ys[:, None], True)


def _default_shells(N):
    h = 2 * math.pi / N
    return np.geomspace(h, math.pi * math.sqrt(2), 25)


def _scan_2d(v, shells, samples, rng):
    """Axis-aligned maxima (exhaustive) followed by every stratified random sample."""
    N = v.shape[0]
    h = 2 * math.pi / N
    xi_l, inc_l, x_l, y_l = [], [], [], []
    for axis in (0, 1):
        for j in range(1, N // 2 + 1):
            D = np.roll(v, -j, axis=axis) - v
            kmax = int(D.argmax())
            kmin = int(D.argmin())
            up = D.flat[kmax] >= -D.flat[kmin]
            base = np.array(np.unravel_index(kmax if up else kmin, v.shape))
            moved = base.copy()
            moved[axis] = (moved[axis] + j) % N
            xi_l.append(np.array([j * h]))
            inc_l.append(np.array([D.flat[kmax] if up else -D.flat[kmin]]))
            x_l.append((moved if up else base)[None, :])
            y_l.append((base if up else moved)[None, :])
    for a, b in zip(shells[:-1], shells[1:]):
        r = np.sqrt(rng.uniform(a * a, b * b, samples))
        phi = rng.uniform(0, 2 * math.pi, samples)
        off = np.rint(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1) / h).astype(np.intp)
        off = off[np.any(off != 0, axis=1)]
        if off.size == 0:
            continue
        p = rng.integers(0, N, size=(off.shape[0], 2))
        q = (p + off) % N
        D = v[q[:, 0], q[:, 1]] - v[p[:, 0], p[:, 1]]
        wrapped = off - N * np.rint(off / N).astype(np.intp)
        xi_l.append(np.hypot(wrapped[:, 0], wrapped[:, 1]) * h)
        inc_l.append(np.abs(D))
        pos = (D >= 0)[:, None]
        x_l.append(np.where(pos, q, p))
        y_l.append(np.where(pos, p, q))
    return PairScan(np.concatenate(xi_l), np.concatenate(inc_l), np.concatenate(x_l).astype(np.int32),
                    np.concatenate(y_l).astype(np.int32), False)


def pair_scan(theta: ScalarField, shells=None, samples=DEFAULT_SAMPLES, seed=0) -> PairScan:
    """Exhaustive lattice scan in 1D; axis-aligned plus stratified sampling in 2D.

    The 1D scan keeps the largest increment per lattice separation; the 2D scan
    keeps every sampled pair.
    """
    if theta.d == 1:
        return _scan_1d(theta.values)
    shells = _default_shells(theta.N) if shells is None else np.asarray(shells, float)
    return _scan_2d(theta.values, shells, samples, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True, eq=False)
class EmpiricalModulus:
    xi: np.ndarray
    increment: np.ndarray

    def envelope(self):
        """Running maximum: the smallest nondecreasing function above the samples."""
        return np.maximum.accumulate(self.increment)


def empirical_modulus(theta: ScalarField, bins=None, samples=DEFAULT_SAMPLES, seed=0) -> EmpiricalModulus:
    """Largest increment per separation bin (bins are edges; None keeps every scanned separation)."""
    scan = pair_scan(theta, bins, samples, seed)
    order = np.argsort(scan.xi, kind="stable")
    xi, inc = scan.xi[order], scan.increment[order]
    if bins is None:
        ux, inv = np.unique(xi, return_inverse=True)
        out = np.zeros(ux.size)
        np.maximum.at(out, inv, inc)
        return EmpiricalModulus(ux, out)
    edges = np.asarray(bins, dtype=float)
    which = np.searchsorted(edges, xi, side="right") - 1
    which = np.where(np.isclose(xi, edges[-1]), edges.size - 2, which)
    keep = (which >= 0) & (which < edges.size - 1)
    out = np.zeros(edges.size - 1)
    np.maximum.at(out, which[keep], inc[keep])
    centers = np.sqrt(edges[:-1] * edges[1:]) if edges[0] > 0 else 0.5 * (edges[:-1] + edges[1:])
    return EmpiricalModulus(centers, out)


def holder_seminorm(theta: ScalarField, beta, min_sep_cells=1, samples=DEFAULT_SAMPLES, seed=0, scan=None):
    """sup |theta(x) - theta(y)| / |x - y|^beta over scanned pairs with |x - y| >= min_sep_cells * h."""
    if not 0 < beta <= 1:
        raise ValidationError("beta must lie in (0, 1]")
    scan = scan or pair_scan(theta, None, samples, seed)
    keep = scan.xi >= min_sep_cells * theta.h * (1 - 1e-12)
    if not keep.any():
        return 0.0
    return float(np.max(scan.increment[keep] / scan.xi[keep] ** beta))


def _pair_from(theta: ScalarField, xi_idx, yi_idx, margin):
    h = theta.h
    return BreakthroughPair(tuple(np.atleast_1d(xi_idx) * h), tuple(np.atleast_1d(yi_idx) * h), float(margin))


def breakthrough_margin(theta: ScalarField, m: Modulus, xi0_t=None, min_sep_cells=4, samples=DEFAULT_SAMPLES,
                        seed=0, scan=None):
    """min over pairs of w(|x-y|) - (theta(x) - theta(y)) and the minimizing pair.

    Exact over the lattice in 1D; in 2D the axis-aligned pairs are exhaustive and
    the rest is stratified sampling.  Separations below ``min_sep_cells`` grid
    cells are not resolved by a spectral field and are skipped.
    """
    if xi0_t is not None:
        if not isinstance(m, ModulusParams):
            raise TypeError("xi0_t needs a ModulusParams family")
        m = m.with_xi0(min(max(xi0_t, 0.0), m.delta))
    cut = min_sep_cells * theta.h * (1 - 1e-12)
    scan = scan or pair_scan(theta, None, samples, seed)
    keep = scan.xi >= cut
    if not keep.any():
        raise ValidationError("no scanned separation above the grid-scale cutoff")
    marg = m.value(scan.xi[keep]) - scan.increment[keep]
    k = int(np.argmin(marg))
    return float(marg[k]), _pair_from(theta, scan.x[keep][k], scan.y[keep][k], marg[k])


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    verdict: str
    records: list
    T: float
    seminorm_bound: float
    message: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"verdict": self.verdict, "T": self.T, "seminorm_bound": self.seminorm_bound,
                "message": self.message, "records": len(self.records), **self.details}


def admissible_initial_sup(m: ModulusParams):
    """Largest sup norm for which every field obeys w(., delta): 2 sup = (1 - beta) H."""
    return 0.5 * (1 - m.beta) * m.H


def regularization_experiment(cfg: SimConfig, m_base: ModulusParams, consts: CriterionConstants,
                              theta0: ScalarField | None = None, family="moving", tol=0.05, min_sep_cells=4,
                              samples=DEFAULT_SAMPLES, roughness=0.05, seminorm_from_T=True) -> ExperimentResult:
    """Run the solver and track the margin against the modulus family.

    ``family="moving"`` uses w(xi, xi0(t)) with xi0 from the ODE (xi0(0) = delta);
    ``"stationary"`` keeps xi0 = 0 throughout.  The default initial datum is a
    rough field saturating 2 sup|theta0| = (1 - beta) H.  PASS requires a
    nonnegative margin at every record and, for records at t >= T, a beta-Holder
    seminorm within (1 + tol) H / delta^beta.  Blow-up gives INCONCLUSIVE.
    """
    if family not in ("moving", "stationary"):
        raise ValidationError("family must be 'moving' or 'stationary'")
    eq = cfg.eq
    beta, delta = m_base.beta, m_base.delta
    _, T = xi0_solve(consts.C2, eq.alpha, delta, 0.0)
    bound = m_base.H / delta**beta
    if theta0 is None:
        rng = np.random.default_rng(cfg.seed)
        theta0 = rough_field(cfg.N, eq.dimension, roughness, admissible_initial_sup(m_base), rng)

    def observe(f: ScalarField):
        xi0 = 0.0 if family == "stationary" else xi0_solve(consts.C2, eq.alpha, delta, f.t)[0]
        scan = pair_scan(f, samples=samples, seed=cfg.seed)
        margin, _ = breakthrough_margin(f, m_base, xi0, min_sep_cells, samples, cfg.seed, scan=scan)
        hold = holder_seminorm(f, beta, min_sep_cells, samples, cfg.seed, scan=scan)
        return {"xi0": xi0, "margin": margin, "holder": {beta: hold}}

    records: list[ExperimentRecord] = []
    last = theta0
    try:
        for rec, f in run(theta0, cfg, observe):
            records.append(rec)
            last = f
    except BlowUpError as err:
        return ExperimentResult("INCONCLUSIVE", err.records, T, bound, f"solver blow-up: {err}")

    margins = np.array([r.margin for r in records])
    worst = int(np.argmin(margins))
    details = {"min_margin": float(margins[worst]), "min_margin_t": records[worst].t, "t_end": records[-1].t,
               "family": family}
    late = [r for r in records if r.t >= T] if seminorm_from_T else records
    msgs = []
    ok = bool(np.all(margins >= 0))
    if not ok:
        msgs.append(f"margin {margins[worst]:.3g} < 0 at t={records[worst].t:.4g}")
    if late:
        sem = max(r.holder[beta] for r in late)
        details["max_seminorm_after_T"] = sem
        if sem > bound * (1 + tol):
            ok = False
            msgs.append(f"C^{beta:g} seminorm {sem:.4g} exceeds {bound * (1 + tol):.4g} after T")
    elif family == "moving":
        return ExperimentResult("INCONCLUSIVE", records, T, bound, f"run ended before T={T:.4g}", details)
    if last.d == 2:
        # the estimator is stochastic: repeat the final measurement with twice the samples
        m2, _ = breakthrough_margin(last, m_base, records[-1].xi0, min_sep_cells, 2 * samples, cfg.seed + 1)
        details["final_margin_doubled_samples"] = m2
        if (m2 >= 0) != (records[-1].margin >= 0):
            return ExperimentResult("INCONCLUSIVE", records, T, bound,
                                    "margin sign changes when the sample size doubles", details)
    return ExperimentResult("PASS" if ok else "FAIL", records, T, bound, "; ".join(msgs), details)


def scale_to_obey(theta: ScalarField, m: Modulus, safety=0.95, samples=DEFAULT_SAMPLES, seed=0) -> ScalarField:
    """Rescale a mean-free field so that every scanned increment is at most ``safety * w(xi)``."""
    if not 0 < safety <= 1:
        raise ValidationError("safety must lie in (0, 1]")
    scan = pair_scan(theta, samples=samples, seed=seed)
    if not np.any(scan.increment > 0):
        return theta
    ratio = float(np.min(m.value(scan.xi) / np.where(scan.increment > 0, scan.increment, np.nan),
                         initial=np.inf, where=scan.increment > 0))
    return ScalarField(theta.values * (safety * ratio), theta.t)
