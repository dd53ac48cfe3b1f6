"""Moduli of continuity: the capped power family and generic concave piecewise moduli.

A modulus is only defined for xi > 0; the limit at zero is exposed separately
through ``at_zero`` because a modulus may jump there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, ValidationError

SIDES = ("left", "right", "max", "min")


@dataclass(frozen=True)
class Piece:
    """One branch ``coef * xi**expo + const`` of a piecewise modulus."""

    coef: float
    expo: float
    const: float

    def value(self, x):
        return self.coef * x**self.expo + self.const

    def deriv(self, x, order=1):
        if order == 0:
            return self.value(x)
        fac = self.coef
        for j in range(order):
            fac = fac * (self.expo - j)
        if fac == 0.0:
            return np.zeros_like(np.asarray(x, dtype=float)) + 0.0
        return fac * x ** (self.expo - order)

    @property
    def is_constant(self):
        return self.coef == 0.0

    @property
    def is_linear(self):
        return self.coef == 0.0 or self.expo == 1.0


@dataclass(frozen=True)
class ModulusReport:
    ok: bool
    violation: str | None = None
    location: float | None = None

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class PiecewiseModulus:
    """Continuous piecewise modulus built from linear and power pieces.

    ``pieces[i]`` is active on ``[breakpoints[i-1], breakpoints[i])`` with the
    conventions ``breakpoints[-1] = 0`` and ``breakpoints[n] = inf``.
    """

    breakpoints: tuple
    pieces: tuple
    _arrays: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        pieces = tuple(p if isinstance(p, Piece) else Piece(*map(float, p)) for p in self.pieces)
        if len(pieces) != len(bp) + 1:
            raise ValidationError(
                f"need len(breakpoints) + 1 pieces, got {len(pieces)} pieces for {len(bp)} breakpoints"
            )
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", pieces)
        arrays = (
            np.array(bp, dtype=float),
            np.array([p.coef for p in pieces]),
            np.array([p.expo for p in pieces]),
            np.array([p.const for p in pieces]),
        )
        object.__setattr__(self, "_arrays", arrays)

    # evaluation -----------------------------------------------------------
    def _index(self, x, side):
        bp = self._arrays[0]
        return np.searchsorted(bp, x, side="left" if side == "left" else "right")

    def value(self, xi):
        x = np.asarray(xi, dtype=float)
        idx = self._index(x, "right")
        _, a, p, c = self._arrays
        out = a[idx] * x ** p[idx] + c[idx]
        return float(out) if out.ndim == 0 else out

    def deriv(self, xi, order=1, side="right"):
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        if side in ("max", "min"):
            lo = self.deriv(xi, order, "left")
            hi = self.deriv(xi, order, "right")
            out = np.maximum(lo, hi) if side == "max" else np.minimum(lo, hi)
            return float(out) if np.ndim(out) == 0 else out
        x = np.asarray(xi, dtype=float)
        idx = self._index(x, side)
        _, a, p, _ = self._arrays
        fac = a[idx].copy() if np.ndim(idx) else np.array(a[idx])
        for j in range(order):
            fac = fac * (p[idx] - j)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(fac == 0.0, 0.0, fac * x ** (p[idx] - order))
        return float(out) if out.ndim == 0 else out

    def increment(self, xi, h):
        """w(xi + h) - w(xi) for h >= 0, without cancellation when both points share a piece."""
        x = np.asarray(xi, dtype=float)
        h = np.asarray(h, dtype=float)
        i0 = self._index(x, "right")
        i1 = self._index(x + h, "right")
        _, a, p, _ = self._arrays
        with np.errstate(divide="ignore", invalid="ignore"):
            same = a[i0] * x ** p[i0] * np.expm1(p[i0] * np.log1p(h / x))
        same = np.where(p[i0] == 1.0, a[i0] * h, same)
        out = np.where(i0 == i1, same, self.value(x + h) - self.value(x))
        return float(out) if out.ndim == 0 else out

    def at_zero(self):
        """Limit of the modulus as xi -> 0+."""
        return self.pieces[0].const

    @property
    def bounded(self):
        return self.pieces[-1].is_constant

    def sup(self):
        return self.pieces[-1].const if self.bounded else math.inf

    @property
    def last_breakpoint(self):
        return self.breakpoints[-1] if self.breakpoints else 0.0

    def as_piecewise(self):
        return self

    # validation -----------------------------------------------------------
    @cached_property
    def report(self) -> ModulusReport:
        return _validate(self)

    def to_json(self):
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [[p.coef, p.expo, p.const] for p in self.pieces],
        }


def _validate(m: PiecewiseModulus) -> ModulusReport:
    bp = (0.0,) + m.breakpoints
    if bp[1:] and (min(np.diff(bp)) <= 0.0):
        k = int(np.argmin(np.diff(bp)))
        return ModulusReport(False, "breakpoints must be positive and strictly increasing", bp[k + 1])
    scale = max(1.0, max(abs(p.const) for p in m.pieces))
    for i, piece in enumerate(m.pieces):
        left = bp[i]
        if not (0.0 < piece.expo <= 1.0) and not piece.is_constant:
            if piece.expo > 1.0 and piece.coef > 0:
                return ModulusReport(False, f"convex piece {i} (exponent {piece.expo} > 1)", left)
            return ModulusReport(False, f"piece {i} has unsupported exponent {piece.expo}", left)
        if piece.coef < 0.0:
            return ModulusReport(False, f"piece {i} is decreasing", left)
        if i > 0:
            b = bp[i]
            prev = m.pieces[i - 1]
            jump = piece.value(b) - prev.value(b)
            if abs(jump) > 1e-12 * scale:
                return ModulusReport(False, f"discontinuity of size {jump:.3g}", b)
            d_left = prev.deriv(b) if not prev.is_constant else 0.0
            d_right = piece.deriv(b) if not piece.is_constant else 0.0
            if d_right > d_left * (1 + 1e-12) + 1e-15:
                return ModulusReport(False, "derivative increases across breakpoint (not concave)", b)
    if m.at_zero() < 0.0:
        return ModulusReport(False, "negative limit at zero", 0.0)
    first = m.pieces[0]
    if first.const == 0.0 and first.coef == 0.0:
        return ModulusReport(False, "modulus vanishes near zero", 0.0)
    return ModulusReport(True)


@dataclass(frozen=True)
class ModulusParams:
    """Power modulus ``H (xi/delta)**beta`` capped at H beyond delta, with the
    part below ``xi0`` replaced by its tangent line (``xi0 = 0`` gives no cap)."""

    H: float
    delta: float
    beta: float
    xi0: float = 0.0

    def __post_init__(self):
        for name in ("H", "delta", "beta", "xi0"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
        if self.H <= 0:
            raise ValidationError(f"H must be positive, got {self.H}")
        if self.delta <= 0:
            raise ValidationError(f"delta must be positive, got {self.delta}")
        if not 0 < self.beta < 1:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 <= self.xi0 <= self.delta:
            raise ValidationError(f"xi0 must lie in [0, delta], got {self.xi0}")

    @property
    def slope(self):
        """Slope of the tangent branch below xi0."""
        H, d, b, x0 = self.H, self.delta, self.beta, self.xi0
        return b * H * d**-b * x0 ** (b - 1) if x0 > 0 else math.inf

    def at_zero(self):
        return (1 - self.beta) * self.H * (self.xi0 / self.delta) ** self.beta

    def value(self, xi):
        x = np.asarray(xi, dtype=float)
        H, d, b, x0 = self.H, self.delta, self.beta, self.xi0
        power = H * (np.minimum(x, d) / d) ** b
        if x0 > 0:
            tangent = b * H * d**-b * x0 ** (b - 1) * x + (1 - b) * H * d**-b * x0**b
            power = np.where(x < x0, tangent, power)
        out = np.where(x > d, H, power)
        return float(out) if out.ndim == 0 else out

    @cached_property
    def piecewise(self) -> PiecewiseModulus:
        H, d, b, x0 = self.H, self.delta, self.beta, self.xi0
        scale = H * d**-b
        cap = Piece(0.0, 1.0, H)
        if x0 == d:
            return PiecewiseModulus((d,), (Piece(self.slope, 1.0, (1 - b) * scale * x0**b), cap))
        power = Piece(scale, b, 0.0)
        if x0 == 0:
            return PiecewiseModulus((d,), (power, cap))
        tangent = Piece(self.slope, 1.0, (1 - b) * scale * x0**b)
        return PiecewiseModulus((x0, d), (tangent, power, cap))

    def deriv(self, xi, order=1, side="right"):
        return self.piecewise.deriv(xi, order, side)

    def as_piecewise(self):
        return self.piecewise

    @property
    def breakpoints(self):
        return self.piecewise.breakpoints

    @property
    def bounded(self):
        return True

    def sup(self):
        return self.H

    def with_xi0(self, xi0):
        return replace(self, xi0=float(xi0))

    def to_json(self):
        return {"H": self.H, "delta": self.delta, "beta": self.beta, "xi0": self.xi0}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(float(obj["H"]), float(obj["delta"]), float(obj["beta"]), float(obj.get("xi0", 0.0)))
        except KeyError as exc:
            raise ValidationError(f"modulus JSON is missing key {exc}") from None


Modulus = Union[ModulusParams, PiecewiseModulus]


def load_modulus(obj) -> Modulus:
    """Build a modulus from its JSON object form."""
    if "pieces" in obj:
        return PiecewiseModulus(tuple(obj.get("breakpoints", ())), tuple(tuple(p) for p in obj["pieces"]))
    return ModulusParams.from_json(obj)


def _check_xi(xi):
    x = np.asarray(xi, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("the modulus is only defined for xi > 0")
    return x


def eval_omega(m: Modulus, xi):
    _check_xi(xi)
    return m.value(xi)


def d_omega(m: Modulus, xi, side="right"):
    _check_xi(xi)
    return m.deriv(xi, 1, side)


def d2_omega(m: Modulus, xi, side="right"):
    _check_xi(xi)
    return m.deriv(xi, 2, side)


def omega_at_zero(m: Modulus):
    return m.at_zero()


def tangent_cap(m: ModulusParams, xi0: float) -> ModulusParams:
    """Replace the power branch below ``xi0`` by its tangent line."""
    if not 0 < xi0 <= m.delta:
        raise DomainError(f"xi0 must lie in (0, delta={m.delta}], got {xi0}")
    return m.with_xi0(xi0)


def validate_modulus(p: Modulus) -> ModulusReport:
    return p.as_piecewise().report


def random_concave_modulus(rng: np.random.Generator, n_pieces: int | None = None) -> PiecewiseModulus:
    """Draw a random continuous, increasing, concave piecewise modulus."""
    if n_pieces is None:
        n_pieces = int(rng.integers(1, 6))
    bps = np.sort(np.exp(rng.uniform(np.log(0.01), np.log(10.0), n_pieces - 1)))
    while len(bps) > 1 and np.min(np.diff(bps)) <= 1e-3 * bps[:-1].min():
        bps = np.sort(np.exp(rng.uniform(np.log(0.01), np.log(10.0), n_pieces - 1)))
    omega0 = float(rng.uniform(0.05, 1.0)) if rng.random() < 0.5 else 0.0
    pieces: list[Piece] = []
    value, slope, left = omega0, None, 0.0
    for i in range(n_pieces):
        last = i == n_pieces - 1
        if i == 0:
            target = float(rng.uniform(0.3, 2.0))
        else:
            target = slope * float(rng.uniform(0.05, 1.0))
        if last and i > 0 and rng.random() < 0.5:
            piece = Piece(0.0, 1.0, value)
        elif rng.random() < 0.5:
            piece = Piece(target, 1.0, value - target * left)
        else:
            p = float(rng.uniform(0.2, 0.95))
            if i == 0:
                piece = Piece(target, p, value)
            else:
                a = target / (p * left ** (p - 1))
                piece = Piece(a, p, value - a * left**p)
        pieces.append(piece)
        if not last:
            right = float(bps[i])
            value = piece.value(right)
            slope = piece.deriv(right) if not piece.is_constant else 0.0
            left = right
    return PiecewiseModulus(tuple(bps), tuple(pieces))
