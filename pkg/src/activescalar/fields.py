"""Periodic scalar fields and the small record types passed between modules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ValidationError

TWO_PI = 2.0 * math.pi


def _threads():
    import os

    try:
        return max(1, int(os.environ.get("ACTIVESCALAR_THREADS", "1")))
    except ValueError:
        return 1


def rfft(values):
    return sfft.rfftn(values, workers=_threads())


def irfft(spec, shape):
    return sfft.irfftn(spec, s=shape, workers=_threads())


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of theta on the uniform grid of [0, 2pi)^d, d in {1, 2}.

    ``values[i]`` (1D) or ``values[i, j]`` (2D) sits at ``(i*h, j*h)`` with
    ``h = 2pi/N``.
    """

    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.ndim not in (1, 2):
            raise ValidationError(f"fields must be 1D or 2D, got shape {v.shape}")
        n = v.shape[0]
        if any(s != n for s in v.shape) or n < 2 or n & (n - 1):
            raise ValidationError(f"grid must be square with N a power of two, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.ndim

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def h(self):
        return TWO_PI / self.N

    @cached_property
    def spectrum(self):
        return rfft(self.values)

    @property
    def mean(self):
        return float(self.spectrum.flat[0].real / self.values.size)

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def coordinates(self):
        x = np.arange(self.N) * self.h
        return x if self.d == 1 else np.meshgrid(x, x, indexing="ij")

    @classmethod
    def from_spectrum(cls, spec, N, d, t=0.0):
        return cls(irfft(spec, (N,) * d), t)

    @classmethod
    def from_function(cls, f, N, d, t=0.0):
        x = np.arange(N) * (TWO_PI / N)
        if d == 1:
            return cls(f(x), t)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return cls(f(X, Y), t)

    def interpolate(self, *coords):
        """Periodic (bi)linear interpolation at physical coordinates."""
        if len(coords) != self.d:
            raise DomainError(f"need {self.d} coordinate arrays, got {len(coords)}")
        N, v = self.N, self.values
        if self.d == 1:
            s = np.mod(np.asarray(coords[0], dtype=float) / self.h, N)
            i0 = np.floor(s).astype(np.intp)
            w = s - i0
            i0 %= N
            return (1 - w) * v[i0] + w * v[(i0 + 1) % N]
        sx = np.mod(np.asarray(coords[0], dtype=float) / self.h, N)
        sy = np.mod(np.asarray(coords[1], dtype=float) / self.h, N)
        i0 = np.floor(sx).astype(np.intp)
        j0 = np.floor(sy).astype(np.intp)
        wx, wy = sx - i0, sy - j0
        i0 %= N
        j0 %= N
        i1, j1 = (i0 + 1) % N, (j0 + 1) % N
        return ((1 - wx) * (1 - wy) * v[i0, j0] + wx * (1 - wy) * v[i1, j0]
                + (1 - wx) * wy * v[i0, j1] + wx * wy * v[i1, j1])


def periodic_difference(x, y, period=TWO_PI):
    """Minimal-image displacement ``x - y`` on the torus."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return diff - period * np.round(diff / period)


@dataclass(frozen=True)
class BreakthroughPair:
    """Two points whose increment is compared against the modulus.

    ``margin`` is ``omega(xi) - (theta(x) - theta(y))``; nan when not measured.
    """

    x: tuple
    y: tuple
    margin: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(c) for c in np.atleast_1d(self.x)))
        object.__setattr__(self, "y", tuple(float(c) for c in np.atleast_1d(self.y)))
        if len(self.x) != len(self.y):
            raise DomainError("pair points must have the same dimension")
        if self.xi <= 0:
            raise DomainError("pair separation must be positive")

    @property
    def displacement(self):
        return periodic_difference(self.x, self.y)

    @property
    def xi(self):
        return float(np.linalg.norm(self.displacement))

    @property
    def direction(self):
        return tuple(self.displacement / self.xi)

    @property
    def midpoint(self):
        return tuple(np.asarray(self.y) + 0.5 * self.displacement)


@dataclass(frozen=True)
class ExperimentRecord:
    t: float
    sup_norm: float
    energy: float
    max_gradient: float
    holder: dict = field(default_factory=dict)
    xi0: float | None = None
    margin: float | None = None

    def row(self, betas=()):
        out = {
            "t": self.t,
            "sup_norm": self.sup_norm,
            "energy": self.energy,
            "max_gradient": self.max_gradient,
            "xi0": "" if self.xi0 is None else self.xi0,
            "margin": "" if self.margin is None else self.margin,
        }
        for b in betas or sorted(self.holder):
            out[f"holder_{b:g}"] = self.holder.get(b, "")
        return out
