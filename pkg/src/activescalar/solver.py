"""Pseudo-spectral solver for dissipative active scalars on the periodic box.

    theta_t + u . grad(theta) = -(-Lap)^a theta + eps Lap theta

with u = theta (Burgers, T^1) or u = grad_perp (-Lap)^{-g} theta (SQG g = 1/2,
modified SQG 1/2 < g < 1, T^2).  The linear part is diagonal in Fourier space
and handled by its exact semigroup (integrating-factor RK4) or implicitly
(IMEX BDF2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .errors import BlowUpError, ValidationError
from .fields import ExperimentRecord, ScalarField, irfft, rfft
from .velocity import EquationParams

INTEGRATORS = ("ifrk4", "imex")


@dataclass(frozen=True)
class SimConfig:
    eq: EquationParams
    N: int
    dt: float
    t_end: float
    dealias: bool = True
    integrator: str = "ifrk4"
    record_every: int = 10
    seed: int = 0
    cfl: float = 0.5

    def __post_init__(self):
        if self.N < 4 or self.N & (self.N - 1):
            raise ValidationError("N must be a power of two >= 4")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.t_end < 0:
            raise ValidationError("t_end must be nonnegative")
        if self.integrator not in INTEGRATORS:
            raise ValidationError(f"integrator must be one of {INTEGRATORS}")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if not 0 < self.cfl <= 1:
            raise ValidationError("cfl must lie in (0, 1]")

    def to_json(self):
        return {"eq": self.eq.to_json(), "N": self.N, "dt": self.dt, "t_end": self.t_end, "dealias": self.dealias,
                "integrator": self.integrator, "record_every": self.record_every, "seed": self.seed, "cfl": self.cfl}

    @classmethod
    def from_json(cls, obj):
        kw = {k: obj[k] for k in ("N", "dt", "t_end", "dealias", "integrator", "record_every", "seed", "cfl")
              if k in obj}
        return cls(eq=EquationParams.from_json(obj["eq"]), **kw)


class _Spectral:
    """Wavenumbers, dealiasing mask and linear symbol for one (N, d)."""

    def __init__(self, N, d):
        self.N, self.d = N, d
        kfull = np.fft.fftfreq(N, 1.0 / N)
        khalf = np.fft.rfftfreq(N, 1.0 / N)
        if d == 1:
            self.k = (khalf,)
        else:
            self.k = (kfull[:, None] * np.ones((1, khalf.size)), np.ones((N, 1)) * khalf[None, :])
        self.kabs = np.sqrt(sum(kk**2 for kk in self.k))
        K = (N - 1) // 3
        keep = np.ones(self.kabs.shape, dtype=bool)
        for kk in self.k:
            keep &= np.abs(kk) <= K
        self.mask = keep
        self.shape = (N,) * d


@lru_cache(maxsize=16)
def _spectral(N, d):
    return _Spectral(N, d)


def linear_symbol(eq: EquationParams, N):
    """-(|k|^{2a} + eps |k|^2) on the half spectrum."""
    sp = _spectral(N, eq.dimension)
    return -(sp.kabs ** (2 * eq.alpha) + eq.epsilon * sp.kabs**2)


@dataclass(frozen=True, eq=False)
class VelocityField:
    components: tuple
    spectra: tuple

    @property
    def magnitude(self):
        return np.sqrt(sum(c**2 for c in self.components))

    @property
    def max_speed(self):
        return float(self.magnitude.max())

    def spectral_divergence(self):
        """max |k . u_hat|, normalized like the forward transform."""
        N = self.components[0].shape[0]
        sp = _spectral(N, len(self.components))
        div = sum(kk * s for kk, s in zip(sp.k, self.spectra))
        return float(np.max(np.abs(div))) if len(self.components) > 1 else math.nan


def _check_dims(theta: ScalarField, eq: EquationParams):
    if theta.d != eq.dimension:
        raise ValidationError(f"{eq.kind} lives in {eq.dimension}D, field is {theta.d}D")


def _velocity_spectra(spec, eq: EquationParams, sp: _Spectral):
    if eq.kind == "burgers":
        return (spec,)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.where(sp.kabs > 0, sp.kabs ** (-2 * eq.gamma), 0.0)
    k1, k2 = sp.k
    # grad_perp = (-d2, d1)
    return (-1j * k2 * mult * spec, 1j * k1 * mult * spec)


def velocity_from_theta(theta: ScalarField, eq: EquationParams) -> VelocityField:
    _check_dims(theta, eq)
    sp = _spectral(theta.N, theta.d)
    spectra = _velocity_spectra(theta.spectrum, eq, sp)
    if eq.kind == "burgers":
        return VelocityField((np.array(theta.values),), spectra)
    comps = tuple(irfft(s, sp.shape) for s in spectra)
    return VelocityField(comps, spectra)


class _Rhs:
    """Nonlinear term -(u . grad theta)^ in conservative form, with 2/3 dealiasing."""

    def __init__(self, eq: EquationParams, N, dealias=True):
        self.eq = eq
        self.sp = _spectral(N, eq.dimension)
        self.mask = self.sp.mask if dealias else np.ones(self.sp.kabs.shape, dtype=bool)
        self.last_speed = 0.0

    def __call__(self, spec):
        sp = self.sp
        s = spec * self.mask
        theta = irfft(s, sp.shape)
        if self.eq.kind == "burgers":
            self.last_speed = float(np.max(np.abs(theta)))
            flux = rfft(0.5 * theta * theta) * self.mask
            return -1j * sp.k[0] * flux
        us = [irfft(v, sp.shape) for v in _velocity_spectra(s, self.eq, sp)]
        self.last_speed = float(np.sqrt(us[0] ** 2 + us[1] ** 2).max())
        out = 0
        for kk, u in zip(sp.k, us):
            out = out - 1j * kk * (rfft(u * theta) * self.mask)
        return out


def _ifrk4(spec, L, dt, rhs):
    E = np.exp(0.5 * dt * L)
    E2 = E * E
    k1 = rhs(spec)
    k2 = rhs(E * (spec + 0.5 * dt * k1))
    k3 = rhs(E * spec + 0.5 * dt * k2)
    k4 = rhs(E2 * spec + dt * E * k3)
    return E2 * spec + (dt / 6.0) * (E2 * k1 + 2.0 * E * (k2 + k3) + k4)


def step(theta: ScalarField, eq: EquationParams, dt, nonlinear=True, dealias=True) -> ScalarField:
    """One integrating-factor RK4 step; ``nonlinear=False`` drops advection."""
    _check_dims(theta, eq)
    L = linear_symbol(eq, theta.N)
    rhs = _Rhs(eq, theta.N, dealias) if nonlinear else (lambda s: 0.0 * s)
    new = _ifrk4(theta.spectrum, L, dt, rhs)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite state at t={theta.t + dt:g}", theta.t + dt, [])
    return ScalarField.from_spectrum(new, theta.N, theta.d, theta.t + dt)


def gradient_max(theta: ScalarField):
    sp = _spectral(theta.N, theta.d)
    grads = [irfft(1j * kk * theta.spectrum, sp.shape) for kk in sp.k]
    return float(np.sqrt(sum(g**2 for g in grads)).max())


def energy(theta: ScalarField):
    """0.5 * int theta^2 over the box."""
    return float(0.5 * np.sum(theta.values**2) * theta.h**theta.d)


def make_record(theta: ScalarField, extra: dict | None = None) -> ExperimentRecord:
    extra = extra or {}
    return ExperimentRecord(theta.t, theta.sup_norm, energy(theta), gradient_max(theta),
                            dict(extra.get("holder", {})), extra.get("xi0"), extra.get("margin"))


def run(theta0: ScalarField, cfg: SimConfig, observer: Callable | None = None,
        ) -> Iterator[tuple[ExperimentRecord, ScalarField]]:
    """Integrate to ``cfg.t_end``, yielding ``(record, field)`` every ``record_every`` steps and at the end.

    ``observer(field)`` may return a dict with ``holder``, ``xi0`` and ``margin``
    entries that are merged into the record.  The step is the configured dt,
    reduced when needed so that dt * max|u| * N / (2 pi) <= cfl.  A non-finite
    state raises BlowUpError carrying the records produced so far.
    """
    eq = cfg.eq
    _check_dims(theta0, eq)
    if theta0.N != cfg.N:
        raise ValidationError(f"field has N={theta0.N}, config says {cfg.N}")
    L = linear_symbol(eq, cfg.N)
    rhs = _Rhs(eq, cfg.N, cfg.dealias)
    h = 2 * math.pi / cfg.N
    records = []

    def emit(spec, t):
        f = ScalarField.from_spectrum(spec, cfg.N, theta0.d, t)
        rec = make_record(f, observer(f) if observer else None)
        records.append(rec)
        return rec, f

    spec = theta0.spectrum.copy()
    t = theta0.t
    t_end = theta0.t + cfg.t_end
    yield emit(spec, t)
    prev = None  # (spec, N(spec), dt) for BDF2
    n = 0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        # overflow is caught below as blow-up, so silence the arithmetic warnings
        with np.errstate(over="ignore", invalid="ignore"):
            nl = rhs(spec)
            speed = rhs.last_speed
            dt = min(cfg.dt, t_end - t)
            if speed > 0:
                dt = min(dt, cfg.cfl * h / speed)
            if cfg.integrator == "ifrk4":
                new = _ifrk4(spec, L, dt, rhs)
            else:
                if prev is None or abs(prev[2] - dt) > 1e-12 * dt:
                    new = (spec + dt * nl) / (1 - dt * L)
                else:
                    new = (4 * spec - prev[0] + 2 * dt * (2 * nl - prev[1])) / (3 - 2 * dt * L)
                prev = (spec, nl, dt)
        if not np.all(np.isfinite(new)):
            raise BlowUpError(f"non-finite state at t={t + dt:g}", t + dt, records)
        spec = new
        t += dt
        n += 1
        if n % cfg.record_every == 0 or t >= t_end - 1e-14 * max(1.0, abs(t_end)):
            yield emit(spec, t)


def simulate(theta0: ScalarField, cfg: SimConfig, observer=None):
    """Run to completion; returns (records, final field)."""
    out = []
    last = theta0
    for rec, f in run(theta0, cfg, observer):
        out.append(rec)
        last = f
    return out, last


# ---------------------------------------------------------------------------
# initial data


def _scale_to(values, sup_norm, d, t=0.0):
    v = values - values.mean()
    top = np.max(np.abs(v))
    if top == 0:
        raise ValidationError("initial field is identically constant")
    return ScalarField(v * (sup_norm / top), t)


def single_mode(N, d=1, k=1, amplitude=1.0):
    """amplitude * sin(k x) in 1D, amplitude * cos(k x1) in 2D."""
    x = np.arange(N) * (2 * math.pi / N)
    if d == 1:
        return ScalarField(amplitude * np.sin(k * x))
    X, _ = np.meshgrid(x, x, indexing="ij")
    return ScalarField(amplitude * np.cos(k * X))


def _random_spectrum(N, d, rng, amp):
    sp = _spectral(N, d)
    phase = rng.uniform(0, 2 * math.pi, sp.kabs.shape)
    spec = amp(sp.kabs) * np.exp(1j * phase)
    spec = np.where(sp.mask & (sp.kabs > 0), spec, 0)
    return irfft(spec, sp.shape)


def random_band_limited(N, d, kmax, sup_norm, rng: np.random.Generator):
    """Random phases, flat amplitudes on 1 <= |k| <= kmax, rescaled to the given sup norm."""
    vals = _random_spectrum(N, d, rng, lambda k: (k <= kmax).astype(float))
    return _scale_to(vals, sup_norm, d)


def rough_field(N, d, s, sup_norm, rng: np.random.Generator):
    """Random phases with amplitudes |k|^{-d/2-s} up to the dealiasing cutoff.

    Small ``s`` gives a field that is merely bounded at grid scale; the profile
    is mean-free and rescaled to the requested sup norm.
    """
    vals = _random_spectrum(N, d, rng, lambda k: np.where(k > 0, k, 1.0) ** (-d / 2 - s))
    return _scale_to(vals, sup_norm, d)
