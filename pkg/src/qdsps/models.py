"""Driven two-level system, biexciton-cascade three-level system and pulses.

All quantities are expressed through the instantaneous Rabi rate
``Omega(t)``: for the two-level system it is the one-photon rate
``mu E / hbar``, for the cascade the effective two-photon rate
``(mu E)^2 / (hbar E_b)``.  Times are in units of the reference lifetime.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .operators import SuperOperator, commutator_superop, dissipator, jump_superop

SQUARE = "square"
GAUSSIAN = "gaussian"
GAUSSIAN_CUTOFF = 4.0  # truncation in units of sigma, each side

TWO_LEVEL = "2ls"
THREE_LEVEL = "3ls"


@dataclass(frozen=True)
class PulseEnvelope:
    """Laser pulse starting at ``t = 0`` with total area ``area``.

    ``duration`` is the full length of a square pulse, or the FWHM of the
    Rabi rate for a Gaussian.  Gaussians are truncated at
    ``+-GAUSSIAN_CUTOFF`` sigma and their peak rescaled so the truncated
    area is exact.
    """

    duration: float
    area: float = math.pi
    shape: str = SQUARE

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        if not self.area >= 0:
            raise ValueError(f"pulse area must be non-negative, got {self.area}")
        if self.shape not in (SQUARE, GAUSSIAN):
            raise ValueError(f"unknown pulse shape {self.shape!r}")

    @property
    def sigma(self) -> float:
        return self.duration / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    @property
    def end(self) -> float:
        """Time after which the drive is identically zero."""
        if self.shape == SQUARE:
            return self.duration
        return 2.0 * GAUSSIAN_CUTOFF * self.sigma

    @property
    def peak(self) -> float:
        if self.shape == SQUARE:
            return self.area / self.duration
        c = GAUSSIAN_CUTOFF
        norm = self.sigma * math.sqrt(2.0 * math.pi) * special.erf(c / math.sqrt(2.0))
        return self.area / norm

    def profile(self, t):
        """Rabi rate on the closed support ``[0, end]`` without the window.

        Used by the integrators so that the value at a discontinuity is
        taken from inside the pulse.
        """
        t = np.asarray(t, dtype=float)
        if self.shape == SQUARE:
            return np.full_like(t, self.peak)
        x = (t - 0.5 * self.end) / self.sigma
        return self.peak * np.exp(-0.5 * x * x)

    def rate(self, t):
        return pulse_rate(self, t)

    def integrated_area(self) -> float:
        val, _ = integrate.quad(lambda s: float(self.profile(s)), 0.0, self.end,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        return val


def pulse_rate(p: PulseEnvelope, t):
    """Instantaneous Rabi rate ``Omega(t)``; zero outside ``[0, p.end]``."""
    t_arr = np.asarray(t, dtype=float)
    inside = (t_arr >= 0.0) & (t_arr <= p.end)
    out = np.where(inside, p.profile(t_arr), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Level structure, drive coupling and named loss channels.

    ``channels`` maps a channel name to its loss operator
    ``sqrt(gamma_k) sigma_k``.  ``coupling`` is the dimensionless matrix
    multiplying ``Omega(t)/2`` in the Hamiltonian.
    """

    kind: str
    rates: dict
    coupling: np.ndarray
    channels: dict
    excited: int
    labels: tuple = field(default=())

    @property
    def dim(self) -> int:
        return self.coupling.shape[0]

    @property
    def gamma_min(self) -> float:
        return min(self.rates.values())

    @property
    def gamma_max(self) -> float:
        return max(self.rates.values())

    @property
    def ground(self) -> int:
        return 0

    def channel_names(self) -> tuple:
        return tuple(self.channels)

    def loss(self, channel: str) -> np.ndarray:
        try:
            return self.channels[channel]
        except KeyError:
            raise ValueError(
                f"unknown channel {channel!r} for {self.kind}; choose from {list(self.channels)}"
            ) from None

    def resolve_channel(self, channel) -> str:
        if channel in (None, "default"):
            if self.kind == TWO_LEVEL:
                return "default"
            return "2X"
        self.loss(channel)
        return channel

    # Cached superoperator pieces.  The Liouvillian at time t is
    # ``rate(t) * drive_superop + dissipator_superop``.
    @property
    def drive_superop(self) -> SuperOperator:
        return _cached(self, "_drive", lambda: -1j * commutator_superop(0.5 * self.coupling))

    @property
    def dissipator_superop(self) -> SuperOperator:
        def build():
            out = SuperOperator(self.dim, np.zeros((self.dim ** 2,) * 2))
            for L in self.channels.values():
                out = out + dissipator(L)
            return out
        return _cached(self, "_diss", build)

    def jump(self, channel: str) -> SuperOperator:
        return _cached(self, f"_jump_{channel}", lambda: jump_superop(self.loss(channel)))


def _cached(obj, key, build):
    cache = obj.__dict__.setdefault("_cache", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be strictly positive, got {value}")
    return float(value)


def make_2ls(gamma: float = 1.0) -> SystemModel:
    """Resonantly driven two-level system; basis ``(|g>, |e>)``."""
    gamma = _positive("gamma", gamma)
    coupling = np.array([[0, 1], [1, 0]], dtype=complex)
    sigma = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
    return SystemModel(
        kind=TWO_LEVEL,
        rates={"default": gamma},
        coupling=coupling,
        channels={"default": math.sqrt(gamma) * sigma},
        excited=1,
        labels=("g", "e"),
    )


def make_3ls(gamma_x: float, gamma_2x: float) -> SystemModel:
    """Effective cascade ``|0>, |X'>, |2X>`` with two-photon drive ``|0> <-> |2X>``."""
    gamma_x = _positive("gamma_x", gamma_x)
    gamma_2x = _positive("gamma_2x", gamma_2x)
    coupling = np.zeros((3, 3), dtype=complex)
    coupling[0, 2] = coupling[2, 0] = 1.0
    s_2x = np.zeros((3, 3), dtype=complex)
    s_2x[1, 2] = 1.0  # |X'><2X|
    s_x = np.zeros((3, 3), dtype=complex)
    s_x[0, 1] = 1.0  # |0><X'|
    return SystemModel(
        kind=THREE_LEVEL,
        rates={"2X": gamma_2x, "X": gamma_x},
        coupling=coupling,
        channels={"2X": math.sqrt(gamma_2x) * s_2x, "X": math.sqrt(gamma_x) * s_x},
        excited=2,
        labels=("0", "X'", "2X"),
    )


def make_standard_3ls(gamma: float = 1.0) -> SystemModel:
    """Cascade with ``gamma_X = gamma`` and ``gamma_2X = 2 gamma``."""
    gamma = _positive("gamma", gamma)
    return make_3ls(gamma, 2.0 * gamma)


def make_model(system: str, gamma: float = 1.0) -> SystemModel:
    if system == TWO_LEVEL:
        return make_2ls(gamma)
    if system == THREE_LEVEL:
        return make_standard_3ls(gamma)
    raise ValueError(f"unknown system {system!r}; expected '2ls' or '3ls'")


def hamiltonian_at(m: SystemModel, p: PulseEnvelope, t: float) -> np.ndarray:
    return 0.5 * pulse_rate(p, t) * m.coupling


def rabi_population(area) -> np.ndarray:
    """Ideal excited population ``sin^2(A/2)`` after a lossless pulse."""
    return np.sin(np.asarray(area) / 2.0) ** 2
