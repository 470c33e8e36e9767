"""Fixed-step RK4 integration of the vectorized master equation.

The time axis is split into segments at the pulse edges so that every
discontinuity of the drive falls on a grid node.  Within a segment the
generator is affine in the Rabi rate, ``G(t) = Omega(t) G_drive + G_free``,
and each RK4 step is applied as a precomputed step matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalGuardError
from .models import SQUARE, PulseEnvelope, SystemModel, pulse_rate
from .operators import DensityMatrix, SuperOperator, devectorize, vectorize

DECAY_TOL = 1e-6


@dataclass(frozen=True)
class IntegrationOptions:
    """Step-size and horizon control.

    The step never exceeds ``min(T / steps_per_pulse, decay_resolution / gamma_max)``
    inside the pulse and ``decay_resolution / gamma_max`` after it.  An
    explicit ``dt`` is accepted only if it respects the same bounds.
    Full-cycle quantities integrate to ``pulse end + horizon_factor / gamma_min``.
    """

    dt: float | None = None
    horizon_factor: float = 15.0
    steps_per_pulse: int = 200
    decay_resolution: float = 0.01

    def __post_init__(self):
        if self.steps_per_pulse < 200:
            raise ValueError("steps_per_pulse must be >= 200")
        if not 0 < self.decay_resolution <= 0.01:
            raise ValueError("decay_resolution must lie in (0, 0.01]")
        if self.horizon_factor <= 0:
            raise ValueError("horizon_factor must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    def refined(self, factor: int = 2) -> "IntegrationOptions":
        """Same options with every step bound divided by ``factor``."""
        return replace(
            self,
            dt=None if self.dt is None else self.dt / factor,
            steps_per_pulse=self.steps_per_pulse * factor,
            decay_resolution=self.decay_resolution / factor,
        )

    def max_step(self, m: SystemModel, p: PulseEnvelope, driven: bool) -> float:
        bound = self.decay_resolution / m.gamma_max
        if driven:
            bound = min(bound, p.duration / self.steps_per_pulse)
        if self.dt is None:
            return bound
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt:g} exceeds the allowed step {bound:g} "
                f"(T/{self.steps_per_pulse}, {self.decay_resolution}/gamma_max)"
            )
        return self.dt


DEFAULT_OPTIONS = IntegrationOptions()


@dataclass(frozen=True)
class Segment:
    start: float
    stop: float
    steps: int
    driven: bool

    @property
    def h(self) -> float:
        return (self.stop - self.start) / self.steps

    def times(self) -> np.ndarray:
        return self.start + self.h * np.arange(self.steps + 1)


def horizon(m: SystemModel, p: PulseEnvelope, opts: IntegrationOptions = DEFAULT_OPTIONS) -> float:
    """End of a full pulse cycle: pulse end plus ``horizon_factor`` slowest lifetimes."""
    return p.end + opts.horizon_factor / m.gamma_min


def time_grid(m, p, t0, t1, opts=DEFAULT_OPTIONS) -> list[Segment]:
    """Split ``[t0, t1]`` at the pulse edges; each piece has an even step count."""
    if t1 < t0:
        raise ValueError(f"t1={t1} precedes t0={t0}")
    cuts = sorted({t0, t1, *(c for c in (0.0, p.end) if t0 < c < t1)})
    segments = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        driven = p.area > 0 and a >= 0.0 and b <= p.end
        n = max(2, math.ceil((b - a) / opts.max_step(m, p, driven) - 1e-9))
        n += n % 2
        segments.append(Segment(a, b, n, driven))
    return segments


def rk4_step_matrix(a0, am, a1, h):
    """One classical RK4 step for ``y' = A(t) y`` as a matrix.

    ``a0``, ``am`` and ``a1`` are the generator at the start, midpoint
    and end of the step.
    """
    eye = np.eye(a0.shape[0], dtype=complex)
    k1 = a0
    k2 = am @ (eye + 0.5 * h * k1)
    k3 = am @ (eye + 0.5 * h * k2)
    k4 = a1 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Generator:
    """``G(t) = Omega(t) * drive + free`` restricted to the current segment."""

    def __init__(self, drive, free, p):
        self.drive = np.asarray(drive, dtype=complex)
        self.free = np.asarray(free, dtype=complex)
        self.p = p

    def at(self, seg: Segment, t):
        if not seg.driven:
            return self.free
        return float(self.p.profile(t)) * self.drive + self.free

    def constant_on(self, seg: Segment) -> bool:
        return not seg.driven or self.p.shape == SQUARE

    def step_matrices(self, seg: Segment):
        """Yield the RK4 step matrix for every step of ``seg``."""
        h = seg.h
        if self.constant_on(seg):
            g = self.at(seg, seg.start)
            M = rk4_step_matrix(g, g, g, h)
            for _ in range(seg.steps):
                yield M
            return
        t = seg.times()
        for j in range(seg.steps):
            yield rk4_step_matrix(
                self.at(seg, t[j]), self.at(seg, t[j] + 0.5 * h), self.at(seg, t[j + 1]), h
            )

    def propagate(self, segments, y0):
        y = np.asarray(y0, dtype=complex)
        for seg in segments:
            if self.constant_on(seg):
                g = self.at(seg, seg.start)
                M = rk4_step_matrix(g, g, g, seg.h)
                y = np.linalg.matrix_power(M, seg.steps) @ y
            else:
                for M in self.step_matrices(seg):
                    y = M @ y
        return y

    def record(self, segments, y0):
        """Propagate and keep the state at every grid node."""
        y = np.asarray(y0, dtype=complex)
        states = [y]
        for seg in segments:
            for M in self.step_matrices(seg):
                y = M @ y
                states.append(y)
        return np.array(states)


def master_generator(m: SystemModel, p: PulseEnvelope, channel: str | None = None) -> _Generator:
    """Liouvillian, or the no-jump generator ``L - J[L_k]`` when ``channel`` is given."""
    free = m.dissipator_superop.matrix
    if channel is not None:
        free = free - m.jump(m.resolve_channel(channel)).matrix
    return _Generator(m.drive_superop.matrix, free, p)


def liouvillian_at(m: SystemModel, p: PulseEnvelope, t: float) -> SuperOperator:
    return pulse_rate(p, t) * m.drive_superop + m.dissipator_superop


def _as_density(rho0, m: SystemModel) -> DensityMatrix:
    rho = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0)
    if rho.dim != m.dim:
        raise ValueError(f"state dimension {rho.dim} does not match model dimension {m.dim}")
    return rho


def evolve(m, p, rho0, t0, t1, opts=DEFAULT_OPTIONS) -> DensityMatrix:
    """Full master-equation evolution ``rho(t1) = V(t1, t0) rho(t0)``."""
    rho0 = _as_density(rho0, m)
    gen = master_generator(m, p)
    y = gen.propagate(time_grid(m, p, t0, t1, opts), vectorize(rho0))
    return DensityMatrix(_hermitian_part(devectorize(y)), atol=1e-8)


def evolve_nojump(m, p, channel, rho0, t0, t1, opts=DEFAULT_OPTIONS) -> DensityMatrix:
    """Unnormalized state conditioned on no emission into ``channel`` during ``[t0, t1]``."""
    channel = m.resolve_channel(channel)
    rho0 = _as_density(rho0, m)
    gen = master_generator(m, p, channel)
    y = gen.propagate(time_grid(m, p, t0, t1, opts), vectorize(rho0))
    return DensityMatrix(_hermitian_part(devectorize(y)), kind="conditional", atol=1e-8)


def propagator_matrix(m, p, channel, t0, t1, opts=DEFAULT_OPTIONS) -> SuperOperator:
    """``V(t1, t0)`` for ``channel=None``, otherwise the no-jump map ``K(t1, t0)``."""
    gen = master_generator(m, p, channel)
    eye = np.eye(m.dim ** 2, dtype=complex)
    if t1 == t0:
        return SuperOperator(m.dim, eye)
    return SuperOperator(m.dim, gen.propagate(time_grid(m, p, t0, t1, opts), eye))


def _hermitian_part(a):
    # Only rounding-level anti-Hermitian residue is removed here; the
    # integrator itself maps Hermitian matrices to Hermitian matrices.
    asym = np.max(np.abs(a - a.conj().T))
    if asym > 1e-10:
        raise NumericalGuardError(f"evolved state lost Hermiticity ({asym:.2e})")
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class Trajectory:
    """States at every grid node of a segmented time axis."""

    times: np.ndarray
    states: np.ndarray  # (n_nodes, vector size)
    segments: tuple

    def segment_slices(self):
        i = 0
        for seg in self.segments:
            yield slice(i, i + seg.steps + 1)
            i += seg.steps

    def integrate(self, values: np.ndarray) -> float:
        """Composite Simpson rule over each segment (all step counts are even)."""
        total = 0.0
        for seg, sl in zip(self.segments, self.segment_slices()):
            v = values[sl]
            total += seg.h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())
        return total


def evolve_trajectory(m, p, rho0, t0, t1, opts=DEFAULT_OPTIONS, channel=None) -> Trajectory:
    rho0 = _as_density(rho0, m)
    segments = tuple(time_grid(m, p, t0, t1, opts))
    gen = master_generator(m, p, channel)
    states = gen.record(segments, vectorize(rho0))
    times = np.concatenate([segments[0].times()[:1]] + [s.times()[1:] for s in segments])
    return Trajectory(times, states, segments)


def check_decayed(rho: np.ndarray, m: SystemModel, tol: float = DECAY_TOL) -> float:
    """Raise unless the population left outside the ground state is below ``tol``."""
    rho = np.asarray(rho)
    leftover = float(np.real(np.trace(rho)) - np.real(rho[m.ground, m.ground]))
    if leftover > tol:
        raise NumericalGuardError(
            f"excited population {leftover:.3e} remains at the integration horizon; "
            "increase horizon_factor"
        )
    return leftover


def step_halving_deviation(observable, opts=DEFAULT_OPTIONS) -> float:
    """Largest change of ``observable(opts)`` when every step bound is halved."""
    a = np.asarray(observable(opts), dtype=float)
    b = np.asarray(observable(opts.refined(2)), dtype=float)
    return float(np.max(np.abs(a - b)))
