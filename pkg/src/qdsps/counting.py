"""Channel-resolved photocount distributions and pulse-wise g2.

``photocount_distribution`` propagates the number-resolved hierarchy

    d/dt rho_n = (L(t) - J_k) rho_n + J_k rho_{n-1},   rho_n(0) = delta_n0 rho(0)

whose traces at the end of the cycle are the probabilities ``P_n``.  The
correlator route in ``g2_via_correlator`` reaches the same second factorial
moment through a forward state sweep and a backward (adjoint) sweep of the
full Liouvillian, followed by quadrature over the first emission time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalGuardError, UndefinedG2Error
from .models import PulseEnvelope, SystemModel
from .operators import DensityMatrix, trace_functional, vectorize
from .propagate import (
    DEFAULT_OPTIONS,
    IntegrationOptions,
    _as_density,
    _Generator,
    check_decayed,
    evolve_trajectory,
    horizon,
    master_generator,
    rk4_step_matrix,
    time_grid,
)

RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class PhotocountDistribution:
    """Probabilities ``P_0 .. P_nmax`` of counting n photons in one channel.

    ``residual`` is the probability mass beyond ``nmax``; by construction
    ``probs.sum() + residual == 1``.
    """

    channel: str
    probs: np.ndarray
    residual: float = 0.0
    stderr: np.ndarray | None = None

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a non-empty 1-D sequence")
        if np.any(probs < -1e-10) or np.any(probs > 1 + 1e-10):
            raise ValueError("photocount probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_probs(cls, probs, channel="default"):
        """Distribution whose residual absorbs whatever ``probs`` leaves out of unity."""
        probs = np.asarray(probs, dtype=float)
        return cls(channel, probs, 1.0 - math.fsum(probs))

    @property
    def nmax(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, n: int) -> float:
        return float(self.probs[n]) if n <= self.nmax else 0.0


def _hierarchy_generator(m: SystemModel, p: PulseEnvelope, channel: str, nmax: int) -> _Generator:
    d2 = m.dim ** 2
    jump = m.jump(channel).matrix
    nojump_free = m.dissipator_superop.matrix - jump
    eye = np.eye(nmax + 1)
    shift = np.eye(nmax + 1, k=-1)
    drive = np.kron(eye, m.drive_superop.matrix)
    free = np.kron(eye, nojump_free) + np.kron(shift, jump)
    assert drive.shape == (d2 * (nmax + 1),) * 2
    return _Generator(drive, free, p)


def hierarchy_states(m, p, channel, nmax, t1=None, opts=DEFAULT_OPTIONS, rho0=None) -> np.ndarray:
    """Number-resolved states ``rho_0 .. rho_nmax`` at time ``t1`` (default: end of cycle).

    Returns an array of shape ``(nmax + 1, dim, dim)``.
    """
    channel = m.resolve_channel(channel)
    rho0 = DensityMatrix.basis(m.dim, m.ground) if rho0 is None else _as_density(rho0, m)
    t1 = horizon(m, p, opts) if t1 is None else t1
    gen = _hierarchy_generator(m, p, channel, nmax)
    y0 = np.zeros((nmax + 1) * m.dim ** 2, dtype=complex)
    y0[: m.dim ** 2] = vectorize(rho0)
    y = gen.propagate(time_grid(m, p, 0.0, t1, opts), y0)
    return y.reshape(nmax + 1, m.dim, m.dim).transpose(0, 2, 1)


def photocount_distribution(
    m: SystemModel,
    p: PulseEnvelope,
    channel: str | None = None,
    nmax: int = 6,
    opts: IntegrationOptions = DEFAULT_OPTIONS,
    rho0=None,
    tol: float = RESIDUAL_TOL,
) -> PhotocountDistribution:
    """Photocount distribution of one channel over a full pulse cycle.

    The system starts in its ground state (or ``rho0``) at ``t = 0`` and is
    integrated until it has decayed (see ``propagate.horizon``).
    """
    if nmax < 2:
        raise ValueError("nmax must be at least 2")
    channel = m.resolve_channel(channel)
    rhos = hierarchy_states(m, p, channel, nmax, opts=opts, rho0=rho0)
    check_decayed(rhos.sum(axis=0), m)
    probs = np.array([np.trace(r).real for r in rhos])
    probs = np.where(np.abs(probs) < 1e-15, 0.0, probs)
    residual = 1.0 - math.fsum(probs)
    if residual > tol:
        raise NumericalGuardError(
            f"residual probability {residual:.3e} beyond n={nmax} exceeds {tol:g}; increase nmax"
        )
    return PhotocountDistribution(channel, probs, residual)


def mean_and_factorial_moment(d: PhotocountDistribution) -> tuple[float, float]:
    """``(<n>, <n(n-1)>)`` of a photocount distribution."""
    n = np.arange(d.nmax + 1)
    return float(np.dot(n, d.probs)), float(np.dot(n * (n - 1), d.probs))


def g2_from_counts(d: PhotocountDistribution) -> float:
    """Pulse-wise ``g2[0] = <n(n-1)> / <n>^2``."""
    mean, fact2 = mean_and_factorial_moment(d)
    if mean <= 0:
        raise UndefinedG2Error("g2 is undefined: the channel emits no photons")
    return fact2 / mean ** 2


def g2_two_photon_approx(d: PhotocountDistribution) -> float:
    """``2 P2 / (P1 + 2 P2)^2``, valid when three-photon events are negligible.

    Warns if ``P3 >= 1e-4 * P2``.
    """
    p1, p2, p3 = d[1], d[2], d[3]
    denom = (p1 + 2.0 * p2) ** 2
    if denom <= 0:
        raise UndefinedG2Error("g2 is undefined: P1 = P2 = 0")
    if p3 >= 1e-4 * p2:
        warnings.warn("P3 is not negligible against P2; two-photon approximation is unreliable",
                      stacklevel=2)
    return 2.0 * p2 / denom


@dataclass(frozen=True)
class CorrelatorMoments:
    mean: float
    factorial2: float

    @property
    def g2(self) -> float:
        if self.mean <= 0:
            raise UndefinedG2Error("g2 is undefined: the channel emits no photons")
        return self.factorial2 / self.mean ** 2


def correlator_moments(m, p, channel=None, opts=DEFAULT_OPTIONS, rho0=None) -> CorrelatorMoments:
    """``<n>`` and ``<n(n-1)>`` from the intensity and two-time correlator integrals.

    ``<n(n-1)> = 2 int dt1 int_{t1} dt2 tr[J V(t2,t1) J V(t1,0) rho0]``.  The
    inner integral is the adjoint functional ``c(t1)`` solving
    ``dc/dt1 = -w - L(t1)^T c`` with ``c(t_end) = 0`` and ``w`` the emission
    flux functional; both outer integrals use Simpson's rule.
    """
    channel = m.resolve_channel(channel)
    rho0 = DensityMatrix.basis(m.dim, m.ground) if rho0 is None else _as_density(rho0, m)
    t_end = horizon(m, p, opts)
    traj = evolve_trajectory(m, p, rho0, 0.0, t_end, opts)
    check_decayed(np.reshape(traj.states[-1], (m.dim, m.dim), order="F"), m)

    jump = m.jump(channel).matrix
    w = trace_functional(m.dim) @ jump  # w @ vec(rho) = tr(J rho)
    flux = (traj.states @ w).real
    mean = traj.integrate(flux)

    adj = _adjoint_sweep(master_generator(m, p), traj.segments, w)
    pair = np.einsum("ij,jk,ik->i", adj, jump, traj.states).real
    return CorrelatorMoments(mean, 2.0 * traj.integrate(pair))


def _adjoint_sweep(gen: _Generator, segments, w) -> np.ndarray:
    """Backward solution of ``dc/dt = -w - G(t)^T c``, ``c(t_end) = 0``, on the grid.

    Written in reversed time ``s = t_end - t`` with the augmented state
    ``(c, 1)`` so the source term is carried by the RK4 step matrices.
    """
    n = w.size

    def aug(g):
        a = np.zeros((n + 1, n + 1), dtype=complex)
        a[:n, :n] = g.T
        a[:n, n] = w
        return a

    z = np.zeros(n + 1, dtype=complex)
    z[n] = 1.0
    out = [z[:n]]
    for seg in reversed(segments):
        h = seg.h
        t = seg.times()
        if gen.constant_on(seg):
            g = aug(gen.at(seg, seg.start))
            M = rk4_step_matrix(g, g, g, h)
            for _ in range(seg.steps):
                z = M @ z
                out.append(z[:n])
            continue
        for j in range(seg.steps, 0, -1):
            M = rk4_step_matrix(
                aug(gen.at(seg, t[j])), aug(gen.at(seg, t[j] - 0.5 * h)), aug(gen.at(seg, t[j - 1])), h
            )
            z = M @ z
            out.append(z[:n])
    return np.array(out[::-1])


def g2_via_correlator(m, p, channel=None, opts=DEFAULT_OPTIONS, rho0=None) -> float:
    return correlator_moments(m, p, channel, opts, rho0).g2
