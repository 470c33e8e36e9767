"""Quantum-jump Monte-Carlo sampling of photocount statistics.

Trajectories are pure states evolved under the non-Hermitian Hamiltonian
``H_eff = H - (i/2) sum_k L_k^dag L_k`` on the same fixed grid as the
deterministic solver.  A jump fires in the step where the squared norm
drops below a uniform threshold; it is applied at the step midpoint,
into channel k with probability proportional to ``|L_k psi|^2``.

Once the laser is off the remaining decay is a classical cascade, so
the post-pulse emissions are sampled directly from the level
populations and exponential waiting times.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counting import PhotocountDistribution
from .models import THREE_LEVEL, TWO_LEVEL, PulseEnvelope, SystemModel
from .propagate import DEFAULT_OPTIONS, IntegrationOptions, rk4_step_matrix, time_grid

BLOCK_SIZE = 1 << 16


@dataclass(frozen=True)
class JumpRecord:
    """Emission events of all trajectories, sorted by trajectory then time."""

    trajectory: np.ndarray
    channel: np.ndarray
    time: np.ndarray
    channel_names: tuple

    def times(self, i: int, channel: str | None = None) -> np.ndarray:
        sel = self.trajectory == i
        if channel is not None:
            sel &= self.channel == self.channel_names.index(channel)
        return self.time[sel]


@dataclass(frozen=True)
class MonteCarloResult:
    distribution: PhotocountDistribution
    counts: np.ndarray  # (n_traj, n_channels) emissions per channel
    channel_names: tuple
    jumps: JumpRecord | None

    def counts_for(self, channel: str) -> np.ndarray:
        return self.counts[:, self.channel_names.index(channel)]


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # Philox is counter based; one independent stream per fixed-size block
    # keeps every trajectory reproducible regardless of scheduling.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _half_step_matrices(m: SystemModel, p: PulseEnvelope, opts: IntegrationOptions):
    """Yield ``(t_mid, K_first_half, K_second_half)`` for every grid step of the pulse."""
    decay = sum(L.conj().T @ L for L in m.channels.values())
    drive = -0.5j * m.coupling
    free = -0.5 * decay

    def gen(t):
        return float(p.profile(t)) * drive + free

    for seg in time_grid(m, p, 0.0, p.end, opts):
        h = seg.h
        q = 0.5 * h
        t = seg.times()
        cache = None
        for j in range(seg.steps):
            t0 = t[j]
            if p.shape == "square":
                if cache is None:
                    g = gen(t0)
                    K = rk4_step_matrix(g, g, g, q)
                    cache = (K, K)
                K1, K2 = cache
            else:
                K1 = rk4_step_matrix(gen(t0), gen(t0 + 0.5 * q), gen(t0 + q), q)
                K2 = rk4_step_matrix(gen(t0 + q), gen(t0 + 1.5 * q), gen(t0 + h), q)
            yield t0 + q, K1, K2


def _run_block(m, p, opts, n, rng, record):
    names = m.channel_names()
    ops = [m.channels[c] for c in names]
    psi = np.zeros((n, m.dim), dtype=complex)
    psi[:, m.ground] = 1.0
    threshold = rng.random(n)
    counts = np.zeros((n, len(names)), dtype=np.int64)
    events = []  # (traj, channel, time) arrays

    if p.area > 0:
        for t_mid, K1, K2 in _half_step_matrices(m, p, opts):
            mid = psi @ K1.T
            end = mid @ K2.T
            fired = np.flatnonzero(np.sum(np.abs(end) ** 2, axis=1) < threshold)
            if fired.size:
                src = mid[fired]
                weights = np.stack([np.sum(np.abs(src @ L.T) ** 2, axis=1) for L in ops], axis=1)
                cum = np.cumsum(weights, axis=1)
                u = rng.random(fired.size) * cum[:, -1]
                chan = (u[:, None] >= cum).sum(axis=1)
                chan = np.minimum(chan, len(ops) - 1)
                jumped = np.empty_like(src)
                for k, L in enumerate(ops):
                    sel = chan == k
                    jumped[sel] = src[sel] @ L.T
                jumped /= np.linalg.norm(jumped, axis=1)[:, None]
                end[fired] = jumped @ K2.T
                threshold[fired] = rng.random(fired.size)
                np.add.at(counts, (fired, chan), 1)
                if record:
                    events.append((fired, chan, np.full(fired.size, t_mid)))
            psi = end

    pops = np.abs(psi) ** 2
    pops /= pops.sum(axis=1)[:, None]
    _sample_free_decay(m, p.end, pops, rng, counts, events if record else None)
    return counts, events


def _sample_free_decay(m, t_off, pops, rng, counts, events):
    """Emissions after the drive has ended, from the level populations at ``t_off``."""
    n = pops.shape[0]
    u = rng.random(n)
    idx = np.arange(n)
    if m.kind == TWO_LEVEL:
        k = m.channel_names().index("default")
        emit = u < pops[:, 1]
        t = t_off + rng.exponential(1.0 / m.rates["default"], n)
        counts[emit, k] += 1
        if events is not None:
            events.append((idx[emit], np.full(emit.sum(), k), t[emit]))
        return
    if m.kind != THREE_LEVEL:
        raise ValueError(f"no free-decay sampler for model kind {m.kind!r}")
    k2x, kx = m.channel_names().index("2X"), m.channel_names().index("X")
    from_2x = u < pops[:, 2]
    from_x = ~from_2x & (u < pops[:, 2] + pops[:, 1])
    t_2x = t_off + rng.exponential(1.0 / m.rates["2X"], n)
    t_x = np.where(from_2x, t_2x, t_off) + rng.exponential(1.0 / m.rates["X"], n)
    counts[from_2x, k2x] += 1
    counts[from_2x | from_x, kx] += 1
    if events is not None:
        events.append((idx[from_2x], np.full(from_2x.sum(), k2x), t_2x[from_2x]))
        sel = from_2x | from_x
        events.append((idx[sel], np.full(sel.sum(), kx), t_x[sel]))


def mc_trajectories(
    m: SystemModel,
    p: PulseEnvelope,
    channel: str | None = None,
    n_traj: int = 100_000,
    seed: int = 0,
    opts: IntegrationOptions = DEFAULT_OPTIONS,
    nmax: int = 6,
    record_jumps: bool = False,
    block_size: int = BLOCK_SIZE,
) -> MonteCarloResult:
    """Sample ``n_traj`` jump trajectories over one pulse cycle.

    The returned distribution carries binomial standard errors
    ``sqrt(P(1-P)/n_traj)``.  Results depend only on ``(seed, block_size,
    opts)``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    channel = m.resolve_channel(channel)
    names = m.channel_names()
    all_counts = []
    traj, chan, times = [], [], []
    for b, start in enumerate(range(0, n_traj, block_size)):
        n = min(block_size, n_traj - start)
        counts, events = _run_block(m, p, opts, n, _block_rng(seed, b), record_jumps)
        all_counts.append(counts)
        for i, k, t in events:
            traj.append(i + start)
            chan.append(k)
            times.append(t)
    counts = np.concatenate(all_counts)

    jumps = None
    if record_jumps:
        traj = np.concatenate(traj) if traj else np.zeros(0, dtype=np.int64)
        chan = np.concatenate(chan) if chan else np.zeros(0, dtype=np.int64)
        times = np.concatenate(times) if times else np.zeros(0)
        order = np.lexsort((times, traj))
        jumps = JumpRecord(traj[order], chan[order].astype(np.int64), times[order], names)

    k = counts[:, names.index(channel)]
    hist = np.bincount(np.minimum(k, nmax + 1), minlength=nmax + 2) / n_traj
    probs = hist[: nmax + 1]
    stderr = np.sqrt(probs * (1.0 - probs) / n_traj)
    dist = PhotocountDistribution(channel, probs, float(hist[nmax + 1]), stderr)
    return MonteCarloResult(dist, counts, names, jumps)
