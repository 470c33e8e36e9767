"""Short-pulse closed forms and the HBT coincidence-histogram estimator."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .counting import PhotocountDistribution
from .errors import UndefinedG2Error

# (pi^2 - 8) / (8 pi^2): second-order coefficient of the cascade error rate
CASCADE_P2_COEFF = (math.pi ** 2 - 8.0) / (8.0 * math.pi ** 2)
SHORT_PULSE_LIMIT = 0.1


def _check_short(name, *pairs):
    for rate, T in pairs:
        if rate < 0 or T < 0:
            raise ValueError(f"{name}: rates and pulse length must be non-negative")
    if max(rate * T for rate, T in pairs) >= SHORT_PULSE_LIMIT:
        warnings.warn(f"{name}: gamma*T >= {SHORT_PULSE_LIMIT}, outside the short-pulse regime",
                      stacklevel=3)


def p2_short_2ls(gamma: float, T: float) -> float:
    """Two-photon probability of a pi-pulsed two-level system to first order in gamma*T."""
    _check_short("p2_short_2ls", (gamma, T))
    return gamma * T / 8.0


def g2_short_2ls(gamma: float, T: float) -> float:
    _check_short("g2_short_2ls", (gamma, T))
    return gamma * T / 4.0


def p2_short_3ls(gamma_x: float, gamma_2x: float, T: float) -> float:
    """Leading-order two-photon probability on the 2X line of the cascade (pi pulse)."""
    _check_short("p2_short_3ls", (gamma_x, T), (gamma_2x, T))
    return gamma_2x * gamma_x * T * T * CASCADE_P2_COEFF


def g2_short_3ls(gamma_x: float, gamma_2x: float, T: float) -> float:
    _check_short("g2_short_3ls", (gamma_x, T), (gamma_2x, T))
    return 2.0 * gamma_2x * gamma_x * T * T * CASCADE_P2_COEFF


def p2_density_3ls(t1, t1x, t2, gamma_x, gamma_2x, area=math.pi, T=1.0, simplified=False):
    """Approximate density of the 2X -> X -> (re-excite) -> 2X double emission.

    ``t1`` and ``t2`` are the two emission times on the 2X line and ``t1x``
    the intermediate emission on the X line.  ``simplified`` drops the
    X-decay factor ``exp(-gamma_x (t1x - t1))``.  Zero unless
    ``0 < t1 < t1x < T`` and ``t1x < t2``.
    """
    t1, t1x, t2 = (np.asarray(v, dtype=float) for v in (t1, t1x, t2))
    first = gamma_2x * np.sin(area * t1 / (2.0 * T)) ** 2
    decay = 1.0 if simplified else np.exp(-gamma_x * (t1x - t1))
    inside = gamma_2x * np.sin(area * (t2 - t1x) / (2.0 * T)) ** 2
    after = gamma_2x * np.sin(area * (T - t1x) / (2.0 * T)) ** 2 * np.exp(-gamma_2x * (t2 - T))
    ordered = (0.0 < t1) & (t1 < t1x) & (t1x < T)
    out = np.where(
        ordered & (t1x < t2) & (t2 < T),
        first * gamma_x * decay * inside,
        np.where(ordered & (T < t2), first * gamma_x * decay * after, 0.0),
    )
    return float(out) if out.ndim == 0 else out


def p2_3ls_quadrature(gamma_x, gamma_2x, T, area=math.pi, simplified=True, epsrel=1e-8):
    """Integrate ``p2_density_3ls`` over all emission times by nested adaptive quadrature."""

    def f(t2, t1x, t1):
        return p2_density_3ls(t1, t1x, t2, gamma_x, gamma_2x, area, T, simplified)

    opts = dict(epsabs=0.0, epsrel=epsrel)
    # t2 before the pulse end, then the exponential tail after it
    during, _ = integrate.tplquad(f, 0.0, T, lambda t1: t1, lambda t1: T,
                                  lambda t1, t1x: t1x, lambda t1, t1x: T, **opts)
    tail, _ = integrate.tplquad(f, 0.0, T, lambda t1: t1, lambda t1: T,
                                lambda t1, t1x: T, lambda t1, t1x: T + 50.0 / gamma_2x, **opts)
    return during + tail


def p2_3ls_double_integral(gamma_x, gamma_2x, T, area=math.pi):
    """Leading short-pulse term: the re-excitation must happen before the pulse ends."""

    def f(t1x, t1):
        return (np.sin(area * t1 / (2 * T)) ** 2) * np.sin(area * (T - t1x) / (2 * T)) ** 2

    val, _ = integrate.dblquad(f, 0.0, T, lambda t1: t1, lambda t1: T, epsabs=0.0, epsrel=1e-10)
    return gamma_2x * gamma_x * val


# --- HBT histogram analysis -------------------------------------------------


@dataclass(frozen=True)
class HbtHistogram:
    """Start-stop coincidence histogram.

    ``center_index`` is the bin holding zero delay; peaks repeat every
    ``period``.  ``window`` is the integration width per peak and is
    rounded to a whole number of bins.
    """

    bin_width: float
    counts: np.ndarray
    period: float
    center_index: int
    n_side: int = 16
    window: float = 2.6

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("histogram counts must be integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if self.bin_width <= 0 or self.period <= 0 or self.window <= 0:
            raise ValueError("bin_width, period and window must be positive")
        if self.n_side < 1:
            raise ValueError("n_side must be >= 1")
        if not 0 <= self.center_index < counts.size:
            raise ValueError("center_index lies outside the histogram")

    @property
    def window_bins(self) -> int:
        return max(1, int(round(self.window / self.bin_width)))

    def side_orders(self) -> list[int]:
        """Peak orders used for the side-peak average: +-1, +-2, ... (n_side in total)."""
        orders = []
        k = 1
        while len(orders) < self.n_side:
            orders.append(k)
            if len(orders) < self.n_side:
                orders.append(-k)
            k += 1
        return orders

    def peak_slice(self, order: int) -> slice:
        c = self.center_index + int(round(order * self.period / self.bin_width))
        start = c - self.window_bins // 2
        stop = start + self.window_bins
        if start < 0 or stop > self.counts.size:
            raise ValueError(f"peak {order} window [{start}, {stop}) lies outside the histogram")
        return slice(start, stop)

    def peak_area(self, order: int) -> int:
        return int(self.counts[self.peak_slice(order)].sum())

    def background_bins(self) -> np.ndarray:
        """Bins farther than one window from every peak center."""
        delay = (np.arange(self.counts.size) - self.center_index) * self.bin_width
        nearest = np.round(delay / self.period) * self.period
        far = np.abs(delay - nearest) > self.window
        return np.flatnonzero(far)

    def background_per_bin(self) -> float:
        idx = self.background_bins()
        if idx.size == 0:
            raise ValueError("no inter-peak bins available for background estimation")
        return float(self.counts[idx].mean())

    def scaled(self, factor: int) -> "HbtHistogram":
        return HbtHistogram(self.bin_width, self.counts * factor, self.period,
                            self.center_index, self.n_side, self.window)


@dataclass(frozen=True)
class HbtResult:
    n0: float
    n1: float
    n0_err: float
    n1_err: float
    background_per_bin: float
    background: float  # per integration window
    g2_raw: float
    g2_raw_err: float
    g2: float  # background corrected
    g2_err: float

    def __iter__(self):
        return iter((self.g2, self.g2_err))


def _ratio_err(num, den, num_err, den_err):
    return math.sqrt((num_err / den) ** 2 + (num * den_err / den ** 2) ** 2)


def hbt_g2(h: HbtHistogram, bg="estimate", min_significance: float = 3.0) -> HbtResult:
    """Pulse-wise ``g2[0] = N0 / N1`` with dark-count correction.

    ``N0`` is the center-peak area and ``N1`` the mean side-peak area.
    ``bg`` is a background per bin, ``"estimate"`` to average the
    inter-peak bins, or ``None``/0 for no correction.  Uncertainties are
    ``sqrt(N0)`` and ``sqrt(n_side N1) / n_side`` on the uncorrected
    areas, propagated quadratically through the ratio.  The corrected
    side-peak area must exceed ``min_significance`` times its uncertainty,
    otherwise the ratio is reported as undefined.
    """
    n0 = float(h.peak_area(0))
    areas = [h.peak_area(k) for k in h.side_orders()]
    n1 = float(np.mean(areas))
    n0_err = math.sqrt(n0)
    n1_err = math.sqrt(n1 * h.n_side) / h.n_side

    if bg is None:
        bg_bin = 0.0
    elif isinstance(bg, str):
        if bg != "estimate":
            raise ValueError(f"bg must be a number or 'estimate', got {bg!r}")
        bg_bin = h.background_per_bin()
    else:
        bg_bin = float(bg)
        if bg_bin < 0:
            raise ValueError("background must be non-negative")
    n_bg = bg_bin * h.window_bins

    if n1 <= 0:
        raise UndefinedG2Error("side peaks are empty; g2 is undefined")
    n1c = n1 - n_bg
    if n1c <= 0 or n1c < min_significance * n1_err:
        raise UndefinedG2Error(
            f"background-corrected side-peak area {n1c:.4g} is not significantly positive "
            f"(error {n1_err:.3g}); g2 is undefined"
        )
    n0c = n0 - n_bg
    return HbtResult(
        n0=n0, n1=n1, n0_err=n0_err, n1_err=n1_err,
        background_per_bin=bg_bin, background=n_bg,
        g2_raw=n0 / n1, g2_raw_err=_ratio_err(n0, n1, n0_err, n1_err),
        g2=n0c / n1c, g2_err=_ratio_err(n0c, n1c, n0_err, n1_err),
    )


def synth_histogram(
    d: PhotocountDistribution,
    pulses: int,
    dark_rate: float,
    bin_width: float = 0.06,
    period: float = 12.5,
    seed: int = 0,
    lifetime: float = 0.2,
    n_side: int = 16,
    window: float = 2.6,
) -> HbtHistogram:
    """Simulate a 50:50 HBT measurement of ``pulses`` excitation cycles.

    Each pulse emits ``n ~ P_n`` photons, each routed to one of two
    detectors with equal probability and delayed by an exponential with
    mean ``lifetime``.  Each detector also registers Poissonian dark counts
    at ``dark_rate`` per unit time.  All pairs (A, B) with delay inside
    the histogram range are binned.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x4842])))
    probs = np.clip(np.asarray(d.probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    n = rng.choice(probs.size, size=pulses, p=probs)
    pulse_of = np.repeat(np.arange(pulses), n)
    t = pulse_of * period + rng.exponential(lifetime, pulse_of.size)
    to_a = rng.random(t.size) < 0.5
    duration = pulses * period
    streams = []
    for sel in (to_a, ~to_a):
        dark = rng.uniform(0.0, duration, rng.poisson(dark_rate * duration))
        streams.append(np.sort(np.concatenate([t[sel], dark])))
    ta, tb = streams

    reach = n_side // 2 + n_side % 2 + 1
    half_bins = int(math.ceil((reach + 0.5) * period / bin_width))
    n_bins = 2 * half_bins + 1
    span = (half_bins + 0.5) * bin_width
    lo = np.searchsorted(tb, ta - span, side="left")
    hi = np.searchsorted(tb, ta + span, side="left")
    counts = np.zeros(n_bins, dtype=np.int64)
    width = hi - lo
    for j in range(int(width.max(initial=0))):
        sel = np.flatnonzero(width > j)
        delay = tb[lo[sel] + j] - ta[sel]
        idx = np.floor((delay + span) / bin_width).astype(np.int64)
        idx = idx[(idx >= 0) & (idx < n_bins)]
        counts += np.bincount(idx, minlength=n_bins)
    return HbtHistogram(bin_width, counts, period, half_bins, n_side, window)
