import math
import warnings

import numpy as np
import pytest

from qdsps.analytics import (
    CASCADE_P2_COEFF,
    HbtHistogram,
    g2_short_2ls,
    g2_short_3ls,
    hbt_g2,
    p2_3ls_double_integral,
    p2_3ls_quadrature,
    p2_density_3ls,
    p2_short_2ls,
    p2_short_3ls,
    synth_histogram,
)
from qdsps.counting import PhotocountDistribution, g2_from_counts, photocount_distribution
from qdsps.errors import UndefinedG2Error
from qdsps.models import PulseEnvelope, make_2ls, make_standard_3ls


def test_p2_short_2ls():
    assert p2_short_2ls(1.0, 0.01) == pytest.approx(1.25e-3)
    assert p2_short_2ls(1.0, 0.0) == 0.0
    assert p2_short_2ls(1.0, 0.04) == pytest.approx(5e-3)
    assert g2_short_2ls(1.0, 0.01) == pytest.approx(2.5e-3)
    with pytest.raises(ValueError):
        p2_short_2ls(-1.0, 0.01)
    with pytest.warns(UserWarning):
        p2_short_2ls(1.0, 0.5)


def test_p2_short_3ls():
    assert CASCADE_P2_COEFF == pytest.approx(0.0236788, rel=1e-6)
    assert p2_short_3ls(1.0, 2.0, 0.01) == pytest.approx(4.7357e-6, rel=1e-4)
    assert p2_short_3ls(1.0, 2.0, 0.0) == 0.0
    assert p2_short_3ls(1.0, 2.0, 0.02) == pytest.approx(4 * p2_short_3ls(1.0, 2.0, 0.01))
    assert g2_short_3ls(1.0, 2.0, 0.01) == pytest.approx(2 * p2_short_3ls(1.0, 2.0, 0.01))
    with pytest.raises(ValueError):
        p2_short_3ls(1.0, -2.0, 0.01)


def test_density_support():
    kw = dict(gamma_x=1.0, gamma_2x=2.0, area=math.pi, T=0.01)
    assert p2_density_3ls(0.005, 0.006, 0.004, **kw) == 0.0  # t2 < t1
    assert p2_density_3ls(0.0, 0.006, 0.008, **kw) == 0.0
    assert p2_density_3ls(0.002, 0.006, 0.008, **kw) > 0
    assert p2_density_3ls(0.002, 0.006, 0.5, **kw) > 0
    assert p2_density_3ls(0.002, 0.011, 0.5, **kw) == 0.0  # X emission after the pulse
    full = p2_density_3ls(0.002, 0.006, 0.008, **kw)
    simple = p2_density_3ls(0.002, 0.006, 0.008, simplified=True, **kw)
    assert full == pytest.approx(simple * math.exp(-0.004))


def test_density_quadrature_chain():
    closed = p2_short_3ls(1.0, 2.0, 0.01)
    assert p2_3ls_double_integral(1.0, 2.0, 0.01) == pytest.approx(closed, rel=1e-6)
    assert p2_3ls_quadrature(1.0, 2.0, 0.01) == pytest.approx(closed, rel=0.01)


def make_hist(peak_areas, bg_per_bin=0, period_bins=20, window_bins=5, n_side=4):
    """Histogram with rectangular peaks of the given areas on a flat background."""
    n_peaks = len(peak_areas)
    center = (n_peaks // 2) * period_bins + period_bins // 2
    counts = np.full(n_peaks * period_bins + period_bins, bg_per_bin, dtype=np.int64)
    for k, area in enumerate(peak_areas):
        c = center + (k - n_peaks // 2) * period_bins
        share = np.full(window_bins, area // window_bins)
        share[: area % window_bins] += 1
        counts[c - window_bins // 2: c - window_bins // 2 + window_bins] += share
    return HbtHistogram(1.0, counts, float(period_bins), center, n_side, float(window_bins))


def test_hbt_poissonian_reference():
    h = make_hist([1000] * 5)
    r = hbt_g2(h, bg=0)
    assert r.g2 == pytest.approx(1.0)
    g, err = r
    assert err == pytest.approx(math.sqrt((math.sqrt(1000) / 1000) ** 2 + (math.sqrt(4000) / 4 / 1000) ** 2))


def test_hbt_background_only_center():
    h = make_hist([800, 800, 0, 800, 800], bg_per_bin=7)
    r = hbt_g2(h, bg="estimate")
    assert r.background_per_bin == pytest.approx(7.0)
    assert r.g2 == 0.0
    assert r.g2_raw == pytest.approx(35 / 835)


def test_hbt_sixteen_side_peaks_error():
    h = make_hist([400] * 8 + [100] + [400] * 8, n_side=16)
    r = hbt_g2(h, bg=0)
    assert r.n1_err == pytest.approx(math.sqrt(r.n1) / 4)
    assert r.n0_err == pytest.approx(10.0)


def test_hbt_scale_invariance():
    h = make_hist([900, 900, 120, 900, 900], bg_per_bin=3)
    a, b = hbt_g2(h), hbt_g2(h.scaled(10))
    assert a.g2 == pytest.approx(b.g2)
    assert b.g2_err == pytest.approx(a.g2_err / math.sqrt(10))


def test_hbt_undefined():
    with pytest.raises(UndefinedG2Error):
        hbt_g2(make_hist([0] * 5))
    with pytest.raises(UndefinedG2Error):
        hbt_g2(make_hist([0] * 5, bg_per_bin=5))


def test_hbt_window_out_of_range():
    h = make_hist([100] * 3, n_side=4)
    with pytest.raises(ValueError, match="outside"):
        hbt_g2(h)


def test_synth_single_photon_source_has_empty_center():
    d = PhotocountDistribution.from_probs([0, 1, 0])
    h = synth_histogram(d, 50_000, dark_rate=0.0, seed=1)
    assert h.peak_area(0) == 0
    assert h.peak_area(1) > 0


def test_synth_dark_only_is_undefined():
    d = PhotocountDistribution.from_probs([1, 0, 0])
    h = synth_histogram(d, 50_000, dark_rate=0.05, seed=2)
    assert h.counts.sum() > 0
    with pytest.raises(UndefinedG2Error):
        hbt_g2(h)


def test_synth_deterministic():
    d = PhotocountDistribution.from_probs([0.1, 0.8, 0.1])
    a = synth_histogram(d, 20_000, 0.01, seed=5)
    b = synth_histogram(d, 20_000, 0.01, seed=5)
    assert np.array_equal(a.counts, b.counts)


def test_synth_roundtrip_2ls():
    d = photocount_distribution(make_2ls(), PulseEnvelope(0.1))
    target = g2_from_counts(d)
    r = hbt_g2(synth_histogram(d, 1_000_000, dark_rate=0.002, seed=11))
    assert abs(r.g2 - target) < 3 * r.g2_err
