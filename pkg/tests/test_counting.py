import math
import warnings

import numpy as np
import pytest
from scipy import stats

from qdsps.counting import (
    PhotocountDistribution,
    correlator_moments,
    g2_from_counts,
    g2_two_photon_approx,
    g2_via_correlator,
    hierarchy_states,
    mean_and_factorial_moment,
    photocount_distribution,
)
from qdsps.errors import NumericalGuardError, UndefinedG2Error
from qdsps.models import GAUSSIAN, PulseEnvelope, make_2ls, make_standard_3ls
from qdsps.operators import DensityMatrix, trace_functional, vectorize
from qdsps.propagate import IntegrationOptions, evolve, horizon, master_generator, rk4_step_matrix, time_grid


def dist(*probs):
    return PhotocountDistribution.from_probs(probs)


@pytest.mark.parametrize("make", [make_2ls, make_standard_3ls])
def test_undriven_emits_nothing(make):
    m = make()
    for ch in m.channel_names():
        d = photocount_distribution(m, PulseEnvelope(1.0, 0.0), ch)
        assert d.probs[0] == pytest.approx(1.0, abs=1e-14)
        assert np.all(np.abs(d.probs[1:]) < 1e-14)


def test_2ls_short_pulse_p2():
    d = photocount_distribution(make_2ls(), PulseEnvelope(0.01))
    assert d[2] == pytest.approx(0.01 / 8, rel=0.15)


def test_3ls_short_pulse_p2():
    d = photocount_distribution(make_standard_3ls(), PulseEnvelope(0.01), "2X")
    assert d[2] == pytest.approx(4.74e-6, rel=0.15)


@pytest.mark.parametrize("probs,expected", [((0, 1, 0), (1, 0)), ((0, 0, 1, 0), (2, 2)), ((0.5, 0.5, 0), (0.5, 0))])
def test_moments(probs, expected):
    assert mean_and_factorial_moment(dist(*probs)) == pytest.approx(expected)


def test_g2_from_counts_examples():
    assert g2_from_counts(dist(0, 1, 0)) == 0
    assert g2_from_counts(dist(0, 0, 1)) == pytest.approx(0.5)
    with pytest.raises(UndefinedG2Error):
        g2_from_counts(dist(1, 0, 0))


def test_g2_poisson():
    # factorial moments of a Poisson law: <n(n-1)> = mu^2, so g2 = 1 up to truncation
    p = stats.poisson.pmf(np.arange(12), 0.1)
    d = dist(*p)
    assert d.residual < 1e-15
    assert g2_from_counts(d) == pytest.approx(1.0, abs=1e-12)


def test_two_photon_approximation_agrees():
    for m, gt in ((make_2ls(), 1e-3), (make_standard_3ls(), 0.01)):
        d = photocount_distribution(m, PulseEnvelope(gt))
        assert d[3] < 1e-4 * d[2]
        assert g2_two_photon_approx(d) == pytest.approx(g2_from_counts(d), rel=0.01)
    d = photocount_distribution(make_2ls(), PulseEnvelope(3.0))
    with pytest.warns(UserWarning):
        g2_two_photon_approx(d)


def test_correlator_undefined_without_drive():
    with pytest.raises(UndefinedG2Error):
        g2_via_correlator(make_2ls(), PulseEnvelope(1.0, 0.0))


def test_correlator_short_pulse_and_suppression():
    g2_2ls = g2_via_correlator(make_2ls(), PulseEnvelope(0.01))
    assert g2_2ls == pytest.approx(0.01 / 4, rel=0.15)
    g2_3ls = g2_via_correlator(make_standard_3ls(), PulseEnvelope(0.01), "2X")
    assert g2_3ls / g2_2ls < 0.01


def forward_source_moments(m, p, channel, opts=IntegrationOptions()):
    """Third route: d/dt y = L y + J rho accumulates int V(t,t1) J rho(t1) dt1; the
    pair rate tr[J y] then integrates to <n(n-1)>/2.  Integrated as one RK4 system."""
    d2 = m.dim ** 2
    J = m.jump(channel).matrix
    full = master_generator(m, p)
    w = trace_functional(m.dim) @ J
    n = 2 * d2 + 2

    def aug(g):
        a = np.zeros((n, n), dtype=complex)
        a[:d2, :d2] = g
        a[d2:2 * d2, d2:2 * d2] = g
        a[d2:2 * d2, :d2] = J
        a[2 * d2, :d2] = w  # running <n>
        a[2 * d2 + 1, d2:2 * d2] = w  # running <n(n-1)>/2
        return a

    y = np.zeros(n, dtype=complex)
    y[:d2] = vectorize(DensityMatrix.basis(m.dim, 0))
    for seg in time_grid(m, p, 0.0, horizon(m, p, opts), opts):
        t = seg.times()
        for j in range(seg.steps):
            M = rk4_step_matrix(aug(full.at(seg, t[j])), aug(full.at(seg, t[j] + seg.h / 2)),
                                aug(full.at(seg, t[j + 1])), seg.h)
            y = M @ y
    return y[2 * d2].real, 2 * y[2 * d2 + 1].real


@pytest.mark.parametrize("make,ch,shape,gt", [
    (make_2ls, "default", "square", 0.05),
    (make_2ls, "default", GAUSSIAN, 0.5),
    (make_standard_3ls, "2X", "square", 0.2),
    (make_standard_3ls, "X", GAUSSIAN, 0.2),
])
def test_three_routes_agree(make, ch, shape, gt):
    m = make()
    p = PulseEnvelope(gt, math.pi, shape)
    d = photocount_distribution(m, p, ch)
    mean, fact2 = mean_and_factorial_moment(d)
    c = correlator_moments(m, p, ch)
    f_mean, f_fact2 = forward_source_moments(m, p, ch)
    assert c.mean == pytest.approx(mean, rel=1e-6)
    assert c.factorial2 == pytest.approx(fact2, rel=1e-4)
    assert f_mean == pytest.approx(mean, rel=1e-8)
    assert f_fact2 == pytest.approx(fact2, rel=1e-8)


@pytest.mark.parametrize("make", [make_2ls, make_standard_3ls])
@pytest.mark.parametrize("shape", ["square", GAUSSIAN])
def test_hierarchy_resums_to_full_state(make, shape):
    m = make()
    p = PulseEnvelope(0.8, 2.5, shape)
    for ch in m.channel_names():
        for t in (0.2, p.end, p.end + 1.3, horizon(m, p)):
            rhos = hierarchy_states(m, p, ch, 8, t1=t)
            full = evolve(m, p, DensityMatrix.basis(m.dim, 0), 0.0, t)
            assert np.max(np.abs(rhos.sum(axis=0) - full.matrix)) < 1e-8


def test_channel_symmetry_3ls():
    m = make_standard_3ls()
    for gt in (0.01, 1.0):
        p = PulseEnvelope(gt)
        mx = mean_and_factorial_moment(photocount_distribution(m, p, "X"))[0]
        m2x = mean_and_factorial_moment(photocount_distribution(m, p, "2X"))[0]
        assert abs(mx - m2x) < 1e-6


def test_normalization_and_residual():
    d = photocount_distribution(make_2ls(), PulseEnvelope(2.0))
    assert math.fsum(d.probs) + d.residual == 1.0
    assert d.residual < 1e-9


def test_nmax_too_small_detected():
    with pytest.raises(NumericalGuardError, match="nmax"):
        photocount_distribution(make_2ls(), PulseEnvelope(10.0), nmax=2)
    with pytest.raises(ValueError):
        photocount_distribution(make_2ls(), PulseEnvelope(1.0), nmax=1)


def test_truncated_horizon_detected():
    with pytest.raises(NumericalGuardError, match="horizon"):
        photocount_distribution(make_2ls(), PulseEnvelope(0.1), opts=IntegrationOptions(horizon_factor=5))


def test_p2_step_halving():
    m = make_standard_3ls()
    p = PulseEnvelope(0.03)

    def observable(opts):
        return photocount_distribution(m, p, "2X", opts=opts).probs

    from qdsps.propagate import step_halving_deviation

    assert step_halving_deviation(observable) < 1e-6


@pytest.mark.parametrize("make,expected", [(make_2ls, 1.0), (make_standard_3ls, 2.0)])
def test_scaling_exponent_is_shape_robust(make, expected):
    m = make()
    x = np.logspace(math.log10(3e-3), math.log10(3e-2), 5)
    y = [g2_from_counts(photocount_distribution(m, PulseEnvelope(gt, math.pi, GAUSSIAN))) for gt in x]
    slope = np.polyfit(np.log(x), np.log(y), 1)[0]
    assert abs(slope - expected) <= 0.1
