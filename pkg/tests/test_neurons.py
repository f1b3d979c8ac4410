from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resonet.fixed import PAYLOAD_FORMAT, STATE_FORMAT, Diagnostics
from resonet.neurons import (
    UNARY_RESET, FixedComplex, HopfParams, LifParams, RfParams, SpikeEvent, accumulate_synaptic,
    hopf_step, hopf_step_fixed, impulse_response, lif_step, rf_reset_step, rf_step,
)

F = STATE_FORMAT


# ----------------------------------------------------------------------------- LIF

def test_lif_zero_input_stays_zero():
    u, v, s = lif_step(np.zeros(1), np.zeros(1), np.zeros(1), LifParams(0.9, 0.9, 1.0))
    assert u[0] == v[0] == 0 and not s[0]


def test_lif_memoryless_threshold():
    p = LifParams(0.0, 0.0, 10.0)
    u, v, s = lif_step(np.zeros(1), np.zeros(1), np.array([11.0]), p)
    assert s[0] and v[0] == 0
    uq, vq, sq = lif_step(np.zeros(1, np.int64), np.zeros(1, np.int64), F.to_fixed([11.0]), p, F)
    assert sq[0] and vq[0] == 0


def _lif_rational(a, lu, lv, steps):
    u = v = Fraction(0)
    out = []
    for t in range(steps):
        u = lu * u + (a if t == 0 else 0)
        v = lv * v + u
        out.append((u, v))
    return out


def test_lif_fixed_matches_rational_cascade():
    p = LifParams(0.5, 0.5, 1000.0)
    tr = impulse_response("lif", p, 10, fmt=F, impulse=64.0)
    exact = _lif_rational(Fraction(64), Fraction(1, 2), Fraction(1, 2), 10)
    assert tr["u"][:2].tolist() == [64, 32] and tr["v"][:2].tolist() == [64, 64]
    for t, (u, v) in enumerate(exact):
        assert Fraction(tr["u"][t]) == u and Fraction(tr["v"][t]) == v


@given(st.sampled_from([0.25, 0.5, 0.75, 0.875]), st.sampled_from([0.25, 0.5, 0.75]), st.integers(1, 40))
def test_lif_closed_form(lu, lv, t):
    # v[t] = a * sum_k lv^(t-k) lu^k for a single impulse
    a = Fraction(3)
    lu_, lv_ = Fraction(lu), Fraction(lv)
    closed = a * sum(lv_ ** (t - k) * lu_ ** k for k in range(t + 1))
    assert _lif_rational(a, lu_, lv_, t + 1)[t][1] == closed
    tr = impulse_response("lif", LifParams(lu, lv, 1e6), t + 1, impulse=3.0)
    assert tr["v"][t] == pytest.approx(float(closed), rel=1e-12)


def test_lif_params_validated():
    with pytest.raises(ValueError):
        LifParams(1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        LifParams(0.5, 0.5, 0.0)


# ----------------------------------------------------------------------------- RF

def test_rf_zero_state_impulse():
    z, s, _ = rf_step(np.zeros(1, complex), np.array([1 + 0j]), RfParams(0.9, 0.3))
    assert z[0] == 1 and not s[0]


def test_rf_pure_rotation_four_steps():
    p = RfParams(1.0, np.pi / 2)
    z = np.array([1 + 0j])
    z1, _, _ = rf_step(z, 0j, p)
    assert z1[0] == pytest.approx(1j, abs=1e-15)
    for _ in range(3):
        z1, _, _ = rf_step(z1, 0j, p)
    assert z1[0] == pytest.approx(1 + 0j, abs=1e-15)
    with pytest.raises(ValueError):
        p.rotation_fixed()


@pytest.mark.parametrize("omega,im_seq", [(0.3, (-1e-3, 1e-3)), (-0.3, (1e-3, -1e-3))])
def test_rf_spike_on_phase_zero(omega, im_seq):
    # constructed two-step trace: the imaginary part passes zero in the sense of rotation
    p = RfParams(0.99, omega, threshold=0.5)
    z0 = np.array([0.9 + 1j * im_seq[0]])
    target = 0.9 + 1j * im_seq[1]
    a = np.array([target - p.rotation * z0[0]])
    z1, s, pay = rf_step(z0, a, p)
    assert s[0] and pay[0] == pytest.approx(0.9)
    # the opposite crossing does not fire
    z0b = np.array([0.9 + 1j * im_seq[1]])
    ab = np.array([0.9 + 1j * im_seq[0] - p.rotation * z0b[0]])
    assert not rf_step(z0b, ab, p)[1][0]


def test_rf_threshold_equality_does_not_fire():
    p = RfParams(0.99, 0.3, threshold=0.9)
    z0 = np.array([0.9 - 1e-3j])
    a = np.array([0.9 + 1e-3j - p.rotation * z0[0]])
    z1, s, _ = rf_step(z0, a, p, threshold=np.real(a[0] + p.rotation * z0[0]))
    assert not s[0]


def test_rf_one_spike_per_period_under_resonant_forcing():
    w = 0.3
    p = RfParams(0.97, w, threshold=0.1)
    z = np.zeros(1, complex)
    times = []
    for t in range(2000):
        z, s, _ = rf_step(z, np.array([np.cos(w * t) + 0j]), p)
        if s[0]:
            times.append(t)
    period = int(np.ceil(2 * np.pi / w))
    assert len(times) > 50
    assert np.min(np.diff(times)) >= period - 1
    assert len(times) <= 2000 // (period - 1) + 1


@given(st.floats(0.5, 0.99), st.floats(-3.0, 3.0), st.floats(-100, 100), st.floats(-100, 100))
@settings(max_examples=60, deadline=None)
def test_rf_fixed_energy_decay(decay, w, re, im):
    p = RfParams(decay, w)
    z = FixedComplex.from_complex([complex(re, im)], F)
    lam_q = abs(complex(*p.rotation_fixed())) / (1 << 15)
    for _ in range(50):
        mag = abs(z.to_complex(F)[0])
        z, _, _ = rf_step(z, FixedComplex.zeros(1), p, F)
        assert abs(z.to_complex(F)[0]) <= lam_q * mag + 2 * F.quantum


@given(st.floats(0.5, 0.98), st.floats(-3.0, 3.0), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=40, deadline=None)
def test_rf_fixed_reaches_exact_zero(decay, w, re, im):
    p = RfParams(decay, w)
    z = FixedComplex.from_complex([complex(re, im)], F)
    rot = p.rotation_fixed()
    for _ in range(3000):
        if z.re[0] == 0 and z.im[0] == 0:
            break
        z, _, _ = rf_step(z, FixedComplex.zeros(1), p, F, rotation=rot)
    assert z.re[0] == 0 and z.im[0] == 0


def test_rf_reset_rule():
    p = RfParams(0.95, 0.3, threshold=0.5, output_mode=UNARY_RESET)
    z, s = rf_reset_step(np.zeros(1, complex), np.zeros(1, complex), p)
    assert z[0] == 0 and not s[0]
    # update lands on 0.8 + 0.6i: real part is cleared, imaginary part kept
    z, s = rf_reset_step(np.zeros(1, complex), np.array([0.8 + 0.6j]), p)
    assert s[0] and z[0] == 0.6j
    zq, sq = rf_reset_step(FixedComplex.zeros(1), FixedComplex.from_complex([0.8 + 0.6j], F), p, F)
    assert sq[0] and zq.re[0] == 0 and zq.im[0] == F.to_fixed(0.6)


def test_rf_reset_fixed_tracks_float():
    p = RfParams(0.95, 0.3, threshold=1.0, output_mode=UNARY_RESET)
    T = 200
    fl = impulse_response("rf_reset", p.quantized(F), T)
    fx = impulse_response("rf_reset", p, T, fmt=F)
    err = np.max(np.abs((fl["re"] - fx["re"]) + 1j * (fl["im"] - fx["im"])))
    assert err <= 16 * F.quantum


# ----------------------------------------------------------------------------- Hopf

def test_hopf_origin_equilibrium():
    assert hopf_step(0j, 0j, HopfParams(10.0, 0.04, 0.001)) == 0


@given(st.complex_numbers(max_magnitude=0.5, allow_nan=False, allow_infinity=False).filter(lambda z: abs(z) > 1e-6))
def test_hopf_contracts_when_stable(z):
    assert abs(hopf_step(z, 0j, HopfParams(10.0, -0.1, 0.001))) < abs(z)


def test_hopf_limit_cycle_amplitude():
    p = HopfParams(2 * np.pi, 0.04, 0.05 / (2 * np.pi))
    z = 0.01 + 0j
    for _ in range(6000):
        z = hopf_step(z, 0j, p)
    assert abs(z) == pytest.approx(0.2, rel=0.01)


def test_hopf_rejects_coarse_step():
    with pytest.raises(ValueError):
        HopfParams(1000.0, 0.0, 0.001)


def test_hopf_fixed_follows_float():
    p = HopfParams(2 * np.pi * 10, -0.1, 0.001)
    zf, zq = 0j, FixedComplex.zeros(1)
    worst = 0.0
    for t in range(500):
        a = 0.5 * np.cos(2 * np.pi * 10 * t * p.dt)
        aq = FixedComplex.from_complex([a], F)
        zf = hopf_step(zf, aq.to_complex(F)[0], p)
        zq = hopf_step_fixed(zq, aq, p, F)
        worst = max(worst, abs(zq.to_complex(F)[0] - zf))
    assert worst < 16 * F.quantum


# ----------------------------------------------------------------------------- synapses

def test_accumulate_empty_and_single():
    w = np.array([[5.0], [0.0]])
    assert accumulate_synaptic(w, []).tolist() == [0, 0]
    assert accumulate_synaptic(w, [SpikeEvent(0, 0)]).tolist() == [5, 0]


def test_accumulate_unknown_source():
    with pytest.raises(KeyError):
        accumulate_synaptic(np.eye(2), [SpikeEvent(0, 7)])


def test_accumulate_matches_dense_oracle():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(30, 50)) + 1j * rng.normal(size=(30, 50))
    w[rng.random(w.shape) < 0.7] = 0
    evs = [SpikeEvent(4, int(j), float(p)) for j, p in zip(rng.integers(0, 50, 1000), rng.random(1000))]
    dense = np.zeros(50)
    for ev in evs:
        dense[ev.neuron] += ev.payload
    np.testing.assert_allclose(accumulate_synaptic(w, evs, t=5), w @ dense, rtol=1e-12)


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 1 << 20)), max_size=60), st.randoms())
@settings(deadline=None)
def test_accumulate_fixed_permutation_invariant(raw, rnd):
    rng = np.random.default_rng(7)
    w = rng.integers(-3000, 3000, size=(4, 10)) + 1j * rng.integers(-3000, 3000, size=(4, 10))
    evs = [SpikeEvent(0, j, p) for j, p in raw]
    shuffled = list(evs)
    rnd.shuffle(shuffled)
    d1, d2 = Diagnostics(), Diagnostics()
    a = accumulate_synaptic(w, evs, fmt=F, weight_frac_bits=15, diag=d1)
    b = accumulate_synaptic(w, shuffled, fmt=F, weight_frac_bits=15, diag=d2)
    assert a.re.tolist() == b.re.tolist() and a.im.tolist() == b.im.tolist()
    assert d1.as_dict() == d2.as_dict()
    # exact: the sum is formed in wide integers and rounded once
    s = np.zeros(10, dtype=object)
    for j, pl in raw:
        s[j] += pl
    exact = Fraction(int(np.dot(w.real[0].astype(np.int64).astype(object), s)),
                     1 << (15 + PAYLOAD_FORMAT.frac_bits - F.frac_bits))
    want = int(F.saturate(int((exact + Fraction(1, 2)).__floor__())))
    assert a.re[0] == want
