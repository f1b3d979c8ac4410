"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the pytest summary, or printed when the
module is run directly) and then asserts. Tolerances are the stated ones; nothing is
relaxed to make a criterion pass.
"""
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from resonet import cli
from resonet.cochlea import CascadeConfig, design_butterworth6, gain_sweep, sos_response
from resonet.fixed import STATE_FORMAT, Diagnostics
from resonet.neurons import (GRADED, UNARY_RESET, FixedComplex, HopfParams, LifParams, RfParams,
                             hopf_step, hopf_step_fixed, lif_step, rf_reset_step, rf_step)
from resonet.optflow import (ORIENTATIONS, SPATIAL_FREQS, TEMPORAL_FREQS, FilterBankSpec,
                             FlowField, aee_metrics, dense_conv_ops, direction_error_deg, estimate_flow,
                             preferred_velocity, run_flow)
from resonet.signal_io import gen_chirp, gen_drifting_grating
from resonet.spectral import RfBankConfig, compression_report, dense_stft_oracle, encode_stft, threshold_sweep

BANK = RfBankConfig()  # 100 log-spaced neurons, 60 Hz - 4.2 kHz, 16 kHz


def _chirp():
    return gen_chirp(100.0, 4000.0, 1.0, 16000.0, 0.5).samples


# --------------------------------------------------------------------------- spectral


def test_c01_stft_oracle_equivalence(verdict):
    x = np.random.default_rng(1).uniform(-1, 1, 10_000)
    t0 = time.perf_counter()
    spec = encode_stft(x, BANK, keep_states=True)
    oracle = dense_stft_oracle(x, BANK)
    elapsed = time.perf_counter() - t0
    rel = np.abs(spec.states - oracle).max() / np.abs(oracle).max()
    ok = rel < 1e-9 and elapsed < 10
    verdict(1, ok, f"100 neurons x 1e4 samples, relative error {rel:.2e} (< 1e-9), {elapsed:.1f} s (< 10 s)")
    assert ok


def test_c02_chirp_encode_decode(verdict):
    x = _chirp()
    n_dense = BANK.n_neurons * len(x)
    t0 = time.perf_counter()
    found = None
    for th in (8.0, 4.0, 2.0, 1.0, 0.5):  # sparsest first
        bank = RfBankConfig(threshold=th)
        rep = compression_report(encode_stft(x, bank), x, bank)
        if rep["reconstruction_correlation"] >= 0.90 and rep["n_spikes"] < 0.1 * n_dense:
            found = (th, rep)
            break
    elapsed = time.perf_counter() - t0
    ok = found is not None and elapsed < 60
    detail = (f"threshold {found[0]}: correlation {found[1]['reconstruction_correlation']:.3f}, "
              f"{found[1]['n_spikes']} spikes vs {n_dense} dense" if found else "no qualifying threshold")
    verdict(2, ok, f"{detail}, {elapsed:.1f} s (< 60 s)")
    assert ok


def test_c03_threshold_monotonicity(verdict):
    x = _chirp()
    thresholds = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 16.0)
    reps = threshold_sweep(x, BANK, thresholds)
    corr = np.array([r["reconstruction_correlation"] for r in reps])
    worst = float(np.max(np.diff(corr)))
    ok = worst <= 0.01
    verdict(3, ok, "correlations " + " ".join(f"{c:.3f}" for c in corr)
            + f", largest rise {worst:+.4f} (<= +0.01)")
    assert ok


# --------------------------------------------------------------------------- optical flow


def test_c04_preferred_velocity(verdict):
    v = preferred_velocity(6 * math.pi / 256, 4 * math.pi, 0.0)
    err = float(np.abs(v - np.array([512 / 3, 0.0])).max())
    ok = abs(v[0] - 170.67) < 0.005 and err < 1e-6
    verdict(4, ok, f"v = ({v[0]:.6f}, {v[1]:.6f}) pix/s, |v - (512/3, 0)| = {err:.1e}")
    assert ok


FLOW_SIZE = 96
FLOW_MARGIN = 32  # half the receptive field; pixels closer to the border see a cut kernel


def _grating_trial(speed, theta, spec, duration=3.2):
    ev = gen_drifting_grating(FLOW_SIZE, SPATIAL_FREQS[0], theta, speed, duration, seed=3)
    n_bins = int(round(duration / spec.dt))
    _, per_bin = run_flow(ev.columns(), spec, ev.shape, n_bins)
    flow, mask, _ = per_bin[-1]
    m = FLOW_MARGIN
    mask = mask.copy()
    mask[:m] = mask[-m:] = False
    mask[:, :m] = mask[:, -m:] = False
    gt = FlowField.constant(ev.shape, ev.ground_truth)
    met = aee_metrics(flow, gt, mask, spec.dt)
    met["direction"] = float(direction_error_deg(flow, gt, mask).max())
    return met


def test_c05_synthetic_flow_recovery(verdict):
    spec = FilterBankSpec()
    lo, hi = min(TEMPORAL_FREQS) / SPATIAL_FREQS[0], max(TEMPORAL_FREQS) / SPATIAL_FREQS[0]
    speeds = np.linspace(lo * 1.25, hi * 0.85, 5)
    t0 = time.perf_counter()
    rows = []
    for s in speeds:
        for th in ORIENTATIONS:
            rows.append((s, th, _grating_trial(s, th, spec)))
    elapsed = time.perf_counter() - t0
    aee = max(r[2]["AEE"] for r in rows)
    out = max(r[2]["outlier_pct"] for r in rows)
    ang = max(r[2]["direction"] for r in rows)
    ok_aee, ok_out, ok_dir = aee < 0.5, out < 5.0, ang < 15.0
    ok = ok_aee and ok_out and ok_dir and elapsed < 300
    per_speed = ", ".join(f"{s:.0f}:{np.mean([r[2]['AEE'] for r in rows if r[0] == s]):.2f}" for s in speeds)
    verdict(5, ok, f"worst AEE {aee:.2f} px (< 0.5) [{'ok' if ok_aee else 'miss'}], worst outliers "
            f"{out:.1f}% (< 5) [{'ok' if ok_out else 'miss'}], worst direction error {ang:.1f} deg (< 15) "
            f"[{'ok' if ok_dir else 'miss'}]; mean AEE by speed {per_speed}; {elapsed:.0f} s")
    assert ok


def test_c06_pooling_scale_invariance(verdict):
    rng = np.random.default_rng(6)
    n = len(FilterBankSpec().channels)
    vel = np.array([preferred_velocity(*c) for c in FilterBankSpec().channels])
    tot = rng.uniform(1e3, 1e4, (n, 32, 32))
    opp = tot * rng.uniform(-1, 1, tot.shape)
    ref = estimate_flow(opp, vel, tot)
    ref_plain = estimate_flow(tot, vel)
    worst = 0.0
    same_mask = True
    for alpha in (1e-3, 1.0, 1e3):
        for r, f in ((ref, estimate_flow(alpha * opp, vel, alpha * tot)),
                     (ref_plain, estimate_flow(alpha * tot, vel))):
            same_mask &= bool(np.array_equal(r.valid, f.valid))
            scale = max(np.abs(r.u).max(), np.abs(r.v).max())
            worst = max(worst, np.abs(f.u - r.u).max() / scale, np.abs(f.v - r.v).max() / scale)
    ok = worst < 1e-6 and same_mask
    verdict(6, ok, f"alpha in (1e-3, 1, 1e3): max relative change {worst:.1e} (< 1e-6), masks equal {same_mask}")
    assert ok


def test_c07_synop_accounting(verdict):
    spec = FilterBankSpec()
    shape = (64, 64)
    ev = gen_drifting_grating(shape, SPATIAL_FREQS[0], 0.0, 512 / 3, 0.64, contrast_threshold=0.5,
                              contrast=0.3, seed=7)
    n_bins = 20
    est, per_bin = run_flow(ev.columns(), spec, shape, n_bins)
    kh, kw = spec.kernel_size
    n_in_bins = sum(n for _, _, n in per_bin)
    expected = n_in_bins * len(spec.spatial_channels) * kh * kw
    density = n_in_bins / (n_bins * shape[0] * shape[1])
    dense = dense_conv_ops(shape, spec.kernel_size, len(spec.spatial_channels)) * n_bins
    ratio = dense / est.diag.synops
    ok = est.diag.synops == expected and density <= 0.05 and ratio >= 10
    verdict(7, ok, f"synops {est.diag.synops} == events {n_in_bins} x {len(spec.spatial_channels)} x {kh}x{kw} "
            f"({est.diag.synops == expected}); density {100 * density:.2f}% (<= 5%), dense/event ops {ratio:.1f}x (>= 10)")
    assert ok


# --------------------------------------------------------------------------- cochlea


def test_c08_hopf_radial_law(verdict):
    t0 = time.perf_counter()
    errs = []
    for lam in (0.01, 0.04, 0.09):
        p = HopfParams(1.0, lam, 0.01)
        z = 0.5 * math.sqrt(lam) + 0j
        for _ in range(40_000):
            z = hopf_step(z, 0j, p)
        errs.append(abs(abs(z) / math.sqrt(lam) - 1))
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 0.01 and elapsed < 5
    verdict(8, ok, "relative |z| error " + ", ".join(f"{e:.1e}" for e in errs) + f" (< 1%), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_c09_butterworth(verdict):
    cfg = CascadeConfig()
    fs = cfg.integration_rate
    worst = np.zeros(3)
    for f in cfg.frequencies:
        wc = 1.05 * 2 * math.pi * f
        db = 20 * np.log10(np.abs(sos_response(design_butterworth6(wc, fs), [0.0, wc, 2 * wc], fs)))
        worst = np.maximum(worst, np.abs(db - [0.0, -3.0, -36.0]))
    ok = worst[0] < 1e-9 and worst[1] <= 0.1 and worst[2] <= 1.0
    verdict(9, ok, f"all {cfg.n_sections} cochlea filters at {fs:g} Hz: |DC| {worst[0]:.1e} dB, "
            f"|cutoff + 3| {worst[1]:.3f} dB (<= 0.1), |2x cutoff + 36| {worst[2]:.2f} dB (<= 1)")
    assert ok


def test_c10_self_normalization(verdict):
    freqs = 1000.0 * 2.0 ** (-np.arange(12) / 6)  # two octaves below 1 kHz
    amps = (0.001, 0.01, 0.1)  # 40 dB
    t0 = time.perf_counter()
    s6 = gain_sweep(CascadeConfig(sections_per_octave=6), freqs, amps).spread_db
    s2 = gain_sweep(CascadeConfig(sections_per_octave=2), freqs, amps).spread_db
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(s6 <= 3.0)) and bool(np.all(s2 > s6)) and elapsed < 600
    verdict(10, ok, f"6/oct spread max {s6.max():.2f} dB (<= 3 at all 12 probes); 2/oct spread min "
            f"{s2.min():.2f} dB > 6/oct at every probe: {bool(np.all(s2 > s6))}; {elapsed:.0f} s")
    assert ok


# --------------------------------------------------------------------------- fixed point


def _fixed_vs_float(seed: int):
    F = STATE_FORMAT
    q = F.quantum
    rng = np.random.default_rng(seed)
    diag = Diagnostics()
    out = {}

    p = LifParams(0.5, 0.5, 0.8).quantized(F)
    a = F.to_fixed(rng.uniform(-0.5, 0.5, 1000))
    u = v = np.zeros(1, np.int64)
    uf = vf = np.zeros(1)
    eu = ev = 0.0
    flips = 0
    for t in range(1000):
        u, v, s = lif_step(u, v, a[t:t + 1], p, F, diag)
        uf, vf, sf = lif_step(uf, vf, F.to_float(a[t:t + 1]), p)
        eu = max(eu, abs(F.to_float(u[0]) - uf[0]) / q)
        ev = max(ev, abs(F.to_float(v[0]) - vf[0]) / q)
        flips += int(s[0] != sf[0])
    out["lif"] = (max(eu, ev), flips)

    for name, mode, step in (("rf", GRADED, rf_step), ("rf_reset", UNARY_RESET, rf_reset_step)):
        p = RfParams(0.95, 0.3, 1.0, output_mode=mode).quantized(F)
        raw = rng.uniform(-0.2, 0.2, (1000, 2))
        ac = F.to_float(F.to_fixed(raw[:, 0])) + 1j * F.to_float(F.to_fixed(raw[:, 1]))
        z, zf = FixedComplex.zeros(1), np.zeros(1, complex)
        e, flips = 0.0, 0
        for t in range(1000):
            r = step(z, FixedComplex.from_complex(ac[t:t + 1], F), p, F, diag)
            rf_ = step(zf, ac[t:t + 1], p)
            z, zf = r[0], rf_[0]
            flips += int(r[1][0] != rf_[1][0])
            zc = z.to_complex(F)[0]
            e = max(e, abs(zc.real - zf[0].real) / q, abs(zc.imag - zf[0].imag) / q)
        out[name] = (e, flips)

    hp = HopfParams(2 * math.pi * 10, -0.1, 0.001)
    raw = rng.uniform(-0.5, 0.5, (1000, 2))
    ac = F.to_float(F.to_fixed(raw[:, 0])) + 1j * F.to_float(F.to_fixed(raw[:, 1]))
    z, zf = FixedComplex.zeros(1), np.zeros(1, complex)
    e = 0.0
    for t in range(1000):
        z = hopf_step_fixed(z, FixedComplex.from_complex(ac[t:t + 1], F), hp, F, diag)
        zf = hopf_step(zf, ac[t:t + 1], hp)
        zc = z.to_complex(F)[0]
        e = max(e, abs(zc.real - zf[0].real) / q, abs(zc.imag - zf[0].imag) / q)
    out["hopf"] = (e, 0)
    return out, diag


def test_c11_fixed_point_fidelity(verdict):
    out, diag = _fixed_vs_float(11)
    worst = max(e for e, _ in out.values())
    flips = sum(f for _, f in out.values())
    ok = worst < 16 and diag.saturations == 0 and flips == 0
    verdict(11, ok, ", ".join(f"{k} {e:.2f}q" for k, (e, _) in out.items())
            + f" (< 16 quanta); saturations {diag.saturations}; spike mismatches {flips}")
    assert ok


# --------------------------------------------------------------------------- determinism

_RUNS = {
    "neuron-demo": (["neuron-demo", "--model", "rf", "--precision", "fixed"], ""),
    "stft": (["stft", "report"], "[stft]\nchirp_duration = 0.25\nsweep = 0.5 2\n"),
    "flow": (["flow"], "[flow]\ngrating_size = 64\ngrating_duration = 0.32\neval_margin = 16\n"),
    "cochlea-run": (["cochlea", "run"], "[cochlea]\ntone_duration = 0.01\n"),
    "cochlea-sweep": (["cochlea", "sweep"],
                      "[cochlea]\nsweep_freqs = 1000 700\nsweep_amps = 0.01 0.1\nsweep_duration = 0.01\n"),
}


def _same_tree(a: Path, b: Path) -> bool:
    names = sorted(p.name for p in a.iterdir())
    if names != sorted(p.name for p in b.iterdir()):
        return False
    return all(filecmp.cmp(a / n, b / n, shallow=False) for n in names)


def test_c12_determinism(verdict, tmp_path):
    results = {}
    for name, (argv, text) in _RUNS.items():
        cfg = tmp_path / f"{name}.ini"
        cfg.write_text(text)
        dirs = []
        for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / f"{name}-{tag}"
            code = cli.main([*argv, "--config", str(cfg), "--seed", "5", "--threads", threads, "--out", str(out)])
            assert code == 0, f"{name} exited {code}"
            dirs.append(out)
        # rerun from the resolved config written by the first run
        out = tmp_path / f"{name}-d"
        assert cli.main([*argv, "--config", str(dirs[0] / "config.ini"), "--out", str(out)]) == 0
        dirs.append(out)
        results[name] = all(_same_tree(dirs[0], d) for d in dirs[1:])
    ok = all(results.values())
    verdict(12, ok, "rerun, 4 threads and resolved-config rerun bit-identical: "
            + ", ".join(f"{k} {v}" for k, v in results.items()))
    assert ok


if __name__ == "__main__":
    import sys
    import tempfile

    from conftest import record_verdict

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_c"):
            continue
        kwargs = {"verdict": record_verdict}
        if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp())
        try:
            fn(**kwargs)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
