"""Cascaded Hopf-resonator cochlea.

Each section integrates a Hopf oscillator tuned to its characteristic frequency and
passes the response through a 6th-order Butterworth low-pass (cutoff 1.05 x omega0)
before handing it to the next, lower-frequency section.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fixed import Diagnostics, FixedFormat, STATE_FORMAT
from .neurons import FixedComplex, HopfParams, LifParams, SpikeEvent, hopf_step, hopf_step_fixed, lif_step

CUTOFF_RATIO = 1.05


class DivergenceError(FloatingPointError):
    """A section produced a non-finite or runaway output."""

    def __init__(self, section: int, msg: str):
        super().__init__(f"section {section}: {msg}")
        self.section = section


# --------------------------------------------------------------------------- Butterworth


def design_butterworth6(cutoff: float, sample_rate: float, order: int = 6) -> np.ndarray:
    """Digital Butterworth low-pass as second-order sections, shape ``(order // 2, 6)``.

    ``cutoff`` is in rad/s. The analog prototype is pre-warped so the -3 dB point lands
    exactly on ``cutoff`` after the bilinear transform. Rows are ``[b0, b1, b2, 1, a1, a2]``
    with unity DC gain per section.
    """
    if order % 2:
        raise ValueError("order must be even")
    nyquist = math.pi * sample_rate
    if not 0 < cutoff < nyquist:
        raise ValueError(f"cutoff {cutoff:.6g} rad/s must lie in (0, {nyquist:.6g})")
    fs2 = 2.0 * sample_rate
    warped = fs2 * math.tan(cutoff / fs2)
    sos = np.zeros((order // 2, 6))
    for k in range(order // 2):
        # upper-half-plane poles of the analog prototype
        s_pole = warped * np.exp(1j * math.pi * (2 * k + order + 1) / (2 * order))
        z_pole = (1 + s_pole / fs2) / (1 - s_pole / fs2)
        a1 = -2.0 * z_pole.real
        a2 = abs(z_pole) ** 2
        g = (1.0 + a1 + a2) / 4.0
        sos[k] = [g, 2 * g, g, 1.0, a1, a2]
    return sos


def sos_response(sos: np.ndarray, omega: np.ndarray, sample_rate: float) -> np.ndarray:
    """Complex frequency response at angular frequencies ``omega`` (rad/s)."""
    zi = np.exp(-1j * np.asarray(omega, dtype=float) / sample_rate)
    h = np.ones_like(zi)
    for b0, b1, b2, _, a1, a2 in sos:
        h *= (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)
    return h


class SosState:
    """Transposed direct-form II state for a batch of signals through one SOS cascade."""

    def __init__(self, sos: np.ndarray, shape, dtype=np.complex128):
        self.sos = sos
        self.w1 = np.zeros((len(sos),) + tuple(shape), dtype)
        self.w2 = np.zeros((len(sos),) + tuple(shape), dtype)

    def step(self, x):
        for i, (b0, b1, b2, _, a1, a2) in enumerate(self.sos):
            y = b0 * x + self.w1[i]
            self.w1[i] = b1 * x - a1 * y + self.w2[i]
            self.w2[i] = b2 * x - a2 * y
            x = y
        return x


def poles_stable(sos: np.ndarray) -> bool:
    """True if every section's poles lie strictly inside the unit circle."""
    return all(np.all(np.abs(np.roots([1.0, a1, a2])) < 1.0) for *_, a1, a2 in sos)


# --------------------------------------------------------------------------- sections


class CochleaSection:
    """One Hopf resonator followed by its Butterworth low-pass, vectorised over a batch.

    ``fmt`` selects the fixed-point Hopf update; the low-pass always runs in float.
    """

    def __init__(self, index: int, hopf: HopfParams, sample_rate: float, batch=(),
                 fmt: FixedFormat | None = None, ceiling: float = 1e3):
        self.index = index
        self.hopf = hopf
        self.sample_rate = sample_rate
        self.sos = design_butterworth6(CUTOFF_RATIO * hopf.omega0, sample_rate)
        self.fmt = fmt
        self.ceiling = ceiling
        self.diag = Diagnostics()
        self.reset(batch)

    def reset(self, batch=()):
        self.z = np.zeros(batch, np.complex128)
        self.lpf = SosState(self.sos, np.shape(self.z))

    @property
    def cutoff(self) -> float:
        return CUTOFF_RATIO * self.hopf.omega0

    def step(self, x):
        return section_step(self, x)


def section_step(sec: CochleaSection, x):
    """Advance the section one integration step with input ``x``; returns the low-passed output."""
    if sec.fmt is None:
        sec.z = hopf_step(sec.z, x, sec.hopf)
    else:
        zq = FixedComplex.from_complex(sec.z, sec.fmt, sec.diag)
        aq = FixedComplex.from_complex(x, sec.fmt, sec.diag)
        sec.z = hopf_step_fixed(zq, aq, sec.hopf, sec.fmt, sec.diag).to_complex(sec.fmt)
    y = sec.lpf.step(sec.z)
    if not np.all(np.isfinite(y)):
        raise DivergenceError(sec.index, "non-finite output")
    if np.any(np.abs(y) > sec.ceiling):
        raise DivergenceError(sec.index, f"|output| exceeded ceiling {sec.ceiling:g}")
    return y


@dataclass(frozen=True)
class CascadeConfig:
    """Cascade geometry, base (high frequency) to apex.

    The Hopf sections and filters run at ``sample_rate * oversample``; with ``oversample``
    of 0 the factor is chosen as the smallest integer giving at least 32 integration
    steps per period of ``f_hi``.
    """

    f_hi: float = 4000.0
    f_lo: float = 250.0
    sections_per_octave: int = 6
    lam: float = -0.05
    sample_rate: float = 16000.0
    oversample: int = 0
    ceiling: float = 1e3

    def __post_init__(self):
        if not self.f_hi > self.f_lo > 0:
            raise ValueError("need f_hi > f_lo > 0")
        if not 2 <= self.sections_per_octave <= 12:
            raise ValueError("sections_per_octave must lie in 2..12")
        if self.sample_rate <= 0 or self.oversample < 0:
            raise ValueError("sample_rate must be positive and oversample non-negative")
        # raises if the step is too coarse for the top section
        HopfParams(2 * math.pi * self.f_hi, self.lam, 1.0 / self.integration_rate)
        if CUTOFF_RATIO * self.f_hi >= self.integration_rate / 2:
            raise ValueError("top section's low-pass cutoff is above the integration Nyquist rate")

    @property
    def oversample_factor(self) -> int:
        if self.oversample:
            return self.oversample
        return max(1, math.ceil(32 * self.f_hi / self.sample_rate))

    @property
    def integration_rate(self) -> float:
        return self.sample_rate * self.oversample_factor

    @property
    def n_sections(self) -> int:
        return int(math.floor(self.sections_per_octave * math.log2(self.f_hi / self.f_lo) + 1e-9)) + 1

    @property
    def frequencies(self) -> np.ndarray:
        """Characteristic frequencies in Hz, strictly decreasing."""
        return self.f_hi * 2.0 ** (-np.arange(self.n_sections) / self.sections_per_octave)

    def build(self, batch=(), fmt: FixedFormat | None = None) -> list[CochleaSection]:
        dt = 1.0 / self.integration_rate
        return [CochleaSection(k, HopfParams(2 * math.pi * f, self.lam, dt), self.integration_rate,
                               batch, fmt, self.ceiling)
                for k, f in enumerate(self.frequencies)]


def _run_sections(sections, drive, peak_from: int | None = None, record_every: int = 0):
    """Drive the cascade with ``drive`` (T, *batch) real samples at the integration rate.

    Returns the running peak |output| per section after step ``peak_from`` and,
    when ``record_every`` > 0, every ``record_every``-th output per section.
    """
    T = drive.shape[0]
    batch = drive.shape[1:]
    peak = np.zeros((len(sections),) + batch)
    rec = [] if record_every else None
    for i in range(T):
        x = drive[i].astype(np.complex128)
        outs = []
        for sec in sections:
            x = section_step(sec, x)
            outs.append(x)
        if peak_from is not None and i >= peak_from:
            np.maximum(peak, np.abs(outs), out=peak)
        if record_every and (i + 1) % record_every == 0:
            rec.append(np.array(outs))
    return peak, (np.stack(rec, axis=-1) if rec else None)


def cascade_run(cfg: CascadeConfig, audio, precision: str = "float",
                fmt: FixedFormat = STATE_FORMAT) -> tuple[np.ndarray, Diagnostics]:
    """Per-section complex outputs ``(n_sections, T)`` at the audio rate.

    Each audio sample is held for ``oversample_factor`` integration steps; the output
    recorded for a sample is the section output after its last step.
    """
    x = np.asarray(audio, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("audio contains non-finite samples")
    sections = cfg.build((), None if precision == "float" else fmt)
    drive = np.repeat(x, cfg.oversample_factor)
    out = np.zeros((cfg.n_sections, len(x)), np.complex128)
    if len(x):
        _, rec = _run_sections(sections, drive, record_every=cfg.oversample_factor)
        out[:] = rec
    diag = Diagnostics()
    for s in sections:
        diag.merge(s.diag)
    return out, diag


@dataclass
class GainSurface:
    freqs: np.ndarray
    amplitudes: np.ndarray
    peak: np.ndarray  # (n_freqs, n_amps) peak |output| at the best section
    best_section: np.ndarray  # (n_freqs, n_amps)

    @property
    def peak_db(self) -> np.ndarray:
        return 20 * np.log10(np.maximum(self.peak, 1e-300))

    @property
    def spread_db(self) -> np.ndarray:
        """Max minus min of peak output over amplitudes, in dB, per frequency."""
        db = self.peak_db
        return db.max(axis=1) - db.min(axis=1)


def gain_sweep(cfg: CascadeConfig, freqs, amplitudes, duration: float = 0.08,
               settle: float = 0.5, threads: int = 1) -> GainSurface:
    """Peak output over a (frequency x amplitude) grid of pure tones.

    Tones are synthesised directly at the integration rate. The first ``settle``
    fraction of each run is discarded; the peak |output| over the rest is taken at
    whichever section responds most. ``threads`` splits the grid; results are unchanged.
    """
    freqs = np.asarray(freqs, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    F, A = np.meshgrid(freqs, amps, indexing="ij")
    F, A = F.ravel(), A.ravel()
    fs = cfg.integration_rate
    T = int(round(duration * fs))
    t = np.arange(T) / fs
    start = int(T * settle)
    groups = [g for g in np.array_split(np.arange(len(F)), max(1, min(threads, len(F)))) if len(g)]

    def job(idx):
        drive = A[idx] * np.sin(2 * np.pi * np.outer(t, F[idx]))
        peak, _ = _run_sections(cfg.build((len(idx),)), drive, peak_from=start)
        return peak

    if len(groups) == 1:
        peaks = [job(groups[0])]
    else:
        with ThreadPoolExecutor(len(groups)) as ex:
            peaks = list(ex.map(job, groups))
    peak = np.concatenate(peaks, axis=1)
    shape = (len(freqs), len(amps))
    return GainSurface(freqs, amps, peak.max(axis=0).reshape(shape), peak.argmax(axis=0).reshape(shape))


def lif_spike_encoder(outputs, lif: LifParams, weights=None, fmt: FixedFormat = STATE_FORMAT,
                      diag: Diagnostics | None = None) -> list[SpikeEvent]:
    """Encode section magnitudes with one fixed-point LIF per projection row.

    ``outputs`` is ``(n_sections, T)``; ``weights`` maps sections to encoder neurons
    (identity when omitted). Magnitudes are projected in float, then quantised.
    """
    mag = np.abs(np.asarray(outputs))
    if weights is not None:
        mag = np.asarray(weights, dtype=float) @ mag
    n, T = mag.shape
    diag = diag if diag is not None else Diagnostics()
    q = fmt.to_fixed(mag, diag)
    u = np.zeros(n, np.int64)
    v = np.zeros(n, np.int64)
    events = []
    for t in range(T):
        u, v, sp = lif_step(u, v, q[:, t], lif, fmt, diag)
        events.extend(SpikeEvent(t, int(k)) for k in np.nonzero(sp)[0])
    return events
