"""Spiking short-time Fourier transform with resonate-and-fire banks.

Every neuron in the bank sees the same real input sample each step. Neuron ``k``
computes ``z_k[t] = sum_n (lam e^{i w_k})^n x[t-n]``, which is the STFT coefficient at
``w_k`` under a one-sided exponential window. It emits a graded spike carrying
``Re z`` once per revolution of its state.

The waveform is rebuilt by synthesising every spike with the neuron's oscillation
kernel. The default ``matched`` kernel runs the decaying oscillation backwards in time
from each spike. That cancels the phase lag each neuron picks up on off-resonance
input: a causal kernel applies the same lag a second time, and across a dense bank
those contributions largely cancel. ``causal`` keeps the forward kernel.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .fixed import STATE_FORMAT, Diagnostics, FixedFormat
from .neurons import FixedComplex, RfParams, SpikeEvent, rf_step

KERNEL_FLOOR = 1e-4


@dataclass(frozen=True)
class RfBankConfig:
    n_neurons: int = 100
    freq_lo: float = 60.0
    freq_hi: float = 4200.0
    spacing: str = "log"
    decay: float = 0.985
    threshold: float = 2.0
    sample_rate: float = 16000.0

    def __post_init__(self):
        if self.n_neurons < 1:
            raise ValueError("n_neurons must be at least 1")
        if not 0 < self.freq_lo <= self.freq_hi < self.sample_rate / 2:
            raise ValueError(f"need 0 < freq_lo <= freq_hi < {self.sample_rate / 2}")
        if self.n_neurons > 1 and self.freq_lo == self.freq_hi:
            raise ValueError("freq_lo must be below freq_hi for more than one neuron")
        if self.spacing not in ("linear", "log"):
            raise ValueError(f"spacing must be 'linear' or 'log', got {self.spacing!r}")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    @property
    def frequencies(self) -> np.ndarray:
        if self.n_neurons == 1:
            return np.array([self.freq_lo])
        if self.spacing == "linear":
            return np.linspace(self.freq_lo, self.freq_hi, self.n_neurons)
        return np.geomspace(self.freq_lo, self.freq_hi, self.n_neurons)

    @property
    def omega_dt(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies / self.sample_rate

    def neuron_params(self) -> list[RfParams]:
        return [RfParams(self.decay, float(w), self.threshold) for w in self.omega_dt]

    @property
    def kernel_length(self) -> int:
        """Number of kernel taps kept, i.e. the first n with decay**n < 1e-4."""
        return int(math.floor(math.log(KERNEL_FLOOR) / math.log(self.decay))) + 1


@dataclass
class SpikingSpectrogram:
    """Graded spike output of a bank. Events are stored column-wise, sorted by (t, neuron)."""

    t: np.ndarray
    neuron: np.ndarray
    payload: np.ndarray
    bank: RfBankConfig
    duration: int
    precision: str = "float"
    states: np.ndarray | None = None  # (n_neurons, T) complex, when retained
    diag: Diagnostics = field(default_factory=Diagnostics)

    def __len__(self):
        return len(self.t)

    @property
    def events(self) -> list[SpikeEvent]:
        return [SpikeEvent(int(t), int(k), float(m)) for t, k, m in zip(self.t, self.neuron, self.payload)]

    def raster(self) -> np.ndarray:
        """Dense ``(n_neurons, T)`` payload matrix, zero where no spike."""
        r = np.zeros((self.bank.n_neurons, self.duration))
        r[self.neuron, self.t] = self.payload
        return r


def _chunks(n: int, threads: int) -> list[np.ndarray]:
    return [c for c in np.array_split(np.arange(n), max(1, min(threads, n))) if len(c)]


def _encode_chunk(x, idx, bank, fmt, keep_states):
    params = [bank.neuron_params()[i] for i in idx]
    diag = Diagnostics()
    T, n = len(x), len(idx)
    spikes = np.zeros((T, n), bool)
    pays = np.zeros((T, n))
    states = np.zeros((T, n), complex) if keep_states else None
    if fmt is None:
        rot = np.array([p.rotation for p in params])
        th = np.array([p.threshold for p in params])
        z = np.zeros(n, complex)
        for t in range(T):
            z, sp, pay = rf_step(z, x[t], params, rotation=rot, threshold=th, diag=diag)
            spikes[t], pays[t] = sp, pay
            if keep_states:
                states[t] = z
    else:
        pairs = np.array([p.rotation_fixed() for p in params], np.int64)
        rot = (pairs[:, 0], pairs[:, 1])
        th = fmt.to_fixed([p.threshold for p in params])
        xq = fmt.to_fixed(x, diag)
        zero = np.zeros(n, np.int64)
        z = FixedComplex.zeros(n)
        for t in range(T):
            a = FixedComplex(np.full(n, xq[t]), zero)
            z, sp, pay = rf_step(z, a, params, fmt, diag, rotation=rot, threshold=th)
            spikes[t] = sp
            pays[t] = fmt.to_float(pay)
            if keep_states:
                states[t] = z.to_complex(fmt)
    return spikes, pays, states, diag


def encode_stft(samples, bank: RfBankConfig, precision: str = "float",
                fmt: FixedFormat = STATE_FORMAT, keep_states: bool = False,
                threads: int = 1) -> SpikingSpectrogram:
    """Run the bank over ``samples`` (floats in [-1, 1]).

    In ``fixed`` precision the samples are quantised to ``fmt`` and the bit-accurate
    integer update is used. ``threads`` splits the bank into neuron groups; output is
    independent of it.
    """
    if precision not in ("float", "fixed"):
        raise ValueError(f"precision must be 'float' or 'fixed', got {precision!r}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    f = None if precision == "float" else fmt
    groups = _chunks(bank.n_neurons, threads)
    if len(groups) == 1:
        results = [_encode_chunk(x, groups[0], bank, f, keep_states)]
    else:
        with ThreadPoolExecutor(len(groups)) as ex:
            results = list(ex.map(lambda g: _encode_chunk(x, g, bank, f, keep_states), groups))
    spikes = np.concatenate([r[0] for r in results], axis=1)
    pays = np.concatenate([r[1] for r in results], axis=1)
    diag = Diagnostics()
    for r in results:
        diag.merge(r[3])
    states = np.concatenate([r[2] for r in results], axis=1).T if keep_states else None
    t, k = np.nonzero(spikes)  # row-major: sorted by t, then neuron
    return SpikingSpectrogram(t.astype(np.int64), k.astype(np.int64), pays[t, k], bank, len(x),
                              precision, states, diag)


def dense_stft_oracle(samples, bank: RfBankConfig, method: str = "auto") -> np.ndarray:
    """Exponential-window STFT ``Z[k, t] = sum_{n<=t} lam^n e^{i n w_k} x[t-n]``.

    The window is evaluated in closed form (not by repeated rotation) and convolved with
    the input: ``direct`` uses a plain sum, ``fft`` uses FFT convolution, ``auto`` picks
    ``fft`` above 2000 samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    T = len(x)
    if method == "auto":
        method = "fft" if T > 2000 else "direct"
    if method not in ("direct", "fft"):
        raise ValueError(f"unknown method {method!r}")
    n = np.arange(T)
    out = np.zeros((bank.n_neurons, T), complex)
    for k, w in enumerate(bank.omega_dt):
        win = bank.decay ** n * np.exp(1j * w * n)
        if method == "direct":
            out[k] = np.convolve(x, win)[:T]
        else:
            out[k] = signal.fftconvolve(x, win)[:T]
    return out


def neuron_weights(bank: RfBankConfig) -> np.ndarray:
    """Synthesis weight per neuron, proportional to its share of the band divided by its frequency.

    A neuron fires once per input period, so its spike train's fundamental grows with
    frequency; dividing by frequency removes that tilt, and the spacing factor turns the
    sum over neurons into an integral over frequency. Log spacing gives equal weights.
    """
    w = bank.omega_dt
    if len(w) == 1:
        return np.ones(1)
    g = np.gradient(w) / w
    return g / g.mean()


def _synth_chunk(spec, idx, L, kernel, weights, phase_correction):
    T = spec.duration
    tau = np.arange(L)
    out = []
    for k in idx:
        sel = spec.neuron == k
        if not sel.any():
            out.append(None)
            continue
        s = np.zeros(T)
        np.add.at(s, spec.t[sel], spec.payload[sel])
        w = spec.bank.omega_dt[k]
        # a spike is emitted on the first sample past the zero crossing, on average half a step late
        shift = 0.5 if phase_correction else 0.0
        if kernel == "matched":
            ker = weights[k] * spec.bank.decay ** tau * np.cos(w * (tau - shift))
            out.append(signal.fftconvolve(s, ker[::-1])[L - 1:L - 1 + T])
        else:
            ker = weights[k] * spec.bank.decay ** tau * np.cos(w * (tau + shift))
            out.append(signal.fftconvolve(s, ker)[:T])
    return out


def reconstruct(spec: SpikingSpectrogram, reference=None, kernel: str = "matched",
                phase_correction: bool = True, threads: int = 1) -> np.ndarray:
    """Rebuild a waveform from graded spikes.

    Each event ``(t0, k, m)`` adds ``m * w_k * lam^tau * cos(w_k * tau)`` with
    ``tau = t0 - t`` (``matched``) or ``t - t0`` (``causal``) for ``0 <= tau`` while
    ``lam^tau >= 1e-4``. ``w_k`` comes from :func:`neuron_weights`, and
    ``phase_correction`` moves each spike half a step back to undo its sampling delay.
    With a ``reference`` the result is scaled by the least-squares gain against it;
    otherwise it is scaled to a peak of 0.9 so it fits in a WAV file.
    """
    if kernel not in ("matched", "causal"):
        raise ValueError(f"kernel must be 'matched' or 'causal', got {kernel!r}")
    T = spec.duration
    y = np.zeros(T)
    if len(spec) == 0:
        return y
    L = spec.bank.kernel_length
    weights = neuron_weights(spec.bank)
    groups = _chunks(spec.bank.n_neurons, threads)
    if len(groups) == 1:
        parts = [_synth_chunk(spec, groups[0], L, kernel, weights, phase_correction)]
    else:
        with ThreadPoolExecutor(len(groups)) as ex:
            parts = list(ex.map(lambda g: _synth_chunk(spec, g, L, kernel, weights, phase_correction),
                                groups))
    # sum in neuron order so the result does not depend on the grouping
    for part in parts:
        for contrib in part:
            if contrib is not None:
                y += contrib
    if reference is not None:
        ref = np.asarray(reference, dtype=np.float64)
        if len(ref) != T:
            raise ValueError(f"reference has {len(ref)} samples, spectrogram {T}")
        den = float(y @ y)
        return y * (float(ref @ y) / den if den > 0 else 0.0)
    peak = float(np.max(np.abs(y)))
    return y * (0.9 / peak) if peak > 0 else y


def pearson(x, y) -> float:
    """Pearson correlation, defined as 0 when either signal is constant."""
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    y = np.asarray(y, dtype=np.float64) - np.mean(y)
    den = math.sqrt(float(x @ x) * float(y @ y))
    return float(x @ y) / den if den > 0 else 0.0


def compression_report(spec: SpikingSpectrogram, samples, bank: RfBankConfig | None = None,
                       **recon_kw) -> dict:
    bank = bank or spec.bank
    n_dense = bank.n_neurons * len(samples)
    n = len(spec)
    if n == 0:
        return {"n_spikes": 0, "n_dense_values": n_dense, "bandwidth_ratio": math.inf,
                "reconstruction_correlation": 0.0}
    y = reconstruct(spec, reference=samples, **recon_kw)
    return {"n_spikes": n, "n_dense_values": n_dense, "bandwidth_ratio": n_dense / n,
            "reconstruction_correlation": pearson(samples, y)}


def threshold_sweep(samples, bank: RfBankConfig, thresholds, precision: str = "float",
                    threads: int = 1, **recon_kw) -> list[dict]:
    """Encode and reconstruct once per threshold; one compression report each."""
    from dataclasses import replace

    out = []
    for th in thresholds:
        b = replace(bank, threshold=float(th))
        spec = encode_stft(samples, b, precision=precision, threads=threads)
        rep = compression_report(spec, samples, b, **recon_kw)
        rep["threshold"] = float(th)
        out.append(rep)
    return out


def topk_stft_baseline(samples, k: int, nperseg: int = 256, hop: int = 1,
                       per_frame: bool = False) -> dict:
    """Conventional STFT compression baseline.

    Computes a Hann-window STFT, keeps the ``k`` largest-magnitude coefficients overall
    (or per frame with ``per_frame``), inverts, and reports the correlation with the
    input and the number of values kept.
    """
    x = np.asarray(samples, dtype=np.float64)
    nperseg = min(nperseg, len(x))
    noverlap = nperseg - hop
    _, _, Z = signal.stft(x, nperseg=nperseg, noverlap=noverlap, window="hann", boundary="zeros",
                          padded=True)
    mag = np.abs(Z)
    keep = np.zeros(Z.shape, bool)
    if per_frame:
        kk = min(k, Z.shape[0])
        top = np.argsort(-mag, axis=0, kind="stable")[:kk]
        np.put_along_axis(keep, top, True, axis=0)
    else:
        kk = min(k, Z.size)
        flat = np.argsort(-mag.ravel(), kind="stable")[:kk]
        keep.ravel()[flat] = True
    _, y = signal.istft(np.where(keep, Z, 0), nperseg=nperseg, noverlap=noverlap, window="hann",
                        boundary=True)
    y = y[:len(x)]
    if len(y) < len(x):
        y = np.pad(y, (0, len(x) - len(y)))
    return {"n_values": int(keep.sum()), "n_dense_values": int(Z.size), "correlation": pearson(x, y)}
