"""Optical flow from event streams with complex Gabor synapses and RF temporal filters.

Pipeline per timestep (one bin of ``dt`` seconds):

1. each event scatters a complex Gabor kernel into the activation map of every
   spatial channel (orientation x spatial frequency); the map is shared by all
   temporal-frequency channels of that spatial channel;
2. every (spatial, temporal) channel runs two RF neurons per pixel, one fed with the
   activation and one with its conjugate. The two respond to opposite motion
   directions along the kernel's orientation;
3. the opponent energy of each channel is the difference of the squared readouts,
   and per-pixel flow is the energy-weighted mean of the preferred velocities.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fixed import COEF_FORMAT, STATE_FORMAT, Diagnostics, FixedFormat
from .neurons import FixedComplex, zero_phase_crossing

SPATIAL_FREQS = (6 * math.pi / 256,)
TEMPORAL_FREQS = tuple(4 * math.pi * k for k in range(1, 6))
ORIENTATIONS = tuple(k * math.pi / 4 for k in range(4))

DEFAULT_ENERGY_FLOOR = 1e-6 * STATE_FORMAT.max_value ** 2


@dataclass(frozen=True)
class FilterBankSpec:
    rf_size: tuple[int, int] = (64, 64)
    dt: float = 0.032
    spatial_freqs: tuple[float, ...] = SPATIAL_FREQS
    temporal_freqs: tuple[float, ...] = TEMPORAL_FREQS
    orientations: tuple[float, ...] = ORIENTATIONS
    gabor_sigma: float = 16.0
    rf_decay: float = 0.9
    readout: str = "spikes"
    threshold: float = 0.0
    energy_floor: float = DEFAULT_ENERGY_FLOOR

    def __post_init__(self):
        for name in ("spatial_freqs", "temporal_freqs", "orientations"):
            if len(getattr(self, name)) < 1:
                raise ValueError(f"{name} must not be empty")
        if any(w <= 0 for w in self.spatial_freqs):
            raise ValueError("spatial frequencies must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.rf_decay < 1:
            raise ValueError("rf_decay must lie in (0, 1)")
        if self.readout not in ("spikes", "dense"):
            raise ValueError(f"readout must be 'spikes' or 'dense', got {self.readout!r}")
        if any(abs(w * self.dt) >= math.pi for w in self.temporal_freqs):
            raise ValueError("temporal frequency aliases: |omega_t * dt| must be < pi")

    @property
    def kernel_size(self) -> tuple[int, int]:
        # centred kernels need odd sizes: a 64 px field becomes 65 taps
        return tuple(2 * (s // 2) + 1 for s in self.rf_size)

    @property
    def spatial_channels(self) -> list[tuple[float, float]]:
        return [(wx, th) for wx in self.spatial_freqs for th in self.orientations]

    @property
    def channels(self) -> list[tuple[float, float, float]]:
        """All (omega_x, omega_t, theta) combinations, spatial-major."""
        return [(wx, wt, th) for wx, th in self.spatial_channels for wt in self.temporal_freqs]


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.u = np.where(self.valid, self.u, 0.0)
        self.v = np.where(self.valid, self.v, 0.0)

    @property
    def shape(self):
        return self.u.shape

    @classmethod
    def constant(cls, shape, velocity) -> "FlowField":
        return cls(np.full(shape, float(velocity[0])), np.full(shape, float(velocity[1])),
                   np.ones(shape, bool))


# --------------------------------------------------------------------------- spatial


def gabor_kernel(omega_x: float, theta: float, sigma: float, size) -> np.ndarray:
    """Complex Gabor ``exp(-|p|^2 / 2 sigma^2) * exp(i omega_x p.n)`` with zero sum.

    ``size`` is an odd int or an odd ``(rows, cols)`` pair; ``p = (x, y)`` is measured
    from the centre tap with ``y`` running down the rows. The DC term is removed with
    the envelope's shape, so the real part stays even and the imaginary part odd.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rows, cols = (size, size) if np.isscalar(size) else size
    if rows <= 0 or cols <= 0:
        raise ValueError("kernel size must be positive")
    if rows % 2 == 0 or cols % 2 == 0:
        raise ValueError("kernel size must be odd")
    y, x = np.mgrid[-(rows // 2):rows // 2 + 1, -(cols // 2):cols // 2 + 1].astype(float)
    env = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    carrier = np.exp(1j * omega_x * (x * math.cos(theta) + y * math.sin(theta)))
    dc = (env * carrier).sum() / env.sum()
    return env * (carrier - dc)


def spatial_stage(events, kernels: np.ndarray, shape, diag: Diagnostics | None = None,
                  method: str = "auto") -> np.ndarray:
    """Scatter-add kernels at event locations.

    ``events`` is ``(x, y, value)`` arrays (polarity for DVS, intensity for frames);
    ``kernels`` is ``(n, kh, kw)``. Returns ``(n, H, W)`` activations: each event adds
    its value times every kernel centred on its pixel, so a single event at ``(x, y)``
    reproduces the kernel there. Out-of-bounds events are dropped and counted.

    The synop counter charges ``kh * kw`` ops per in-bounds event and kernel whatever
    ``method`` computes the sum: ``"scatter"`` adds kernels pixel by pixel, ``"fft"``
    evaluates the same linear map as a zero-padded FFT convolution, and ``"auto"``
    picks the cheaper of the two for the bin.
    """
    kernels = np.asarray(kernels)
    if kernels.ndim == 2:
        kernels = kernels[None]
    n, kh, kw = kernels.shape
    H, W = shape
    ry, rx = kh // 2, kw // 2
    x, y, val = (np.asarray(c) for c in events)
    x = x.astype(np.int64)
    y = y.astype(np.int64)
    inside = (x >= 0) & (x < W) & (y >= 0) & (y < H)
    if diag is not None:
        diag.dropped_events += int(np.count_nonzero(~inside))
        diag.synops += int(np.count_nonzero(inside)) * n * kh * kw
    x, y, val = x[inside], y[inside], np.asarray(val, dtype=np.float64)[inside]
    # repeated events on one pixel fold into a single scaled scatter
    img = np.zeros((H, W))
    np.add.at(img, (y, x), val)
    ys, xs = np.nonzero(img)
    if method == "auto":
        method = "scatter" if len(ys) <= SCATTER_LIMIT else "fft"
    if method == "fft":
        return _fft_scatter(img, kernels)
    if method != "scatter":
        raise ValueError(f"unknown method {method!r}")
    out = np.zeros((n, H + 2 * ry, W + 2 * rx), dtype=np.complex128)
    for yy, xx in zip(ys, xs):
        out[:, yy:yy + kh, xx:xx + kw] += img[yy, xx] * kernels
    return out[:, ry:ry + H, rx:rx + W]


# above this many active pixels per bin the FFT route is cheaper in numpy
SCATTER_LIMIT = 128


def _fft_scatter(img: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    n, kh, kw = kernels.shape
    H, W = img.shape
    fy, fx = H + kh - 1, W + kw - 1
    spec = np.fft.fft2(img, (fy, fx))
    full = np.fft.ifft2(np.fft.fft2(kernels, (fy, fx)) * spec)
    return full[:, kh // 2:kh // 2 + H, kw // 2:kw // 2 + W]


def dense_conv_ops(shape, kernel_shape, n_kernels: int = 1) -> int:
    """Synaptic ops of a conventional dense convolution over the whole frame."""
    return int(np.prod(shape)) * int(np.prod(kernel_shape)) * n_kernels


# --------------------------------------------------------------------------- temporal


def preferred_velocity(omega_x: float, omega_t: float, theta: float) -> np.ndarray:
    """Velocity (pix/s) a channel is tuned to: ``omega_t / omega_x`` along the kernel normal."""
    if omega_x == 0:
        raise ValueError("omega_x must be nonzero")
    s = omega_t / omega_x
    return np.array([s * math.cos(theta), s * math.sin(theta)])


@dataclass
class OpponentState:
    """RF pair state for a stack of channels over the image."""

    z_pos: np.ndarray
    z_neg: np.ndarray
    held_pos: np.ndarray
    held_neg: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "OpponentState":
        z = np.zeros(shape, np.complex128)
        r = np.zeros(shape)
        return cls(z, z.copy(), r, r.copy())


def opponent_energy_step(state: OpponentState, a: np.ndarray, omega_dt, decay: float,
                         threshold: float = 0.0, readout: str = "spikes",
                         diag: Diagnostics | None = None, rotation=None):
    """One timestep of the opponent RF pairs.

    ``a`` is the complex activation ``(H, W)``, shared by all temporal channels whose
    ``omega_dt`` (radians per step) are stacked on the leading axis of ``state``. The
    ``pos`` neuron is fed ``conj(a)`` and responds to motion along ``+n``, the ``neg``
    neuron is fed ``a`` and responds to motion along ``-n``.

    Readouts are ``|z|`` in dense mode, or the last graded payload (``Re z`` at a
    zero-phase crossing above threshold) in spikes mode.

    Returns ``(state', opponent, total, events)`` where ``opponent = r_pos^2 - r_neg^2``,
    ``total = r_pos^2 + r_neg^2`` and ``events`` is ``(spiked_pos, spiked_neg, payload_pos,
    payload_neg)``. ``rotation`` overrides ``decay * exp(i omega_dt)`` per channel.
    """
    if rotation is None:
        rotation = decay * np.exp(1j * np.asarray(omega_dt, dtype=float))
    rot = np.asarray(rotation).reshape((-1,) + (1,) * a.ndim)
    z_pos = rot * state.z_pos + np.conj(a)
    z_neg = rot * state.z_neg + a
    sp_pos = zero_phase_crossing(state.z_pos.imag, z_pos.imag, rot) & (z_pos.real > threshold)
    sp_neg = zero_phase_crossing(state.z_neg.imag, z_neg.imag, rot) & (z_neg.real > threshold)
    pay_pos = np.where(sp_pos, z_pos.real, 0.0)
    pay_neg = np.where(sp_neg, z_neg.real, 0.0)
    held_pos = np.where(sp_pos, pay_pos, state.held_pos)
    held_neg = np.where(sp_neg, pay_neg, state.held_neg)
    if diag is not None:
        diag.spikes += int(np.count_nonzero(sp_pos)) + int(np.count_nonzero(sp_neg))
    if readout == "dense":
        r_pos, r_neg = np.abs(z_pos), np.abs(z_neg)
    else:
        r_pos, r_neg = held_pos, held_neg
    e_pos, e_neg = r_pos * r_pos, r_neg * r_neg
    new = OpponentState(z_pos, z_neg, held_pos, held_neg)
    return new, e_pos - e_neg, e_pos + e_neg, (sp_pos, sp_neg, pay_pos, pay_neg)


def estimate_flow(energies: np.ndarray, velocities: np.ndarray, total: np.ndarray | None = None,
                  energy_floor: float = DEFAULT_ENERGY_FLOOR) -> FlowField:
    """Per-pixel energy-weighted mean of preferred velocities.

    ``energies`` is ``(C, H, W)`` and ``velocities`` ``(C, 2)``. With ``total`` omitted the
    weights are normalised by ``sum(energies)``; with signed opponent energies pass the
    per-channel ``total`` (sum of both directions) as the normaliser. Pixels whose
    normaliser is below ``energy_floor`` are marked invalid.
    """
    energies = np.asarray(energies, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    norm = (energies if total is None else np.asarray(total, dtype=float)).sum(axis=0)
    valid = np.isfinite(norm) & (norm >= energy_floor)
    safe = np.where(valid, norm, 1.0)
    u = np.tensordot(velocities[:, 0], energies, axes=1) / safe
    v = np.tensordot(velocities[:, 1], energies, axes=1) / safe
    return FlowField(u, v, valid)


# --------------------------------------------------------------------------- evaluation


def aee_metrics(flow: FlowField, gt: FlowField, event_mask: np.ndarray, dt_gt: float,
                outlier_px: float = 3.0) -> dict:
    """Average endpoint error and outlier percentage in displacement pixels over ``dt_gt``.

    Only pixels in ``event_mask`` (and valid in both fields) are scored.
    """
    if flow.shape != gt.shape:
        raise ValueError(f"shape mismatch {flow.shape} vs {gt.shape}")
    mask = np.asarray(event_mask, bool) & flow.valid & gt.valid
    if not mask.any():
        raise ValueError("empty evaluation mask")
    du = (flow.u - gt.u)[mask] * dt_gt
    dv = (flow.v - gt.v)[mask] * dt_gt
    err = np.hypot(du, dv)
    return {
        "AEE": float(err.mean()),
        "outlier_pct": float(100.0 * np.count_nonzero(err > outlier_px) / err.size),
        "n_pixels": int(err.size),
    }


def direction_error_deg(flow: FlowField, gt: FlowField, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, bool) & flow.valid & gt.valid
    ang = np.arctan2(flow.v[mask], flow.u[mask]) - np.arctan2(gt.v[mask], gt.u[mask])
    return np.degrees(np.abs(np.angle(np.exp(1j * ang))))


# --------------------------------------------------------------------------- pipeline


class FlowEstimator:
    """Stateful event-driven flow pipeline over a fixed sensor size.

    Feed one time bin at a time with :meth:`step`; read the current estimate with
    :meth:`flow`. ``threads`` partitions the spatial channels; results do not depend on it.

    With ``fmt`` set, activations and RF states are stored in that fixed-point format
    (rounded and saturated after every step) and the rotation uses coefficient-format
    values; energies and pooling stay in float.
    """

    def __init__(self, spec: FilterBankSpec, shape, threads: int = 1, fmt: FixedFormat | None = None):
        self.spec = spec
        self.shape = tuple(shape)
        self.threads = max(1, int(threads))
        self.fmt = fmt
        self.kernels = np.stack([gabor_kernel(wx, th, spec.gabor_sigma, spec.kernel_size)
                                 for wx, th in spec.spatial_channels])
        self.omega_dt = np.array(spec.temporal_freqs) * spec.dt
        rot = spec.rf_decay * np.exp(1j * self.omega_dt)
        self._rot_fixed = (COEF_FORMAT.to_float(COEF_FORMAT.to_fixed(rot.real))
                           + 1j * COEF_FORMAT.to_float(COEF_FORMAT.to_fixed(rot.imag)))
        n_t = len(spec.temporal_freqs)
        self.states = [OpponentState.zeros((n_t,) + self.shape) for _ in spec.spatial_channels]
        self.velocities = np.array([preferred_velocity(*c) for c in spec.channels])
        self.diag = Diagnostics()
        self.t = 0
        self._opp = np.zeros((len(self.velocities),) + self.shape)
        self._tot = np.zeros_like(self._opp)

    def _channel(self, i, a):
        d = Diagnostics()
        if self.fmt is None:
            st, opp, tot, _ = opponent_energy_step(self.states[i], a, self.omega_dt, self.spec.rf_decay,
                                                   self.spec.threshold, self.spec.readout, d)
            return i, st, opp, tot, d
        q = lambda z: FixedComplex.from_complex(z, self.fmt, d).to_complex(self.fmt)
        st, opp, tot, _ = opponent_energy_step(self.states[i], q(a), self.omega_dt, self.spec.rf_decay,
                                               self.spec.threshold, self.spec.readout, d,
                                               rotation=self._rot_fixed)
        st = OpponentState(q(st.z_pos), q(st.z_neg), st.held_pos, st.held_neg)
        return i, st, opp, tot, d

    def step(self, events) -> None:
        """Advance one bin. ``events`` is ``(x, y, value)`` arrays for this bin."""
        a_all = spatial_stage(events, self.kernels, self.shape, self.diag)
        n_t = len(self.spec.temporal_freqs)
        if self.threads == 1:
            results = [self._channel(i, a_all[i]) for i in range(len(self.states))]
        else:
            with ThreadPoolExecutor(self.threads) as ex:
                results = list(ex.map(lambda i: self._channel(i, a_all[i]), range(len(self.states))))
        for i, st, opp, tot, d in results:
            self.states[i] = st
            self._opp[i * n_t:(i + 1) * n_t] = opp
            self._tot[i * n_t:(i + 1) * n_t] = tot
            self.diag.merge(d)
        self.t += 1

    def flow(self) -> FlowField:
        return estimate_flow(self._opp, self.velocities, self._tot, self.spec.energy_floor)

    @property
    def energies(self) -> tuple[np.ndarray, np.ndarray]:
        return self._opp, self._tot


def bin_events(t_us: np.ndarray, dt: float, t0_us: int = 0):
    """Bin index of each event for bins of ``dt`` seconds starting at ``t0_us``."""
    return ((np.asarray(t_us, dtype=np.int64) - t0_us) // int(round(dt * 1e6))).astype(np.int64)


def run_flow(events, spec: FilterBankSpec, shape, n_bins: int | None = None, threads: int = 1,
             fmt: FixedFormat | None = None):
    """Run the pipeline over a whole event record ``(t_us, x, y, polarity)``.

    Returns ``(estimator, per_bin)`` where ``per_bin`` holds one
    ``(flow, event_mask, n_events)`` tuple per bin; ``event_mask`` marks pixels that
    received at least one event in that bin.
    """
    t_us, x, y, pol = (np.asarray(c) for c in events)
    bins = bin_events(t_us, spec.dt) if len(t_us) else np.zeros(0, np.int64)
    if n_bins is None:
        n_bins = int(bins.max()) + 1 if len(bins) else 0
    est = FlowEstimator(spec, shape, threads, fmt)
    order = np.argsort(bins, kind="stable")
    bins, x, y, pol = bins[order], x[order], y[order], pol[order]
    edges = np.searchsorted(bins, np.arange(n_bins + 1))
    out = []
    for b in range(n_bins):
        sl = slice(edges[b], edges[b + 1])
        est.step((x[sl], y[sl], pol[sl]))
        mask = np.zeros(shape, bool)
        xi, yi = x[sl].astype(int), y[sl].astype(int)
        ok = (xi >= 0) & (xi < shape[1]) & (yi >= 0) & (yi < shape[0])
        mask[yi[ok], xi[ok]] = True
        out.append((est.flow(), mask, int(sl.stop - sl.start)))
    return est, out
