"""Timestep updates for the LIF, resonate-and-fire and Hopf neuron models.

Every step function is vectorised over a population. Passing ``fmt=None`` selects the
floating-point reference path (``float64`` / ``complex128`` state); passing a
:class:`~resonet.fixed.FixedFormat` selects the bit-accurate integer path, where scalar
state is a raw ``int64`` array and complex state is a :class:`FixedComplex` pair.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .fixed import COEF_FORMAT, PAYLOAD_FORMAT, Diagnostics, FixedFormat, mul_shift

GRADED = "graded_magnitude"
UNARY_RESET = "unary_with_reset"


class FixedComplex(NamedTuple):
    re: np.ndarray
    im: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "FixedComplex":
        return cls(np.zeros(shape, np.int64), np.zeros(shape, np.int64))

    @classmethod
    def from_complex(cls, z, fmt: FixedFormat, diag: Diagnostics | None = None) -> "FixedComplex":
        z = np.asarray(z, dtype=np.complex128)
        return cls(fmt.to_fixed(z.real, diag), fmt.to_fixed(z.imag, diag))

    def to_complex(self, fmt: FixedFormat) -> np.ndarray:
        return fmt.to_float(self.re) + 1j * fmt.to_float(self.im)


class SpikeEvent(NamedTuple):
    t: int
    neuron: int
    payload: float | None = None  # None marks a unary spike


@dataclass(frozen=True)
class LifParams:
    decay_u: float
    decay_v: float
    threshold: float

    def __post_init__(self):
        for name in ("decay_u", "decay_v"):
            d = getattr(self, name)
            if not 0.0 <= d < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {d}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    def quantized(self, fmt: FixedFormat, coef_fmt: FixedFormat = COEF_FORMAT) -> "LifParams":
        """Parameters snapped to the grids the fixed-point path actually uses."""
        return LifParams(
            float(coef_fmt.to_float(coef_fmt.to_fixed(self.decay_u))),
            float(coef_fmt.to_float(coef_fmt.to_fixed(self.decay_v))),
            float(fmt.to_float(fmt.to_fixed(self.threshold))),
        )


@dataclass(frozen=True)
class RfParams:
    """Resonate-and-fire parameters. ``rotation`` is derived from decay and omega_dt
    unless given explicitly, and is never recomputed during a run."""

    decay: float
    omega_dt: float
    threshold: float = 0.0
    output_mode: str = GRADED
    rotation: complex | None = None

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")
        if self.output_mode not in (GRADED, UNARY_RESET):
            raise ValueError(f"unknown output_mode {self.output_mode!r}")
        if self.rotation is None:
            object.__setattr__(self, "rotation", complex(self.decay * np.exp(1j * self.omega_dt)))

    def rotation_fixed(self, coef_fmt: FixedFormat = COEF_FORMAT) -> tuple[int, int]:
        if self.decay >= 1.0:
            raise ValueError("decay 1 is only available in floating-point mode")
        return int(coef_fmt.to_fixed(self.rotation.real)), int(coef_fmt.to_fixed(self.rotation.imag))

    def quantized(self, fmt: FixedFormat, coef_fmt: FixedFormat = COEF_FORMAT) -> "RfParams":
        c, s = self.rotation_fixed(coef_fmt)
        rot = complex(c / coef_fmt.scale, s / coef_fmt.scale)
        return replace(self, rotation=rot, threshold=float(fmt.to_float(fmt.to_fixed(self.threshold))))


@dataclass(frozen=True)
class HopfParams:
    omega0: float
    lam: float
    dt: float

    MAX_STEP = 0.5

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt * self.omega0 > self.MAX_STEP:
            raise ValueError(
                f"dt*omega0 = {self.dt * self.omega0:.4g} exceeds {self.MAX_STEP}; "
                "oversample the integration")


# --------------------------------------------------------------------------- LIF


def lif_step(u, v, a, p: LifParams, fmt: FixedFormat | None = None,
             diag: Diagnostics | None = None, coef_fmt: FixedFormat = COEF_FORMAT):
    """Advance LIF current ``u`` and voltage ``v`` by one step.

    Returns ``(u', v', spiked)``; spiking neurons have their voltage reset to zero.
    """
    if fmt is None:
        u = p.decay_u * np.asarray(u, dtype=np.float64) + a
        v = p.decay_v * np.asarray(v, dtype=np.float64) + u
        spiked = v > p.threshold
    else:
        du = int(coef_fmt.to_fixed(p.decay_u))
        dv = int(coef_fmt.to_fixed(p.decay_v))
        u = fmt.saturate(mul_shift(u, du, coef_fmt.frac_bits) + np.asarray(a, np.int64), diag)
        v = fmt.saturate(mul_shift(v, dv, coef_fmt.frac_bits) + u, diag)
        spiked = v > int(fmt.to_fixed(p.threshold))
    v = np.where(spiked, 0, v)
    if diag is not None:
        diag.spikes += int(np.count_nonzero(spiked))
    return u, v, spiked


# --------------------------------------------------------------------------- RF


def _rotate(z, a, rotation, fmt, diag, coef_fmt):
    if fmt is None:
        return rotation * z + a
    c, s = rotation
    sh = coef_fmt.frac_bits
    pr = np.asarray(z.re * c - z.im * s, dtype=np.int64)
    pi = np.asarray(z.re * s + z.im * c, dtype=np.int64)
    half = 1 << (sh - 1)
    re, im = (pr + half) >> sh, (pi + half) >> sh
    # Nearest rounding can map a small state onto a lattice point of the same norm, which
    # would ring forever. Where the norm fails to shrink, truncate toward zero instead:
    # that never grows either component, so a free oscillation decays to exactly zero.
    stuck = (re * re + im * im >= z.re * z.re + z.im * z.im) & ((z.re != 0) | (z.im != 0))
    if np.any(stuck):
        re = np.where(stuck, np.sign(pr) * (np.abs(pr) >> sh), re)
        im = np.where(stuck, np.sign(pi) * (np.abs(pi) >> sh), im)
    return FixedComplex(fmt.saturate(re + a.re, diag), fmt.saturate(im + a.im, diag))


def _rotation_for(p, fmt, coef_fmt):
    if fmt is None:
        if isinstance(p, RfParams):
            return p.rotation
        return np.array([q.rotation for q in p])
    if isinstance(p, RfParams):
        return p.rotation_fixed(coef_fmt)
    pairs = np.array([q.rotation_fixed(coef_fmt) for q in p], dtype=np.int64)
    return pairs[:, 0], pairs[:, 1]


def rf_step(z, a, p, fmt: FixedFormat | None = None, diag: Diagnostics | None = None,
            coef_fmt: FixedFormat = COEF_FORMAT, rotation=None, threshold=None):
    """Graded-output resonate-and-fire update.

    ``z' = rotation * z + a``. A neuron spikes when its phase passes through zero in the
    direction of rotation (for positive omega, the imaginary part goes from strictly
    negative to non-negative; mirrored for negative omega) while the new real part is
    strictly above threshold. The payload is that real part. There is no reset.

    ``p`` is an :class:`RfParams` or a sequence of them (one per neuron). ``rotation`` and
    ``threshold`` may be passed precomputed to skip per-call conversion.

    Returns ``(z', spiked, payload)`` with ``payload`` zero where no spike occurred.
    """
    if rotation is None:
        rotation = _rotation_for(p, fmt, coef_fmt)
    if threshold is None:
        threshold = _threshold_for(p, fmt)
    z_new = _rotate(z, a, rotation, fmt, diag, coef_fmt)
    if fmt is None:
        re, im_old, im_new = z_new.real, np.imag(z), z_new.imag
    else:
        re, im_old, im_new = z_new.re, z.im, z_new.im
    spiked = zero_phase_crossing(im_old, im_new, rotation, fmt) & (re > threshold)
    payload = np.where(spiked, re, 0)
    if diag is not None:
        diag.spikes += int(np.count_nonzero(spiked))
    return z_new, spiked, payload


def zero_phase_crossing(im_old, im_new, rotation, fmt=None):
    """True where the imaginary part crosses zero in the rotation's sense."""
    s = np.imag(rotation) if fmt is None else rotation[1]
    ccw = np.asarray(s) >= 0
    up = (im_old < 0) & (im_new >= 0)
    down = (im_old > 0) & (im_new <= 0)
    return np.where(ccw, up, down)


def rf_reset_step(z, a, p, fmt: FixedFormat | None = None, diag: Diagnostics | None = None,
                  coef_fmt: FixedFormat = COEF_FORMAT, rotation=None, threshold=None):
    """Resonate-and-fire with reset: a unary spike whenever the new imaginary part exceeds
    threshold, after which the real part is set to zero. Returns ``(z', spiked)``."""
    if rotation is None:
        rotation = _rotation_for(p, fmt, coef_fmt)
    if threshold is None:
        threshold = _threshold_for(p, fmt)
    z_new = _rotate(z, a, rotation, fmt, diag, coef_fmt)
    if fmt is None:
        spiked = z_new.imag > threshold
        z_new = np.where(spiked, 1j * z_new.imag, z_new)
    else:
        spiked = z_new.im > threshold
        z_new = FixedComplex(np.where(spiked, 0, z_new.re), z_new.im)
    if diag is not None:
        diag.spikes += int(np.count_nonzero(spiked))
    return z_new, spiked


def _threshold_for(p, fmt):
    if isinstance(p, RfParams):
        th = p.threshold
    else:
        th = np.array([q.threshold for q in p])
    return th if fmt is None else fmt.to_fixed(th)


# --------------------------------------------------------------------------- Hopf


def hopf_rhs(z, a, omega0: float, lam: float):
    return omega0 * ((lam - (z.real * z.real + z.imag * z.imag) + 1j) * z + a)


def hopf_step(z, a, p: HopfParams):
    """One classical RK4 step of ``dz/dt = omega0 * ((lam - |z|^2 + i) z + a)``.

    ``a`` is held constant over the step.
    """
    h = p.dt
    k1 = hopf_rhs(z, a, p.omega0, p.lam)
    k2 = hopf_rhs(z + 0.5 * h * k1, a, p.omega0, p.lam)
    k3 = hopf_rhs(z + 0.5 * h * k2, a, p.omega0, p.lam)
    k4 = hopf_rhs(z + h * k3, a, p.omega0, p.lam)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def hopf_step_fixed(z: FixedComplex, a: FixedComplex, p: HopfParams, fmt: FixedFormat,
                    diag: Diagnostics | None = None) -> FixedComplex:
    """RK4 step where every stage state and the final update are rounded to ``fmt``."""

    def q(x):
        return FixedComplex.from_complex(x, fmt, diag).to_complex(fmt)

    h = p.dt
    zf = z.to_complex(fmt)
    af = a.to_complex(fmt)
    k1 = hopf_rhs(zf, af, p.omega0, p.lam)
    k2 = hopf_rhs(q(zf + 0.5 * h * k1), af, p.omega0, p.lam)
    k3 = hopf_rhs(q(zf + 0.5 * h * k2), af, p.omega0, p.lam)
    k4 = hopf_rhs(q(zf + h * k3), af, p.omega0, p.lam)
    return FixedComplex.from_complex(zf + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), fmt, diag)


# --------------------------------------------------------------------------- synapses


def accumulate_synaptic(weights, events, n_sources: int | None = None,
                        fmt: FixedFormat | None = None, diag: Diagnostics | None = None,
                        weight_frac_bits: int = 0, t: int | None = None):
    """Activation ``a_i = sum_j w_ij * payload_j`` over the inbound events.

    ``weights`` is a (targets x sources) matrix, dense or scipy sparse, real or complex.
    Unary events count as payload 1. In fixed mode the weights hold raw integers with
    ``weight_frac_bits`` fractional bits and payloads are raw ``PAYLOAD_FORMAT`` values
    (unary = 1.0); products are summed exactly in int64 and rounded and saturated once.
    The result does not depend on event order in either mode.
    """
    weights = sparse.csr_matrix(weights)
    n_targets, n_src = weights.shape
    if n_sources is not None and n_sources != n_src:
        raise ValueError(f"weights have {n_src} sources, expected {n_sources}")
    events = list(events)
    for ev in events:
        if not 0 <= ev.neuron < n_src:
            raise KeyError(f"event from unknown source {ev.neuron}")
        if t is not None and ev.t != t - 1:
            raise ValueError(f"event at t={ev.t} delivered to step {t}")
    is_complex = np.iscomplexobj(weights.data)
    if diag is not None:
        fan_out = np.bincount(weights.indices, minlength=n_src)
        diag.synops += int(sum(fan_out[ev.neuron] for ev in events))

    if fmt is None:
        # canonical order makes the float sum independent of arrival order
        pairs = sorted((ev.neuron, 1.0 if ev.payload is None else float(ev.payload)) for ev in events)
        s = np.zeros(n_src)
        for j, val in pairs:
            s[j] += val
        return weights @ s

    unit = 1 << PAYLOAD_FORMAT.frac_bits
    s = np.zeros(n_src, dtype=np.int64)
    for ev in events:
        s[ev.neuron] += unit if ev.payload is None else int(ev.payload)
    shift = weight_frac_bits + PAYLOAD_FORMAT.frac_bits - fmt.frac_bits

    def reduce(w):
        acc = sparse.csr_matrix((np.asarray(w, dtype=np.int64), weights.indices, weights.indptr),
                                shape=weights.shape) @ s
        if shift > 0:
            acc = (acc + (1 << (shift - 1))) >> shift
        elif shift < 0:
            acc = acc << (-shift)
        return fmt.saturate(acc, diag)

    if is_complex:
        return FixedComplex(reduce(np.rint(weights.data.real)), reduce(np.rint(weights.data.imag)))
    return reduce(np.rint(weights.data))


# --------------------------------------------------------------------------- demo traces


def impulse_response(model: str, params, steps: int, fmt: FixedFormat | None = None,
                     impulse=1.0, diag: Diagnostics | None = None) -> dict[str, np.ndarray]:
    """State trace of a single neuron driven by one input impulse at t=0.

    ``model`` is one of ``lif``, ``rf``, ``rf_reset``, ``hopf``. The returned dict holds
    per-step state arrays plus a ``spike`` column (payload for graded spikes, 1 for unary).
    """
    diag = diag if diag is not None else Diagnostics()
    out = {}
    if model == "lif":
        u = v = np.zeros(1, np.int64 if fmt else np.float64)
        us, vs, sp = [], [], []
        for t in range(steps):
            a = impulse if t == 0 else 0.0
            a = np.array([a]) if fmt is None else fmt.to_fixed([a])
            u, v, s = lif_step(u, v, a, params, fmt, diag)
            us.append(u[0]); vs.append(v[0]); sp.append(float(s[0]))
        conv = (lambda x: np.asarray(x, float)) if fmt is None else fmt.to_float
        out = {"u": conv(us), "v": conv(vs), "spike": np.array(sp)}
    elif model in ("rf", "rf_reset"):
        step = rf_step if model == "rf" else rf_reset_step
        imp = complex(impulse)
        if fmt is None:
            z = np.zeros(1, complex)
        else:
            z = FixedComplex.zeros(1)
        re, im, sp = [], [], []
        for t in range(steps):
            a = imp if t == 0 else 0j
            a = np.array([a]) if fmt is None else FixedComplex.from_complex([a], fmt)
            res = step(z, a, params, fmt, diag)
            z, spiked = res[0], res[1]
            zc = z if fmt is None else z.to_complex(fmt)
            re.append(zc[0].real); im.append(zc[0].imag)
            if model == "rf":
                pay = res[2] if fmt is None else fmt.to_float(res[2])
                sp.append(float(pay[0]))
            else:
                sp.append(float(spiked[0]))
        out = {"re": np.array(re), "im": np.array(im), "spike": np.array(sp)}
    elif model == "hopf":
        imp = complex(impulse)
        z = np.zeros(1, complex) if fmt is None else FixedComplex.zeros(1)
        re, im = [], []
        for t in range(steps):
            a = imp if t == 0 else 0j
            if fmt is None:
                z = hopf_step(z, np.array([a]), params)
                zc = z
            else:
                z = hopf_step_fixed(z, FixedComplex.from_complex([a], fmt), params, fmt, diag)
                zc = z.to_complex(fmt)
            re.append(zc[0].real); im.append(zc[0].imag)
        out = {"re": np.array(re), "im": np.array(im), "spike": np.zeros(steps)}
    else:
        raise ValueError(f"unknown neuron model {model!r}")
    out["t"] = np.arange(steps)
    return out
