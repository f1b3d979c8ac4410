"""File formats and synthetic stimuli shared by the pipelines.

Formats
-------
* Audio: 16-bit PCM mono WAV, samples normalised to ``k / 32768``.
* Events, CSV: a ``# width=W height=H time_unit=us`` line, a ``t,x,y,polarity``
  header, then one record per line with nondecreasing ``t``.
* Events, binary: magic ``RNEV``, ``<u2`` version, ``<u2`` width, ``<u2`` height,
  ``<u8`` count, then packed little-endian ``(<i8 t, <u2 x, <u2 y, i1 polarity)`` records.
* Spikes CSV: ``t,neuron,payload`` (payload empty for unary spikes).
* Flow CSV: ``x,y,u,v,valid`` with one row per pixel in row-major order.
* Flow PPM: binary P6 colour-wheel image (hue = direction, value = speed).
* Reports: ``key=value`` lines.
"""
from __future__ import annotations

import colorsys
import csv
import io
import math
import re
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, msg: str, line: int | None = None, path=None):
        where = f"{path}:" if path is not None else ""
        where += f"line {line}: " if line is not None else (" " if where else "")
        super().__init__(f"{where}{msg}")
        self.line = line


# --------------------------------------------------------------------------- audio


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: float
    source: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path) -> AudioBuffer:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise FormatError(f"compressed WAV ({w.getcomptype()}) not supported", path=path)
            if w.getnchannels() != 1:
                raise FormatError(f"expected mono, got {w.getnchannels()} channels", path=path)
            if w.getsampwidth() != 2:
                raise FormatError(f"expected 16-bit PCM, got {8 * w.getsampwidth()}-bit", path=path)
            n = w.getnframes()
            rate = w.getframerate()
            raw = w.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"not a readable PCM WAV: {exc}", path=path) from exc
    if len(raw) != 2 * n:
        raise FormatError(f"truncated: header says {n} frames, found {len(raw) // 2}", path=path)
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(data, rate, str(path))


def write_wav(path, audio: AudioBuffer) -> None:
    q = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(audio.sample_rate)))
        w.writeframes(q.tobytes())


def gen_chirp(f0: float, f1: float, duration: float, sample_rate: float,
              amplitude: float = 0.5) -> AudioBuffer:
    """Phase-continuous linear sweep from ``f0`` to ``f1`` Hz (a sine starting at phase 0)."""
    nyq = sample_rate / 2
    if not (0 < f0 < nyq and 0 < f1 < nyq):
        raise ValueError(f"chirp frequencies must lie in (0, {nyq})")
    if duration <= 0:
        raise ValueError("duration must be positive")
    if not 0 <= amplitude <= 1:
        raise ValueError("amplitude must lie in [0, 1]")
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t)
    return AudioBuffer(amplitude * np.sin(phase), sample_rate, f"chirp({f0},{f1},{duration})")


def gen_tone(freq: float, duration: float, sample_rate: float, amplitude: float = 0.5) -> AudioBuffer:
    return gen_chirp(freq, freq, duration, sample_rate, amplitude)


# --------------------------------------------------------------------------- events

EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
_MAGIC = b"RNEV"


@dataclass
class EventFile:
    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    polarity: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    time_unit: str = "us"
    ground_truth: tuple[float, float] | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, np.int64)
        self.x = np.asarray(self.x, np.int64)
        self.y = np.asarray(self.y, np.int64)
        self.polarity = np.asarray(self.polarity, np.int64)
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.polarity)):
            raise ValueError("event columns differ in length")

    def __len__(self):
        return len(self.t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def columns(self):
        return self.t, self.x, self.y, self.polarity

    def validate(self, path=None, line_offset: int = 0) -> None:
        """Raise :class:`FormatError` on the first out-of-order, out-of-bounds or bad-polarity record."""
        def bad(i, msg):
            raise FormatError(msg, line=None if line_offset < 0 else i + 1 + line_offset, path=path)
        if len(self.t) > 1:
            back = np.nonzero(np.diff(self.t) < 0)[0]
            if len(back):
                i = back[0] + 1
                bad(i, f"timestamp {self.t[i]} precedes {self.t[i - 1]}")
        oob = np.nonzero((self.x < 0) | (self.x >= self.width) | (self.y < 0) | (self.y >= self.height))[0]
        if len(oob):
            i = oob[0]
            bad(i, f"pixel ({self.x[i]}, {self.y[i]}) outside {self.width}x{self.height}")
        pol = np.nonzero(np.abs(self.polarity) != 1)[0]
        if len(pol):
            bad(pol[0], f"polarity must be +1 or -1, got {self.polarity[pol[0]]}")


def write_events(path, ev: EventFile) -> None:
    path = Path(path)
    if path.suffix == ".bin":
        rec = np.empty(len(ev), EVENT_DTYPE)
        rec["t"], rec["x"], rec["y"], rec["p"] = ev.t, ev.x, ev.y, ev.polarity
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<HHHQ", 1, ev.width, ev.height, len(ev)))
            fh.write(rec.tobytes())
        return
    with open(path, "w", newline="") as fh:
        fh.write(f"# width={ev.width} height={ev.height} time_unit={ev.time_unit}\n")
        fh.write("t,x,y,polarity\n")
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack(ev.columns()), fmt="%d", delimiter=",")
        fh.write(buf.getvalue())


def read_events(path) -> EventFile:
    """Read a CSV or binary event file, validating every record."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _MAGIC:
        return _read_events_bin(path)
    return _read_events_csv(path)


def _read_events_bin(path: Path) -> EventFile:
    blob = path.read_bytes()
    hdr = 4 + struct.calcsize("<HHHQ")
    if len(blob) < hdr:
        raise FormatError("truncated header", path=path)
    version, width, height, n = struct.unpack("<HHHQ", blob[4:hdr])
    if version != 1:
        raise FormatError(f"unsupported version {version}", path=path)
    body = blob[hdr:]
    if len(body) != n * EVENT_DTYPE.itemsize:
        raise FormatError(f"expected {n} records, found {len(body) / EVENT_DTYPE.itemsize:g}", path=path)
    rec = np.frombuffer(body, EVENT_DTYPE)
    ev = EventFile(width, height, rec["t"], rec["x"], rec["y"], rec["p"])
    ev.validate(path, line_offset=-1)
    return ev


def _read_events_csv(path: Path) -> EventFile:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing '# width=... height=...' header", line=1, path=path)
    meta = {}
    for tok in lines[0][1:].split():
        if "=" not in tok:
            raise FormatError(f"bad header token {tok!r}", line=1, path=path)
        k, v = tok.split("=", 1)
        meta[k] = v
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except (KeyError, ValueError) as exc:
        raise FormatError("header needs integer width and height", line=1, path=path) from exc
    if meta.get("time_unit", "us") != "us":
        raise FormatError(f"unsupported time unit {meta['time_unit']!r}", line=1, path=path)
    if len(lines) < 2 or lines[1].replace(" ", "") != "t,x,y,polarity":
        raise FormatError("expected column header 't,x,y,polarity'", line=2, path=path)
    rows = []
    for i, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields, got {len(parts)}", line=i, path=path)
        try:
            rows.append((i, *(int(p) for p in parts)))
        except ValueError as exc:
            raise FormatError(f"non-integer field in {line!r}", line=i, path=path) from exc
    arr = np.array(rows, dtype=np.int64).reshape(-1, 5)
    ev = EventFile(width, height, arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])
    try:
        ev.validate(path, line_offset=-1)
    except FormatError as exc:
        # recover the physical line of the offending record
        idx = _first_bad(ev)
        raise FormatError(str(exc).split(": ", 1)[-1], line=int(arr[idx, 0]), path=path) from None
    return ev


def _first_bad(ev: EventFile) -> int:
    bad = np.zeros(len(ev), bool)
    if len(ev) > 1:
        bad[1:] |= np.diff(ev.t) < 0
    bad |= (ev.x < 0) | (ev.x >= ev.width) | (ev.y < 0) | (ev.y >= ev.height)
    bad |= np.abs(ev.polarity) != 1
    return int(np.argmax(bad))


def gen_drifting_grating(size, omega_x: float, theta: float, speed: float, duration: float,
                         event_rate: float = 1000.0, contrast_threshold: float = 0.15,
                         contrast: float = 0.8, seed: int = 0) -> EventFile:
    """DVS events from a sinusoidal grating drifting along its normal ``(cos theta, sin theta)``.

    Log intensity is sampled ``event_rate`` times per second; a pixel emits one event per
    ``contrast_threshold`` of log-intensity change since its last event, with the sign
    of the change as polarity. The grating's starting phase is drawn from ``seed``. The
    attached ground truth is the constant velocity ``speed * (cos theta, sin theta)``.
    """
    H, W = (size, size) if np.isscalar(size) else size
    if H < 1 or W < 1:
        raise ValueError("grating size must be positive")
    if duration <= 0 or event_rate <= 0 or contrast_threshold <= 0:
        raise ValueError("duration, event_rate and contrast_threshold must be positive")
    if not 0 < contrast < 1:
        raise ValueError("contrast must lie in (0, 1)")
    phase0 = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:H, 0:W].astype(float)
    proj = xx * math.cos(theta) + yy * math.sin(theta)

    def log_intensity(t):
        return np.log(0.5 + 0.5 * contrast * np.cos(omega_x * (proj - speed * t) + phase0))

    ref = log_intensity(0.0)
    chunks = []
    n = int(round(duration * event_rate))
    for i in range(1, n + 1):
        t = i / event_rate
        d = log_intensity(t) - ref
        k = np.floor(np.abs(d) / contrast_threshold).astype(np.int64)
        ys, xs = np.nonzero(k)
        if len(ys) == 0:
            continue
        kk = k[ys, xs]
        sign = np.sign(d[ys, xs]).astype(np.int64)
        ref[ys, xs] += sign * kk * contrast_threshold
        m = int(kk.sum())
        chunks.append((np.full(m, int(round(t * 1e6)), np.int64), np.repeat(xs, kk),
                       np.repeat(ys, kk), np.repeat(sign, kk)))
    if chunks:
        cols = [np.concatenate([c[j] for c in chunks]) for j in range(4)]
    else:
        cols = [np.zeros(0, np.int64)] * 4
    gt = (speed * math.cos(theta), speed * math.sin(theta))
    return EventFile(W, H, *cols, ground_truth=gt)


# --------------------------------------------------------------------------- tables


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return "" if v is None else v


def write_spikes_csv(path, t, neuron, payload=None) -> None:
    payload = [None] * len(t) if payload is None else payload
    write_csv(path, ["t", "neuron", "payload"], zip(np.asarray(t).tolist(), np.asarray(neuron).tolist(),
                                                     list(payload)))


def read_spikes_csv(path):
    t, n, p = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["t", "neuron", "payload"]:
            raise FormatError("expected header 't,neuron,payload'", line=1, path=path)
        for i, row in enumerate(r, start=2):
            if len(row) != 3:
                raise FormatError(f"expected 3 fields, got {len(row)}", line=i, path=path)
            try:
                t.append(int(row[0])); n.append(int(row[1]))
                p.append(float(row[2]) if row[2] else np.nan)
            except ValueError as exc:
                raise FormatError(f"bad record {row!r}", line=i, path=path) from exc
    return np.array(t, np.int64), np.array(n, np.int64), np.array(p)


def write_flow_csv(path, flow) -> None:
    H, W = flow.shape
    yy, xx = np.mgrid[0:H, 0:W]
    rows = zip(xx.ravel().tolist(), yy.ravel().tolist(), flow.u.ravel().tolist(),
               flow.v.ravel().tolist(), flow.valid.ravel().astype(int).tolist())
    write_csv(path, ["x", "y", "u", "v", "valid"], rows)


def read_flow_csv(path):
    from .optflow import FlowField

    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["x", "y", "u", "v", "valid"]:
            raise FormatError("expected header 'x,y,u,v,valid'", line=1, path=path)
        recs = []
        for i, row in enumerate(r, start=2):
            try:
                recs.append((int(row[0]), int(row[1]), float(row[2]), float(row[3]), int(row[4])))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"bad record {row!r}", line=i, path=path) from exc
    if not recs:
        raise FormatError("no flow records", path=path)
    arr = np.array(recs)
    W, H = int(arr[:, 0].max()) + 1, int(arr[:, 1].max()) + 1
    if len(arr) != W * H:
        raise FormatError(f"expected {W * H} pixels, got {len(arr)}", path=path)
    u = np.zeros((H, W)); v = np.zeros((H, W)); valid = np.zeros((H, W), bool)
    xi, yi = arr[:, 0].astype(int), arr[:, 1].astype(int)
    u[yi, xi], v[yi, xi], valid[yi, xi] = arr[:, 2], arr[:, 3], arr[:, 4] != 0
    return FlowField(u, v, valid)


def flow_to_rgb(flow, max_speed: float | None = None) -> np.ndarray:
    """Colour-wheel rendering: hue from direction, brightness from speed, black if invalid."""
    speed = np.hypot(flow.u, flow.v)
    if max_speed is None:
        max_speed = float(speed[flow.valid].max()) if flow.valid.any() else 1.0
    max_speed = max_speed or 1.0
    hue = (np.arctan2(flow.v, flow.u) / (2 * np.pi)) % 1.0
    val = np.clip(speed / max_speed, 0, 1)
    rgb = np.zeros(flow.shape + (3,), np.uint8)
    for (i, j) in zip(*np.nonzero(flow.valid)):
        r, g, b = colorsys.hsv_to_rgb(hue[i, j], 1.0, val[i, j])
        rgb[i, j] = (round(255 * r), round(255 * g), round(255 * b))
    return rgb


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, np.uint8)
    H, W = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    # exactly one whitespace byte separates maxval from the pixels, which may start with
    # bytes that look like whitespace themselves
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if m is None:
        raise FormatError("not a binary P6 PPM", path=path)
    W, H, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError("only 8-bit PPM supported", path=path)
    data = blob[m.end():]
    if len(data) != W * H * 3:
        raise FormatError("truncated pixel data", path=path)
    return np.frombuffer(data, np.uint8).reshape(H, W, 3)


def write_flow_ppm(path, flow, max_speed: float | None = None) -> None:
    write_ppm(path, flow_to_rgb(flow, max_speed))


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        fh.write(format_report(report))


def format_report(report: dict) -> str:
    lines = []
    for k, v in report.items():
        if isinstance(v, float):
            v = repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def read_report(path) -> dict:
    out = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"expected key=value, got {line!r}", line=i, path=path)
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
