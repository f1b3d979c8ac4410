"""INI run configuration with full defaulting.

Every key has a default; a config file only lists overrides. :func:`load_config`
validates section and key names and parses values, and :func:`dump_config` writes the
fully resolved config back out so a run can be repeated from it exactly.
"""
from __future__ import annotations

import configparser
import io
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(p) for p in s.replace(",", " ").split())


def _choice(*options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    parse.__name__ = "choice"
    return parse


def _path(s: str) -> str:
    s = s.strip()
    return str(Path(s).expanduser().resolve()) if s else ""


SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 0),
        "precision": (_choice("float", "fixed"), "float"),
        "threads": (int, 1),
    },
    "neuron": {
        "model": (_choice("lif", "rf", "rf_reset", "hopf"), "rf"),
        "steps": (int, 200),
        "impulse": (float, 1.0),
        "lif_decay_u": (float, 0.9),
        "lif_decay_v": (float, 0.95),
        "lif_threshold": (float, 1.5),
        "rf_decay": (float, 0.98),
        "rf_omega_dt": (float, 0.2),
        "rf_threshold": (float, 0.5),
        "hopf_omega0": (float, 6.283185307179586),
        "hopf_lam": (float, 0.04),
        "hopf_dt": (float, 0.01),
    },
    "stft": {
        "wav": (_path, ""),
        "spikes": (_path, ""),
        "chirp_f0": (float, 100.0),
        "chirp_f1": (float, 4000.0),
        "chirp_duration": (float, 1.0),
        "chirp_amplitude": (float, 0.5),
        "sample_rate": (float, 16000.0),
        "n_neurons": (int, 100),
        "freq_lo": (float, 60.0),
        "freq_hi": (float, 4200.0),
        "spacing": (_choice("linear", "log"), "log"),
        "decay": (float, 0.985),
        "threshold": (float, 2.0),
        "kernel": (_choice("matched", "causal"), "matched"),
        "topk": (_floats, (5000.0, 500000.0)),
        "sweep": (_floats, ()),
    },
    "flow": {
        "events": (_path, ""),
        "gt": (_path, ""),
        "grating_size": (int, 96),
        "grating_speed": (float, 256.0),
        "grating_theta": (float, 0.0),
        "grating_duration": (float, 3.2),
        "grating_rate": (float, 1000.0),
        "contrast_threshold": (float, 0.15),
        "n_bins": (int, 0),
        "dt": (float, 0.032),
        "gabor_sigma": (float, 16.0),
        "rf_decay": (float, 0.9),
        "readout": (_choice("spikes", "dense"), "spikes"),
        "threshold": (float, 0.0),
        "eval_margin": (int, 32),
    },
    "cochlea": {
        "wav": (_path, ""),
        "tone_freq": (float, 1000.0),
        "tone_amplitude": (float, 0.01),
        "tone_duration": (float, 0.1),
        "sample_rate": (float, 16000.0),
        "f_hi": (float, 4000.0),
        "f_lo": (float, 250.0),
        "sections_per_octave": (int, 6),
        "lam": (float, -0.05),
        "oversample": (int, 0),
        "sweep_freqs": (_floats, tuple(1000.0 * 2.0 ** (-k / 6) for k in range(12))),
        "sweep_amps": (_floats, (0.001, 0.01, 0.1)),
        "sweep_duration": (float, 0.08),
        "encoder": (_bool, True),
        "lif_decay_u": (float, 0.0),
        "lif_decay_v": (float, 0.9),
        "lif_threshold": (float, 1.0),
    },
}


def defaults() -> dict[str, dict]:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def load_config(path=None, text: str | None = None) -> dict[str, dict]:
    """Defaults overlaid with the file at ``path`` (or ``text``)."""
    cfg = defaults()
    if path is None and text is None:
        return cfg
    cp = configparser.ConfigParser(interpolation=None)
    try:
        if text is not None:
            cp.read_string(text)
        else:
            with open(path) as fh:
                cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            parse = SCHEMA[sec][key][0]
            try:
                cfg[sec][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from exc
    return cfg


def _format(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


# settings that never change results and so are left out of the resolved config
NOT_SERIALIZED = {("run", "threads")}


def dump_config(cfg: dict[str, dict]) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    for sec, keys in cfg.items():
        cp[sec] = {k: _format(v) for k, v in keys.items() if (sec, k) not in NOT_SERIALIZED}
    buf = io.StringIO()
    buf.write("# resolved resonet configuration; --threads is not recorded\n")
    cp.write(buf)
    return buf.getvalue()


def set_value(cfg: dict, section: str, key: str, value) -> None:
    if key not in SCHEMA.get(section, {}):
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    cfg[section][key] = value
