"""Batch command-line front end.

    resonet neuron-demo [--model M]
    resonet stft {encode,reconstruct,report} [--input WAV] [--spikes CSV]
    resonet flow [--input EVENTS] [--gt FLOW_CSV]
    resonet cochlea {run,sweep} [--input WAV]

Common flags: --config, --out, --seed, --precision, --threads. Each run writes its
resolved ``config.ini`` next to its outputs; rerunning with ``--config`` pointing at
that file reproduces every output byte for byte.

Exit codes: 0 success, 1 internal error, 2 usage or config error, 3 missing or
unreadable input, 4 malformed input file, 5 invalid parameter value, 6 numerical
divergence.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import cochlea, optflow, spectral
from .config import ConfigError, _path, dump_config, load_config, set_value
from .fixed import STATE_FORMAT, Diagnostics
from .neurons import HopfParams, LifParams, RfParams, UNARY_RESET, impulse_response
from .signal_io import (AudioBuffer, FormatError, gen_chirp, gen_drifting_grating, gen_tone,
                        read_events, read_flow_csv, read_spikes_csv, read_wav, write_csv,
                        write_flow_csv, write_flow_ppm, write_report, write_spikes_csv, write_wav)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_FORMAT = 4
EXIT_PARAM = 5
EXIT_NUMERIC = 6

log = logging.getLogger("resonet")


class InputError(OSError):
    pass


def _fmt(cfg):
    return STATE_FORMAT if cfg["run"]["precision"] == "fixed" else None


# --------------------------------------------------------------------------- neuron-demo


def cmd_neuron_demo(cfg, out: Path) -> None:
    c = cfg["neuron"]
    model = c["model"]
    fmt = _fmt(cfg)
    if model == "lif":
        params = LifParams(c["lif_decay_u"], c["lif_decay_v"], c["lif_threshold"])
    elif model == "rf":
        params = RfParams(c["rf_decay"], c["rf_omega_dt"], c["rf_threshold"])
    elif model == "rf_reset":
        params = RfParams(c["rf_decay"], c["rf_omega_dt"], c["rf_threshold"], output_mode=UNARY_RESET)
    else:
        params = HopfParams(c["hopf_omega0"], c["hopf_lam"], c["hopf_dt"])
    diag = Diagnostics()
    trace = impulse_response(model, params, c["steps"], fmt, c["impulse"], diag)
    cols = [k for k in trace if k not in ("t", "spike")]
    write_csv(out / "trace.csv", ["t", *cols, "spike"],
              zip(trace["t"].tolist(), *(trace[k].tolist() for k in cols), trace["spike"].tolist()))
    write_report(out / "report.txt", {"model": model, "steps": c["steps"], **diag.as_dict()})


# --------------------------------------------------------------------------- stft


def _stft_audio(cfg) -> AudioBuffer:
    c = cfg["stft"]
    if c["wav"]:
        audio = _read(read_wav, c["wav"])
        if audio.sample_rate != c["sample_rate"]:
            raise FormatError(f"{c['wav']}: sample rate {audio.sample_rate:g} Hz does not match the "
                              f"configured {c['sample_rate']:g} Hz (resampling is not supported)")
        return audio
    return gen_chirp(c["chirp_f0"], c["chirp_f1"], c["chirp_duration"], c["sample_rate"],
                     c["chirp_amplitude"])


def _bank(cfg) -> spectral.RfBankConfig:
    c = cfg["stft"]
    return spectral.RfBankConfig(c["n_neurons"], c["freq_lo"], c["freq_hi"], c["spacing"], c["decay"],
                                 c["threshold"], c["sample_rate"])


def cmd_stft(cfg, out: Path, action: str) -> None:
    c = cfg["stft"]
    audio = _stft_audio(cfg)
    bank = _bank(cfg)
    threads = cfg["run"]["threads"]
    precision = cfg["run"]["precision"]
    if action == "reconstruct":
        if not c["spikes"]:
            raise ConfigError("stft reconstruct needs a spike CSV (--spikes or [stft] spikes)")
        t, k, p = _read(read_spikes_csv, c["spikes"])
        T = len(audio.samples)
        bad = (t < 0) | (t >= T) | (k < 0) | (k >= bank.n_neurons) | ~np.isfinite(p)
        if bad.any():
            raise FormatError(f"{c['spikes']}: spike record {int(np.argmax(bad)) + 1} is outside the "
                              f"bank ({bank.n_neurons} neurons, {T} steps) or has no payload")
        spec = spectral.SpikingSpectrogram(t, k, p, bank, T)
        y = spectral.reconstruct(spec, audio.samples, c["kernel"], threads=threads)
        write_wav(out / "reconstruction.wav", AudioBuffer(np.clip(y, -1, 1), audio.sample_rate))
        write_report(out / "report.txt", {"n_spikes": len(spec),
                                          "reconstruction_correlation": spectral.pearson(audio.samples, y)})
        return
    spec = spectral.encode_stft(audio.samples, bank, precision, threads=threads)
    write_spikes_csv(out / "spikes.csv", spec.t, spec.neuron, spec.payload)
    report = {"n_spikes": len(spec), "n_dense_values": bank.n_neurons * spec.duration,
              "bandwidth_ratio": bank.n_neurons * spec.duration / len(spec) if len(spec) else math.inf,
              **{f"diag_{k}": v for k, v in spec.diag.as_dict().items()}}
    if action == "report":
        rep = spectral.compression_report(spec, audio.samples, bank, kernel=c["kernel"], threads=threads)
        report.update(rep)
        if len(spec):
            y = spectral.reconstruct(spec, audio.samples, c["kernel"], threads=threads)
            write_wav(out / "reconstruction.wav", AudioBuffer(np.clip(y, -1, 1), audio.sample_rate))
        for k in c["topk"]:
            base = spectral.topk_stft_baseline(audio.samples, int(k))
            report[f"topk_{int(k)}_correlation"] = base["correlation"]
            report["topk_dense_values"] = base["n_dense_values"]
        if c["sweep"]:
            rows = []
            for r in spectral.threshold_sweep(audio.samples, bank, c["sweep"], precision, threads,
                                              kernel=c["kernel"]):
                rows.append((r["threshold"], r["n_spikes"], r["bandwidth_ratio"],
                             r["reconstruction_correlation"]))
            write_csv(out / "sweep.csv", ["threshold", "n_spikes", "bandwidth_ratio", "correlation"], rows)
    write_report(out / "report.txt", report)


# --------------------------------------------------------------------------- flow


def cmd_flow(cfg, out: Path) -> None:
    c = cfg["flow"]
    if c["events"]:
        ev = _read(read_events, c["events"])
    else:
        ev = gen_drifting_grating(c["grating_size"], optflow.SPATIAL_FREQS[0], c["grating_theta"],
                                  c["grating_speed"], c["grating_duration"], c["grating_rate"],
                                  c["contrast_threshold"], seed=cfg["run"]["seed"])
    shape = ev.shape
    gt = None
    if c["gt"]:
        gt = _read(read_flow_csv, c["gt"])
        if gt.shape != shape:
            raise FormatError(f"{c['gt']}: ground truth is {gt.shape}, events are {shape}")
    elif ev.ground_truth is not None:
        gt = optflow.FlowField.constant(shape, ev.ground_truth)
    spec = optflow.FilterBankSpec(dt=c["dt"], gabor_sigma=c["gabor_sigma"], rf_decay=c["rf_decay"],
                                  readout=c["readout"], threshold=c["threshold"])
    n_bins = c["n_bins"] or None
    est, per_bin = optflow.run_flow(ev.columns(), spec, shape, n_bins, cfg["run"]["threads"], _fmt(cfg))
    report = {"events": len(ev), "bins": len(per_bin), "height": shape[0], "width": shape[1],
              "readout": spec.readout, **{f"diag_{k}": v for k, v in est.diag.as_dict().items()}}
    dense = optflow.dense_conv_ops(shape, spec.kernel_size, len(spec.spatial_channels)) * len(per_bin)
    report["dense_conv_ops"] = dense
    report["synop_ratio"] = dense / est.diag.synops if est.diag.synops else math.inf
    if per_bin:
        flow, mask, _ = per_bin[-1]
        write_flow_csv(out / "flow.csv", flow)
        write_flow_ppm(out / "flow.ppm", flow)
        m = c["eval_margin"]
        rows = []
        for i, (f, mk, n) in enumerate(per_bin):
            row = [i, n, ""]
            if gt is not None:
                mk = _crop(mk, m)
                if (mk & f.valid).any():
                    row[2] = optflow.aee_metrics(f, gt, mk, spec.dt)["AEE"]
            rows.append(row)
        write_csv(out / "per_bin.csv", ["bin", "n_events", "AEE"], rows)
        if gt is not None:
            mk = _crop(mask, m)
            if (mk & flow.valid).any():
                met = optflow.aee_metrics(flow, gt, mk, spec.dt)
                report.update({"AEE": met["AEE"], "outlier_pct": met["outlier_pct"],
                               "eval_pixels": met["n_pixels"],
                               "direction_error_deg": float(np.mean(optflow.direction_error_deg(flow, gt, mk)))})
            else:
                report["AEE"] = "nan"
                log.warning("no valid pixels with events in the last bin; metrics skipped")
    write_report(out / "report.txt", report)


def _crop(mask, margin):
    mask = mask.copy()
    if margin > 0:
        mask[:margin] = mask[-margin:] = False
        mask[:, :margin] = mask[:, -margin:] = False
    return mask


# --------------------------------------------------------------------------- cochlea


def _cascade(cfg) -> cochlea.CascadeConfig:
    c = cfg["cochlea"]
    return cochlea.CascadeConfig(c["f_hi"], c["f_lo"], c["sections_per_octave"], c["lam"], c["sample_rate"],
                                 c["oversample"])


def cmd_cochlea(cfg, out: Path, action: str) -> None:
    c = cfg["cochlea"]
    casc = _cascade(cfg)
    if action == "sweep":
        surf = cochlea.gain_sweep(casc, c["sweep_freqs"], c["sweep_amps"], c["sweep_duration"],
                                  threads=cfg["run"]["threads"])
        write_csv(out / "surface.csv", ["freq", *(f"a={a!r}" for a in surf.amplitudes.tolist())],
                  ([f, *row] for f, row in zip(surf.freqs.tolist(), surf.peak.tolist())))
        write_csv(out / "spread.csv", ["freq", "spread_db", *(f"best_section_a={a!r}" for a in surf.amplitudes.tolist())],
                  ([f, s, *b] for f, s, b in zip(surf.freqs.tolist(), surf.spread_db.tolist(),
                                                 surf.best_section.tolist())))
        write_report(out / "report.txt", {"n_sections": casc.n_sections,
                                          "max_spread_db": float(surf.spread_db.max()),
                                          "mean_spread_db": float(surf.spread_db.mean())})
        return
    if c["wav"]:
        audio = _read(read_wav, c["wav"])
        if audio.sample_rate != c["sample_rate"]:
            raise FormatError(f"{c['wav']}: sample rate {audio.sample_rate:g} Hz does not match the "
                              f"configured {c['sample_rate']:g} Hz (resampling is not supported)")
    else:
        audio = gen_tone(c["tone_freq"], c["tone_duration"], c["sample_rate"], c["tone_amplitude"])
    outs, diag = cochlea.cascade_run(casc, audio.samples, cfg["run"]["precision"])
    mag = np.abs(outs)
    write_csv(out / "sections.csv", ["t", *(f"s{k}" for k in range(casc.n_sections))],
              ([t, *col] for t, col in enumerate(mag.T.tolist())))
    report = {"n_sections": casc.n_sections, "samples": len(audio.samples),
              "peak_section": int(np.argmax(mag.max(axis=1))) if mag.size else -1}
    if c["encoder"]:
        lif = LifParams(c["lif_decay_u"], c["lif_decay_v"], c["lif_threshold"])
        events = cochlea.lif_spike_encoder(outs, lif, diag=diag)
        write_spikes_csv(out / "spikes.csv", [e.t for e in events], [e.neuron for e in events])
        report["n_spikes"] = len(events)
    report.update({f"diag_{k}": v for k, v in diag.as_dict().items()})
    write_report(out / "report.txt", report)


# --------------------------------------------------------------------------- plumbing


def _read(fn, path):
    try:
        return fn(path)
    except FileNotFoundError as exc:
        raise InputError(f"input not found: {path}") from exc
    except IsADirectoryError as exc:
        raise InputError(f"input is a directory: {path}") from exc
    except PermissionError as exc:
        raise InputError(f"input not readable: {path}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with overrides of the built-in defaults")
    common.add_argument("--out", help="output directory (default: runs/<command>-<timestamp>)")
    common.add_argument("--seed", type=int, help="seed for synthetic stimuli")
    common.add_argument("--precision", choices=("float", "fixed"))
    common.add_argument("--threads", type=int, help="worker threads; never changes results")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="resonet", description="Resonator neuron simulator and pipelines.")
    sub = p.add_subparsers(dest="command", required=True)
    nd = sub.add_parser("neuron-demo", parents=[common], help="impulse response of one neuron model")
    nd.add_argument("--model", choices=("lif", "rf", "rf_reset", "hopf"))
    st = sub.add_parser("stft", parents=[common], help="spiking STFT encode / reconstruct / report")
    st.add_argument("action", choices=("encode", "reconstruct", "report"))
    st.add_argument("--input", help="16-bit PCM mono WAV (default: synthetic chirp)")
    st.add_argument("--spikes", help="spike CSV to reconstruct from")
    fl = sub.add_parser("flow", parents=[common], help="event-based optical flow")
    fl.add_argument("--input", help="event file, CSV or binary (default: synthetic grating)")
    fl.add_argument("--gt", help="ground-truth flow CSV")
    co = sub.add_parser("cochlea", parents=[common], help="Hopf cochlea run or gain sweep")
    co.add_argument("action", choices=("run", "sweep"))
    co.add_argument("--input", help="16-bit PCM mono WAV (default: synthetic tone)")
    return p


def resolve(args) -> dict:
    cfg = load_config(args.config) if args.config else load_config()
    for key in ("seed", "precision", "threads"):
        val = getattr(args, key)
        if val is not None:
            set_value(cfg, "run", key, val)
    if cfg["run"]["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    if args.command == "neuron-demo" and args.model:
        set_value(cfg, "neuron", "model", args.model)
    if args.command == "stft":
        if args.input:
            set_value(cfg, "stft", "wav", _path(args.input))
        if args.spikes:
            set_value(cfg, "stft", "spikes", _path(args.spikes))
    if args.command == "flow":
        if args.input:
            set_value(cfg, "flow", "events", _path(args.input))
        if args.gt:
            set_value(cfg, "flow", "gt", _path(args.gt))
    if args.command == "cochlea" and args.input:
        set_value(cfg, "cochlea", "wav", _path(args.input))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        out = Path(args.out) if args.out else Path("runs") / f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
        log.info("writing to %s", out)
        if args.command == "neuron-demo":
            cmd_neuron_demo(cfg, out)
        elif args.command == "stft":
            cmd_stft(cfg, out, args.action)
        elif args.command == "flow":
            cmd_flow(cfg, out)
        else:
            cmd_cochlea(cfg, out, args.action)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except FormatError as exc:
        log.error("format: %s", exc)
        return EXIT_FORMAT
    except (cochlea.DivergenceError, FloatingPointError) as exc:
        log.error("divergence: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("parameter: %s", exc)
        return EXIT_PARAM
    except OSError as exc:
        log.error("io: %s", exc)
        return EXIT_INPUT
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    log.info("done")
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
