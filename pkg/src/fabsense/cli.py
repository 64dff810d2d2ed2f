"""Command-line entry point: ``fabsense <command> [flags]``.

Every command writes its CSV outputs and a ``manifest.json`` (config echo,
seed, output list) into the output directory. Exit status is 0 on
success, 1 on a configuration or I/O error, and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .crossbar import DriveMode, PressureField, ResistanceGrid
from .experiments import (
    ImpactProfile,
    LatencyTrialConfig,
    crosstalk_experiment,
    cylinder_load,
    framerate_sweep,
    gain_sweep,
    run_latency_trials,
    write_crosstalk,
    write_framerate,
    write_gain,
    write_latency,
    write_latency_summary,
)
from .frame import MAX_CODE, Frame
from .grasp import (
    BoxModel,
    GraspTrajectory,
    SensingChain,
    run_grasp,
    write_grasp_summary,
    write_grasp_timeseries,
)
from .pipeline import HampelFilter, PipelineWriter
from .protocol import StreamDecoder, encode_message
from .scan import acquire_frames, frame_period, total_scan_time

class _Run:
    def __init__(self, command: str, cfg: RunConfig, out_dir: Path):
        self.command = command
        self.cfg = cfg
        self.out_dir = out_dir
        self.outputs: List[str] = []
        self.extra = {}
        out_dir.mkdir(parents=True, exist_ok=True)

    def open(self, name: str, mode: str = "w"):
        self.outputs.append(name)
        if "b" in mode:
            return open(self.out_dir / name, mode)
        return open(self.out_dir / name, mode, newline="")

    def finish(self):
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "outputs": self.outputs,
        }
        manifest.update(self.extra)
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _parse_floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_range(text: str) -> List[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _stimulus(cfg: RunConfig) -> PressureField:
    rows, cols = cfg.array.rows, cfg.array.cols
    pattern = cfg.scan.pattern
    if pattern == "none":
        return PressureField.zeros(rows, cols)
    if pattern == "crosstalk":
        p = np.zeros((rows, cols))
        for t in cfg.crosstalk.pressed:
            p[t] = cfg.crosstalk.pressure
        return PressureField(p)
    g = cfg.gain
    return cylinder_load(
        g.mass_kg, g.diameter_m, g.taxel_pitch_m, ((rows - 1) / 2, (cols - 1) / 2), (rows, cols)
    )


def _simulate_scans(cfg: RunConfig) -> List[List[Frame]]:
    """Frames per scan for every peripheral on the bus, with optional spikes."""
    if (cfg.array.rows, cfg.array.cols) != (16, 64):
        raise ConfigError("array: scan and encode need the full 16 x 64 array (1024 taxels per frame)")
    grid = ResistanceGrid.from_pressure(_stimulus(cfg), cfg.law)
    bus = cfg.bus
    scans = acquire_frames([grid] * bus.n_peripherals, cfg.drive, cfg.adc, bus, cfg.scan.frames)
    rng = np.random.default_rng(cfg.seed)
    out = []
    for frames, _ in scans:
        noisy = []
        for f in frames:
            codes = f.codes.copy()
            if cfg.scan.spike_rate > 0:
                hit = rng.random(codes.size) < cfg.scan.spike_rate
                codes[hit] = np.minimum(codes[hit] + cfg.scan.spike_amplitude, MAX_CODE)
            noisy.append(Frame(f.sensor_id, codes, f.t_acquired))
        out.append(noisy)
    return out


def cmd_scan(run: _Run, args):
    cfg = run.cfg
    scans = _simulate_scans(cfg)
    ids = list(range(cfg.bus.n_peripherals))
    with run.open("frames.csv") as ffh, run.open("summary.csv") as sfh:
        writer = PipelineWriter(ffh, sfh, HampelFilter(ids, cfg.hampel))
        for frames in scans:
            writer.process(frames)
    run.extra["scan_time_s"] = total_scan_time(cfg.bus)
    if args.capture:
        with run.open("capture.bin", "wb") as fh:
            for frames in scans:
                fh.write(encode_message(frames))


def cmd_encode(run: _Run, args):
    scans = _simulate_scans(run.cfg)
    name = args.output or "capture.bin"
    with run.open(name, "wb") as fh:
        for frames in scans:
            fh.write(encode_message(frames))
    run.extra["messages"] = len(scans)


class _PerSensorFilter:
    """Hampel state created on first sight of each sensor id."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.filters = {}

    def filter_frame(self, frame: Frame):
        filt = self.filters.get(frame.sensor_id)
        if filt is None:
            filt = self.filters[frame.sensor_id] = HampelFilter([frame.sensor_id], self.cfg)
        return filt.filter_frame(frame)


def cmd_decode(run: _Run, args):
    cfg = run.cfg
    decoder = StreamDecoder()
    with open(args.capture, "rb") as src, run.open("frames.csv") as ffh, run.open("summary.csv") as sfh:
        writer = PipelineWriter(ffh, sfh, _PerSensorFilter(cfg.hampel))
        while chunk := src.read(1 << 16):
            for msg in decoder.feed(chunk):
                # reconstruct acquisition times from the bus timing model
                bus = replace(cfg.bus, n_peripherals=msg.n_sensors)
                writer.process(msg.frames((writer.n_frames + 1) * frame_period(bus)))
    diag = decoder.diagnostics
    report = {
        "messages_ok": diag.messages_ok,
        "bytes_skipped": diag.bytes_skipped,
        "malformed": diag.malformed,
        "bytes_pending": decoder.pending,
    }
    run.extra["diagnostics"] = report
    with run.open("diagnostics.json") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"decoded {diag.messages_ok} messages, skipped {diag.bytes_skipped} bytes, "
        f"{diag.malformed} malformed candidates, {decoder.pending} bytes pending",
        file=sys.stderr,
    )


def cmd_framerate(run: _Run, args):
    cfg = run.cfg
    rows = framerate_sweep(cfg.framerate.clocks, cfg.framerate.n, cfg.bus)
    with run.open("framerate.csv") as fh:
        write_framerate(fh, rows)


def cmd_crosstalk(run: _Run, args):
    cfg = run.cfg
    ct = cfg.crosstalk
    modes = ["mitigated", "naive", "ideal"] if args.mode == "all" else [args.mode]
    reports = []
    for mode in modes:
        if mode == "ideal":
            drive = replace(cfg.drive, mode=DriveMode.MITIGATED, r_switch_on=0.0, r_mux16=0.0, r_mux4=0.0, mux_offsets=None)
        else:
            drive = replace(cfg.drive, mode=DriveMode(mode))
        rep = crosstalk_experiment(
            cfg.law, drive, cfg.adc, ct.pressed, ct.ghost, ct.pressure, (cfg.array.rows, cfg.array.cols)
        )
        reports.append(replace(rep, mode=mode))
    with run.open("crosstalk.csv") as fh:
        write_crosstalk(fh, reports)
    run.extra["pressed"] = [list(t) for t in ct.pressed]
    run.extra["ghost"] = list(ct.ghost)


def cmd_gain(run: _Run, args):
    cfg = run.cfg
    g = cfg.gain
    rows, cols = cfg.array.rows, cfg.array.cols
    load = cylinder_load(g.mass_kg, g.diameter_m, g.taxel_pitch_m, ((rows - 1) / 2, (cols - 1) / 2), (rows, cols))
    table = gain_sweep(cfg.law, cfg.adc, load, g.rf_values, cfg.drive)
    with run.open("gain.csv") as fh:
        write_gain(fh, table)


def cmd_latency(run: _Run, args):
    cfg = run.cfg
    lc = cfg.latency
    trial_cfg = LatencyTrialConfig(
        ft_rate=lc.ft_rate,
        tactile_rate=lc.tactile_rate,
        true_latency=lc.true_latency,
        trials=lc.trials,
        rng_seed=cfg.seed,
        impact_profile=ImpactProfile(lc.rise, lc.fall, lc.amplitude),
        ft_gain=lc.ft_gain,
        true_jitter=lc.true_jitter,
        shared_clock=lc.shared_clock,
        record_length=lc.record_length,
    )
    result = run_latency_trials(trial_cfg)
    with run.open("latency.csv") as fh:
        write_latency(fh, result)
    with run.open("latency_summary.csv") as fh:
        write_latency_summary(fh, result, trial_cfg)


def cmd_grasp(run: _Run, args):
    cfg = run.cfg
    gc = cfg.grasp
    chain = SensingChain(cfg.law, cfg.drive, cfg.adc, cfg.hampel, spi_clock_hz=cfg.bus.spi_clock_hz)
    dt = total_scan_time(chain.bus())
    traj = GraspTrajectory.ramp_and_hold(dt, gc.duration, gc.ramp_time, gc.p_peak, gc.p_antagonist)
    box = BoxModel(stiffness=gc.box_stiffness, crush_threshold=gc.crush_threshold)
    runs = {"on": [True], "off": [False], "both": [False, True]}[gc.feedback]
    results = {}
    for fb in runs:
        label = "closed" if fb else "open"
        rep = run_grasp(traj, box=box, chain=chain, k_p=gc.k_p, feedback=fb)
        with run.open(f"grasp_timeseries_{label}.csv") as fh:
            write_grasp_timeseries(fh, rep)
        with run.open(f"grasp_summary_{label}.csv") as fh:
            write_grasp_summary(fh, rep)
        results[label] = {"peak_deformation": rep.peak_deformation, "damaged": rep.damaged}
    run.extra["results"] = results


HANDLERS = {
    "scan": cmd_scan,
    "framerate": cmd_framerate,
    "crosstalk": cmd_crosstalk,
    "gain": cmd_gain,
    "latency": cmd_latency,
    "grasp": cmd_grasp,
    "decode": cmd_decode,
    "encode": cmd_encode,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    common.add_argument(
        "--set", action="append", default=[], metavar="BLOCK.KEY=VALUE", help="override one config key"
    )

    parser = argparse.ArgumentParser(prog="fabsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fabsense {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("scan", parents=[common], help="simulate bus scans and filter them")
    p.add_argument("--frames", type=int)
    p.add_argument("--pattern", choices=["none", "crosstalk", "cylinder"])
    p.add_argument("--spike-rate", type=float)
    p.add_argument("--capture", action="store_true", help="also write the raw wire capture")

    p = sub.add_parser("framerate", parents=[common], help="model frame rate sweep")
    p.add_argument("--clocks", type=_parse_floats, help="comma-separated SPI clocks in Hz")
    p.add_argument("--n", type=_parse_range, help="peripheral counts, e.g. 1..8 or 1,2,4")

    p = sub.add_parser("crosstalk", parents=[common], help="phantom-force crosstalk test")
    p.add_argument("--mode", choices=["mitigated", "naive", "ideal", "all"], default="all")

    p = sub.add_parser("gain", parents=[common], help="feedback-resistor gain sweep")
    p.add_argument("--rf", type=_parse_floats, help="comma-separated feedback resistances")

    p = sub.add_parser("latency", parents=[common], help="latency and jitter trials")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("grasp", parents=[common], help="open- vs closed-loop grasp ablation")
    p.add_argument("--k-p", type=float)
    p.add_argument("--feedback", choices=["on", "off", "both"])

    p = sub.add_parser("decode", parents=[common], help="decode a raw capture file to CSV")
    p.add_argument("capture", type=Path)

    p = sub.add_parser("encode", parents=[common], help="write simulated scans as a raw capture file")
    p.add_argument("--frames", type=int)
    p.add_argument("--pattern", choices=["none", "crosstalk", "cylinder"])
    p.add_argument("--spike-rate", type=float)
    p.add_argument("--output", help="capture file name inside the output directory")
    return parser


def _flag_overrides(args) -> List[str]:
    pairs = []

    def add(key, value):
        if value is not None:
            pairs.append(f"{key}={json.dumps(value)}")

    add("seed", args.seed)
    if args.out is not None:
        add("output_dir", str(args.out))
    cmd = args.command
    if cmd in ("scan", "encode"):
        add("scan.frames", args.frames)
        add("scan.pattern", args.pattern)
        add("scan.spike_rate", args.spike_rate)
    elif cmd == "framerate":
        add("framerate.clocks", args.clocks)
        add("framerate.n", args.n)
    elif cmd == "gain":
        add("gain.rf_values", args.rf)
    elif cmd == "latency":
        add("latency.trials", args.trials)
    elif cmd == "grasp":
        add("grasp.k_p", args.k_p)
        add("grasp.feedback", args.feedback)
    return pairs


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, list(args.set) + _flag_overrides(args))
        run = _Run(args.command, cfg, Path(cfg.output_dir))
        HANDLERS[args.command](run, args)
        run.finish()
    except ConfigError as exc:
        print(f"fabsense: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fabsense: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
