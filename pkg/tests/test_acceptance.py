"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import json
import time

import numpy as np
from hypothesis import HealthCheck, given, settings

from conftest import ACCEPTANCE_LINES
from fabsense.cli import main
from fabsense.crossbar import DriveConfig, DriveMode, ResistanceGrid, solve_readout
from fabsense.experiments import (
    LatencyTrialConfig,
    crosstalk_experiment,
    jitter_decompose,
    quantization_uncertainty,
    run_latency_trials,
)
from fabsense.frame import Frame
from fabsense.grasp import run_grasp
from fabsense.pipeline import HampelFilter, hampel_update
from fabsense.protocol import Message, StreamDecoder, message_size
from fabsense.scan import BusConfig, frame_rate, total_scan_time
from test_crossbar import oracle_2x2
from test_protocol import _corrupt_stream, messages


def report(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def hand_scan_time(n):
    t_spi = 16 / 14e6
    return 1024 * (n * (t_spi + 1.08e-6) + 1e-6)


def sig4(x):
    return float(f"{x:.4g}")


def test_01_timing_model():
    got = {n: total_scan_time(BusConfig(n_peripherals=n)) * 1e3 for n in (1, 3, 8)}
    hand = {n: hand_scan_time(n) * 1e3 for n in (1, 3, 8)}
    stated = {8: 19.23, 1: 3.30, 3: 7.85}
    fps8 = frame_rate(BusConfig(n_peripherals=8))
    ok = (
        all(sig4(got[n]) == sig4(hand[n]) for n in got)
        # the stated values, each compared at the precision it is given in
        and all(round(got[n], 2) == stated[n] for n in got)
        and round(fps8, 1) == 52.0
        and abs(fps8 - 53) / 53 <= 0.05
    )
    detail = ", ".join(f"N={n}: {got[n]:#.4g} ms" for n in (8, 1, 3)) + f"; {fps8:.1f} FPS ({(fps8 - 53) / 53:+.1%} vs 53)"
    report(1, "timing model", ok, detail)


def test_02_frame_rate_curve():
    fps = [frame_rate(BusConfig(n_peripherals=n)) for n in range(1, 9)]
    monotone = all(b < a for a, b in zip(fps, fps[1:]))
    products = [f * (n * (16 / 14e6 + 1.08e-6) + 1e-6) * 1024 for n, f in zip(range(1, 9), fps)]
    worst = max(abs(p - 1) for p in products)
    report(2, "frame-rate curve", monotone and worst < 1e-12, f"monotone={monotone}, max |FPS x period - 1| = {worst:.1e}")


def test_03_crosstalk():
    mit = crosstalk_experiment()
    naive = crosstalk_experiment(drive=DriveConfig(mode=DriveMode.NAIVE))
    ideal = crosstalk_experiment(drive=DriveConfig.ideal())
    ok = mit.crosstalk_pct <= 3.3 and naive.crosstalk_pct >= 10 * mit.crosstalk_pct and ideal.crosstalk_pct < 0.01
    report(
        3,
        "crosstalk",
        ok,
        f"mitigated {mit.crosstalk_pct:.4f}%, naive {naive.crosstalk_pct:.2f}%, ideal {ideal.crosstalk_pct:.4f}%",
    )


def test_04_solver_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        r = 10 ** rng.uniform(3, 8, (2, 2))
        drive = DriveConfig(
            r_switch_on=rng.uniform(0.01, 5),
            r_mux16=rng.uniform(0.01, 5),
            r_mux4=rng.uniform(0.01, 2),
            r_f=rng.uniform(100, 800),
        )
        got = solve_readout(ResistanceGrid(r), drive, 0, 0)
        want = oracle_2x2(r, drive)
        worst = max(worst, abs(got - want) / abs(want))
    report(4, "2x2 solver oracle", worst < 1e-9, f"max relative error {worst:.2e} over 100 draws")


def test_05_codec():
    checked = []

    @settings(max_examples=10_000, deadline=None, suppress_health_check=list(HealthCheck), database=None)
    @given(messages())
    def roundtrip(m):
        data = m.to_bytes()
        assert len(data) == 2 + 2 + m.n_sensors + 2048 * m.n_sensors == message_size(m.n_sensors)
        dec = StreamDecoder()
        assert dec.feed(data) == [m]
        checked.append(1)

    roundtrip()

    rng = np.random.default_rng(7)
    expected = recovered = 0
    for _ in range(300):
        msgs = [
            Message(
                tuple(rng.choice(255, size=(n := int(rng.integers(1, 9))), replace=False).tolist()),
                rng.integers(0, 4096, (n, 1024)),
            )
            for _ in range(int(rng.integers(1, 6)))
        ]
        data = _corrupt_stream(rng, msgs)
        got = StreamDecoder().feed(data)
        expected += len(msgs)
        recovered += sum(1 for a, b in zip(got, msgs) if a == b) if len(got) == len(msgs) else 0
    ok = len(checked) >= 10_000 and recovered == expected
    report(5, "codec", ok, f"{len(checked)} roundtrips, fuzz recovered {recovered}/{expected} complete messages")


def test_06_hampel():
    example = hampel_update([4, 1, 3, 2, 100])
    rng = np.random.default_rng(6)
    baseline, frames, n = 1000, 500, 1024
    filt = HampelFilter([0])
    spikes = caught = false = 0
    for _ in range(frames):
        hit = rng.random(n) < 0.01
        out, flag = filt.filter_frame(Frame(0, np.where(hit, baseline + 2000, baseline)))
        spikes += hit.sum()
        caught += (flag & hit & (out.codes == baseline)).sum()
        false += (flag & ~hit).sum()
    suppression = caught / spikes
    ok = example == (3.0, True) and suppression >= 0.99 and false == 0
    report(6, "Hampel", ok, f"example {example}; suppression {suppression:.2%} of {spikes} spikes, {false} false replacements")


def test_07_throughput():
    rng = np.random.default_rng(0)
    filt = HampelFilter(range(8))
    pool = [[Frame(s, rng.integers(0, 4096, 1024)) for s in range(8)] for _ in range(16)]
    count = 0
    start = time.perf_counter()
    while (elapsed := time.perf_counter() - start) < 10.0:
        for f in pool[count % len(pool)]:
            filt.filter_frame(f)
        count += 1
    rate = count / elapsed
    report(7, "throughput", rate >= 50, f"{rate:.0f} frames/s of 8 x 1024 taxels over {elapsed:.1f} s, single thread")


def test_08_latency():
    res = run_latency_trials(LatencyTrialConfig(trials=1000))
    sq = quantization_uncertainty([120, 300])
    jt = jitter_decompose(4.64e-3, 4.5e-3)
    ok = abs(res.mean - 27.3e-3) <= 4.2e-3 and abs(sq - 4.5e-3) <= 0.05e-3 and abs(jt - 1.13e-3) <= 0.01e-3
    report(
        8,
        "latency",
        ok,
        f"mean {res.mean * 1e3:.2f} ms over 1000 trials, sigma_q {sq * 1e3:.3f} ms, jitter {jt * 1e3:.3f} ms",
    )


def test_09_grasp_ablation():
    start = time.perf_counter()
    open_ = run_grasp(feedback=False)
    closed = run_grasp(feedback=True)
    runtime = time.perf_counter() - start
    o, c = open_.activation_by_name(), closed.activation_by_name()
    distal_down = c["L2"] < o["L2"] and c["R2"] < o["R2"]
    mid_up = c["L1"] > o["L1"] and c["R1"] > o["R1"]
    ok = (
        open_.damaged
        and not closed.damaged
        and closed.peak_deformation < open_.peak_deformation
        and distal_down
        and mid_up
        and runtime < 30
    )
    report(
        9,
        "grasp ablation",
        ok,
        f"open peak {open_.peak_deformation * 100:.2f} cm damaged={open_.damaged}; "
        f"closed peak {closed.peak_deformation * 100:.2f} cm damaged={closed.damaged}; "
        f"L2 {o['L2']:.1f}->{c['L2']:.1f}, L1 {o['L1']:.1f}->{c['L1']:.1f}; {runtime:.1f} s",
    )


COMMANDS = [
    ["framerate"],
    ["crosstalk"],
    ["gain"],
    ["latency", "--trials", "200"],
    ["scan", "--frames", "5", "--spike-rate", "0.01", "--capture"],
    ["grasp", "--set", "grasp.duration=0.5", "--set", "grasp.ramp_time=0.3"],
]


def test_10_reproducibility(tmp_path):
    mismatched = []
    n_files = 0
    for args in COMMANDS:
        outs = [tmp_path / f"{args[0]}_{k}" for k in (0, 1)]
        for out in outs:
            assert main(args + ["--seed", "11", "--out", str(out)]) == 0
        for path in sorted(outs[0].iterdir()):
            a, b = path.read_bytes(), (outs[1] / path.name).read_bytes()
            if path.name == "manifest.json":
                ma, mb = json.loads(a), json.loads(b)
                ma["config"].pop("output_dir"), mb["config"].pop("output_dir")
                same = ma == mb
            else:
                same = a == b
            n_files += 1
            if not same:
                mismatched.append(f"{args[0]}/{path.name}")
    report(10, "reproducibility", not mismatched, f"{n_files} output files compared, mismatches: {mismatched or 'none'}")
