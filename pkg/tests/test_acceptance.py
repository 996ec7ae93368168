"""Acceptance criteria, each at its stated tolerance and runtime limit.

Every test prints one PASS/FAIL line; the lines are also collected into the
terminal summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hdrelay.capacity_solver import PerStateCapacities, oracle_check, solve_capacity, solve_from_capacities
from hdrelay.channel_model import bec, bsc, erasure_channel, make_spec, useless_channel
from hdrelay.cli_io import main
from hdrelay.fading_awgn import DiscreteFading, RayleighFading, quantize, solve_rho
from hdrelay.mutual_information import blahut_arimoto
from hdrelay.protocol_simulator import SimConfig, baseline_alternating, simulate

Q = 16  # erasure alphabet; capacity (1 - e) log2(16) covers (0, 4]


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def rel_err(x, y):
    return abs(x - y) / abs(y)


def erasure_with_capacity(c):
    return erasure_channel(1.0 - c / math.log2(Q), Q)


def test_fixed_channel():
    rng = np.random.default_rng(1)
    pairs = 4.0 - 4.0 * rng.random((50, 2))  # uniform on (0, 4]
    worst = 0.0
    t0 = time.perf_counter()
    for A, B in pairs:
        rep = solve_capacity(make_spec([[1.0]], [erasure_with_capacity(A)], [erasure_with_capacity(B)]))
        worst = max(worst,
                    rel_err(rep.rho_opt, B / A),
                    rel_err(rep.coin_prob_opt, A / (A + B)),
                    rel_err(rep.capacity_bits, A * B / (A + B)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1.0
    record(1, "fixed channel rho, P_C, C", ok, f"50 pairs, max rel err {worst:.1e} <= 1e-9, {elapsed:.2f} s < 1 s")


def onoff_case(A, B, p):
    """Case by the two defining inequalities, and its closed-form capacity."""
    p_s1_on = p[1].sum()
    p_s2_on = p[:, 1].sum()
    if p_s2_on * B < p[1, 0] * A:
        return 1, p_s2_on * B
    if p_s1_on * A < p[0, 1] * B:
        return 2, p_s1_on * A
    return 3, A * B / (A + B) * (1.0 - p[0, 0])


def test_onoff_channel():
    rng = np.random.default_rng(2)
    off = useless_channel(Q, Q + 1)
    counts = {1: 0, 2: 0, 3: 0}
    worst = 0.0
    t0 = time.perf_counter()
    for t in range(200):
        # cycle through the three cases so each is exercised
        want = t % 3 + 1
        for _ in range(1000):
            A, B = 4.0 - 4.0 * rng.random(2)
            joint = rng.dirichlet(np.full(4, 0.7)).reshape(2, 2)
            case, cap = onoff_case(A, B, joint)
            if case == want:
                break
        counts[case] += 1
        spec = make_spec(joint, [off, erasure_with_capacity(A)], [off, erasure_with_capacity(B)])
        worst = max(worst, rel_err(solve_capacity(spec).capacity_bits, cap))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 5.0 and min(counts.values()) > 0
    record(2, "ON-OFF closed forms", ok,
           f"200 instances, cases {counts}, max rel err {worst:.1e} <= 1e-9, {elapsed:.2f} s < 5 s")


def test_oracle_equivalence():
    t0 = time.perf_counter()
    res = oracle_check(seed=7, trials=200, grid_steps=2001, atol=2e-3)
    elapsed = time.perf_counter() - t0
    ok = res["passed"] == 200 and elapsed < 120.0
    record(3, "solver vs brute-force oracle", ok,
           f"{res['passed']}/200 within 2e-3, max abs err {res['max_abs_error']:.1e}, {elapsed:.1f} s < 120 s")


def h2(p):
    return 0.0 if p in (0.0, 1.0) else -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_blahut_arimoto():
    t0 = time.perf_counter()
    errs = [abs(blahut_arimoto(bsc(p)).capacity_bits - (1 - h2(p))) for p in (0.0, 0.05, 0.11, 0.25, 0.5)]
    errs += [abs(blahut_arimoto(bec(e)).capacity_bits - (1 - e)) for e in (0.0, 0.3, 0.7, 1.0)]
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and elapsed < 1.0
    record(4, "Blahut-Arimoto BSC/BEC", ok, f"max abs err {max(errs):.1e} <= 1e-8, {elapsed:.2f} s < 1 s")


def test_fading_awgn():
    t0 = time.perf_counter()
    sym = solve_rho(RayleighFading(10.0, 10.0))
    rho_err = abs(sym.rho_opt - 1.0)
    imbalance = abs(sym.c1_bits - sym.c2_bits) / max(sym.c1_bits, sym.c2_bits)
    A = B = math.log2(11.0)
    point = solve_rho(DiscreteFading.point_mass(10.0, 10.0))
    point_err = rel_err(point.capacity_bits, A * B / (A + B))
    quant = solve_from_capacities(*quantize(RayleighFading(10.0, 10.0), 200)).capacity_bits
    quant_err = rel_err(quant, sym.capacity_bits)
    elapsed = time.perf_counter() - t0
    ok = rho_err <= 1e-3 and imbalance <= 1e-6 and point_err <= 1e-6 and quant_err <= 1e-2 and elapsed < 60.0
    record(5, "fading AWGN", ok,
           f"|rho-1| {rho_err:.1e} <= 1e-3, imbalance {imbalance:.1e} <= 1e-6, point mass {point_err:.1e} <= 1e-6, "
           f"200x200 gap {quant_err:.1e} <= 1e-2, {elapsed:.2f} s < 60 s")


@pytest.mark.parametrize(
    "name, caps, joint",
    [
        ("fixed A=2 B=1", PerStateCapacities([2.0], [1.0]), np.array([[1.0]])),
        ("ON-OFF case 3", PerStateCapacities([0.0, 1.0], [0.0, 1.0]), np.full((2, 2), 0.25)),
    ],
)
def test_achievability_simulation(name, caps, joint):
    t0 = time.perf_counter()
    rep = solve_from_capacities(caps, joint)
    C = rep.capacity_bits
    eps = 0.01 * C
    long = simulate(SimConfig(caps, joint, rep.policy, 1_000_000, eps, seed=2024))
    short = simulate(SimConfig(caps, joint, rep.policy, 10_000, eps, seed=2024))
    base = baseline_alternating(caps, joint, 1_000_000, seed=2024, epsilon=eps)
    elapsed = time.perf_counter() - t0
    frac = long.throughput_bits / C
    d_long, d_short = long.buffer_limited_fraction, short.buffer_limited_fraction
    ok = (frac >= 0.97 and long.min_queue_bits >= 0 and short.min_queue_bits >= 0
          and long.conservation_holds and short.conservation_holds
          and d_long < 0.5 * d_short and base.throughput_bits <= long.throughput_bits and elapsed < 30.0)
    record(6, f"achievability simulation, {name}", ok,
           f"throughput {frac:.4f} C >= 0.97 C, conservation exact, queue >= 0, "
           f"Delta/N {d_short:.1e} -> {d_long:.1e}, baseline {base.throughput_bits / C:.3f} C, {elapsed:.1f} s < 30 s")


def test_determinism(tmp_path, capsys):
    from pathlib import Path

    configs = Path(__file__).resolve().parents[1] / "configs"
    commands = {
        "capacity": ["capacity", "--config", str(configs / "bsc_bec.json")],
        "simulate": ["simulate", "--config", str(configs / "onoff_case3.json"), "--seed", "5",
                     "--trace", "TRACE"],
        "fading": ["fading", "--config", str(configs / "rayleigh.json")],
        "oracle-check": ["oracle-check", "seed=7", "trials=20"],
        "example": ["example"],
    }
    identical = {}
    for name, argv in commands.items():
        blobs = []
        for i in range(2):
            out = tmp_path / f"{name}-{i}.json"
            trace = tmp_path / f"{name}-{i}.csv"
            args = [str(trace) if a == "TRACE" else a for a in argv]
            code = main(args + ["--out", str(out)])
            blob = out.read_bytes() if code == 0 else b""
            if trace.exists():
                blob += trace.read_bytes()
            blobs.append(blob)
        identical[name] = bool(blobs[0]) and blobs[0] == blobs[1]
        json.loads(blobs[0].split(b"\nblock,")[0])  # the report part is valid JSON
    capsys.readouterr()
    ok = all(identical.values())
    record(7, "determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in identical.items()))
