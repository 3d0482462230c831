"""End-to-end acceptance suite.

Each test records a one-line verdict in ``ACCEPTANCE_RESULTS``; the terminal
summary hook in conftest prints them after the run.  Suites 1 to 5 cache the
simulator outputs they produce so that the replay check in suite 6 covers
exactly those traces.
"""
import filecmp
import functools
import json
import math
import time
from pathlib import Path

import numpy as np

from moesched import (CostVector, Diagnosis, ExpertWorkload, GatingModel, HardwareProfile,
                      compute_costs, diagnose, enumerate_feasibility,
                      exact_order, expert_param_bytes, greedy_order, route_tokens,
                      schedule_experts, simulate)
from moesched.cli import main
from moesched.config import geometry_from_preset
from moesched.costs import resident_capacity
from moesched.gating import gaussian_tokens
from moesched.verification import gating_balance, replay_check

from conftest import ACCEPTANCE_RESULTS, random_instance

REL = 1e-9


def record(number, title, passed, detail):
    ACCEPTANCE_RESULTS.append((number, title, bool(passed), detail))
    assert passed, f"{number}. {title}: {detail}"


# ---------------------------------------------------------------------------
# cached suites: each returns (traces, summary) where traces are
# (events, costs, K, makespan) tuples for the replay check

@functools.cache
def suite_gapless():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    traces, failures, feasible = [], [], 0
    for i in range(1000):
        costs, K = random_instance(rng, (2, 32), (1, 8))
        sched = schedule_experts(costs, K)
        if not sched.feasible:
            continue
        feasible += 1
        events, report = simulate(sched, costs, K)
        target = costs.beta + math.fsum(costs.alphas)
        if not (math.isclose(report.makespan, target, rel_tol=REL) and report.compute_stall == 0.0):
            failures.append((i, report.makespan, target, report.compute_stall))
        traces.append((events, costs, K, report.makespan))
    elapsed = time.perf_counter() - start
    return traces, dict(feasible=feasible, failures=failures, elapsed=elapsed)


@functools.cache
def suite_four_experts():
    costs = CostVector((0.5, 2.0, 1.0, 0.5), 1.0)
    naive_events, naive = simulate([0, 1, 2, 3], costs, 2)
    sched = greedy_order(costs, 2)
    greedy_events, greedy = simulate(sched, costs, 2)
    traces = [(naive_events, costs, 2, naive.makespan), (greedy_events, costs, 2, greedy.makespan)]
    return traces, dict(naive=naive, greedy=greedy, order=sched.order)


@functools.cache
def suite_oracle():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    traces, disagreements, unsound, counterexamples = [], [], [], []
    n_feasible = 0
    for i in range(1000):
        costs, K = random_instance(rng, (1, 8), (1, 3))
        oracle = enumerate_feasibility(costs, K)
        exact = exact_order(costs, K)
        greedy = greedy_order(costs, K)
        n_feasible += oracle.oracle_feasible
        if exact.feasible != oracle.oracle_feasible:
            disagreements.append(i)
        if greedy.feasible and not oracle.oracle_feasible:
            unsound.append(i)
        if oracle.mismatch:
            counterexamples.append(dict(
                index=i, digest=oracle.instance_digest, K=K, beta=costs.beta,
                alphas=list(costs.alphas), greedy_order=list(greedy.order),
                witness_order=list(oracle.witness_order)))
        chosen = exact if exact.feasible else greedy
        events, report = simulate(chosen, costs, K)
        traces.append((events, costs, K, report.makespan))
    elapsed = time.perf_counter() - start
    return traces, dict(disagreements=disagreements, unsound=unsound, feasible=n_feasible,
                        counterexamples=counterexamples, elapsed=elapsed)


@functools.cache
def suite_diagnosis():
    rng = np.random.default_rng(4)
    traces, wrong_little, wrong_imbalanced, not_infeasible = [], [], [], []
    for i in range(500):
        T = int(rng.integers(2, 33))
        K = int(rng.integers(1, 9))
        beta = float(rng.uniform(0.25, 4.0))
        weights = rng.uniform(0.0, 1.0, T)
        total = float(rng.uniform(0.0, 0.999)) * (T - 1) * beta
        alphas = weights / weights.sum() * total
        costs = CostVector(tuple(alphas.tolist()), beta)
        assert math.fsum(costs.alphas) < (T - 1) * beta
        if diagnose(costs, K) is not Diagnosis.TOO_LITTLE_COMPUTE:
            wrong_little.append(i)
        events, report = simulate(greedy_order(costs, K), costs, K)
        traces.append((events, costs, K, report.makespan))
    for i in range(100):
        T = int(rng.integers(2, 10))
        beta = float(rng.uniform(0.25, 4.0))
        alphas = [0.0] * T
        alphas[int(rng.integers(T))] = 10 * beta
        costs = CostVector(tuple(alphas), beta)
        if enumerate_feasibility(costs, 1).oracle_feasible:
            not_infeasible.append(i)
        if diagnose(costs, 1) is not Diagnosis.IMBALANCED:
            wrong_imbalanced.append(i)
        events, report = simulate(greedy_order(costs, 1), costs, 1)
        traces.append((events, costs, 1, report.makespan))
    return traces, dict(wrong_little=wrong_little, wrong_imbalanced=wrong_imbalanced,
                        not_infeasible=not_infeasible)


@functools.cache
def suite_serial():
    rng = np.random.default_rng(5)
    traces, serial_mismatch, overlap_worse = [], [], []
    n_instances = 0
    for i in range(500):
        costs, K = random_instance(rng, (1, 32), (1, 8))
        for order in (schedule_experts(costs, K).order, tuple(rng.permutation(costs.n_experts))):
            n_instances += 1
            ev_s, serial = simulate(order, costs, K, mode="serial")
            ev_o, over = simulate(order, costs, K)
            expected = math.fsum([costs.beta] * costs.n_experts + list(costs.alphas))
            if serial.makespan != expected:
                serial_mismatch.append(i)
            if over.makespan > serial.makespan:
                overlap_worse.append(i)
            traces.append((ev_s, costs, K, serial.makespan))
            traces.append((ev_o, costs, K, over.makespan))
    worst_ratio, balanced_fail = 0.0, []
    for i in range(200):
        T, K = 32, int(rng.integers(1, 9))
        beta = float(rng.uniform(0.25, 4.0))
        mean = float(rng.uniform(1.0, 4.0)) * beta
        alphas = mean * (1 + rng.uniform(-0.1, 0.1, T))
        if alphas.sum() < T * beta:
            alphas *= T * beta / alphas.sum()
        costs = CostVector(tuple(alphas.tolist()), beta)
        events, over = simulate(schedule_experts(costs, K), costs, K)
        bound = max(math.fsum(costs.alphas) + beta, T * beta)
        worst_ratio = max(worst_ratio, over.makespan / bound)
        if over.makespan > 1.05 * bound:
            balanced_fail.append(i)
        traces.append((events, costs, K, over.makespan))
    return traces, dict(n_instances=n_instances, serial_mismatch=serial_mismatch,
                        overlap_worse=overlap_worse, worst_ratio=worst_ratio,
                        balanced_fail=balanced_fail)


# ---------------------------------------------------------------------------

def test_1_gapless_overlap_identity():
    _, s = suite_gapless()
    ok = not s["failures"] and s["elapsed"] < 10.0 and s["feasible"] > 0
    record(1, "gapless overlap identity", ok,
           f"{s['feasible']}/1000 feasible, {len(s['failures'])} mismatches, {s['elapsed']:.2f}s")


def test_2_four_expert_instance():
    _, s = suite_four_experts()
    naive, greedy = s["naive"], s["greedy"]
    ok = (naive.compute_stall > 0 and naive.makespan > 5.0
          and abs(greedy.makespan - 5.0) <= 1e-9 and greedy.compute_stall == 0.0)
    record(2, "small four-expert instance", ok,
           f"naive makespan {naive.makespan} stall {naive.compute_stall}; "
           f"greedy order {s['order']} makespan {greedy.makespan} stall {greedy.compute_stall}")


def test_3_oracle_agreement(request):
    _, s = suite_oracle()
    artifact_dir = Path(request.config.rootpath) / "artifacts"
    artifact_dir.mkdir(exist_ok=True)
    artifact = artifact_dir / "oracle_counterexamples.json"
    artifact.write_text(json.dumps(s["counterexamples"], indent=2) + "\n")
    for c in s["counterexamples"]:
        print(f"greedy counterexample {c['digest'][:12]}: K={c['K']} beta={c['beta']:.6g} "
              f"alphas={[round(a, 6) for a in c['alphas']]} witness={c['witness_order']}")
    ok = not s["disagreements"] and not s["unsound"] and s["elapsed"] < 60.0
    record(3, "exact search agrees with enumeration", ok,
           f"{len(s['disagreements'])} disagreements, {len(s['unsound'])} unsound greedy verdicts, "
           f"{s['feasible']}/1000 feasible, {len(s['counterexamples'])} greedy counterexamples "
           f"in {artifact.relative_to(request.config.rootpath)}, {s['elapsed']:.2f}s")


def test_4_diagnosis_soundness():
    _, s = suite_diagnosis()
    ok = not (s["wrong_little"] or s["wrong_imbalanced"] or s["not_infeasible"])
    record(4, "infeasibility diagnosis", ok,
           f"TooLittleCompute wrong on {len(s['wrong_little'])}/500, "
           f"Imbalanced wrong on {len(s['wrong_imbalanced'])}/100, "
           f"{len(s['not_infeasible'])} dominant instances not infeasible")


def test_5_serial_baseline():
    _, s = suite_serial()
    ok = not (s["serial_mismatch"] or s["overlap_worse"] or s["balanced_fail"])
    record(5, "serial baseline identity", ok,
           f"{s['n_instances']} orders: {len(s['serial_mismatch'])} serial mismatches, "
           f"{len(s['overlap_worse'])} overlapped > serial; balanced worst ratio "
           f"{s['worst_ratio']:.4f} (limit 1.05)")


def _injected_faults():
    from dataclasses import replace

    from moesched import Stream
    costs = CostVector((0.5, 2.0, 1.0, 0.5), 1.0)
    events, report = simulate([1, 2, 0, 3], costs, 2)

    def shift(stream, expert, **kw):
        return [replace(ev, **kw) if ev.stream is stream and ev.expert_id == expert else ev
                for ev in events]

    yield "causality", shift(Stream.COMPUTE, 2, start=0.5, end=1.5), costs, 2, None
    yield "overlap", shift(Stream.LOAD, 0, start=1.5, end=2.5), costs, 2, None
    yield "duration", shift(Stream.COMPUTE, 3, end=9.0), costs, 2, None
    yield "makespan", events, costs, 2, report.makespan + 1.0
    yield "missing", events[:-1], costs, 2, None
    # same events, but capacity one lower than the staged peak
    heavy = CostVector((4.0, 1.0, 1.0, 1.0), 1.0)
    ev_k2, _ = simulate([0, 1, 2, 3], heavy, 2)
    yield "residency", ev_k2, heavy, 1, None


def test_6_residency_safety():
    traces = []
    for suite in (suite_gapless, suite_four_experts, suite_oracle, suite_diagnosis, suite_serial):
        traces.extend(suite()[0])
    dirty = [i for i, (ev, c, K, m) in enumerate(traces) if replay_check(ev, c, K, m)]
    missed = []
    for kind, events, costs, K, makespan in _injected_faults():
        found = {v.kind for v in replay_check(events, costs, K, makespan)}
        if kind not in found:
            missed.append(kind)
    ok = not dirty and not missed
    record(6, "replay check", ok,
           f"{len(traces)} traces, {len(dirty)} with violations; "
           f"injected fault classes missed: {missed or 'none'}")


def test_7_cost_arithmetic():
    geom = geometry_from_preset("cpm2", bytes_per_param=2)
    hw = HardwareProfile(peak_flops=1.25e14, h2d_bandwidth=16e9,
                         device_memory=16 * 2**30, reserved_memory=8 * 2**30)
    nbytes = expert_param_bytes(geom)
    costs = compute_costs(ExpertWorkload(0, (1024,) * 32), geom, hw)
    K = resident_capacity(geom, hw)
    beta_ok = math.isclose(costs.beta, 167_772_160 / 16e9, rel_tol=1e-12)
    ok = nbytes == 167_772_160 and beta_ok and round(costs.beta, 6) == 0.010486 and K == 51
    record(7, "cost-model arithmetic", ok, f"bytes {nbytes}, beta {costs.beta!r} s, K {K}")


def test_8_gating_balance():
    ratios = gating_balance(100_000, 32, 5, 256, range(10))
    model = GatingModel(projection_seed=11, n_hash_bits=5, hidden_dim=256)
    tokens = gaussian_tokens(100_000, 256, 12)
    a = route_tokens(model, tokens, 32)
    b = route_tokens(GatingModel(projection_seed=11, n_hash_bits=5, hidden_dim=256),
                     tokens.copy(), 32)
    deterministic = a == b and a.total_tokens == 100_000
    ok = max(ratios) < 1.5 and deterministic
    record(8, "gating balance", ok,
           f"max/mean per seed {[round(r, 3) for r in ratios]}, deterministic={deterministic}")


def test_9_reproducibility(tmp_path):
    scenario = {
        "name": "repro",
        "geometry": {"preset": "cpm2", "bytes_per_param": 2, "n_experts_per_layer": 12},
        "hardware": {"peak_flops": 1.25e14, "h2d_bandwidth": 1.6e10,
                     "device_memory": 16 * 2**30, "reserved_memory": 8 * 2**30},
        "workload": {"kind": "gating", "total_tokens": 50_000, "n_hash_bits": 5,
                     "hidden_dim": 64},
        "moe_layers": 2,
        "K": 3,
        "policies": ["Greedy", "Exact", "Naive", "Serial"],
        "seed": 2024,
    }
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps(scenario))
    codes = [main(["run", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "run_meta.json")
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    ok = codes == [0, 0] and not mismatch and not errors and len(match) >= 10
    record(9, "reproducibility", ok,
           f"exit codes {codes}, {len(match)} identical files, differing: {mismatch or 'none'}")
