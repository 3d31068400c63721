"""Acceptance gate: twelve seeded criteria at their stated tolerances.

Each test prints (and records for the end-of-run summary) one line of the
form ``criterion N: PASS|FAIL <name> (<details>)``.
"""

import functools
import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import x_posterior, zw_posterior
from rtcode import mdp, search
from rtcode.instances import (
    random_decoder,
    random_spec,
    random_stochastic_encoder,
    random_tracking_encoder,
)
from rtcode.length import (
    huffman_expected_length,
    joint_conditional_length,
    oracle_min_expected_length,
)
from rtcode.montecarlo import simulate
from rtcode.system import (
    Belief,
    DecoderPolicy,
    encoder_belief_update,
    evaluate_cost,
    evaluate_cost_si,
    prefix_tree,
)

pytestmark = pytest.mark.acceptance
TOL = 1e-9


def verdict(number, name, ok, details):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name} ({details})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def structure_instances():
    rng = np.random.default_rng(20240601)
    out = []
    for i in range(20):
        spec = random_spec(rng, horizon=3, lam=(0.0, 0.5, 1.0, 2.0)[i % 4])
        out.append((spec, random_decoder(rng, spec)))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def tracking_optima():
    return tuple(search.optimize_tracking(spec, dec) for spec, dec in structure_instances())


def test_criterion_01_theorem1_structure():
    start = time.perf_counter()
    worst = 0.0
    for (spec, dec), track in zip(structure_instances(), tracking_optima()):
        full = search.optimize_full_history(spec, dec)
        worst = max(worst, abs(full.best_cost - track.best_cost))
    elapsed = time.perf_counter() - start
    verdict(1, "full-history optimum equals tracking optimum", worst <= TOL and elapsed <= 60,
            f"20 instances, max |slack| = {worst:.3g}, {elapsed:.1f} s")


def test_criterion_02_stochastic_encoders_do_not_help():
    worst = math.inf
    for i, ((spec, dec), track) in enumerate(zip(structure_instances(), tracking_optima())):
        costs = search.sample_stochastic_costs(spec, dec, 1000, seed=1000 + i)
        worst = min(worst, float(costs.min() - track.best_cost))
    verdict(2, "random stochastic encoders never beat the deterministic optimum", worst >= -TOL,
            f"20 x 1000 samples, min(sampled - optimum) = {worst:.3g}")


def test_criterion_03_concavity():
    rng = np.random.default_rng(33)
    spec = random_spec(rng, horizon=3)
    rep = search.sample_concavity(spec, random_decoder(rng, spec), 10**4, seed=34)
    verdict(3, "stage and downstream costs are concave in a stage encoder", rep.holds,
            f"10^4 trials, violations stage={rep.stage_violations} "
            f"downstream={rep.downstream_violations}, worst gaps "
            f"{rep.worst_stage_gap:.3g} / {rep.worst_downstream_gap:.3g}")


def test_criterion_04_length_inequalities():
    rng = np.random.default_rng(44)
    cond_viol = pair_viol = 0
    worst_pair = 0.0
    for _ in range(10**4):
        ny, nw, nz = rng.integers(1, 5, size=3)
        joint = rng.dirichlet(np.ones(ny * nw * nz)).reshape(ny, nw, nz)   # axes (y, w, z)
        l_y_z = joint_conditional_length(joint, (0,), (2,))
        l_y_wz = joint_conditional_length(joint, (0,), (1, 2))
        l_yz_w = joint_conditional_length(joint, (0, 2), (1,))
        cond_viol += l_y_z < l_y_wz - TOL
        gap = l_y_wz - (l_yz_w - math.log2(nz))
        pair_viol += gap < -TOL
        worst_pair = min(worst_pair, gap)
    verdict(4, "conditioning and pair-coding length inequalities",
            cond_viol == 0 and pair_viol == 0,
            f"10^4 joints, L_Y|Z violations={cond_viol}, "
            f"pair-bound violations={pair_viol} (worst {worst_pair:.4f})")


def test_criterion_05_huffman_optimality():
    rng = np.random.default_rng(55)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(1, 6))
        p = rng.dirichlet(np.ones(n))
        if i % 5 == 0:
            p = np.eye(n)[rng.integers(n)]                 # degenerate
        elif i % 5 == 1 and n > 1:
            p[rng.integers(n)] = 0.0                       # zero-padded
            p = p / p.sum() if p.sum() > 0 else np.eye(n)[0]
        mismatches += huffman_expected_length(p).expected_length != oracle_min_expected_length(p)
    verdict(5, "Huffman length equals the Kraft-search optimum exactly", mismatches == 0,
            f"1000 distributions, mismatches={mismatches}")


def test_criterion_06_theorem2_belief_mdp():
    rng = np.random.default_rng(66)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        spec = random_spec(rng, horizon=3, lam=float(rng.choice([0.5, 1.0, 2.0])))
        _, cost = mdp.solve_backward(spec)
        worst = max(worst, abs(cost - search.optimize_infinite_memory(spec).best_cost))
    elapsed = time.perf_counter() - start
    verdict(6, "belief MDP equals infinite-memory brute force", worst <= TOL and elapsed <= 120,
            f"10 instances, max |diff| = {worst:.3g}, {elapsed:.1f} s")


def test_criterion_07_theorem3_bound():
    rng = np.random.default_rng(77)
    violations = 0
    worst = math.inf
    for i in range(100):
        spec = random_spec(rng, horizon=4, lam=(0.5, 1.0)[i % 2])
        delta = search.optimize_system(spec, 2).best_cost
        for l in (1, 2):
            win = search.optimize_sliding_window(spec, l).best_cost
            slack = delta - (win - spec.lam * math.log2(2) / l)
            worst = min(worst, slack)
            violations += slack < -TOL
    verdict(7, "finite-state optimum obeys the sliding-window lower bound", violations == 0,
            f"100 instances x l in {{1, 2}}, violations={violations}, min slack {worst:.3g}")


def test_criterion_08_theorem6_si_structure():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(10):
        spec = random_spec(rng, horizon=2, si=True)
        rep = search.check_theorem6(spec, random_decoder(rng, spec))
        worst = max(worst, abs(rep.slack))
    verdict(8, "SI full-history optimum equals belief-measurable optimum", worst <= TOL,
            f"10 instances, max |slack| = {worst:.3g}")


def test_criterion_09_theorem7_si_mdp():
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(5):
        spec = random_spec(rng, horizon=2, si=True, distortion="random")
        rw = random_decoder(rng, spec).si_next_state
        _, cost = mdp.solve_backward_si(spec, rw)
        ext, r = prefix_tree(spec)
        g = [np.zeros((spec.w_size, spec.y_size, spec.zw_size, ext.zy_size), dtype=int)] * 2
        brute = search.optimize_full_history(ext, DecoderPolicy(r, g, rw), reproduction="bayes")
        worst = max(worst, abs(cost - brute.best_cost))
    verdict(9, "SI belief MDP equals SI brute force", worst <= TOL,
            f"5 instances, max |diff| = {worst:.3g}")


def test_criterion_10_monte_carlo():
    rng = np.random.default_rng(1010)
    worst = 0.0
    identical = True
    for i in range(10):
        si = i % 2 == 1
        spec = random_spec(rng, horizon=3, si=si, distortion="random")
        enc = random_stochastic_encoder(rng, spec) if i % 3 else random_tracking_encoder(rng, spec)
        dec = random_decoder(rng, spec)
        exact = (evaluate_cost_si if si else evaluate_cost)(spec, enc, dec).total
        res = simulate(spec, enc, dec, 10**5, seed=i)
        worst = max(worst, abs(res.mean_cost - exact) / res.std_error)
        identical &= res == simulate(spec, enc, dec, 10**5, seed=i)
    verdict(10, "Monte-Carlo mean within 4 standard errors, seeds reproduce",
            worst <= 4 and identical,
            f"10 instances, n=10^5, max |error|/std_error = {worst:.2f}, bit-identical={identical}")


def test_criterion_11_lambda_sweep():
    rng = np.random.default_rng(1111)
    grid = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
    bad = 0
    for _ in range(5):
        spec = random_spec(rng, horizon=3, distortion="random")
        rows = []
        for lam in grid:
            res = search.optimize_system(spec.replace(lam=lam), 2)
            rep = evaluate_cost(res.spec, res.best_encoder, res.best_decoder)
            rows.append((rep.avg_distortion, rep.avg_length))
        for (d0, l0), (d1, l1) in zip(rows, rows[1:]):
            bad += (l1 > l0 + TOL) + (d1 < d0 - TOL)
    verdict(11, "optimal length non-increasing and distortion non-decreasing in lambda",
            bad == 0, f"5 instances x 6 lambdas, order violations={bad}")


def test_criterion_12_belief_recursions():
    rng = np.random.default_rng(1212)
    worst_enc = worst_mdp = 0.0
    branches = 0
    for _ in range(10):
        spec = random_spec(rng, horizon=3, si=True)
        rw = random_decoder(rng, spec).si_next_state
        # encoder belief on Z^w along every (x^t, y^t) branch
        for xs in itertools.product(range(2), repeat=3):
            for ys in itertools.product(range(2), repeat=3):
                b = Belief.of([1.0, 0.0])
                for s in range(3):
                    b = encoder_belief_update(spec, b, xs[s], ys[s], rw[s])
                    want = zw_posterior(spec, xs[:s + 1], ys[:s + 1], rw)
                    worst_enc = max(worst_enc, float(np.abs(b.vector - want).max()))
        # public posterior, with and without SI, under a random action per prefix
        plain = spec.replace(si_channel=None, w_size=0, zw_size=0)
        for model, tables in ((plain, None), (spec, rw)):
            policy = {}
            s0 = mdp.initial_state(model)

            def walk(state, ys, acts):
                nonlocal worst_mdp, branches
                if state.stage == model.horizon - 1:
                    return
                a = policy.setdefault(ys, tuple(int(v) for v in rng.integers(2, size=2)))
                acts = acts + [a]
                for y in range(2):
                    seq = type("Actions", (list,), {})(acts)
                    seq.rw = tables
                    want = x_posterior(model, seq, ys + (y,))
                    if want is None:
                        continue
                    nxt = mdp.belief_update(model, state, a, y, tables)
                    worst_mdp = max(worst_mdp, float(np.abs(nxt.belief - want).max()))
                    branches += 1
                    walk(nxt, ys + (y,), acts)

            walk(s0, (), [])
    verdict(12, "belief recursions match trajectory enumeration",
            worst_enc <= TOL and worst_mdp <= TOL,
            f"10 instances, encoder-belief max err {worst_enc:.3g}, "
            f"posterior max err {worst_mdp:.3g} over {branches} branches")
