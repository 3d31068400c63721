import itertools

import numpy as np
import pytest

from oracles import history_fn, tracking_fn, trajectory_cost, zw_posterior
from rtcode.errors import BudgetExceeded, SpecError
from rtcode.instances import (
    random_decoder,
    random_spec,
    random_stochastic_encoder,
    random_tracking_encoder,
    simplex,
)
from rtcode.model import hamming, make_spec
from rtcode.system import (
    FULL_HISTORY,
    SI_BELIEF,
    STOCHASTIC,
    TRACKING,
    Belief,
    DecoderPolicy,
    EncoderPolicy,
    bayes_decoder,
    decoder_from_dict,
    decoder_to_dict,
    encoder_belief_update,
    encoder_from_dict,
    encoder_to_dict,
    evaluate_cost,
    evaluate_cost_si,
    modified_distortion,
    propagate_joint,
    stage_joints,
)


def bsc(p=0.3, horizon=2, lam=1.0):
    return make_spec(x_size=2, y_size=2, zy_size=2, horizon=horizon, lam=lam,
                     initial=[0.5, 0.5], transitions=[[1 - p, p], [p, 1 - p]],
                     distortion=hamming(2))


def copy_decoder(spec):
    r = np.array([[0, 0], [1, 1]])
    g = np.array([[0, 0], [1, 1]])
    return DecoderPolicy([r] * spec.horizon, [g] * spec.horizon)


def identity_encoder(spec):
    return EncoderPolicy(TRACKING, [np.array([[0, 0], [1, 1]])] * spec.horizon)


def test_propagation_identity_encoder():
    spec = bsc()
    states = propagate_joint(spec, identity_encoder(spec), copy_decoder(spec))
    assert np.allclose(states[0].table, [[0.5, 0], [0.5, 0]])
    assert np.allclose(states[1].table, [[0.35, 0.15], [0.15, 0.35]])


def test_constant_encoder_state_is_degenerate_and_free():
    spec = bsc(horizon=3)
    enc = EncoderPolicy(TRACKING, [np.ones((2, 2), dtype=int)] * 3)
    states = propagate_joint(spec, enc, copy_decoder(spec))
    assert np.allclose(states[2].table[:, 0], 0)
    assert evaluate_cost(spec, enc, copy_decoder(spec)).avg_length == 0


def test_one_bit_identity_code():
    spec = bsc(horizon=1)
    rep = evaluate_cost(spec, identity_encoder(spec), copy_decoder(spec))
    assert rep.total == 1.0 and rep.avg_distortion == 0.0


def test_lambda_zero_constant_reproduction():
    spec = bsc(horizon=3, lam=0.0)
    dec = DecoderPolicy([np.zeros((2, 2), dtype=int)] * 3, [np.zeros((2, 2), dtype=int)] * 3)
    enc = random_tracking_encoder(np.random.default_rng(0), spec)
    # the source marginal stays uniform, so x̂ = 0 is wrong half the time
    assert evaluate_cost(spec, enc, dec).total == pytest.approx(0.5)


def test_report_invariants():
    rng = np.random.default_rng(11)
    spec = random_spec(rng, horizon=3, lam=0.7)
    rep = evaluate_cost(spec, random_stochastic_encoder(rng, spec), random_decoder(rng, spec))
    assert rep.total == pytest.approx(np.mean([s.cost for s in rep.per_stage]), abs=1e-12)
    for s in rep.per_stage:
        assert s.cost == pytest.approx(s.distortion + 0.7 * s.length, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_tracking_cost_matches_trajectory_oracle(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, horizon=3, y_size=3, zy_size=2, distortion="random")
    dec = random_decoder(rng, spec)
    for enc in (random_tracking_encoder(rng, spec), random_stochastic_encoder(rng, spec)):
        want, dist, lengths = trajectory_cost(spec, tracking_fn(enc, spec.y_size), dec)
        rep = evaluate_cost(spec, enc, dec)
        assert rep.total == pytest.approx(want, abs=1e-12)
        assert [s.length for s in rep.per_stage] == pytest.approx(list(lengths), abs=1e-12)


def full_history_tables(rng, spec):
    tables = []
    for s in range(spec.horizon):
        t = {}
        for xs in itertools.product(range(spec.x_size), repeat=s + 1):
            for ys in itertools.product(range(spec.y_size), repeat=s):
                t[(xs, ys)] = int(rng.integers(spec.y_size))
        tables.append(t)
    return EncoderPolicy(FULL_HISTORY, tables)


@pytest.mark.parametrize("seed", range(4))
def test_full_history_cost_matches_trajectory_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    spec = random_spec(rng, horizon=3, distortion="random")
    dec = random_decoder(rng, spec)
    enc = full_history_tables(rng, spec)
    want, _, _ = trajectory_cost(spec, history_fn(enc, spec.y_size), dec)
    assert evaluate_cost(spec, enc, dec).total == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_si_cost_matches_trajectory_oracle(seed):
    rng = np.random.default_rng(200 + seed)
    spec = random_spec(rng, horizon=2, si=True, distortion="random")
    dec = random_decoder(rng, spec)
    for enc in (random_tracking_encoder(rng, spec), full_history_tables(rng, spec)):
        fn = tracking_fn(enc, 2) if enc.kind == TRACKING else history_fn(enc, 2)
        want, _, _ = trajectory_cost(spec, fn, dec)
        assert evaluate_cost_si(spec, enc, dec).total == pytest.approx(want, abs=1e-12)


def test_si_ignored_by_decoder_matches_plain_cost():
    rng = np.random.default_rng(5)
    plain = random_spec(rng, horizon=3)
    si = plain.replace(si_channel=np.array([[0.99, 0.01], [0.01, 0.99]]), w_size=2, zw_size=2)
    dec = random_decoder(rng, plain)
    g4 = [np.broadcast_to(g[None, :, None, :], (2, 2, 2, 2)).copy() for g in dec.reproduction]
    rw = [rng.integers(2, size=(2, 2, 2)) for _ in range(3)]
    enc = random_stochastic_encoder(rng, plain)
    assert evaluate_cost_si(si, enc, DecoderPolicy(dec.next_state, g4, rw)).total == \
        pytest.approx(evaluate_cost(plain, enc, dec).total, abs=1e-12)


def test_si_zero_distortion_leaves_only_rate():
    rng = np.random.default_rng(6)
    spec = random_spec(rng, horizon=2, si=True).replace(distortion=(np.zeros((2, 2)),) * 2)
    enc = random_tracking_encoder(rng, spec)
    reps = [evaluate_cost_si(spec, enc, random_decoder(rng, spec)) for _ in range(3)]
    for rep in reps:
        assert rep.avg_distortion == 0 and rep.total == pytest.approx(spec.lam * rep.avg_length)


def test_joint_states_conserve_probability():
    rng = np.random.default_rng(8)
    for si in (False, True):
        spec = random_spec(rng, horizon=3, si=si, zy_size=3, y_size=3)
        for state in propagate_joint(spec, random_stochastic_encoder(rng, spec),
                                     random_decoder(rng, spec)):
            assert abs(state.table.sum() - 1) < 1e-9


def test_stochastic_full_history_reduces_to_tracking():
    # a history-dependent stochastic encoder at T=2 and its induced P(y | x_2, z_1)
    rng = np.random.default_rng(9)
    spec = random_spec(rng, horizon=2, distortion="random")
    dec = random_decoder(rng, spec)
    stage0 = simplex(rng, (2, 2))                         # P(y_1 | x_1)
    stage1 = simplex(rng, (2, 2, 2, 2))                   # P(y_2 | x_1, x_2, y_1)
    fn = lambda s, xs, ys, zy: stage0[xs[0]] if s == 0 else stage1[xs[0], xs[1], ys[0]]
    want, _, _ = trajectory_cost(spec, fn, dec)
    # induced conditional P(y_2 | x_2, z_1)
    num = np.zeros((2, 2, 2))
    K = spec.kernel(0)
    for x1, y1, x2 in itertools.product(range(2), repeat=3):
        p = spec.initial_dist[x1] * stage0[x1, y1] * K[x1, x2]
        num[x2, dec.next_state[0][y1, 0]] += p * stage1[x1, x2, y1]
    induced = np.where(num.sum(-1, keepdims=True) > 0,
                       num / np.maximum(num.sum(-1, keepdims=True), 1e-300), 0.5)
    first = np.repeat(stage0[:, None, :], 2, axis=1)
    enc = EncoderPolicy(STOCHASTIC, [first, induced])
    assert evaluate_cost(spec, enc, dec).total == pytest.approx(want, abs=1e-9)


# -- Bayes decoder ---------------------------------------------------------------


def test_bayes_majority_and_tie():
    spec = make_spec(x_size=2, y_size=1, zy_size=1, horizon=1, lam=0.0,
                     initial=[0.8, 0.2], distortion=hamming(2))
    enc = EncoderPolicy(TRACKING, [np.zeros((2, 1), dtype=int)])
    assert bayes_decoder(spec, enc, [np.zeros((1, 1), dtype=int)]).reproduction[0][0, 0] == 0
    spec = spec.replace(initial_dist=np.array([0.5, 0.5]))
    assert bayes_decoder(spec, enc, [np.zeros((1, 1), dtype=int)]).reproduction[0][0, 0] == 0
    spec = spec.replace(initial_dist=np.array([0.2, 0.8]))
    assert bayes_decoder(spec, enc, [np.zeros((1, 1), dtype=int)]).reproduction[0][0, 0] == 1


@pytest.mark.parametrize("seed", range(3))
def test_bayes_beats_every_reproduction_table(seed):
    rng = np.random.default_rng(300 + seed)
    spec = random_spec(rng, horizon=2, distortion="random")
    enc = random_stochastic_encoder(rng, spec)
    r = random_decoder(rng, spec).next_state
    best = evaluate_cost(spec, enc, bayes_decoder(spec, enc, r)).total
    cells = 2 * 2
    for g0, g1 in itertools.product(itertools.product(range(2), repeat=cells), repeat=2):
        g = [np.array(g0).reshape(2, 2), np.array(g1).reshape(2, 2)]
        assert best <= evaluate_cost(spec, enc, DecoderPolicy(r, g)).total + 1e-12


def test_bayes_dominance_over_random_tables():
    rng = np.random.default_rng(12)
    for si in (False, True):
        spec = random_spec(rng, horizon=3, si=si, distortion="random")
        enc = random_tracking_encoder(rng, spec)
        base = random_decoder(rng, spec)
        ev = evaluate_cost_si if si else evaluate_cost
        best = ev(spec, enc, bayes_decoder(spec, enc, base.next_state, base.si_next_state)).total
        for _ in range(100):
            alt = random_decoder(rng, spec)
            dec = DecoderPolicy(base.next_state, alt.reproduction, base.si_next_state)
            assert best <= ev(spec, enc, dec).total + 1e-12


# -- beliefs ----------------------------------------------------------------------


def test_belief_constant_and_identity_maps():
    spec = random_spec(np.random.default_rng(1), si=True, horizon=2, zw_size=3)
    const = np.full((2, 2, 3), 2)
    assert encoder_belief_update(spec, [0.2, 0.3, 0.5], 0, 1, const).probs == (0, 0, 1)
    ident = np.broadcast_to(np.arange(3), (2, 2, 3))
    b = encoder_belief_update(spec, [0.2, 0.3, 0.5], 1, 0, ident)
    assert np.allclose(b.vector, [0.2, 0.3, 0.5])


@pytest.mark.parametrize("seed", range(5))
def test_belief_recursion_matches_trajectory_bayes(seed):
    rng = np.random.default_rng(400 + seed)
    spec = random_spec(rng, si=True, horizon=3, zw_size=3, w_size=2)
    rw = random_decoder(rng, spec).si_next_state
    for xs in itertools.product(range(2), repeat=3):
        for ys in itertools.product(range(2), repeat=3):
            b = Belief.of([1.0, 0.0, 0.0])
            for s in range(3):
                b = encoder_belief_update(spec, b, xs[s], ys[s], rw[s])
                assert np.allclose(b.vector, zw_posterior(spec, xs[:s + 1], ys[:s + 1], rw),
                                   atol=1e-9)


def test_modified_distortion_cases():
    rng = np.random.default_rng(13)
    spec = random_spec(rng, si=True, horizon=1, distortion="random")
    g = rng.integers(2, size=(2, 2, 2, 2))
    zero = spec.replace(distortion=(np.zeros((2, 2)),))
    assert modified_distortion(zero, 0, [0.5, 0.5], 1, 0, 1, g) == 0
    g_flat = np.broadcast_to(g[:1], g.shape)
    assert modified_distortion(spec, 0, [0, 1], 1, 0, 1, g_flat) == \
        pytest.approx(spec.distortion[0][1, g[0, 0, 1, 1]])
    # direct conditional expectation over (w, z^w)
    b = np.array([0.3, 0.7])
    want = sum(spec.si_channel[0, w] * b[z] * spec.distortion[0][0, g[w, 1, z, 0]]
               for w in range(2) for z in range(2))
    assert modified_distortion(spec, 0, b, 0, 1, 0, g) == pytest.approx(want)
    with pytest.raises(SpecError):
        modified_distortion(spec, 0, [1.0], 0, 1, 0, g)


def test_belief_encoder_matches_full_history_equivalent():
    rng = np.random.default_rng(14)
    spec = random_spec(rng, si=True, horizon=2)
    dec = random_decoder(rng, spec)
    full = full_history_tables(rng, spec)
    # build the belief-keyed encoder that agrees with a history-measurable rule
    start = Belief.of([1.0, 0.0])
    rule = {}
    tables = [{}, {}]
    for x in range(2):
        tables[0][(start.key, x, 0)] = full.tables[0][((x,), ())]
    hist = {}
    for x1 in range(2):
        y1 = tables[0][(start.key, x1, 0)]
        b = encoder_belief_update(spec, start, x1, y1, dec.si_next_state[0])
        z = int(dec.next_state[0][y1, 0])
        for x2 in range(2):
            key = (b.key, x2, z)
            rule.setdefault(key, int(rng.integers(2)))
            tables[1][key] = rule[key]
            hist[((x1, x2), (y1,))] = rule[key]
    for xs in itertools.product(range(2), repeat=2):
        for ys in itertools.product(range(2), repeat=1):
            hist.setdefault((xs, ys), 0)
    enc_b = EncoderPolicy(SI_BELIEF, tables)
    enc_h = EncoderPolicy(FULL_HISTORY, [full.tables[0], hist])
    assert evaluate_cost_si(spec, enc_b, dec).total == \
        pytest.approx(evaluate_cost_si(spec, enc_h, dec).total, abs=1e-12)


# -- errors and serialization ------------------------------------------------------


def test_dimension_mismatch():
    spec = bsc()
    with pytest.raises(SpecError):
        evaluate_cost(spec, EncoderPolicy(TRACKING, [np.zeros((3, 2), dtype=int)] * 2),
                      copy_decoder(spec))
    with pytest.raises(SpecError):
        evaluate_cost(spec, identity_encoder(spec),
                      DecoderPolicy([np.zeros((2, 2), dtype=int)] * 2, [np.full((2, 2), 5)] * 2))


def test_history_budget():
    rng = np.random.default_rng(0)
    spec = random_spec(rng, horizon=3)
    with pytest.raises(BudgetExceeded):
        evaluate_cost(spec, full_history_tables(rng, spec), random_decoder(rng, spec), budget=3)


def test_missing_history_key():
    spec = bsc()
    enc = EncoderPolicy(FULL_HISTORY, [{((0,), ()): 0}, {}])
    with pytest.raises(SpecError):
        evaluate_cost(spec, enc, copy_decoder(spec))


@pytest.mark.parametrize("kind", [TRACKING, STOCHASTIC, FULL_HISTORY])
def test_policy_json_round_trip(kind):
    rng = np.random.default_rng(15)
    spec = random_spec(rng, horizon=2)
    enc = {TRACKING: random_tracking_encoder, STOCHASTIC: random_stochastic_encoder,
           FULL_HISTORY: full_history_tables}[kind](rng, spec)
    dec = random_decoder(rng, spec)
    enc2 = encoder_from_dict(encoder_to_dict(enc))
    dec2 = decoder_from_dict(decoder_to_dict(dec))
    assert evaluate_cost(spec, enc2, dec2).total == evaluate_cost(spec, enc, dec).total


def test_si_json_round_trip():
    rng = np.random.default_rng(16)
    spec = random_spec(rng, horizon=2, si=True)
    dec = random_decoder(rng, spec)
    start = Belief.of([1.0, 0.0])
    tables = [{(start.key, x, 0): x for x in range(2)}, {}]
    for x1 in range(2):
        b = encoder_belief_update(spec, start, x1, x1, dec.si_next_state[0])
        for x2 in range(2):
            tables[1][(b.key, x2, int(dec.next_state[0][x1, 0]))] = x2
    enc = EncoderPolicy(SI_BELIEF, tables)
    again = encoder_from_dict(encoder_to_dict(enc))
    assert evaluate_cost_si(spec, again, decoder_from_dict(decoder_to_dict(dec))).total == \
        evaluate_cost_si(spec, enc, dec).total


def test_stage_joints_total_mass():
    rng = np.random.default_rng(17)
    spec = random_spec(rng, horizon=3)
    for R in stage_joints(spec, full_history_tables(rng, spec), random_decoder(rng, spec)):
        assert R.sum() == pytest.approx(1.0)
