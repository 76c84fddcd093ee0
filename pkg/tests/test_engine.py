import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from arwlab import engine as E
from arwlab.lattice import make_box, neighbors
from arwlab.stacks import Params, StackSource, jump_count_into


def seed_where(params, site, predicate, start=0):
    for seed in range(start, start + 10_000):
        src = StackSource(seed, params)
        if predicate(src.instruction(site, 0)):
            return src
    raise LookupError


P1 = Params(1, 1.0)


@st.composite
def instances(draw, max_d=3, max_n=3, max_particles=10, sleepers=True):
    d = draw(st.integers(1, max_d))
    n = draw(st.integers(0 if d > 1 else 1, max_n if d < 3 else 2))
    box = make_box(d, n)
    k = draw(st.integers(1, max_particles))
    states = np.zeros(box.size, dtype=np.int64)
    for _ in range(k):
        states[draw(st.integers(0, box.size - 1))] += 1
    if sleepers:
        for i in np.flatnonzero(states == 1):
            if draw(st.booleans()):
                states[i] = E.SLEEPING
    lam = draw(st.sampled_from([0.3, 1.0, 2.5]))
    seed = draw(st.integers(0, 2**64 - 1))
    return E.Configuration(box, states), StackSource(seed, Params(d, lam))


# ---------------------------------------------------------------- topple

def test_topple_single_particle_sleeps():
    box = make_box(1, 1)
    src = seed_where(P1, (0,), lambda i: i.is_sleep)
    out = E.topple(E.Configuration.delta(box), src, (0,))
    assert out[(0,)] == E.SLEEPING and out.odom((0,)) == 1


def test_topple_sleep_is_ineffective_with_two_particles():
    box = make_box(1, 1)
    src = seed_where(P1, (0,), lambda i: i.is_sleep)
    out = E.topple(E.Configuration.delta(box, count=2), src, (0,))
    assert out[(0,)] == 2 and out.odom((0,)) == 1


def test_topple_kills_at_boundary():
    box = make_box(1, 0)
    src = seed_where(P1, (0,), lambda i: not i.is_sleep)
    out = E.topple(E.Configuration.delta(box), src, (0,))
    assert out[(0,)] == E.EMPTY and out.killed == 1 and out.particles() == 0


def test_topple_wakes_sleeper_on_arrival():
    box = make_box(1, 1)
    src = seed_where(P1, (0,), lambda i: i.direction == 1)
    cfg = E.Configuration.from_sites(box, {(0,): 1, (1,): E.SLEEPING})
    out = E.topple(cfg, src, (0,))
    assert out[(1,)] == 2 and out[(0,)] == E.EMPTY


def test_topple_does_not_mutate_input():
    box = make_box(1, 1)
    cfg = E.Configuration.delta(box)
    E.topple(cfg, StackSource(1, P1), (0,))
    assert cfg[(0,)] == 1 and cfg.odom((0,)) == 0


def test_topple_rejects_empty_and_sleeping():
    box = make_box(1, 1)
    src = StackSource(0, P1)
    with pytest.raises(ValueError, match="empty"):
        E.topple(E.Configuration.empty(box), src, (0,))
    sleeping = E.Configuration.delta(box, count=E.SLEEPING)
    with pytest.raises(ValueError, match="sleeping"):
        E.topple(sleeping, src, (0,))
    woken = E.topple(sleeping, src, (0,), acceptable=True)
    assert woken.odom((0,)) == 1


# ---------------------------------------------------------------- stability

def test_is_stable_examples():
    box = make_box(2, 1)
    o = box.origin
    sleeping = E.Configuration.delta(box, count=E.SLEEPING)
    single = E.Configuration.delta(box)
    assert E.is_stable(sleeping, o, E.Weak([]))
    assert E.is_stable(sleeping, o, E.Strong([]))
    assert E.is_stable(single, o, E.Weak([o]))
    assert not E.is_stable(single, o, E.Strong([o]))
    assert not E.is_stable(single, o, E.TRUE_STAB)
    assert not E.is_stable(sleeping, o, E.Strong([o]))
    assert not E.is_stable(E.Configuration.delta(box, count=2), o, E.Weak([o]))
    # sites outside U follow the true rule
    assert not E.is_stable(single, o, E.Weak([(1, 0)]))


# ---------------------------------------------------------------- stabilize

def test_stabilize_single_site_box():
    box = make_box(1, 0)
    hits = 0
    for seed in range(2000):
        src = StackSource(seed, P1)
        out = E.stabilize(E.Configuration.delta(box), src)
        first_is_sleep = src.instruction((0,), 0).is_sleep
        assert (out[(0,)] == E.SLEEPING) == first_is_sleep
        hits += first_is_sleep
    assert abs(hits / 2000 - 0.5) < 4 * np.sqrt(0.25 / 2000)


def test_stabilize_all_sleeping_is_fixed_point():
    box = make_box(2, 1)
    cfg = E.Configuration(box, np.full(box.size, E.SLEEPING))
    out = E.stabilize(cfg, StackSource(5, Params(2, 1.0)))
    assert np.array_equal(out.states, cfg.states) and not out.odometer.any()


def test_stabilize_result_is_stable():
    box = make_box(2, 2)
    cfg = E.Configuration(box, np.random.default_rng(0).integers(0, 4, box.size))
    for mode in (E.TRUE_STAB, E.Weak([(0, 0), (1, 1)]), E.Strong([(0, 0)])):
        out = E.stabilize(cfg, StackSource(9, Params(2, 0.8)), mode)
        assert all(E.is_stable(out, x, mode) for x in box.sites())


def test_delta_origin_v1_occupation_frequency():
    # oracle: 4/7 (exhaustive chain); 20000 seeds, 4 SE
    expected = oracles.occupation_probability(1, 1, 1.0, {(0,): 1})
    assert expected == pytest.approx(4 / 7, abs=1e-12)
    box = make_box(1, 1)
    trials = 20_000
    hits = sum(E.stabilize(E.Configuration.delta(box), StackSource(s, P1))[(0,)] == E.SLEEPING
               for s in range(trials))
    assert abs(hits / trials - expected) < 4 * np.sqrt(expected * (1 - expected) / trials)


def test_step_ceiling_raises():
    box = make_box(2, 3)
    cfg = E.Configuration(box, np.full(box.size, 3))
    with pytest.raises(E.EngineError):
        E.stabilize(cfg, StackSource(0, Params(2, 1.0)), max_steps=10)


@given(instances())
@settings(max_examples=60, deadline=None)
def test_abelian_any_order(inst):
    cfg, src = inst
    ref = E.stabilize(cfg, src)
    for order_seed in range(50):
        out = E.stabilize(cfg, src, order="random", order_seed=order_seed)
        assert np.array_equal(out.states, ref.states)
        assert np.array_equal(out.odometer, ref.odometer)
        assert out.killed == ref.killed


@given(instances(sleepers=False))
@settings(max_examples=30, deadline=None)
def test_abelian_weak_and_strong(inst):
    cfg, src = inst
    origin = cfg.box.origin
    for mode in (E.Weak([origin]), E.Strong([origin])):
        ref = E.stabilize(cfg, src, mode)
        for order_seed in range(10):
            assert ref.same_state(E.stabilize(cfg, src, mode, order="random", order_seed=order_seed))


@given(instances())
@settings(max_examples=60, deadline=None)
def test_conservation_with_killing(inst):
    cfg, src = inst
    before = cfg.particles()
    for out in (E.stabilize(cfg, src),
                E.stabilize(cfg, src, order="random", order_seed=3),
                E.acceptable_stabilize(cfg, src, order_seed=4)[0]):
        assert out.particles() + out.killed == before


@pytest.mark.parametrize("d,rho", [(1, 0.8), (2, 0.7), (3, 0.5)])
def test_odometer_monotone_in_volume(d, rho):
    rng = np.random.default_rng(d)
    params = Params(d, 1.0)
    for trial in range(20):
        big = make_box(d, 3)
        occupation = {x: int(rng.poisson(rho)) for x in big.sites()}
        src = StackSource(trial, params)
        prev = None
        for n in range(4):
            box = make_box(d, n)
            cfg = E.Configuration.from_sites(box, {x: c for x, c in occupation.items() if x in box})
            odom = E.stabilize(cfg, src).odometer
            if prev is not None:
                pbox, podom = prev
                for x in pbox.sites():
                    assert podom[pbox.index(x)] <= odom[box.index(x)]
            prev = (box, odom)


# ---------------------------------------------------------------- strong stabilization

def test_strong_single_site_box_has_one_chance():
    box = make_box(1, 0)
    for seed in range(200):
        rec = E.strong_stabilize_iterative(E.Configuration.delta(box), StackSource(seed, P1))
        assert rec.ch == 1 and rec.ach == 0 and len(rec.sleep_trials) == 1
        assert rec.final_config[(0,)] == E.EMPTY


def test_strong_rejects_sleepers():
    box = make_box(1, 1)
    cfg = E.Configuration.from_sites(box, {(0,): 1, (1,): E.SLEEPING})
    with pytest.raises(ValueError):
        E.strong_stabilize_iterative(cfg, StackSource(0, P1))


@given(instances(sleepers=False))
@settings(max_examples=60, deadline=None)
def test_strong_record_invariants(inst):
    cfg, src = inst
    rec = E.strong_stabilize_iterative(cfg, src)
    box = cfg.box
    assert rec.ach == max(rec.ch - 1, 0)
    assert len(rec.sleep_trials) == rec.ch
    if cfg[box.origin] >= 1:
        assert rec.ch >= 1
    final = rec.final_config
    assert final[box.origin] == E.EMPTY
    assert all(E.is_stable(final, x, E.Strong([box.origin])) for x in box.sites())
    assert final.particles() + final.killed == cfg.particles()
    if rec.first_success_iteration:
        assert rec.sleep_trials.index(True) + 1 == rec.first_success_iteration
    else:
        assert not any(rec.sleep_trials)


@given(instances(sleepers=False))
@settings(max_examples=60, deadline=None)
def test_strong_iterative_equals_generic_strong_and_shifted_weak(inst):
    cfg, src = inst
    origin = cfg.box.origin
    rec = E.strong_stabilize_iterative(cfg, src)
    generic = E.stabilize(cfg, src, E.Strong([origin]))
    assert rec.final_config.same_state(generic)
    # strong odometer of sigma == weak odometer of sigma + delta_0
    shifted = cfg.copy()
    shifted.states[cfg.box.origin_index] += 1
    weak = E.stabilize(shifted, src, E.Weak([origin]))
    assert np.array_equal(weak.odometer, rec.final_config.odometer)


@given(instances(sleepers=False, max_d=2))
@settings(max_examples=40, deadline=None)
def test_additional_chances_bounded_by_jumps_back(inst):
    cfg, src = inst
    box = cfg.box
    rec = E.strong_stabilize_iterative(cfg, src)
    weak0 = E.stabilize(cfg, src, E.Weak([box.origin]))
    back = (jump_count_into(src, box, box.origin, rec.final_config.odometer)
            - jump_count_into(src, box, box.origin, weak0.odometer))
    assert rec.ach <= back


@pytest.mark.parametrize("d,n,lam,initial", [
    (1, 1, 1.0, {(0,): 1}),
    (1, 2, 1.0, {(0,): 2, (1,): 1}),
    (2, 1, 1.0, {(0, 0): 1, (1, 0): 1}),
    (1, 2, 0.5, {(0,): 1, (-2,): 1}),
])
def test_chance_tail_against_chain_oracle(d, n, lam, initial):
    k_max = 3
    expected = oracles.chance_tail(d, n, lam, initial, k_max)
    box = make_box(d, n)
    cfg = E.Configuration.from_sites(box, initial)
    params = Params(d, lam)
    trials = 6000
    ch = np.array([E.strong_stabilize_iterative(cfg, StackSource(s, params)).ch for s in range(trials)])
    for k in range(1, k_max + 1):
        p = expected[k - 1]
        se = np.sqrt(max(p * (1 - p), 1e-12) / trials)
        assert abs(np.mean(ch >= k) - p) <= 4 * se + 1e-12


def test_chance_tail_oracle_closed_form():
    assert oracles.chance_tail(1, 1, 1.0, {(0,): 1}, 4) == pytest.approx([1, 1 / 4, 1 / 16, 1 / 64])
    assert oracles.chance_tail(1, 0, 1.0, {(0,): 1}, 3) == [1.0, 0.0, 0.0]


def test_sleep_trial_success_rate_is_p_s():
    params = Params(2, 0.6)
    box = make_box(2, 1)
    trials = [t for s in range(3000)
              for t in E.strong_stabilize_iterative(E.Configuration.delta(box), StackSource(s, params)).sleep_trials]
    p = np.mean(trials)
    assert abs(p - params.p_s) < 4 * np.sqrt(params.p_s * params.p_j / len(trials))


# ---------------------------------------------------------------- coupling

def test_coupling_single_site_sleep_first():
    box = make_box(1, 0)
    src = seed_where(P1, (0,), lambda i: i.is_sleep)
    occupied, rec = E.coupled_true_vs_strong(E.Configuration.delta(box), src)
    assert occupied and rec.first_success_iteration == 1


def test_coupling_no_success_means_empty_origin():
    box = make_box(2, 1)
    params = Params(2, 1.0)
    seen = 0
    for seed in range(300):
        occupied, rec = E.coupled_true_vs_strong(E.Configuration.delta(box), StackSource(seed, params))
        if not any(rec.sleep_trials):
            seen += 1
            assert not occupied
    assert seen > 0


@given(instances(sleepers=False, max_d=2, max_n=2))
@settings(max_examples=200, deadline=None)
def test_coupling_random_instances(inst):
    cfg, src = inst
    E.coupled_true_vs_strong(cfg, src)


# ---------------------------------------------------------------- fill

def test_fill_already_filled_is_unchanged():
    box = make_box(2, 2)
    U = box.ball()
    cfg = E.Configuration.from_sites(box, {x: 1 for x in U})
    res = E.fill_attempt(cfg, StackSource(1, Params(2, 1.0)), U)
    assert res.config.same_state(cfg) and res.fills and res.fraction == 1.0


def test_fill_empty_configuration():
    box = make_box(2, 2)
    res = E.fill_attempt(E.Configuration.empty(box), StackSource(1, Params(2, 1.0)), box.ball())
    assert res.filled == 0 and res.config.same_state(E.Configuration.empty(box))


@given(instances(sleepers=False))
@settings(max_examples=40, deadline=None)
def test_fill_keeps_initially_occupied_sites(inst):
    cfg, src = inst
    U = [x for x in cfg.box.sites() if cfg[x] >= 1][:3]
    res = E.fill_attempt(cfg, src, U)
    assert res.fills


# ---------------------------------------------------------------- five steps

def test_five_step_requires_filled_ball():
    box = make_box(2, 2)
    with pytest.raises(ValueError, match="fill"):
        E.five_step_experiment(E.Configuration.delta(box), StackSource(0, Params(2, 1.0)))
    with pytest.raises(ValueError):
        E.five_step_experiment(E.Configuration.delta(make_box(2, 0)), StackSource(0, Params(2, 1.0)))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_five_step_invariants_and_agreement(d):
    params = Params(d, 1.0)
    box = make_box(d, 2)
    rng = np.random.default_rng(d)
    for seed in range(300):
        occ = {x: int(rng.poisson(0.4)) for x in box.sites()}
        occ.update({x: 1 for x in box.ball()})
        tau = E.Configuration.from_sites(box, occ)
        src = StackSource(seed, params)
        final = {}
        rec = E.five_step_experiment(tau, src, final=final)
        assert rec.X in neighbors(box.origin)
        if rec.jump1:
            assert rec.tau1_X_sleeping
        if rec.jump1 or rec.jump2:
            assert rec.ch_ge_2
        ref = E.strong_stabilize_iterative(tau, src)
        assert ref.ch == rec.ch
        assert ref.final_config.same_state(final["config"])


# ---------------------------------------------------------------- least action

def test_least_action_no_wakes_equals_odometer():
    box = make_box(2, 2)
    cfg = E.Configuration(box, np.random.default_rng(3).integers(0, 3, box.size))
    src = StackSource(2, Params(2, 1.0))
    out, wakes = E.acceptable_stabilize(cfg, src, order_seed=1, wake_prob=0.0, max_wakes=0)
    assert wakes == 0
    assert np.array_equal(out.odometer, E.stabilize(cfg, src).odometer)


def test_least_action_wake_once_dominates():
    box = make_box(1, 2)
    cfg = E.Configuration.from_sites(box, {(0,): E.SLEEPING, (1,): 1})
    src = StackSource(5, P1)
    ref = E.stabilize(cfg, src).odometer
    out, wakes = E.acceptable_stabilize(cfg, src, order_seed=0, wake_prob=1.0, max_wakes=1)
    assert wakes == 1
    assert np.all(out.odometer >= ref)
    assert out.odometer.sum() >= ref.sum()


@given(instances(max_d=2, max_n=2))
@settings(max_examples=50, deadline=None)
def test_least_action_random_orders(inst):
    cfg, src = inst
    report = E.least_action_replay(cfg, src, trials=20, seed=1)
    assert report.ok, report.violations


def test_least_action_weak_mode():
    box = make_box(2, 2)
    cfg = E.Configuration(box, np.random.default_rng(8).integers(0, 3, box.size))
    report = E.least_action_replay(cfg, StackSource(4, Params(2, 1.0)), trials=20,
                                   mode=E.Weak([box.origin]))
    assert report.ok


# ---------------------------------------------------------------- snapshots

def test_snapshot_round_trip():
    box = make_box(2, 2)
    cfg = E.stabilize(E.Configuration(box, np.random.default_rng(1).integers(0, 3, box.size)),
                      StackSource(3, Params(2, 1.0)))
    text = E.dump_snapshot(cfg, seed=3, **{"lambda": 1.0})
    snap = json.loads(text)
    assert set(snap) >= {"d", "n", "seed", "states", "odometer"}
    assert sum(run for _, run in snap["states"]) == box.size
    back = E.Configuration.from_snapshot(snap)
    assert back.same_state(cfg)


def test_snapshot_rle():
    box = make_box(1, 2)
    cfg = E.Configuration(box, [0, 0, -1, 2, 2])
    assert cfg.to_snapshot(0)["states"] == [[0, 2], [-1, 1], [2, 2]]
