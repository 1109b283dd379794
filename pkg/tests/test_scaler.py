import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifecycle_sim.fsm import DemandParams, FsmMode, IllegalTransition, ServiceState
from lifecycle_sim.scaler import (
    INDICATOR_PER_TIME,
    ScalerConfig,
    StabilityWindow,
    calc_temp_stability,
    scale_service_step,
    update_service,
)
from oracle_alg1 import Algorithm1

S = ServiceState


class Inst:
    def __init__(self, cfg, state=S.STORED):
        self.id = 0
        self.state = state
        self.window = cfg.new_window()
        self.last_trigger = None


def win(**kw):
    base = dict(delta_t=600, i_r_min=1, i_r_max=250, t=0.0, i_r=5.0)
    base.update(kw)
    return StabilityWindow(**base)


def test_window_accumulates():
    w = calc_temp_stability(win(), 350, 10)
    assert (w.k, w.n, w.i_r) == (350, 1, 5.0)


def test_window_closes_with_mean():
    w = calc_temp_stability(win(k=300, n=3), 100, 601)
    assert (w.i_r, w.k, w.n, w.t) == (100, 0, 0, 601)


def test_empty_window_gives_zero():
    assert calc_temp_stability(win(), 0, 601).i_r == 0


def test_per_time_indicator():
    w = calc_temp_stability(win(k=1200, n=3, indicator=INDICATOR_PER_TIME), 0, 601)
    assert w.i_r == 2.0


def test_window_rejects_past_sample():
    with pytest.raises(ValueError):
        calc_temp_stability(win(t=100.0), 1, 50)


def test_first_sample_seeds_indicator():
    w = calc_temp_stability(StabilityWindow(600, 1, 250), 42, 7)
    assert w.t == 7 and w.i_r == 42 and w.n == 1


P = DemandParams(u_min=5, u_max=20, sigma=1, f_d=1)


def test_update_service_guards():
    assert update_service(0, win(i_r=100), S.DISCOVERABLE, P).next_state is S.FINAL
    d = update_service(20, win(i_r=100), S.DISCOVERABLE, P)
    assert (d.next_state, d.spawn, d.guard) == (S.DISCOVERABLE, True, 3)
    d = update_service(5, win(i_r=100), S.DISCOVERABLE, P)
    assert (d.next_state, d.spawn) == (S.UNDISCOVERABLE, False)
    with pytest.raises(IllegalTransition):
        update_service(5, win(), S.FINAL, P)


def test_guard_one_wins_over_max():
    w = win(i_r=0.5)   # below i_r_min
    assert update_service(25, w, S.DISCOVERABLE, P).guard == 1


def test_step_fresh_instance():
    cfg = ScalerConfig(DemandParams(u_min=2, u_max=20, sigma=1, f_d=15))
    inst = Inst(cfg)
    d = scale_service_step(inst, 75, 0, cfg)
    assert d.guard == 2 and inst.state is S.DISCOVERABLE
    scale_service_step(inst, 0, 5, cfg)
    assert inst.state is S.FINAL


def test_worked_example_demand():
    # r_req 300 at f_d 15 gives U = 20, which reaches u_max = 20
    cfg = ScalerConfig(DemandParams(u_min=5, u_max=20, sigma=1, f_d=15))
    inst = Inst(cfg, S.DISCOVERABLE)
    d = scale_service_step(inst, 300, 0, cfg)
    assert d.spawn and inst.state is S.DISCOVERABLE


def test_sustained_high_rate_spawns_after_window():
    # U stays in the dead band, so only the windowed indicator can trigger a spawn
    cfg = ScalerConfig(DemandParams(u_min=3, u_max=20, sigma=1, f_d=100), i_r_min=10, i_r_max=250)
    inst = Inst(cfg)
    scale_service_step(inst, 100, 0, cfg)
    spawns = []
    for now in range(5, 700, 5):
        d = scale_service_step(inst, 350, now, cfg)
        spawns.append((now, d.spawn))
    first = next(t for t, s in spawns if s)
    assert first > 600
    assert inst.window.i_r >= 250


def test_strict_mode_step_cannot_skip_to_final():
    cfg = ScalerConfig(fsm_mode=FsmMode.STRICT)
    inst = Inst(cfg, S.DISCOVERABLE)
    scale_service_step(inst, 0, 0, cfg)
    assert inst.state is S.DISCOVERABLE


def _random_sequence(rng: random.Random):
    n = rng.randint(1, 500)
    now = rng.uniform(0, 50)
    seq = []
    level = rng.choice([0, 5, 20, 80, 200, 400])
    for _ in range(n):
        now += rng.choice([1, 5, 5, 5, 60, 300])
        if rng.random() < 0.1:
            level = rng.choice([0, 1, 5, 20, 80, 200, 400])
        seq.append((now, max(0.0, level + rng.uniform(-level / 2, level / 2))))
    return seq


def replay_matches_oracle(seed: int) -> bool:
    rng = random.Random(seed)
    u_min = rng.uniform(0.5, 10)
    sigma = rng.uniform(0, 3)
    u_max = u_min + sigma + rng.uniform(0.5, 40)
    f_d = rng.choice([1, 5, 15])
    delta_t = rng.choice([60, 300, 600])
    ir_min = rng.uniform(0, 5)
    ir_max = ir_min + rng.uniform(1, 300)
    seq = _random_sequence(rng)
    oracle = Algorithm1(f_d, delta_t, u_min, u_max, sigma, ir_min, ir_max).scale_service(seq)
    cfg = ScalerConfig(DemandParams(u_min, u_max, sigma, f_d), delta_t, ir_min, ir_max)
    inst = Inst(cfg)
    ours = []
    names = {S.DISCOVERABLE: "DIS", S.UNDISCOVERABLE: "UND", S.FINAL: "FIN"}
    for now, r in seq:
        if inst.state is S.FINAL:
            break
        d = scale_service_step(inst, r, now, cfg)
        ours.append((names[d.next_state], d.spawn))
    return ours == oracle


def test_oracle_replay_sample():
    assert all(replay_matches_oracle(s) for s in range(20))


@given(st.lists(st.tuples(st.integers(1, 30), st.floats(0, 500)), max_size=80))
def test_replay_determinism(steps):
    cfg = ScalerConfig()
    runs = []
    for _ in range(2):
        inst, now, out = Inst(cfg), 0, []
        for dt, r in steps:
            if inst.state is S.FINAL:
                break
            now += dt
            out.append(scale_service_step(inst, r, now, cfg))
        runs.append(out)
    assert runs[0] == runs[1]


@given(st.lists(st.floats(1, 500), min_size=1, max_size=40))
def test_zero_demand_finalizes_next_step(rates):
    cfg = ScalerConfig()
    inst = Inst(cfg)
    now = 0
    for r in rates:
        if inst.state is S.FINAL:
            return
        scale_service_step(inst, r, now, cfg)
        now += 5
    if inst.state is not S.FINAL:
        scale_service_step(inst, 0, now, cfg)
        assert inst.state is S.FINAL


def test_config_violations():
    assert ScalerConfig(DemandParams(f_d=1), delta_t=5).violations()
    assert ScalerConfig(i_r_min=10, i_r_max=5).violations()
    assert ScalerConfig().violations() == []
