"""Event queue, time advance, Blue supremacy and pre-emption"""
from itertools import combinations_with_replacement

import numpy as np
import pytest

from src.actions import AgentAction
from src.events import (
    EventQueue, EventStatus, UNTARGETED_BLUE, advance_time, enforce_blue_cap, heartbeat,
    normalize_dt, preempt, resolve_conflicts, sample_sojourn,
)
from src.exceptions import QueueIdleError
from src.schemas import EffectKind, Team


def pairwise_nullified(events):
    """Quadratic reference: a Red event dies if any targeted Blue event hits its node"""
    out = set()
    for red in events:
        if red.team != Team.RED or red.kind == EffectKind.NO_OP:
            continue
        for blue in events:
            if (blue.team == Team.BLUE and blue.kind not in UNTARGETED_BLUE
                    and blue.target == red.target):
                out.add(id(red))
    return out


def enqueue(events):
    queue = EventQueue()
    for e in events:
        queue.push(e)
    return queue


@pytest.mark.parametrize("dt,expected", [(5.0, 0.1), (50.0, 1.0), (75.0, 1.0), (0.0, 0.0)])
def test_normalize_dt(dt, expected):
    assert normalize_dt(dt) == pytest.approx(expected)


def test_advance_time_jumps_to_nearest_completion(make_event):
    queue = enqueue([make_event("IsolateHost", 3, completion=c) for c in (12.0, 7.0, 30.0)])
    jump = advance_time(queue, 5.0)
    assert jump.t_next == 7.0
    assert jump.dt_norm == pytest.approx(0.04)
    assert not jump.clipped


def test_advance_time_clips_long_gaps(make_event):
    queue = enqueue([make_event("IsolateHost", 3, completion=80.0)])
    jump = advance_time(queue, 10.0)
    assert jump.dt_norm == 1.0
    assert jump.clipped


def test_advance_time_on_empty_queue():
    with pytest.raises(QueueIdleError):
        advance_time(EventQueue(), 3.0)


def test_pop_maturing_returns_tick_in_enqueue_order(make_event):
    a = make_event("ExploitEternalBlue", 4, completion=6.0)
    b = make_event("IsolateHost", 4, completion=6.0)
    c = make_event("IsolateHost", 5, completion=9.0)
    queue = enqueue([a, b, c])
    assert queue.pop_maturing(6.0) == [a, b]
    assert queue.pending() == [c]
    assert queue.pop_maturing(6.0) == []


def test_lazy_removal_skips_dead_events(make_event):
    a = make_event("ExploitEternalBlue", 4, completion=2.0)
    b = make_event("ExploitEternalBlue", 5, completion=3.0)
    queue = enqueue([a, b])
    queue.mark(a, EventStatus.ABORTED)
    assert queue.peek() is b
    assert len(queue) == 1


def test_active_blue_tracks_pending_blue(make_event):
    queue = EventQueue()
    blue = queue.push(make_event("IsolateHost", 3))
    queue.push(make_event("ExploitEternalBlue", 4))
    assert queue.active_blue == 1
    queue.mark(blue, EventStatus.COMPLETED)
    queue.mark(blue, EventStatus.COMPLETED)
    assert queue.active_blue == 0


def test_same_node_collision_blue_wins(make_event):
    red = make_event("ExploitEternalBlue", 4, completion=6.0)
    blue = make_event("IsolateHost", 4, completion=6.0)
    enqueue([red, blue])
    applied, nullified = resolve_conflicts([red, blue])
    assert applied == [blue]
    assert nullified == [red]
    assert red.status == EventStatus.PENDING


def test_untargeted_blue_defends_nothing(make_event):
    red = make_event("ExploitEternalBlue", 0)
    enqueue([red, make_event("RotateKerberos", 0), make_event("BlueNoOp", 0)])
    _, nullified = resolve_conflicts([red])
    assert nullified == []


def test_system_then_blue_then_red(make_event):
    red = make_event("ExploitEternalBlue", 4, completion=6.0)
    blue = make_event("IsolateHost", 5, completion=6.0)
    tick = heartbeat(6.0)
    enqueue([red, blue, tick])
    applied, _ = resolve_conflicts([red, blue, tick])
    assert applied == [tick, blue, red]


@pytest.mark.parametrize("n_blue", range(0, 9, 2))
@pytest.mark.parametrize("n_red", range(0, 9, 2))
def test_resolution_matches_pairwise_reference(make_event, n_blue, n_red):
    nodes = range(3)
    for blue_targets in combinations_with_replacement(nodes, n_blue):
        for red_targets in combinations_with_replacement(nodes, n_red):
            events = ([make_event("IsolateHost", t) for t in blue_targets]
                      + [make_event("ExploitEternalBlue", t) for t in red_targets])
            enqueue(events)
            applied, nullified = resolve_conflicts(events)
            assert {id(e) for e in nullified} == pairwise_nullified(events)
            assert len(applied) + len(nullified) == len(events)


def test_resolution_random_mixed_kinds(make_event):
    rng = np.random.default_rng(0)
    blue_names = ["IsolateHost", "CleanupHost", "BlueNoOp", "RotateKerberos", "PatchService"]
    red_names = ["ExploitEternalBlue", "DumpLSASS", "PassTheTicket", "RedNoOp"]
    for _ in range(300):
        events = []
        for _ in range(rng.integers(0, 12)):
            pool = blue_names if rng.random() < 0.5 else red_names
            events.append(make_event(pool[rng.integers(len(pool))], int(rng.integers(0, 4))))
        enqueue(events)
        _, nullified = resolve_conflicts(events)
        assert {id(e) for e in nullified} == pairwise_nullified(events)


def test_blue_cap_accepts_in_agent_order():
    requests = [("blue_vault", AgentAction(16, 7)), ("blue_corp", AgentAction(19, 3)),
                ("blue_corp", AgentAction(16, 3))]
    accepted, dropped = enforce_blue_cap(0, requests, cap=2)
    assert accepted == [("blue_corp", AgentAction(16, 3)), ("blue_corp", AgentAction(19, 3))]
    assert dropped == [("blue_vault", AgentAction(16, 7))]


def test_blue_cap_when_full():
    accepted, dropped = enforce_blue_cap(2, [("blue_dmz", AgentAction(16, 0))], cap=2)
    assert accepted == []
    assert len(dropped) == 1
    assert enforce_blue_cap(0, [], cap=2) == ([], [])


def test_preempt_aborts_red_work_through_defended_node(make_event):
    into = make_event("ExploitEternalBlue", 4, completion=9.0)
    out_of = make_event("PassTheTicket", 6, completion=9.0, origin=4)
    elsewhere = make_event("ExploitEternalBlue", 5, completion=9.0)
    defense = make_event("IsolateHost", 4, completion=3.0)
    queue = enqueue([into, out_of, elsewhere, defense])
    queue.mark(defense, EventStatus.COMPLETED)

    aborted = preempt(queue, defense)
    assert aborted == [into, out_of]
    assert into.status == out_of.status == EventStatus.ABORTED
    assert elsewhere.status == EventStatus.PENDING
    assert into.energy_committed == 4
    assert queue.pending() == [elsewhere]


def test_preempt_without_matches(make_event):
    red = make_event("ExploitEternalBlue", 5)
    defense = make_event("CleanupHost", 4)
    queue = enqueue([red, defense])
    assert preempt(queue, defense) == []
    assert red.status == EventStatus.PENDING


def test_sojourn_without_jitter_is_exact(registry):
    rng = np.random.default_rng(0)
    assert sample_sojourn(registry.named("ExploitEternalBlue"), rng, jitter=0.0) == 6.0
    assert sample_sojourn(registry.named("IsolateHost"), rng, jitter=0.0) == 1.0


def test_sojourn_mean_is_base_duration(registry):
    rng = np.random.default_rng(1)
    spec = registry.named("ExploitEternalBlue")
    samples = np.array([sample_sojourn(spec, rng, jitter=0.2) for _ in range(100_000)])
    assert samples.min() >= 6.0 * 0.8
    assert samples.max() <= 6.0 * 1.2
    assert samples.mean() == pytest.approx(6.0, rel=0.01)


@pytest.mark.slow
def test_resolution_matches_pairwise_reference_exhaustively(make_event):
    nodes = range(3)
    for n_blue in range(9):
        for n_red in range(9):
            for blue_targets in combinations_with_replacement(nodes, n_blue):
                for red_targets in combinations_with_replacement(nodes, n_red):
                    events = ([make_event("IsolateHost", t) for t in blue_targets]
                              + [make_event("ExploitEternalBlue", t) for t in red_targets])
                    enqueue(events)
                    _, nullified = resolve_conflicts(events)
                    assert {id(e) for e in nullified} == pairwise_nullified(events)

    rng = np.random.default_rng(1)
    for _ in range(1000):
        events = [make_event("CleanupHost" if rng.random() < 0.5 else "ExploitBlueKeep",
                             int(rng.integers(0, 20)))
                  for _ in range(rng.integers(10, 40))]
        enqueue(events)
        _, nullified = resolve_conflicts(events)
        assert {id(e) for e in nullified} == pairwise_nullified(events)
