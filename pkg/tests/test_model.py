import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoiss.bounds import example_one
from aoiss.greedy import run_greedy
from aoiss.model import (
    Instance,
    Schedule,
    ScheduleError,
    check_feasible,
    check_trajectory,
    deadline_at,
    fresh_packets,
    trajectory_from_schedule,
    validate_instance,
)
from aoiss.offline import solve_offline
from aoiss.power import PowerFunction, Segment
from conftest import seeded_instance


def codes(inst):
    return {i.code for i in validate_instance(inst)}


def test_validate_examples():
    assert codes(Instance.from_times([0.5, 3.0, 5.5, 7.9], D=3, T=9)) == set()
    assert "gap" in codes(Instance.from_times([0.5, 3.5], D=3, T=5))
    assert "initial_aoi" in codes(Instance.from_times([0.5], D=3, T=2, initial_aoi=3))
    assert "order" in codes(Instance.from_times([1, 1], D=3, T=2))
    assert "size" in codes(Instance.from_times([1], D=3, T=2, sizes=[0]))
    assert "D" in codes(Instance.from_times([1], D=0, T=2))
    assert "first" in codes(Instance.from_times([2.5], D=3, T=4, initial_aoi=1))
    assert "last" in codes(Instance.from_times([0.5], D=3, T=4))


def test_json_roundtrip(tmp_path):
    inst = Instance.from_times([0.1, 0.7], D=2, T=2.5, sizes=[1, 0.5], initial_aoi=0.3)
    path = tmp_path / "i.json"
    inst.dump(path)
    assert Instance.load(path) == inst
    assert set(json.loads(path.read_text())) == {"D", "T", "initial_aoi", "epsilon", "packets"}


def test_empty_trajectory():
    inst = Instance.from_times([], D=2, T=1, initial_aoi=0.5)
    traj = trajectory_from_schedule(inst, Schedule((), inst))
    assert traj.aoi_at(0.7) == pytest.approx(1.2)
    assert deadline_at(traj, 0.0) == 1.5
    assert check_feasible(inst, Schedule((), inst))
    late = Instance.from_times([], D=2, T=3, initial_aoi=0.5)
    res = check_feasible(late, Schedule((), late))
    assert not res and res.violation_time == 1.5


def test_example_one_trajectory():
    inst = example_one()
    traj = trajectory_from_schedule(inst, run_greedy(inst))
    assert [dv.time for dv in traj.deliveries] == pytest.approx([2 / 3, 4 / 3, 2])
    assert [dv.gen_time for dv in traj.deliveries] == pytest.approx([0, 1e-3, 1 + 1e-3])
    assert check_feasible(inst, run_greedy(inst))


def test_single_delivery_jump():
    inst = Instance.from_times([0.5], D=3, T=2)
    traj = trajectory_from_schedule(inst, Schedule((Segment(0, 0.5, 1.5, 1.0),), inst))
    assert traj.aoi_at(1.5 - 1e-12) == pytest.approx(1.5)
    assert traj.aoi_at(1.5) == pytest.approx(1.0)


def test_deadline_examples():
    inst = Instance.from_times([0.0, 1.0], D=4, T=5, initial_aoi=2)
    traj = trajectory_from_schedule(inst, Schedule((Segment(1, 1.0, 2.0, 1.0),), inst))
    assert deadline_at(traj, 0) == 2
    assert deadline_at(traj, 2.0) == 5
    with pytest.raises(ValueError):
        deadline_at(traj, -1)


def test_freshness_and_tie_rule():
    D = 4.0
    inst = Instance.from_times([0.0, D / 4], D=D, T=5)
    traj = trajectory_from_schedule(inst, Schedule((), inst))
    assert fresh_packets(inst, traj, D / 4) == [0, 1]
    assert fresh_packets(inst, traj, 0.0) == [0]
    sched = Schedule((Segment(1, D / 4, D / 2, 4 / D),), inst)
    traj = trajectory_from_schedule(inst, sched)
    assert fresh_packets(inst, traj, D / 2) == []
    late = Instance.from_times([1.0], D=D, T=5)
    assert fresh_packets(late, trajectory_from_schedule(late, Schedule((), late)), 0.5) == []


def test_stale_delivery_flagged():
    inst = Instance.from_times([0.0, 0.5], D=3, T=2)
    sched = Schedule((Segment(1, 0.5, 1.0, 2.0), Segment(0, 1.0, 2.0, 1.0)), inst)
    traj = trajectory_from_schedule(inst, sched)
    assert [dv.fresh for dv in traj.deliveries] == [True, False]
    assert traj.mu_at(2.0) == 0.5


def test_schedule_validation():
    inst = Instance.from_times([1.0], D=3, T=2)
    with pytest.raises(ScheduleError):
        Schedule((Segment(0, 0.5, 1.5, 1.0),), inst).validate()
    with pytest.raises(ScheduleError):
        Schedule((Segment(0, 1.0, 2.0, 2.0),), inst).validate()
    # partial transmissions are wasted, not deliveries
    part = Schedule((Segment(0, 1.0, 1.5, 1.0),), inst)
    assert trajectory_from_schedule(inst, part).deliveries == ()


def test_delivery_exactly_at_deadline_is_allowed():
    inst = Instance.from_times([0.5], D=2, T=2.4)
    sched = Schedule((Segment(0, 0.5, 2.0, 1 / 1.5),), inst)
    assert check_feasible(inst, sched)
    assert not check_feasible(inst, Schedule((Segment(0, 0.5, 2.01, 1 / 1.51),), inst))


@given(seed=st.integers(0, 2**32 - 1))
def test_feasibility_matches_deadline_process(seed):
    # check_feasible agrees with d(t) > t sampled densely over [0, T]
    inst = seeded_instance(seed, n_max=6)
    P = PowerFunction.polynomial(2)
    for sched in (run_greedy(inst), solve_offline(inst, P).schedule, Schedule((), inst)):
        traj = trajectory_from_schedule(inst, sched)
        verdict = bool(check_trajectory(traj, inst.T, inst.tol_feas))
        events = [dv.time for dv in traj.deliveries] + [inst.T]
        probes = [e - 1e-9 * inst.D for e in events] + [inst.T]
        dense = all(traj.deadline_at(t) > t - 2e-9 * inst.D for t in probes if 0 <= t <= inst.T)
        assert verdict == dense


@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0, 1))
def test_feasible_schedules_deliver_before_every_deadline(seed, frac):
    # if d(t) <= T, a fresh delivery happens in [t, d(t))
    inst = seeded_instance(seed, n_max=6)
    for sched in (run_greedy(inst), solve_offline(inst, PowerFunction.polynomial(2)).schedule):
        traj = trajectory_from_schedule(inst, sched)
        t = frac * inst.T
        d = traj.deadline_at(t)
        if d <= inst.T:
            assert any(t <= dv.time <= d + inst.tol_feas for dv in traj.fresh_deliveries)


@given(seed=st.integers(0, 2**32 - 1))
def test_mu_steps_only_at_fresh_deliveries(seed):
    inst = seeded_instance(seed, n_max=6)
    traj = trajectory_from_schedule(inst, run_greedy(inst))
    mus = [traj.mu0] + [dv.gen_time for dv in traj.fresh_deliveries]
    assert mus == sorted(mus) and len(set(mus)) == len(mus)
    for dv in traj.fresh_deliveries:
        assert traj.mu_at(dv.time) == dv.gen_time
