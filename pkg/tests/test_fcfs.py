import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoiss.fcfs import FcfsState, fcfs_deadlines, fcfs_speed, run_fcfs
from aoiss.model import InfeasibleInstanceError, Instance, trajectory_from_schedule
from aoiss.offline import grid_oracle
from aoiss.power import PowerFunction, schedule_energy, segment_energy
from conftest import seeded_instance


def test_speed_examples():
    assert fcfs_speed(FcfsState(0.0, {0: 1.0}, {0: 2.0})) == 0.5
    assert fcfs_speed(FcfsState(0.5, {0: 0.75, 1: 1.0}, {0: 2.0, 1: 2.0})) == pytest.approx(7 / 6)
    assert fcfs_speed(FcfsState(1.0)) == 0
    with pytest.raises(InfeasibleInstanceError):
        fcfs_speed(FcfsState(2.0, {0: 1.0}, {0: 2.0}))


def test_single_packet(P2):
    inst = Instance.from_times([0.0], D=2, T=1.5)
    sched = run_fcfs(inst)
    assert [(s.start, s.end, s.speed) for s in sched.segments] == [(0.0, 2.0, 0.5)]
    assert schedule_energy(P2, sched) == segment_energy(P2, 1, 2)


def test_two_packets(P2):
    inst = Instance.from_times([0.0, 0.5], D=2, T=2.4)
    assert fcfs_deadlines(inst) == [2.0, 2.0]
    sched = run_fcfs(inst)
    assert schedule_energy(P2, sched) == pytest.approx(13 / 6, abs=1e-12)
    assert grid_oracle(inst, P2, 4000, deliver_all=True) == pytest.approx(2.0, rel=1e-9)


def test_unmeetable_deadline_reports_packet():
    inst = Instance.from_times([2.5], D=2, T=3)
    with pytest.raises(InfeasibleInstanceError):
        run_fcfs(inst)


@given(seed=st.integers(0, 2**32 - 1))
def test_fcfs_invariants(seed):
    inst = seeded_instance(seed, n_max=8)
    sched = run_fcfs(inst)
    dl = dict(zip([p.id for p in inst.active], fcfs_deadlines(inst)))
    traj = trajectory_from_schedule(inst, sched)
    assert [dv.packet_id for dv in traj.deliveries] == [p.id for p in inst.active]
    for dv in traj.deliveries:
        assert dv.time <= dl[dv.packet_id] + inst.tol_feas
    gens = {p.gen_time for p in inst.active}
    ends = {dv.time for dv in traj.deliveries}
    for a, b in zip(sched.segments, sched.segments[1:]):
        if a.speed != b.speed:
            assert a.end in gens or a.end in ends


@given(seed=st.integers(0, 2**32 - 1))
def test_fcfs_within_alpha_alpha(seed):
    inst = seeded_instance(seed, n_max=4)
    for alpha in (1.5, 2.0):
        P = PowerFunction.polynomial(alpha)
        e = schedule_energy(P, run_fcfs(inst))
        assert e <= alpha**alpha * grid_oracle(inst, P, 400, deliver_all=True)
