import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aoiss.bounds import example_one, step_two, universal_lower_bound
from aoiss.greedy import run_greedy
from aoiss.model import InfeasibleInstanceError, Instance, Schedule, check_feasible
from aoiss.offline import (
    EnumerationCapError,
    Job,
    StructuralError,
    candidate_chains,
    chain_jobs,
    decompose,
    descend_chain,
    frame_energy_lower_bound,
    grid_oracle,
    solve_chain,
    solve_offline,
    verify_structure,
    yds_speeds,
)
from aoiss.power import PowerFunction, Segment, schedule_energy, segment_energy
from conftest import seeded_instance


def test_example_one(P2):
    inst = example_one()
    sol = solve_offline(inst, P2)
    assert sol.decomposition.transmitted == (2,)
    (seg,) = sol.schedule.segments
    assert seg.start == pytest.approx(1.001) and seg.end == pytest.approx(2.0)
    assert sol.energy == pytest.approx(1 / 0.999, rel=1e-9)
    assert grid_oracle(inst, P2, 4000) == pytest.approx(sol.energy, rel=0.01)


def test_step_two(P2):
    sol = solve_offline(step_two(delta=1e-3), P2)
    assert sol.decomposition.transmitted == (2,)
    assert sol.energy == pytest.approx(1 / 1.999, rel=1e-9)
    rep = verify_structure(sol.schedule, sol.decomposition)
    assert rep.ok


def test_nothing_needed_before_horizon(P2):
    inst = Instance.from_times([0.1, 0.5], D=3, T=2, initial_aoi=0.5)
    sol = solve_offline(inst, P2)
    assert sol.energy == 0 and sol.schedule.segments == ()
    assert list(candidate_chains(inst)) == [()]
    assert grid_oracle(inst, P2, 200) == 0


def test_single_mandatory_packet(P2):
    inst = Instance.from_times([0.4], D=2, T=2.2)
    assert grid_oracle(inst, P2, 4000) == pytest.approx(segment_energy(P2, 1, 1.6), rel=1e-9)
    assert solve_offline(inst, P2).energy == pytest.approx(segment_energy(P2, 1, 1.6), rel=1e-9)


def test_cap_and_infeasible(P2):
    inst = Instance.from_times(np.arange(1, 17) * 0.5, D=2, T=8.6)
    with pytest.raises(EnumerationCapError):
        solve_offline(inst, P2)
    assert solve_offline(inst, P2, cap=16).energy > 0
    with pytest.raises(InfeasibleInstanceError):
        solve_offline(Instance.from_times([2.5], D=2, T=3), P2)


def test_yds_agreeable_example():
    jobs = [Job(0, 0.0, 1.0, 1.0), Job(1, 0.5, 3.0, 1.0)]
    assert yds_speeds(jobs) == pytest.approx([1.0, 0.5])
    # a shared busy block runs at one speed
    jobs = [Job(0, 0.0, 1.0, 1.0), Job(1, 0.2, 1.5, 2.0)]
    assert yds_speeds(jobs) == pytest.approx([2.0, 2.0])


def test_lexicographic_tie_break(P2):
    # two mirror-image chains with identical cost: the first in enumeration order wins
    inst = Instance.from_times([0.5, 1.5], D=2, T=2.4)
    sol = solve_offline(inst, P2)
    chains = [c for c in candidate_chains(inst)]
    costs = {c: solve_chain(P2, chain_jobs(inst, c))[2] for c in chains}
    best = min(costs.values())
    assert sol.decomposition.transmitted == min(c for c, e in costs.items() if math.isclose(e, best, rel_tol=1e-12))


def test_verify_structure_catches_broken_schedule(P2):
    inst = step_two(delta=1e-3)
    sol = solve_offline(inst, P2)
    seg = sol.schedule.segments[0]
    # same bits, but paused on [start + 0.5, start + 0.7) and finished faster
    rest = (1.0 - 0.5 * seg.speed) / (seg.end - seg.start - 0.7)
    split = Schedule(
        (Segment(seg.packet_id, seg.start, seg.start + 0.5, seg.speed), Segment(seg.packet_id, seg.start + 0.7, seg.end, rest)),
        inst,
    )
    rep = verify_structure(split, sol.decomposition, raise_on_failure=False)
    assert rep.violations["constant_speed"] and rep.violations["no_preemption"]
    with pytest.raises(StructuralError):
        verify_structure(split, sol.decomposition)


def test_property_six_skipped_for_unequal_sizes(P2):
    inst = Instance.from_times([0.2, 1.0], D=2, T=2.5, sizes=[1.0, 0.5])
    sol = solve_offline(inst, P2)
    rep = verify_structure(sol.schedule, sol.decomposition, run_greedy(inst))
    assert "fast_greedy_covered" in rep.skipped


def test_example_one_property_six_vacuous(P2):
    inst = example_one()
    sol = solve_offline(inst, P2)
    rep = verify_structure(sol.schedule, sol.decomposition, run_greedy(inst))
    assert rep.ok and not rep.skipped


def test_decomposition_json(P2):
    sol = solve_offline(example_one(), P2)
    js = sol.decomposition.to_json()
    assert js == {"chosen": [2], "frames": [[0.0, 2.0], [2.0, 3.001]], "periods": [[1.001, 3.001]]}
    assert decompose(example_one(), (2,)) == sol.decomposition


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
@given(seed=st.integers(0, 2**32 - 1))
def test_descent_restart_invariance(alpha, seed):
    inst = seeded_instance(seed, n_max=6)
    P = PowerFunction.polynomial(alpha)
    sol = solve_offline(inst, P)
    if not sol.decomposition.transmitted:
        return
    jobs = chain_jobs(inst, sol.decomposition.transmitted)
    energies = [descend_chain(P, jobs, rng=np.random.default_rng(r))[1] for r in range(5)]
    for e in energies:
        assert e == pytest.approx(sol.energy, rel=1e-6)


@given(seed=st.integers(0, 2**32 - 1))
def test_descent_method_matches(seed):
    inst = seeded_instance(seed, n_max=5)
    P = PowerFunction.exponential()
    assert solve_offline(inst, P, method="descent").energy == pytest.approx(solve_offline(inst, P).energy, rel=1e-6)


@given(seed=st.integers(0, 2**32 - 1))
def test_offline_sandwich_and_structure(seed):
    inst = seeded_instance(seed, n_max=8)
    P = PowerFunction.polynomial(2)
    sol = solve_offline(inst, P)
    greedy = run_greedy(inst)
    assert check_feasible(inst, sol.schedule)
    assert schedule_energy(P, sol.schedule) == pytest.approx(sol.energy, rel=1e-12, abs=1e-15)
    assert sol.energy <= schedule_energy(P, greedy) * (1 + 1e-9)
    rep = verify_structure(sol.schedule, sol.decomposition, greedy)
    assert rep.ok
    m = len(sol.decomposition.transmitted)
    assert frame_energy_lower_bound(P, inst, greedy, m) <= sol.energy * (1 + 1e-9)


@given(seed=st.integers(0, 2**32 - 1))
def test_grid_oracle_brackets_solver(seed):
    inst = seeded_instance(seed, n_max=5)
    P = PowerFunction.polynomial(3)
    exact = solve_offline(inst, P).energy
    coarse = grid_oracle(inst, P, 400)
    assert exact * (1 - 1e-9) <= coarse
    assert grid_oracle(inst, P, 2000) <= exact * 1.01 + 1e-12


def test_chain_enumeration_respects_deadlines():
    inst = Instance.from_times([0.5, 1.4, 2.2, 3.1], D=2, T=4)
    for chain in candidate_chains(inst):
        prev = inst.initial_deadline
        for pid in chain:
            t = inst.packets[pid].gen_time
            assert t < prev
            prev = t + inst.D
        assert prev > inst.T
