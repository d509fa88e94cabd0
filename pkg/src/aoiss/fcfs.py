"""Deliver-all FCFS variant driven by optimal-available speed scaling.

Every packet must reach the monitor, in generation order.  When packet ``i``
starts, the freshest delivered packet is ``i - 1``, so its deadline is
``t_{i-1} + D`` (``D - initial_aoi`` for the first packet).  At each event the
speed is the largest remaining-work density over pending deadlines, and the
earliest-deadline packet is served.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import InfeasibleInstanceError, Instance, Schedule
from .power import Segment

_RESIDUAL = 1e-12


def fcfs_deadlines(inst: Instance) -> list[float]:
    packets = inst.active
    out = []
    for i, p in enumerate(packets):
        out.append(inst.initial_deadline if i == 0 else packets[i - 1].gen_time + inst.D)
    return out


@dataclass
class FcfsState:
    now: float
    remaining_bits: dict[int, float] = field(default_factory=dict)
    deadlines: dict[int, float] = field(default_factory=dict)


def fcfs_speed(state: FcfsState, t: float | None = None) -> float:
    t = state.now if t is None else t
    pending = sorted(
        ((state.deadlines[pid], bits) for pid, bits in state.remaining_bits.items() if bits > 0),
        key=lambda x: x[0],
    )
    best = 0.0
    work = 0.0
    for k, (dl, bits) in enumerate(pending):
        if not (dl > t):
            raise InfeasibleInstanceError(f"pending deadline {dl} is not after t={t}", time=t)
        work += bits
        if k + 1 < len(pending) and pending[k + 1][0] == dl:
            continue
        best = max(best, work / (dl - t))
    return best


def run_fcfs(inst: Instance) -> Schedule:
    packets = list(inst.active)
    deadlines = fcfs_deadlines(inst)
    tol = inst.tol_feas
    st = FcfsState(now=0.0)
    queue: list[int] = []
    gi = 0
    segments = []
    while True:
        while gi < len(packets) and packets[gi].gen_time <= st.now:
            p = packets[gi]
            st.remaining_bits[p.id] = p.size
            st.deadlines[p.id] = deadlines[gi]
            queue.append(p.id)
            gi += 1
        if not queue:
            if gi >= len(packets):
                break
            st.now = packets[gi].gen_time
            continue
        speed = fcfs_speed(st)
        head = queue[0]
        rem = st.remaining_bits[head]
        t_done = st.now + rem / speed
        t_next = packets[gi].gen_time if gi < len(packets) else float("inf")
        end = min(t_done, t_next)
        segments.append(Segment(head, st.now, end, speed))
        left = rem - speed * (end - st.now)
        if end == t_done or left <= _RESIDUAL * inst.packets[head].size:
            if end > st.deadlines[head] + tol:
                raise InfeasibleInstanceError(
                    f"packet {head} completes at {end}, after its deadline {st.deadlines[head]}",
                    time=st.deadlines[head],
                    packet_id=head,
                )
            del st.remaining_bits[head]
            queue.pop(0)
        else:
            st.remaining_bits[head] = left
        st.now = end
    return Schedule(tuple(segments), inst)
