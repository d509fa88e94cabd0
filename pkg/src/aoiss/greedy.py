"""Non-preemptive greedy policy.

Whenever the node is idle, the running deadline ``d(t)`` is within the
horizon and a fresh packet exists, the latest fresh packet is sent at the
constant speed ``max(w / (d(t) - t), 3 w / D)``.  The floor keeps every
transmission at most ``D / 3`` long; the first term guarantees delivery
before the deadline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .causal import IDLE, Action, PolicyView
from .model import InfeasibleInstanceError, Instance, Schedule
from .power import Segment

FLOOR_FACTOR = 3.0


def greedy_speed(W: float, D: float, d: float, t: float, floor_factor: float = FLOOR_FACTOR) -> float:
    if not (d > t):
        raise InfeasibleInstanceError(f"deadline {d} already passed at t={t}", time=t)
    return max(W / (d - t), floor_factor * W / D)


@dataclass
class GreedyState:
    now: float
    busy_until: float | None
    mu: float
    mu_is_initial: bool
    deliveries: list = field(default_factory=list)
    pending: list = field(default_factory=list)


def run_greedy(inst: Instance, strict_gate: bool = False) -> Schedule:
    """Simulate the greedy policy on ``inst``.

    ``strict_gate`` switches the transmit condition from ``d(t) <= T`` to
    ``d(t) < T``.
    """
    packets = sorted(inst.active, key=lambda p: p.gen_time)
    D, T = inst.D, inst.T
    st = GreedyState(now=0.0, busy_until=None, mu=inst.mu0, mu_is_initial=True)
    gi = 0
    segments = []
    while True:
        # completion first, then generations up to now, then the decision
        while gi < len(packets) and packets[gi].gen_time <= st.now:
            st.pending.append(packets[gi])
            gi += 1
        d = st.mu + D
        if d > T or (strict_gate and d >= T):
            break
        latest = st.pending[-1] if st.pending else None
        if latest is not None and (latest.gen_time > st.mu or (st.mu_is_initial and latest.gen_time == st.mu)):
            speed = greedy_speed(latest.size, D, d, st.now)
            end = st.now + latest.size / speed
            segments.append(Segment(latest.id, st.now, end, speed))
            st.busy_until = end
            st.now = end
            st.mu, st.mu_is_initial = latest.gen_time, False
            st.deliveries.append((end, latest.id))
            st.pending.clear()
            continue
        st.busy_until = None
        if gi >= len(packets) or packets[gi].gen_time >= d:
            raise InfeasibleInstanceError(
                f"no fresh packet can be delivered before the deadline {d}", time=d
            )
        st.now = packets[gi].gen_time
    return Schedule(tuple(segments), inst)


class GreedyPolicy:
    """The greedy rule as a stateless causal-policy hook for :func:`aoiss.causal.simulate`.

    ``floor_factor`` other than 3 gives the weaker variants (e.g. 2) that the
    floor is there to rule out.
    """

    def __init__(self, floor_factor: float = FLOOR_FACTOR, strict_gate: bool = False):
        self.floor_factor = floor_factor
        self.strict_gate = strict_gate

    def __call__(self, view: PolicyView) -> Action:
        if view.current is not None:
            return Action(*view.current)
        d = view.deadline
        if d > view.T or (self.strict_gate and d >= view.T):
            return IDLE
        fresh = view.fresh
        if not fresh:
            return IDLE
        latest = max(fresh, key=lambda p: p.gen_time)
        return Action(latest.id, greedy_speed(latest.size, view.D, d, view.now, self.floor_factor))
