"""Event-driven simulation of arbitrary causal policies.

A policy is any callable taking a :class:`PolicyView` (everything observable at
the query time) and returning an :class:`Action`.  The simulator queries the
policy at every generation, every completion and at any wake-up time the policy
asks for, so decisions can only depend on past events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

from .model import Delivery, Instance, Packet, Schedule
from .power import Segment

MAX_STEPS = 1_000_000
_RESIDUAL = 1e-12


@dataclass(frozen=True)
class Action:
    """Transmit ``packet_id`` at ``speed`` (``None`` means idle) until the next event or ``until``."""

    packet_id: int | None = None
    speed: float = 0.0
    until: float | None = None


IDLE = Action()


@dataclass(frozen=True)
class PolicyView:
    now: float
    D: float
    T: float
    initial_aoi: float
    generated: tuple[Packet, ...]
    remaining: Mapping[int, float]
    deliveries: tuple[Delivery, ...]
    mu: float
    current: tuple[int, float] | None

    @property
    def deadline(self) -> float:
        return self.mu + self.D

    @property
    def mu_is_initial(self) -> bool:
        return not any(dv.fresh for dv in self.deliveries)

    @property
    def fresh(self) -> list[Packet]:
        initial = self.mu_is_initial
        return [
            p
            for p in self.generated
            if p.id in self.remaining and (p.gen_time > self.mu or (initial and p.gen_time == self.mu))
        ]

    def sent(self, pid: int, size: float) -> float:
        return size - self.remaining.get(pid, 0.0 if self.delivered(pid) else size)

    def delivered(self, pid: int) -> bool:
        return any(dv.packet_id == pid for dv in self.deliveries)


CausalPolicy = Callable[[PolicyView], Action]


def simulate(inst: Instance, policy: CausalPolicy, stop: float | None = None) -> Schedule:
    """Run ``policy`` on ``inst`` up to ``stop`` (default ``T``); segments are clipped there."""
    stop = inst.T if stop is None else stop
    gens = sorted(inst.active, key=lambda p: p.gen_time)
    gi = 0
    now = 0.0
    remaining: dict[int, float] = {}
    generated: list[Packet] = []
    deliveries: list[Delivery] = []
    mu, initial = inst.mu0, True
    current = None
    segments: list[Segment] = []

    for _ in range(MAX_STEPS):
        if now >= stop:
            break
        while gi < len(gens) and gens[gi].gen_time <= now:
            p = gens[gi]
            generated.append(p)
            remaining[p.id] = p.size
            gi += 1
        view = PolicyView(
            now, inst.D, inst.T, inst.initial_aoi, tuple(generated), dict(remaining), tuple(deliveries), mu, current
        )
        action = policy(view)
        next_gen = gens[gi].gen_time if gi < len(gens) else math.inf
        wake = math.inf if action.until is None else action.until
        if wake <= now:
            raise ValueError(f"policy asked to wake at {wake}, not after now={now}")

        if action.packet_id is None:
            current = None
            nxt = min(next_gen, wake, stop)
            if math.isinf(nxt):
                break
            now = nxt
            continue

        pid = action.packet_id
        if pid not in remaining:
            raise ValueError(f"policy chose packet {pid}, which is not available at {now}")
        if not (action.speed > 0 and math.isfinite(action.speed)):
            raise ValueError(f"policy chose invalid speed {action.speed}")
        rem = remaining[pid]
        t_done = now + rem / action.speed
        nxt = min(t_done, next_gen, wake, stop)
        _append(segments, Segment(pid, now, nxt, action.speed))
        left = rem - action.speed * (nxt - now)
        size = inst.packets[pid].size
        if nxt == t_done or left <= _RESIDUAL * size:
            del remaining[pid]
            gen = inst.packets[pid].gen_time
            is_fresh = gen > mu or (initial and gen == mu)
            if is_fresh:
                mu, initial = gen, False
            deliveries.append(Delivery(nxt, gen, pid, is_fresh))
            current = None
        else:
            remaining[pid] = left
            current = (pid, action.speed)
        now = nxt
    else:
        raise RuntimeError("policy simulation did not terminate")
    return Schedule(tuple(segments), inst)


def _append(segments, seg):
    if segments:
        last = segments[-1]
        if last.packet_id == seg.packet_id and last.speed == seg.speed and last.end == seg.start:
            segments[-1] = Segment(last.packet_id, last.start, seg.end, last.speed)
            return
    segments.append(seg)


class PlannedPolicy:
    """Follows a fixed list of ``(packet_id, start, end, speed)`` steps; idles otherwise.

    Steps whose packet is unavailable (not yet generated, absent from the
    instance, or already delivered) are skipped.  Useful as a test fixture and
    for hand-built adversary cases.
    """

    def __init__(self, steps):
        self.steps = sorted(steps, key=lambda s: s[1])

    def __call__(self, view: PolicyView) -> Action:
        t = view.now
        for pid, start, end, speed in self.steps:
            if start <= t < end and pid in view.remaining:
                return Action(pid, speed, until=end)
        upcoming = [s[1] for s in self.steps if s[1] > t]
        return Action(None, 0.0, until=min(upcoming)) if upcoming else IDLE
