"""Instances, schedules, AoI trajectories and the peak-AoI feasibility check.

The AoI at time ``t`` is ``t - mu(t)`` where ``mu(t)`` is the generation time
of the freshest packet delivered at or before ``t``.  Before any delivery
``mu`` equals ``-initial_aoi``.  The running deadline is ``mu(t) + D``.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .power import REL_TOL, Segment

DEFAULT_EPSILON = 1e-6
FEAS_TOL_FACTOR = 1e-12


class InfeasibleInstanceError(ValueError):
    """The instance admits no schedule meeting the peak-AoI bound."""

    def __init__(self, message, time=None, packet_id=None):
        super().__init__(message)
        self.time = time
        self.packet_id = packet_id


class ScheduleError(ValueError):
    """A schedule breaks a structural invariant (overlap, early start, excess bits)."""


@dataclass(frozen=True)
class Packet:
    id: int
    gen_time: float
    size: float


@dataclass(frozen=True)
class Instance:
    """Packet generations plus the peak-AoI bound ``D`` over horizon ``[0, T]``."""

    packets: tuple[Packet, ...]
    D: float
    T: float
    initial_aoi: float = 0.0
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))

    @classmethod
    def from_times(cls, times, D, T, sizes=1.0, initial_aoi=0.0, epsilon=DEFAULT_EPSILON):
        times = [float(t) for t in times]
        if isinstance(sizes, (int, float)):
            sizes = [float(sizes)] * len(times)
        packets = tuple(Packet(i, t, float(w)) for i, (t, w) in enumerate(zip(times, sizes)))
        return cls(packets, float(D), float(T), float(initial_aoi), float(epsilon))

    @property
    def mu0(self) -> float:
        return -self.initial_aoi

    @property
    def initial_deadline(self) -> float:
        return self.D - self.initial_aoi

    @property
    def tol_feas(self) -> float:
        return FEAS_TOL_FACTOR * self.D

    @property
    def active(self) -> tuple[Packet, ...]:
        """Packets generated strictly before the horizon; later ones are ignored."""
        return tuple(p for p in self.packets if p.gen_time < self.T)

    @property
    def W(self) -> float:
        """Largest packet size (1.0 for an empty instance)."""
        return max((p.size for p in self.packets), default=1.0)

    @property
    def w_min(self) -> float:
        return min((p.size for p in self.packets), default=1.0)

    @property
    def s_hat(self) -> float:
        return self.W / self.D

    def packet(self, pid: int) -> Packet:
        return self.packets[pid]

    def to_json(self) -> dict:
        return {
            "D": self.D,
            "T": self.T,
            "initial_aoi": self.initial_aoi,
            "epsilon": self.epsilon,
            "packets": [{"t": p.gen_time, "size": p.size} for p in self.packets],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Instance":
        pk = data.get("packets", [])
        return cls.from_times(
            [p["t"] for p in pk],
            data["D"],
            data["T"],
            sizes=[p.get("size", 1.0) for p in pk],
            initial_aoi=data.get("initial_aoi", 0.0),
            epsilon=data.get("epsilon", DEFAULT_EPSILON),
        )

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "Instance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


class Issue(NamedTuple):
    code: str
    message: str


def validate_instance(inst: Instance) -> list[Issue]:
    """Every violated instance invariant; an empty list means the instance is usable."""
    issues = []
    D, T, eps = inst.D, inst.T, inst.epsilon
    if not (D > 0 and math.isfinite(D)):
        issues.append(Issue("D", f"peak-AoI bound must be positive, got {D}"))
    if not (T > 0 and math.isfinite(T)):
        issues.append(Issue("T", f"horizon must be positive, got {T}"))
    if not (eps > 0):
        issues.append(Issue("epsilon", f"margin must be positive, got {eps}"))
    if not (inst.initial_aoi >= 0):
        issues.append(Issue("initial_aoi", f"initial AoI must be non-negative, got {inst.initial_aoi}"))
    elif not (inst.initial_aoi < D - eps):
        issues.append(Issue("initial_aoi", f"initial AoI {inst.initial_aoi} is not below D - eps = {D - eps}"))
    for i, p in enumerate(inst.packets):
        if p.id != i:
            issues.append(Issue("id", f"packet at position {i} has id {p.id}"))
        if not (p.gen_time >= 0 and math.isfinite(p.gen_time)):
            issues.append(Issue("gen_time", f"packet {i} has invalid generation time {p.gen_time}"))
        if not (p.size > 0 and math.isfinite(p.size)):
            issues.append(Issue("size", f"packet {i} has invalid size {p.size}"))
    for a, b in zip(inst.packets, inst.packets[1:]):
        gap = b.gen_time - a.gen_time
        if not (gap > 0):
            issues.append(Issue("order", f"packets {a.id} and {b.id} are not strictly time-ordered"))
        elif not (gap < D - eps):
            issues.append(Issue("gap", f"gap {gap} between packets {a.id} and {b.id} is not below D - eps"))
    if issues:
        return issues
    d0 = inst.initial_deadline
    if d0 <= T:
        active = inst.active
        if not active or active[0].gen_time >= d0:
            issues.append(Issue("first", f"no packet is generated before the initial deadline {d0}"))
        elif active[-1].gen_time + D <= T:
            issues.append(
                Issue("last", f"last packet (t={active[-1].gen_time}) cannot keep the AoI below D until T={T}")
            )
    return issues


@dataclass(frozen=True)
class Schedule:
    """Transmission segments of one policy run on ``instance``."""

    segments: tuple[Segment, ...]
    instance: Instance = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(sorted(self.segments, key=lambda s: s.start)))

    def validate(self) -> None:
        inst = self.instance
        time_tol = REL_TOL * max(inst.D, inst.T)
        for prev, seg in zip(self.segments, self.segments[1:]):
            if seg.start < prev.end - time_tol:
                raise ScheduleError(f"segments overlap: {prev} and {seg}")
        sent = {}
        done = set()
        for seg in self.segments:
            if not (0 <= seg.packet_id < len(inst.packets)):
                raise ScheduleError(f"segment refers to unknown packet {seg.packet_id}")
            p = inst.packets[seg.packet_id]
            if seg.start < p.gen_time - time_tol:
                raise ScheduleError(f"packet {p.id} transmitted at {seg.start} before generation {p.gen_time}")
            if p.id in done:
                raise ScheduleError(f"packet {p.id} transmitted after its delivery")
            sent[p.id] = sent.get(p.id, 0.0) + seg.bits
            if sent[p.id] > p.size * (1 + 1e-7):
                raise ScheduleError(f"packet {p.id} receives {sent[p.id]} bits, more than its size {p.size}")
            if sent[p.id] >= p.size * (1 - 1e-7):
                done.add(p.id)

    def by_packet(self) -> dict[int, list[Segment]]:
        out: dict[int, list[Segment]] = {}
        for seg in self.segments:
            out.setdefault(seg.packet_id, []).append(seg)
        return out


@dataclass(frozen=True)
class Delivery:
    time: float
    gen_time: float
    packet_id: int
    fresh: bool


@dataclass(frozen=True)
class AoiTrajectory:
    """Piecewise-linear AoI induced by a sequence of deliveries."""

    deliveries: tuple[Delivery, ...]
    mu0: float
    D: float
    _times: tuple[float, ...] = field(default=(), repr=False, compare=False)
    _mus: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "deliveries", tuple(self.deliveries))
        fresh = [dv for dv in self.deliveries if dv.fresh]
        object.__setattr__(self, "_times", tuple(dv.time for dv in fresh))
        object.__setattr__(self, "_mus", tuple(dv.gen_time for dv in fresh))

    @property
    def fresh_deliveries(self) -> tuple[Delivery, ...]:
        return tuple(dv for dv in self.deliveries if dv.fresh)

    def mu_at(self, t: float) -> float:
        k = bisect.bisect_right(self._times, t)
        return self.mu0 if k == 0 else self._mus[k - 1]

    def aoi_at(self, t: float) -> float:
        return t - self.mu_at(t)

    def deadline_at(self, t: float) -> float:
        return self.mu_at(t) + self.D

    def delivered_by(self, t: float) -> set[int]:
        return {dv.packet_id for dv in self.deliveries if dv.time <= t}


def _is_fresh(gen_time, mu, mu_is_initial):
    return gen_time > mu or (mu_is_initial and gen_time == mu)


def trajectory_from_schedule(inst: Instance, sched: Schedule) -> AoiTrajectory:
    """Deliveries happen at the end of the segment completing a packet's bits."""
    sched.validate()
    sent: dict[int, float] = {}
    events = []
    for seg in sched.segments:
        p = inst.packets[seg.packet_id]
        before = sent.get(p.id, 0.0)
        sent[p.id] = before + seg.bits
        if before < p.size * (1 - 1e-7) <= sent[p.id]:
            events.append((seg.end, p))
    events.sort(key=lambda e: e[0])
    mu, initial = inst.mu0, True
    deliveries = []
    for time, p in events:
        fresh = _is_fresh(p.gen_time, mu, initial)
        if fresh:
            mu, initial = p.gen_time, False
        deliveries.append(Delivery(time, p.gen_time, p.id, fresh))
    return AoiTrajectory(tuple(deliveries), inst.mu0, inst.D)


def deadline_at(traj: AoiTrajectory, t: float) -> float:
    if t < 0:
        raise ValueError("time must be non-negative")
    return traj.deadline_at(t)


class Feasibility(NamedTuple):
    feasible: bool
    violation_time: float | None

    def __bool__(self):
        return self.feasible


def check_trajectory(traj: AoiTrajectory, T: float, tol: float) -> Feasibility:
    """AoI stays below D on [0, T].

    Just before a delivery the AoI only approaches ``tau - mu_prev``, so a
    delivery exactly at the running deadline is allowed (up to ``+tol``).  At
    ``T`` the value is attained, so ``T - mu(T)`` must sit below D by ``tol``.
    """
    mu = traj.mu0
    for dv in traj.fresh_deliveries:
        if dv.time > T:
            break
        if dv.time - mu > traj.D + tol:
            return Feasibility(False, mu + traj.D)
        mu = dv.gen_time
    if T - mu > traj.D - tol:
        return Feasibility(False, max(0.0, mu + traj.D))
    return Feasibility(True, None)


def check_feasible(inst: Instance, sched: Schedule, tol: float | None = None) -> Feasibility:
    traj = trajectory_from_schedule(inst, sched)
    return check_trajectory(traj, inst.T, inst.tol_feas if tol is None else tol)


def fresh_packets(inst: Instance, traj: AoiTrajectory, t: float) -> list[int]:
    """Generated, undelivered packets newer than the freshest delivered one."""
    if t < 0:
        raise ValueError("time must be non-negative")
    mu = traj.mu_at(t)
    initial = not any(dv.fresh and dv.time <= t for dv in traj.deliveries)
    delivered = traj.delivered_by(t)
    return [
        p.id
        for p in inst.packets
        if p.gen_time <= t and p.id not in delivered and _is_fresh(p.gen_time, mu, initial)
    ]
