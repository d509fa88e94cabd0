"""Closed-form competitive-ratio bounds and adversarial instance builders."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .causal import CausalPolicy, PlannedPolicy, simulate
from .greedy import run_greedy
from .model import Instance, Schedule, check_feasible
from .offline import solve_offline
from .power import PowerFunction, schedule_energy

GAMMA_THRESHOLD = 0.07


def _positive(P: PowerFunction, s: float) -> float:
    val = P.eval(s)
    if not val > 0:
        raise ValueError(f"P({s}) = {val}; bound undefined")
    return val


def cr_upper(P: PowerFunction, s_hat: float) -> float:
    """Upper bound on greedy's competitive ratio for equal packet sizes."""
    if not s_hat > 0:
        raise ValueError("s_hat must be positive")
    return 2.0 * P.eval(3 * s_hat) / _positive(P, s_hat) + 1.0


def cr_lower_greedy(P: PowerFunction, s_hat: float) -> float:
    """Ratio greedy is forced into by the three-packet instance of :func:`step_two`."""
    if not s_hat > 0:
        raise ValueError("s_hat must be positive")
    return 1.5 * P.eval(3 * s_hat) / _positive(P, 1.5 * s_hat)


def universal_lower_bound(P: PowerFunction, W: float, D: float, T: float) -> float:
    """Energy any feasible schedule needs on some instance with these parameters."""
    if not (W > 0 and D > 0 and T > 0):
        raise ValueError("W, D and T must be positive")
    return max(0.0, P.eval(2 * W / D) * (T - D))


def arbitrary_size_cr_upper(P: PowerFunction, w: float, W: float, D: float) -> float:
    """Greedy's ratio bound when sizes range over [w, W]."""
    if not (0 < w <= W):
        raise ValueError("need 0 < w <= W")
    zeta = W / w
    return 2.0 * P.eval(3 * zeta * w / D) / _positive(P, w / D) + 1.0


class CaseRatios(NamedTuple):
    ratio1: float
    ratio2: float
    ratio3: float
    min: float


def lb_case_ratios(P: PowerFunction, s_hat: float) -> CaseRatios:
    """The three case expressions of the two-stage adversary, and their minimum."""
    p = lambda c: P.eval(c * s_hat)  # noqa: E731
    base = _positive(P, 2 * s_hat)
    r1 = p(4) / (4 * base) + 0.5
    r2 = min(p(2.14) / base + 1.0, 2.5 * p(2.4) / base)
    r3 = min(2 * p(6) / (15 * p(2.4)), 3 * p(2.57) / (5 * p(2.4)))
    return CaseRatios(r1, r2, r3, min(r1, r2, r3))


@dataclass
class BoundReport:
    power: str
    s_hat: float
    zeta: float
    cr_upper: float
    cr_lower_expr: float
    ulb: float
    lb_cases: dict

    def to_json(self) -> dict:
        return asdict(self)


def bound_report(P: PowerFunction, W: float, D: float, T: float, w: float | None = None) -> BoundReport:
    """Every closed-form bound for packets of size in [w, W] (default w = W)."""
    w = W if w is None else w
    s_hat = W / D
    return BoundReport(
        P.spec(),
        s_hat,
        W / w,
        arbitrary_size_cr_upper(P, w, W, D),
        cr_lower_greedy(P, s_hat),
        universal_lower_bound(P, W, D, T),
        lb_case_ratios(P, s_hat)._asdict(),
    )


@dataclass
class RatioReport:
    E_policy: float
    E_offline: float
    ratio: float
    ulb: float
    cr_upper: float
    feasible: bool = True
    violation_time: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out["ratio"] = None if math.isinf(self.ratio) else self.ratio
        return out


def ratio_report(inst: Instance, P: PowerFunction, sched: Schedule, offline_energy: float) -> RatioReport:
    feas = check_feasible(inst, sched)
    e = schedule_energy(P, sched)
    if not feas:
        ratio = math.inf
    elif offline_energy > 0:
        ratio = e / offline_energy
    else:
        # nothing needs sending before T; both policies idle
        ratio = 1.0 if e == 0 else math.inf
    return RatioReport(
        e,
        offline_energy,
        ratio,
        universal_lower_bound(P, inst.W, inst.D, inst.T),
        cr_upper(P, inst.s_hat),
        bool(feas),
        feas.violation_time,
    )


# --- instance builders -----------------------------------------------------


def example_one(delta: float = 1e-3, D: float = 2.0, W: float = 1.0) -> Instance:
    """Three packets where greedy runs at the floor speed throughout while the optimum sends one packet."""
    return Instance.from_times([0.0, delta, D / 2 + delta], D, 1.5 * D + delta / 2, sizes=W)


def step_two(D: float = 3.0, W: float = 1.0, delta: float | None = None) -> Instance:
    """Three packets on which greedy pays ``cr_lower_greedy`` times the optimum as delta -> 0."""
    delta = 1e-3 * D if delta is None else delta
    return Instance.from_times([0.0, D / 3, D / 3 + delta], D, 4 * D / 3 + delta / 2, sizes=W)


def variable_size_adversary(eta: float, j: int, D: float = 2.0, W: float = 1.0, delta: float | None = None) -> Instance:
    """A full-size packet at ``delta`` and, for ``j >= 1``, a packet of ``W / eta^j`` at ``D(1 - eta^-j)``."""
    if not eta > 1:
        raise ValueError("eta must exceed 1")
    if j < 0:
        raise ValueError("j must be non-negative")
    delta = 1e-3 * D if delta is None else delta
    times, sizes = [delta], [W]
    if j:
        times.append(D * (1 - eta**-j))
        sizes.append(W / eta**j)
    return Instance.from_times(times, D, D + delta / 2, sizes=sizes)


def two_stage_instances(D: float, W: float = 1.0, delta: float | None = None) -> dict[str, Instance]:
    delta = 1e-3 * D if delta is None else delta
    T = 1.5 * D - delta
    make = lambda ts: Instance.from_times(ts, D, T, sizes=W, initial_aoi=D / 2)  # noqa: E731
    return {
        "prefix": make([0.0, D / 4]),
        "sigma1": make([0.0, D / 4, D / 2]),
        "sigma2": make([0.0, D / 4, 5 * D / 6]),
    }


def case_one_policy(D: float, W: float = 1.0) -> PlannedPolicy:
    """Sends packet 2 at 4W/D on [D/4, D/2), then packet 3 at 2W/D on [D/2, D)."""
    return PlannedPolicy([(1, D / 4, D / 2, 4 * W / D), (2, D / 2, D, 2 * W / D)])


@dataclass
class AdversaryReport:
    chosen: str
    gamma: float
    packet2_delivered: bool
    instance: Instance
    schedule: Schedule
    report: RatioReport

    @property
    def ratio(self) -> float:
        return self.report.ratio

    def to_json(self) -> dict:
        return {
            "chosen": self.chosen,
            "gamma": self.gamma,
            "packet2_delivered": self.packet2_delivered,
            "instance": self.instance.to_json(),
            **self.report.to_json(),
        }


def _clip(segments, stop):
    out = []
    for s in segments:
        if s.start < stop:
            out.append((s.packet_id, s.start, min(s.end, stop), s.speed))
    return out


def adversary_two_stage(
    policy: CausalPolicy, P: PowerFunction, D: float, W: float = 1.0, delta: float | None = None
) -> AdversaryReport:
    """Pick the continuation that hurts ``policy`` most after watching it on {0, D/4}.

    A policy that has delivered packet 2, or sent at least 7% of it, by D/2
    sees a third packet at D/2; otherwise at 5D/6.
    """
    inst = two_stage_instances(D, W, delta)
    half = D / 2
    prefix = simulate(inst["prefix"], policy, stop=half)
    bits = sum(s.bits for s in prefix.segments if s.packet_id == 1)
    gamma = bits / W
    delivered = bits >= W * (1 - 1e-9)
    chosen = "sigma1" if delivered or gamma >= GAMMA_THRESHOLD else "sigma2"
    target = inst[chosen]
    sched = simulate(target, policy)
    a, b = _clip(prefix.segments, half), _clip(sched.segments, half)
    if len(a) != len(b) or any(
        x[0] != y[0] or any(abs(u - v) > 1e-12 * D for u, v in zip(x[1:], y[1:])) for x, y in zip(a, b)
    ):
        raise RuntimeError("policy acted differently before D/2 on instances with the same prefix")
    opt = solve_offline(target, P)
    rep = ratio_report(target, P, sched, opt.energy)
    return AdversaryReport(chosen, gamma, delivered, target, sched, rep)


def greedy_ratio(inst: Instance, P: PowerFunction, **offline_kw) -> RatioReport:
    opt = solve_offline(inst, P, **offline_kw)
    return ratio_report(inst, P, run_greedy(inst), opt.energy)
