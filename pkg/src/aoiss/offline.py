"""Offline-optimal schedules and their frame/period structure.

The optimal offline schedule transmits an increasing subsequence of packets,
each at constant speed, back to back whenever the next packet is already
available.  For a fixed subsequence ``i_1 < ... < i_m`` packet ``i_k`` must be
delivered in ``(t_{i_k}, d_{k-1}]`` with ``d_0 = D - initial_aoi`` and
``d_k = t_{i_k} + D``; the last one needs ``d_m > T``.  That timing problem is
a speed-scaling instance with agreeable windows, solved exactly by the
critical-interval method (``method="yds"``) or by coordinate descent on the
delivery times (``method="descent"``).  Subsequences are enumerated with
pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import InfeasibleInstanceError, Instance, Schedule, trajectory_from_schedule
from .power import REL_TOL, PowerFunction, Segment

DEFAULT_CAP = 14
TIE_REL = 1e-15
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class EnumerationCapError(RuntimeError):
    """Too many packets for exhaustive subsequence enumeration."""


class StructuralError(AssertionError):
    """An offline schedule failed one of the optimal-structure checks."""


@dataclass(frozen=True)
class Job:
    packet_id: int
    release: float
    deadline: float
    work: float


def chain_jobs(inst: Instance, chain) -> list[Job]:
    """Timing problem for transmitting exactly the packets in ``chain``."""
    # deadlines are met with equality allowed, the closure of the strict constraint,
    # matching what the feasibility check accepts
    prev = inst.initial_deadline
    jobs = []
    for pid in chain:
        p = inst.packets[pid]
        jobs.append(Job(pid, p.gen_time, prev, p.size))
        prev = p.gen_time + inst.D
    return jobs


# --- exact timing: critical intervals for agreeable windows ---------------


def yds_speeds(jobs) -> list[float]:
    """Per-job speeds of the minimum-energy schedule.

    Jobs must be agreeable: releases and deadlines non-decreasing in list
    order.  Then every critical interval covers a contiguous run of jobs, so
    each round is a scan over index pairs with prefix sums.
    """
    idx = list(range(len(jobs)))
    r = [j.release for j in jobs]
    d = [j.deadline for j in jobs]
    w = [j.work for j in jobs]
    speed = [0.0] * len(jobs)
    while idx:
        prefix = [0.0]
        for k in idx:
            prefix.append(prefix[-1] + w[k])
        best = (-1.0, 0, 0)
        for a in range(len(idx)):
            ra = r[idx[a]]
            for b in range(a, len(idx)):
                span = d[idx[b]] - ra
                if span <= 0:
                    raise InfeasibleInstanceError(f"empty window for packet {jobs[idx[b]].packet_id}")
                dens = (prefix[b + 1] - prefix[a]) / span
                if dens > best[0]:
                    best = (dens, a, b)
        dens, a, b = best
        z, z2 = r[idx[a]], d[idx[b]]
        for k in idx[a : b + 1]:
            speed[k] = dens
        idx = idx[:a] + idx[b + 1 :]
        length = z2 - z
        for k in idx:
            r[k] = _compress(r[k], z, z2, length)
            d[k] = _compress(d[k], z, z2, length)
    return speed


def _compress(x, z, z2, length):
    if x <= z:
        return x
    if x >= z2:
        return x - length
    return z


def edf_times(jobs, speeds):
    """Back-to-back execution in list order at the given speeds: (start, end) pairs."""
    out = []
    prev_end = -math.inf
    for job, s in zip(jobs, speeds):
        start = max(job.release, prev_end)
        end = start + job.work / s
        out.append((start, end))
        prev_end = end
    return out


def chain_energy(P: PowerFunction, jobs, taus) -> float:
    total = 0.0
    prev = -math.inf
    for job, tau in zip(jobs, taus):
        y = tau - max(job.release, prev)
        if y <= 0:
            return math.inf
        total += P.eval(job.work / y) * y
        prev = tau
    return total


# --- coordinate descent on delivery times ----------------------------------


def _golden(f, lo, hi, xtol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    while b - a > xtol:
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + GOLDEN * (b - a)
            fe = f(e)
    return (c, fc) if fc <= fe else (e, fe)


def random_feasible_taus(jobs, rng):
    taus = []
    prev = -math.inf
    for job in jobs:
        lo = max(job.release, prev)
        tau = lo + (job.deadline - lo) * rng.uniform(0.05, 1.0)
        taus.append(tau)
        prev = tau
    return taus


def descend_chain(P: PowerFunction, jobs, init=None, rng=None, xtol=None, max_sweeps=20000):
    """Projected coordinate descent with golden-section line searches.

    Returns ``(taus, energy)``.  The objective is convex in the delivery
    times, and each kink involves a single coordinate, so coordinate-wise
    optimality is global optimality.
    """
    if not jobs:
        return [], 0.0
    if init is None:
        init = random_feasible_taus(jobs, rng if rng is not None else np.random.default_rng(0))
    taus = list(init)
    scale = max(j.deadline for j in jobs) - min(j.release for j in jobs)
    xtol = 1e-9 * scale if xtol is None else xtol
    m = len(jobs)

    def g(k, y):
        return P.eval(jobs[k].work / y) * y if y > 0 else math.inf

    energy = chain_energy(P, jobs, taus)
    for _ in range(max_sweeps):
        moved = 0.0
        for k in range(m):
            lo = max(jobs[k].release, taus[k - 1]) if k else jobs[k].release
            hi = jobs[k].deadline if k + 1 == m else min(jobs[k].deadline, taus[k + 1])
            if hi <= lo:
                continue

            def f(x, k=k, lo=lo):
                val = g(k, x - lo)
                if k + 1 < m:
                    val += g(k + 1, taus[k + 1] - max(jobs[k + 1].release, x))
                return val

            x, fx = _golden(f, lo, hi, xtol * 1e-3)
            if fx <= f(taus[k]):
                moved = max(moved, abs(x - taus[k]))
                taus[k] = x
        new_energy = chain_energy(P, jobs, taus)
        done = moved < xtol or energy - new_energy <= 1e-15 * max(new_energy, 1e-300)
        energy = new_energy
        if done:
            break
    return taus, energy


def solve_chain(P: PowerFunction, jobs, method="yds"):
    """Optimal ``(starts_ends, speeds, energy)`` for a fixed transmitted subsequence."""
    if method == "yds":
        speeds = yds_speeds(jobs)
        times = edf_times(jobs, speeds)
        for job, (_, end) in zip(jobs, times):
            if end > job.deadline + 1e-9 * max(1.0, abs(job.deadline)):
                raise RuntimeError(f"critical-interval schedule misses deadline of packet {job.packet_id}")
        energy = math.fsum(P.eval(s) * (e - b) for s, (b, e) in zip(speeds, times))
        return times, speeds, energy
    if method == "descent":
        taus, energy = descend_chain(P, jobs)
        times, speeds = [], []
        prev = -math.inf
        for job, tau in zip(jobs, taus):
            start = max(job.release, prev)
            times.append((start, tau))
            speeds.append(job.work / (tau - start))
            prev = tau
        return times, speeds, energy
    raise ValueError(f"unknown timing method {method!r}")


# --- subsequence enumeration -----------------------------------------------


@dataclass(frozen=True)
class FrameDecomposition:
    transmitted: tuple[int, ...]
    frames: tuple[tuple[float, float], ...]
    periods: tuple[tuple[float, float], ...]

    def to_json(self) -> dict:
        return {
            "chosen": list(self.transmitted),
            "frames": [list(f) for f in self.frames],
            "periods": [list(p) for p in self.periods],
        }


def decompose(inst: Instance, chain) -> FrameDecomposition:
    deadlines = [inst.initial_deadline] + [inst.packets[i].gen_time + inst.D for i in chain]
    frames = [(0.0, deadlines[0])] + [(deadlines[k - 1], deadlines[k]) for k in range(1, len(deadlines))]
    periods = [(inst.packets[i].gen_time, inst.packets[i].gen_time + inst.D) for i in chain]
    return FrameDecomposition(tuple(chain), tuple(frames), tuple(periods))


@dataclass(frozen=True)
class OfflineSolution:
    schedule: Schedule
    decomposition: FrameDecomposition
    energy: float
    chains_evaluated: int = field(default=0, compare=False)


def candidate_chains(inst: Instance):
    """Every increasing subsequence that can keep the AoI below D on [0, T]."""
    packets = inst.active
    tol = inst.tol_feas
    T, D = inst.T, inst.D

    def extend(chain, prev_deadline, start):
        for j in range(start, len(packets)):
            t = packets[j].gen_time
            if t >= prev_deadline - tol:
                break
            chain.append(packets[j].id)
            if t + D >= T + tol:
                yield tuple(chain)
            else:
                yield from extend(chain, t + D, j + 1)
            chain.pop()

    if inst.initial_deadline >= T + tol:
        yield ()
        return
    yield from extend([], inst.initial_deadline, 0)


def solve_offline(inst: Instance, P: PowerFunction, cap: int = DEFAULT_CAP, method: str = "yds") -> OfflineSolution:
    """Minimum-energy feasible schedule with full knowledge of the generations."""
    if len(inst.active) > cap:
        raise EnumerationCapError(f"{len(inst.active)} packets exceed the enumeration cap {cap}")
    best = None
    evaluated = 0
    for chain in _pruned_chains(inst, P, lambda: None if best is None else best[0]):
        # incumbent is read lazily so pruning tightens as better chains appear
        evaluated += 1
        jobs = chain_jobs(inst, chain)
        times, speeds, energy = solve_chain(P, jobs, method)
        # ties only at rounding level; one huge term must not hide real differences
        tie = TIE_REL * max(energy, 1e-300)
        if best is None or energy < best[0] - tie or (abs(energy - best[0]) <= tie and chain < best[1]):
            best = (energy, chain, times, speeds)
    if best is None:
        raise InfeasibleInstanceError("no subsequence of packets keeps the AoI below D")
    energy, chain, times, speeds = best
    segs = tuple(Segment(pid, b, e, s) for pid, (b, e), s in zip(chain, times, speeds))
    return OfflineSolution(Schedule(segs, inst), decompose(inst, chain), energy, evaluated)


def _pruned_chains(inst, P, incumbent):
    """:func:`candidate_chains` minus prefixes that already cost more than the incumbent.

    Each chosen packet costs at least what it would alone over its whole window.
    """
    packets = {p.id: p for p in inst.active}
    tol = inst.tol_feas
    T, D = inst.T, inst.D
    order = [p.id for p in inst.active]

    def lb(pid, dl):
        p = packets[pid]
        return P.eval(p.size / (dl - p.gen_time)) * (dl - p.gen_time)

    def extend(chain, prev_deadline, start, acc):
        for pos in range(start, len(order)):
            pid = order[pos]
            t = packets[pid].gen_time
            if t >= prev_deadline - tol:
                break
            acc2 = acc + lb(pid, prev_deadline)
            best = incumbent()
            if best is not None and acc2 > best * (1 + 1e-9):
                continue
            chain.append(pid)
            if t + D >= T + tol:
                yield tuple(chain)
            else:
                yield from extend(chain, t + D, pos + 1, acc2)
            chain.pop()

    if inst.initial_deadline >= T + tol:
        yield ()
        return
    yield from extend([], inst.initial_deadline, 0, 0.0)


# --- grid oracle -----------------------------------------------------------


def _g(P, work, y):
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, np.inf)
    pos = y > 0
    out[pos] = P.eval(work / y[pos]) * y[pos]
    return out


def grid_oracle(inst: Instance, P: PowerFunction, grid_n: int = 4000, deliver_all: bool = False) -> float:
    """Brute-force minimum energy with delivery times restricted to a grid.

    The candidate delivery times are a uniform grid of ``grid_n`` steps over
    the horizon plus the instance's generation times and deadlines.
    Each packet is sent at one constant speed from ``max(t_i, previous
    delivery)``.  A dynamic program over (last packet, its delivery time)
    replaces explicit enumeration of every grid combination.

    With ``deliver_all`` every packet is sent in order with the FCFS
    deadlines, which is the benchmark for the deliver-all variant.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    packets = list(inst.active)
    tol = inst.tol_feas
    D = inst.D
    d0 = inst.initial_deadline
    if deliver_all:
        if not packets:
            return 0.0
        dls = [d0] + [p.gen_time + D for p in packets[:-1]]
        horizon = max(dls)
    else:
        if d0 >= inst.T + tol:
            return 0.0
        dls = None
        horizon = inst.T
    extra = [p.gen_time for p in packets] + [p.gen_time + D for p in packets] + [d0]
    pts = np.unique(np.concatenate([np.linspace(0.0, horizon, grid_n + 1), np.array(extra)]))

    cand = []
    for p in packets:
        lo, hi = p.gen_time, p.gen_time + D
        cand.append(pts[(pts > lo) & (pts < hi)])

    def relax(k, j, upper):
        """Best cost for packet j at each candidate time, given packet k last before it."""
        tj, wj = packets[j].gen_time, packets[j].size
        cj = cand[j]
        ok = cj <= upper
        out = np.full(cj.shape, np.inf)
        if not ok.any():
            return out
        target = cj[ok]
        if k is None:
            out[ok] = _g(P, wj, target - tj)
            return out
        ck, vk = cand[k], values[k]
        early = (ck <= tj) & np.isfinite(vk)
        res = np.full(target.shape, np.inf)
        if early.any():
            res = vk[early].min() + _g(P, wj, target - tj)
        late = (ck > tj) & np.isfinite(vk)
        if late.any():
            y = target[None, :] - ck[late][:, None]
            cost = vk[late][:, None] + _g(P, wj, y)
            res = np.minimum(res, cost.min(axis=0))
        out[ok] = res
        return out

    values = []
    if deliver_all:
        for j in range(len(packets)):
            values.append(relax(None if j == 0 else j - 1, j, dls[j]))
        best = values[-1].min()
        if not np.isfinite(best):
            raise InfeasibleInstanceError("deliver-all instance has no feasible grid schedule")
        return float(best)

    best = math.inf
    for j, p in enumerate(packets):
        v = np.full(cand[j].shape, np.inf)
        if p.gen_time < d0 - tol:
            v = np.minimum(v, relax(None, j, d0))
        for k in range(j):
            dk = packets[k].gen_time + D
            if p.gen_time < dk - tol and packets[k].gen_time + D < inst.T + tol:
                v = np.minimum(v, relax(k, j, dk))
        values.append(v)
        if p.gen_time + D >= inst.T + tol and v.size:
            best = min(best, float(v.min()))
    if not math.isfinite(best):
        raise InfeasibleInstanceError("no grid schedule keeps the AoI below D")
    return best


# --- structure audit -------------------------------------------------------

PROPERTIES = (
    "constant_speed",
    "no_preemption",
    "one_delivery_per_frame",
    "speed_monotone_in_frame",
    "two_packets_per_period",
    "fast_greedy_covered",
)


@dataclass
class StructureReport:
    violations: dict[str, list[str]] = field(default_factory=lambda: {name: [] for name in PROPERTIES})
    skipped: set[str] = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def count(self) -> int:
        return sum(len(v) for v in self.violations.values())

    def lines(self):
        for name in PROPERTIES:
            state = "skipped" if name in self.skipped else ("ok" if not self.violations[name] else "FAIL")
            yield f"{name}: {state}" + "".join(f"\n  - {msg}" for msg in self.violations[name])


def verify_structure(
    sched: Schedule,
    decomp: FrameDecomposition,
    greedy: Schedule | None = None,
    tol: float | None = None,
    raise_on_failure: bool = True,
) -> StructureReport:
    """Audit an offline-optimal schedule against the structure it must have.

    Checks, in order: one speed per packet; no preemption; exactly one fresh
    delivery in each frame before the last and none in the last (which holds
    T); speed never drops inside a frame; every period ending by T contains two
    complete transmissions; and, given the greedy schedule on the same
    instance, every greedy transmission faster than ``3w/D`` encloses a
    complete optimal transmission at least as fast.  The last check needs
    equal packet sizes and is skipped otherwise.
    """
    inst = sched.instance
    D, T = inst.D, inst.T
    tol = 1e-9 * D if tol is None else tol
    rep = StructureReport()
    v = rep.violations
    by_pkt = sched.by_packet()
    traj = trajectory_from_schedule(inst, sched)
    delivered = {dv.packet_id: dv.time for dv in traj.deliveries}

    intervals = {}
    for pid, segs in by_pkt.items():
        speeds = [s.speed for s in segs]
        if max(speeds) - min(speeds) > REL_TOL * max(speeds):
            v["constant_speed"].append(f"packet {pid} uses speeds {speeds}")
        for a, b in zip(segs, segs[1:]):
            if b.start - a.end > tol:
                v["no_preemption"].append(f"packet {pid} interrupted on [{a.end}, {b.start})")
        if pid not in delivered:
            v["no_preemption"].append(f"packet {pid} transmitted but never delivered")
        intervals[pid] = (segs[0].start, segs[-1].end, min(speeds))

    frames = decomp.frames
    m = len(decomp.transmitted)
    fresh = traj.fresh_deliveries
    if len(fresh) != len(traj.deliveries):
        v["one_delivery_per_frame"].append("schedule delivers stale packets")
    if [dv.packet_id for dv in fresh] != list(decomp.transmitted):
        v["one_delivery_per_frame"].append("deliveries do not match the transmitted subsequence")
    for k, (a, b) in enumerate(frames):
        if b - a > D + tol or (k > 0 and b - a >= D):
            v["one_delivery_per_frame"].append(f"frame {k} has length {b - a} >= D")
        if k + 1 < len(frames) and abs(frames[k + 1][0] - b) > tol:
            v["one_delivery_per_frame"].append(f"frames {k} and {k + 1} do not abut")
    counts = [0] * len(frames)
    for dv in fresh:
        for k, (a, b) in enumerate(frames):
            if a - tol <= dv.time < b + tol:
                counts[k] += 1
                break
        else:
            v["one_delivery_per_frame"].append(f"delivery at {dv.time} lies outside every frame")
    for k, c in enumerate(counts):
        want = 0 if k == m else 1
        if c != want:
            v["one_delivery_per_frame"].append(f"frame {k} holds {c} deliveries, expected {want}")
    last_a, last_b = frames[-1]
    if not (last_a - tol <= T < last_b):
        v["one_delivery_per_frame"].append(f"T={T} is not inside the last frame [{last_a}, {last_b})")

    for k, (a, b) in enumerate(frames):
        pieces = []
        cursor = a
        for seg in sched.segments:
            lo, hi = max(seg.start, a), min(seg.end, b)
            if hi - lo <= tol:
                continue
            if lo - cursor > tol:
                pieces.append(0.0)
            pieces.append(seg.speed)
            cursor = hi
        if b - cursor > tol and pieces:
            pieces.append(0.0)
        for s1, s2 in zip(pieces, pieces[1:]):
            if s2 < s1 * (1 - REL_TOL) - 1e-300:
                v["speed_monotone_in_frame"].append(f"speed drops from {s1} to {s2} in frame {k}")
                break

    for pid, (a, b) in zip(decomp.transmitted, decomp.periods):
        if b > T:
            continue
        inside = [q for q, (s, e, _) in intervals.items() if s >= a - tol and e <= b + tol and q in delivered]
        if len(inside) < 2:
            v["two_packets_per_period"].append(f"period [{a}, {b}) of packet {pid} holds {len(inside)} packets")

    sizes = {p.size for p in inst.packets}
    if greedy is None or len(sizes) > 1:
        rep.skipped.add("fast_greedy_covered")
    else:
        for seg in greedy.segments:
            w = inst.packets[seg.packet_id].size
            if seg.speed <= 3 * w / D * (1 + REL_TOL):
                continue
            covered = any(
                s >= seg.start - tol and e <= seg.end + tol and sp >= seg.speed * (1 - REL_TOL)
                for q, (s, e, sp) in intervals.items()
                if q in delivered
            )
            if not covered:
                v["fast_greedy_covered"].append(
                    f"greedy segment of packet {seg.packet_id} on [{seg.start}, {seg.end}) has no faster optimal packet inside"
                )
    if raise_on_failure and not rep.ok:
        raise StructuralError("\n".join(rep.lines()))
    return rep


def frame_energy_lower_bound(P: PowerFunction, inst: Instance, greedy: Schedule, m: int) -> float:
    """(m - y) P(W/D) D + E_y, where E_y is the greedy energy above speed 3W/D over y packets."""
    W, D = inst.W, inst.D
    fast = [s for s in greedy.segments if s.speed > 3 * W / D * (1 + REL_TOL)]
    e_fast = sum(P.eval(s.speed) * s.duration for s in fast)
    return (m - len(fast)) * P.eval(W / D) * D + e_fast
