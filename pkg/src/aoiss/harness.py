"""Experiment configuration, seeded instance generation, sweeps and CSV/JSON output."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import adversary_two_stage, bound_report, cr_upper, lb_case_ratios, ratio_report, universal_lower_bound
from .fcfs import run_fcfs
from .greedy import GreedyPolicy, run_greedy
from .model import (
    DEFAULT_EPSILON,
    InfeasibleInstanceError,
    Instance,
    Schedule,
    check_feasible,
    trajectory_from_schedule,
    validate_instance,
)
from .offline import DEFAULT_CAP, EnumerationCapError, grid_oracle, solve_offline, verify_structure
from .power import PowerFunction, parse_power, schedule_energy

EXPERIMENTS = ("simulate", "oracle", "ratio", "adversary", "sweep_X", "sweep_WD", "sweep_D", "trace", "validate")
SOURCES = ("explicit", "deterministic_gap", "uniform_gap")
TRACE_COLUMNS = ("time", "aoi", "deadline", "event", "packet_id", "speed")
SWEEP_COLUMNS = ("param", "E_greedy", "E_offline", "ratio", "ulb", "cr_upper", "status")

DEFAULT_SWEEPS = {
    "sweep_X": [round(0.5 + 0.1 * k, 10) for k in range(45)],
    "sweep_D": [3.5, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 50.0, 75.0, 99.0],
    "sweep_WD": [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0],
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    power: str = "poly:alpha=2"
    D: float = 5.0
    T: float = 100.0
    initial_aoi: float = 0.0
    W: float = 1.0
    size_range: list | None = None
    epsilon: float = DEFAULT_EPSILON
    source: dict = field(default_factory=lambda: {"kind": "uniform_gap", "lo": 0.0, "hi": 3.0})
    seed: int | None = None
    delta: float | None = None
    sweep: list | None = None
    grid_n: int = 4000
    cap: int = DEFAULT_CAP
    policy: str = "greedy"
    strict_gate: bool = False
    instance: str | None = None
    out: str = "out"

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        if "experiment" not in merged:
            raise ConfigError("experiment not given")
        try:
            cfg = cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.check()
        return cfg

    @property
    def P(self) -> PowerFunction:
        try:
            return parse_power(self.power)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"bad power spec {self.power!r}: {exc}") from None

    def check(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.policy not in ("greedy", "fcfs"):
            raise ConfigError("policy must be greedy or fcfs")
        for name in ("D", "T", "W", "epsilon"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be a positive number")
        if not (0 <= self.initial_aoi < self.D - self.epsilon):
            raise ConfigError("initial_aoi must lie in [0, D - epsilon)")
        if self.grid_n < 100:
            raise ConfigError("grid_n must be at least 100")
        if self.size_range is not None:
            lo, hi = self.size_range
            if not 0 < lo <= hi:
                raise ConfigError("size_range must satisfy 0 < lo <= hi")
        self.P  # noqa: B018  parse eagerly
        # sweep_X builds its own sources; the adversary builds its own instances
        if self.instance is None and self.experiment not in ("sweep_X", "adversary"):
            self._check_source(self.D)

    def _check_source(self, D: float) -> None:
        src = self.source
        kind = src.get("kind") if isinstance(src, dict) else None
        if kind not in SOURCES:
            raise ConfigError(f"source.kind must be one of {SOURCES}")
        if kind == "explicit":
            if not isinstance(src.get("times"), list):
                raise ConfigError("explicit source needs a list of times")
        elif kind == "deterministic_gap":
            x = src.get("x")
            if not (isinstance(x, (int, float)) and 0 < x < D - self.epsilon):
                raise ConfigError("deterministic_gap needs 0 < x < D - epsilon")
        else:
            lo, hi = src.get("lo"), src.get("hi")
            if not (isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and 0 <= lo < hi):
                raise ConfigError("uniform_gap needs 0 <= lo < hi")
            if not hi < D - self.epsilon:
                raise ConfigError(f"uniform_gap hi={hi} must be below D - epsilon")
            if self.seed is None:
                raise ConfigError("uniform_gap needs a seed")

    def sweep_values(self) -> list[float]:
        vals = self.sweep if self.sweep is not None else DEFAULT_SWEEPS.get(self.experiment)
        if not vals:
            raise ConfigError("sweep values missing")
        return sorted(float(v) for v in vals)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(data, **overrides)


def generation_times(source: dict, T: float, seed: int | None = None) -> list[float]:
    kind = source["kind"]
    if kind == "explicit":
        return [float(t) for t in source["times"]]
    if kind == "deterministic_gap":
        x = float(source["x"])
        n = math.ceil(T / x)
        return [k * x for k in range(1, n + 1) if k * x < T]
    rng = np.random.default_rng(seed)
    lo, hi = float(source["lo"]), float(source["hi"])
    times = []
    t = rng.uniform(lo, hi)
    while t < T:
        times.append(float(t))
        t += rng.uniform(lo, hi)
    return times


def gen_instance(cfg: ExperimentConfig, **overrides) -> Instance:
    """The configured instance; ``overrides`` replace config fields (D, W, source, ...)."""
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if cfg.instance is not None:
        inst = Instance.load(cfg.instance)
        return dataclasses.replace(inst, D=cfg.D) if "D" in overrides else inst
    times = generation_times(cfg.source, cfg.T, cfg.seed)
    if cfg.source["kind"] == "explicit" and "sizes" in cfg.source:
        sizes = cfg.source["sizes"]
    elif cfg.size_range is not None:
        rng = np.random.default_rng(None if cfg.seed is None else cfg.seed + 1)
        sizes = [float(s) for s in rng.uniform(*cfg.size_range, size=len(times))]
    else:
        sizes = cfg.W
    return Instance.from_times(times, cfg.D, cfg.T, sizes=sizes, initial_aoi=cfg.initial_aoi, epsilon=cfg.epsilon)


def random_instance(rng: np.random.Generator, n_max: int = 10, D: float | None = None, W: float = 1.0) -> Instance:
    """A random valid instance with at most ``n_max`` packets, for property sweeps.

    Gap upper limits range up to nearly D, so greedy regularly meets long
    silences and has to run above its floor speed.
    """
    D = float(rng.uniform(1.0, 6.0)) if D is None else D
    n = int(rng.integers(1, n_max + 1))
    aoi0 = float(rng.uniform(0.0, 0.6)) * D
    d0 = D - aoi0
    hi = float(rng.uniform(0.2, 0.98)) * D
    times = [float(rng.uniform(0.0, 0.95)) * d0]
    for _ in range(n - 1):
        times.append(times[-1] + float(rng.uniform(0.01 * D, hi)))
    T = times[-1] + float(rng.uniform(0.05, 0.95)) * D
    return Instance.from_times(times, D, T, sizes=W, initial_aoi=aoi0)


def require_valid(inst: Instance) -> None:
    issues = validate_instance(inst)
    if issues:
        raise InfeasibleInstanceError("; ".join(f"{i.code}: {i.message}" for i in issues))


def measure_ratio(inst: Instance, P: PowerFunction, cap: int = DEFAULT_CAP, strict_gate: bool = False):
    """Greedy energy over optimal energy on one instance, with the instance's bounds."""
    opt = solve_offline(inst, P, cap=cap)
    rep = ratio_report(inst, P, run_greedy(inst, strict_gate=strict_gate), opt.energy)
    return rep, opt


def run_policy(inst: Instance, policy: str, strict_gate: bool = False) -> Schedule:
    return run_fcfs(inst) if policy == "fcfs" else run_greedy(inst, strict_gate=strict_gate)


# --- trace -----------------------------------------------------------------


def trace_rows(inst: Instance, sched: Schedule) -> list[tuple]:
    """Event rows ordered by time; at equal times: deliver, idle, gen, start."""
    traj = trajectory_from_schedule(inst, sched)
    rank = {"deliver": 0, "idle": 1, "gen": 2, "start": 3}
    events = []
    for p in inst.active:
        events.append((p.gen_time, "gen", p.id, 0.0))
    segs = sched.segments
    for k, seg in enumerate(segs):
        prev = segs[k - 1] if k else None
        if prev is None or prev.end != seg.start or prev.packet_id != seg.packet_id or prev.speed != seg.speed:
            events.append((seg.start, "start", seg.packet_id, seg.speed))
        nxt = segs[k + 1] if k + 1 < len(segs) else None
        if nxt is None or nxt.start > seg.end:
            events.append((seg.end, "idle", -1, 0.0))
    for dv in traj.deliveries:
        events.append((dv.time, "deliver", dv.packet_id, 0.0))
    events.sort(key=lambda e: (e[0], rank[e[1]], e[2]))
    return [(t, traj.aoi_at(t), traj.deadline_at(t), ev, pid, speed) for t, ev, pid, speed in events]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ""
    return str(x)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


# --- sweeps ----------------------------------------------------------------


def _sweep_point(args):
    cfg, param, overrides, P = args
    try:
        inst = gen_instance(cfg, **overrides)
        require_valid(inst)
        greedy = run_greedy(inst, strict_gate=cfg.strict_gate)
    except InfeasibleInstanceError:
        return (param, None, None, None, None, None, "infeasible")
    e_g = schedule_energy(P, greedy)
    ulb = universal_lower_bound(P, inst.W, inst.D, inst.T)
    cr = cr_upper(P, inst.s_hat)
    if len(inst.active) > cfg.cap:
        return (param, e_g, None, None, ulb, cr, "cap")
    opt = solve_offline(inst, P, cap=cfg.cap)
    return (param, e_g, opt.energy, e_g / opt.energy, ulb, cr, "ok")


def sweep_rows(cfg: ExperimentConfig, jobs: int = 1) -> list[tuple]:
    P = cfg.P
    tasks = []
    base_times = None
    for v in cfg.sweep_values():
        if cfg.experiment == "sweep_X":
            tasks.append((cfg, v, {"source": {"kind": "deterministic_gap", "x": v}}, P))
        elif cfg.experiment == "sweep_WD":
            tasks.append((cfg, v / cfg.D, {"W": v}, P))
        elif cfg.experiment == "sweep_D":
            # one instance, reused at every D
            if base_times is None:
                base_times = generation_times(cfg.source, cfg.T, cfg.seed) if cfg.instance is None else None
            src = {"kind": "explicit", "times": base_times} if base_times is not None else cfg.source
            tasks.append((cfg, v, {"D": v, "source": src}, P))
        else:
            raise ConfigError(f"{cfg.experiment} is not a sweep")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return sorted(rows, key=lambda r: r[0])


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run ``cfg`` and write its outputs under ``cfg.out``; returns the report dict."""
    os.makedirs(cfg.out, exist_ok=True)
    P = cfg.P
    exp = cfg.experiment
    out = lambda name: os.path.join(cfg.out, name)  # noqa: E731
    report: dict = {"experiment": exp, "power": P.spec(), "seed": cfg.seed}

    if exp.startswith("sweep_"):
        rows = sweep_rows(cfg, jobs)
        write_csv(out("sweep.csv"), SWEEP_COLUMNS, rows)
        report["bounds"] = bound_report(P, cfg.W, cfg.D, cfg.T).to_json()
        report["rows"] = len(rows)
        write_json(out("report.json"), report)
        return report

    if exp == "adversary":
        if cfg.policy != "greedy":
            raise ConfigError("the two-stage adversary needs a causal policy (greedy)")
        adv = adversary_two_stage(GreedyPolicy(strict_gate=cfg.strict_gate), P, cfg.D, cfg.W, cfg.delta)
        report.update(adv.to_json())
        report["lb_cases"] = lb_case_ratios(P, cfg.W / cfg.D)._asdict()
        write_json(out("report.json"), report)
        write_csv(out("trace.csv"), TRACE_COLUMNS, trace_rows(adv.instance, adv.schedule))
        return report

    inst = gen_instance(cfg)
    issues = validate_instance(inst)
    report["instance"] = inst.to_json()
    report["issues"] = [i._asdict() for i in issues]
    if exp == "validate":
        write_json(out("report.json"), report)
        if issues:
            raise InfeasibleInstanceError(f"{len(issues)} instance issues")
        return report
    require_valid(inst)

    if exp in ("simulate", "trace"):
        sched = run_policy(inst, cfg.policy, cfg.strict_gate)
        feas = check_feasible(inst, sched)
        report.update(
            policy=cfg.policy,
            energy=schedule_energy(P, sched),
            feasible=bool(feas),
            violation_time=feas.violation_time,
            segments=[dataclasses.asdict(s) for s in sched.segments],
        )
        write_csv(out("trace.csv"), TRACE_COLUMNS, trace_rows(inst, sched))
    elif exp == "oracle":
        opt = solve_offline(inst, P, cap=cfg.cap)
        audit = verify_structure(opt.schedule, opt.decomposition, run_greedy(inst), raise_on_failure=False)
        report.update(
            energy=opt.energy,
            grid_energy=grid_oracle(inst, P, cfg.grid_n),
            structure={k: v for k, v in audit.violations.items()},
            segments=[dataclasses.asdict(s) for s in opt.schedule.segments],
        )
        write_json(out("decomposition.json"), opt.decomposition.to_json())
        write_csv(out("trace.csv"), TRACE_COLUMNS, trace_rows(inst, opt.schedule))
    elif exp == "ratio":
        rep, opt = measure_ratio(inst, P, cfg.cap, cfg.strict_gate)
        report.update(rep.to_json())
        write_json(out("decomposition.json"), opt.decomposition.to_json())
    write_json(out("report.json"), report)
    return report


__all__ = [
    "ConfigError",
    "EnumerationCapError",
    "ExperimentConfig",
    "gen_instance",
    "load_config",
    "measure_ratio",
    "run_experiment",
    "sweep_rows",
    "trace_rows",
]
