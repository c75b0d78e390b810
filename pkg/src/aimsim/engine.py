"""Simulation of a continual vehicle stream through one intersection.

The world lives on an integer step grid ``t = s * dt``. Within a step,
admissions are processed first (each admitted vehicle immediately gets its
provisional plan), then any coordination round due at that step. Vehicles
move open loop along their latest plan; past the end of a plan they coast at
their final speed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import arrivals as arr
from .coordination import (
    WEIGHT_PROFILES,
    ObjectiveWeights,
    RoundOutcome,
    SchedulingWeights,
    combined_round,
    ddswa_round,
    fifo_round,
    prune_scheduled,
)
from .model import ConfigError, LaneGeometry, PhysicalParams, default_geometry, geometry_from_config
from .ocp import ENTRY_TOL, BatchVehicle, OcpSpec, hold_trajectory, solve
from .safety import SafetyMargins, arrival_gate, rear_end_ok
from .signalized import Oversaturated, dispatch_steps, greedy_phases, green_dispatch, next_green, webster_timing
from .trajectory import (
    SampledTrajectory,
    check_bounds,
    concatenate,
    crossing_time,
    grid_steps,
    integrate,
    vehicle_objective,
)

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ALGORITHMS = ("ddswa", "combined", "fifo", "signal")


@dataclass(frozen=True)
class Horizons:
    coordinated: float = 30.0  # T_c
    objective: float = 30.0  # T_h
    period: float = 3.0  # T_coop


@dataclass(frozen=True)
class SignalSettings:
    sat_flow: float = 2.0  # veh/s/lane
    lost_per_phase: float = 4.0  # s


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-6
    max_iter: int = 200


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "ddswa"
    lane_rates: dict = field(default_factory=lambda: {lane: 0.1 for lane in default_geometry().lanes})
    dt: float = 0.1
    seed: int = 0
    duration: float | None = None  # None: `cycles` Webster cycles
    cycles: float = 10.0
    geometry: LaneGeometry = field(default_factory=default_geometry)
    params: PhysicalParams = field(default_factory=PhysicalParams)
    objective: ObjectiveWeights = field(default_factory=lambda: WEIGHT_PROFILES["comparison12"][0])
    scheduling: SchedulingWeights = field(default_factory=lambda: WEIGHT_PROFILES["comparison12"][1])
    horizons: Horizons = field(default_factory=Horizons)
    signal: SignalSettings = field(default_factory=SignalSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    margins: SafetyMargins = field(default_factory=SafetyMargins)
    max_batch: int = 8
    strict_safety: bool = True
    planning_latency: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        h = self.horizons
        if h.period <= 0:
            raise ConfigError("coordination period must be positive")
        if h.coordinated < h.period:
            raise ConfigError("coordinated horizon must be at least the coordination period")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        for name, val in (("period", h.period), ("coordinated horizon", h.coordinated), ("objective horizon", h.objective)):
            try:
                grid_steps(val, self.dt)
            except ValueError:
                raise ConfigError(f"{name} {val} is not a multiple of dt={self.dt}") from None
        if self.duration is not None and self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.duration is None and self.cycles <= 0:
            raise ConfigError("cycles must be positive")
        unknown = set(self.lane_rates) - set(self.geometry.lanes)
        if unknown:
            raise ConfigError(f"arrival rates given for unknown lanes {sorted(unknown)}")
        if any(r < 0 for r in self.lane_rates.values()):
            raise ConfigError("arrival rates must be >= 0")
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        if self.planning_latency != 0.0:
            raise ConfigError("nonzero planning latency is not supported")

    def rate(self, lane) -> float:
        return float(self.lane_rates.get(lane, 0.0))

    def signal_plan(self):
        return webster_timing(
            self.lane_rates, self.signal.sat_flow, self.signal.lost_per_phase, greedy_phases(self.geometry)
        )

    def resolved_duration(self) -> float:
        if self.duration is not None:
            return float(self.duration)
        try:
            plan = self.signal_plan()
        except Oversaturated as exc:
            raise ConfigError(f"cannot derive duration from signal cycles: {exc}") from None
        return self.cycles * plan.cycle

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "lane_rates": {str(k): v for k, v in sorted(self.lane_rates.items())},
            "dt": self.dt,
            "seed": self.seed,
            "duration": self.duration,
            "cycles": self.cycles,
            "resolved_duration": self.resolved_duration(),
            "geometry": self.geometry.to_dict(),
            "vehicle": asdict(self.params),
            "objective": asdict(self.objective),
            "scheduling": asdict(self.scheduling),
            "horizons": asdict(self.horizons),
            "signal": asdict(self.signal),
            "solver": asdict(self.solver),
            "margins": asdict(self.margins),
            "max_batch": self.max_batch,
            "strict_safety": self.strict_safety,
            "planning_latency": self.planning_latency,
        }


def lane_rates_for(sigma: float, geometry: LaneGeometry, pattern: str = "homogeneous") -> dict:
    """Per-lane rates from one nominal rate.

    ``"alternating"`` gives the lanes of the first signal phase the full rate
    and every other lane half of it.
    """
    if pattern == "homogeneous":
        return {lane: float(sigma) for lane in geometry.lanes}
    if pattern == "alternating":
        first = set(greedy_phases(geometry)[0])
        return {lane: float(sigma) if lane in first else 0.5 * float(sigma) for lane in geometry.lanes}
    raise ConfigError(f"unknown rate pattern {pattern!r}")


def _build(cls, block: dict, what: str):
    names = {f.name for f in fields(cls)}
    extra = set(block) - names
    if extra:
        raise ConfigError(f"unknown keys in [{what}]: {sorted(extra)}")
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{what}]: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from the parsed config file layout (see README)."""
    data = dict(data)
    geometry = geometry_from_config(data.pop("geometry", {"builtin": "four-way-straight"}))
    profile = data.pop("profile", "comparison12")
    if profile not in WEIGHT_PROFILES:
        raise ConfigError(f"unknown weight profile {profile!r}")
    obj, sched = WEIGHT_PROFILES[profile]
    if "objective" in data:
        obj = _build(ObjectiveWeights, {**asdict(obj), **data.pop("objective")}, "objective")
    if "scheduling" in data:
        sched = _build(SchedulingWeights, {**asdict(sched), **data.pop("scheduling")}, "scheduling")
    kw = {"geometry": geometry, "objective": obj, "scheduling": sched}
    for key, cls in (("vehicle", PhysicalParams), ("horizons", Horizons), ("signal", SignalSettings),
                     ("solver", SolverSettings), ("margins", SafetyMargins)):
        if key in data:
            kw["params" if key == "vehicle" else key] = _build(cls, data.pop(key), key)
    data.pop("compare", None)  # grid settings, consumed by the compare command
    arrivals = data.pop("arrivals", {})
    if "rates" in arrivals:
        kw["lane_rates"] = {int(k): float(v) for k, v in arrivals["rates"].items()}
    else:
        kw["lane_rates"] = lane_rates_for(arrivals.get("sigma", 0.1), geometry, arrivals.get("pattern", "homogeneous"))
    allowed = {"algorithm", "dt", "seed", "duration", "cycles", "max_batch", "strict_safety", "planning_latency"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown top-level config keys {sorted(extra)}")
    kw.update(data)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def assign_tC(t_arrival: float, T_coop: float) -> float:
    """First coordination instant at or after arrival."""
    if t_arrival < 0:
        raise ValueError("arrival time must be >= 0")
    k = math.ceil(t_arrival / T_coop - 1e-9)
    return k * T_coop


@dataclass
class _Vehicle:
    id: int
    lane: int
    length: float
    t_request: float
    s_arrival: int
    predecessor: int | None
    s_coord: int
    segments: list = field(default_factory=list)  # (start step, trajectory)
    scheduled: bool = False
    holds: int = 0
    s_coord_final: int | None = None

    def state(self, s: int) -> tuple[float, float]:
        start, tr = self.segments[-1]
        return tr.state(s - start)

    def accel_before(self, s: int) -> float:
        start, tr = self.segments[-1]
        return tr.accel(s - start - 1)

    @property
    def plan(self) -> SampledTrajectory:
        return self.segments[-1][1]


@dataclass
class VehicleRecord:
    id: int
    lane: int
    t_request: float
    t_A: float
    t_C: float
    t_E: float | None
    t_X: float | None
    ttc: float | None
    objective: float
    crossed: bool
    holds: int


@dataclass
class RoundRecord:
    step: int
    t: float
    n_coop: int
    n_held: int
    messages: dict
    lanes: list = field(default_factory=list)
    note: str = ""
    iterations: list = field(default_factory=list)


class SafetyViolation(RuntimeError):
    pass


class _Timer:
    def __init__(self):
        self.rounds_ms: list[float] = []
        self.provisional_ms: list[float] = []


@dataclass
class RunResult:
    config: RunConfig
    duration: float
    vehicles: list
    rounds: list
    arrivals: arr.ArrivalLog
    safety: dict
    signal_plan: dict | None = None
    histories: dict = field(default_factory=dict, repr=False)
    timing: dict = field(default_factory=dict, repr=False)

    def realized_rates(self) -> dict:
        rates = arr.realized_rate(self.arrivals, self.duration)
        return {lane: rates.get(lane, 0.0) for lane in self.config.geometry.lanes}

    def batch_sizes(self) -> list[int]:
        return [r.n_coop for r in self.rounds if r.n_coop > 0]

    def compute_ms_per_vehicle(self) -> float | None:
        """Total coordination wall time divided by coordinated batch members."""
        n = sum(r.n_coop for r in self.rounds)
        if n == 0:
            return None
        return sum(self.timing.get("rounds_ms", [])) / n

    def summary(self) -> dict:
        crossed = [v for v in self.vehicles if v.crossed]
        return {
            "vehicles": len(self.vehicles),
            "crossed": len(crossed),
            "avg_ttc": (sum(v.ttc for v in crossed) / len(crossed)) if crossed else None,
            "avg_objective": (sum(v.objective for v in crossed) / len(crossed)) if crossed else None,
            "realized_rates": {str(k): v for k, v in self.realized_rates().items()},
            "rounds": len(self.rounds),
            "held": sum(r.n_held for r in self.rounds),
        }

    def to_dict(self) -> dict:
        """Everything except wall-clock timing, so equal seeds serialize to
        equal bytes."""
        return {
            "config": self.config.to_dict(),
            "duration": self.duration,
            "summary": self.summary(),
            "safety": self.safety,
            "signal_plan": self.signal_plan,
            "vehicles": [asdict(v) for v in self.vehicles],
            "rounds": [
                {k: val for k, val in asdict(r).items() if k != "iterations"} for r in self.rounds
            ],
            "arrivals": [list(row) for row in self.arrivals.to_rows()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def write(self, out_dir, traces: bool = True, trajectories: bool = False) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "vehicles.csv").write_text(vehicles_csv(self.vehicles))
        (out / "rounds.csv").write_text(rounds_csv(self.rounds, self.timing.get("rounds_ms", [])))
        (out / "arrivals.csv").write_text(self.arrivals.to_csv())
        (out / "safety.json").write_text(json.dumps(self.safety, sort_keys=True, indent=1))
        (out / "config.json").write_text(json.dumps(self.config.to_dict(), sort_keys=True, indent=1))
        (out / "result.json").write_text(self.to_json())
        (out / "timing.json").write_text(json.dumps(self.timing, indent=1))
        if traces:
            tr = [asdict(r) for r in self.rounds]
            (out / "traces.json").write_text(json.dumps(tr, sort_keys=True, indent=1, default=str))
        if trajectories and self.histories:
            from .trajectory import to_csv

            parts = []
            for vid in sorted(self.histories):
                text = to_csv(self.histories[vid], vehicle_id=vid)
                parts.append(text if not parts else text.split("\n", 1)[1])
            (out / "trajectories.csv").write_text("".join(parts))
        return out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def vehicles_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "lane", "t_A", "t_C", "t_E", "t_X", "ttc", "objective", "crossed"])
    for v in records:
        w.writerow([v.id, v.lane, _fmt(v.t_A), _fmt(v.t_C), _fmt(v.t_E), _fmt(v.t_X), _fmt(v.ttc),
                    _fmt(v.objective), int(v.crossed)])
    return buf.getvalue()


def rounds_csv(rounds, wall_ms) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t", "n_coop", "n_held", "wall_ms", "intra_lane", "inter_lane", "central"])
    for i, r in enumerate(rounds):
        ms = wall_ms[i] if i < len(wall_ms) else ""
        m = r.messages
        w.writerow([r.step, _fmt(r.t), r.n_coop, r.n_held, _fmt(ms), m.get("intra_lane", 0),
                    m.get("inter_lane", 0), m.get("central", 0)])
    return buf.getvalue()


def comm_trace(round_record) -> dict:
    """Message counts of one round by category: predecessor trajectories and
    follower queues on the same lane, exit times read from conflicting lanes,
    and vehicles served centrally with weights and lane rates."""
    msgs = round_record.messages if hasattr(round_record, "messages") else round_record
    return {k: int(msgs.get(k, 0)) for k in ("intra_lane", "inter_lane", "central")}


class _Sim:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.geo = cfg.geometry
        self.p = cfg.params
        self.dt = cfg.dt
        self.duration = cfg.resolved_duration()
        self.S = int(math.floor(self.duration / self.dt + 1e-9))
        self.K = grid_steps(cfg.horizons.period, self.dt)
        self.Tc = cfg.horizons.coordinated
        self.v_arrival = arr.arrival_speed(self.geo, self.p, self.dt)
        self.vehicles: dict[int, _Vehicle] = {}
        self.tail: dict = {lane: None for lane in self.geo.lanes}
        self.scheduled: list = []
        self.rounds: list[RoundRecord] = []
        self.timer = _Timer()
        self.log = arr.ArrivalLog()
        self.plan = None
        self.dispatch: dict = {}
        if cfg.algorithm == "signal":
            self.plan = cfg.signal_plan()
            for lane in self.geo.lanes:
                self.dispatch[lane] = dispatch_steps(self.plan, lane, self.dt, self.K, 0, self.S + 1)
        gens = arr.lane_generators(cfg.seed, self.geo.lanes)
        self.pending = {
            lane: arr.request_times(lane, gens[lane], cfg.rate(lane), self.duration) for lane in self.geo.lanes
        }
        self.next_id = 0

    # planning instants -------------------------------------------------
    def next_planning_step(self, lane, s: int) -> int:
        if self.plan is None:
            return -(-s // self.K) * self.K
        steps = self.dispatch[lane]
        i = np.searchsorted(steps, s)
        if i < len(steps):
            return int(steps[i])
        # past the precomputed range: nothing will be dispatched before the end
        return self.S + self.K

    def base_spec(self, veh: _Vehicle, s: int, horizon: float, **kw) -> OcpSpec:
        x, v = veh.state(s) if veh.segments else (-self.geo.approach_length, self.v_arrival)
        pred = self.vehicles[veh.predecessor] if veh.predecessor is not None else None
        o = self.cfg.objective
        return OcpSpec(
            horizon=horizon,
            dt=self.dt,
            x0=x,
            v0=v,
            u_prev=veh.accel_before(s) if veh.segments else 0.0,
            t0=s * self.dt,
            w_v=o.w_v,
            w_a=o.w_a,
            w_j=o.w_j,
            predecessor=pred.plan if pred is not None else None,
            predecessor_length=pred.length if pred is not None else self.p.length,
            span=self.geo.span(veh.lane),
            params=self.p,
            tol=self.cfg.solver.tol,
            max_iter=self.cfg.solver.max_iter,
            **kw,
        )

    # admissions ----------------------------------------------------------
    def admit_step(self, s: int):
        t = s * self.dt
        d = self.geo.approach_length
        for lane in self.geo.lanes:
            queue = self.pending[lane]
            while queue and queue[0] <= t + 1e-9:
                tail_id = self.tail[lane]
                pred = None
                if tail_id is not None:
                    tv = self.vehicles[tail_id]
                    x, v = tv.state(s)
                    pred = (x, v, tv.length)
                if not arrival_gate(self.v_arrival, pred, self.geo, self.p, self.dt):
                    break
                req = queue.pop(0)
                self.log.record(lane, req, t)
                self.spawn(lane, req, s)

    def spawn(self, lane, requested: float, s: int):
        vid = self.next_id
        self.next_id += 1
        s_c = self.next_planning_step(lane, s)
        veh = _Vehicle(vid, lane, self.p.length, requested, s, self.tail[lane], s_c)
        self.vehicles[vid] = veh
        self.tail[lane] = vid
        d = self.geo.approach_length
        if s_c == s:
            veh.segments.append((s, integrate(-d, self.v_arrival, [], self.dt, s * self.dt)))
            return
        spec = self.base_spec(veh, s, (s_c - s) * self.dt, entry_prevention=True)
        t0 = time.perf_counter()
        sol = solve(spec)
        if not sol.ok:
            sol = hold_trajectory(spec)
        self.timer.provisional_ms.append(1e3 * (time.perf_counter() - t0))
        veh.segments.append((s, sol.trajectory))

    # coordination --------------------------------------------------------
    def batch_for(self, vids, s: int) -> list[BatchVehicle]:
        ids = set(vids)
        out = []
        for vid in sorted(vids):
            veh = self.vehicles[vid]
            spec = self.base_spec(veh, s, self.Tc, entry_prevention=False)
            pid = veh.predecessor if veh.predecessor in ids else None
            if pid is not None:
                spec = replace(spec, predecessor=None)
            out.append(BatchVehicle(vid, veh.lane, spec, pid, self.vehicles[vid].s_arrival * self.dt))
        return out

    def commit(self, outcome: RoundOutcome, s: int, retry_step):
        for vid, sol in outcome.plans.items():
            veh = self.vehicles[vid]
            veh.segments.append((s, sol.trajectory))
            if vid in outcome.held:
                veh.holds += 1
                veh.s_coord = retry_step(veh)
            else:
                veh.scheduled = True
                veh.s_coord_final = s
        self.scheduled.extend(outcome.entries)
        self.scheduled = prune_scheduled(self.scheduled, s * self.dt)

    def coordinate(self, s: int):
        t = s * self.dt
        cfg = self.cfg
        due = [vid for vid, veh in self.vehicles.items() if not veh.scheduled and veh.s_coord == s]
        if cfg.algorithm == "signal":
            self.dispatch_signal(s, due)
            return
        if s % self.K != 0:
            return
        t0 = time.perf_counter()
        if not due:
            self.timer.rounds_ms.append(1e3 * (time.perf_counter() - t0))
            self.rounds.append(RoundRecord(s, t, 0, 0, {"intra_lane": 0, "inter_lane": 0, "central": 0}))
            return
        batch = self.batch_for(due, s)
        w_v = cfg.objective.w_v
        if cfg.algorithm == "ddswa":
            out = ddswa_round(batch, self.scheduled, cfg.scheduling, t, self.geo, cfg.lane_rates, w_v)
        elif cfg.algorithm == "fifo":
            out = fifo_round(batch, self.scheduled, t, self.geo, w_v)
        else:
            out = combined_round(batch, self.scheduled, t, self.geo, cfg.max_batch, w_v)
        self.timer.rounds_ms.append(1e3 * (time.perf_counter() - t0))
        self.commit(out, s, lambda veh: s + self.K)
        lanes = sorted({self.vehicles[v].lane for v in due})
        self.rounds.append(RoundRecord(s, t, len(due), len(out.held), out.messages, lanes, out.note, out.iterations))

    def dispatch_signal(self, s: int, due):
        t = s * self.dt
        by_lane = {}
        for vid in due:
            by_lane.setdefault(self.vehicles[vid].lane, []).append(vid)
        for lane in sorted(by_lane):
            t0 = time.perf_counter()
            green = next_green(self.plan, lane, t)
            s_next = self.next_planning_step(lane, s + 1)
            hold_h = max(self.Tc, (s_next - s) * self.dt)
            batch = self.batch_for(by_lane[lane], s)
            out = green_dispatch(batch, self.scheduled, green, t, self.geo, hold_h)
            self.timer.rounds_ms.append(1e3 * (time.perf_counter() - t0))
            self.commit(out, s, lambda veh: s_next)
            self.rounds.append(RoundRecord(s, t, len(batch), len(out.held), out.messages, [lane], "",
                                           out.iterations))

    # run -----------------------------------------------------------------
    def run(self) -> RunResult:
        for s in range(self.S + 1):
            self.admit_step(s)
            self.coordinate(s)
        for lane in self.geo.lanes:
            for req in self.pending[lane]:
                self.log.record(lane, req, None)
        return self.finish()

    def history(self, veh: _Vehicle) -> SampledTrajectory:
        pieces = []
        segs = veh.segments
        for i, (start, tr) in enumerate(segs):
            if i + 1 < len(segs):
                n_used = segs[i + 1][0] - start
                if n_used > tr.n_steps:
                    tr = tr.extended(n_used - tr.n_steps)
                pieces.append((n_used, tr))
            else:
                need = self.S - start
                if need > tr.n_steps:
                    tr = tr.extended(need - tr.n_steps)
                pieces.append((tr.n_steps, tr))
        return concatenate(pieces)

    def finish(self) -> RunResult:
        cfg = self.cfg
        o = cfg.objective
        hists = {vid: self.history(veh) for vid, veh in self.vehicles.items()}
        records = []
        for vid in sorted(self.vehicles):
            veh = self.vehicles[vid]
            h = hists[vid]
            t_e = crossing_time(h, ENTRY_TOL)
            t_x = crossing_time(h, self.geo.span(veh.lane))
            t_a = veh.s_arrival * self.dt
            s_c = veh.s_coord_final if veh.s_coord_final is not None else veh.s_coord
            crossed = t_x is not None and t_x <= self.duration + 1e-9
            records.append(
                VehicleRecord(
                    vid, veh.lane, veh.t_request, t_a, s_c * self.dt, t_e, t_x,
                    (t_x - t_a) if t_x is not None else None,
                    vehicle_objective(h, o.w_v, o.w_a, o.w_j, cfg.horizons.objective, t_a),
                    crossed, veh.holds,
                )
            )
        safety = safety_sweep(self.vehicles, hists, records, cfg, self.v_arrival)
        timing = {
            "rounds_ms": self.timer.rounds_ms,
            "provisional_ms": self.timer.provisional_ms,
        }
        result = RunResult(
            cfg, self.duration, records, self.rounds, self.log, safety,
            self.plan.to_dict() if self.plan is not None else None, hists, timing,
        )
        if cfg.strict_safety and not safety["ok"]:
            raise SafetyViolation(json.dumps({k: v for k, v in safety.items() if k != "details"}, sort_keys=True)
                                  + "\n" + json.dumps(safety.get("details", [])[:20], default=str))
        return result


def safety_sweep(vehicles, hists, records, cfg: RunConfig, v_arrival: float) -> dict:
    """Post-hoc check of every executed trajectory.

    Rear-end margins use the continuous following distance for every
    consecutive pair on a lane while the follower is inside the region of
    interest; conflict-region occupancy intervals are compared for every pair
    of vehicles on conflicting lanes; bounds are checked per vehicle; and the
    admission gate is replayed on the executed states.
    """
    geo, p, m = cfg.geometry, cfg.params, cfg.margins
    details = []
    rear_bad = 0
    min_margin = math.inf
    pairs = 0
    gate_bad = 0
    for vid, veh in vehicles.items():
        if veh.predecessor is None:
            continue
        pred = vehicles[veh.predecessor]
        rep = rear_end_ok(hists[vid], hists[pred.id], pred.length, p.r, p.u_min, m.rear_end_tol,
                          dt_margin=0.0, max_follower_x=geo.span(veh.lane))
        pairs += 1
        min_margin = min(min_margin, rep.min_margin)
        if rep.violations:
            rear_bad += len(rep.violations)
            details.append({"kind": "rear_end", "follower": vid, "leader": pred.id, "min_margin": rep.min_margin,
                            "first_index": rep.violations[0]})
        k = hists[pred.id].index_of(veh.s_arrival * cfg.dt)
        xp, vp = hists[pred.id].state(k)
        if not arrival_gate(v_arrival, (xp, vp, pred.length), geo, p, cfg.dt):
            gate_bad += 1
            details.append({"kind": "gate", "vehicle": vid})

    by_lane = {}
    for r in records:
        if r.t_E is not None:
            t_x = r.t_X if r.t_X is not None else math.inf
            by_lane.setdefault(r.lane, []).append((r.t_E, t_x, r.id))
    overlap_bad = 0
    worst_overlap = 0.0
    lanes = sorted(by_lane)
    for i, l1 in enumerate(lanes):
        for l2 in lanes[i + 1:]:
            if not geo.incompatible(l1, l2):
                continue
            a = np.array([(e, x) for e, x, _ in by_lane[l1]])
            b = np.array([(e, x) for e, x, _ in by_lane[l2]])
            # overlap length; positive means both inside at once
            ov = np.minimum(a[:, 1][:, None], b[:, 1][None, :]) - np.maximum(a[:, 0][:, None], b[:, 0][None, :])
            bad = np.argwhere(ov > m.overlap_tol)
            overlap_bad += len(bad)
            if len(bad):
                worst_overlap = max(worst_overlap, float(ov.max()))
                for ia, ib in bad[:5]:
                    details.append({"kind": "overlap", "a": by_lane[l1][ia][2], "b": by_lane[l2][ib][2],
                                    "overlap": float(ov[ia, ib])})
    bound_bad = 0
    for vid, h in hists.items():
        viol = check_bounds(h, p, 1e-6)
        if viol:
            bound_bad += len(viol)
            details.append({"kind": "bounds", "vehicle": vid, "first": viol[0]._asdict()})
    ok = rear_bad == 0 and overlap_bad == 0 and bound_bad == 0 and gate_bad == 0
    return {
        "ok": ok,
        "rear_end_pairs": pairs,
        "rear_end_violations": rear_bad,
        "min_rear_end_margin": None if math.isinf(min_margin) else min_margin,
        "overlap_violations": overlap_bad,
        "max_overlap": worst_overlap,
        "bound_violations": bound_bad,
        "gate_violations": gate_bad,
        "details": details,
    }


def run(config: RunConfig) -> RunResult:
    return _Sim(config).run()
