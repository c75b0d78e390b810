"""Coordinated-phase planning: precedence-ordered sequential planning,
exhaustive order enumeration, and first-come-first-served."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from .model import LaneGeometry, ScheduleEntry
from .ocp import BatchVehicle, hold_trajectory, solve_in_order
from .trajectory import vehicle_objective


@dataclass(frozen=True)
class SchedulingWeights:
    """Weights of the precedence index (distance, velocity, time waited,
    queue length, queue separation, lane rate, wait penalty) and the demand
    scaling factor ``w_l``."""

    w_x: float = 0.1
    w_v: float = 5.0
    w_t: float = 3.0
    w_n: float = 4.5
    w_s: float = 6.0
    w_sigma: float = 40.0
    w_w: float = 0.5
    w_l: float = 0.02

    def __post_init__(self):
        for k, val in asdict(self).items():
            if val < 0:
                raise ValueError(f"scheduling weight {k} must be >= 0, got {val}")

    def scaled(self, lam: float) -> "SchedulingWeights":
        return SchedulingWeights(**{k: lam * val for k, val in asdict(self).items()})


@dataclass(frozen=True)
class ObjectiveWeights:
    w_v: float = 1.0
    w_a: float = 0.0
    w_j: float = 0.0


# (objective weights, scheduling weights) used by the comparison experiments
WEIGHT_PROFILES = {
    "comparison12": (
        ObjectiveWeights(1.0, 0.0, 0.0),
        SchedulingWeights(0.1, 5.0, 3.0, 4.5, 6.0, 40.0, 0.5, 0.02),
    ),
    "comparison3": (
        ObjectiveWeights(1.0, 0.0, 0.0),
        SchedulingWeights(0.5, 4.0, 3.0, 6.0, 7.0, 65.0, 1.0, 0.02),
    ),
    "comparison4": (
        ObjectiveWeights(1.0, 1.0, 1.0),
        SchedulingWeights(0.8, 7.0, 5.0, 5.0, 7.0, 40.0, 5.0, 0.02),
    ),
}


@dataclass(frozen=True)
class PrecedenceBreakdown:
    vehicle: int
    distance: float
    velocity: float
    waited: float
    queue: int
    separation: float
    lane_rate: float
    tau: float
    precedence: float
    demand: float

    @classmethod
    def from_features(cls, weights: SchedulingWeights, vehicle, distance, velocity, waited, queue, separation,
                      lane_rate, tau) -> "PrecedenceBreakdown":
        w = weights
        demand = (
            w.w_x * distance
            + w.w_v * velocity
            + w.w_t * waited
            + w.w_n * queue
            + w.w_s * separation
            + w.w_sigma * lane_rate
        )
        return cls(vehicle, distance, velocity, waited, queue, separation, lane_rate, tau,
                   demand - w.w_w * tau, demand)


def front_set(vehicles) -> list:
    """Per lane, the vehicle nearest the intersection (largest x)."""
    best = {}
    for veh in vehicles:
        cur = best.get(veh.lane)
        if cur is None or veh.x > cur.x or (veh.x == cur.x and veh.id < cur.id):
            best[veh.lane] = veh
    return sorted(best.values(), key=lambda veh: veh.id)


def min_wait_time(lane, scheduled, t_C: float, geometry: LaneGeometry) -> tuple[float, int]:
    """Latest conflicting exit relative to ``t_C``, clamped at 0, and the
    number of exit times consulted."""
    tau = 0.0
    reads = 0
    for entry in scheduled:
        if geometry.incompatible(lane, entry.lane):
            reads += 1
            tau = max(tau, entry.t_exit - t_C)
    return tau, reads


def prune_scheduled(scheduled, t_now: float) -> list:
    return [e for e in scheduled if not e.t_exit < t_now]


def precedence(vehicle, pool, weights: SchedulingWeights, scheduled, lane_rates, t_C: float,
               geometry: LaneGeometry) -> tuple[PrecedenceBreakdown, int]:
    """Precedence of a front vehicle given the unscheduled ``pool``; returns
    the breakdown and the number of exit times read for the wait term."""
    queue = [q for q in pool if q.lane == vehicle.lane and q.id != vehicle.id and q.x < vehicle.x]
    sep = sum(vehicle.x - q.x for q in queue) / len(queue) if queue else 0.0
    tau, reads = min_wait_time(vehicle.lane, scheduled, t_C, geometry)
    bd = PrecedenceBreakdown.from_features(
        weights,
        vehicle.id,
        geometry.approach_length + vehicle.x,
        vehicle.v,
        t_C - vehicle.t_arrival,
        len(queue),
        sep,
        float(lane_rates.get(vehicle.lane, 0.0)),
        tau,
    )
    return bd, reads


def weighted_velocity_coeff(demands, w_l: float, w_v: float) -> float:
    demands = list(demands)
    if not demands:
        raise ValueError("front set is empty")
    return w_l * (sum(demands) / len(demands)) * w_v


@dataclass
class RoundOutcome:
    """Result of one coordination round.

    ``plans`` maps vehicle id to its new solution (a hold plan for vehicles in
    ``held``); ``order`` lists the scheduled vehicles in planning order.
    """

    plans: dict
    entries: list
    held: list
    order: list
    iterations: list = field(default_factory=list)
    messages: dict = field(default_factory=dict)
    note: str = ""

    def total_objective(self, w_v: float, w_a: float, w_j: float, horizon: float) -> float:
        """Sum of every scheduled vehicle's objective over its coordinated
        horizon under the given weights."""
        tot = 0.0
        for vid in self.order:
            tr = self.plans[vid].trajectory
            tot += vehicle_objective(tr, w_v, w_a, w_j, horizon)
        return tot


class BatchTooLarge(RuntimeError):
    pass


def _messages(intra=0, inter=0, central=0):
    return {"intra_lane": intra, "inter_lane": inter, "central": central}


def _has_predecessor(bv: BatchVehicle) -> bool:
    return bv.predecessor_id is not None or bv.spec.predecessor is not None


def _sequential_round(batch, scheduled, t_C, geometry, choose, objective):
    """Shared loop: repeatedly pick one front vehicle, plan it, commit it."""
    remaining = list(batch)
    fixed = list(scheduled)
    plans, entries, held, order, iters = {}, [], [], [], []
    msgs = _messages()
    seen_front = set()
    while remaining:
        front = front_set(remaining)
        pick, info, reads = choose(front, remaining, fixed)
        msgs["inter_lane"] += reads
        for veh in front:
            if veh.id not in seen_front:
                seen_front.add(veh.id)
                msgs["central"] += 1
                msgs["intra_lane"] += sum(1 for q in remaining if q.lane == veh.lane and q.id != veh.id)
        w_v = objective(info)
        sol, entry = solve_in_order(pick, geometry, fixed, t_C, {k: s.trajectory for k, s in plans.items()}, w_v)
        if _has_predecessor(pick):
            msgs["intra_lane"] += 1
        rec = {"front": [veh.id for veh in front], "chosen": pick.id, "w_v": w_v, **info.get("trace", {})}
        if entry is None:
            spec = pick.spec
            if pick.predecessor_id is not None:
                spec = replace(spec, predecessor=plans[pick.predecessor_id].trajectory)
            sol = hold_trajectory(replace(spec, w_v=w_v))
            held.append(pick.id)
            rec["status"] = "held"
        else:
            entries.append(entry)
            fixed.append(entry)
            order.append(pick.id)
            rec["status"] = sol.status.value
            rec["t_entry"] = entry.t_entry
            rec["t_exit"] = entry.t_exit
        plans[pick.id] = sol
        iters.append(rec)
        remaining = [veh for veh in remaining if veh.id != pick.id]
    return RoundOutcome(plans, entries, held, order, iters, msgs)


def ddswa_round(batch, scheduled, weights: SchedulingWeights, t_C: float, geometry: LaneGeometry,
                lane_rates, w_v: float = 1.0) -> RoundOutcome:
    """Plan the batch one vehicle at a time, highest precedence first, each
    with a demand-weighted velocity reward."""

    def choose(front, remaining, fixed):
        bds, reads = [], 0
        for veh in front:
            bd, r = precedence(veh, remaining, weights, fixed, lane_rates, t_C, geometry)
            bds.append(bd)
            reads += r
        best = max(bds, key=lambda b: (b.precedence, -b.vehicle))
        pick = next(veh for veh in front if veh.id == best.vehicle)
        wbar = weighted_velocity_coeff((b.demand for b in bds), weights.w_l, w_v)
        trace = {"tau": best.tau, "breakdowns": [asdict(b) for b in bds]}
        return pick, {"wbar": wbar, "trace": trace}, reads

    return _sequential_round(batch, scheduled, t_C, geometry, choose, lambda info: info["wbar"])


def fifo_round(batch, scheduled, t_C: float, geometry: LaneGeometry, w_v: float = 1.0) -> RoundOutcome:
    """Plan the front vehicle that arrived first, repeatedly."""

    def choose(front, remaining, fixed):
        pick = min(front, key=lambda veh: (veh.t_arrival, veh.id))
        tau, reads = min_wait_time(pick.lane, fixed, t_C, geometry)
        return pick, {"trace": {"tau": tau}}, reads

    return _sequential_round(batch, scheduled, t_C, geometry, choose, lambda info: w_v)


def count_linear_extensions(batch) -> int:
    """Number of entry orders consistent with every lane's in-lane order."""
    sizes = {}
    for bv in batch:
        sizes[bv.lane] = sizes.get(bv.lane, 0) + 1
    total = math.factorial(sum(sizes.values()))
    for s in sizes.values():
        total //= math.factorial(s)
    return total


def linear_extensions(batch):
    """All entry orders (tuples of ids) keeping each lane's front-to-back
    order, in lexicographic order of ids at each branching."""
    chains = _lane_chains(batch)

    def rec(heads, prefix):
        if all(h == len(chains[lane]) for lane, h in heads.items()):
            yield tuple(prefix)
            return
        cand = sorted((chains[lane][h].id, lane) for lane, h in heads.items() if h < len(chains[lane]))
        for vid, lane in cand:
            heads[lane] += 1
            prefix.append(vid)
            yield from rec(heads, prefix)
            prefix.pop()
            heads[lane] -= 1

    yield from rec({lane: 0 for lane in chains}, [])


def _lane_chains(batch):
    chains = {}
    for bv in sorted(batch, key=lambda b: (-b.x, b.id)):
        chains.setdefault(bv.lane, []).append(bv)
    return chains


def combined_round(batch, scheduled, t_C: float, geometry: LaneGeometry, max_batch: int = 8,
                   w_v: float = 1.0) -> RoundOutcome:
    """Try every in-lane-consistent entry order and keep the one with the
    largest total objective.

    Orders sharing a prefix share that prefix's solves. If no order lets every
    vehicle exit within the horizon, the batch is planned first-come-first-
    served with holds instead.
    """
    if len(batch) > max_batch:
        raise BatchTooLarge(f"batch of {len(batch)} vehicles exceeds max_batch={max_batch}")
    chains = _lane_chains(batch)
    best = {"total": -math.inf, "order": None, "sols": None, "entries": None}
    n_solves = 0
    n_orders = 0

    def rec(heads, fixed, sols, entries, total):
        nonlocal n_solves, n_orders
        if all(h == len(chains[lane]) for lane, h in heads.items()):
            n_orders += 1
            if total > best["total"]:
                best.update(total=total, order=[e.vehicle for e in entries], sols=dict(sols), entries=list(entries))
            return
        cand = sorted((chains[lane][h].id, lane) for lane, h in heads.items() if h < len(chains[lane]))
        for vid, lane in cand:
            bv = chains[lane][heads[lane]]
            plans = {k: s.trajectory for k, s in sols.items()}
            sol, entry = solve_in_order(bv, geometry, fixed, t_C, plans, w_v)
            n_solves += 1
            if entry is None:
                continue
            heads[lane] += 1
            sols[vid] = sol
            entries.append(entry)
            rec(heads, fixed + [entry], sols, entries, total + sol.objective)
            entries.pop()
            del sols[vid]
            heads[lane] -= 1

    rec({lane: 0 for lane in chains}, list(scheduled), {}, [], 0.0)
    n = len(batch)
    msgs = _messages(
        intra=sum(1 for bv in batch if _has_predecessor(bv)),
        inter=sum(1 for e in scheduled for bv in batch if geometry.incompatible(bv.lane, e.lane)),
        central=n,
    )
    if best["order"] is None:
        out = fifo_round(batch, scheduled, t_C, geometry, w_v)
        out.note = "no order feasible; planned first-come-first-served with holds"
        out.iterations.insert(0, {"orders_feasible": 0, "solves": n_solves})
        return out
    info = {"orders_feasible": n_orders, "orders_total": count_linear_extensions(batch), "solves": n_solves,
            "best_total": best["total"], "order": best["order"]}
    return RoundOutcome(best["sols"], best["entries"], [], best["order"], [info], msgs)

