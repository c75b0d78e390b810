"""Fixed-time signal baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .coordination import RoundOutcome
from .model import LaneGeometry
from .ocp import BatchVehicle, hold_trajectory, solve_in_order


class Oversaturated(ValueError):
    """Critical flow ratios sum to 1 or more; no finite cycle exists."""


@dataclass(frozen=True)
class SignalPlan:
    phases: tuple  # tuple of lane tuples
    cycle: float
    greens: tuple
    lost: tuple
    offsets: tuple  # green start of each phase within the cycle

    def __post_init__(self):
        total = sum(self.greens) + sum(self.lost)
        if not math.isclose(total, self.cycle, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"greens + lost times ({total}) must equal the cycle ({self.cycle})")
        seen = [lane for ph in self.phases for lane in ph]
        if len(seen) != len(set(seen)):
            raise ValueError("a lane appears in more than one phase")

    def phase_of(self, lane) -> int:
        for p, lanes in enumerate(self.phases):
            if lane in lanes:
                return p
        raise KeyError(f"lane {lane} is not signalized")

    def to_dict(self) -> dict:
        return {
            "phases": [list(p) for p in self.phases],
            "cycle": self.cycle,
            "greens": list(self.greens),
            "lost": list(self.lost),
            "offsets": list(self.offsets),
        }


def greedy_phases(geometry: LaneGeometry) -> tuple:
    """Colour the conflict graph greedily in lane order; each colour is a
    phase of mutually compatible lanes."""
    phases: list[list] = []
    for lane in geometry.lanes:
        for ph in phases:
            if all(not geometry.incompatible(lane, other) for other in ph):
                ph.append(lane)
                break
        else:
            phases.append([lane])
    return tuple(tuple(ph) for ph in phases)


def webster_timing(lane_rates, sat_flow: float, lost_per_phase: float, phases) -> SignalPlan:
    """Webster cycle length and green split from the critical flow ratios."""
    if sat_flow <= 0:
        raise ValueError("saturation flow must be positive")
    phases = tuple(tuple(p) for p in phases)
    if not phases:
        raise ValueError("need at least one phase")
    y = [max(float(lane_rates.get(l, 0.0)) / sat_flow for l in ph) for ph in phases]
    Y = sum(y)
    if Y >= 1:
        raise Oversaturated(f"flow ratio sum {Y:.3f} >= 1")
    lost = tuple(float(lost_per_phase) for _ in phases)
    L = sum(lost)
    C = (1.5 * L + 5.0) / (1.0 - Y)
    if Y > 0:
        greens = tuple((C - L) * (yp / Y) for yp in y)
    else:
        greens = tuple((C - L) / len(phases) for _ in phases)
    offsets, t = [], 0.0
    for g, lo in zip(greens, lost):
        offsets.append(t)
        t += g + lo
    return SignalPlan(phases, C, greens, lost, tuple(offsets))


def signal_step(t: float, plan: SignalPlan) -> set:
    """Lanes showing green at time ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    tau = t - plan.cycle * math.floor(t / plan.cycle)
    eps = 1e-9  # keeps round-off in the green split from shifting boundaries
    for lanes, off, g in zip(plan.phases, plan.offsets, plan.greens):
        if off - eps <= tau < off + g - eps:
            return set(lanes)
    return set()


def next_green(plan: SignalPlan, lane, t: float) -> tuple[float, float]:
    """Green window [start, end) of ``lane`` that is active at ``t`` or, if
    the lane is red at ``t``, the next one."""
    p = plan.phase_of(lane)
    c = math.floor(t / plan.cycle)
    for cc in (c - 1, c, c + 1):
        start = cc * plan.cycle + plan.offsets[p]
        end = start + plan.greens[p]
        if t < end:
            return start, end
    raise AssertionError("unreachable")


def dispatch_steps(plan: SignalPlan, lane, dt: float, period_steps: int, s_from: int, s_to: int) -> list[int]:
    """Grid steps in [s_from, s_to] at which ``lane`` is dispatched: the first
    step of every green and every multiple of the coordination period inside
    a green."""
    out = set()
    t = s_from * dt
    while True:
        start, end = next_green(plan, lane, t)
        s0 = int(math.ceil(start / dt - 1e-9))
        s1 = int(math.ceil(end / dt - 1e-9))  # first step at or after green end
        if s0 > s_to:
            break
        if s0 >= s_from:
            out.add(s0)
        k = -(-max(s0, s_from) // period_steps) * period_steps
        while k < s1 and k <= s_to:
            if k >= s_from:
                out.add(k)
            k += period_steps
        t = max(end, t + dt)
    return sorted(out)


def green_dispatch(
    batch: list[BatchVehicle],
    scheduled,
    green: tuple[float, float],
    t_now: float,
    geometry: LaneGeometry,
    hold_horizon: float,
) -> RoundOutcome:
    """Plan one lane's waiting vehicles, front to back, to cross inside the
    green window. The first vehicle that cannot make it is held together with
    everyone behind it."""
    g_start, g_end = green
    ordered = sorted(batch, key=lambda b: (-b.x, b.id))
    plans, entries, held, order, iters = {}, [], [], [], []
    fixed = list(scheduled)
    blocked = False
    for bv in ordered:
        traj_plans = {k: s.trajectory for k, s in plans.items()}
        sol, entry = None, None
        if not blocked:
            bv_green = replace(bv, spec=replace(bv.spec, exit_by=g_end))
            sol, entry = solve_in_order(bv_green, geometry, fixed, max(g_start, t_now), traj_plans)
        if entry is None:
            blocked = True
            spec = replace(bv.spec, horizon=hold_horizon)
            if bv.predecessor_id is not None:
                spec = replace(spec, predecessor=traj_plans[bv.predecessor_id])
            sol = hold_trajectory(spec)
            held.append(bv.id)
            iters.append({"chosen": bv.id, "status": "held"})
        else:
            entries.append(entry)
            fixed.append(entry)
            order.append(bv.id)
            iters.append({"chosen": bv.id, "status": sol.status.value, "t_entry": entry.t_entry,
                          "t_exit": entry.t_exit})
        plans[bv.id] = sol
    msgs = {
        "intra_lane": sum(1 for bv in ordered if bv.predecessor_id is not None or bv.spec.predecessor is not None),
        "inter_lane": 0,
        "central": len(ordered),
    }
    return RoundOutcome(plans, entries, held, order, iters, msgs)
