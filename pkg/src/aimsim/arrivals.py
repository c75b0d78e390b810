"""Poisson arrival streams with admission gating."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import LaneGeometry, PhysicalParams
from .safety import arrival_gate, entry_prevention_cap


@dataclass
class ArrivalLog:
    """Requested and admitted entry times per lane.

    ``admitted[lane][i]`` belongs to ``requested[lane][i]`` and is None when
    the request was still waiting when the run ended.
    """

    requested: dict = field(default_factory=dict)
    admitted: dict = field(default_factory=dict)

    def record(self, lane, requested_t: float, admitted_t: float | None):
        self.requested.setdefault(lane, []).append(requested_t)
        self.admitted.setdefault(lane, []).append(admitted_t)

    def lanes(self):
        return sorted(set(self.requested) | set(self.admitted))

    def admitted_times(self, lane) -> list:
        return [t for t in self.admitted.get(lane, []) if t is not None]

    def delays(self, lane) -> list:
        return [a - r for r, a in zip(self.requested.get(lane, []), self.admitted.get(lane, [])) if a is not None]

    def to_rows(self):
        for lane in self.lanes():
            for r, a in zip(self.requested[lane], self.admitted[lane]):
                yield lane, r, a, (None if a is None else a - r)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lane", "requested_t", "admitted_t", "delay"])
        for lane, r, a, d in self.to_rows():
            w.writerow([lane, repr(r), "" if a is None else repr(a), "" if d is None else repr(d)])
        return buf.getvalue()


def lane_generators(seed: int, lanes) -> dict:
    """One independent generator per lane, spawned from the master seed in
    sorted lane order."""
    lanes = sorted(lanes)
    children = np.random.SeedSequence(seed).spawn(len(lanes))
    return {lane: np.random.default_rng(ss) for lane, ss in zip(lanes, children)}


def next_arrival(lane, rng: np.random.Generator, sigma_l: float):
    """Exponential inter-arrival gap with mean ``1/sigma_l``; the generator
    is advanced in place and returned."""
    if sigma_l <= 0:
        raise ValueError(f"lane {lane}: arrival rate must be positive")
    return float(rng.exponential(1.0 / sigma_l)), rng


def request_times(lane, rng: np.random.Generator, sigma_l: float, horizon: float) -> list[float]:
    """All requested arrival times in [0, horizon]."""
    out = []
    if sigma_l <= 0:
        return out
    t = 0.0
    while True:
        gap, rng = next_arrival(lane, rng, sigma_l)
        t += gap
        if t > horizon:
            return out
        out.append(t)


def arrival_speed(geometry: LaneGeometry, params: PhysicalParams, dt: float = 0.0) -> float:
    """Speed of every admitted vehicle: the largest one the gate accepts."""
    return min(params.v_max, entry_prevention_cap(-geometry.approach_length, params.u_min, dt))


def first_step_at_or_after(t: float, dt: float) -> int:
    return int(math.ceil(t / dt - 1e-9))


def admit(
    requested_t: float,
    tail: Callable[[float], tuple[float, float, float]] | None,
    geometry: LaneGeometry,
    params: PhysicalParams,
    dt: float,
    t_max: float,
) -> tuple[float | None, float]:
    """Earliest grid time in [requested_t, t_max] at which the gate admits a
    vehicle behind ``tail`` (a function of time returning x, v, length).

    Returns (admitted time or None, arrival speed).
    """
    v = arrival_speed(geometry, params, dt)
    s = first_step_at_or_after(requested_t, dt)
    while s * dt <= t_max + 1e-9:
        t = s * dt
        pred = tail(t) if tail is not None else None
        if arrival_gate(v, pred, geometry, params, dt):
            return t, v
        s += 1
    return None, v


def realized_rate(log: ArrivalLog, horizon: float) -> dict:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return {lane: len(log.admitted_times(lane)) / horizon for lane in log.lanes()}
