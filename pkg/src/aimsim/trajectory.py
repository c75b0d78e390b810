"""Piecewise-constant-acceleration trajectories on a fixed time grid."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import PhysicalParams


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """Trajectory sampled at ``t0 + k*dt``.

    ``u[k]`` acts on ``[t_k, t_{k+1})``; ``x`` and ``v`` have one more sample
    than ``u``. ``u_prev`` is the acceleration applied just before ``t0`` and
    seeds the first jerk difference.
    """

    t0: float
    dt: float
    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    u_prev: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.u)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.x))

    def index_of(self, t: float) -> int:
        """Grid index of time ``t`` (which must lie on the grid)."""
        k = (t - self.t0) / self.dt
        ik = int(round(k))
        if abs(k - ik) > 1e-6:
            raise ValueError(f"time {t} is off the trajectory grid")
        return ik

    def state(self, k: int) -> tuple[float, float]:
        """(x, v) at grid index ``k``; past the end the last state is coasted
        at constant velocity."""
        n = len(self.x) - 1
        if k < 0:
            raise IndexError("index before trajectory start")
        if k <= n:
            return float(self.x[k]), float(self.v[k])
        vend = max(float(self.v[n]), 0.0)
        return float(self.x[n]) + vend * (k - n) * self.dt, vend

    def accel(self, k: int) -> float:
        if k < 0:
            return self.u_prev
        if k < self.n_steps:
            return float(self.u[k])
        return 0.0

    def window(self, k0: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions and velocities at indices ``k0 .. k0+n`` (inclusive),
        extrapolated at constant terminal velocity past the end."""
        last = len(self.x) - 1
        idx = np.arange(k0, k0 + n + 1)
        if k0 < 0:
            raise IndexError("window starts before trajectory")
        xs = np.empty(n + 1)
        vs = np.empty(n + 1)
        inside = idx <= last
        xs[inside] = self.x[idx[inside]]
        vs[inside] = self.v[idx[inside]]
        if not inside.all():
            vend = max(float(self.v[last]), 0.0)
            extra = idx[~inside] - last
            xs[~inside] = self.x[last] + vend * extra * self.dt
            vs[~inside] = vend
        return xs, vs

    def truncated(self, n_steps: int) -> "SampledTrajectory":
        n_steps = max(0, min(n_steps, self.n_steps))
        return SampledTrajectory(
            self.t0, self.dt, self.u[:n_steps], self.v[: n_steps + 1], self.x[: n_steps + 1], self.u_prev
        )

    def extended(self, n_steps: int) -> "SampledTrajectory":
        """Append ``n_steps`` of zero acceleration (constant velocity)."""
        if n_steps <= 0:
            return self
        u = np.concatenate([self.u, np.zeros(n_steps)])
        return integrate(self.x[0], self.v[0], u, self.dt, self.t0, self.u_prev)


def integrate(x0, v0, u, dt, t0=0.0, u_prev=0.0) -> SampledTrajectory:
    """Integrate the double integrator exactly under piecewise-constant ``u``.

    The recursion is evaluated left to right, so integrating a trajectory's
    own acceleration from its own initial state reproduces it bit for bit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float).copy()
    v = np.add.accumulate(np.concatenate([[float(v0)], u * dt]))
    dx = v[:-1] * dt + 0.5 * u * dt * dt
    x = np.add.accumulate(np.concatenate([[float(x0)], dx]))
    u.setflags(write=False)
    v.setflags(write=False)
    x.setflags(write=False)
    return SampledTrajectory(float(t0), float(dt), u, v, x, float(u_prev))


def concatenate(pieces: list[tuple[int, SampledTrajectory]]) -> SampledTrajectory:
    """Splice trajectories that each take over from the previous one.

    ``pieces`` holds ``(n_used, traj)``: the first ``n_used`` steps of every
    piece but the last are kept, the last piece is kept whole. Each piece must
    start where the previous kept part ends.
    """
    if not pieces:
        raise ValueError("nothing to concatenate")
    head = pieces[0][1]
    us = []
    for i, (n_used, traj) in enumerate(pieces):
        if i == len(pieces) - 1:
            us.append(np.asarray(traj.u))
        else:
            us.append(np.asarray(traj.u[:n_used]))
    u = np.concatenate(us) if us else np.zeros(0)
    # rebuild states from the stored samples rather than re-integrating, so the
    # executed record is exactly what each plan committed to
    xs, vs = [], []
    for i, (n_used, traj) in enumerate(pieces):
        if i == len(pieces) - 1:
            xs.append(np.asarray(traj.x))
            vs.append(np.asarray(traj.v))
        else:
            xs.append(np.asarray(traj.x[:n_used]))
            vs.append(np.asarray(traj.v[:n_used]))
    return SampledTrajectory(head.t0, head.dt, u, np.concatenate(vs), np.concatenate(xs), head.u_prev)


def crossing_time(traj: SampledTrajectory, pos: float) -> float | None:
    """First time the sampled position reaches ``pos`` (linear interpolation
    between the straddling samples), or None if it never does."""
    x = traj.x
    hits = np.nonzero(x >= pos)[0]
    if len(hits) == 0:
        return None
    k = int(hits[0])
    if k == 0:
        return traj.t0
    x0, x1 = float(x[k - 1]), float(x[k])
    frac = (pos - x0) / (x1 - x0)
    return traj.t0 + (k - 1 + frac) * traj.dt


def running_cost_terms(v, u, u_prev, dt, w_v, w_a, w_j):
    """Per-step integrand of the velocity-minus-discomfort objective (left
    Riemann sum). ``v`` and ``u`` must have equal length."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    jerk = np.diff(np.concatenate([[u_prev], u])) / dt
    return (w_v * v - (w_a * u * u + w_j * jerk * jerk)) * dt


def vehicle_objective(
    traj: SampledTrajectory,
    w_v: float,
    w_a: float,
    w_j: float,
    horizon: float,
    t_start: float | None = None,
) -> float:
    """Velocity reward minus acceleration/jerk discomfort over
    ``[t_start, t_start + horizon]``.

    Trajectories that end early are padded at constant velocity with zero
    acceleration.
    """
    if t_start is None:
        t_start = traj.t0
    if t_start < traj.t0 - 1e-9:
        raise ValueError("objective window starts before the trajectory")
    k0 = traj.index_of(t_start)
    n = int(round(horizon / traj.dt))
    need = k0 + n - traj.n_steps
    if need > 0:
        traj = traj.extended(need)
    u = traj.u[k0 : k0 + n]
    v = traj.v[k0 : k0 + n]
    u_prev = traj.accel(k0 - 1)
    return float(np.sum(running_cost_terms(v, u, u_prev, traj.dt, w_v, w_a, w_j)))


class BoundViolation(NamedTuple):
    index: int
    quantity: str  # "u" or "v"
    magnitude: float


def check_bounds(traj: SampledTrajectory, params: PhysicalParams, tol: float = 1e-6) -> list[BoundViolation]:
    """Every sample whose acceleration or velocity leaves its bounds by more
    than ``tol``."""
    out = []
    for k, uk in enumerate(traj.u):
        if uk > params.u_max + tol:
            out.append(BoundViolation(k, "u", float(uk - params.u_max)))
        elif uk < params.u_min - tol:
            out.append(BoundViolation(k, "u", float(params.u_min - uk)))
    for k, vk in enumerate(traj.v):
        if vk > params.v_max + tol:
            out.append(BoundViolation(k, "v", float(vk - params.v_max)))
        elif vk < params.v_min - tol:
            out.append(BoundViolation(k, "v", float(params.v_min - vk)))
    return out


def to_csv(traj: SampledTrajectory, vehicle_id=None) -> str:
    """CSV text with columns (id,) t, x, v, u. The last row has no u."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["t", "x", "v", "u"]
    if vehicle_id is not None:
        head = ["id"] + head
    w.writerow(head)
    for k in range(len(traj.x)):
        u = repr(float(traj.u[k])) if k < traj.n_steps else ""
        row = [repr(traj.t0 + k * traj.dt), repr(float(traj.x[k])), repr(float(traj.v[k])), u]
        if vehicle_id is not None:
            row = [vehicle_id] + row
        w.writerow(row)
    return buf.getvalue()


def from_csv(text: str) -> SampledTrajectory:
    rows = list(csv.DictReader(io.StringIO(text)))
    if len(rows) < 1:
        raise ValueError("empty trajectory CSV")
    t = [float(r["t"]) for r in rows]
    dt = t[1] - t[0] if len(t) > 1 else 1.0
    u = [float(r["u"]) for r in rows[:-1]]
    x = np.array([float(r["x"]) for r in rows])
    v = np.array([float(r["v"]) for r in rows])
    return SampledTrajectory(t[0], dt, np.array(u), v, x)


def grid_steps(horizon: float, dt: float) -> int:
    """Number of dt steps in ``horizon``; the ratio must be integral."""
    n = horizon / dt
    k = int(round(n))
    if not math.isclose(n, k, rel_tol=0, abs_tol=1e-6):
        raise ValueError(f"horizon {horizon} is not a multiple of dt={dt}")
    return k
