"""Safety formulas and post-hoc checkers.

Every formula takes an optional ``dt``. With ``dt = 0`` the continuous-time
expressions are returned unchanged. With ``dt > 0`` a margin of ``v*dt/2`` is
added to the stopping distance: under piecewise-constant braking a vehicle
covers up to ``a*dt^2/8`` more than the continuous bound before it stands
still, and the extra half step of travel is what keeps the discretized
constraints recursively feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LaneGeometry, PhysicalParams
from .trajectory import SampledTrajectory


@dataclass(frozen=True)
class SafetyMargins:
    rear_end_tol: float = 1e-6
    overlap_tol: float = 1e-6
    envelope_tol: float = 1e-6

    def __post_init__(self):
        if min(self.rear_end_tol, self.overlap_tol, self.envelope_tol) < 0:
            raise ValueError("safety tolerances must be >= 0")


def _brake(u_min: float) -> float:
    if u_min >= 0:
        raise ValueError(f"u_min must be negative, got {u_min}")
    return -u_min


def safe_following_distance(v_i, v_j, L_j, r, u_min, dt=0.0):
    """Minimum gap from follower front to predecessor front.

    Vectorizes over numpy inputs.
    """
    a = _brake(u_min)
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    d = L_j + r + np.maximum(0.0, (v_i * v_i - v_j * v_j) / (2 * a)) + 0.5 * dt * v_i
    return float(d) if d.ndim == 0 else d


def following_margins(x_i, v_i, x_j, v_j, L_j, r, u_min, dt=0.0):
    """Gap minus safe-following distance, per sample."""
    return np.asarray(x_j, dtype=float) - np.asarray(x_i, dtype=float) - safe_following_distance(
        v_i, v_j, L_j, r, u_min, dt
    )


@dataclass
class RearEndReport:
    min_margin: float
    violations: list = field(default_factory=list)  # grid indices (follower's grid)
    margins: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return not self.violations


def rear_end_ok(
    traj_i: SampledTrajectory,
    traj_j: SampledTrajectory,
    L_j: float,
    r: float,
    u_min: float,
    tol: float = 1e-6,
    dt_margin: float = 0.0,
    max_follower_x: float | None = None,
) -> RearEndReport:
    """Rear-end margins of follower ``i`` behind predecessor ``j``.

    Checked on the window where both trajectories have samples. When
    ``max_follower_x`` is given only samples with the follower at or before
    that position count (the follower has left the region of interest after).
    """
    if not math.isclose(traj_i.dt, traj_j.dt, rel_tol=1e-12):
        raise ValueError("trajectories are on different time steps")
    offset = (traj_i.t0 - traj_j.t0) / traj_i.dt
    shift = int(round(offset))
    if abs(offset - shift) > 1e-6:
        raise ValueError("trajectories are on misaligned grids")
    # index k on i's grid is index k + shift on j's grid
    lo = max(0, -shift)
    hi = min(len(traj_i.x), len(traj_j.x) - shift)
    if hi <= lo:
        return RearEndReport(math.inf, [], np.zeros(0))
    xi, vi = traj_i.x[lo:hi], traj_i.v[lo:hi]
    xj, vj = traj_j.x[lo + shift : hi + shift], traj_j.v[lo + shift : hi + shift]
    m = following_margins(xi, vi, xj, vj, L_j, r, u_min, dt_margin)
    if max_follower_x is not None:
        m = np.where(xi <= max_follower_x, m, np.inf)
    bad = np.nonzero(m < -tol)[0] + lo
    return RearEndReport(float(np.min(m)) if len(m) else math.inf, [int(k) for k in bad], m)


def entry_prevention_cap(x, u_min, dt=0.0):
    """Largest speed at position ``x <= 0`` from which full braking stops the
    vehicle at or before the stop line."""
    a = _brake(u_min)
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise ValueError("entry-prevention cap is undefined past the stop line (x > 0)")
    cap = 0.5 * (-a * dt + np.sqrt(a * a * dt * dt - 8.0 * a * x))
    return float(cap) if cap.ndim == 0 else cap


def envelope_margin(x, v, u_min, dt=0.0):
    """Nonnegative where ``(x, v)`` respects the entry-prevention envelope:
    ``-(x + v^2/(2a) + v*dt/2)``."""
    a = _brake(u_min)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m = -(x + v * v / (2 * a) + 0.5 * dt * v)
    return float(m) if m.ndim == 0 else m


def intersection_overlap_ok(entry_i, exit_i, entry_k, exit_k, tol: float = 0.0) -> bool:
    """True when the two occupancy intervals do not overlap (touching is fine)."""
    return entry_i >= exit_k - tol or entry_k >= exit_i - tol


def arrival_gate(
    v_arrival: float,
    predecessor: tuple[float, float, float] | None,
    geometry: LaneGeometry | float,
    params: PhysicalParams,
    dt: float = 0.0,
) -> bool:
    """Whether a vehicle may enter the region of interest at ``x = -d`` now.

    ``predecessor`` is ``(x, v, length)`` of the lane's last vehicle, or None.
    ``geometry`` may be a LaneGeometry or the approach length itself.
    """
    d = geometry.approach_length if isinstance(geometry, LaneGeometry) else float(geometry)
    limit = min(params.v_max, entry_prevention_cap(-d, params.u_min, dt))
    if v_arrival > limit + 1e-12:
        return False
    if predecessor is None:
        return True
    x_p, v_p, L_p = predecessor
    gap = x_p - (-d)
    return gap >= safe_following_distance(v_arrival, v_p, L_p, params.r, params.u_min, dt)
