"""Direct-transcription trajectory optimizer.

One vehicle, one horizon, piecewise-constant acceleration on a fixed grid.
The program is a sparse second-order cone program in the stacked variable
``z = [u_0..u_{N-1}, v_0..v_N, x_0..x_N]``; the exact step recursion enters
as equality rows, so the states are affine functions of ``u`` and the
controls are the only true degrees of freedom. Clarabel does the solving.

Quadratic safety constraints ``v^2 <= 2a(c - x - h v)`` are written as the
rotated cone ``(a(c - x - h v) + 1/2, v, a(c - x - h v) - 1/2) in SOC(3)``
with ``a = |u_min|`` and ``h = dt/2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import clarabel
import numpy as np
import scipy.sparse as sp

from .model import LaneGeometry, PhysicalParams, ScheduleEntry
from .safety import envelope_margin
from .trajectory import SampledTrajectory, crossing_time, grid_steps, integrate, running_cost_terms

# positions are compared against the stop line with this slack so that a
# vehicle resting on it (x ~ 1e-9 after round-off) does not count as entered
ENTRY_TOL = 1e-6
# exits are planned this far past the far edge so the sampled crossing exists
EXIT_MARGIN = 1e-5
# safety rows are planned with this much spare margin when the start allows
TIGHTEN = 1e-7
# relative penalty on the square of the last control (see solve)
TERMINAL_TIEBREAK = 1e-3
# a start state may violate a constraint by this much and still be repaired
START_SLACK = 1e-6


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


@dataclass(frozen=True)
class OcpSpec:
    """One single-vehicle planning problem.

    ``earliest_entry`` keeps the vehicle at or behind the stop line until that
    time (rounded up to the grid). ``exit_by`` requires x >= span at the last
    grid point not after that time; ``require_exit_by_horizon`` does the same
    at the final grid point.
    """

    horizon: float
    dt: float
    x0: float
    v0: float
    u_prev: float = 0.0
    t0: float = 0.0
    w_v: float = 1.0
    w_a: float = 0.0
    w_j: float = 0.0
    predecessor: SampledTrajectory | None = None
    predecessor_length: float = 4.3
    entry_prevention: bool = True
    earliest_entry: float | None = None
    require_exit_by_horizon: bool = False
    exit_by: float | None = None
    span: float = 20.0
    params: PhysicalParams = field(default_factory=PhysicalParams)
    tol: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        if self.horizon <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        grid_steps(self.horizon, self.dt)
        if self.span <= 0:
            raise ValueError("span must be positive")

    @property
    def n_steps(self) -> int:
        return grid_steps(self.horizon, self.dt)


@dataclass
class OcpSolution:
    trajectory: SampledTrajectory | None
    objective: float
    status: Status
    kkt_residual: float
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def _infeasible():
    return OcpSolution(None, -math.inf, Status.INFEASIBLE, math.inf)


def _grid_index_up(t: float, t0: float, dt: float) -> int:
    return int(math.ceil((t - t0) / dt - 1e-9))


def _grid_index_down(t: float, t0: float, dt: float) -> int:
    return int(math.floor((t - t0) / dt + 1e-9))


def _start_offset(margin0: float) -> float | None:
    """Right-hand-side offset for a constraint family given its margin at the
    start state: tightened when there is room, relaxed to the start value when
    it is marginally violated, None when the start is infeasible."""
    if margin0 < -START_SLACK:
        return None
    return max(-TIGHTEN, -margin0)


class _Rows:
    """Accumulates sparse rows of ``A z + s = b``."""

    def __init__(self):
        self.rows, self.cols, self.vals, self.b = [], [], [], []
        self.n = 0

    def block(self, n_rows, entries, rhs):
        """``entries`` is a list of (row_offsets, cols, vals) arrays."""
        for ro, cc, vv in entries:
            ro = np.asarray(ro)
            self.rows.append(self.n + ro)
            self.cols.append(np.broadcast_to(np.asarray(cc), ro.shape))
            self.vals.append(np.broadcast_to(np.asarray(vv, dtype=float), ro.shape))
        self.b.append(np.broadcast_to(np.asarray(rhs, dtype=float), (n_rows,)))
        self.n += n_rows

    def matrix(self, n_cols):
        r = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        c = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        v = np.concatenate(self.vals) if self.vals else np.zeros(0)
        A = sp.csc_matrix((v, (r, c)), shape=(self.n, n_cols))
        b = np.concatenate(self.b) if self.b else np.zeros(0)
        return A, b


def solve(spec: OcpSpec) -> OcpSolution:
    """Maximize velocity reward minus discomfort subject to the enabled
    constraints. Constraints at the start sample are checked directly and
    never handed to the solver."""
    p = spec.params
    a = p.brake
    dt = spec.dt
    h = 0.5 * dt
    N = spec.n_steps
    x0, v0 = float(spec.x0), float(spec.v0)
    ks = np.arange(1, N + 1)

    # reachability bounds, used to drop rows that cannot bind
    v_ub = np.minimum(max(p.v_max, v0), v0 + p.u_max * dt * np.arange(N + 1))
    x_ub = x0 + np.concatenate([[0.0], np.cumsum(0.5 * (v_ub[:-1] + v_ub[1:]) * dt)])
    stop_ub = x_ub + v_ub * v_ub / (2 * a) + h * v_ub

    nu, nv = N, N + 1
    n = nu + 2 * nv
    iu = np.arange(nu)
    iv = nu + np.arange(nv)
    ix = nu + nv + np.arange(nv)

    eq = _Rows()
    eq.block(1, [([0], [iv[0]], [1.0])], [v0])
    eq.block(1, [([0], [ix[0]], [1.0])], [x0])
    k = np.arange(N)
    eq.block(N, [(k, iv[k + 1], 1.0), (k, iv[k], -1.0), (k, iu[k], -dt)], 0.0)
    eq.block(N, [(k, ix[k + 1], 1.0), (k, ix[k], -1.0), (k, iv[k], -dt), (k, iu[k], -0.5 * dt * dt)], 0.0)

    nn = _Rows()
    nn.block(N, [(k, iu[k], 1.0)], p.u_max)
    nn.block(N, [(k, iu[k], -1.0)], a)
    nn.block(N, [(k, iv[ks], 1.0)], p.v_max)
    nn.block(N, [(k, iv[ks], -1.0)], -p.v_min)

    if spec.earliest_entry is not None:
        e = min(N, _grid_index_up(spec.earliest_entry, spec.t0, dt))
        if e >= 0:
            if x0 > START_SLACK:
                return _infeasible()
            off = max(0.0, x0)
            kk = np.arange(1, e + 1)
            kk = kk[x_ub[kk] > off]
            nn.block(len(kk), [(np.arange(len(kk)), ix[kk], 1.0)], off)
    else:
        e = -1

    exit_idx = None
    if spec.require_exit_by_horizon:
        exit_idx = N
    if spec.exit_by is not None:
        m = min(N, _grid_index_down(spec.exit_by, spec.t0, dt))
        exit_idx = m if exit_idx is None else min(exit_idx, m)
    if exit_idx is not None:
        target = spec.span + EXIT_MARGIN
        if exit_idx <= 0 or exit_idx > N or exit_idx <= e or x_ub[exit_idx] < target:
            return _infeasible()
        nn.block(1, [([0], [ix[exit_idx]], -1.0)], -target)

    soc = _Rows()
    n_soc = 0

    def add_soc(kk, c):
        nonlocal n_soc
        m = len(kk)
        if m == 0:
            return
        r = 3 * np.arange(m)
        soc.block(
            3 * m,
            [
                (r, ix[kk], a),
                (r, iv[kk], a * h),
                (r + 1, iv[kk], -1.0),
                (r + 2, ix[kk], a),
                (r + 2, iv[kk], a * h),
            ],
            np.column_stack([a * c + 0.5, np.zeros(m), a * c - 0.5]).ravel(),
        )
        n_soc += m

    if spec.entry_prevention:
        off = _start_offset(envelope_margin(x0, v0, p.u_min, dt))
        if off is None:
            return _infeasible()
        kk = ks[stop_ub[ks] > off]
        add_soc(kk, np.full(len(kk), off))

    if spec.predecessor is not None:
        pred = spec.predecessor
        if not math.isclose(pred.dt, dt, rel_tol=1e-12):
            raise ValueError("predecessor trajectory uses a different dt")
        k0 = pred.index_of(spec.t0)
        xj, vj = pred.window(k0, N)
        base = xj - spec.predecessor_length - p.r
        # linear part: x + h v <= x_j - L - r
        off = _start_offset(base[0] - x0 - h * v0)
        if off is None:
            return _infeasible()
        lin_rhs = base + off
        kk = ks[x_ub[ks] + h * v_ub[ks] > lin_rhs[ks]]
        nn.block(len(kk), [(np.arange(len(kk)), ix[kk], 1.0), (np.arange(len(kk)), iv[kk], h)], lin_rhs[kk])
        # quadratic part: x + v^2/(2a) + h v <= x_j - L - r + v_j^2/(2a)
        cq = base + vj * vj / (2 * a)
        off = _start_offset(cq[0] - x0 - h * v0 - v0 * v0 / (2 * a))
        if off is None:
            return _infeasible()
        cq = cq + off
        kk = ks[stop_ub[ks] > cq[ks]]
        add_soc(kk, cq[kk])

    A_eq, b_eq = eq.matrix(n)
    A_nn, b_nn = nn.matrix(n)
    A_so, b_so = soc.matrix(n)
    A = sp.vstack([A_eq, A_nn, A_so]).tocsc()
    b = np.concatenate([b_eq, b_nn, b_so])
    cones = [clarabel.ZeroConeT(eq.n), clarabel.NonnegativeConeT(nn.n)]
    cones += [clarabel.SecondOrderConeT(3)] * n_soc

    q = np.zeros(n)
    q[iv[:N]] = -spec.w_v * dt
    # the last control only moves v_N, which the running cost never sees;
    # a negligible penalty on it makes the final step coast instead of
    # being left arbitrary
    scale = max(spec.w_v, spec.w_a, spec.w_j) or 1.0
    diff = sp.diags([np.ones(N), -np.ones(N - 1)], [0, -1], shape=(N, N))
    P_uu = 2 * spec.w_a * dt * sp.eye(N) + (2 * spec.w_j / dt) * (diff.T @ diff)
    last = sp.csc_matrix(([2 * TERMINAL_TIEBREAK * scale * dt], ([N - 1], [N - 1])), shape=(N, N))
    P = sp.block_diag([P_uu + last, sp.csc_matrix((2 * nv, 2 * nv))])
    q[iu[0]] += -2 * spec.w_j / dt * spec.u_prev
    P = sp.triu(P).tocsc()

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    tol = min(1e-8, spec.tol)
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = spec.max_iter
    result = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()

    status = result.status
    S = clarabel.SolverStatus
    if status in (S.PrimalInfeasible, S.AlmostPrimalInfeasible):
        return OcpSolution(None, -math.inf, Status.INFEASIBLE, math.inf, result.iterations)
    gap = abs(result.obj_val - result.obj_val_dual) / max(1.0, abs(result.obj_val))
    kkt = max(result.r_prim, result.r_dual, gap)
    if status not in (S.Solved, S.AlmostSolved) or not kkt <= spec.tol:
        return OcpSolution(None, -math.inf, Status.ITER_LIMIT, kkt, result.iterations)
    u = np.clip(np.asarray(result.x[:N]), p.u_min, p.u_max)
    traj = integrate(x0, v0, u, dt, spec.t0, spec.u_prev)
    obj = float(np.sum(running_cost_terms(traj.v[:N], traj.u, spec.u_prev, dt, spec.w_v, spec.w_a, spec.w_j)))
    return OcpSolution(traj, obj, Status.OPTIMAL, kkt, result.iterations)


def emergency_stop(spec: OcpSpec) -> SampledTrajectory:
    """Full braking until standstill, then rest. Always satisfies the envelope
    and rear-end rows when the start does."""
    p = spec.params
    N = spec.n_steps
    u = np.zeros(N)
    v = float(spec.v0)
    for k in range(N):
        uk = max(p.u_min, -v / spec.dt)
        u[k] = uk
        v = v + uk * spec.dt
    return integrate(spec.x0, spec.v0, u, spec.dt, spec.t0, spec.u_prev)


def hold_spec(spec: OcpSpec) -> OcpSpec:
    return replace(spec, entry_prevention=True, earliest_entry=None, require_exit_by_horizon=False, exit_by=None)


def hold_trajectory(spec: OcpSpec) -> OcpSolution:
    """Keep the vehicle upstream of the stop line for the whole horizon.

    Solves the problem with the envelope on and no entry or exit rows. If the
    solver fails anyway, full braking is returned with the solver's status.
    """
    hs = hold_spec(spec)
    sol = solve(hs)
    if sol.ok:
        return sol
    traj = emergency_stop(hs)
    obj = float(np.sum(running_cost_terms(traj.v[:-1], traj.u, hs.u_prev, hs.dt, hs.w_v, hs.w_a, hs.w_j)))
    return OcpSolution(traj, obj, sol.status, sol.kkt_residual, sol.iterations)


def entry_exit_times(traj: SampledTrajectory, span: float) -> tuple[float | None, float | None]:
    return crossing_time(traj, ENTRY_TOL), crossing_time(traj, span)


@dataclass(frozen=True)
class BatchVehicle:
    """A vehicle of a coordination batch.

    ``spec`` carries the start state, weights and horizon. If the vehicle's
    predecessor is part of the same batch, ``predecessor_id`` names it and the
    predecessor's fresh plan replaces ``spec.predecessor``.
    """

    id: int
    lane: int
    spec: OcpSpec
    predecessor_id: int | None = None
    t_arrival: float = 0.0

    @property
    def x(self) -> float:
        return self.spec.x0

    @property
    def v(self) -> float:
        return self.spec.v0


@dataclass
class SequenceResult:
    feasible: bool
    solutions: dict
    entries: list
    total_objective: float
    failed: int | None = None


def earliest_entry_after(lane, geometry: LaneGeometry, fixed, t_floor: float) -> float:
    """Latest exit among fixed entries on lanes conflicting with ``lane``,
    floored at ``t_floor``."""
    t = t_floor
    for entry in fixed:
        if geometry.incompatible(lane, entry.lane) and entry.t_exit > t:
            t = entry.t_exit
    return t


def solve_in_order(
    vehicle: BatchVehicle,
    geometry: LaneGeometry,
    fixed,
    t_C: float,
    plans: dict,
    w_v: float | None = None,
) -> tuple[OcpSolution, ScheduleEntry | None]:
    """Coordinated solve of one vehicle after everything in ``fixed``."""
    spec = vehicle.spec
    if vehicle.predecessor_id is not None:
        spec = replace(spec, predecessor=plans[vehicle.predecessor_id])
    ee = earliest_entry_after(vehicle.lane, geometry, fixed, t_C)
    spec = replace(
        spec,
        earliest_entry=ee,
        require_exit_by_horizon=True,
        entry_prevention=False,
        w_v=spec.w_v if w_v is None else w_v,
    )
    sol = solve(spec)
    if not sol.ok:
        return sol, None
    t_e, t_x = entry_exit_times(sol.trajectory, spec.span)
    if t_e is None or t_x is None or not t_e < t_x:
        return OcpSolution(None, -math.inf, Status.INFEASIBLE, sol.kkt_residual, sol.iterations), None
    return sol, ScheduleEntry(vehicle.id, vehicle.lane, t_e, t_x)


def solve_fixed_sequence(
    batch: list[BatchVehicle],
    entry_order,
    scheduled,
    geometry: LaneGeometry,
    t_C: float,
) -> SequenceResult:
    """Solve the batch one vehicle at a time in ``entry_order``.

    Each vehicle may enter only after every conflicting vehicle that is
    already fixed (scheduled earlier or earlier in the order) has exited. The
    first infeasible vehicle aborts the sequence.
    """
    by_id = {bv.id: bv for bv in batch}
    fixed = list(scheduled)
    plans: dict = {}
    sols: dict = {}
    entries = []
    total = 0.0
    for vid in entry_order:
        bv = by_id[vid]
        if bv.predecessor_id is not None and bv.predecessor_id not in plans:
            raise ValueError(f"order places vehicle {vid} before its in-lane predecessor")
        sol, entry = solve_in_order(bv, geometry, fixed, t_C, plans)
        if entry is None:
            return SequenceResult(False, sols, entries, -math.inf, failed=vid)
        plans[vid] = sol.trajectory
        sols[vid] = sol
        entries.append(entry)
        fixed.append(entry)
        total += sol.objective
    return SequenceResult(True, sols, entries, total)
