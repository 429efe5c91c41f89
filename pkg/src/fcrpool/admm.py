"""Three-block consensus solver for the pooled-capacity problem.

The coupled schedule is split into three groups of owners, each holding its
own copy of the variables it touches:

* every asset solves a small penalized subproblem over its own capacity row
  ``p_f[i]`` and activation row ``z_f[i]``;
* every circle set projects the activation copies of its members onto the
  cardinality cap (binary, at most ``circle_cap`` active per step);
* the pool coordinator projects the capacity copies onto schedules whose
  column sums are one constant value ``p_F``.

Scaled dual variables accumulate the disagreement between the copies and
steer them to consensus. Activation variables are relaxed to [0, 1] in the
asset subproblem except on periodic integer rounds (every ``k_ip``
iterations), whose binary snapshots make circle feasibility checkable. The
run stops once the latest integer snapshot satisfies every circle cap and
the summed capacity copies agree within the relative tolerance ``alpha``.

The first iteration may run with both penalties at zero, which yields the
unconstrained bang-bang profile (full power wherever the step margin is
positive) and skips the slow ramp-up from the all-zero initialization.

The reported solution is always constructed from an integer round: its
binary activations are kept, and per-step capacities are scaled down to the
smallest column sum so the equal-sum constraint holds exactly.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded, NonFiniteInput, UnknownId
from .model import Scenario, Solution
from .model import objective_value as _model_objective


class IterationStatus(enum.Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass
class AdmmParams:
    """Penalty weights and run controls for the consensus solver.

    ``rho_c`` weighs the activation consensus (asset copies vs. circle
    copies) and is the knob that trades iterations against solution quality:
    pushing activations to agree faster reaches a cap-feasible point sooner
    but locks in the activation pattern earlier. ``rho_f`` weighs the
    capacity consensus (asset copies vs. coordinator copies).
    """

    rho_c: float
    rho_f: float
    k_ip: int = 10
    alpha: float = 0.005
    max_iter: int = 1000
    warm_start: bool = True

    def __post_init__(self):
        if self.rho_c <= 0 or self.rho_f <= 0:
            raise ValueError("penalty weights must be positive")
        if self.k_ip < 1:
            raise ValueError("k_ip must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def to_json_dict(self) -> dict:
        return {
            "rho_c": self.rho_c,
            "rho_f": self.rho_f,
            "k_ip": self.k_ip,
            "alpha": self.alpha,
            "max_iter": self.max_iter,
            "warm_start": self.warm_start,
        }


@dataclass(eq=False)
class AdmmState:
    """All variable copies and duals, plus the latest integer snapshot."""

    p_f: np.ndarray
    z_f: np.ndarray
    z_g: list[np.ndarray]
    u_g: list[np.ndarray]
    p_h: np.ndarray
    u_h: np.ndarray
    p_F: float = 0.0
    k: int = 0
    z_int: np.ndarray | None = None
    k_int: int = -1
    int_feasible: bool = False


def init_state(scenario: Scenario) -> AdmmState:
    shape = (scenario.n_assets, scenario.horizon)
    rows = scenario.circle_rows()
    return AdmmState(
        p_f=np.zeros(shape),
        z_f=np.zeros(shape),
        z_g=[np.zeros((len(r), scenario.horizon)) for r in rows],
        u_g=[np.zeros((len(r), scenario.horizon)) for r in rows],
        p_h=np.zeros(shape),
        u_h=np.zeros(shape),
    )


# ---------------------------------------------------------------------------
# Subproblem kernels. These are shared verbatim by the in-process engine and
# the message-passing agent runtime so that both produce bit-identical runs.
# ---------------------------------------------------------------------------


def _bang_bang(cost, fcr_price, power_cap):
    """Zero-penalty profile: full power exactly where the margin is positive."""
    active = cost < fcr_price
    z = active.astype(float)
    return power_cap * z, z


def _local_kernel(cost, fcr_price, power_cap, b, a_sum, m, rho_p, rho_z, integer):
    """Exact minimizer of one asset's penalized subproblem, elementwise.

    Per step the problem is a convex quadratic in (p, z) over the wedge
    0 <= p <= power_cap * z, z in [0, 1] (or z binary on integer rounds):

        (cost - price) * p + rho_p/2 (p - b)^2 + rho_z/2 sum_s (z - a_s)^2

    where ``b`` is the dual-shifted coordinator target and ``a_sum``/``m``
    aggregate the dual-shifted circle targets. The optimum is one of four
    closed-form candidates: the free stationary point clipped to the wedge,
    the stationary point on the edge p = power_cap * z, or the two corner
    activations. Ties keep the earliest candidate, so the inactive corner
    wins when activating brings nothing.
    """
    margin = fcr_price - cost
    P = power_cap

    def score(p, z):
        return -margin * p + 0.5 * rho_p * (p - b) ** 2 + 0.5 * rho_z * (m * z * z - 2.0 * a_sum * z)

    p_hat = b + margin / rho_p

    if integer:
        p1 = np.clip(p_hat, 0.0, P)
        s0 = score(np.zeros_like(p1), np.zeros_like(p1))
        s1 = score(p1, np.ones_like(p1))
        take = s1 < s0
        p = np.where(take, p1, 0.0)
        z = np.where(take, 1.0, 0.0)
        return p, z

    a_bar = a_sum / m
    # (i) free capacity, activation at its own clip above p / P
    p_i = np.clip(p_hat, 0.0, P)
    z_i = np.clip(a_bar, p_i / P, 1.0)
    # (ii) stationary point along the edge p = P * z
    z_ii = np.clip(
        (P * margin + P * rho_p * b + rho_z * a_sum) / (P * P * rho_p + rho_z * m),
        0.0,
        1.0,
    )
    p_ii = P * z_ii
    # (iii) corners
    z_zero = np.zeros_like(p_i)
    z_one = np.ones_like(p_i)

    best_p, best_z = p_i, z_i
    best_s = score(p_i, z_i)
    for p_c, z_c in ((p_ii, z_ii), (z_zero, z_zero), (np.clip(p_hat, 0.0, P), z_one)):
        s_c = score(p_c, z_c)
        take = s_c < best_s
        best_p = np.where(take, p_c, best_p)
        best_z = np.where(take, z_c, best_z)
        best_s = np.where(take, s_c, best_s)
    return best_p, best_z


def local_solve(i, state: AdmmState, scenario: Scenario, params: AdmmParams, integer_round: bool):
    """Solve one asset's subproblem against the current consensus targets.

    Returns the asset's capacity and activation rows. Raises
    ``NonFiniteInput`` when the consensus targets are not finite.
    """
    mapping = scenario.id_to_row
    if i not in mapping:
        raise UnknownId(f"unknown asset id {i}")
    row = mapping[i]
    b = state.p_h[row] - state.u_h[row]
    set_ids = scenario.family.sets_containing(i)
    rows = scenario.circle_rows()
    a_sum = np.zeros(scenario.horizon)
    for s in set_ids:
        member_pos = int(np.where(rows[s] == row)[0][0])
        a_sum += state.z_g[s][member_pos] - state.u_g[s][member_pos]
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a_sum))):
        raise NonFiniteInput(f"non-finite consensus targets for asset {i}")
    return _local_kernel(
        scenario.cost[row],
        scenario.fcr_price,
        scenario.power_cap,
        b,
        a_sum,
        float(len(set_ids)),
        rho_p=params.rho_f,
        rho_z=params.rho_c,
        integer=integer_round,
    )


def circle_project(z_f_rows: np.ndarray, u_g_rows: np.ndarray, circle_cap: int) -> np.ndarray:
    """Project dual-shifted activation copies onto the cardinality cap.

    Per step, the closest binary vector with at most ``circle_cap`` ones
    keeps the members whose shifted value exceeds one half, largest first.
    Rows must be ordered by ascending member id; equal values keep the
    earlier row.
    """
    v = z_f_rows + u_g_rows
    eligible = v > 0.5
    if v.shape[0] <= circle_cap:
        # Cap cannot bind: plain rounding.
        return eligible.astype(float)
    order = np.argsort(-v, axis=0, kind="stable")
    rank = np.argsort(order, axis=0, kind="stable")
    return (eligible & (rank < circle_cap)).astype(float)


def fsp_project(p_f: np.ndarray, u_h: np.ndarray) -> tuple[np.ndarray, float]:
    """Project dual-shifted capacity copies onto equal column sums.

    The projection shifts every column by a constant so all column sums equal
    their mean, which is the pooled capacity ``p_F``.
    """
    if not (np.all(np.isfinite(p_f)) and np.all(np.isfinite(u_h))):
        raise NonFiniteInput("non-finite capacity copies")
    v = p_f + u_h
    col = v.sum(axis=0)
    p_F = col.mean()
    p_h = v + (p_F - col) / v.shape[0]
    return p_h, float(p_F)


def dual_updates(state: AdmmState, scenario: Scenario) -> AdmmState:
    """Accumulate consensus residuals into the scaled duals, in place."""
    rows = scenario.circle_rows()
    for s, r in enumerate(rows):
        state.u_g[s] += state.z_f[r] - state.z_g[s]
    state.u_h += state.p_f - state.p_h
    return state


def circle_loads(z: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Per-circle, per-step activation sums, shape (n_S, n_T)."""
    return scenario.membership_matrix() @ z


def check_convergence(
    state: AdmmState,
    scenario: Scenario,
    params: AdmmParams,
    integer_round_completed: bool,
) -> IterationStatus:
    """Status at the end of iteration ``state.k``.

    Converged requires both that the latest integer snapshot satisfies every
    circle cap (checkable only after an integer round has run) and that the
    summed capacity copies agree within ``alpha`` relative error, measured
    with the Euclidean norm over the per-step sums.
    """
    cond_a = False
    if integer_round_completed and state.z_int is not None:
        loads = circle_loads(state.z_int, scenario)
        cond_a = bool(loads.size == 0 or loads.max() <= scenario.circle_cap + 0.5)
    diff = (state.p_f - state.p_h).sum(axis=0)
    lhs = float(np.linalg.norm(diff))
    rhs = params.alpha * float(np.linalg.norm(state.p_f.sum(axis=0)))
    cond_b = lhs <= rhs
    if cond_a and cond_b:
        return IterationStatus.CONVERGED
    if state.k + 1 >= params.max_iter:
        return IterationStatus.MAX_ITER
    return IterationStatus.CONTINUE


@dataclass(eq=False)
class SolveReport:
    """Iteration traces plus the final schedule of one consensus run."""

    objective: list[float] = field(default_factory=list)
    res_fsp: list[float] = field(default_factory=list)
    res_circles: list[float] = field(default_factory=list)
    integer_round: list[bool] = field(default_factory=list)
    feasible: list[bool] = field(default_factory=list)
    solution: Solution | None = None
    iterations: int = 0
    status: str = "converged"
    wall_time_s: float = 0.0
    round_stats: list = field(default_factory=list)

    def trace_rows(self):
        """Rows for the trace CSV: k, objective, residuals, flags."""
        for k in range(self.iterations):
            yield (
                k,
                self.objective[k],
                self.res_fsp[k],
                self.res_circles[k],
                int(self.integer_round[k]),
                int(self.feasible[k]),
            )

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "status": self.status,
            "wall_time_s": self.wall_time_s,
            "objective_trace": self.objective,
            "res_fsp_trace": self.res_fsp,
            "res_circles_trace": self.res_circles,
            "solution": self.solution.to_json_dict() if self.solution else None,
        }


class MatrixEngine:
    """Whole-pool array implementation of one iteration's three phases."""

    def __init__(self, scenario: Scenario, params: AdmmParams):
        self.scenario = scenario
        self.params = params
        self.state = init_state(scenario)
        self.circle_rows = scenario.circle_rows()
        counts = np.zeros(scenario.n_assets)
        for r in self.circle_rows:
            counts[r] += 1.0
        self.m = counts[:, None]

    def local_phase(self, integer: bool, warm: bool) -> None:
        st = self.state
        scn = self.scenario
        if warm:
            st.p_f, st.z_f = _bang_bang(scn.cost, scn.fcr_price, scn.power_cap)
            return
        b = st.p_h - st.u_h
        a_sum = np.zeros_like(b)
        for s, r in enumerate(self.circle_rows):
            a_sum[r] += st.z_g[s] - st.u_g[s]
        st.p_f, st.z_f = _local_kernel(
            scn.cost,
            scn.fcr_price,
            scn.power_cap,
            b,
            a_sum,
            self.m,
            rho_p=self.params.rho_f,
            rho_z=self.params.rho_c,
            integer=integer,
        )

    def consensus_phase(self) -> None:
        st = self.state
        for s, r in enumerate(self.circle_rows):
            st.z_g[s] = circle_project(st.z_f[r], st.u_g[s], self.scenario.circle_cap)
        st.p_h, st.p_F = fsp_project(st.p_f, st.u_h)
        dual_updates(st, self.scenario)

    def round_stats(self):
        return None


def _repair(scenario: Scenario, p_f: np.ndarray, z_int: np.ndarray) -> Solution:
    """Exactly feasible schedule from one integer round.

    Keeps the binary activations and scales every column of the capacities
    down to the smallest column sum, so all column sums equal ``p_F``
    exactly while staying inside the per-asset boxes.
    """
    sums = p_f.sum(axis=0)
    p_F = float(sums.min())
    if p_F <= 0.0:
        p = np.zeros_like(p_f)
        p_F = 0.0
    else:
        p = p_f * (p_F / sums)[None, :]
    sol = Solution(p, z_int.copy(), p_F, 0.0)
    sol.objective = _model_objective(scenario, sol)
    return sol


def run(scenario: Scenario, params: AdmmParams, on_iteration=None, _engine=None) -> SolveReport:
    """Run the consensus solver to convergence and report traces.

    Raises :class:`MaxIterExceeded` when ``params.max_iter`` iterations pass
    without convergence; the exception carries a report holding the best
    feasible schedule seen at any integer round, or the last infeasible one.
    """
    engine = _engine if _engine is not None else MatrixEngine(scenario, params)
    st = engine.state
    report = SolveReport()
    t0 = time.perf_counter()

    best: Solution | None = None
    latest_candidate: Solution | None = None
    stats = []

    k = 0
    while True:
        integer = (k % params.k_ip) == 0
        warm = k == 0 and params.warm_start
        engine.local_phase(integer=integer or warm, warm=warm)
        engine.consensus_phase()

        if integer or warm:
            st.z_int = st.z_f.copy()
            st.k_int = k
            loads = circle_loads(st.z_int, scenario)
            st.int_feasible = bool(loads.size == 0 or loads.max() <= scenario.circle_cap + 0.5)
            if st.int_feasible:
                latest_candidate = _repair(scenario, st.p_f, st.z_int)
                if best is None or latest_candidate.objective < best.objective:
                    best = latest_candidate

        obj_k = float(np.sum(scenario.cost * st.p_f)) - scenario.fcr_price * st.p_F * scenario.horizon
        diff = (st.p_f - st.p_h).sum(axis=0)
        res_fsp = float(np.linalg.norm(diff))
        loads_now = circle_loads(st.z_f, scenario)
        over = np.maximum(loads_now - scenario.circle_cap, 0.0)
        res_circ = float(np.linalg.norm(over.ravel()))

        report.objective.append(obj_k)
        report.res_fsp.append(res_fsp)
        report.res_circles.append(res_circ)
        report.integer_round.append(bool(integer or warm))
        report.feasible.append(bool(st.int_feasible))

        rs = engine.round_stats()
        if rs is not None:
            stats.append(rs)

        if on_iteration is not None:
            on_iteration(
                {
                    "k": k,
                    "objective": obj_k,
                    "res_fsp": res_fsp,
                    "res_circles": res_circ,
                    "integer_round": bool(integer or warm),
                    "feasible": bool(st.int_feasible),
                }
            )

        status = check_convergence(st, scenario, params, st.k_int >= 0)
        if status is IterationStatus.CONVERGED:
            report.solution = latest_candidate
            report.status = "converged"
            report.iterations = k + 1
            break
        if status is IterationStatus.MAX_ITER:
            report.iterations = k + 1
            report.status = "max_iter"
            if best is not None:
                report.solution = best
            else:
                fallback = Solution(st.p_f.copy(), st.z_int.copy(), st.p_F, 0.0)
                fallback.objective = float(np.sum(scenario.cost * fallback.p)) - scenario.fcr_price * fallback.p_F * scenario.horizon
                report.solution = fallback
            report.wall_time_s = time.perf_counter() - t0
            report.round_stats = stats
            raise MaxIterExceeded(
                f"no convergence within {params.max_iter} iterations", report=report
            )
        k += 1
        st.k = k

    report.wall_time_s = time.perf_counter() - t0
    report.round_stats = stats
    return report
