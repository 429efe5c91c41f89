"""Pool scheduling model: objective, feasibility checks, and an exact solver.

The pool operator sells a constant aggregate capacity ``p_F`` over a horizon
of ``n_T`` steps. Each asset ``i`` can contribute ``p[i, t]`` kW at step
``t``, capped at ``power_cap`` whenever its activation flag ``z[i, t]`` is
on. Every circle set from :mod:`fcrpool.geometry` limits how many of its
members may be active simultaneously. The objective is total local cost
minus capacity revenue:

    sum_{i,t} cost[i, t] * p[i, t]  -  fcr_price * p_F * n_T

``solve_exact`` is a desk-scale branch-and-bound oracle over the binary
activation matrix. Node relaxations (activations boxed in [0, 1]) are linear
programs solved with HiGHS through scipy; incumbents are cleaned up by the
purpose-built fixed-activation solver, which is exact because with fixed
activations the cheapest schedule fills whole ``power_cap`` blocks in cost
order.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    BudgetExceeded,
    EmptySample,
    InconsistentFamily,
    Infeasible,
    NonFiniteInput,
    ShapeMismatch,
    UnknownId,
)
from .geometry import (
    DEFAULT_RADIUS,
    CircleFamily,
    ConnectionPoint,
    build_circle_family,
    restrict_family,
)
from .seeding import child_seed

DEFAULT_POWER_CAP = 5.0
DEFAULT_CIRCLE_CAP = 10

#: Absolute feasibility tolerance for the equal-sum coupling constraint, kW.
FEAS_TOL = 1e-6


@dataclass(eq=False)
class Scenario:
    """One solvable instance: points, constraint family, costs, and caps."""

    points: list[ConnectionPoint]
    family: CircleFamily
    horizon: int
    cost: np.ndarray
    fcr_price: float
    power_cap: float = DEFAULT_POWER_CAP
    circle_cap: int = DEFAULT_CIRCLE_CAP
    rng_seed: int = 0

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self._id_to_row = None
        self._circle_rows = None
        self._membership = None
        self.validate()

    def validate(self) -> None:
        if self.horizon < 1:
            raise ShapeMismatch("horizon must be at least 1")
        if self.power_cap <= 0:
            raise ShapeMismatch("power_cap must be positive")
        if self.circle_cap < 1:
            raise ShapeMismatch("circle_cap must be at least 1")
        n = len(self.points)
        if self.cost.shape != (n, self.horizon):
            raise ShapeMismatch(
                f"cost matrix shape {self.cost.shape} does not match "
                f"({n}, {self.horizon})"
            )
        if not np.all(np.isfinite(self.cost)):
            raise NonFiniteInput("cost matrix contains non-finite entries")
        ids = {p.id for p in self.points}
        for cs in self.family.sets:
            if not set(cs.members) <= ids:
                raise InconsistentFamily(
                    f"family set {cs.members} references unknown asset ids"
                )
        for p in self.points:
            if not self.family.sets_containing(p.id):
                raise InconsistentFamily(
                    f"asset {p.id} is not covered by any circle set"
                )

    @property
    def n_assets(self) -> int:
        return len(self.points)

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.points]

    @property
    def id_to_row(self) -> dict[int, int]:
        if self._id_to_row is None:
            self._id_to_row = {p.id: k for k, p in enumerate(self.points)}
        return self._id_to_row

    def circle_rows(self) -> list[np.ndarray]:
        """Row indices of each circle set's members, ascending by asset id."""
        if self._circle_rows is None:
            mapping = self.id_to_row
            self._circle_rows = [
                np.array([mapping[m] for m in cs.members], dtype=int)
                for cs in self.family.sets
            ]
        return self._circle_rows

    def membership_matrix(self) -> sp.csr_matrix:
        """Sparse circle-by-asset indicator matrix for fast load sums."""
        if self._membership is None:
            rows = self.circle_rows()
            ri = np.concatenate([np.full(len(r), s) for s, r in enumerate(rows)]) if rows else np.zeros(0, int)
            ci = np.concatenate(rows) if rows else np.zeros(0, int)
            self._membership = sp.csr_matrix(
                (np.ones(len(ci)), (ri, ci)), shape=(len(rows), self.n_assets)
            )
        return self._membership

    def digest(self) -> str:
        """Stable content hash used for provenance in reports."""
        payload = {
            "points": [[p.id, p.x, p.y] for p in self.points],
            "family": self.family.to_json_dict(),
            "horizon": self.horizon,
            "cost": self.cost.tolist(),
            "fcr_price": self.fcr_price,
            "power_cap": self.power_cap,
            "circle_cap": self.circle_cap,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class Solution:
    """A pool schedule: per-asset capacities, activations, and the sold total."""

    p: np.ndarray
    z: np.ndarray
    p_F: float
    objective: float

    def to_json_dict(self) -> dict:
        return {
            "p": self.p.tolist(),
            "z": self.z.tolist(),
            "p_F": self.p_F,
            "objective": self.objective,
        }


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    amount: float


def zero_solution(scenario: Scenario) -> Solution:
    shape = (scenario.n_assets, scenario.horizon)
    return Solution(np.zeros(shape), np.zeros(shape), 0.0, 0.0)


def _check_shapes(scenario: Scenario, sol: Solution) -> None:
    shape = (scenario.n_assets, scenario.horizon)
    if sol.p.shape != shape or sol.z.shape != shape:
        raise ShapeMismatch(
            f"solution arrays {sol.p.shape}/{sol.z.shape} do not match {shape}"
        )


def objective_value(scenario: Scenario, sol: Solution) -> float:
    """Evaluate total local cost minus capacity revenue for a schedule."""
    _check_shapes(scenario, sol)
    cost = float(np.sum(scenario.cost * sol.p))
    revenue = scenario.fcr_price * sol.p_F * scenario.horizon
    return cost - revenue


def check_feasible(scenario: Scenario, sol: Solution, tol: float = FEAS_TOL) -> list[Violation]:
    """All constraint violations of a schedule, empty when feasible.

    Checks the per-asset power cap, binariness of activations, the equal
    column-sum coupling to ``p_F``, and every circle cardinality cap.
    """
    _check_shapes(scenario, sol)
    out: list[Violation] = []
    p, z = sol.p, sol.z
    cap = scenario.power_cap

    low = np.argwhere(p < -tol)
    for i, t in low:
        out.append(Violation("power_low", (int(i), int(t)), float(-p[i, t])))
    high = np.argwhere(p > cap * z + tol)
    for i, t in high:
        out.append(Violation("power_cap", (int(i), int(t)), float(p[i, t] - cap * z[i, t])))

    off_binary = np.argwhere(np.minimum(np.abs(z), np.abs(z - 1.0)) > tol)
    for i, t in off_binary:
        out.append(
            Violation("binary", (int(i), int(t)), float(min(abs(z[i, t]), abs(z[i, t] - 1.0))))
        )

    sums = p.sum(axis=0)
    for t in np.argwhere(np.abs(sums - sol.p_F) > tol).ravel():
        out.append(Violation("pool_sum", (int(t),), float(abs(sums[t] - sol.p_F))))

    zr = np.rint(z)
    for s, rows in enumerate(scenario.circle_rows()):
        counts = zr[rows].sum(axis=0)
        for t in np.argwhere(counts > scenario.circle_cap + tol).ravel():
            out.append(
                Violation("circle_cap", (int(s), int(t)), float(counts[t] - scenario.circle_cap))
            )
    return out


def solve_fixed_activation(scenario: Scenario, z: np.ndarray) -> Solution:
    """Best schedule for a fixed binary activation matrix, in closed form.

    With activations fixed, supplying ``q`` kW at step ``t`` costs the sum of
    the cheapest active blocks, so the optimal schedule fills whole
    ``power_cap`` blocks in cost order and the optimal ``q`` is the largest
    block count whose combined marginal cost still beats the capacity price.
    Ties stop early, so the smallest optimal total is returned.
    """
    z = np.asarray(z, dtype=float)
    _check_shapes(scenario, Solution(z, z, 0.0, 0.0))
    n, n_t = z.shape
    cap = scenario.power_cap
    active = z > 0.5

    k_max = int(active.sum(axis=0).min())
    if k_max == 0:
        sol = zero_solution(scenario)
        sol.z = z.copy()
        return sol

    # Per step: active costs sorted ascending, ties by row index.
    masked = np.where(active, scenario.cost, np.inf)
    order = np.argsort(masked, axis=0, kind="stable")
    sorted_costs = np.take_along_axis(masked, order, axis=0)

    # Marginal cost of the k-th block across the horizon, against revenue.
    block_margin = sorted_costs[:k_max].sum(axis=1) - scenario.fcr_price * n_t
    k_star = int(np.count_nonzero(block_margin < 0))

    p = np.zeros_like(z)
    if k_star > 0:
        chosen = order[:k_star]
        np.put_along_axis(p, chosen, cap, axis=0)
    p_F = cap * k_star
    obj = float(cap * sorted_costs[:k_star].sum() - scenario.fcr_price * p_F * n_t)
    return Solution(p, z.copy(), float(p_F), obj)


class _PoolRelaxation:
    """Cached LP relaxation: activations boxed per node, all else shared.

    Variable layout: ``p`` entries row-major, then ``z`` entries row-major,
    then ``p_F`` last.
    """

    _OPTIONS = {
        "primal_feasibility_tolerance": 1e-9,
        "dual_feasibility_tolerance": 1e-9,
    }

    def __init__(self, scenario: Scenario):
        n, n_t = scenario.n_assets, scenario.horizon
        self.n, self.n_t = n, n_t
        m = n * n_t
        self.m = m
        cap = scenario.power_cap

        rows_ub = []
        # p[i,t] - cap * z[i,t] <= 0
        eye = sp.identity(m, format="coo")
        link = sp.hstack([eye, -cap * eye, sp.coo_matrix((m, 1))])
        rows_ub.append(link)
        b_ub = [np.zeros(m)]

        # Per circle, per step: sum of member activations <= circle_cap.
        circle_rows = scenario.circle_rows()
        if circle_rows:
            data, ri, ci = [], [], []
            r = 0
            for rows in circle_rows:
                for t in range(n_t):
                    for i in rows:
                        data.append(1.0)
                        ri.append(r)
                        ci.append(m + i * n_t + t)
                    r += 1
            cc = sp.coo_matrix((data, (ri, ci)), shape=(r, 2 * m + 1))
            rows_ub.append(cc)
            b_ub.append(np.full(r, float(scenario.circle_cap)))

        self.A_ub = sp.vstack(rows_ub).tocsr()
        self.b_ub = np.concatenate(b_ub)

        # Per step: column sum of p equals p_F.
        data, ri, ci = [], [], []
        for t in range(n_t):
            for i in range(n):
                data.append(1.0)
                ri.append(t)
                ci.append(i * n_t + t)
            data.append(-1.0)
            ri.append(t)
            ci.append(2 * m)
        self.A_eq = sp.coo_matrix((data, (ri, ci)), shape=(n_t, 2 * m + 1)).tocsr()
        self.b_eq = np.zeros(n_t)

        self.c = np.concatenate(
            [scenario.cost.ravel(), np.zeros(m), [-scenario.fcr_price * n_t]]
        )
        self._p_bound = (0.0, cap)

    def solve(self, lo: np.ndarray, hi: np.ndarray):
        """Returns (value, z, p, p_F) or None when the box is infeasible."""
        bounds = [self._p_bound] * self.m
        bounds += list(zip(lo.ravel().tolist(), hi.ravel().tolist()))
        bounds.append((0.0, None))
        res = linprog(
            self.c,
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=bounds,
            method="highs",
            options=dict(self._OPTIONS),
        )
        if res.status == 2:
            return None
        if res.status != 0:
            raise Infeasible(f"relaxation solve failed with status {res.status}: {res.message}")
        x = res.x
        p = x[: self.m].reshape(self.n, self.n_t)
        z = x[self.m : 2 * self.m].reshape(self.n, self.n_t)
        return float(res.fun), z, p, float(x[-1])


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    z: np.ndarray = field(compare=False)


def solve_exact(
    scenario: Scenario,
    gap_tol: float = 1e-9,
    node_limit: int = 200_000,
    stats: dict | None = None,
) -> Solution:
    """Globally optimal schedule by branch and bound on the activations.

    Best-bound node selection; branching on the most fractional activation,
    ties broken by lowest (asset, step) index. Integral relaxations are
    cleaned up by the exact fixed-activation solver before becoming
    incumbents, so incumbent objectives carry no LP arithmetic. Equal-value
    incumbents are resolved toward the lexicographically smallest activation
    matrix so results do not depend on exploration order.

    Raises :class:`BudgetExceeded` when ``node_limit`` nodes were explored.
    """
    lp = _PoolRelaxation(scenario)
    shape = (scenario.n_assets, scenario.horizon)
    int_tol = 1e-6

    incumbent: Solution | None = None

    def prune_eps() -> float:
        if incumbent is None:
            return 0.0
        return gap_tol * max(1.0, abs(incumbent.objective))

    root = lp.solve(np.zeros(shape), np.ones(shape))
    if root is None:
        raise Infeasible("root relaxation infeasible")

    seq = 0
    heap: list[_Node] = []
    root_bound = root[0]
    heapq.heappush(heap, _Node(root[0], seq, np.zeros(shape), np.ones(shape), root[1]))
    explored = 0

    def try_incumbent(z_bin: np.ndarray) -> None:
        nonlocal incumbent
        cand = solve_fixed_activation(scenario, z_bin)
        if incumbent is None or cand.objective < incumbent.objective - 1e-12:
            incumbent = cand
        elif abs(cand.objective - incumbent.objective) <= 1e-12:
            if tuple(cand.z.ravel()) < tuple(incumbent.z.ravel()):
                incumbent = cand

    # The all-off schedule is always feasible, so start from it.
    try_incumbent(np.zeros(shape))

    while heap:
        node = heapq.heappop(heap)
        if incumbent is not None and node.bound >= incumbent.objective - prune_eps():
            break  # best-bound order: nothing left can improve
        explored += 1
        if explored > node_limit:
            raise BudgetExceeded(
                f"node limit {node_limit} exhausted",
                best=incumbent,
                lower_bound=node.bound,
                nodes=explored,
            )

        frac = np.abs(node.z - np.rint(node.z))
        if frac.max() <= int_tol:
            try_incumbent(np.rint(node.z))
            continue

        # Most fractional entry; argmin returns the first (lexicographic) tie.
        score = np.abs(node.z - 0.5)
        score[frac <= int_tol] = np.inf
        idx = np.unravel_index(int(np.argmin(score)), shape)

        for fixed in (0.0, 1.0):
            lo = node.lo.copy()
            hi = node.hi.copy()
            lo[idx] = fixed
            hi[idx] = fixed
            child = lp.solve(lo, hi)
            if child is None:
                continue
            bound = max(child[0], node.bound)  # bounds never improve downward
            if incumbent is not None and bound >= incumbent.objective - prune_eps():
                continue
            seq += 1
            heapq.heappush(heap, _Node(bound, seq, lo, hi, child[1]))

    assert incumbent is not None
    assert root_bound <= incumbent.objective + 1e-6 * max(1.0, abs(incumbent.objective))
    if stats is not None:
        stats["nodes"] = explored
        stats["root_bound"] = root_bound
    return incumbent


def max_usable_capacity(
    points,
    family: CircleFamily,
    participants,
    power_cap: float = DEFAULT_POWER_CAP,
    circle_cap: int = DEFAULT_CIRCLE_CAP,
) -> tuple[float, float]:
    """Largest constant capacity a participant subset can pool, and the
    fraction of its unconstrained total.

    Costs are zero and the price positive, so the instance collapses to a
    single step and the exact solver just maximizes the activation count
    under the circle caps.
    """
    participants = sorted(set(participants))
    if not participants:
        raise EmptySample("no participants")
    keep = set(participants)
    sub_points = sorted((p for p in points if p.id in keep), key=lambda p: p.id)
    if len(sub_points) != len(participants):
        missing = sorted(keep - {p.id for p in points})
        raise UnknownId(f"unknown participant ids {missing}")
    sub_family = restrict_family(family, points, participants)
    scenario = Scenario(
        points=sub_points,
        family=sub_family,
        horizon=1,
        cost=np.zeros((len(sub_points), 1)),
        fcr_price=1.0,
        power_cap=power_cap,
        circle_cap=circle_cap,
    )
    sol = solve_exact(scenario)
    total = power_cap * len(participants)
    return sol.p_F, sol.p_F / total


@dataclass
class MonteCarloResult:
    """Per-trial usable capacities for one participation rate."""

    rate: float
    fractions: list[float]
    capacities_kw: list[float]
    participant_counts: list[int]

    @property
    def mean_fraction(self) -> float:
        return float(np.mean(self.fractions))

    @property
    def mean_capacity_kw(self) -> float:
        return float(np.mean(self.capacities_kw))


def monte_carlo_usable_fraction(
    points,
    rate: float,
    trials: int,
    seed: int,
    power_cap: float = DEFAULT_POWER_CAP,
    circle_cap: int = DEFAULT_CIRCLE_CAP,
    radius: float = DEFAULT_RADIUS,
    family: CircleFamily | None = None,
) -> MonteCarloResult:
    """Usable-capacity distribution over random participant draws.

    Each trial samples ``floor(rate * n)`` participants uniformly without
    replacement from its own derived seed, restricts the constraint family
    to them, and computes the usable fraction. Deterministic given ``seed``.
    """
    if not (0.0 < rate <= 1.0):
        raise ValueError("rate must be in (0, 1]")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    points = list(points)
    n = len(points)
    k = int(math.floor(rate * n))
    if k == 0:
        raise EmptySample(f"rate {rate} over {n} points yields zero participants")
    if family is None:
        family = build_circle_family(points, radius)
    ids = sorted(p.id for p in points)

    fractions, capacities, counts = [], [], []
    for trial in range(trials):
        rng = np.random.default_rng(child_seed(seed, "participants", rate, trial))
        chosen = sorted(rng.choice(ids, size=k, replace=False).tolist())
        cap_kw, frac = max_usable_capacity(
            points, family, chosen, power_cap=power_cap, circle_cap=circle_cap
        )
        fractions.append(frac)
        capacities.append(cap_kw)
        counts.append(k)
    return MonteCarloResult(rate, fractions, capacities, counts)
