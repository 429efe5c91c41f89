"""Simulated distributed runtime for the consensus solver.

Every asset, every circle set, and the pool coordinator is an isolated
agent. Agents exchange explicit messages once per phase over a fixed
topology: each asset talks to the circle agents of the sets containing it
and to the coordinator, never to other assets. No agent sees the whole
problem, and an asset's cost row never leaves its agent.

The runtime is a transport, not a different algorithm: it calls the same
subproblem kernels on the same array layouts as the in-process engine, with
a deterministic scheduler (assets in row order, circles in index order), so
its numerical results are bit-identical to :func:`fcrpool.admm.run`.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .admm import (
    AdmmParams,
    SolveReport,
    _bang_bang,
    _local_kernel,
    circle_project,
    fsp_project,
    init_state,
    run,
)
from .errors import InconsistentFamily, TransportError
from .model import Scenario


class AgentKind(enum.Enum):
    ASSET = "asset"
    CIRCLE = "circle"
    FSP = "fsp"


@dataclass(frozen=True)
class AgentId:
    kind: AgentKind
    index: int

    def label(self) -> str:
        return f"{self.kind.value}:{self.index}"


FSP_ID = AgentId(AgentKind.FSP, 0)


@dataclass(frozen=True)
class LocalZ:
    z: np.ndarray

    @property
    def scalars(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class LocalP:
    p: np.ndarray

    @property
    def scalars(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class CircleReply:
    z: np.ndarray
    u: np.ndarray

    @property
    def scalars(self) -> int:
        return self.z.size + self.u.size


@dataclass(frozen=True)
class FspReply:
    p: np.ndarray
    u: np.ndarray

    @property
    def scalars(self) -> int:
        return self.p.size + self.u.size


@dataclass(frozen=True)
class Done:
    status: str

    @property
    def scalars(self) -> int:
        return 0


@dataclass(frozen=True)
class Message:
    sender: AgentId
    to: AgentId
    iteration: int
    payload: object

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    def log_dict(self) -> dict:
        return {
            "from": self.sender.label(),
            "to": self.to.label(),
            "k": self.iteration,
            "kind": self.kind,
            "size": self.payload.scalars,
        }


@dataclass(frozen=True)
class RoundStats:
    iteration: int
    messages_sent: int
    bytes_estimate: int
    max_fanout: int


@dataclass(frozen=True)
class Topology:
    """Routing table: which circles each asset reports to, and back."""

    asset_circles: dict[int, tuple[int, ...]]
    circle_members: dict[int, tuple[int, ...]]

    @property
    def asset_ids(self) -> list[int]:
        return sorted(self.asset_circles)

    def links(self) -> set[tuple[str, str]]:
        out = set()
        for i, circles in self.asset_circles.items():
            out.add((f"asset:{i}", "fsp:0"))
            for s in circles:
                out.add((f"asset:{i}", f"circle:{s}"))
        return out


def build_topology(scenario: Scenario) -> Topology:
    """Bidirectional links between assets, their circle agents, and the pool."""
    ids = {p.id for p in scenario.points}
    family = scenario.family
    for cs in family.sets:
        if not set(cs.members) <= ids:
            raise InconsistentFamily(f"family set {cs.members} references unknown assets")
    asset_circles = {}
    for i in sorted(ids):
        circles = family.sets_containing(i)
        if not circles:
            raise InconsistentFamily(f"asset {i} belongs to no circle set")
        asset_circles[i] = circles
    circle_members = {s: cs.members for s, cs in enumerate(family.sets)}
    return Topology(asset_circles, circle_members)


class _AssetAgent:
    """Holds one asset's private costs and its view of the consensus."""

    def __init__(self, asset_id, row, cost_row, scenario, params, circle_ids):
        self.id = AgentId(AgentKind.ASSET, asset_id)
        self.row = row
        self._cost = cost_row  # never leaves this agent
        self.power_cap = scenario.power_cap
        self.fcr_price = scenario.fcr_price
        self.params = params
        self.circle_ids = tuple(circle_ids)
        n_t = scenario.horizon
        self.p_h = np.zeros(n_t)
        self.u_h = np.zeros(n_t)
        self.z_g = {s: np.zeros(n_t) for s in self.circle_ids}
        self.u_g = {s: np.zeros(n_t) for s in self.circle_ids}
        self.p_f = np.zeros(n_t)
        self.z_f = np.zeros(n_t)

    def local_step(self, k, integer, warm):
        if warm:
            self.p_f, self.z_f = _bang_bang(self._cost, self.fcr_price, self.power_cap)
        else:
            b = self.p_h - self.u_h
            a_sum = np.zeros_like(b)
            for s in self.circle_ids:
                a_sum += self.z_g[s] - self.u_g[s]
            self.p_f, self.z_f = _local_kernel(
                self._cost,
                self.fcr_price,
                self.power_cap,
                b,
                a_sum,
                float(len(self.circle_ids)),
                rho_p=self.params.rho_f,
                rho_z=self.params.rho_c,
                integer=integer,
            )
        out = [
            Message(self.id, AgentId(AgentKind.CIRCLE, s), k, LocalZ(self.z_f))
            for s in self.circle_ids
        ]
        out.append(Message(self.id, FSP_ID, k, LocalP(self.p_f)))
        return out

    def receive(self, msg: Message):
        if isinstance(msg.payload, CircleReply):
            s = msg.sender.index
            if s not in self.z_g:
                raise TransportError(f"asset {self.id.index} got reply from foreign circle {s}")
            self.z_g[s] = msg.payload.z
            self.u_g[s] = msg.payload.u
        elif isinstance(msg.payload, FspReply):
            self.p_h = msg.payload.p
            self.u_h = msg.payload.u
        elif isinstance(msg.payload, Done):
            pass
        else:
            raise TransportError(f"asset {self.id.index} got unexpected {msg.kind}")


class _CircleAgent:
    """Enforces one circle set's cardinality cap on its members' activations."""

    def __init__(self, index, member_ids, circle_cap, n_t):
        self.id = AgentId(AgentKind.CIRCLE, index)
        self.member_ids = tuple(member_ids)
        self.pos = {i: r for r, i in enumerate(self.member_ids)}
        self.circle_cap = circle_cap
        m = len(self.member_ids)
        self.z_g = np.zeros((m, n_t))
        self.u_g = np.zeros((m, n_t))
        self._inbox: dict[int, np.ndarray] = {}

    def receive(self, msg: Message):
        if not isinstance(msg.payload, LocalZ):
            raise TransportError(f"circle {self.id.index} got unexpected {msg.kind}")
        i = msg.sender.index
        if i not in self.pos:
            raise TransportError(f"circle {self.id.index} got message from non-member {i}")
        self._inbox[i] = msg.payload.z

    def project_step(self, k):
        if set(self._inbox) != set(self.member_ids):
            missing = sorted(set(self.member_ids) - set(self._inbox))
            raise TransportError(f"circle {self.id.index} missing rows from {missing}")
        z_rows = np.vstack([self._inbox[i] for i in self.member_ids])
        self.z_g = circle_project(z_rows, self.u_g, self.circle_cap)
        self.u_g = self.u_g + (z_rows - self.z_g)
        self._inbox = {}
        return [
            Message(self.id, AgentId(AgentKind.ASSET, i), k, CircleReply(self.z_g[r], self.u_g[r]))
            for r, i in enumerate(self.member_ids)
        ]


class _FspAgent:
    """Coordinates the pool toward one constant aggregate capacity."""

    def __init__(self, asset_ids, n_t):
        self.id = FSP_ID
        self.asset_ids = tuple(asset_ids)
        self.pos = {i: r for r, i in enumerate(self.asset_ids)}
        self.u_h = np.zeros((len(self.asset_ids), n_t))
        self.p_h = np.zeros((len(self.asset_ids), n_t))
        self.p_F = 0.0
        self._inbox: dict[int, np.ndarray] = {}

    def receive(self, msg: Message):
        if not isinstance(msg.payload, LocalP):
            raise TransportError(f"fsp got unexpected {msg.kind}")
        self._inbox[msg.sender.index] = msg.payload.p

    def project_step(self, k):
        if set(self._inbox) != set(self.asset_ids):
            missing = sorted(set(self.asset_ids) - set(self._inbox))
            raise TransportError(f"fsp missing capacity rows from {missing}")
        p_rows = np.vstack([self._inbox[i] for i in self.asset_ids])
        self.p_h, self.p_F = fsp_project(p_rows, self.u_h)
        self.u_h = self.u_h + (p_rows - self.p_h)
        self._inbox = {}
        return [
            Message(self.id, AgentId(AgentKind.ASSET, i), k, FspReply(self.p_h[r], self.u_h[r]))
            for r, i in enumerate(self.asset_ids)
        ]


class AgentEngine:
    """Message-passing engine with the same phase interface as the in-process
    one; the driver cannot tell them apart numerically."""

    def __init__(self, scenario: Scenario, params: AdmmParams, scanner=None, msg_log=None):
        self.scenario = scenario
        self.params = params
        self.scanner = scanner
        self.msg_log = msg_log
        self.topology = build_topology(scenario)
        self.circle_rows = scenario.circle_rows()
        self.state = init_state(scenario)

        n_t = scenario.horizon
        self.assets = [
            _AssetAgent(p.id, row, scenario.cost[row], scenario, params, self.topology.asset_circles[p.id])
            for row, p in enumerate(scenario.points)
        ]
        self.circles = [
            _CircleAgent(s, cs.members, scenario.circle_cap, n_t)
            for s, cs in enumerate(scenario.family.sets)
        ]
        self.fsp = _FspAgent([p.id for p in scenario.points], n_t)
        self._by_id = {a.id: a for a in self.assets}
        self._by_id.update({c.id: c for c in self.circles})
        self._by_id[self.fsp.id] = self.fsp

        self._k = 0
        self._msg_count = 0
        self._byte_count = 0
        self._fanout = 0

    def _deliver(self, messages):
        for msg in messages:
            if self.scanner is not None:
                self.scanner(msg)
            if self.msg_log is not None:
                self.msg_log.write(json.dumps(msg.log_dict()) + "\n")
            target = self._by_id.get(msg.to)
            if target is None:
                raise TransportError(f"undeliverable message to {msg.to.label()}")
            target.receive(msg)
        self._msg_count += len(messages)
        self._byte_count += sum(m.payload.scalars * 8 for m in messages)
        self._fanout = max(self._fanout, len(messages))

    def local_phase(self, integer: bool, warm: bool) -> None:
        self._msg_count = 0
        self._byte_count = 0
        self._fanout = 0
        for agent in self.assets:
            self._deliver(agent.local_step(self._k, integer, warm))
        self.state.p_f = np.vstack([a.p_f for a in self.assets])
        self.state.z_f = np.vstack([a.z_f for a in self.assets])

    def consensus_phase(self) -> None:
        for circle in self.circles:
            self._deliver(circle.project_step(self._k))
        self._deliver(self.fsp.project_step(self._k))
        self.state.z_g = [c.z_g for c in self.circles]
        self.state.u_g = [c.u_g for c in self.circles]
        self.state.p_h = self.fsp.p_h
        self.state.u_h = self.fsp.u_h
        self.state.p_F = self.fsp.p_F
        self._k += 1

    def round_stats(self) -> RoundStats:
        return RoundStats(
            iteration=self._k - 1,
            messages_sent=self._msg_count,
            bytes_estimate=self._byte_count,
            max_fanout=self._fanout,
        )


def run_simulation(
    scenario: Scenario,
    params: AdmmParams,
    on_iteration=None,
    scanner=None,
    msg_log=None,
) -> tuple[SolveReport, list[RoundStats]]:
    """Run the consensus solver purely through message passing.

    Returns the solve report (bit-identical to the in-process run) and the
    per-iteration communication statistics. After the final iteration the
    coordinator broadcasts a ``Done`` status to all assets; those messages go
    to the log but not into the per-iteration statistics.
    """
    engine = AgentEngine(scenario, params, scanner=scanner, msg_log=msg_log)
    report = run(scenario, params, on_iteration=on_iteration, _engine=engine)
    done = [
        Message(FSP_ID, AgentId(AgentKind.ASSET, i), engine._k, Done(report.status))
        for i in engine.fsp.asset_ids
    ]
    engine._deliver(done)
    return report, report.round_stats
