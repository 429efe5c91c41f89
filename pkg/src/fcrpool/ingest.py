"""Input loading, synthetic neighborhoods, and seeded scenario sampling.

Connection points come either from a ``id,x,y`` CSV (planar meters) or from
synthetic generators standing in for real grid data: a uniform disk, a
clustered Gaussian scene (dense pockets like a city centre), or a regular
street grid. All sampling is reproducible: every site derives its own seed
from the master seed plus purpose tags.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateId, EmptySample, ParseError, ValidationError
from .geometry import DEFAULT_RADIUS, ConnectionPoint, build_circle_family
from .model import DEFAULT_CIRCLE_CAP, DEFAULT_POWER_CAP, Scenario
from .seeding import child_seed

SYNTHETIC_KINDS = ("uniform_disk", "clustered_gaussian", "grid_street")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings for a synthetic neighborhood.

    ``density_param`` is the per-kind scale: disk radius for
    ``uniform_disk``, cluster standard deviation for ``clustered_gaussian``,
    and grid pitch for ``grid_street`` (all meters).
    """

    kind: str
    n_points: int
    extent: float
    density_param: float
    seed: int

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValidationError(f"unknown synthetic kind {self.kind!r}")
        if self.n_points < 1:
            raise ValidationError("n_points must be at least 1")
        if self.extent <= 0:
            raise ValidationError("extent must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_points": self.n_points,
            "extent": self.extent,
            "density_param": self.density_param,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        return cls(
            kind=data["kind"],
            n_points=int(data["n_points"]),
            extent=float(data["extent"]),
            density_param=float(data["density_param"]),
            seed=int(data["seed"]),
        )


@dataclass
class ExperimentSpec:
    """A batch experiment: point source, rates, trials, prices, horizon."""

    points_csv: str | None = None
    synthetic: SyntheticSpec | None = None
    participation_rates: list[float] = field(default_factory=lambda: [0.05, 0.10, 0.15])
    trials: int = 10
    c_F: float = 0.8
    n_T: int = 24
    seed: int = 0
    radius: float = DEFAULT_RADIUS
    power_cap: float = DEFAULT_POWER_CAP
    circle_cap: int = DEFAULT_CIRCLE_CAP

    def __post_init__(self):
        if (self.points_csv is None) == (self.synthetic is None):
            raise ValidationError("specify exactly one of points_csv or synthetic")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        for r in self.participation_rates:
            if not (0.0 < r <= 1.0):
                raise ValidationError(f"participation rate {r} outside (0, 1]")

    def resolve_points(self) -> list[ConnectionPoint]:
        if self.points_csv is not None:
            return load_points(self.points_csv)
        return generate_points(self.synthetic)

    def to_dict(self) -> dict:
        return {
            "points_csv": self.points_csv,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "participation_rates": self.participation_rates,
            "trials": self.trials,
            "c_F": self.c_F,
            "n_T": self.n_T,
            "seed": self.seed,
            "radius": self.radius,
            "power_cap": self.power_cap,
            "circle_cap": self.circle_cap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        synth = data.get("synthetic")
        return cls(
            points_csv=data.get("points_csv"),
            synthetic=SyntheticSpec.from_dict(synth) if synth else None,
            participation_rates=[float(r) for r in data.get("participation_rates", [0.05, 0.10, 0.15])],
            trials=int(data.get("trials", 10)),
            c_F=float(data.get("c_F", 0.8)),
            n_T=int(data.get("n_T", 24)),
            seed=int(data.get("seed", 0)),
            radius=float(data.get("radius", DEFAULT_RADIUS)),
            power_cap=float(data.get("power_cap", DEFAULT_POWER_CAP)),
            circle_cap=int(data.get("circle_cap", DEFAULT_CIRCLE_CAP)),
        )

    @classmethod
    def from_json_file(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)


def load_points(path) -> list[ConnectionPoint]:
    """Read points from a CSV with header ``id,x,y`` (meters, planar)."""
    points = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1)
        if [h.strip().lower() for h in header] != ["id", "x", "y"]:
            raise ParseError(f"expected header 'id,x,y', got {','.join(header)!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                pid = int(row[0])
                x = float(row[1])
                y = float(row[2])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(f"non-finite coordinate for id {pid}", line=lineno)
            if pid in seen:
                raise DuplicateId(f"duplicate id {pid} at line {lineno}")
            seen.add(pid)
            points.append(ConnectionPoint(pid, x, y))
    if not points:
        raise ParseError("no data rows", line=1)
    return points


def write_points(path, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y"])
        for p in points:
            writer.writerow([p.id, repr(p.x), repr(p.y)])


def generate_points(spec: SyntheticSpec) -> list[ConnectionPoint]:
    """Deterministic synthetic neighborhood of ``spec.n_points`` points."""
    rng = np.random.default_rng(child_seed(spec.seed, "synthetic-points", spec.kind))
    n = spec.n_points
    if spec.kind == "uniform_disk":
        radius = spec.density_param
        cx = cy = spec.extent / 2.0
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        rr = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
        xs = cx + rr * np.cos(theta)
        ys = cy + rr * np.sin(theta)
    elif spec.kind == "clustered_gaussian":
        sigma = spec.density_param
        n_clusters = max(1, round(n / 20))
        centers = rng.uniform(0.0, spec.extent, size=(n_clusters, 2))
        assign = rng.integers(0, n_clusters, size=n)
        offsets = rng.normal(0.0, sigma, size=(n, 2))
        xs = centers[assign, 0] + offsets[:, 0]
        ys = centers[assign, 1] + offsets[:, 1]
    else:  # grid_street
        pitch = spec.density_param
        cols = int(math.ceil(math.sqrt(n)))
        idx = np.arange(n)
        xs = (idx % cols).astype(float) * pitch
        ys = (idx // cols).astype(float) * pitch
    return [ConnectionPoint(int(i), float(xs[i]), float(ys[i])) for i in range(n)]


def build_scenario(spec: ExperimentSpec, rate: float, trial_index: int) -> Scenario:
    """Sample one seeded scenario: participants, constraint sets, and costs.

    Participants are ``floor(rate * n)`` points drawn uniformly without
    replacement; the circle family is built on the participant coordinates;
    costs are uniform on [0, 1) per (asset, step). Everything is derived
    from ``(spec.seed, rate, trial_index)``, so identical arguments always
    produce the identical scenario.
    """
    if not (0.0 < rate <= 1.0):
        raise ValidationError(f"rate {rate} outside (0, 1]")
    points = spec.resolve_points()
    n = len(points)
    k = int(math.floor(rate * n))
    if k == 0:
        raise EmptySample(f"rate {rate} over {n} points yields zero participants")

    ids = sorted(p.id for p in points)
    rng = np.random.default_rng(child_seed(spec.seed, "participants", rate, trial_index))
    chosen = set(int(i) for i in rng.choice(ids, size=k, replace=False))
    sub_points = sorted((p for p in points if p.id in chosen), key=lambda p: p.id)

    family = build_circle_family(sub_points, spec.radius)
    cost_rng = np.random.default_rng(child_seed(spec.seed, "costs", rate, trial_index))
    cost = cost_rng.random((k, spec.n_T))
    return Scenario(
        points=sub_points,
        family=family,
        horizon=spec.n_T,
        cost=cost,
        fcr_price=spec.c_F,
        power_cap=spec.power_cap,
        circle_cap=spec.circle_cap,
        rng_seed=child_seed(spec.seed, "scenario", rate, trial_index),
    )


def load_scenario(path) -> Scenario:
    """Load a scenario JSON file.

    The file carries points inline (``points``: list of [id, x, y]), as a
    CSV path (``points_csv``), or as a synthetic generator (``synthetic``),
    plus ``horizon``, a ``cost`` matrix or a sampling directive
    ``{"uniform": [lo, hi], "seed": s}``, the capacity price ``fcr_price``,
    and optional caps and circle radius.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    sources = [key for key in ("points", "points_csv", "synthetic") if data.get(key)]
    if len(sources) != 1:
        raise ValidationError("specify exactly one of points, points_csv, synthetic")
    if "points" in sources:
        points = [
            ConnectionPoint(int(e[0]), float(e[1]), float(e[2])) for e in data["points"]
        ]
    elif "points_csv" in sources:
        points = load_points(data["points_csv"])
    else:
        points = generate_points(SyntheticSpec.from_dict(data["synthetic"]))

    horizon = int(data.get("horizon", 24))
    radius = float(data.get("radius", DEFAULT_RADIUS))
    family = build_circle_family(points, radius)

    cost_spec = data.get("cost", {"uniform": [0.0, 1.0], "seed": 0})
    if isinstance(cost_spec, dict):
        lo, hi = (float(v) for v in cost_spec.get("uniform", [0.0, 1.0]))
        seed = int(cost_spec.get("seed", 0))
        rng = np.random.default_rng(child_seed(seed, "costs"))
        cost = lo + (hi - lo) * rng.random((len(points), horizon))
    else:
        cost = np.asarray(cost_spec, dtype=float)

    return Scenario(
        points=points,
        family=family,
        horizon=horizon,
        cost=cost,
        fcr_price=float(data.get("fcr_price", 0.8)),
        power_cap=float(data.get("power_cap", DEFAULT_POWER_CAP)),
        circle_cap=int(data.get("circle_cap", DEFAULT_CIRCLE_CAP)),
        rng_seed=int(data.get("rng_seed", 0)),
    )
