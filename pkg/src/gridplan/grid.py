"""Network instance data model, validation, file I/O and seeded generation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import networkx as nx
import numpy as np

from .feeders import STANDARD
from .rng import substream

ROOT = "s"


class InstanceError(ValueError):
    """Raised for unreadable or invalid instances; ``problems`` lists every issue."""

    def __init__(self, message: str, problems: Sequence[str] = ()):
        self.problems = list(problems)
        detail = "".join(f"\n  - {p}" for p in self.problems)
        super().__init__(message + detail)


@dataclass(frozen=True)
class NodeSpec:
    id: Any
    load_p: tuple[float, ...]
    load_q: tuple[float, ...]
    is_substation: bool = False
    cap_p: float = 0.0
    cap_q: float = 0.0
    dg_candidate: bool = False


@dataclass(frozen=True)
class LineSpec:
    from_node: Any
    to_node: Any
    cost: float
    resistance: float
    reactance: float
    cap_p: float
    cap_q: float
    mu_max: tuple[float, ...]
    tau_rst: int = 0

    @property
    def key(self) -> tuple:
        return (self.from_node, self.to_node)

    @property
    def label(self) -> str:
        return f"{self.from_node}-{self.to_node}"


@dataclass(frozen=True)
class NetworkInstance:
    nodes: tuple[NodeSpec, ...]
    lines: tuple[LineSpec, ...]
    periods: int
    budget_cost: float
    budget_dg: int
    n_z: int
    v_min: float = 0.95
    v_max: float = 1.05
    v_ref: float = 1.0
    coords: tuple[tuple[float, float], ...] | None = field(default=None, compare=False)

    # -- indexing -----------------------------------------------------------
    @cached_property
    def node_index(self) -> dict[Any, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def line_ends(self) -> list[tuple[int, int]]:
        idx = self.node_index
        return [(idx[l.from_node], idx[l.to_node]) for l in self.lines]

    @cached_property
    def substations(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.is_substation]

    @cached_property
    def dg_candidates(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.dg_candidate and not n.is_substation]

    @cached_property
    def load_p(self) -> np.ndarray:
        return np.array([n.load_p for n in self.nodes], dtype=float).reshape(len(self.nodes), self.periods)

    @cached_property
    def load_q(self) -> np.ndarray:
        return np.array([n.load_q for n in self.nodes], dtype=float).reshape(len(self.nodes), self.periods)

    @cached_property
    def mu_max(self) -> np.ndarray:
        return np.array([l.mu_max for l in self.lines], dtype=float).reshape(len(self.lines), self.periods)

    @cached_property
    def tau_rst(self) -> np.ndarray:
        return np.array([l.tau_rst for l in self.lines], dtype=int)

    @cached_property
    def in_lines(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for e, (_, n) in enumerate(self.line_ends):
            out[n].append(e)
        return out

    @cached_property
    def out_lines(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for e, (m, _) in enumerate(self.line_ends):
            out[m].append(e)
        return out

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    def total_load(self) -> float:
        return float(self.load_p.sum())

    # -- derived instances --------------------------------------------------
    def with_periods(self, k: int) -> "NetworkInstance":
        """Keep the first ``k`` periods."""
        if not 1 <= k <= self.periods:
            raise ValueError(f"cannot keep {k} of {self.periods} periods")
        nodes = tuple(replace(n, load_p=n.load_p[:k], load_q=n.load_q[:k]) for n in self.nodes)
        lines = tuple(replace(l, mu_max=l.mu_max[:k]) for l in self.lines)
        return replace(self, nodes=nodes, lines=lines, periods=k)

    def with_mu(self, mu: float | np.ndarray) -> "NetworkInstance":
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (self.n_lines, self.periods))
        lines = tuple(replace(l, mu_max=tuple(map(float, mu[e]))) for e, l in enumerate(self.lines))
        return replace(self, lines=lines)

    def replace(self, **changes) -> "NetworkInstance":
        return replace(self, **changes)


# -- validation ---------------------------------------------------------------

def min_forest(instance: NetworkInstance) -> tuple[float, list[int]] | None:
    """Cheapest spanning forest rooted at the substations, honouring arc directions.

    Solved exactly as a minimum spanning arborescence of the augmented graph.
    Returns ``(cost, line indices)`` or ``None`` when no such forest exists.
    """
    g = nx.DiGraph()
    g.add_node(ROOT)
    g.add_nodes_from(range(instance.n_nodes))
    subs = set(instance.substations)
    for r in subs:
        g.add_edge(ROOT, r, weight=0.0, line=None)
    for e, (m, n) in enumerate(instance.line_ends):
        if n in subs:
            continue
        w = instance.lines[e].cost
        if g.has_edge(m, n):  # parallel arcs: keep the cheaper
            if g[m][n]["weight"] <= w:
                continue
        g.add_edge(m, n, weight=w, line=e)
    try:
        arb = nx.minimum_spanning_arborescence(g, attr="weight", preserve_attrs=True)
    except nx.NetworkXException:
        return None
    if arb.number_of_nodes() != g.number_of_nodes() or arb.in_degree(ROOT) != 0:
        return None
    chosen = sorted(d["line"] for _, _, d in arb.edges(data=True) if d["line"] is not None)
    return float(sum(instance.lines[e].cost for e in chosen)), chosen


def validate(instance: NetworkInstance, check_budget: bool = True) -> list[str]:
    """Every violated instance invariant, as human-readable strings."""
    problems: list[str] = []
    T = instance.periods
    if T < 1:
        problems.append("periods must be >= 1")
    ids = [n.id for n in instance.nodes]
    if len(set(ids)) != len(ids):
        problems.append("duplicate node ids")
    for n in instance.nodes:
        if len(n.load_p) != T or len(n.load_q) != T:
            problems.append(f"node {n.id}: load vectors must have length {T}")
        if any(x < 0 for x in n.load_p) or any(x < 0 for x in n.load_q):
            problems.append(f"node {n.id}: negative load")
        if n.cap_p < 0 or n.cap_q < 0:
            problems.append(f"node {n.id}: negative capacity")
        if n.is_substation and n.cap_p <= 0:
            problems.append(f"node {n.id}: substation needs cap_p > 0")
        if n.is_substation and n.dg_candidate:
            problems.append(f"node {n.id}: substation cannot be a DG candidate")
    if not any(n.is_substation for n in instance.nodes):
        problems.append("no substation")
    known = set(ids)
    seen: set[frozenset] = set()
    for l in instance.lines:
        if l.from_node not in known or l.to_node not in known:
            problems.append(f"line {l.label}: unknown endpoint")
        if l.from_node == l.to_node:
            problems.append(f"line {l.label}: self-loop")
        pair = frozenset((l.from_node, l.to_node))
        if pair in seen:
            problems.append(f"line {l.label}: duplicate unordered pair")
        seen.add(pair)
        if l.cost < 0 or l.cap_p < 0 or l.cap_q < 0:
            problems.append(f"line {l.label}: negative cost or capacity")
        if l.resistance < 0 or l.reactance < 0:
            problems.append(f"line {l.label}: negative impedance")
        if len(l.mu_max) != T:
            problems.append(f"line {l.label}: mu_max must have length {T}")
        if any(not 0.0 <= m <= 1.0 for m in l.mu_max):
            problems.append(f"line {l.label}: mu_max outside [0,1]")
        if l.tau_rst < 0 or int(l.tau_rst) != l.tau_rst:
            problems.append(f"line {l.label}: tau_rst must be a nonnegative integer")
    if not instance.v_min < instance.v_max:
        problems.append("v_min must be < v_max")
    if not instance.v_min <= 1.0 <= instance.v_max:
        problems.append("substation voltage 1.0 p.u. must lie in [v_min, v_max]")
    if instance.v_ref <= 0:
        problems.append("v_ref must be > 0")
    if instance.n_z < 0:
        problems.append("n_z must be >= 0")
    n_cand = sum(1 for n in instance.nodes if n.dg_candidate and not n.is_substation)
    if instance.budget_dg < 0 or instance.budget_dg > n_cand:
        problems.append(f"budget_dg {instance.budget_dg} exceeds {n_cand} DG candidates")
    if problems or not check_budget:
        return problems
    best = min_forest(instance)
    if best is None:
        problems.append("no spanning forest rooted at the substations exists (check arc directions)")
    elif best[0] > instance.budget_cost * (1 + 1e-12):
        problems.append(f"cheapest spanning forest costs {best[0]:.6g} > budget_cost {instance.budget_cost:.6g}")
    return problems


def check(instance: NetworkInstance) -> NetworkInstance:
    problems = validate(instance)
    if problems:
        raise InstanceError("invalid instance", problems)
    return instance


# -- augmented graph ----------------------------------------------------------

@dataclass(frozen=True)
class AugmentedGraph:
    """Base graph plus the synthetic root joined to every substation."""

    base: NetworkInstance
    root: str = ROOT

    @property
    def root_edges(self) -> list[tuple[str, Any]]:
        return [(self.root, self.base.nodes[r].id) for r in self.base.substations]

    @property
    def nodes(self) -> list[Any]:
        return [n.id for n in self.base.nodes] + [self.root]

    @property
    def edges(self) -> list[tuple[Any, Any]]:
        return [l.key for l in self.base.lines] + self.root_edges

    @property
    def forced(self) -> list[bool]:
        return [False] * self.base.n_lines + [True] * len(self.base.substations)

    @property
    def costs(self) -> list[float]:
        return [l.cost for l in self.base.lines] + [0.0] * len(self.base.substations)

    def strip(self) -> NetworkInstance:
        return self.base


def augment(instance: NetworkInstance) -> AugmentedGraph:
    return AugmentedGraph(instance)


# -- serialization ------------------------------------------------------------

def _schema() -> dict:
    return json.loads(resources.files("gridplan").joinpath("data/instance.schema.json").read_text())


def to_dict(instance: NetworkInstance) -> dict:
    d: dict[str, Any] = {
        "periods": instance.periods,
        "budget_cost": instance.budget_cost,
        "budget_dg": instance.budget_dg,
        "n_z": instance.n_z,
        "v_min": instance.v_min,
        "v_max": instance.v_max,
        "v_ref": instance.v_ref,
        "nodes": [
            {
                "id": n.id, "is_substation": n.is_substation, "dg_candidate": n.dg_candidate,
                "cap_p": n.cap_p, "cap_q": n.cap_q, "load_p": list(n.load_p), "load_q": list(n.load_q),
            }
            for n in instance.nodes
        ],
        "lines": [
            {
                "from": l.from_node, "to": l.to_node, "cost": l.cost, "resistance": l.resistance,
                "reactance": l.reactance, "cap_p": l.cap_p, "cap_q": l.cap_q,
                "mu_max": list(l.mu_max), "tau_rst": l.tau_rst,
            }
            for l in instance.lines
        ],
    }
    if instance.coords is not None:
        d["coords"] = {str(n.id): list(xy) for n, xy in zip(instance.nodes, instance.coords)}
    return d


def _floats(x, T: int) -> tuple[float, ...]:
    if isinstance(x, (int, float)):
        return (float(x),) * T
    return tuple(float(v) for v in x)


def from_dict(d: dict) -> NetworkInstance:
    T = int(d["periods"])
    nodes = tuple(
        NodeSpec(
            id=n["id"], load_p=_floats(n["load_p"], T), load_q=_floats(n["load_q"], T),
            is_substation=bool(n.get("is_substation", False)), cap_p=float(n.get("cap_p", 0.0)),
            cap_q=float(n.get("cap_q", 0.0)), dg_candidate=bool(n.get("dg_candidate", False)),
        )
        for n in d["nodes"]
    )
    lines = tuple(
        LineSpec(
            from_node=l["from"], to_node=l["to"], cost=float(l["cost"]), resistance=float(l["resistance"]),
            reactance=float(l["reactance"]), cap_p=float(l["cap_p"]), cap_q=float(l["cap_q"]),
            mu_max=_floats(l.get("mu_max", 0.0), T), tau_rst=int(l.get("tau_rst", 0)),
        )
        for l in d["lines"]
    )
    coords = None
    if "coords" in d:
        coords = tuple(tuple(float(c) for c in d["coords"][str(n.id)]) for n in nodes)
    return NetworkInstance(
        nodes=nodes, lines=lines, periods=T, budget_cost=float(d["budget_cost"]),
        budget_dg=int(d["budget_dg"]), n_z=int(d["n_z"]), v_min=float(d["v_min"]),
        v_max=float(d["v_max"]), v_ref=float(d["v_ref"]), coords=coords,
    )


def dumps(instance: NetworkInstance) -> str:
    return json.dumps(to_dict(instance), indent=1) + "\n"


def loads(text: str) -> NetworkInstance:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error: {exc}") from exc
    errors = sorted(jsonschema.Draft7Validator(_schema()).iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        raise InstanceError(
            "instance does not match schema",
            [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors],
        )
    return check(from_dict(raw))


def load_instance(path: str | Path) -> NetworkInstance:
    return loads(Path(path).read_text())


def save_instance(instance: NetworkInstance, path: str | Path) -> None:
    Path(path).write_text(dumps(instance))


def bundled(name: str) -> NetworkInstance:
    """Instance shipped with the package: ``ieee33``, ``ieee69`` or a fixture name."""
    base = resources.files("gridplan").joinpath("data")
    for candidate in (f"{name}.json", f"fixtures/{name}.json"):
        p = base.joinpath(candidate)
        if p.is_file():
            return loads(p.read_text())
    raise FileNotFoundError(name)


# -- generation ---------------------------------------------------------------

@dataclass(frozen=True)
class InstanceTemplate:
    node_count: int
    substation_ids: tuple[int, ...]
    dg_count: int
    periods: int = 24
    seed: int = 0
    n_z: int | None = None
    tie_lines: int = 0
    budget_slack: float = 0.05
    load_p_range: tuple[float, float] = (30.0, 200.0)
    load_q_range: tuple[float, float] = (5.0, 100.0)
    cost_range: tuple[float, float] = (40e4, 100e4)
    mu_range: tuple[float, float] = (0.0, 0.01)
    tau_range: tuple[int, int] = (1, 3)
    dg_cap: tuple[float, float] = (100.0, 50.0)
    substation_cap: tuple[float, float] = (2000.0, 1500.0)
    line_cap: tuple[float, float] = (1200.0, 800.0)
    ohm_per_unit: tuple[float, float] = (0.6, 0.45)
    base_kv: float = 12.66


def _layout(n: int, branches: list[tuple[int, int]], rng: np.random.Generator) -> np.ndarray:
    """Planar coordinates placing each child near its parent along the backbone."""
    xy = np.zeros((n + 1, 2))
    placed = {1}
    children: dict[int, list[int]] = {}
    for a, b in branches:
        children.setdefault(a, []).append(b)
    heading = {1: 0.0}
    stack = [1]
    while stack:
        a = stack.pop()
        for k, b in enumerate(children.get(a, [])):
            turn = 0.0 if k == 0 else (math.pi / 2) * (1 if k % 2 else -1)
            theta = heading[a] + turn + rng.uniform(-0.3, 0.3)
            step = rng.uniform(0.6, 1.4)
            xy[b] = xy[a] + step * np.array([math.cos(theta), math.sin(theta)])
            heading[b] = theta
            placed.add(b)
            stack.append(b)
    return xy[1:]


def _random_backbone(n: int, rng: np.random.Generator) -> tuple[list[tuple[int, int]], np.ndarray]:
    pts = rng.uniform(0, math.sqrt(n), size=(n, 2))
    g = nx.complete_graph(n)
    for a, b in g.edges:
        g[a][b]["weight"] = float(np.linalg.norm(pts[a] - pts[b]))
    mst = nx.minimum_spanning_tree(g)
    return sorted((a + 1, b + 1) for a, b in mst.edges), pts


def generate_instance(template: InstanceTemplate) -> NetworkInstance:
    """Seeded random instance on a standard (33/69) or random backbone."""
    n, T, subs = template.node_count, template.periods, set(template.substation_ids)
    if n < 2 or not subs or not subs <= set(range(1, n + 1)):
        raise ValueError("need node_count >= 2 and substation ids within 1..node_count")
    seed = template.seed
    topo_rng = substream(seed, "topology")
    if n in STANDARD:
        branches, ties = STANDARD[n]
        xy = _layout(n, branches, topo_rng)
        pairs = list(branches) + list(ties)
    else:
        pairs, xy = _random_backbone(n, topo_rng)
    if template.tie_lines:
        existing = {frozenset(p) for p in pairs}
        dist = {
            (a, b): float(np.linalg.norm(xy[a - 1] - xy[b - 1]))
            for a in range(1, n + 1) for b in range(a + 1, n + 1) if frozenset((a, b)) not in existing
        }
        short = sorted(dist, key=lambda k: (dist[k], k))[: 4 * template.tie_lines]
        picks = topo_rng.choice(len(short), size=min(template.tie_lines, len(short)), replace=False)
        pairs += [short[i] for i in sorted(picks)]

    # orient every candidate away from the nearest substation (multi-source BFS)
    ug = nx.Graph(pairs)
    depth = {v: d for v, d in nx.multi_source_dijkstra_path_length(ug, subs, weight=None).items()}
    arcs = []
    for a, b in pairs:
        da, db = depth.get(a, math.inf), depth.get(b, math.inf)
        arcs.append((a, b) if (da, a) <= (db, b) else (b, a))

    load_rng = substream(seed, "loads")
    lp = load_rng.uniform(*template.load_p_range, size=(n, T))
    lq = load_rng.uniform(*template.load_q_range, size=(n, T))
    line_rng = substream(seed, "lines")
    lengths = np.array([np.linalg.norm(xy[a - 1] - xy[b - 1]) for a, b in arcs])
    span = max(lengths.max() - lengths.min(), 1e-9)
    rel = np.clip((lengths - lengths.min()) / span * line_rng.uniform(0.9, 1.1, size=len(arcs)), 0, 1)
    lo, hi = template.cost_range
    costs = np.round(lo + (hi - lo) * rel, -2)
    mu = line_rng.uniform(*template.mu_range, size=len(arcs))
    tau = line_rng.integers(template.tau_range[0], template.tau_range[1] + 1, size=len(arcs))

    nodes = tuple(
        NodeSpec(
            id=i,
            load_p=tuple(np.round(lp[i - 1], 3).tolist()),
            load_q=tuple(np.round(lq[i - 1], 3).tolist()),
            is_substation=i in subs,
            cap_p=template.substation_cap[0] if i in subs else template.dg_cap[0],
            cap_q=template.substation_cap[1] if i in subs else template.dg_cap[1],
            dg_candidate=i not in subs,
        )
        for i in range(1, n + 1)
    )
    rp, rx = template.ohm_per_unit
    lines = tuple(
        LineSpec(
            from_node=a, to_node=b, cost=float(costs[k]),
            resistance=round(float(rp * lengths[k]), 6), reactance=round(float(rx * lengths[k]), 6),
            cap_p=template.line_cap[0], cap_q=template.line_cap[1],
            mu_max=(round(float(mu[k]), 6),) * T, tau_rst=int(tau[k]),
        )
        for k, (a, b) in enumerate(arcs)
    )
    default_nz = {33: 3, 69: 4}.get(n, 1)
    inst = NetworkInstance(
        nodes=nodes, lines=lines, periods=T, budget_cost=0.0, budget_dg=template.dg_count,
        n_z=template.n_z if template.n_z is not None else default_nz,
        v_min=0.95, v_max=1.05, v_ref=round(1000.0 * template.base_kv**2, 3),
        coords=tuple((round(float(x), 6), round(float(y), 6)) for x, y in xy),
    )
    best = min_forest(inst)
    if best is None:
        raise ValueError("generated candidate graph has no rooted spanning forest")
    budget = math.ceil(best[0] * (1 + template.budget_slack) / 1e4) * 1e4
    return check(replace(inst, budget_cost=float(budget)))


CASE_33 = InstanceTemplate(node_count=33, substation_ids=(1, 11, 25), dg_count=2, periods=24, seed=7)
CASE_69 = InstanceTemplate(node_count=69, substation_ids=(1, 13, 39, 61), dg_count=3, periods=24, seed=7)
