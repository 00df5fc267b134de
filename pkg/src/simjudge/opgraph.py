"""Operator graphs over the twelve computational primitives.

A plan is a DAG whose nodes are primitive operations, each carrying a
Lipschitz constant ``L``, an error model ``eps <= C h^q`` and a cost model
``work = a h^(-w dim)``.  Errors injected at a node are amplified by every
operator downstream of it, so the total error is bounded by
``sum_i ell_i eps_i`` with ``ell_i`` the product of ``L`` over the set of
strict descendants of node ``i``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping


class Primitive(enum.Enum):
    DIFFERENTIATE = ("differentiate", "∂")
    INTEGRATE = ("integrate", "∫")
    SOLVE_LINEAR = ("solve_linear", "L")
    EVALUATE = ("evaluate", "N")
    EVOLVE = ("evolve", "E")
    TRANSFORM = ("transform", "F")
    PROJECT = ("project", "Π")
    SAMPLE = ("sample", "S")
    COUPLE = ("couple", "K")
    CONSTRAIN = ("constrain", "B")
    DISCRETIZE = ("discretize", "G")
    OPTIMIZE = ("optimize", "O")

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def symbol(self) -> str:
        return self.value[1]

    @classmethod
    def parse(cls, text: str) -> "Primitive":
        """Accept the name (``solve_linear``), the symbol (``L``) or an ASCII alias."""
        t = text.strip()
        for p in cls:
            if t == p.symbol or t.lower() == p.label or t.upper() == p.name:
                return p
        aliases = {"d": cls.DIFFERENTIATE, "partial": cls.DIFFERENTIATE, "int": cls.INTEGRATE, "pi": cls.PROJECT}
        if t.lower() in aliases:
            return aliases[t.lower()]
        raise ValueError(f"unknown primitive {text!r}")


class CycleError(ValueError):
    def __init__(self, cycle: list[str]):
        super().__init__("cycle: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


class MultipleSinksError(ValueError):
    def __init__(self, sinks: list[str]):
        super().__init__(f"graph has {len(sinks)} sinks, expected one: {sinks}")
        self.sinks = sinks


class UnknownFamily(KeyError):
    pass


@dataclass(frozen=True)
class DagNode:
    id: str
    primitive: Primitive
    lipschitz_L: float
    error_C: float = 1.0
    error_order_q: float = 1.0
    cost_a: float = 1.0
    cost_w: float = 1.0

    def __post_init__(self):
        for name in ("lipschitz_L", "error_C", "error_order_q"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"node {self.id!r}: {name} must be finite and > 0, got {v!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DagNode":
        cost = d.get("cost", {}) or {}
        return cls(
            id=str(d["id"]),
            primitive=Primitive.parse(str(d["primitive"])),
            lipschitz_L=float(d["L"]),
            error_C=float(d.get("C", 1.0)),
            error_order_q=float(d.get("q", 1.0)),
            cost_a=float(cost.get("a", 1.0)),
            cost_w=float(cost.get("w", 1.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "primitive": self.primitive.label,
            "L": self.lipschitz_L,
            "C": self.error_C,
            "q": self.error_order_q,
            "cost": {"a": self.cost_a, "w": self.cost_w},
        }


@dataclass(frozen=True)
class OperatorGraph:
    nodes: tuple[DagNode, ...]
    edges: tuple[tuple[str, str], ...]
    order: tuple[str, ...]  # a topological order
    family: str | None = None

    @property
    def D(self) -> int:
        return len(self.nodes)

    @property
    def sink(self) -> str:
        return self.order[-1]

    def node(self, node_id: str) -> DagNode:
        return self._index[node_id]

    @property
    def _index(self) -> dict[str, DagNode]:
        return {n.id: n for n in self.nodes}

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for a, b in self.edges:
            out[a].append(b)
        return out

    def in_degree(self) -> dict[str, int]:
        deg = {n.id: 0 for n in self.nodes}
        for _, b in self.edges:
            deg[b] += 1
        return deg

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"nodes": [n.to_dict() for n in self.nodes], "edges": [list(e) for e in self.edges]}
        if self.family:
            d["family"] = self.family
        return d


def _find_cycle(ids: list[str], children: dict[str, list[str]]) -> list[str]:
    state = {i: 0 for i in ids}  # 0 unvisited, 1 on stack, 2 done
    stack: list[str] = []

    def visit(u: str) -> list[str] | None:
        state[u] = 1
        stack.append(u)
        for v in children[u]:
            if state[v] == 1:
                return stack[stack.index(v) :]
            if state[v] == 0:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for i in ids:
        if state[i] == 0:
            found = visit(i)
            if found:
                return list(found)
    raise AssertionError("no cycle found in a graph that failed topological sort")


def build_graph(
    nodes: Iterable[DagNode], edges: Iterable[tuple[str, str]], family: str | None = None
) -> OperatorGraph:
    """Validate ids, acyclicity and the single-sink rule; return the graph with a topological order."""
    nodes = tuple(nodes)
    edges = tuple((str(a), str(b)) for a, b in edges)
    if not nodes:
        raise ValueError("an operator graph needs at least one node")
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate node ids: {dup}")
    known = set(ids)
    for a, b in edges:
        if a not in known or b not in known:
            raise ValueError(f"edge ({a}, {b}) references an unknown node")
    edges = tuple(dict.fromkeys(edges))

    children: dict[str, list[str]] = {i: [] for i in ids}
    indeg = {i: 0 for i in ids}
    for a, b in edges:
        children[a].append(b)
        indeg[b] += 1

    # Kahn's algorithm, ties broken by declaration order for a stable result
    position = {i: k for k, i in enumerate(ids)}
    ready = sorted((i for i in ids if indeg[i] == 0), key=position.__getitem__)
    order: list[str] = []
    remaining = dict(indeg)
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in children[u]:
            remaining[v] -= 1
            if remaining[v] == 0:
                ready.append(v)
                ready.sort(key=position.__getitem__)
    if len(order) != len(ids):
        leftover = [i for i in ids if i not in set(order)]
        raise CycleError(_find_cycle(leftover, {i: [c for c in children[i] if c in set(leftover)] for i in leftover}))

    sinks = [i for i in ids if not children[i]]
    if len(sinks) > 1:
        raise MultipleSinksError(sinks)
    return OperatorGraph(nodes, edges, tuple(order), family)


def graph_from_dict(plan: Mapping[str, Any]) -> OperatorGraph:
    """Build from the plan-file layout ``{nodes: [...], edges: [[a, b], ...], family?}``."""
    nodes = [DagNode.from_dict(n) for n in plan["nodes"]]
    edges = [(str(a), str(b)) for a, b in plan.get("edges", [])]
    return build_graph(nodes, edges, plan.get("family"))


def descendants(g: OperatorGraph) -> dict[str, frozenset[str]]:
    """Strict descendant set of every node."""
    children = g.children()
    out: dict[str, frozenset[str]] = {}
    for u in reversed(g.order):
        acc: set[str] = set()
        for v in children[u]:
            acc.add(v)
            acc |= out[v]
        out[u] = frozenset(acc)
    return out


def amplification_factors(g: OperatorGraph) -> dict[str, float]:
    """ell_i: product of L over the set of strict descendants (each counted once)."""
    L = {n.id: n.lipschitz_L for n in g.nodes}
    rank = {i: k for k, i in enumerate(g.order)}
    return {u: math.prod(L[j] for j in sorted(desc, key=rank.__getitem__)) for u, desc in descendants(g).items()}


def dag_lipschitz(g: OperatorGraph) -> float:
    return max(amplification_factors(g).values())


def propagate_error(g: OperatorGraph, eps: Mapping[str, float]) -> float:
    """Total-error bound sum_i ell_i eps_i; nodes missing from ``eps`` contribute zero."""
    ell = amplification_factors(g)
    for k, v in eps.items():
        if k not in ell:
            raise KeyError(f"unknown node {k!r}")
        if v < 0:
            raise ValueError(f"negative error for node {k!r}")
    return math.fsum(ell[i] * eps.get(i, 0.0) for i in g.order)


@dataclass(frozen=True)
class NodeBudget:
    ell: float
    eps: float
    h: float


@dataclass(frozen=True)
class ErrorBudget:
    per_node: dict[str, NodeBudget] = field(hash=False)
    total_bound: float
    target_eps: float
    multipath_nodes: tuple[str, ...] = ()

    @property
    def multipath(self) -> bool:
        """True when some node has in-degree > 1, where a path-sum bound could exceed the set-product one."""
        return bool(self.multipath_nodes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_node": {k: {"ell": v.ell, "eps": v.eps, "h": v.h} for k, v in self.per_node.items()},
            "total_bound": self.total_bound,
            "target_eps": self.target_eps,
            "multipath_nodes": list(self.multipath_nodes),
        }


def select_resolutions(g: OperatorGraph, target_eps: float) -> ErrorBudget:
    """Split the tolerance evenly across nodes, eps_i = eps / (D ell_i), and invert C h^q for h_i."""
    if not (target_eps > 0 and math.isfinite(target_eps)):
        raise ValueError("target_eps must be finite and > 0")
    ell = amplification_factors(g)
    D = g.D
    per_node: dict[str, NodeBudget] = {}
    for node_id in g.order:
        n = g.node(node_id)
        eps_i = target_eps / (D * ell[node_id])
        h_i = (target_eps / (D * ell[node_id] * n.error_C)) ** (1.0 / n.error_order_q)
        per_node[node_id] = NodeBudget(ell[node_id], eps_i, h_i)
    total = math.fsum(b.ell * b.eps for b in per_node.values())
    indeg = g.in_degree()
    multipath = tuple(i for i in g.order if indeg[i] > 1)
    return ErrorBudget(per_node, total, target_eps, multipath)


def estimate_cost(budget: ErrorBudget, g: OperatorGraph, dim: int) -> float:
    """Total work sum_i a_i h_i^(-w_i dim)."""
    return math.fsum(
        g.node(i).cost_a * budget.per_node[i].h ** (-g.node(i).cost_w * dim) for i in g.order
    )


@lru_cache(maxsize=1)
def _families() -> dict[str, frozenset[Primitive]]:
    raw = json.loads(resources.files("simjudge.data").joinpath("families.json").read_text(encoding="utf-8"))
    return {name: frozenset(Primitive.parse(s) for s in syms) for name, syms in raw.items()}


def family_names() -> list[str]:
    return list(_families())


def _normalise_family(name: str) -> str:
    return " ".join(name.replace("--", "-").replace("\u2013", "-").replace("\u2014", "-").lower().split())


def primitives_for_family(family: str) -> frozenset[Primitive]:
    """Primitive set of a method family, by full name or its parenthesised abbreviation."""
    table = _families()
    if family in table:
        return table[family]
    key = _normalise_family(family)
    for name, prims in table.items():
        if _normalise_family(name) == key:
            return prims
        if "(" in name and _normalise_family(name[name.index("(") + 1 : name.rindex(")")]) == key:
            return prims
    raise UnknownFamily(family)
