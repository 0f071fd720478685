"""Core data model: two-terminal congestion networks, routes, edge cost
functions, problem instances with per-type information sets, and flows.

All values are immutable after construction and safe to share across
concurrent solver runs.  Construction (including JSON loading) is
single-threaded.
"""

from __future__ import annotations

import ast
import json
import logging
import math
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger("ibplab.netmodel")

#: Hard cap on enumerated routes per information set.  Route-based methods
#: are exact but exponential in principle; instances beyond this are out of
#: the desk-scale contract of this toolkit and are rejected loudly.
ROUTE_CAP = 10_000

#: Relative tolerance for per-type flow conservation (scaled by max(1, demand)).
FEAS_TOL = 1e-9

_ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class IbplabError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(IbplabError):
    """Malformed instance document."""


class ValidationError(IbplabError):
    """Well-formed input that violates a model invariant."""


class RouteCapExceeded(IbplabError):
    """Exact route enumeration would exceed the route cap."""


def _check_id(kind: str, value: object) -> str:
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise ValidationError(
            f"{kind} id {value!r} must be a nonempty string of [A-Za-z0-9_.-]"
        )
    return value


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------

_COST_KINDS = ("constant", "affine", "polynomial", "piecewise_linear")


@dataclass(frozen=True)
class CostFunction:
    """Nonnegative nondecreasing edge cost with a closed-form antiderivative.

    Supported families (all parameters nonnegative, so monotonicity is a
    structural certainty rather than an assumption):

    - ``constant``:          params = (c,)
    - ``affine``:            params = (a, b)   for  a*x + b
    - ``polynomial``:        params = coefficients, ascending degree
    - ``piecewise_linear``:  params = ((x0, y0), ..., (xn, yn)) breakpoints
      with x0 == 0, strictly increasing x, nondecreasing y; extrapolated
      beyond xn with the final segment slope (constant when n == 0).
    """

    kind: str
    params: tuple

    def __post_init__(self) -> None:
        if self.kind not in _COST_KINDS:
            raise ValidationError(f"unknown cost kind {self.kind!r}")
        p = self.params
        if self.kind in ("constant", "affine", "polynomial"):
            if not p or not all(isinstance(x, float) for x in p):
                raise ValidationError(f"{self.kind} cost needs float parameters")
            if any(x < 0 or not math.isfinite(x) for x in p):
                raise ValidationError(
                    f"{self.kind} cost coefficients must be finite and >= 0, got {p}"
                )
            if self.kind == "constant" and len(p) != 1:
                raise ValidationError("constant cost takes exactly one parameter")
            if self.kind == "affine" and len(p) != 2:
                raise ValidationError("affine cost takes exactly (a, b)")
        else:
            if not p:
                raise ValidationError("piecewise_linear cost needs breakpoints")
            xs = [pt[0] for pt in p]
            ys = [pt[1] for pt in p]
            if xs[0] != 0.0:
                raise ValidationError("piecewise_linear breakpoints must start at x=0")
            if any(not math.isfinite(v) or v < 0 for v in xs + ys):
                raise ValidationError("piecewise_linear breakpoints must be finite, >= 0")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValidationError("piecewise_linear x-breakpoints must increase")
            if any(b < a for a, b in zip(ys, ys[1:])):
                raise ValidationError("piecewise_linear values must be nondecreasing")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def constant(c: float) -> "CostFunction":
        return CostFunction("constant", (float(c),))

    @staticmethod
    def affine(a: float, b: float) -> "CostFunction":
        return CostFunction("affine", (float(a), float(b)))

    @staticmethod
    def polynomial(coeffs: Sequence[float]) -> "CostFunction":
        return CostFunction("polynomial", tuple(float(c) for c in coeffs))

    @staticmethod
    def piecewise_linear(points: Sequence[Sequence[float]]) -> "CostFunction":
        return CostFunction(
            "piecewise_linear", tuple((float(x), float(y)) for x, y in points)
        )

    # -- evaluation ---------------------------------------------------------

    def value(self, x: float) -> float:
        x = max(0.0, x)
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "affine":
            a, b = self.params
            return a * x + b
        if self.kind == "polynomial":
            acc = 0.0
            for c in reversed(self.params):
                acc = acc * x + c
            return acc
        pts = self.params
        if len(pts) == 1 or x <= pts[0][0]:
            return pts[0][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x <= x1:
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        x0, y0 = pts[-2]
        x1, y1 = pts[-1]
        slope = (y1 - y0) / (x1 - x0)
        return y1 + slope * (x - x1)

    def integral(self, x: float) -> float:
        """Antiderivative evaluated at ``x`` with integral(0) == 0."""
        x = max(0.0, x)
        if self.kind == "constant":
            return self.params[0] * x
        if self.kind == "affine":
            a, b = self.params
            return 0.5 * a * x * x + b * x
        if self.kind == "polynomial":
            acc = 0.0
            for k in reversed(range(len(self.params))):
                acc = acc * x + self.params[k] / (k + 1)
            return acc * x
        pts = self.params
        total = 0.0
        prev_x = 0.0
        for i in range(len(pts)):
            x0, y0 = pts[i]
            x1 = pts[i + 1][0] if i + 1 < len(pts) else math.inf
            hi = min(x, x1)
            if hi <= prev_x:
                break
            total += 0.5 * (self.value(prev_x) + self.value(hi)) * (hi - prev_x)
            prev_x = hi
        if x > prev_x:
            total += 0.5 * (self.value(prev_x) + self.value(x)) * (x - prev_x)
        return total

    def derivative_right(self, x: float) -> float:
        x = max(0.0, x)
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine":
            return self.params[0]
        if self.kind == "polynomial":
            acc = 0.0
            for k in reversed(range(1, len(self.params))):
                acc = acc * x + k * self.params[k]
            return acc
        pts = self.params
        if len(pts) == 1:
            return 0.0
        for (x0, _), (x1, y1) in zip(pts, pts[1:]):
            if x < x1:
                return (y1 - self.value(x0)) / (x1 - x0)
        x0, y0 = pts[-2]
        x1, y1 = pts[-1]
        return (y1 - y0) / (x1 - x0)

    def marginal(self, x: float) -> float:
        """Right derivative of x * value(x), the marginal social cost."""
        x = max(0.0, x)
        return self.value(x) + x * self.derivative_right(x)

    # -- structure queries --------------------------------------------------

    def as_affine(self) -> tuple[float, float] | None:
        """Return (a, b) when this cost is an affine (or constant) map."""
        if self.kind == "constant":
            return (0.0, self.params[0])
        if self.kind == "affine":
            return self.params
        if self.kind == "polynomial" and len(self.params) <= 2:
            a = self.params[1] if len(self.params) == 2 else 0.0
            return (a, self.params[0])
        return None

    def is_strictly_increasing(self) -> bool:
        if self.kind == "constant":
            return False
        if self.kind in ("affine", "polynomial"):
            return any(c > 0 for c in self.params[1:])
        xs = [p[0] for p in self.params]
        ys = [p[1] for p in self.params]
        if len(xs) == 1:
            return False
        return all(b > a for a, b in zip(ys, ys[1:]))

    def total_cost_is_convex(self) -> bool:
        """Whether x -> x * value(x) is convex on [0, inf).

        True for the constant/affine/polynomial families.  A piecewise-linear
        cost yields a convex total cost exactly when its slopes are
        nondecreasing (the cost itself is convex).
        """
        if self.kind != "piecewise_linear":
            return True
        pts = self.params
        slopes = [0.0] if len(pts) == 1 else [
            (y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(pts, pts[1:])
        ]
        return all(s1 >= s0 - 1e-15 for s0, s1 in zip(slopes, slopes[1:]))

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "params": {"c": self.params[0]}}
        if self.kind == "affine":
            return {"kind": "affine", "params": {"a": self.params[0], "b": self.params[1]}}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "params": {"coeffs": list(self.params)}}
        return {"kind": "piecewise_linear", "params": {"points": [list(p) for p in self.params]}}


# ---------------------------------------------------------------------------
# Networks and routes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    """Undirected edge of a multigraph.  Parallel edges carry distinct ids."""

    id: str
    u: str
    v: str

    def __post_init__(self) -> None:
        _check_id("edge", self.id)
        if self.u == self.v:
            raise ValidationError(f"edge {self.id!r} is a self-loop at {self.u!r}")

    def other(self, w: str) -> str:
        if w == self.u:
            return self.v
        if w == self.v:
            return self.u
        raise ValueError(f"{w!r} is not an endpoint of edge {self.id!r}")

    def endpoints(self) -> frozenset[str]:
        return frozenset((self.u, self.v))


@dataclass(frozen=True)
class Network:
    """Undirected two-terminal multigraph without self-loops.

    ``origin`` and ``destination`` are the designated terminals.  Structural
    invariants (distinct terminals, unique edge ids, endpoints present) are
    enforced here; the stronger requirement that every vertex and edge lie on
    some origin-destination route is enforced by :func:`make_network` /
    :func:`load_instance`, which can either strip or reject offending
    elements.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    origin: str
    destination: str

    def __post_init__(self) -> None:
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise ValidationError("duplicate vertex ids")
        for v in self.vertices:
            _check_id("vertex", v)
        if self.origin == self.destination:
            raise ValidationError("origin and destination must differ")
        for t in (self.origin, self.destination):
            if t not in vset:
                raise ValidationError(f"terminal {t!r} is not a vertex")
        seen: set[str] = set()
        for e in self.edges:
            if e.id in seen:
                raise ValidationError(f"duplicate edge id {e.id!r}")
            seen.add(e.id)
            if e.u not in vset or e.v not in vset:
                raise ValidationError(f"edge {e.id!r} has unknown endpoint")

    @cached_property
    def edge_map(self) -> Mapping[str, Edge]:
        return {e.id: e for e in self.edges}

    @cached_property
    def adjacency(self) -> Mapping[str, tuple[Edge, ...]]:
        adj: dict[str, list[Edge]] = {v: [] for v in self.vertices}
        for e in self.edges:
            adj[e.u].append(e)
            adj[e.v].append(e)
        return {v: tuple(sorted(es, key=lambda e: e.id)) for v, es in adj.items()}

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    def degree(self, v: str) -> int:
        return len(self.adjacency[v])

    def subnetwork(self, edge_ids: Iterable[str], origin: str, destination: str) -> "Network":
        """Two-terminal subnetwork induced by the given edges."""
        keep = set(edge_ids)
        edges = tuple(e for e in self.edges if e.id in keep)
        verts = {origin, destination}
        for e in edges:
            verts.update((e.u, e.v))
        return Network(tuple(sorted(verts)), edges, origin, destination)


@dataclass(frozen=True)
class Route:
    """Simple origin-destination path, stored as edge and vertex sequences."""

    edges: tuple[str, ...]
    vertices: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) != len(self.edges) + 1:
            raise ValidationError("route vertex sequence must be one longer than edges")
        if len(set(self.vertices)) != len(self.vertices):
            raise ValidationError("route revisits a vertex")

    def edge_set(self) -> frozenset[str]:
        return frozenset(self.edges)

    def section(self, u: str, v: str) -> "Route":
        """Sub-route between two vertices on this route (in route order)."""
        i, j = self.vertices.index(u), self.vertices.index(v)
        if i > j:
            raise ValueError(f"{u!r} does not precede {v!r} on this route")
        return Route(self.edges[i:j], self.vertices[i : j + 1])


def _route_search(
    net: Network,
    allowed: frozenset[str] | None,
    origin: str,
    destination: str,
    cap: int,
) -> tuple[Route, ...]:
    adj = net.adjacency
    results: list[Route] = []
    edge_path: list[str] = []
    vertex_path: list[str] = [origin]
    on_path = {origin}

    def walk(v: str) -> None:
        if v == destination:
            results.append(Route(tuple(edge_path), tuple(vertex_path)))
            if len(results) > cap:
                raise RouteCapExceeded(
                    f"more than {cap} routes between {origin!r} and {destination!r}"
                )
            return
        for e in adj[v]:
            if allowed is not None and e.id not in allowed:
                continue
            w = e.other(v)
            if w in on_path:
                continue
            edge_path.append(e.id)
            vertex_path.append(w)
            on_path.add(w)
            walk(w)
            edge_path.pop()
            vertex_path.pop()
            on_path.discard(w)

    walk(origin)
    results.sort(key=lambda r: r.edges)
    return tuple(results)


@lru_cache(maxsize=4096)
def _routes_cached(
    net: Network, allowed: frozenset[str] | None, origin: str, destination: str, cap: int
) -> tuple[Route, ...]:
    return _route_search(net, allowed, origin, destination, cap)


def enumerate_routes(
    net: Network,
    allowed_edges: Iterable[str] | None = None,
    *,
    origin: str | None = None,
    destination: str | None = None,
    cap: int = ROUTE_CAP,
) -> tuple[Route, ...]:
    """All simple origin-destination paths using only ``allowed_edges``.

    Deterministic: results are ordered lexicographically by edge-id sequence.
    Raises :class:`RouteCapExceeded` when more than ``cap`` routes exist.
    """
    allowed = None if allowed_edges is None else frozenset(allowed_edges)
    if allowed is not None:
        unknown = allowed - set(net.edge_map)
        if unknown:
            raise ValidationError(f"allowed edges not in network: {sorted(unknown)}")
    o = net.origin if origin is None else origin
    d = net.destination if destination is None else destination
    return _routes_cached(net, allowed, o, d, cap)


def make_network(
    vertices: Iterable[str],
    edges: Iterable[tuple[str, str, str] | Edge],
    origin: str,
    destination: str,
    *,
    od_pairs: Sequence[tuple[str, str]] | None = None,
    strip: bool = True,
) -> Network:
    """Build a validated network, stripping (or rejecting) elements that lie
    on no terminal-to-terminal route.

    ``od_pairs`` extends coverage to several terminal pairs; by default only
    (origin, destination) counts.
    """
    edge_objs = tuple(e if isinstance(e, Edge) else Edge(*e) for e in edges)
    net = Network(tuple(sorted(set(vertices))), edge_objs, origin, destination)
    pairs = list(od_pairs) if od_pairs else [(origin, destination)]

    covered_edges: set[str] = set()
    covered_vertices: set[str] = set()
    for o, d in pairs:
        for r in enumerate_routes(net, origin=o, destination=d):
            covered_edges.update(r.edges)
            covered_vertices.update(r.vertices)
    if not covered_edges:
        raise ValidationError(f"no route between {origin!r} and {destination!r}")

    dangling_v = set(net.vertices) - covered_vertices
    dangling_e = {e.id for e in net.edges} - covered_edges
    if dangling_v or dangling_e:
        if not strip:
            raise ValidationError(
                f"elements off every terminal route: vertices {sorted(dangling_v)}, "
                f"edges {sorted(dangling_e)}"
            )
        logger.warning(
            "stripping elements off every terminal route: vertices %s, edges %s",
            sorted(dangling_v),
            sorted(dangling_e),
        )
        net = Network(
            tuple(sorted(covered_vertices)),
            tuple(e for e in net.edges if e.id in covered_edges),
            origin,
            destination,
        )
    return net


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeSpec:
    """One user type: total demand plus the edge set it knows about."""

    id: str
    demand: float
    edges: frozenset[str]

    def __post_init__(self) -> None:
        _check_id("type", self.id)
        if not math.isfinite(self.demand) or self.demand < 0:
            raise ValidationError(f"type {self.id!r} demand must be finite and >= 0")


@dataclass(frozen=True)
class ODPair:
    origin: str
    destination: str
    types: tuple[TypeSpec, ...]

    def __post_init__(self) -> None:
        if self.origin == self.destination:
            raise ValidationError("od pair terminals must differ")


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    """A congestion problem: network, edge costs, and demand-bearing types
    grouped by origin-destination pair (a single pair in the common case)."""

    network: Network
    costs: Mapping[str, CostFunction]
    od_pairs: tuple[ODPair, ...]

    def all_types(self) -> tuple[tuple[ODPair, TypeSpec], ...]:
        return tuple((od, t) for od in self.od_pairs for t in od.types)

    def type_by_id(self, type_id: str) -> tuple[ODPair, TypeSpec]:
        for od, t in self.all_types():
            if t.id == type_id:
                return od, t
        raise KeyError(f"no type {type_id!r}")

    @property
    def is_single_od(self) -> bool:
        return len(self.od_pairs) == 1

    def routes_for(self, od: ODPair, t: TypeSpec) -> tuple[Route, ...]:
        return enumerate_routes(
            self.network, t.edges, origin=od.origin, destination=od.destination
        )

    def total_demand(self) -> float:
        return sum(t.demand for _, t in self.all_types())

    def with_type_edges(self, type_id: str, edges: frozenset[str]) -> "InstanceSpec":
        """Copy of this instance with one type's information set replaced."""
        new_pairs = []
        for od in self.od_pairs:
            new_types = tuple(
                TypeSpec(t.id, t.demand, edges) if t.id == type_id else t
                for t in od.types
            )
            new_pairs.append(ODPair(od.origin, od.destination, new_types))
        return make_instance(self.network, dict(self.costs), tuple(new_pairs))


def make_instance(
    network: Network,
    costs: Mapping[str, CostFunction],
    od_pairs: Sequence[ODPair],
) -> InstanceSpec:
    """Validate and assemble an instance.

    Checks: every edge has a cost (and no stray costs), type ids are globally
    unique, information sets are subsets of the edge set, and every type can
    reach its destination within its information set.
    """
    edge_ids = set(network.edge_map)
    missing = edge_ids - set(costs)
    extra = set(costs) - edge_ids
    if missing or extra:
        raise ValidationError(
            f"cost table mismatch: missing {sorted(missing)}, stray {sorted(extra)}"
        )
    seen_types: set[str] = set()
    vset = set(network.vertices)
    for od in od_pairs:
        if od.origin not in vset or od.destination not in vset:
            raise ValidationError("od pair terminal is not a network vertex")
        for t in od.types:
            if t.id in seen_types:
                raise ValidationError(f"duplicate type id {t.id!r}")
            seen_types.add(t.id)
            unknown = t.edges - edge_ids
            if unknown:
                raise ValidationError(
                    f"type {t.id!r} information set has unknown edges {sorted(unknown)}"
                )
            routes = enumerate_routes(
                network, t.edges, origin=od.origin, destination=od.destination
            )
            if not routes:
                raise ValidationError(
                    f"type {t.id!r} has no route within its information set"
                )
    return InstanceSpec(network, dict(costs), tuple(od_pairs))


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlowProfile:
    """Route flows per type plus everything induced by them.

    ``type_costs`` holds, for each type, the cheapest route cost within its
    information set at the induced edge flows.  At an equilibrium this equals
    the common cost of the type's positive-flow routes; for an arbitrary
    feasible flow it is a candidate (lower) cost.
    """

    route_flows: Mapping[tuple[str, tuple[str, ...]], float]
    edge_flows: Mapping[str, float]
    route_costs: Mapping[tuple[str, ...], float]
    type_costs: Mapping[str, float]

    def type_flow(self, type_id: str, route: Route | Sequence[str]) -> float:
        key = tuple(route.edges if isinstance(route, Route) else route)
        return self.route_flows.get((type_id, key), 0.0)


def _normalize_route_key(route: object) -> tuple[str, ...]:
    if isinstance(route, Route):
        return route.edges
    if isinstance(route, str):
        return tuple(route.split(","))
    return tuple(route)  # type: ignore[arg-type]


def evaluate_flow(
    instance: InstanceSpec,
    route_flows: Mapping,
    *,
    require_feasible: bool = True,
    feas_tol: float = FEAS_TOL,
) -> FlowProfile:
    """Compute edge flows, route costs, and per-type candidate costs for the
    given per-type route flows.

    Keys of ``route_flows`` are ``(type_id, route)`` with the route given as a
    :class:`Route`, an edge-id sequence, or a comma-joined string.  Flows must
    be nonnegative and live on routes inside the owning type's information
    set.  With ``require_feasible`` the per-type totals must match demands
    within ``feas_tol * max(1, demand)``.
    """
    normalized: dict[tuple[str, tuple[str, ...]], float] = {}
    for (tid, route), flow in route_flows.items():
        flow = float(flow)
        if flow < -1e-12 or not math.isfinite(flow):
            raise ValidationError(f"negative or non-finite flow for type {tid!r}")
        normalized[(tid, _normalize_route_key(route))] = max(0.0, flow)

    edge_flows = {eid: 0.0 for eid in instance.network.edge_ids}
    route_costs: dict[tuple[str, ...], float] = {}
    type_costs: dict[str, float] = {}
    all_types = instance.all_types()
    known: dict[str, set[tuple[str, ...]]] = {}

    for od, t in all_types:
        allowed = {r.edges for r in instance.routes_for(od, t)}
        known[t.id] = allowed
        total = 0.0
        for (tid, key), flow in normalized.items():
            if tid != t.id:
                continue
            if key not in allowed:
                raise ValidationError(
                    f"flow assigned to route {key} outside type {tid!r} route set"
                )
            total += flow
            for eid in key:
                edge_flows[eid] += flow
        if require_feasible and abs(total - t.demand) > feas_tol * max(1.0, t.demand):
            raise ValidationError(
                f"type {t.id!r} conservation violated: {total} != {t.demand}"
            )

    stray = {tid for tid, _ in normalized} - {t.id for _, t in all_types}
    if stray:
        raise ValidationError(f"flows for unknown types {sorted(stray)}")

    edge_cost = {
        eid: instance.costs[eid].value(f) for eid, f in edge_flows.items()
    }
    for od, t in all_types:
        best = math.inf
        for key in sorted(known[t.id]):
            c = sum(edge_cost[eid] for eid in key)
            route_costs[key] = c
            best = min(best, c)
        type_costs[t.id] = best

    return FlowProfile(normalized, edge_flows, route_costs, type_costs)


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

_ALLOWED_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _eval_expr(text: str, params: Mapping[str, float]) -> float:
    """Evaluate a small arithmetic expression over named parameters.

    Supports literals, parameter names, and ``+ - * / **``.  Used for
    parameterized instance files (e.g. a demand written as ``"1 - s"``).
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise SchemaError(f"bad expression {text!r}: {exc}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_EXPR_NODES):
            raise SchemaError(f"bad expression {text!r}: {type(node).__name__} not allowed")

    def ev(node: ast.AST) -> float:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise SchemaError(f"non-numeric literal in {text!r}")
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise SchemaError(f"unbound parameter {node.id!r} in {text!r}")
            return float(params[node.id])
        if isinstance(node, ast.UnaryOp):
            val = ev(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        assert isinstance(node, ast.BinOp)
        lhs, rhs = ev(node.left), ev(node.right)
        if isinstance(node.op, ast.Add):
            return lhs + rhs
        if isinstance(node.op, ast.Sub):
            return lhs - rhs
        if isinstance(node.op, ast.Mult):
            return lhs * rhs
        if isinstance(node.op, ast.Div):
            return lhs / rhs
        return lhs ** rhs

    return ev(tree)


def _number(doc: object, where: str, params: Mapping[str, float]) -> float:
    if isinstance(doc, bool) or doc is None:
        raise SchemaError(f"{where}: expected a number")
    if isinstance(doc, (int, float)):
        return float(doc)
    if isinstance(doc, str):
        return _eval_expr(doc, params)
    raise SchemaError(f"{where}: expected a number, got {type(doc).__name__}")


def _cost_from_json(doc: object, where: str, params: Mapping[str, float]) -> CostFunction:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SchemaError(f"{where}: cost must be an object with 'kind'")
    kind = doc["kind"]
    p = doc.get("params", {})
    if not isinstance(p, dict):
        raise SchemaError(f"{where}: cost params must be an object")
    try:
        if kind == "constant":
            return CostFunction.constant(_number(p.get("c"), where, params))
        if kind == "affine":
            return CostFunction.affine(
                _number(p.get("a"), where, params), _number(p.get("b"), where, params)
            )
        if kind == "polynomial":
            coeffs = p.get("coeffs")
            if not isinstance(coeffs, list) or not coeffs:
                raise SchemaError(f"{where}: polynomial needs 'coeffs' list")
            return CostFunction.polynomial([_number(c, where, params) for c in coeffs])
        if kind == "piecewise_linear":
            pts = p.get("points")
            if not isinstance(pts, list) or not pts:
                raise SchemaError(f"{where}: piecewise_linear needs 'points' list")
            return CostFunction.piecewise_linear(
                [
                    (_number(pt[0], where, params), _number(pt[1], where, params))
                    for pt in pts
                ]
            )
    except ValidationError as exc:
        raise SchemaError(f"{where}: {exc}") from None
    raise SchemaError(f"{where}: unknown cost kind {kind!r}")


def instance_to_json(instance: InstanceSpec, expansion: object = None) -> dict:
    """Serialize an instance (and optional expansion stanza) to the document
    schema accepted by :func:`load_instance`."""
    doc: dict = {
        "vertices": list(instance.network.vertices),
        "edges": [
            {"id": e.id, "u": e.u, "v": e.v, "cost": instance.costs[e.id].to_json()}
            for e in instance.network.edges
        ],
        "od_pairs": [
            {
                "origin": od.origin,
                "destination": od.destination,
                "types": [
                    {"id": t.id, "demand": t.demand, "edges": sorted(t.edges)}
                    for t in od.types
                ],
            }
            for od in instance.od_pairs
        ],
    }
    if expansion is not None:
        doc["expansion"] = {
            "type": expansion.type_id,
            "add": sorted(expansion.add_edges),
            "restricted": expansion.restricted,
        }
    return doc


def parse_instance_document(
    doc: object,
    *,
    strip: bool = True,
    params: Mapping[str, float] | None = None,
) -> InstanceSpec:
    """Build a validated instance from a parsed JSON document."""
    params = params or {}
    if not isinstance(doc, dict):
        raise SchemaError("instance document must be a JSON object")
    for key in ("vertices", "edges", "od_pairs"):
        if key not in doc:
            raise SchemaError(f"missing required field {key!r}")
    if not isinstance(doc["vertices"], list) or not doc["vertices"]:
        raise SchemaError("'vertices' must be a nonempty list")
    if not isinstance(doc["edges"], list) or not doc["edges"]:
        raise SchemaError("'edges' must be a nonempty list")
    if not isinstance(doc["od_pairs"], list) or not doc["od_pairs"]:
        raise SchemaError("'od_pairs' must be a nonempty list")

    edges = []
    costs: dict[str, CostFunction] = {}
    for i, e in enumerate(doc["edges"]):
        if not isinstance(e, dict):
            raise SchemaError(f"edges[{i}] must be an object")
        for key in ("id", "u", "v", "cost"):
            if key not in e:
                raise SchemaError(f"edges[{i}] missing {key!r}")
        try:
            edge = Edge(e["id"], e["u"], e["v"])
        except ValidationError as exc:
            raise SchemaError(f"edges[{i}]: {exc}") from None
        edges.append(edge)
        costs[edge.id] = _cost_from_json(e["cost"], f"edges[{i}].cost", params)

    od_docs = doc["od_pairs"]
    pairs_raw: list[tuple[str, str, list[TypeSpec]]] = []
    for i, od in enumerate(od_docs):
        if not isinstance(od, dict) or "origin" not in od or "destination" not in od:
            raise SchemaError(f"od_pairs[{i}] needs 'origin' and 'destination'")
        types = []
        for j, t in enumerate(od.get("types", [])):
            if not isinstance(t, dict):
                raise SchemaError(f"od_pairs[{i}].types[{j}] must be an object")
            for key in ("id", "demand", "edges"):
                if key not in t:
                    raise SchemaError(f"od_pairs[{i}].types[{j}] missing {key!r}")
            if not isinstance(t["edges"], list):
                raise SchemaError(f"od_pairs[{i}].types[{j}].edges must be a list")
            demand = _number(t["demand"], f"od_pairs[{i}].types[{j}].demand", params)
            try:
                types.append(TypeSpec(t["id"], demand, frozenset(t["edges"])))
            except ValidationError as exc:
                raise SchemaError(f"od_pairs[{i}].types[{j}]: {exc}") from None
        pairs_raw.append((od["origin"], od["destination"], types))

    try:
        net = make_network(
            doc["vertices"],
            edges,
            pairs_raw[0][0],
            pairs_raw[0][1],
            od_pairs=[(o, d) for o, d, _ in pairs_raw],
            strip=strip,
        )
        surviving = set(net.edge_map)
        od_pairs = tuple(
            ODPair(o, d, tuple(TypeSpec(t.id, t.demand, t.edges & surviving) for t in ts))
            for o, d, ts in pairs_raw
        )
        return make_instance(net, {k: v for k, v in costs.items() if k in surviving}, od_pairs)
    except ValidationError as exc:
        raise ValidationError(f"invalid instance: {exc}") from None


def load_instance(
    source: str | Path,
    *,
    strip: bool = True,
    params: Mapping[str, float] | None = None,
) -> InstanceSpec:
    """Load an instance from a JSON file path or a raw JSON string.

    With ``strip`` (default) vertices and edges lying on no terminal route
    are removed with a warning; otherwise they are rejected.
    """
    text: str
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        p = Path(source)
        if not p.exists():
            raise SchemaError(f"no such instance file: {source}")
        text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return parse_instance_document(doc, strip=strip, params=params)


def load_expansion(source: str | Path, instance: InstanceSpec):
    """Read the optional 'expansion' stanza accompanying an instance file.

    Returns an :class:`ibplab.paradox.ExpansionSpec` or None.  Lives here so
    the document schema is owned by one module; the paradox module supplies
    the type.
    """
    from . import paradox

    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        text = Path(source).read_text()
    doc = json.loads(text)
    exp = doc.get("expansion")
    if exp is None:
        return None
    if not isinstance(exp, dict) or "type" not in exp or "add" not in exp:
        raise SchemaError("'expansion' needs 'type' and 'add'")
    return paradox.ExpansionSpec(
        exp["type"], frozenset(exp["add"]), bool(exp.get("restricted", False))
    )


def flow_profile_to_json(profile: FlowProfile) -> dict:
    """Serialize a flow profile; route flows are keyed 'typeId/e1,e2,...'."""
    return {
        "route_flows": {
            f"{tid}/{','.join(key)}": flow
            for (tid, key), flow in sorted(profile.route_flows.items())
        },
        "edge_flows": dict(sorted(profile.edge_flows.items())),
        "route_costs": {
            ",".join(key): cost for key, cost in sorted(profile.route_costs.items())
        },
        "type_costs": dict(sorted(profile.type_costs.items())),
    }
