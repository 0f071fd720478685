"""Topology classification for two-terminal networks.

Three nested classes are recognized:

- series-parallel (SP): reducible to a single edge by merging parallel edge
  pairs and contracting interior degree-2 vertices;
- linearly independent (LI): every route owns an edge that lies on no other
  route;
- series of linearly independent (SLI): a series chain of LI blocks.

Recognition is tree-based and near-linear.  A brute-force embedding oracle
(`embeds`) and a route-level LI oracle (`li_bruteforce`) provide independent
cross-checks; both are exponential by design and exist for verification, not
production classification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .netmodel import (
    Edge,
    IbplabError,
    Network,
    ValidationError,
    enumerate_routes,
)


class SearchBudgetExceeded(IbplabError):
    """The embedding search ran out of budget; the result is inconclusive."""


# ---------------------------------------------------------------------------
# SP decomposition trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpTree:
    """Binary series-parallel decomposition tree.

    Leaves carry edge ids; internal nodes are ``series`` or ``parallel``
    merges.  Every node records the terminals (``head`` origin-side, ``tail``
    destination-side) of the subnetwork it spans, so blocks can be extracted
    and the network replayed.  Series children are ordered head-to-tail;
    parallel children are ordered canonically by smallest contained edge id.
    """

    kind: str  # "edge" | "series" | "parallel"
    head: str
    tail: str
    edge_id: str | None = None
    children: tuple["SpTree", ...] = ()

    def leaves(self) -> tuple["SpTree", ...]:
        if self.kind == "edge":
            return (self,)
        return tuple(l for c in self.children for l in c.leaves())

    def leaf_edge_ids(self) -> tuple[str, ...]:
        return tuple(l.edge_id for l in self.leaves())  # type: ignore[misc]

    def min_leaf(self) -> str:
        return min(self.leaf_edge_ids())

    def to_json(self):
        """Nested-array form: a leaf is its edge id, a node is [label, l, r]."""
        if self.kind == "edge":
            return self.edge_id
        label = "S" if self.kind == "series" else "P"
        return [label, *(c.to_json() for c in self.children)]


@dataclass(frozen=True)
class SpRemainder:
    """Irreducible graph left after exhaustive series/parallel reduction.

    Each remaining edge is a fused group of original edges.
    """

    vertices: tuple[str, ...]
    edges: tuple[tuple[tuple[str, ...], str, str], ...]


@dataclass(frozen=True)
class SpDecomposition:
    is_sp: bool
    tree: SpTree | None
    remainder: SpRemainder | None


def _flip(t: SpTree) -> SpTree:
    if t.kind == "edge":
        return replace(t, head=t.tail, tail=t.head)
    children = tuple(_flip(c) for c in t.children)
    if t.kind == "series":
        children = tuple(reversed(children))
    return SpTree(t.kind, t.tail, t.head, None, children)


def _normalize(t: SpTree, head: str) -> SpTree:
    """Orient ``t`` so its head is ``head``; order parallel children."""
    if t.head != head:
        t = _flip(t)
    if t.kind == "edge":
        return t
    if t.kind == "series":
        left = _normalize(t.children[0], t.head)
        right = _normalize(t.children[1], left.tail)
        return SpTree("series", t.head, t.tail, None, (left, right))
    kids = tuple(_normalize(c, t.head) for c in t.children)
    kids = tuple(sorted(kids, key=lambda c: c.min_leaf()))
    return SpTree("parallel", t.head, t.tail, None, kids)


def sp_decompose(net: Network) -> SpDecomposition:
    """Reduce the network to a single edge by series/parallel merges.

    Returns the decomposition tree when the network is SP, otherwise the
    irreducible remainder.  Worklist-driven: each merge requeues only the
    endpoints it touched, so the total work is near-linear in |E| + |V|.
    """
    heads: dict[int, str] = {}
    tails: dict[int, str] = {}
    trees: dict[int, SpTree] = {}
    adj: dict[str, set[int]] = {v: set() for v in net.vertices}
    buckets: dict[frozenset[str], set[int]] = {}
    next_handle = 0

    def add(head: str, tail: str, tree: SpTree) -> int:
        nonlocal next_handle
        h = next_handle
        next_handle += 1
        heads[h], tails[h], trees[h] = head, tail, tree
        adj[head].add(h)
        adj[tail].add(h)
        buckets.setdefault(frozenset((head, tail)), set()).add(h)
        return h

    def remove(h: int) -> None:
        adj[heads[h]].discard(h)
        adj[tails[h]].discard(h)
        buckets[frozenset((heads[h], tails[h]))].discard(h)
        del heads[h], tails[h], trees[h]

    for e in net.edges:
        add(e.u, e.v, SpTree("edge", e.u, e.v, e.id))

    pair_work = sorted(buckets, key=sorted)
    vertex_work = sorted(v for v in net.vertices if v not in (net.origin, net.destination))
    pair_seen = set(pair_work)
    vertex_seen = set(vertex_work)

    def queue_pair(key: frozenset[str]) -> None:
        if key not in pair_seen:
            pair_seen.add(key)
            pair_work.append(key)

    def queue_vertex(v: str) -> None:
        if v not in (net.origin, net.destination) and v not in vertex_seen:
            vertex_seen.add(v)
            vertex_work.append(v)

    while pair_work or vertex_work:
        if pair_work:
            key = pair_work.pop()
            pair_seen.discard(key)
            group = buckets.get(key, set())
            while len(group) >= 2:
                h1, h2 = sorted(group, key=lambda h: trees[h].min_leaf())[:2]
                u = heads[h1]
                t1 = _normalize(trees[h1], u)
                t2 = _normalize(trees[h2], u)
                merged = SpTree("parallel", u, tails[h1], None, (t1, t2))
                v = tails[h1]
                remove(h1)
                remove(h2)
                add(u, v, merged)
                queue_vertex(u)
                queue_vertex(v)
            continue
        w = vertex_work.pop()
        vertex_seen.discard(w)
        if w not in adj or len(adj[w]) != 2:
            continue
        h1, h2 = sorted(adj[w], key=lambda h: trees[h].min_leaf())
        u = heads[h1] if tails[h1] == w else tails[h1]
        v = heads[h2] if tails[h2] == w else tails[h2]
        if u == v:
            # two parallel composites; the pair bucket will fuse them first
            queue_pair(frozenset((u, w)))
            continue
        t1 = _normalize(trees[h1], u)
        t2 = _normalize(trees[h2], w)
        merged = SpTree("series", u, v, None, (t1, t2))
        remove(h1)
        remove(h2)
        del adj[w]
        add(u, v, merged)
        queue_pair(frozenset((u, v)))
        queue_vertex(u)
        queue_vertex(v)

    live = sorted(trees)
    if len(live) == 1:
        h = live[0]
        if frozenset((heads[h], tails[h])) == frozenset((net.origin, net.destination)):
            return SpDecomposition(True, _normalize(trees[h], net.origin), None)
    remainder = SpRemainder(
        tuple(sorted(v for v in adj if adj[v])),
        tuple(
            (trees[h].leaf_edge_ids(), heads[h], tails[h])
            for h in live
        ),
    )
    return SpDecomposition(False, None, remainder)


def replay_sp_tree(tree: SpTree) -> Network:
    """Rebuild the two-terminal network a decomposition tree describes."""
    edges = []
    verts = {tree.head, tree.tail}
    for leaf in tree.leaves():
        edges.append(Edge(leaf.edge_id, leaf.head, leaf.tail))
        verts.update((leaf.head, leaf.tail))
    edges.sort(key=lambda e: e.id)
    return Network(tuple(sorted(verts)), tuple(edges), tree.head, tree.tail)


def sp_vertex_order(tree: SpTree) -> tuple[str, ...]:
    """A vertex order that increases along every route of an SP network."""

    def order(t: SpTree) -> list[str]:
        if t.kind == "edge":
            return [t.head, t.tail]
        a, b = (order(c) for c in t.children)
        if t.kind == "series":
            return a + b[1:]
        return [t.head] + a[1:-1] + b[1:-1] + [t.tail]

    return tuple(order(tree))


# ---------------------------------------------------------------------------
# LI / SLI tree rules
# ---------------------------------------------------------------------------


def _is_chain(t: SpTree) -> bool:
    """A subtree with no parallel node spans a single-route path."""
    if t.kind == "edge":
        return True
    if t.kind == "parallel":
        return False
    return all(_is_chain(c) for c in t.children)


def _is_li_tree(t: SpTree) -> bool:
    if t.kind == "edge":
        return True
    a, b = t.children
    if t.kind == "parallel":
        return _is_li_tree(a) and _is_li_tree(b)
    return (_is_chain(a) and _is_li_tree(b)) or (_is_chain(b) and _is_li_tree(a))


def _series_factors(t: SpTree) -> tuple[SpTree, ...]:
    if t.kind != "series":
        return (t,)
    return _series_factors(t.children[0]) + _series_factors(t.children[1])


@dataclass(frozen=True, eq=False)
class EmbeddingWitness:
    """Concrete realization of one network inside another: an injective
    vertex map, internally disjoint paths standing for each pattern edge, and
    (possibly empty) terminal attachment paths."""

    vertex_map: Mapping[str, str]
    edge_paths: Mapping[str, tuple[str, ...]]
    origin_path: tuple[str, ...]
    destination_path: tuple[str, ...]
    pattern: str | None = None

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern,
            "vertex_map": dict(sorted(self.vertex_map.items())),
            "edge_paths": {k: list(v) for k, v in sorted(self.edge_paths.items())},
            "origin_path": list(self.origin_path),
            "destination_path": list(self.destination_path),
        }


@dataclass(frozen=True, eq=False)
class TopologyReport:
    is_sp: bool
    is_li: bool
    is_sli: bool
    sp_tree: SpTree | None
    li_blocks: tuple[Network, ...]
    witness: EmbeddingWitness | None = None

    def to_json(self) -> dict:
        return {
            "is_sp": self.is_sp,
            "is_li": self.is_li,
            "is_sli": self.is_sli,
            "sp_tree": None if self.sp_tree is None else self.sp_tree.to_json(),
            "li_blocks": [
                {
                    "origin": b.origin,
                    "destination": b.destination,
                    "edges": sorted(b.edge_ids),
                }
                for b in self.li_blocks
            ],
            "witness": None if self.witness is None else self.witness.to_json(),
        }


def classify(net: Network, *, find_witness: bool = False) -> TopologyReport:
    """Classify a network as SP / LI / SLI.

    LI is decided on the decomposition tree: a parallel node needs both
    children LI; a series node needs one child to be a pure chain (no
    parallel label) and the other LI.  SLI requires every top-level series
    factor to be LI; the factors are the LI blocks, in origin-to-destination
    order.  All tree-based predicates are decomposition-invariant (enforced
    by the oracle-equivalence suites).

    ``find_witness`` additionally searches for a forbidden-pattern embedding
    when the network is not SLI; this calls the exponential oracle and is for
    diagnostics only.
    """
    dec = sp_decompose(net)
    if not dec.is_sp:
        witness = _sli_witness(net, sp=False) if find_witness else None
        return TopologyReport(False, False, False, None, (), witness)
    tree = dec.tree
    assert tree is not None
    factors = _series_factors(tree)
    is_li = _is_li_tree(tree)
    is_sli = all(_is_li_tree(f) for f in factors)
    blocks: tuple[Network, ...] = ()
    if is_sli:
        blocks = tuple(
            net.subnetwork(f.leaf_edge_ids(), f.head, f.tail) for f in factors
        )
    witness = None
    if find_witness and not is_sli:
        witness = _sli_witness(net, sp=True)
    return TopologyReport(dec.is_sp, is_li, is_sli, tree, blocks, witness)


# ---------------------------------------------------------------------------
# Route-level LI oracle
# ---------------------------------------------------------------------------


def li_bruteforce(net: Network, *, cap: int | None = None) -> bool:
    """Decide linear independence from the full route list.

    Three equivalent criteria are evaluated and must agree: linear
    independence of the 0/1 route-incidence vectors over GF(2), existence of
    a private edge on every route, and the section condition (two routes
    through a common interior vertex share their prefix or their suffix).
    """
    kwargs = {} if cap is None else {"cap": cap}
    routes = enumerate_routes(net, **kwargs)
    index = {eid: i for i, eid in enumerate(net.edge_ids)}

    masks = [sum(1 << index[eid] for eid in r.edges) for r in routes]
    rank = 0
    pivots: list[int] = []
    for m in masks:
        for p in pivots:
            m = min(m, m ^ p)
        if m:
            pivots.append(m)
            rank += 1
    f2_independent = rank == len(routes)

    edge_uses: dict[str, int] = {}
    for r in routes:
        for eid in r.edges:
            edge_uses[eid] = edge_uses.get(eid, 0) + 1
    private = all(any(edge_uses[eid] == 1 for eid in r.edges) for r in routes)

    sections = True
    terminals = (net.origin, net.destination)
    for r, q in itertools.combinations(routes, 2):
        shared = set(r.vertices[1:-1]) & set(q.vertices[1:-1])
        for v in shared:
            i, j = r.vertices.index(v), q.vertices.index(v)
            if r.edges[:i] != q.edges[:j] and r.edges[i:] != q.edges[j:]:
                sections = False
                break
        if not sections:
            break

    if not (f2_independent == private == sections):
        raise IbplabError(
            "internal inconsistency between route-independence criteria: "
            f"rank={f2_independent} private={private} sections={sections}"
        )
    return private


# ---------------------------------------------------------------------------
# Embedding oracle
# ---------------------------------------------------------------------------


def embeds(
    h: Network,
    g: Network,
    *,
    budget: int = 2_000_000,
) -> EmbeddingWitness | None:
    """Search for an embedding of pattern ``h`` inside ``g``.

    ``h`` is embedded in ``g`` when ``g`` can be produced from ``h`` by
    subdividing edges, adding edges anywhere, and extending a terminal by an
    edge.  Equivalently, ``g`` contains a subdivision of ``h`` (an injective
    vertex map plus internally disjoint paths), with ``g``'s terminals either
    mapped exactly or attached by disjoint pendant paths, and any leftover
    edges unconstrained.

    Returns a witness or None.  Exhausting the step budget raises
    :class:`SearchBudgetExceeded` (inconclusive, never treated as absence).
    Exponential by design; production classification never calls this.
    """
    if len(h.edges) > 8:
        raise ValidationError("pattern networks above 8 edges are out of contract")
    if len(g.edges) < len(h.edges) or len(g.vertices) < len(h.vertices):
        return None

    gadj = g.adjacency
    gdeg = {v: len(gadj[v]) for v in g.vertices}
    hadj: dict[str, list[Edge]] = {v: [] for v in h.vertices}
    for e in h.edges:
        hadj[e.u].append(e)
        hadj[e.v].append(e)
    hdeg = {v: len(hadj[v]) for v in h.vertices}
    steps = [0]

    def tick() -> None:
        steps[0] += 1
        if steps[0] > budget:
            raise SearchBudgetExceeded(f"embedding search exceeded {budget} steps")

    def paths(
        src: str,
        dst: str,
        banned: set[str],
        used_edges: set[str],
        allow_empty: bool,
    ) -> Iterator[tuple[tuple[str, ...], tuple[str, ...]]]:
        """Yield (edge ids, interior vertices) of simple src->dst paths whose
        interior avoids ``banned`` and whose edges avoid ``used_edges``."""
        if allow_empty and src == dst:
            yield (), ()
            return
        if src == dst:
            return
        path_edges: list[str] = []
        interior: list[str] = []
        on_path = {src}

        def walk(v: str) -> Iterator[tuple[tuple[str, ...], tuple[str, ...]]]:
            tick()
            for e in gadj[v]:
                if e.id in used_edges or e.id in path_edges:
                    continue
                w = e.other(v)
                if w == dst:
                    yield tuple(path_edges + [e.id]), tuple(interior)
                    continue
                if w in on_path or w in banned:
                    continue
                path_edges.append(e.id)
                interior.append(w)
                on_path.add(w)
                yield from walk(w)
                path_edges.pop()
                interior.pop()
                on_path.discard(w)

        yield from walk(src)

    hverts = sorted(h.vertices, key=lambda v: -hdeg[v])
    hedges = sorted(h.edges, key=lambda e: e.id)

    for o_fixed, d_fixed in ((True, True), (True, False), (False, True), (False, False)):
        banned_terminals = set()
        if not o_fixed:
            banned_terminals.add(g.origin)
        if not d_fixed:
            banned_terminals.add(g.destination)

        def feasible(v: str, image: str) -> bool:
            if image in banned_terminals:
                return False
            need = hdeg[v]
            if (v == h.origin and not o_fixed) or (v == h.destination and not d_fixed):
                need += 1
            return gdeg[image] >= need

        def assign(i: int, vmap: dict[str, str]) -> Iterator[dict[str, str]]:
            if i == len(hverts):
                yield dict(vmap)
                return
            v = hverts[i]
            if v == h.origin and o_fixed:
                candidates = [g.origin]
            elif v == h.destination and d_fixed:
                candidates = [g.destination]
            else:
                candidates = list(g.vertices)
            taken = set(vmap.values())
            for image in candidates:
                tick()
                if image in taken or not feasible(v, image):
                    continue
                vmap[v] = image
                yield from assign(i + 1, vmap)
                del vmap[v]

        for vmap in assign(0, {}):
            images = set(vmap.values())
            used_edges: set[str] = set()
            used_interior: set[str] = set()
            edge_paths: dict[str, tuple[str, ...]] = {}

            def place(k: int) -> EmbeddingWitness | None:
                if k == len(hedges):
                    banned = images | used_interior | banned_terminals
                    for o_edges, o_int in paths(
                        g.origin,
                        vmap[h.origin],
                        banned - {vmap[h.origin]},
                        used_edges,
                        allow_empty=o_fixed,
                    ):
                        if o_fixed and o_edges:
                            continue
                        if not o_fixed and not o_edges:
                            continue
                        banned_d = banned | set(o_int) | set()
                        for d_edges, _ in paths(
                            vmap[h.destination],
                            g.destination,
                            banned_d - {vmap[h.destination]},
                            used_edges | set(o_edges),
                            allow_empty=d_fixed,
                        ):
                            if d_fixed and d_edges:
                                continue
                            if not d_fixed and not d_edges:
                                continue
                            return EmbeddingWitness(
                                dict(vmap), dict(edge_paths), o_edges, d_edges
                            )
                    return None
                e = hedges[k]
                src, dst = vmap[e.u], vmap[e.v]
                banned = (images - {dst}) | used_interior | banned_terminals
                for p_edges, p_int in paths(src, dst, banned, used_edges, False):
                    used_edges.update(p_edges)
                    used_interior.update(p_int)
                    edge_paths[e.id] = p_edges
                    found = place(k + 1)
                    if found is not None:
                        return found
                    used_edges.difference_update(p_edges)
                    used_interior.difference_update(p_int)
                    del edge_paths[e.id]
                return None

            found = place(0)
            if found is not None:
                return found
    return None


# ---------------------------------------------------------------------------
# Forbidden-pattern library
# ---------------------------------------------------------------------------


def _net(edges: Sequence[tuple[str, str, str]], o: str, d: str) -> Network:
    verts = sorted({v for _, u, w in edges for v in (u, w)})
    return Network(tuple(verts), tuple(Edge(*e) for e in edges), o, d)


def wheatstone() -> Network:
    """The minimal non-SP network: two terminal paths joined by a bridge
    that routes traverse in opposite directions."""
    return _net(
        [("e1", "O", "a"), ("e2", "O", "b"), ("e3", "a", "D"), ("e4", "b", "D"),
         ("e5", "a", "b")],
        "O",
        "D",
    )


def _crossing_variant(
    *, bypass: bool, mid: bool, ostem: bool, dstem: bool
) -> Network:
    edges: list[tuple[str, str, str]] = []
    left = "O"
    if ostem:
        edges.append(("e7", "O", "u1"))
        left = "u1"
    edges += [("e1", left, "m1"), ("e2", left, "m1")]
    right = "m1"
    if mid:
        edges.append(("e6", "m1", "m2"))
        right = "m2"
    end = "u2" if dstem else "D"
    edges += [("e3", right, end), ("e4", right, end)]
    if dstem:
        edges.append(("e8", "u2", "D"))
    if bypass:
        edges.append(("e5", "O", "D"))
    return _net(edges, "O", "D")


def crossing() -> Network:
    """Two parallel pairs in series; the minimal network whose routes cross."""
    return _crossing_variant(bypass=False, mid=False, ostem=False, dstem=False)


def crossing_mid() -> Network:
    """Two parallel pairs joined by a connector edge; routes cross at a
    vertex pair rather than a single vertex."""
    return _crossing_variant(bypass=False, mid=True, ostem=False, dstem=False)


def sp_obstructions() -> dict[str, Network]:
    """A network is SP iff none of these embeds in it."""
    return {"wheatstone": wheatstone()}


def li_obstructions() -> dict[str, Network]:
    """A network is LI iff none of these embeds in it."""
    return {
        "wheatstone": wheatstone(),
        "crossing": crossing(),
        "crossing_mid": crossing_mid(),
    }


def sli_obstructions() -> dict[str, Network]:
    """A network is SLI iff none of these nine embeds in it.

    Besides the wheatstone, each pattern is a crossing structure plus a
    terminal-to-terminal bypass edge, with optional connector (``mid``) and
    terminal stems that keep the crossing strictly inside the network.
    """
    out = {"wheatstone": wheatstone()}
    variants = {
        "crossing_bypass": (False, False, False),
        "crossing_bypass_mid": (True, False, False),
        "crossing_bypass_ostem": (False, True, False),
        "crossing_bypass_dstem": (False, False, True),
        "crossing_bypass_mid_dstem": (True, False, True),
        "crossing_bypass_mid_ostem": (True, True, False),
        "crossing_bypass_mid_bothstems": (True, True, True),
        "crossing_bypass_bothstems": (False, True, True),
    }
    for name, (mid, ostem, dstem) in variants.items():
        out[name] = _crossing_variant(bypass=True, mid=mid, ostem=ostem, dstem=dstem)
    return out


def _sli_witness(net: Network, *, sp: bool) -> EmbeddingWitness | None:
    for name, pattern in sli_obstructions().items():
        if sp and name == "wheatstone":
            continue  # an SP network cannot host the wheatstone
        w = embeds(pattern, net)
        if w is not None:
            return replace(w, pattern=name)
    return None


def sli_embedding_oracle(net: Network) -> EmbeddingWitness | None:
    """Brute-force SLI test: return a forbidden-pattern witness or None.

    Independent of the tree-based classifier; used by the equivalence suites.
    """
    for name, pattern in sli_obstructions().items():
        w = embeds(pattern, net)
        if w is not None:
            return replace(w, pattern=name)
    return None


# ---------------------------------------------------------------------------
# Small-graph utilities (tests and diagnostics)
# ---------------------------------------------------------------------------


def canonical_form(net: Network) -> tuple:
    """Canonical encoding of a two-terminal multigraph with terminals fixed.

    Minimizes the sorted edge multiset over all relabelings of the interior
    vertices; exponential in interior count, intended for small graphs.
    """
    interior = sorted(v for v in net.vertices if v not in (net.origin, net.destination))
    base = {net.origin: 0, net.destination: 1}
    best: tuple | None = None
    for perm in itertools.permutations(range(2, 2 + len(interior))):
        label = dict(base)
        label.update(zip(interior, perm))
        enc = tuple(
            sorted(
                (min(label[e.u], label[e.v]), max(label[e.u], label[e.v]))
                for e in net.edges
            )
        )
        if best is None or enc < best:
            best = enc
    return (len(net.vertices), best)


def is_isomorphic(a: Network, b: Network) -> bool:
    """Terminal-preserving isomorphism of two-terminal multigraphs."""
    if len(a.vertices) != len(b.vertices) or len(a.edges) != len(b.edges):
        return False
    return canonical_form(a) == canonical_form(b)


def cut_vertices(net: Network) -> frozenset[str]:
    """Articulation points, multigraph-aware (parallel edges are back edges)."""
    disc: dict[str, int] = {}
    low: dict[str, int] = {}
    parent_edge: dict[str, str | None] = {}
    result: set[str] = set()
    counter = itertools.count()
    root = net.origin

    stack: list[tuple[str, Iterator[Edge]]] = [(root, iter(net.adjacency[root]))]
    disc[root] = low[root] = next(counter)
    parent_edge[root] = None
    root_children = 0

    while stack:
        v, it = stack[-1]
        advanced = False
        for e in it:
            w = e.other(v)
            if w not in disc:
                disc[w] = low[w] = next(counter)
                parent_edge[w] = e.id
                if v == root:
                    root_children += 1
                stack.append((w, iter(net.adjacency[w])))
                advanced = True
                break
            elif e.id != parent_edge.get(v):
                low[v] = min(low[v], disc[w])
        if not advanced:
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[v])
                if p != root and low[v] >= disc[p]:
                    result.add(p)
    if root_children >= 2:
        result.add(root)
    return frozenset(result)
