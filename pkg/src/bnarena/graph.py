"""Graph types for structure learning: DAGs, PDAGs and equivalence classes.

Nodes are identified by name.  Both graph types are immutable; every
"mutation" returns a new object.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class CycleError(ValueError):
    """Raised when an arc set contains a directed cycle."""


class OrientationConflict(ValueError):
    """Both orientations of an undirected edge are forced by the orientation rules."""

    def __init__(self, edges, pdag=None):
        self.edges = sorted(tuple(sorted(e)) for e in edges)
        self.pdag = pdag
        super().__init__(f"conflicting orientations forced for {self.edges}")


class InvalidCpdag(ValueError):
    """A PDAG that admits no consistent DAG extension.

    ``edges`` holds the undirected edges left unoriented when the extension
    got stuck; ``pdag`` is the offending graph.
    """

    def __init__(self, edges, pdag=None):
        self.edges = sorted(tuple(sorted(e)) for e in edges)
        self.pdag = pdag
        super().__init__(f"PDAG cannot be extended to a DAG; stuck on {len(self.edges)} edges")


def _check_nodes(nodes: Iterable[str]) -> tuple[str, ...]:
    nodes = tuple(str(n) for n in nodes)
    if len(set(nodes)) != len(nodes):
        raise ValueError("duplicate node names")
    return nodes


def _has_directed_cycle(nodes: Sequence[str], arcs: Iterable[tuple[str, str]]) -> bool:
    children = {n: [] for n in nodes}
    indeg = dict.fromkeys(nodes, 0)
    for a, b in arcs:
        children[a].append(b)
        indeg[b] += 1
    queue = deque(n for n in nodes if indeg[n] == 0)
    seen = 0
    while queue:
        n = queue.popleft()
        seen += 1
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen != len(nodes)


class Dag:
    """Directed acyclic graph over named nodes."""

    __slots__ = ("nodes", "arcs", "index", "_parents", "_children")

    def __init__(self, nodes: Iterable[str], arcs: Iterable[tuple[str, str]] = ()):
        self.nodes = _check_nodes(nodes)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        arcs = frozenset((str(a), str(b)) for a, b in arcs)
        parents = {n: set() for n in self.nodes}
        children = {n: set() for n in self.nodes}
        for a, b in arcs:
            if a not in self.index or b not in self.index:
                raise ValueError(f"arc {a}->{b} references an unknown node")
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if (b, a) in arcs:
                raise ValueError(f"both {a}->{b} and {b}->{a} present")
            parents[b].add(a)
            children[a].add(b)
        if _has_directed_cycle(self.nodes, arcs):
            raise CycleError("arc set contains a directed cycle")
        self.arcs = arcs
        self._parents = {n: frozenset(p) for n, p in parents.items()}
        self._children = {n: frozenset(c) for n, c in children.items()}

    @classmethod
    def from_parents(cls, parents: dict[str, Iterable[str]], nodes=None) -> Dag:
        nodes = list(parents) if nodes is None else nodes
        return cls(nodes, [(p, n) for n, ps in parents.items() for p in ps])

    def parents(self, node: str) -> frozenset[str]:
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        return self._children[node]

    def ordered_parents(self, node: str) -> list[str]:
        """Parents of ``node`` in node-declaration order."""
        return sorted(self._parents[node], key=self.index.__getitem__)

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.arcs or (b, a) in self.arcs

    def has_arc(self, a: str, b: str) -> bool:
        return (a, b) in self.arcs

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; ties resolved by declaration order."""
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        ready = [n for n in self.nodes if indeg[n] == 0]
        order = []
        while ready:
            ready.sort(key=self.index.__getitem__, reverse=True)
            n = ready.pop()
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return order

    def add_arc(self, a: str, b: str) -> Dag:
        return Dag(self.nodes, self.arcs | {(a, b)})

    def remove_arc(self, a: str, b: str) -> Dag:
        return Dag(self.nodes, self.arcs - {(a, b)})

    def reverse_arc(self, a: str, b: str) -> Dag:
        return Dag(self.nodes, (self.arcs - {(a, b)}) | {(b, a)})

    def skeleton(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(a) for a in self.arcs)

    def to_pdag(self) -> Pdag:
        return Pdag(self.nodes, directed=self.arcs)

    def vstructures(self) -> set[tuple[str, str, str]]:
        """Unshielded colliders ``(a, c, b)`` meaning a -> c <- b, with a < b."""
        out = set()
        for c in self.nodes:
            for a, b in itertools.combinations(sorted(self._parents[c]), 2):
                if not self.adjacent(a, b):
                    out.add((a, c, b))
        return out

    def __eq__(self, other):
        return isinstance(other, Dag) and set(self.nodes) == set(other.nodes) and self.arcs == other.arcs

    def __hash__(self):
        return hash((frozenset(self.nodes), self.arcs))

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        parts = []
        for n in self.nodes:
            ps = self.ordered_parents(n)
            parts.append(f"[{n}|{':'.join(ps)}]" if ps else f"[{n}]")
        return "Dag(" + "".join(parts) + ")"


class Pdag:
    """Partially directed graph: a set of arcs plus a set of undirected edges."""

    __slots__ = ("nodes", "directed", "undirected", "index")

    def __init__(self, nodes: Iterable[str], directed=(), undirected=()):
        self.nodes = _check_nodes(nodes)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        directed = frozenset((str(a), str(b)) for a, b in directed)
        undirected = frozenset(frozenset(map(str, e)) for e in undirected)
        seen = set()
        for a, b in directed:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            key = frozenset((a, b))
            if key in seen:
                raise ValueError(f"multiple edges between {a} and {b}")
            seen.add(key)
        for e in undirected:
            if len(e) != 2:
                raise ValueError(f"malformed undirected edge {set(e)}")
            if e in seen:
                raise ValueError(f"edge {sorted(e)} both directed and undirected")
            seen.add(e)
        for e in seen:
            for n in e:
                if n not in self.index:
                    raise ValueError(f"edge references unknown node {n}")
        self.directed = directed
        self.undirected = undirected

    def edge_status(self, a: str, b: str) -> str | None:
        """``'->'``, ``'<-'``, ``'--'`` or None, as seen from ``a``."""
        if (a, b) in self.directed:
            return "->"
        if (b, a) in self.directed:
            return "<-"
        if frozenset((a, b)) in self.undirected:
            return "--"
        return None

    def adjacent(self, a: str, b: str) -> bool:
        return self.edge_status(a, b) is not None

    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def skeleton(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(a) for a in self.directed) | self.undirected

    def __eq__(self, other):
        return (
            isinstance(other, Pdag)
            and set(self.nodes) == set(other.nodes)
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def __hash__(self):
        return hash((frozenset(self.nodes), self.directed, self.undirected))

    def __repr__(self):
        arcs = ", ".join(f"{a}->{b}" for a, b in sorted(self.directed))
        edges = ", ".join("-".join(sorted(e)) for e in sorted(map(sorted, self.undirected)))
        return f"Pdag(arcs=[{arcs}], edges=[{edges}])"


class _MixedGraph:
    """Mutable working copy used by the orientation rules and extension."""

    def __init__(self, p: Pdag):
        self.nodes = p.nodes
        self.order = p.index
        self.parents = {n: set() for n in p.nodes}
        self.children = {n: set() for n in p.nodes}
        self.undir = {n: set() for n in p.nodes}
        for a, b in p.directed:
            self.parents[b].add(a)
            self.children[a].add(b)
        for e in p.undirected:
            a, b = tuple(e)
            self.undir[a].add(b)
            self.undir[b].add(a)

    def adjacent(self, a, b):
        return b in self.parents[a] or b in self.children[a] or b in self.undir[a]

    def neighbours(self, a):
        return self.parents[a] | self.children[a] | self.undir[a]

    def orient(self, a, b):
        self.undir[a].discard(b)
        self.undir[b].discard(a)
        self.parents[b].add(a)
        self.children[a].add(b)

    def directed_path(self, src, dst):
        """True if a strictly directed path src -> ... -> dst exists."""
        stack = [src]
        seen = {src}
        while stack:
            n = stack.pop()
            for c in self.children[n]:
                if c == dst:
                    return True
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False

    def forced(self, a, b):
        """Whether the undirected edge a - b must be oriented a -> b."""
        # no new unshielded collider at b: some c -> a with c, b non-adjacent
        for c in self.parents[a]:
            if not self.adjacent(c, b):
                return True
        # no cycle: a strictly directed path a ~> b already exists
        if self.directed_path(a, b):
            return True
        # two non-adjacent c, d with a - c -> b and a - d -> b
        cands = [c for c in self.undir[a] if b in self.children[c]]
        for c, d in itertools.combinations(cands, 2):
            if not self.adjacent(c, d):
                return True
        return False

    def to_pdag(self):
        directed = [(a, b) for b in self.nodes for a in self.parents[b]]
        undirected = {frozenset((a, b)) for a in self.nodes for b in self.undir[a]}
        return Pdag(self.nodes, directed, undirected)


def apply_orientation_rules(p: Pdag) -> Pdag:
    """Orient undirected edges until no rule fires.

    Rules: avoid new unshielded colliders, avoid directed cycles (any strictly
    directed path, which subsumes the three-node case), and the two-collider
    rule needed for completeness.  Raises :class:`OrientationConflict` when
    both directions of an edge are forced.
    """
    g = _MixedGraph(p)
    if _has_directed_cycle(g.nodes, [(a, b) for b in g.nodes for a in g.parents[b]]):
        raise CycleError("directed part of the PDAG is cyclic")
    changed = True
    while changed:
        changed = False
        edges = sorted(
            (tuple(sorted((a, b), key=g.order.__getitem__)) for a in g.nodes for b in g.undir[a] if g.order[a] < g.order[b]),
            key=lambda e: (g.order[e[0]], g.order[e[1]]),
        )
        for a, b in edges:
            if b not in g.undir[a]:
                continue
            fwd, bwd = g.forced(a, b), g.forced(b, a)
            if fwd and bwd:
                raise OrientationConflict([(a, b)], p)
            if fwd:
                g.orient(a, b)
                changed = True
            elif bwd:
                g.orient(b, a)
                changed = True
    return g.to_pdag()


def cpdag_from_dag(g: Dag) -> Pdag:
    """CPDAG of the equivalence class of ``g``."""
    vs = g.vstructures()
    directed = set()
    for a, c, b in vs:
        directed.add((a, c))
        directed.add((b, c))
    undirected = [frozenset(arc) for arc in g.arcs if arc not in directed]
    return apply_orientation_rules(Pdag(g.nodes, directed, undirected))


def extend_to_dag(p: Pdag) -> Dag:
    """A consistent DAG extension of ``p`` (Dor and Tarsi's sink elimination).

    Arcs of ``p`` are kept, no new unshielded colliders are created.  Among
    valid sinks the largest node name is removed first, which orients a free
    edge from the smaller name to the larger.  Raises :class:`InvalidCpdag`.
    """
    g = _MixedGraph(p)
    arcs = set((a, b) for b in g.nodes for a in g.parents[b])
    alive = set(g.nodes)
    while alive:
        sink = None
        for x in sorted(alive, reverse=True):
            if g.children[x]:
                continue
            nbrs = g.neighbours(x)
            if all(all(y == z or g.adjacent(y, z) for z in nbrs) for y in g.undir[x]):
                sink = x
                break
        if sink is None:
            stuck = {frozenset((a, b)) for a in alive for b in g.undir[a]}
            raise InvalidCpdag(stuck, p)
        for y in list(g.undir[sink]):
            arcs.add((y, sink))
            g.undir[y].discard(sink)
        for y in list(g.parents[sink]):
            g.children[y].discard(sink)
        alive.discard(sink)
        g.undir[sink] = set()
        g.parents[sink] = set()
    return Dag(p.nodes, arcs)


def is_extensible(p: Pdag) -> bool:
    try:
        extend_to_dag(p)
    except (InvalidCpdag, CycleError):
        return False
    return True


@dataclass(frozen=True)
class ShdReport:
    raw: int
    scaled: float


def shd(learned: Pdag | Dag, reference: Pdag | Dag, reference_arcs: int) -> ShdReport:
    """Structural Hamming distance, one unit per differing node pair."""
    if isinstance(learned, Dag):
        learned = learned.to_pdag()
    if isinstance(reference, Dag):
        reference = reference.to_pdag()
    if set(learned.nodes) != set(reference.nodes):
        raise ValueError("graphs are defined over different node sets")
    if reference_arcs <= 0:
        raise ValueError("reference_arcs must be positive")
    pairs = learned.skeleton() | reference.skeleton()
    raw = 0
    for e in pairs:
        a, b = sorted(e)
        if learned.edge_status(a, b) != reference.edge_status(a, b):
            raw += 1
    return ShdReport(raw, raw / reference_arcs)


def unshielded_vstructure_ratio(g: Dag) -> float:
    """Unshielded colliders over the number of arc pairs sharing a node."""
    pairs = 0
    for n in g.nodes:
        deg = len(g.parents(n)) + len(g.children(n))
        pairs += deg * (deg - 1) // 2
    if pairs == 0:
        raise ValueError("graph has no adjacent pair of arcs")
    return len(g.vstructures()) / pairs


def random_dag(nodes: Sequence[str], n_arcs: int, rng: np.random.Generator, max_tries: int = 10_000) -> Dag:
    """Uniform draw among DAGs with exactly ``n_arcs`` arcs (rejection sampling).

    Practical only when the graph is sparse enough for cycles to be rare.
    """
    nodes = list(nodes)
    n = len(nodes)
    total = n * (n - 1) // 2
    if n_arcs > total:
        raise ValueError("too many arcs for the node count")
    for _ in range(max_tries):
        picks = rng.choice(total, size=n_arcs, replace=False)
        iu = np.triu_indices(n, 1)
        flips = rng.random(n_arcs) < 0.5
        arcs = []
        for k, flip in zip(picks, flips):
            i, j = nodes[iu[0][k]], nodes[iu[1][k]]
            arcs.append((j, i) if flip else (i, j))
        if not _has_directed_cycle(nodes, arcs):
            return Dag(nodes, arcs)
    raise RuntimeError("rejection sampling failed; graph too dense")


# -- text serialisation ---------------------------------------------------

def dumps(g: Dag | Pdag) -> str:
    lines = ["nodes " + " ".join(g.nodes)]
    if isinstance(g, Dag):
        directed, undirected = g.arcs, ()
    else:
        directed, undirected = g.directed, g.undirected
    key = lambda e: (g.index[e[0]], g.index[e[1]])
    for a, b in sorted(directed, key=key):
        lines.append(f"arc {a} {b}")
    for a, b in sorted((tuple(sorted(e, key=g.index.__getitem__)) for e in undirected), key=key):
        lines.append(f"edge {a} {b}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Dag | Pdag:
    """Parse the ``nodes``/``arc``/``edge`` line format.

    Returns a :class:`Dag` when there are no undirected edges.
    """
    nodes = None
    arcs, edges = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        kind = tok[0]
        if kind == "nodes":
            nodes = tok[1:]
        elif kind in ("arc", "edge") and len(tok) == 3:
            (arcs if kind == "arc" else edges).append((tok[1], tok[2]))
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    if nodes is None:
        raise ValueError("missing 'nodes' line")
    if edges:
        return Pdag(nodes, arcs, edges)
    return Dag(nodes, arcs)
