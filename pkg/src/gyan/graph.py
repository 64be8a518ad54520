"""Typed attributed graphs, hypernym posets, contextual frames and the
relational calculus.

This is the substrate everything else builds on: concept/relation universes
ordered by hypernymy, context frames that scope an edge's validity, graphs
whose edges carry full physical traces, forward-chaining deductive closure,
and the plain (non-inferential) isomorphism and subgraph-matching primitives.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    ClosureTruncated,
    CycleError,
    NotFoundError,
    ValidationError,
)

# ---------------------------------------------------------------------------
# Contextual frames
# ---------------------------------------------------------------------------

PRIMITIVE_FRAME_KEYS = ("temporal", "spatial", "modality", "deontic", "aspectual", "polarity")


@dataclass(frozen=True)
class ContextFrame:
    """A bundle of primitive-frame assignments scoping an edge's validity.

    Absent keys are unconstrained; the empty frame is the universal frame.
    """

    assignments: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        seen = set()
        for key, value in self.assignments:
            if key not in PRIMITIVE_FRAME_KEYS:
                raise ValidationError(f"unknown frame key {key!r}")
            if key in seen:
                raise ValidationError(f"duplicate frame key {key!r}")
            seen.add(key)
        # canonical ordering so equal frames compare and hash equal
        object.__setattr__(self, "assignments", tuple(sorted(self.assignments)))

    @classmethod
    def of(cls, **kv: str) -> "ContextFrame":
        return cls(tuple(kv.items()))

    @classmethod
    def from_dict(cls, d: dict) -> "ContextFrame":
        return cls(tuple(d.items()))

    def to_dict(self) -> dict:
        return dict(self.assignments)

    def get(self, key: str) -> str | None:
        return dict(self.assignments).get(key)

    @property
    def is_universal(self) -> bool:
        return not self.assignments

    def subsumes(self, other: "ContextFrame") -> bool:
        """True iff every constraint here also holds in ``other``.

        A frame with fewer constraints is more general: the universal frame
        subsumes everything.  Matching uses pattern.subsumes(target), so an
        unconstrained pattern key matches anything while a constrained one
        requires the target to carry the same value.
        """
        return set(self.assignments) <= set(other.assignments)

    def merged(self, other: "ContextFrame") -> "ContextFrame | None":
        """Conjunction of two frames; None if they conflict on a key."""
        combined = dict(self.assignments)
        for key, value in other.assignments:
            if combined.get(key, value) != value:
                return None
            combined[key] = value
        return ContextFrame(tuple(combined.items()))


UNIVERSAL_FRAME = ContextFrame()


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DocVariant:
    """Physical provenance: byte ranges inside one source file."""

    file_id: str
    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        rs = tuple((int(a), int(b)) for a, b in self.ranges)
        for a, b in rs:
            if a < 0 or b < a:
                raise ValidationError(f"bad byte range ({a}, {b})")
        for (a1, b1), (a2, b2) in itertools.combinations(sorted(rs), 2):
            if a2 < b1:
                raise ValidationError("overlapping byte ranges in one trace variant")
        object.__setattr__(self, "ranges", rs)

    def sort_key(self):
        return ("doc", self.file_id, self.ranges)


@dataclass(frozen=True)
class ExpertVariant:
    """Human-asserted provenance."""

    expert_id: str
    comment: str = ""

    def sort_key(self):
        return ("expert", self.expert_id, self.comment)


@dataclass(frozen=True)
class RuleVariant:
    """Inference provenance: the rule and the premise edges it consumed."""

    rule_id: str
    premises: tuple[str, ...]

    def sort_key(self):
        return ("rule", self.rule_id, self.premises)


TraceVariant = DocVariant | ExpertVariant | RuleVariant


@dataclass(frozen=True)
class Trace:
    """A non-empty set of provenance variants for one edge or occurrence."""

    variants: tuple[TraceVariant, ...]

    def __post_init__(self):
        if not self.variants:
            raise ValidationError("trace must have at least one variant")
        unique = sorted(set(self.variants), key=lambda v: v.sort_key())
        object.__setattr__(self, "variants", tuple(unique))

    @classmethod
    def doc(cls, file_id: str, *ranges: tuple[int, int]) -> "Trace":
        return cls((DocVariant(file_id, tuple(ranges)),))

    @classmethod
    def expert(cls, expert_id: str, comment: str = "") -> "Trace":
        return cls((ExpertVariant(expert_id, comment),))

    def merged(self, other: "Trace | None") -> "Trace":
        if other is None:
            return self
        return Trace(self.variants + other.variants)

    def doc_variants(self) -> list[DocVariant]:
        return [v for v in self.variants if isinstance(v, DocVariant)]

    def rule_variants(self) -> list[RuleVariant]:
        return [v for v in self.variants if isinstance(v, RuleVariant)]


def merge_traces(a: Trace | None, b: Trace | None) -> Trace | None:
    if a is None:
        return b
    return a.merged(b)


# ---------------------------------------------------------------------------
# Universes (hypernym posets)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConceptDef:
    """A normalized concept: identity, specification, place in the poset."""

    id: str
    spec_text: str
    spec_audio: str | None = None
    spec_visual: str | None = None
    hypernyms: frozenset[str] = frozenset()
    attrs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.spec_text:
            raise ValidationError(f"concept {self.id!r} has empty spec_text")
        object.__setattr__(self, "hypernyms", frozenset(self.hypernyms))
        object.__setattr__(self, "attrs", tuple(sorted(self.attrs)))

    def attr(self, key: str) -> str | None:
        return dict(self.attrs).get(key)


@dataclass(frozen=True)
class RelationDef:
    """A normalized relation: detection spec plus its place in the poset."""

    id: str
    spec: str = ""
    hypernyms: frozenset[str] = frozenset()
    attrs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hypernyms", frozenset(self.hypernyms))
        object.__setattr__(self, "attrs", tuple(sorted(self.attrs)))

    def attr(self, key: str) -> str | None:
        return dict(self.attrs).get(key)


class Universe:
    """A registry of defs whose hypernym references form a DAG.

    Mutable while building; ``freeze()`` locks it for shared read access.
    Used both for concepts (N) and relations (R).
    """

    def __init__(self, kind: str = "concept"):
        self.kind = kind
        self._defs: dict[str, ConceptDef | RelationDef] = {}
        self._frozen = False
        self._ancestor_cache: dict[str, frozenset[str]] = {}

    def __contains__(self, def_id: str) -> bool:
        return def_id in self._defs

    def __len__(self) -> int:
        return len(self._defs)

    def __iter__(self):
        return iter(sorted(self._defs))

    def get(self, def_id: str):
        try:
            return self._defs[def_id]
        except KeyError:
            raise NotFoundError(f"unknown {self.kind} id {def_id!r}") from None

    def add(self, definition: ConceptDef | RelationDef) -> None:
        if self._frozen:
            raise ValidationError(f"{self.kind} universe is frozen")
        if definition.id in self._defs:
            raise ValidationError(f"duplicate {self.kind} id {definition.id!r}")
        self._defs[definition.id] = definition
        if self._would_cycle(definition.id):
            del self._defs[definition.id]
            raise CycleError(f"hypernym cycle through {definition.id!r}")
        self._ancestor_cache.clear()

    def freeze(self) -> "Universe":
        self._frozen = True
        return self

    def _would_cycle(self, start: str) -> bool:
        seen, stack = set(), [start]
        while stack:
            current = stack.pop()
            for parent in self._defs.get(current, _EMPTY_DEF).hypernyms:
                if parent == start:
                    return True
                if parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return False

    def ancestors(self, def_id: str) -> frozenset[str]:
        """All strict hypernym ancestors (not including ``def_id`` itself)."""
        if def_id not in self._defs:
            raise NotFoundError(f"unknown {self.kind} id {def_id!r}")
        cached = self._ancestor_cache.get(def_id)
        if cached is not None:
            return cached
        out: set[str] = set()
        stack = [def_id]
        while stack:
            for parent in self._defs[stack.pop()].hypernyms:
                if parent not in out and parent in self._defs:
                    out.add(parent)
                    stack.append(parent)
        result = frozenset(out)
        self._ancestor_cache[def_id] = result
        return result

    def descendants(self, def_id: str) -> frozenset[str]:
        if def_id not in self._defs:
            raise NotFoundError(f"unknown {self.kind} id {def_id!r}")
        return frozenset(d for d in self._defs if def_id in self.ancestors(d))

    def minimal_hypernym(self, def_id: str) -> str | None:
        """The least direct hypernym: drop any parent that is an ancestor of
        another parent, then take the lexicographically least id."""
        parents = {p for p in self.get(def_id).hypernyms if p in self._defs}
        minimal = {p for p in parents if not any(p in self.ancestors(q) for q in parents if q != p)}
        return min(minimal) if minimal else None

    def sorted_defs(self):
        return [self._defs[i] for i in sorted(self._defs)]


_EMPTY_DEF = ConceptDef(id="__missing__", spec_text="missing")

ConceptUniverse = Universe
RelationUniverse = Universe


def is_hypernym(ancestor: str, descendant: str, universe: Universe) -> bool:
    """True iff ``ancestor`` is reachable from ``descendant`` via hypernym
    references.  Reflexive: everything is a hypernym of itself."""
    if ancestor not in universe:
        raise NotFoundError(f"unknown {universe.kind} id {ancestor!r}")
    if descendant not in universe:
        raise NotFoundError(f"unknown {universe.kind} id {descendant!r}")
    return ancestor == descendant or ancestor in universe.ancestors(descendant)


# ---------------------------------------------------------------------------
# Typed graphs
# ---------------------------------------------------------------------------


class EdgeKind(str, Enum):
    UNKNOWN = "Unknown"
    SEMANTIC = "Semantic"
    EPISODIC = "Episodic"
    PROCEDURAL = "Procedural"


@dataclass(frozen=True)
class ProceduralContext:
    """Extra scoping carried only by procedural edges."""

    frame: ContextFrame = UNIVERSAL_FRAME
    sequence: int | None = None
    conditionality: str | None = None
    preconditions: tuple[str, ...] = ()
    postconditions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sequence is not None and self.sequence < 0:
            raise ValidationError("procedural sequence must be >= 0")


@dataclass(frozen=True)
class Node:
    """A graph node: a concept reference or a literal label.

    Labels starting with ``?`` denote variables (query graphs only).
    """

    id: str
    label: str
    attrs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple(sorted(self.attrs)))

    @property
    def is_variable(self) -> bool:
        return self.label.startswith("?")


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    relation: str
    frame: ContextFrame = UNIVERSAL_FRAME
    trace: Trace | None = None
    kind: EdgeKind = EdgeKind.UNKNOWN
    procedural: ProceduralContext | None = None

    def __post_init__(self):
        if (self.kind == EdgeKind.PROCEDURAL) != (self.procedural is not None):
            raise ValidationError("edge kind is Procedural iff procedural context present")

    @property
    def key(self) -> str:
        frame = ",".join(f"{k}={v}" for k, v in self.frame.assignments)
        return f"{self.src}|{self.relation}|{self.dst}|{frame}|{self.kind.value}"

    def with_trace(self, trace: Trace | None) -> "Edge":
        return Edge(self.src, self.dst, self.relation, self.frame, trace, self.kind, self.procedural)


class TypedGraph:
    """A typed attributed multigraph with deterministic iteration order.

    Edge identity is (src, relation, dst, frame, kind); re-adding an existing
    edge merges traces instead of duplicating.  Mutable while building, then
    ``freeze()`` makes it safe to share.
    """

    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._edges: dict[str, Edge] = {}
        self._frozen = False

    # -- construction ------------------------------------------------------

    def add_node(self, node_id: str, label: str | None = None, attrs: dict | None = None) -> Node:
        self._check_mutable()
        existing = self._nodes.get(node_id)
        if existing is not None:
            if label is not None and existing.label != label:
                raise ValidationError(f"node {node_id!r} already has label {existing.label!r}")
            return existing
        node = Node(node_id, label if label is not None else node_id, tuple((attrs or {}).items()))
        self._nodes[node_id] = node
        return node

    def add_edge(
        self,
        src: str,
        dst: str,
        relation: str,
        *,
        frame: ContextFrame = UNIVERSAL_FRAME,
        trace: Trace | None = None,
        kind: EdgeKind = EdgeKind.UNKNOWN,
        procedural: ProceduralContext | None = None,
    ) -> Edge:
        self._check_mutable()
        if src not in self._nodes:
            self.add_node(src)
        if dst not in self._nodes:
            self.add_node(dst)
        edge = Edge(src, dst, relation, frame, trace, kind, procedural)
        existing = self._edges.get(edge.key)
        if existing is not None:
            edge = existing.with_trace(merge_traces(existing.trace, trace))
        self._edges[edge.key] = edge
        return edge

    def add(self, edge: Edge) -> Edge:
        return self.add_edge(
            edge.src, edge.dst, edge.relation,
            frame=edge.frame, trace=edge.trace, kind=edge.kind, procedural=edge.procedural,
        )

    def freeze(self) -> "TypedGraph":
        self._frozen = True
        return self

    def _check_mutable(self):
        if self._frozen:
            raise ValidationError("graph is frozen")

    def copy(self) -> "TypedGraph":
        g = TypedGraph()
        g._nodes = dict(self._nodes)
        g._edges = dict(self._edges)
        return g

    # -- access ------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def has_edge_key(self, key: str) -> bool:
        return key in self._edges

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id!r}") from None

    def nodes(self) -> list[Node]:
        return [self._nodes[i] for i in sorted(self._nodes)]

    def edges(self) -> list[Edge]:
        return [self._edges[k] for k in sorted(self._edges)]

    def edge_by_key(self, key: str) -> Edge:
        try:
            return self._edges[key]
        except KeyError:
            raise NotFoundError(f"unknown edge {key!r}") from None

    def out_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges() if e.src == node_id]

    def in_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges() if e.dst == node_id]

    def degree(self, node_id: str) -> int:
        return sum(1 for e in self._edges.values() if node_id in (e.src, e.dst))

    def edge_keys(self) -> frozenset[str]:
        return frozenset(self._edges)

    def variables(self) -> list[str]:
        return [n.id for n in self.nodes() if n.is_variable]

    def relations_used(self) -> frozenset[str]:
        return frozenset(e.relation for e in self._edges.values())

    def labels_used(self) -> frozenset[str]:
        return frozenset(n.label for n in self._nodes.values() if not n.is_variable)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "label": n.label, "attrs": dict(n.attrs)} for n in self.nodes()
            ],
            "edges": [_edge_to_dict(e) for e in self.edges()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TypedGraph":
        g = cls()
        for n in d.get("nodes", []):
            g.add_node(n["id"], n.get("label"), n.get("attrs") or {})
        for e in d.get("edges", []):
            g.add(_edge_from_dict(e))
        return g

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TypedGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    def __repr__(self):
        return f"TypedGraph(nodes={self.node_count}, edges={self.edge_count})"


def _edge_to_dict(e: Edge) -> dict:
    d = {
        "src": e.src,
        "dst": e.dst,
        "relation": e.relation,
        "frame": e.frame.to_dict(),
        "kind": e.kind.value,
    }
    if e.trace is not None:
        d["trace"] = trace_to_dict(e.trace)
    if e.procedural is not None:
        p = e.procedural
        d["procedural"] = {
            "frame": p.frame.to_dict(),
            "sequence": p.sequence,
            "conditionality": p.conditionality,
            "preconditions": list(p.preconditions),
            "postconditions": list(p.postconditions),
        }
    return d


def _edge_from_dict(d: dict) -> Edge:
    procedural = None
    if d.get("procedural") is not None:
        p = d["procedural"]
        procedural = ProceduralContext(
            frame=ContextFrame.from_dict(p.get("frame") or {}),
            sequence=p.get("sequence"),
            conditionality=p.get("conditionality"),
            preconditions=tuple(p.get("preconditions") or ()),
            postconditions=tuple(p.get("postconditions") or ()),
        )
    return Edge(
        src=d["src"],
        dst=d["dst"],
        relation=d["relation"],
        frame=ContextFrame.from_dict(d.get("frame") or {}),
        trace=trace_from_dict(d["trace"]) if d.get("trace") else None,
        kind=EdgeKind(d.get("kind", "Unknown")),
        procedural=procedural,
    )


def trace_to_dict(t: Trace) -> list[dict]:
    out = []
    for v in t.variants:
        if isinstance(v, DocVariant):
            out.append({"type": "doc", "file": v.file_id, "ranges": [list(r) for r in v.ranges]})
        elif isinstance(v, ExpertVariant):
            out.append({"type": "expert", "expert": v.expert_id, "comment": v.comment})
        else:
            out.append({"type": "rule", "rule": v.rule_id, "premises": list(v.premises)})
    return out


def trace_from_dict(variants: list[dict]) -> Trace:
    parsed: list[TraceVariant] = []
    for v in variants:
        if v["type"] == "doc":
            parsed.append(DocVariant(v["file"], tuple(tuple(r) for r in v["ranges"])))
        elif v["type"] == "expert":
            parsed.append(ExpertVariant(v["expert"], v.get("comment", "")))
        elif v["type"] == "rule":
            parsed.append(RuleVariant(v["rule"], tuple(v["premises"])))
        else:
            raise ValidationError(f"unknown trace variant type {v['type']!r}")
    return Trace(tuple(parsed))


# ---------------------------------------------------------------------------
# Calculus: Horn-style inference rules and deductive closure
# ---------------------------------------------------------------------------


def _is_var(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True)
class EdgePattern:
    """One premise: subject/relation/object terms (constants or ``?vars``)
    plus an optional frame constraint that matched edges must carry."""

    subject: str
    relation: str
    object: str
    frame: ContextFrame | None = None


@dataclass(frozen=True)
class EdgeTemplate:
    """One conclusion over premise variables.  Without an explicit frame the
    derived edge inherits the conjunction of its premise frames."""

    subject: str
    relation: str
    object: str
    frame: ContextFrame | None = None
    kind: EdgeKind = EdgeKind.UNKNOWN


@dataclass(frozen=True)
class InferenceRule:
    """A range-restricted, negation-free Horn rule over edge patterns."""

    id: str
    premises: tuple[EdgePattern, ...]
    conclusions: tuple[EdgeTemplate, ...]

    def __post_init__(self):
        if not self.premises or not self.conclusions:
            raise ValidationError(f"rule {self.id!r} needs premises and conclusions")
        bound = set()
        for p in self.premises:
            bound.update(t for t in (p.subject, p.relation, p.object) if _is_var(t))
        for c in self.conclusions:
            for term in (c.subject, c.relation, c.object):
                if _is_var(term) and term not in bound:
                    raise ValidationError(
                        f"rule {self.id!r}: conclusion variable {term!r} not bound by any premise"
                    )


@dataclass(frozen=True)
class Calculus:
    """Axioms (structural rules such as hypernym transitivity) plus
    domain inference rules; both participate in closure identically."""

    axioms: tuple[InferenceRule, ...] = ()
    rules: tuple[InferenceRule, ...] = ()

    def __post_init__(self):
        ids = [r.id for r in self.axioms + self.rules]
        if len(ids) != len(set(ids)):
            raise ValidationError("duplicate rule ids in calculus")

    def all_rules(self) -> tuple[InferenceRule, ...]:
        return self.axioms + self.rules

    def merged(self, other: "Calculus") -> "Calculus":
        known = {r.id for r in self.all_rules()}
        axioms = self.axioms + tuple(r for r in other.axioms if r.id not in known)
        rules = self.rules + tuple(r for r in other.rules if r.id not in known)
        return Calculus(axioms, rules)

    def to_dict(self) -> dict:
        return {
            "axioms": [rule_to_dict(r) for r in self.axioms],
            "rules": [rule_to_dict(r) for r in self.rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calculus":
        return cls(
            axioms=tuple(rule_from_dict(r) for r in d.get("axioms", [])),
            rules=tuple(rule_from_dict(r) for r in d.get("rules", [])),
        )


EMPTY_CALCULUS = Calculus()


def rule_to_dict(r: InferenceRule) -> dict:
    def pat(p):
        d = {"s": p.subject, "r": p.relation, "o": p.object}
        if p.frame is not None:
            d["frame"] = p.frame.to_dict()
        return d

    def tmpl(c):
        d = {"s": c.subject, "r": c.relation, "o": c.object}
        if c.frame is not None:
            d["frame"] = c.frame.to_dict()
        if c.kind != EdgeKind.UNKNOWN:
            d["kind"] = c.kind.value
        return d

    return {
        "id": r.id,
        "premises": [pat(p) for p in r.premises],
        "conclusions": [tmpl(c) for c in r.conclusions],
    }


def rule_from_dict(d: dict) -> InferenceRule:
    premises = tuple(
        EdgePattern(
            p["s"], p["r"], p["o"],
            ContextFrame.from_dict(p["frame"]) if p.get("frame") else None,
        )
        for p in d["premises"]
    )
    conclusions = tuple(
        EdgeTemplate(
            c["s"], c["r"], c["o"],
            ContextFrame.from_dict(c["frame"]) if c.get("frame") else None,
            EdgeKind(c.get("kind", "Unknown")),
        )
        for c in d["conclusions"]
    )
    return InferenceRule(d["id"], premises, conclusions)


def _match_premises(premises: tuple[EdgePattern, ...], graph: TypedGraph):
    """Yield (bindings, matched-edges) for every way the ordered premises
    embed in the graph.  Deterministic: edges are scanned in sorted order."""
    edges = graph.edges()

    def extend(index: int, bindings: dict[str, str], used: list[Edge]):
        if index == len(premises):
            yield dict(bindings), list(used)
            return
        p = premises[index]
        for e in edges:
            trial = dict(bindings)
            ok = True
            for term, value in ((p.subject, e.src), (p.relation, e.relation), (p.object, e.dst)):
                if _is_var(term):
                    if trial.setdefault(term, value) != value:
                        ok = False
                        break
                elif term != value:
                    ok = False
                    break
            if ok and p.frame is not None and not p.frame.subsumes(e.frame):
                ok = False
            if ok:
                used.append(e)
                yield from extend(index + 1, trial, used)
                used.pop()

    yield from extend(0, {}, [])


def _instantiate(tmpl: EdgeTemplate, bindings: dict[str, str], premise_edges: list[Edge],
                 rule_id: str) -> Edge | None:
    def resolve(term: str) -> str:
        return bindings[term] if _is_var(term) else term

    if tmpl.frame is not None:
        frame = tmpl.frame
    else:
        frame = UNIVERSAL_FRAME
        for e in premise_edges:
            merged = frame.merged(e.frame)
            if merged is None:
                return None  # premise scopes conflict; the conjunction is empty
            frame = merged
    trace = Trace((RuleVariant(rule_id, tuple(e.key for e in premise_edges)),))
    return Edge(resolve(tmpl.subject), resolve(tmpl.object), resolve(tmpl.relation),
                frame=frame, trace=trace, kind=tmpl.kind)


def deductive_closure(g: TypedGraph, cal: Calculus, max_rounds: int = 32) -> TypedGraph:
    """Fixpoint of applying every calculus rule to the graph.

    Monotone, idempotent and order-independent on the resulting edge set.
    Derived edges carry a rule trace naming the rule and its premise edges.
    Raises ClosureTruncated (with the partial result) if ``max_rounds`` is
    reached before the fixpoint.
    """
    if max_rounds < 1:
        raise ValidationError("max_rounds must be positive")
    work = g.copy()
    rules = cal.all_rules()
    if not rules or work.edge_count == 0:
        return work.freeze()
    for _ in range(max_rounds):
        fresh: list[Edge] = []
        for rule in rules:
            for bindings, used in _match_premises(rule.premises, work):
                for tmpl in rule.conclusions:
                    edge = _instantiate(tmpl, bindings, used, rule.id)
                    if edge is not None and not work.has_edge_key(edge.key):
                        fresh.append(edge)
        if not fresh:
            return work.freeze()
        for edge in fresh:
            if not work.has_edge_key(edge.key):  # first derivation keeps its trace
                work.add(edge)
    # one final quiescence check: the cap counts rule-application rounds
    for rule in rules:
        for bindings, used in _match_premises(rule.premises, work):
            for tmpl in rule.conclusions:
                edge = _instantiate(tmpl, bindings, used, rule.id)
                if edge is not None and not work.has_edge_key(edge.key):
                    raise ClosureTruncated(work.freeze(), max_rounds)
    return work.freeze()


def derivation_depth(graph: TypedGraph, edge_key: str) -> int:
    """Inference depth of an edge in a closed graph: 0 for asserted edges,
    1 + max premise depth for derived ones."""
    memo: dict[str, int] = {}

    def depth(key: str) -> int:
        if key in memo:
            return memo[key]
        memo[key] = 0  # cycle guard; premises of a first derivation are older edges
        edge = graph.edge_by_key(key)
        rule_vs = edge.trace.rule_variants() if edge.trace else []
        if not rule_vs:
            memo[key] = 0
            return 0
        d = 1 + max((depth(p) for p in rule_vs[0].premises), default=0)
        memo[key] = d
        return d

    return depth(edge_key)


# ---------------------------------------------------------------------------
# Weisfeiler-Leman refinement signatures
# ---------------------------------------------------------------------------


def _h(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def wl_signature(g: TypedGraph, depth: int) -> dict[str, str]:
    """Iterated neighborhood-label refinement hashes per node.

    Equal signature multisets are a necessary condition for isomorphism;
    they never separate isomorphic graphs.
    """
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    sig = {n.id: _h(n.label) for n in g.nodes()}
    edges = g.edges()
    for _ in range(depth):
        nxt = {}
        for node_id in sig:
            outs = sorted(
                (e.relation, e.frame.assignments, e.kind.value, sig[e.dst])
                for e in edges if e.src == node_id
            )
            ins = sorted(
                (e.relation, e.frame.assignments, e.kind.value, sig[e.src])
                for e in edges if e.dst == node_id
            )
            nxt[node_id] = _h(sig[node_id], outs, ins)
        sig = nxt
    return sig


def wl_multiset(g: TypedGraph, depth: int = 2) -> tuple[str, ...]:
    return tuple(sorted(wl_signature(g, depth).values()))


# ---------------------------------------------------------------------------
# Isomorphism and subgraph matching
# ---------------------------------------------------------------------------


def _edge_index(g: TypedGraph) -> dict[tuple[str, str], list[Edge]]:
    idx: dict[tuple[str, str], list[Edge]] = {}
    for e in g.edges():
        idx.setdefault((e.src, e.dst), []).append(e)
    return idx


def graphs_isomorphic(g1: TypedGraph, g2: TypedGraph) -> bool:
    """Label-respecting isomorphism: a bijection preserving node labels and
    every edge's relation, frame and kind (traces are provenance, ignored)."""
    if g1.node_count != g2.node_count or g1.edge_count != g2.edge_count:
        return False
    labels1 = sorted(n.label for n in g1.nodes())
    labels2 = sorted(n.label for n in g2.nodes())
    if labels1 != labels2:
        return False
    if wl_multiset(g1) != wl_multiset(g2):
        return False

    nodes1 = [n.id for n in g1.nodes()]
    by_label: dict[str, list[str]] = {}
    for n in g2.nodes():
        by_label.setdefault(n.label, []).append(n.id)
    idx2 = _edge_index(g2)
    edges_of1: dict[str, list[Edge]] = {}
    for e in g1.edges():
        edges_of1.setdefault(e.src, []).append(e)
        edges_of1.setdefault(e.dst, []).append(e)

    def compatible(mapping: dict[str, str], n1: str) -> bool:
        for e in edges_of1.get(n1, []):
            if e.src in mapping and e.dst in mapping:
                candidates = idx2.get((mapping[e.src], mapping[e.dst]), [])
                if not any(
                    t.relation == e.relation and t.frame == e.frame and t.kind == e.kind
                    for t in candidates
                ):
                    return False
        return True

    def backtrack(i: int, mapping: dict[str, str], used: set[str]) -> bool:
        if i == len(nodes1):
            return True
        n1 = nodes1[i]
        for n2 in by_label.get(g1.node(n1).label, []):
            if n2 in used:
                continue
            mapping[n1] = n2
            used.add(n2)
            if compatible(mapping, n1) and backtrack(i + 1, mapping, used):
                return True
            del mapping[n1]
            used.discard(n2)
        return False

    return backtrack(0, {}, set())


def subgraph_matches(
    pattern: TypedGraph,
    target: TypedGraph,
    limit: int | None = None,
    *,
    relations: Universe | None = None,
) -> list[dict[str, str]]:
    """All injective node mappings embedding ``pattern`` into ``target``.

    A pattern node labelled ``?x`` matches any target node; a constant label
    must match exactly.  A pattern edge matches a target edge whose relation
    is the pattern relation or any hyponym of it (when a relation universe is
    given), whose frame carries every constraint the pattern frame does, and
    whose kind matches (Unknown in the pattern matches any kind).

    Mappings are returned in lexicographic order of mapped target node ids.
    """
    if pattern.node_count == 0:
        raise ValidationError("pattern must be non-empty")

    pattern_nodes = [n.id for n in pattern.nodes()]
    target_nodes = [n.id for n in target.nodes()]
    pattern_edges = pattern.edges()
    idx = _edge_index(target)

    def relation_ok(pat_rel: str, target_rel: str) -> bool:
        if pat_rel == target_rel:
            return True
        if relations is not None and pat_rel in relations and target_rel in relations:
            return is_hypernym(pat_rel, target_rel, relations)
        return False

    def edge_ok(p: Edge, mapping: dict[str, str]) -> bool:
        candidates = idx.get((mapping[p.src], mapping[p.dst]), [])
        for t in candidates:
            if (
                relation_ok(p.relation, t.relation)
                and p.frame.subsumes(t.frame)
                and (p.kind == EdgeKind.UNKNOWN or p.kind == t.kind)
            ):
                return True
        return False

    def node_ok(pn: Node, tn: Node) -> bool:
        return pn.is_variable or pn.label == tn.label

    results: list[dict[str, str]] = []

    def backtrack(i: int, mapping: dict[str, str], used: set[str]):
        if i == len(pattern_nodes):
            results.append(dict(mapping))
            return
        pid = pattern_nodes[i]
        pnode = pattern.node(pid)
        for tid in target_nodes:
            if tid in used or not node_ok(pnode, target.node(tid)):
                continue
            mapping[pid] = tid
            used.add(tid)
            if all(
                edge_ok(e, mapping)
                for e in pattern_edges
                if e.src in mapping and e.dst in mapping
            ):
                backtrack(i + 1, mapping, used)
            del mapping[pid]
            used.discard(tid)

    backtrack(0, {}, set())
    results.sort(key=lambda m: tuple(m[p] for p in pattern_nodes))
    return results[:limit] if limit is not None else results


def logically_equivalent(g1: TypedGraph, g2: TypedGraph, cal: Calculus, max_rounds: int = 32) -> bool:
    """Two graphs are logically equivalent when their deductive closures are
    isomorphic under a label-respecting mapping."""
    return graphs_isomorphic(
        deductive_closure(g1, cal, max_rounds),
        deductive_closure(g2, cal, max_rounds),
    )


# ---------------------------------------------------------------------------
# Stock structural rules
# ---------------------------------------------------------------------------

HYPERNYM_RELATION = "hypernym"

HYPERNYM_TRANSITIVITY = InferenceRule(
    id="ax.hypernym-transitivity",
    premises=(
        EdgePattern("?a", HYPERNYM_RELATION, "?b"),
        EdgePattern("?b", HYPERNYM_RELATION, "?c"),
    ),
    conclusions=(EdgeTemplate("?a", HYPERNYM_RELATION, "?c"),),
)

# Existential lift: anything true of a concept is true of (some of) its
# hypernym; lets queries phrased at a more abstract level match concrete facts.
SUBJECT_GENERALIZATION = InferenceRule(
    id="ir.subject-generalization",
    premises=(
        EdgePattern("?s", HYPERNYM_RELATION, "?g"),
        EdgePattern("?s", "?r", "?o"),
    ),
    conclusions=(EdgeTemplate("?g", "?r", "?o"),),
)

OBJECT_GENERALIZATION = InferenceRule(
    id="ir.object-generalization",
    premises=(
        EdgePattern("?o", HYPERNYM_RELATION, "?g"),
        EdgePattern("?s", "?r", "?o"),
    ),
    conclusions=(EdgeTemplate("?s", "?r", "?g"),),
)
