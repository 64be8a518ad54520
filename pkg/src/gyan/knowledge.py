"""Knowledge nets and knowledge stores.

A knowledge net is the decoupled half of the architecture: normalized
concepts and relations (hypernym posets), contextual frames, a relational
calculus, and three typed nets (semantic, episodic, procedural) whose edges
carry full physical traces.  A knowledge store adds the per-document meaning
graphs of a collection plus the indexes that accelerate search over them.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources as importlib_resources
from pathlib import Path

from .discourse import DiscourseModel, builtin_models, model_from_dict, model_to_dict
from .errors import (
    ChecksumError,
    CycleError,
    GyanError,
    NotFoundError,
    StoreVersionError,
    ValidationError,
)
from .graph import (
    Calculus,
    ConceptDef,
    ContextFrame,
    EdgeKind,
    ProceduralContext,
    RelationDef,
    Trace,
    TypedGraph,
    Universe,
    UNIVERSAL_FRAME,
    graphs_isomorphic,
    wl_multiset,
)
from .linguistics import noun_lemma, verb_lemma
from .sources import SourceFile

STORE_SCHEMA = "ks v1"


# ---------------------------------------------------------------------------
# Frame registry
# ---------------------------------------------------------------------------


@dataclass
class FrameKeySpec:
    values: set[str] = field(default_factory=set)
    pattern: str | None = None

    def allows(self, value: str) -> bool:
        if value in self.values:
            return True
        return self.pattern is not None and re.fullmatch(self.pattern, value) is not None


class FrameRegistry:
    """Registered primitive-frame keys/values plus named frames."""

    def __init__(self):
        self.keys: dict[str, FrameKeySpec] = {}
        self.named: dict[str, ContextFrame] = {}

    def copy(self) -> "FrameRegistry":
        out = FrameRegistry()
        out.keys = {k: FrameKeySpec(set(v.values), v.pattern) for k, v in self.keys.items()}
        out.named = dict(self.named)
        return out

    def allows(self, key: str, value: str) -> bool:
        spec = self.keys.get(key)
        return spec is not None and spec.allows(value)

    def frame_is_registered(self, frame: ContextFrame) -> bool:
        return all(self.allows(k, v) for k, v in frame.assignments)

    def name_of(self, frame: ContextFrame) -> str | None:
        for name in sorted(self.named):
            if self.named[name] == frame:
                return name
        return None

    def to_dict(self) -> dict:
        return {
            "keys": {
                k: {"values": sorted(v.values), "pattern": v.pattern}
                for k, v in sorted(self.keys.items())
            },
            "named": {n: f.to_dict() for n, f in sorted(self.named.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRegistry":
        out = cls()
        for k, spec in d.get("keys", {}).items():
            out.keys[k] = FrameKeySpec(set(spec.get("values", [])), spec.get("pattern"))
        for n, f in d.get("named", {}).items():
            out.named[n] = ContextFrame.from_dict(f)
        return out

    def merged(self, other: "FrameRegistry") -> "FrameRegistry":
        out = self.copy()
        for k, spec in other.keys.items():
            mine = out.keys.setdefault(k, FrameKeySpec())
            mine.values |= spec.values
            mine.pattern = mine.pattern or spec.pattern
        for n, f in other.named.items():
            if n in out.named and out.named[n] != f:
                out.named[f"{n}@2"] = f
            else:
                out.named.setdefault(n, f)
        return out

    def __eq__(self, other):
        return isinstance(other, FrameRegistry) and self.to_dict() == other.to_dict()


# ---------------------------------------------------------------------------
# Collections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DocRef:
    id: str
    name: str
    sha256: str
    size: int
    attrs: tuple[tuple[str, str], ...] = ()

    def attr(self, key: str) -> str | None:
        return dict(self.attrs).get(key)


@dataclass(frozen=True)
class ExpertRef:
    id: str
    name: str
    attrs: tuple[tuple[str, str], ...] = ()


def doc_ref_for(file: SourceFile, **attrs: str) -> DocRef:
    merged = {str(k): str(v) for k, v in file.attrs.items()}
    merged.update({k: str(v) for k, v in attrs.items()})
    return DocRef(file.id, file.name, file.digest(), len(file.data), tuple(sorted(merged.items())))


# ---------------------------------------------------------------------------
# The knowledge net
# ---------------------------------------------------------------------------


@dataclass
class KnowledgeNet:
    concepts: Universe
    relations: Universe
    frames: FrameRegistry
    calculus: Calculus
    semantic_net: TypedGraph
    episodic_net: TypedGraph
    procedural_net: TypedGraph
    dm_universe: dict[str, DiscourseModel]
    doc_collection: dict[str, DocRef]
    expert_collection: dict[str, ExpertRef]
    build_report: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self._concept_index: dict[str, str] | None = None
        self._relation_index: dict[str, str] | None = None

    # -- lookups -------------------------------------------------------------

    def _build_concept_index(self) -> dict[str, str]:
        index: dict[str, str] = {}
        for definition in self.concepts.sorted_defs():
            names = [definition.id]
            synonyms = definition.attr("synonyms")
            if synonyms:
                names.extend(s.strip() for s in synonyms.split(",") if s.strip())
            for name in names:
                for variant in {name.lower(), _lemma_phrase(name)}:
                    index.setdefault(variant, definition.id)
        return index

    def _build_relation_index(self) -> dict[str, str]:
        index: dict[str, str] = {}
        for definition in self.relations.sorted_defs():
            index.setdefault(definition.id, definition.id)
            for lemma in (definition.spec or "").split(","):
                lemma = lemma.strip()
                if lemma:
                    index.setdefault(lemma, definition.id)
        return index

    def invalidate_indexes(self) -> None:
        self._concept_index = None
        self._relation_index = None

    def concept_lookup(self, phrase: str) -> str | None:
        if self._concept_index is None:
            self._concept_index = self._build_concept_index()
        lowered = phrase.lower().strip()
        return self._concept_index.get(lowered) or self._concept_index.get(_lemma_phrase(lowered))

    def relation_lookup(self, lemma: str) -> str | None:
        if self._relation_index is None:
            self._relation_index = self._build_relation_index()
        return self._relation_index.get(lemma.lower().strip())

    def frame_name(self, frame: ContextFrame) -> str | None:
        return self.frames.name_of(frame)

    # -- invariants ------------------------------------------------------------

    def validate(self) -> None:
        for edge in self.semantic_net.edges():
            if not edge.frame.is_universal:
                raise ValidationError("semantic net edges must carry the empty frame")
        for edge in self.procedural_net.edges():
            if edge.procedural is None:
                raise ValidationError("procedural net edges must carry procedural context")
        for net in (self.semantic_net, self.episodic_net, self.procedural_net):
            for edge in net.edges():
                if edge.trace is None:
                    raise ValidationError("net edges must carry a trace")
                for variant in edge.trace.doc_variants():
                    if variant.file_id not in self.doc_collection:
                        raise ValidationError(f"trace file {variant.file_id!r} not in collection")
                for variant in edge.trace.variants:
                    expert = getattr(variant, "expert_id", None)
                    if expert is not None and expert not in self.expert_collection:
                        raise ValidationError(f"trace expert {expert!r} not in collection")

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        def universe_dict(u: Universe) -> list[dict]:
            out = []
            for d in u.sorted_defs():
                entry = {"id": d.id, "hypernyms": sorted(d.hypernyms), "attrs": dict(d.attrs)}
                if isinstance(d, ConceptDef):
                    entry["spec_text"] = d.spec_text
                else:
                    entry["spec"] = d.spec
                out.append(entry)
            return out

        return {
            "schema": STORE_SCHEMA,
            "concepts": universe_dict(self.concepts),
            "relations": universe_dict(self.relations),
            "frames": self.frames.to_dict(),
            "calculus": self.calculus.to_dict(),
            "semantic_net": self.semantic_net.to_dict(),
            "episodic_net": self.episodic_net.to_dict(),
            "procedural_net": self.procedural_net.to_dict(),
            "dm_universe": [model_to_dict(self.dm_universe[k]) for k in sorted(self.dm_universe)],
            "doc_collection": [
                {"id": d.id, "name": d.name, "sha256": d.sha256, "size": d.size, "attrs": dict(d.attrs)}
                for _, d in sorted(self.doc_collection.items())
            ],
            "expert_collection": [
                {"id": e.id, "name": e.name, "attrs": dict(e.attrs)}
                for _, e in sorted(self.expert_collection.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeNet":
        concepts = Universe("concept")
        for entry in d.get("concepts", []):
            concepts.add(
                ConceptDef(entry["id"], entry.get("spec_text", entry["id"]),
                           hypernyms=frozenset(entry.get("hypernyms", [])),
                           attrs=tuple(sorted((entry.get("attrs") or {}).items())))
            )
        relations = Universe("relation")
        for entry in d.get("relations", []):
            relations.add(
                RelationDef(entry["id"], entry.get("spec", ""),
                            hypernyms=frozenset(entry.get("hypernyms", [])),
                            attrs=tuple(sorted((entry.get("attrs") or {}).items())))
            )
        return cls(
            concepts=concepts,
            relations=relations,
            frames=FrameRegistry.from_dict(d.get("frames", {})),
            calculus=Calculus.from_dict(d.get("calculus", {})),
            semantic_net=TypedGraph.from_dict(d.get("semantic_net", {})),
            episodic_net=TypedGraph.from_dict(d.get("episodic_net", {})),
            procedural_net=TypedGraph.from_dict(d.get("procedural_net", {})),
            dm_universe={m["id"]: model_from_dict(m) for m in d.get("dm_universe", [])},
            doc_collection={
                e["id"]: DocRef(e["id"], e["name"], e["sha256"], e["size"],
                                tuple(sorted((e.get("attrs") or {}).items())))
                for e in d.get("doc_collection", [])
            },
            expert_collection={
                e["id"]: ExpertRef(e["id"], e["name"], tuple(sorted((e.get("attrs") or {}).items())))
                for e in d.get("expert_collection", [])
            },
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    def __eq__(self, other):
        return isinstance(other, KnowledgeNet) and self.to_dict() == other.to_dict()

    def copy(self) -> "KnowledgeNet":
        return KnowledgeNet.from_dict(self.to_dict())


def _lemma_phrase(phrase: str) -> str:
    words = phrase.lower().split()
    if not words:
        return ""
    return " ".join(words[:-1] + [noun_lemma(words[-1])])


# ---------------------------------------------------------------------------
# Null knowledge net
# ---------------------------------------------------------------------------


def _seed_payload(name: str) -> dict:
    path = importlib_resources.files("gyan.resources").joinpath("seed", name)
    try:
        return json.loads(path.read_text("utf-8"))
    except FileNotFoundError as err:
        raise GyanError(f"missing seed file {name!r}: reinstall the package") from err


def null_kn() -> KnowledgeNet:
    """A knowledge net with the base concept/relation/frame universes loaded
    and all three nets empty: the bootstrapping point for every build."""
    concepts = Universe("concept")
    for entry in _seed_payload("concepts.json")["concepts"]:
        concepts.add(
            ConceptDef(entry["id"], entry["spec_text"],
                       hypernyms=frozenset(entry.get("hypernyms", [])),
                       attrs=tuple(sorted((entry.get("attrs") or {}).items())))
        )
    relations = Universe("relation")
    for entry in _seed_payload("relations.json")["relations"]:
        relations.add(
            RelationDef(entry["id"], entry.get("spec", ""),
                        hypernyms=frozenset(entry.get("hypernyms", [])),
                        attrs=tuple(sorted((entry.get("attrs") or {}).items())))
        )
    frames_payload = _seed_payload("frames.json")
    frames = FrameRegistry.from_dict(frames_payload)
    calculus = Calculus.from_dict(_seed_payload("calculus.json"))
    return KnowledgeNet(
        concepts=concepts,
        relations=relations,
        frames=frames,
        calculus=calculus,
        semantic_net=TypedGraph(),
        episodic_net=TypedGraph(),
        procedural_net=TypedGraph(),
        dm_universe={m.id: m for m in builtin_models()},
        doc_collection={},
        expert_collection={},
    )
