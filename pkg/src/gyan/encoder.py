"""The meaning-graph encoder: file + knowledge net -> document GMR.

The document GMR is a layered graph: discourse units over simplified
sentences, per-unit concept graphs whose nodes merge same-concept
occurrences, contextual frames scoping every edge, and byte-exact traces
from every occurrence back into the source file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

from .discourse import DiscourseModel, evaluate_rules, identify_discourse_model
from .errors import ConvergenceError, NotFoundError, StageError, ValidationError
from .graph import (
    ContextFrame,
    DocVariant,
    Edge,
    EdgeKind,
    ProceduralContext,
    Trace,
    TypedGraph,
    UNIVERSAL_FRAME,
)
from .linguistics import (
    AnnotatorContract,
    DocTree,
    SimplifiedSentence,
    annotate,
    default_annotator,
    extract,
    linguistic_analyze,
    noun_lemma,
    normalize_ws,
    sentence_segment,
    simplify,
)
from .sources import SourceFile

if TYPE_CHECKING:
    from .knowledge import KnowledgeNet

GMR_SCHEMA = "gmr v1"

LOCAL_PREFIX = "~"  # node/relation keys that failed normalization

PLURAL_PRONOUNS = {"they", "them", "these", "those", "both"}
SINGULAR_PRONOUNS = {"it", "this", "that"}
PERSON_PRONOUNS = {"he", "she", "him", "her"}
COREF_PRONOUNS = PLURAL_PRONOUNS | SINGULAR_PRONOUNS | PERSON_PRONOUNS
ORDINAL_OPENERS = {"first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5,
                   "then": 0, "next": 0, "afterwards": 0, "finally": 0, "lastly": 0}

STOP_CONCEPT_WORDS = {"one", "thing", "things", "way", "lot", "kind", "sort", "bit"}


def localized_key(name: str) -> str:
    return LOCAL_PREFIX + _phrase_lemma(name)


def _phrase_lemma(phrase: str) -> str:
    words = phrase.lower().split()
    if not words:
        return phrase.lower()
    return " ".join(words[:-1] + [noun_lemma(words[-1])])


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConceptOccurrence:
    """A surface mention: grounded to a normalized concept or localized."""

    id: str
    name: str
    norm: str | None
    key: str  # merge class: the norm, or a localized surrogate
    sentence: int
    span: tuple[int, int]  # char span in the simplified sentence text
    role: str  # subject | object | oblique | predicate | other
    trace: Trace
    attrs: tuple[tuple[str, str], ...] = ()

    def attr(self, k: str) -> str | None:
        return dict(self.attrs).get(k)


@dataclass(frozen=True)
class RelationCue:
    text: str
    span: tuple[int, int]
    sentence: int
    byte_ranges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class SentenceRecord:
    """Serializable snapshot of one simplified sentence."""

    index: int
    text: str
    block_id: str
    block_label: str
    section_path: tuple[str, ...]
    byte_ranges: tuple[tuple[int, int], ...]
    origin: int
    derivation: tuple[str, ...]
    features: tuple[tuple[str, str], ...]
    frame: tuple[tuple[str, str], ...]
    substituted: bool

    def feature(self, key: str) -> str | None:
        return dict(self.features).get(key)

    def context_frame(self) -> ContextFrame:
        return ContextFrame(self.frame)


@dataclass
class CueSentence:
    """A simplified sentence with its detected concepts and residual cues."""

    index: int
    simplified: SimplifiedSentence
    block_label: str = "_paragraph"
    section_path: tuple[str, ...] = ()
    concept_ids: list[str] = field(default_factory=list)
    cue_ids: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class DiscourseUnit:
    id: str
    name: str
    sentences: tuple[int, ...]
    attrs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.sentences:
            raise ValidationError(f"discourse unit {self.id!r} has no sentences")

    def attr(self, k: str) -> str | None:
        return dict(self.attrs).get(k)


@dataclass(frozen=True)
class DiscourseEdge:
    src: str
    dst: str
    name: str
    relation: str
    attrs: tuple[tuple[str, str], ...] = ()
    frame: ContextFrame = UNIVERSAL_FRAME
    frame_norm: str | None = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ValidationError("discourse edges never loop in the default model")


@dataclass(frozen=True)
class ConceptEdgeRec:
    """One concept-graph edge within a discourse unit."""

    du: str
    src_key: str
    dst_key: str
    name: str  # surface relation phrase (verb lemma, possibly verb_prep)
    relation_norm: str | None
    kind: EdgeKind
    sentences: tuple[int, ...]
    trace: Trace
    frame: ContextFrame | None = None  # None until contextual framing runs
    frame_norm: str | None = None
    sequence: int | None = None

    @property
    def localized(self) -> bool:
        return self.relation_norm is None

    @property
    def relation_label(self) -> str:
        return self.relation_norm if self.relation_norm is not None else LOCAL_PREFIX + self.name


@dataclass(frozen=True)
class FrameRecord:
    frame: ContextFrame
    norm: str | None


# ---------------------------------------------------------------------------
# The document GMR
# ---------------------------------------------------------------------------


@dataclass
class DocGMR:
    file_id: str
    file_digest: str
    dm_id: str
    sentences: tuple[SentenceRecord, ...]
    concepts: tuple[ConceptOccurrence, ...]
    cues: tuple[RelationCue, ...]
    dus: tuple[DiscourseUnit, ...]
    du_edges: tuple[DiscourseEdge, ...]
    edges: tuple[ConceptEdgeRec, ...]
    frames: tuple[FrameRecord, ...] = ()

    def __post_init__(self):
        self._du_graph_cache: dict[str, TypedGraph] = {}

    # -- navigation --------------------------------------------------------

    def du_by_id(self, du_id: str) -> DiscourseUnit:
        for du in self.dus:
            if du.id == du_id:
                return du
        raise NotFoundError(f"unknown discourse unit {du_id!r}")

    def concepts_of_du(self, du_id: str) -> list[ConceptOccurrence]:
        member = set(self.du_by_id(du_id).sentences)
        return [c for c in self.concepts if c.sentence in member]

    def du_edges_of(self, du_id: str) -> list[ConceptEdgeRec]:
        return [e for e in self.edges if e.du == du_id]

    def du_graph(self, du_id: str) -> TypedGraph:
        """The concept graph of a unit: nodes are merge classes, edges carry
        the normalized (or localized) relation labels."""
        cached = self._du_graph_cache.get(du_id)
        if cached is not None:
            return cached
        g = TypedGraph()
        for occurrence in self.concepts_of_du(du_id):
            if occurrence.key not in g:
                g.add_node(occurrence.key, occurrence.key, {"name": occurrence.name})
        for rec in self.du_edges_of(du_id):
            procedural = None
            kind = rec.kind
            if kind == EdgeKind.PROCEDURAL:
                procedural = ProceduralContext(sequence=rec.sequence)
            g.add_edge(
                rec.src_key, rec.dst_key, rec.relation_label,
                frame=rec.frame if rec.frame is not None else UNIVERSAL_FRAME,
                trace=rec.trace, kind=kind, procedural=procedural,
            )
        g.freeze()
        self._du_graph_cache[du_id] = g
        return g

    def du_byte_ranges(self, du_id: str) -> list[tuple[int, int]]:
        ixs = self.du_by_id(du_id).sentences
        ranges = [r for i in ixs for r in self.sentences[i].byte_ranges]
        ranges.sort()
        merged: list[tuple[int, int]] = []
        for a, b in ranges:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
            else:
                merged.append((a, b))
        return merged

    def du_text(self, du_id: str) -> str:
        return " ".join(self.sentences[i].text for i in self.du_by_id(du_id).sentences)

    def concept_keys(self) -> frozenset[str]:
        return frozenset(c.key for c in self.concepts)

    def localized_concepts(self) -> list[ConceptOccurrence]:
        return [c for c in self.concepts if c.norm is None]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": GMR_SCHEMA,
            "file": self.file_id,
            "file_digest": self.file_digest,
            "dm": self.dm_id,
            "sentences": [
                {
                    "index": s.index, "text": s.text, "block": s.block_id,
                    "block_label": s.block_label, "section_path": list(s.section_path),
                    "byte_ranges": [list(r) for r in s.byte_ranges],
                    "origin": s.origin, "derivation": list(s.derivation),
                    "features": dict(s.features), "frame": dict(s.frame),
                    "substituted": s.substituted,
                }
                for s in self.sentences
            ],
            "concepts": [
                {
                    "id": c.id, "name": c.name, "norm": c.norm, "key": c.key,
                    "sentence": c.sentence, "span": list(c.span), "role": c.role,
                    "trace": _trace_dict(c.trace), "attrs": dict(c.attrs),
                }
                for c in self.concepts
            ],
            "cues": [
                {"text": c.text, "span": list(c.span), "sentence": c.sentence,
                 "byte_ranges": [list(r) for r in c.byte_ranges]}
                for c in self.cues
            ],
            "dus": [
                {"id": d.id, "name": d.name, "sentences": list(d.sentences), "attrs": dict(d.attrs)}
                for d in self.dus
            ],
            "du_edges": [
                {"src": e.src, "dst": e.dst, "name": e.name, "relation": e.relation,
                 "attrs": dict(e.attrs), "frame": e.frame.to_dict(), "frame_norm": e.frame_norm}
                for e in self.du_edges
            ],
            "edges": [
                {
                    "du": e.du, "src": e.src_key, "dst": e.dst_key, "name": e.name,
                    "relation_norm": e.relation_norm, "kind": e.kind.value,
                    "sentences": list(e.sentences), "trace": _trace_dict(e.trace),
                    "frame": e.frame.to_dict() if e.frame is not None else None,
                    "frame_norm": e.frame_norm, "sequence": e.sequence,
                }
                for e in self.edges
            ],
            "frames": [
                {"frame": f.frame.to_dict(), "norm": f.norm} for f in self.frames
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocGMR":
        from .graph import trace_from_dict

        if d.get("schema") != GMR_SCHEMA:
            raise ValidationError(f"unsupported GMR schema {d.get('schema')!r}")
        return cls(
            file_id=d["file"],
            file_digest=d["file_digest"],
            dm_id=d["dm"],
            sentences=tuple(
                SentenceRecord(
                    s["index"], s["text"], s["block"], s["block_label"],
                    tuple(s["section_path"]), tuple(tuple(r) for r in s["byte_ranges"]),
                    s["origin"], tuple(s["derivation"]),
                    tuple(sorted(s["features"].items())), tuple(sorted(s["frame"].items())),
                    s["substituted"],
                )
                for s in d["sentences"]
            ),
            concepts=tuple(
                ConceptOccurrence(
                    c["id"], c["name"], c["norm"], c["key"], c["sentence"],
                    tuple(c["span"]), c["role"], trace_from_dict(c["trace"]),
                    tuple(sorted(c["attrs"].items())),
                )
                for c in d["concepts"]
            ),
            cues=tuple(
                RelationCue(c["text"], tuple(c["span"]), c["sentence"],
                            tuple(tuple(r) for r in c["byte_ranges"]))
                for c in d["cues"]
            ),
            dus=tuple(
                DiscourseUnit(u["id"], u["name"], tuple(u["sentences"]),
                              tuple(sorted(u["attrs"].items())))
                for u in d["dus"]
            ),
            du_edges=tuple(
                DiscourseEdge(e["src"], e["dst"], e["name"], e["relation"],
                              tuple(sorted(e["attrs"].items())),
                              ContextFrame.from_dict(e["frame"]), e["frame_norm"])
                for e in d["du_edges"]
            ),
            edges=tuple(
                ConceptEdgeRec(
                    e["du"], e["src"], e["dst"], e["name"], e["relation_norm"],
                    EdgeKind(e["kind"]), tuple(e["sentences"]), trace_from_dict(e["trace"]),
                    ContextFrame.from_dict(e["frame"]) if e["frame"] is not None else None,
                    e["frame_norm"], e["sequence"],
                )
                for e in d["edges"]
            ),
            frames=tuple(
                FrameRecord(ContextFrame.from_dict(f["frame"]), f["norm"]) for f in d["frames"]
            ),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def _trace_dict(t: Trace) -> list[dict]:
    from .graph import trace_to_dict

    return trace_to_dict(t)


# ---------------------------------------------------------------------------
# Concept detection, coreference, relation cues
# ---------------------------------------------------------------------------

_SKIP_SINGLE_POS = {"PUNCT", "DET", "ADP", "AUX", "CCONJ", "SCONJ", "PART", "ADV", "NUM", "VERB", "ADJ"}


def _candidate_spans(ss: SimplifiedSentence, kn: "KnowledgeNet"):
    """(token range, phrase, norm) candidates: longest KN matches first, then
    bare noun runs, then coreferring pronouns."""
    tokens = ss.annotated.tokens
    n = len(tokens)
    covered = [False] * n
    spans: list[tuple[int, int, str | None]] = []  # (first, last, norm)

    for start in range(n):
        if covered[start] or tokens[start].pos == "PUNCT":
            continue
        for width in range(min(5, n - start), 0, -1):
            window = tokens[start : start + width]
            if any(covered[start + k] for k in range(width)):
                continue
            if any(t.pos == "PUNCT" for t in window):
                continue
            if width == 1 and window[0].pos not in ("NOUN", "PROPN"):
                continue
            if width > 1 and not any(t.pos in ("NOUN", "PROPN") for t in window):
                continue
            phrase = " ".join(t.text for t in window)
            norm = kn.concept_lookup(phrase)
            if norm is not None:
                spans.append((start, start + width - 1, norm))
                for k in range(start, start + width):
                    covered[k] = True
                break

    # bare noun runs left uncovered
    start = None
    for i in range(n + 1):
        is_noun = i < n and tokens[i].pos in ("NOUN", "PROPN") and not covered[i]
        if is_noun and start is None:
            start = i
        elif not is_noun and start is not None:
            phrase = " ".join(t.text for t in tokens[start:i])
            if _phrase_lemma(phrase) not in STOP_CONCEPT_WORDS:
                spans.append((start, i - 1, None))
                for k in range(start, i):
                    covered[k] = True
            start = None

    # coreferring pronouns
    for i, t in enumerate(tokens):
        if not covered[i] and t.pos == "PRON" and t.text.lower() in COREF_PRONOUNS:
            spans.append((i, i, None))
            covered[i] = True

    spans.sort(key=lambda s: s[0])
    return spans, covered


def _token_role(ss: SimplifiedSentence, first: int, last: int) -> str:
    ann = ss.annotated
    for i in range(first, last + 1):
        label = ann.labels[i]
        if label in ("nsubj", "nsubjpass"):
            return "subject"
    for i in range(first, last + 1):
        if ann.labels[i] in ("obj", "attr"):
            return "object"
    for i in range(first, last + 1):
        if ann.labels[i] == "pobj":
            return "oblique"
    return "other"


def _plural_surface(name: str) -> bool:
    last = name.lower().split()[-1]
    return noun_lemma(last) != last


def concept_detect(
    us: list[SimplifiedSentence],
    kn: "KnowledgeNet",
    tree: DocTree | None = None,
) -> tuple[list[CueSentence], list[ConceptOccurrence], list[RelationCue]]:
    """Candidate concepts, coreference-resolved norms, and residual relation
    cues for every simplified sentence.

    Concept spans and cue spans together cover every token of a sentence, so
    the original text remains recoverable from their traces.
    """
    block_labels, section_paths = _structure_info(tree)
    sentences: list[CueSentence] = []
    occurrences: list[ConceptOccurrence] = []
    cues: list[RelationCue] = []

    for index, ss in enumerate(us):
        tokens = ss.annotated.tokens
        spans, covered = _candidate_spans(ss, kn)
        cs = CueSentence(
            index=index,
            simplified=ss,
            block_label=block_labels.get(ss.origin_sentence.block_id, "_paragraph"),
            section_path=section_paths.get(ss.origin_sentence.block_id, ()),
        )
        for first, last, norm in spans:
            name = ss.text[tokens[first].start : tokens[last].end]
            ranges = ss.span_to_bytes(tokens[first].start, tokens[last].end)
            modifiers = []
            j = first - 1
            while j >= 0 and tokens[j].pos == "ADJ":
                modifiers.insert(0, tokens[j].text)
                j -= 1
            attrs = {}
            if modifiers:
                attrs["modifiers"] = " ".join(modifiers)
            occurrence = ConceptOccurrence(
                id=f"c{len(occurrences)}",
                name=name,
                norm=norm,
                key=norm if norm is not None else localized_key(name),
                sentence=index,
                span=(tokens[first].start, tokens[last].end),
                role=_token_role(ss, first, last),
                trace=Trace((DocVariant(ss.file_id, tuple(ranges)),)),
                attrs=tuple(sorted(attrs.items())),
            )
            occurrences.append(occurrence)
            cs.concept_ids.append(occurrence.id)

        # residual cue spans: maximal uncovered token runs
        run_start = None
        for i in range(len(tokens) + 1):
            in_run = i < len(tokens) and not covered[i]
            if in_run and run_start is None:
                run_start = i
            elif not in_run and run_start is not None:
                a, b = tokens[run_start].start, tokens[i - 1].end
                cues.append(
                    RelationCue(
                        text=ss.text[a:b], span=(a, b), sentence=index,
                        byte_ranges=tuple(ss.span_to_bytes(a, b)),
                    )
                )
                cs.cue_ids.append(len(cues) - 1)
                run_start = None
        sentences.append(cs)

    _resolve_coreference(occurrences, kn)
    return sentences, occurrences, cues


def _structure_info(tree: DocTree | None):
    labels: dict[str, str] = {}
    paths: dict[str, tuple[str, ...]] = {}
    if tree is None:
        return labels, paths
    parent: dict[str, str] = {}
    for block_id, kids in tree.children.items():
        for kid in kids:
            parent[kid] = block_id
    for block_id, block in tree.blocks.items():
        labels[block_id] = block.label
        chain: list[str] = []
        cursor = block_id
        while cursor is not None:
            if tree.blocks[cursor].label == "_section" and cursor != tree.root_id:
                chain.insert(0, cursor)
            cursor = parent.get(cursor)
        paths[block_id] = tuple(chain)
    return labels, paths


def _resolve_coreference(occurrences: list[ConceptOccurrence], kn: "KnowledgeNet") -> None:
    """Sieve resolution: a pronoun adopts the merge class of the closest
    compatible non-pronoun antecedent within two sentences, preferring
    subject antecedents over objects at equal distance."""
    for i, occurrence in enumerate(occurrences):
        lower = occurrence.name.lower()
        if lower not in COREF_PRONOUNS:
            continue
        candidates = []
        for j in range(i - 1, -1, -1):
            prev = occurrences[j]
            distance = occurrence.sentence - prev.sentence
            if distance > 2:
                break
            if distance == 0 or prev.name.lower() in COREF_PRONOUNS:
                continue
            plural = _plural_surface(prev.name)
            if lower in PLURAL_PRONOUNS and not plural:
                continue
            if lower in SINGULAR_PRONOUNS and plural:
                continue
            candidates.append((distance, 0 if prev.role == "subject" else 1, -j, prev))
        if candidates:
            candidates.sort(key=lambda c: c[:3])
            antecedent = candidates[0][3]
            attrs = dict(occurrence.attrs)
            attrs["resolved_to"] = antecedent.id
            occurrences[i] = replace(
                occurrence,
                norm=antecedent.norm,
                key=antecedent.key,
                attrs=tuple(sorted(attrs.items())),
            )


# ---------------------------------------------------------------------------
# Discourse graph generation
# ---------------------------------------------------------------------------


@dataclass
class _ProtoDU:
    name: str
    sentences: list[int]
    attrs: dict


def _link_strength(a: _ProtoDU, b: _ProtoDU, by_sentence: dict[int, list[ConceptOccurrence]]) -> int:
    """Semantic-strength tiers for grouping decisions: subject-subject
    coreference beats subject-object, which beats cue links and overlap."""
    b_first = by_sentence.get(b.sentences[0], [])
    b_subjects = {c.key for c in b_first if c.role == "subject"}
    a_all = [c for i in a.sentences for c in by_sentence.get(i, [])]
    a_subjects = {c.key for c in a_all if c.role == "subject"}
    a_objects = {c.key for c in a_all if c.role in ("object", "oblique")}
    a_keys = {c.key for c in a_all}
    b_keys = {c.key for i in b.sentences for c in by_sentence.get(i, [])}
    if b_subjects & a_subjects:
        return 4
    if b_subjects & a_objects:
        return 3
    if b_keys & a_keys:
        return 1
    return 0


def discourse_graph_gen(
    dm: DiscourseModel,
    sentences: list[CueSentence],
    occurrences: list[ConceptOccurrence],
    cues: list[RelationCue],
    kn: "KnowledgeNet | None" = None,
    pass_cap: int = 16,
) -> tuple[tuple[DiscourseUnit, ...], tuple[DiscourseEdge, ...]]:
    """Group sentences into discourse units and detect the edges between
    them.

    Starts with one Idea unit per sentence; mechanics rules group headings,
    sections and enumerations, then linguistic passes merge adjacent ideas
    linked by coreference until a pass changes nothing.
    """
    if not sentences:
        return (), ()
    by_sentence: dict[int, list[ConceptOccurrence]] = {}
    for occurrence in occurrences:
        by_sentence.setdefault(occurrence.sentence, []).append(occurrence)

    # extended key sets include the main verb's concept sense, so an event
    # noun ("failure") can link back to its verb ("failed")
    extended_keys: dict[int, frozenset[str]] = {}
    for cs in sentences:
        keys = {c.key for c in by_sentence.get(cs.index, [])}
        ann = cs.simplified.annotated
        root = ann.root
        if root is not None and ann.tokens[root].pos == "VERB":
            lemma = ann.tokens[root].lemma
            norm = kn.concept_lookup(lemma) if kn is not None else None
            keys.add(norm if norm is not None else localized_key(lemma))
        extended_keys[cs.index] = frozenset(keys)

    protos: list[_ProtoDU] = []
    for cs in sentences:
        if cs.block_label in ("_section", "_title"):
            protos.append(_ProtoDU("Section", [cs.index], {"heading": normalize_ws(cs.simplified.text)}))
        else:
            protos.append(_ProtoDU("Idea", [cs.index], {}))

    # mechanics: consecutive bullet-point ideas form an enumeration
    grouped: list[_ProtoDU] = []
    for cs, proto in zip(sentences, protos):
        if (
            cs.block_label == "_bullet_point"
            and grouped
            and grouped[-1].name == "Enumeration"
            and sentences[grouped[-1].sentences[-1]].section_path == cs.section_path
        ):
            grouped[-1].sentences.append(cs.index)
        elif cs.block_label == "_bullet_point":
            grouped.append(_ProtoDU("Enumeration", [cs.index], {}))
        else:
            grouped.append(proto)
    protos = grouped

    # linguistics: merge adjacent idea units, strongest links first
    for _ in range(pass_cap):
        best: tuple[int, int] | None = None  # (strength, position)
        for pos in range(len(protos) - 1):
            a, b = protos[pos], protos[pos + 1]
            if a.name != "Idea" or b.name != "Idea":
                continue
            if sentences[a.sentences[0]].section_path != sentences[b.sentences[0]].section_path:
                continue
            strength = _link_strength(a, b, by_sentence)
            if strength >= 3 and (best is None or strength > best[0]):
                best = (strength, pos)
        if best is None:
            break
        pos = best[1]
        protos[pos].sentences.extend(protos[pos + 1].sentences)
        del protos[pos + 1]
    else:
        raise ConvergenceError(f"discourse grouping did not settle within {pass_cap} passes")

    protos.sort(key=lambda p: p.sentences[0])
    dus = tuple(
        DiscourseUnit(f"du{position:03d}", p.name, tuple(sorted(p.sentences)),
                      tuple(sorted((k, str(v)) for k, v in p.attrs.items())))
        for position, p in enumerate(protos)
    )

    du_of_sentence = {i: du.id for du in dus for i in du.sentences}
    edges: list[DiscourseEdge] = []
    seen: set[tuple[str, str, str]] = set()

    def emit(src: str, dst: str, name: str, relation: str, attrs: dict) -> None:
        if src == dst:
            return
        key = (src, dst, relation)
        if key not in seen:
            seen.add(key)
            edges.append(DiscourseEdge(src, dst, name, relation,
                                       tuple(sorted((k, str(v)) for k, v in attrs.items()))))

    # containment: a section contains every unit whose path ends at it
    heading_du_of_block = {}
    for du in dus:
        if du.name == "Section":
            block = sentences[du.sentences[0]].simplified.origin_sentence.block_id
            heading_du_of_block[block] = du.id
    for du in dus:
        path = sentences[du.sentences[0]].section_path
        if not path:
            continue
        own_block = sentences[du.sentences[0]].simplified.origin_sentence.block_id
        enclosing = [b for b in path if b != own_block]
        if enclosing and enclosing[-1] in heading_du_of_block:
            emit(heading_du_of_block[enclosing[-1]], du.id, "Contains", "Contains",
                 {"Hierarchy_Parent": heading_du_of_block[enclosing[-1]], "Hierarchy_Child": du.id})

    # reading order between consecutive units
    for earlier, later in zip(dus, dus[1:]):
        emit(earlier.id, later.id, "Preceeds", "Preceeds", {"order": "Preceding"})

    # structural coreference from resolved pronouns across units
    occ_by_id = {c.id: c for c in occurrences}
    for occurrence in occurrences:
        target = occurrence.attr("resolved_to")
        if target is None:
            continue
        src_du = du_of_sentence[occurrence.sentence]
        dst_du = du_of_sentence[occ_by_id[target].sentence]
        if src_du != dst_du:
            emit(src_du, dst_du, "Structural_Coreference", "Structural_Coreference", {})

    # rhetorical relations from the model's cue rules, anchored near the start
    cue_rules = [r for de in dm.de_defs for r in de.detect_rules if r.kind == "cue-lexicon"]
    for du in dus:
        first = sentences[du.sentences[0]]
        hits = evaluate_rules(cue_rules, first.simplified.text)
        opening = [h for h in hits if h.start <= 20]
        if not opening:
            continue
        hit = opening[0]
        prev = _previous_du(dus, du)
        if prev is None:
            continue
        relation = hit.label
        if relation == "Elaboration":
            du_keys = set().union(*(extended_keys[i] for i in du.sentences))
            prev_keys = set().union(*(extended_keys[i] for i in prev.sentences))
            if not du_keys & prev_keys:
                continue
        emit(du.id, prev.id, relation, relation, {"cue": hit.captures[0] if hit.captures else ""})

    edges.sort(key=lambda e: (e.src, e.dst, e.relation))
    return dus, tuple(edges)


def _previous_du(dus: tuple[DiscourseUnit, ...], du: DiscourseUnit) -> DiscourseUnit | None:
    candidates = [d for d in dus if d.sentences[0] < du.sentences[0] and d.name != "Section"]
    return candidates[-1] if candidates else None


# ---------------------------------------------------------------------------
# Concept graph generation
# ---------------------------------------------------------------------------


def _sentence_frame(ss: SimplifiedSentence) -> ContextFrame:
    """The contextual frame implied by one sentence's features and entities."""
    features = dict(ss.features)
    assignments: dict[str, str] = {}
    tense = features.get("tense")
    if tense == "past":
        assignments["temporal"] = "past"
    elif tense == "future":
        assignments["temporal"] = "future"
    for entity in ss.annotated.entities:
        if entity.etype == "DATE":
            assignments["temporal"] = entity.text
        elif entity.etype == "GPE":
            assignments["spatial"] = entity.text.lower()
    modality = features.get("modality")
    if modality == "possible":
        assignments["modality"] = "possible"
    elif modality == "predictive":
        assignments["modality"] = "predictive"
    elif modality == "obligative":
        assignments["deontic"] = "obligation"
    aspect = features.get("aspect")
    if aspect in ("progressive", "perfect"):
        assignments["aspectual"] = aspect
    if features.get("polarity") == "negative":
        assignments["polarity"] = "negative"
    return ContextFrame(tuple(assignments.items()))


def _edge_kind(ss: SimplifiedSentence, relation_norm: str | None, procedural: bool) -> EdgeKind:
    if procedural:
        return EdgeKind.PROCEDURAL
    if relation_norm == "hypernym":
        return EdgeKind.SEMANTIC
    if _sentence_frame(ss).is_universal:
        return EdgeKind.SEMANTIC
    return EdgeKind.EPISODIC


@dataclass
class _RawEdge:
    src_key: str
    dst_key: str
    name: str
    relation_norm: str | None
    kind: EdgeKind
    sentence: int
    trace: Trace
    sequence: int | None = None


def _sentence_edges(
    cs: CueSentence,
    occ_by_id: dict[str, ConceptOccurrence],
    kn: "KnowledgeNet",
    step_counter: dict,
    synthetic: list[ConceptOccurrence],
) -> list[_RawEdge]:
    ss = cs.simplified
    ann = ss.annotated
    tokens = ann.tokens
    occs = [occ_by_id[i] for i in cs.concept_ids]

    def occ_at(i: int) -> ConceptOccurrence | None:
        for occurrence in occs:
            if occurrence.span[0] <= tokens[i].start and tokens[i].end <= occurrence.span[1]:
                return occurrence
        return None

    root = ann.root
    if root is None or tokens[root].pos not in ("VERB", "AUX"):
        return []
    verb = tokens[root]
    subject_ix = ann.subject_index()
    subject = occ_at(subject_ix) if subject_ix is not None else None
    objects = [occ_at(i) for i, l in enumerate(ann.labels) if l in ("obj", "attr")]
    objects = [o for o in objects if o is not None]
    object_token = next((i for i, l in enumerate(ann.labels) if l in ("obj", "attr")), None)
    preps = [(i, tokens[i].lemma) for i, l in enumerate(ann.labels) if l == "prep"]
    pobjs = [(occ_at(i), prep_lemma)
             for prep_ix, prep_lemma in preps
             for i, l in enumerate(ann.labels)
             if l == "pobj" and ann.heads[i] == prep_ix]
    pobjs = [(o, p) for o, p in pobjs if o is not None]
    negated = any(l == "neg" for l in ann.labels)

    sentence_trace = Trace((DocVariant(ss.file_id, tuple(r for _, r in ss.src)),))

    # ordinal cues and imperatives drive procedural step numbering
    first_word = tokens[0].text.lower() if tokens else ""
    imperative = subject is None and verb.pos == "VERB" and root == 0
    ordinal = ORDINAL_OPENERS.get(first_word)
    procedural = imperative or ordinal is not None
    sequence = None
    if procedural:
        if ordinal:
            step_counter["n"] = ordinal
        else:
            step_counter["n"] = step_counter.get("n", 0) + 1
        sequence = step_counter["n"]

    def relation_for(lemma: str) -> tuple[str, str | None]:
        return lemma, kn.relation_lookup(lemma)

    def make_edge(src, dst, name, norm, seq=None):
        kind = _edge_kind(ss, norm, procedural)
        return _RawEdge(src.key, dst.key, name, norm, kind, cs.index, sentence_trace,
                        seq if kind == EdgeKind.PROCEDURAL else None)

    edges: list[_RawEdge] = []
    copula = verb.lemma == "be"

    if copula and subject is not None and objects:
        for obj in objects:
            if negated:
                continue  # a negated copula asserts no hypernym link
            edges.append(make_edge(subject, obj, "be", "hypernym"))
        return edges

    if subject is None and verb.pos == "VERB" and (objects or pobjs):
        action = _synthetic_action(ss, cs.index, root, kn, synthetic)
        for obj in objects:
            edges.append(make_edge(action, obj, "uses", "uses", sequence))
        for obj, prep in pobjs:
            name, norm = relation_for(f"{verb.lemma}_{prep}")
            if norm is None:
                name, norm = "uses", "uses"
            edges.append(make_edge(action, obj, name, norm, sequence))
        return edges

    if subject is None:
        return []

    if objects and object_token is not None and pobjs:
        # light-verb pattern: "plays a role in X" and friends
        combo = f"{verb.lemma}_{tokens[object_token].lemma}_{pobjs[0][1]}"
        norm = kn.relation_lookup(combo)
        if norm is not None:
            for obj, _prep in pobjs:
                edges.append(make_edge(subject, obj, combo, norm, sequence))
            return edges

    for obj in objects:
        name, norm = relation_for(verb.lemma)
        edges.append(make_edge(subject, obj, name, norm, sequence))
    for obj, prep in pobjs:
        name, norm = relation_for(f"{verb.lemma}_{prep}")
        if norm is None and not objects:
            name2, norm2 = relation_for(verb.lemma)
            if norm2 is not None:
                name, norm = name2, norm2
        edges.append(make_edge(subject, obj, name, norm, sequence))
    if not objects and not pobjs and verb.pos == "VERB":
        action = _synthetic_action(ss, cs.index, root, kn, synthetic)
        edges.append(make_edge(subject, action, "performs", "performs", sequence))
    return edges


def _synthetic_action(
    ss: SimplifiedSentence, sentence_ix: int, verb_token: int, kn: "KnowledgeNet",
    synthetic: list[ConceptOccurrence],
) -> ConceptOccurrence:
    token = ss.annotated.tokens[verb_token]
    norm = kn.concept_lookup(token.lemma)
    ranges = ss.token_byte_ranges(verb_token)
    occurrence = ConceptOccurrence(
        id=f"a{sentence_ix}.{verb_token}",
        name=token.text,
        norm=norm,
        key=norm if norm is not None else localized_key(token.lemma),
        sentence=sentence_ix,
        span=(token.start, token.end),
        role="predicate",
        trace=Trace((DocVariant(ss.file_id, tuple(ranges)),)),
    )
    synthetic.append(occurrence)
    return occurrence


def concept_graph_gen(
    dg: tuple[tuple[DiscourseUnit, ...], tuple[DiscourseEdge, ...]],
    kn: "KnowledgeNet",
    sentences: list[CueSentence],
    occurrences: list[ConceptOccurrence],
    cues: list[RelationCue],
    file: SourceFile,
    dm_id: str,
) -> DocGMR:
    """Per-sentence concept graphs aggregated per discourse unit by semantic
    union: same-key occurrences merge, traces accumulate."""
    dus, du_edges = dg
    occ_by_id = {c.id: c for c in occurrences}
    du_of_sentence = {i: du.id for du in dus for i in du.sentences}

    synthetic: list[ConceptOccurrence] = []
    raw: list[_RawEdge] = []
    step_counter: dict = {}
    for cs in sentences:
        raw.extend(_sentence_edges(cs, occ_by_id, kn, step_counter, synthetic))

    merged: dict[tuple, ConceptEdgeRec] = {}
    for edge in raw:
        du_id = du_of_sentence[edge.sentence]
        key = (du_id, edge.src_key, edge.dst_key, edge.relation_norm or LOCAL_PREFIX + edge.name,
               edge.kind.value)
        existing = merged.get(key)
        if existing is None:
            merged[key] = ConceptEdgeRec(
                du=du_id, src_key=edge.src_key, dst_key=edge.dst_key, name=edge.name,
                relation_norm=edge.relation_norm, kind=edge.kind,
                sentences=(edge.sentence,), trace=edge.trace, sequence=edge.sequence,
            )
        else:
            merged[key] = replace(
                existing,
                sentences=tuple(sorted(set(existing.sentences + (edge.sentence,)))),
                trace=existing.trace.merged(edge.trace),
            )

    records = []
    for cs in sentences:
        ss = cs.simplified
        records.append(
            SentenceRecord(
                index=cs.index,
                text=ss.text,
                block_id=ss.origin_sentence.block_id,
                block_label=cs.block_label,
                section_path=cs.section_path,
                byte_ranges=tuple(tuple(r) for _, r in ss.src),
                origin=ss.origin,
                derivation=ss.derivation,
                features=ss.features,
                frame=_sentence_frame(ss).assignments,
                substituted=ss.substituted,
            )
        )

    all_concepts = tuple(occurrences) + tuple(synthetic)
    return DocGMR(
        file_id=file.id,
        file_digest=file.digest(),
        dm_id=dm_id,
        sentences=tuple(records),
        concepts=all_concepts,
        cues=tuple(cues),
        dus=dus,
        du_edges=du_edges,
        edges=tuple(sorted(merged.values(), key=lambda e: (e.du, e.src_key, e.dst_key,
                                                           e.relation_label, e.kind.value))),
        frames=(),
    )


# ---------------------------------------------------------------------------
# Contextual framing
# ---------------------------------------------------------------------------


def contextual_framing(gmr: DocGMR, kn: "KnowledgeNet") -> DocGMR:
    """Assign every discourse and concept edge its contextual frame and map
    the document's unique frames into the knowledge net's registry."""
    frames_seen: dict[ContextFrame, str | None] = {}

    def note(frame: ContextFrame) -> str | None:
        if frame not in frames_seen:
            frames_seen[frame] = kn.frame_name(frame)
        return frames_seen[frame]

    framed_edges: dict[tuple, ConceptEdgeRec] = {}
    for rec in gmr.edges:
        by_frame: dict[ContextFrame, list[int]] = {}
        for sentence_ix in rec.sentences:
            frame = gmr.sentences[sentence_ix].context_frame()
            by_frame.setdefault(frame, []).append(sentence_ix)
        for frame, ixs in by_frame.items():
            norm = note(frame)
            key = (rec.du, rec.src_key, rec.dst_key, rec.relation_label, rec.kind.value, frame)
            piece = replace(rec, frame=frame, frame_norm=norm, sentences=tuple(sorted(ixs)))
            existing = framed_edges.get(key)
            if existing is not None:
                piece = replace(piece, trace=existing.trace.merged(piece.trace),
                                sentences=tuple(sorted(set(existing.sentences + piece.sentences))))
            framed_edges[key] = piece

    du_edges = tuple(
        replace(edge, frame=UNIVERSAL_FRAME, frame_norm=note(UNIVERSAL_FRAME))
        for edge in gmr.du_edges
    )
    note(UNIVERSAL_FRAME)
    frame_records = tuple(
        FrameRecord(frame, frames_seen[frame])
        for frame in sorted(frames_seen, key=lambda f: f.assignments)
    )
    return replace_gmr(
        gmr,
        du_edges=du_edges,
        edges=tuple(sorted(framed_edges.values(),
                           key=lambda e: (e.du, e.src_key, e.dst_key, e.relation_label,
                                          e.kind.value, e.frame.assignments))),
        frames=frame_records,
    )


def replace_gmr(gmr: DocGMR, **changes) -> DocGMR:
    payload = {
        "file_id": gmr.file_id,
        "file_digest": gmr.file_digest,
        "dm_id": gmr.dm_id,
        "sentences": gmr.sentences,
        "concepts": gmr.concepts,
        "cues": gmr.cues,
        "dus": gmr.dus,
        "du_edges": gmr.du_edges,
        "edges": gmr.edges,
        "frames": gmr.frames,
    }
    payload.update(changes)
    return DocGMR(**payload)


# ---------------------------------------------------------------------------
# Semantic grounding
# ---------------------------------------------------------------------------


def semantic_grounding(gmr: DocGMR, kn: "KnowledgeNet") -> DocGMR:
    """Remap concepts, relations and frames into the given net's universes.

    Post-hoc grounding for GMRs built against the null net: structure,
    traces and discourse units are untouched; keys of occurrences that now
    normalize are rewritten, which may merge nodes that became equivalent.
    """
    key_map: dict[str, str] = {}
    new_concepts = []
    for occurrence in gmr.concepts:
        norm = occurrence.norm
        if norm is not None and norm not in kn.concepts:
            norm = kn.concept_lookup(norm) or kn.concept_lookup(occurrence.name)
        if norm is None:
            norm = kn.concept_lookup(occurrence.name)
        new_key = norm if norm is not None else localized_key(occurrence.name)
        if occurrence.attr("resolved_to") is not None and norm is None:
            new_key = occurrence.key  # keep the antecedent's merge class
        key_map.setdefault(occurrence.key, new_key)
        new_concepts.append(replace(occurrence, norm=norm, key=new_key))

    new_edges = {}
    for rec in gmr.edges:
        relation_norm = rec.relation_norm
        if relation_norm is not None and relation_norm not in kn.relations:
            relation_norm = kn.relation_lookup(relation_norm)
        if relation_norm is None:
            relation_norm = kn.relation_lookup(rec.name)
        frame_norm = kn.frame_name(rec.frame) if rec.frame is not None else None
        piece = replace(
            rec,
            src_key=key_map.get(rec.src_key, rec.src_key),
            dst_key=key_map.get(rec.dst_key, rec.dst_key),
            relation_norm=relation_norm,
            frame_norm=frame_norm,
        )
        key = (piece.du, piece.src_key, piece.dst_key, piece.relation_label, piece.kind.value,
               piece.frame.assignments if piece.frame else None)
        existing = new_edges.get(key)
        if existing is not None:
            piece = replace(piece, trace=existing.trace.merged(piece.trace),
                            sentences=tuple(sorted(set(existing.sentences + piece.sentences))))
        new_edges[key] = piece

    frames = tuple(FrameRecord(f.frame, kn.frame_name(f.frame)) for f in gmr.frames)
    return replace_gmr(
        gmr,
        concepts=tuple(new_concepts),
        edges=tuple(sorted(new_edges.values(),
                           key=lambda e: (e.du, e.src_key, e.dst_key, e.relation_label,
                                          e.kind.value,
                                          e.frame.assignments if e.frame else ()))),
        frames=frames,
    )


# ---------------------------------------------------------------------------
# The full encoder and abstraction views
# ---------------------------------------------------------------------------


def encode(file: SourceFile, kn: "KnowledgeNet", provider: AnnotatorContract | None = None) -> DocGMR:
    """The full pipeline: model identification, extraction, linguistic
    simplification, concept detection, discourse and concept graph
    generation, contextual framing and semantic grounding.

    Deterministic end to end: re-encoding a file yields a byte-identical
    serialized GMR.
    """
    provider = provider or default_annotator()

    def stage(name: str, fn, *args):
        try:
            return fn(*args)
        except StageError:
            raise
        except Exception as err:
            raise StageError(name, file.id, err) from err

    dm_id = stage("DMID", identify_discourse_model, file, list(kn.dm_universe.values()))
    dm = kn.dm_universe[dm_id]
    tree = stage("Extr", extract, file, dm)
    sentences = stage("LingSimp.segment", sentence_segment, tree)
    annotated = stage("LingSimp.annotate", annotate, sentences, provider)
    lings = stage("LingSimp.analyze", linguistic_analyze, annotated)
    us = stage("LingSimp.simplify", simplify, lings, None, provider)
    cue_sentences, occurrences, cues = stage("ConceptDetect", concept_detect, us, kn, tree)
    dg = stage("DGGen", discourse_graph_gen, dm, cue_sentences, occurrences, cues, kn)
    gmr = stage("CGGen", concept_graph_gen, dg, kn, cue_sentences, occurrences, cues, file, dm_id)
    gmr = stage("CFraming", contextual_framing, gmr, kn)
    gmr = stage("SemGrounding", semantic_grounding, gmr, kn)
    return gmr


def abstract_view(
    gmr: DocGMR,
    level: int,
    kn: "KnowledgeNet",
    frame_filter: ContextFrame | None = None,
    kind_filter: EdgeKind | None = None,
) -> DocGMR:
    """Conceptual abstraction and contextual slicing.

    Each abstraction hop replaces every grounded concept and relation with
    its least hypernym (lexicographically least among the minimal ones);
    slicing keeps only edges whose frame subsumes the filter and whose kind
    matches.  Level 0 with no slice is the identity.
    """
    if level < 0:
        raise ValidationError("abstraction level must be >= 0")

    def lift(universe, ident: str) -> str:
        if ident not in universe:
            return ident
        parent = universe.minimal_hypernym(ident)
        return parent if parent is not None else ident

    concepts = gmr.concepts
    edges = gmr.edges
    for _ in range(level):
        key_map = {}
        new_concepts = []
        for occurrence in concepts:
            if occurrence.norm is not None:
                norm = lift(kn.concepts, occurrence.norm)
                new_key = norm
                new_concepts.append(replace(occurrence, norm=norm, key=new_key))
            else:
                new_key = occurrence.key
                new_concepts.append(occurrence)
            key_map[occurrence.key] = new_key
        merged: dict[tuple, ConceptEdgeRec] = {}
        for rec in edges:
            relation_norm = rec.relation_norm
            if relation_norm is not None:
                relation_norm = lift(kn.relations, relation_norm)
            piece = replace(
                rec,
                src_key=key_map.get(rec.src_key, rec.src_key),
                dst_key=key_map.get(rec.dst_key, rec.dst_key),
                relation_norm=relation_norm,
            )
            key = (piece.du, piece.src_key, piece.dst_key, piece.relation_label,
                   piece.kind.value, piece.frame.assignments if piece.frame else None)
            existing = merged.get(key)
            if existing is not None:
                piece = replace(piece, trace=existing.trace.merged(piece.trace),
                                sentences=tuple(sorted(set(existing.sentences + piece.sentences))))
            merged[key] = piece
        concepts = tuple(new_concepts)
        edges = tuple(sorted(merged.values(),
                             key=lambda e: (e.du, e.src_key, e.dst_key, e.relation_label,
                                            e.kind.value,
                                            e.frame.assignments if e.frame else ())))

    if frame_filter is not None or kind_filter is not None:
        kept = []
        for rec in edges:
            frame = rec.frame if rec.frame is not None else UNIVERSAL_FRAME
            if frame_filter is not None and not frame.subsumes(frame_filter):
                continue
            if kind_filter is not None and rec.kind != kind_filter:
                continue
            kept.append(rec)
        edges = tuple(kept)

    return replace_gmr(gmr, concepts=concepts, edges=edges)
