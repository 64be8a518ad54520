"""Discourse models: blueprints for document classes.

A discourse model bundles identification rules (does this file belong to the
class?), discourse-unit definitions (what semantic blocks exist?) and
discourse-edge definitions (how do blocks relate?).  Everything is driven by
one declarative rule language shared by all detection stages.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GyanError, NotFoundError, RuleCompileError, ValidationError
from .graph import InferenceRule, rule_from_dict, rule_to_dict
from .sources import CSV_EXTENSIONS, HTML_EXTENSIONS, SourceFile, TEXT_EXTENSIONS

RULE_KINDS = ("regex-on-text", "structural-predicate", "cue-lexicon", "annotation-predicate")

DEFAULT_TEXTUAL_DM_ID = "dm.default-textual"


@dataclass(frozen=True)
class RulePattern:
    """One declarative detection rule.

    kind            how ``body`` is interpreted:
                      regex-on-text        python regex run over text
                      structural-predicate predicate over file structure,
                                           e.g. ``extension=.html`` or
                                           ``text-startswith:<html``
                      cue-lexicon          comma-separated cue phrases
                      annotation-predicate predicate over NLP annotations
                                           (evaluated by later stages)
    priority        lower number wins on overlap
    action          label template; ``\\1`` style backrefs allowed for regex
    """

    id: str
    kind: str
    body: str
    priority: int = 100
    action: str = ""

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise RuleCompileError(self.id, f"unknown rule kind {self.kind!r}")
        if self.kind == "regex-on-text":
            try:
                re.compile(self.body, re.MULTILINE)
            except re.error as err:
                raise RuleCompileError(self.id, f"bad regex: {err}") from None
        elif self.kind == "cue-lexicon" and not self.body.strip():
            raise RuleCompileError(self.id, "empty cue lexicon")

    def compiled(self) -> re.Pattern:
        return re.compile(self.body, re.MULTILINE)


@dataclass(frozen=True)
class RuleMatch:
    start: int
    end: int
    label: str
    captures: tuple[str, ...]
    rule_id: str
    priority: int


def evaluate_rules(rules: list[RulePattern], text: str) -> list[RuleMatch]:
    """Run text-applicable rules over an input string.

    Candidates are gathered per rule, then resolved in priority order: a
    match is kept unless it overlaps an already-kept match (equal ranges
    included), so the lowest priority number wins disputes.  The result is
    sorted by (start, priority).  Pure function of its inputs.
    """
    candidates: list[RuleMatch] = []
    for rule in rules:
        if rule.kind == "regex-on-text":
            for m in rule.compiled().finditer(text):
                label = rule.action or rule.id
                try:
                    label = m.expand(label) if "\\" in label else label
                except re.error as err:
                    raise RuleCompileError(rule.id, f"bad action template: {err}") from None
                candidates.append(
                    RuleMatch(m.start(), m.end(), label, tuple(g or "" for g in m.groups()),
                              rule.id, rule.priority)
                )
        elif rule.kind == "cue-lexicon":
            for cue in (c.strip() for c in rule.body.split(",")):
                if not cue:
                    continue
                for m in re.finditer(rf"(?i)\b{re.escape(cue)}\b", text):
                    candidates.append(
                        RuleMatch(m.start(), m.end(), rule.action or rule.id, (cue,),
                                  rule.id, rule.priority)
                    )
        # structural/annotation predicates are evaluated by their own stages
    kept: list[RuleMatch] = []
    for cand in sorted(candidates, key=lambda c: (c.priority, c.start, c.end, c.rule_id)):
        if not any(c.start < cand.end and cand.start < c.end for c in kept):
            kept.append(cand)
    kept.sort(key=lambda c: (c.start, c.priority, c.rule_id))
    return kept


def structural_predicate_holds(body: str, file: SourceFile) -> bool:
    """Evaluate a structural predicate against a source file."""
    if "=" in body and body.split("=", 1)[0] in ("extension", "name"):
        key, expected = body.split("=", 1)
        value = file.extension if key == "extension" else file.name
        return value == expected
    if body.startswith("text-startswith:"):
        prefix = body.split(":", 1)[1]
        return file.text.lstrip().lower().startswith(prefix.lower())
    if body.startswith("text-contains:"):
        return body.split(":", 1)[1].lower() in file.text.lower()
    if body.startswith("first-line-matches:"):
        first = file.text.splitlines()[0] if file.text else ""
        return re.search(body.split(":", 1)[1], first) is not None
    raise RuleCompileError("<structural>", f"unknown structural predicate {body!r}")


# ---------------------------------------------------------------------------
# Model definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdRule:
    """Identification rule: flags (byte-range, bool) outcomes over a file."""

    pattern: RulePattern

    def evaluate(self, file: SourceFile) -> list[tuple[tuple[int, int], bool]]:
        whole = (0, len(file.data))
        if self.pattern.kind == "structural-predicate":
            return [(whole, structural_predicate_holds(self.pattern.body, file))]
        if self.pattern.kind == "regex-on-text":
            hits = evaluate_rules([self.pattern], file.text)
            if hits:
                return [((h.start, h.end), True) for h in hits]
            return [(whole, False)]
        raise RuleCompileError(self.pattern.id, "id rules must be structural or regex")


@dataclass(frozen=True)
class DUDefinition:
    """A discourse-unit type: attribute keys plus boundary/identifier rules."""

    name: str
    attr_defs: tuple[str, ...] = ()
    detect_rules: tuple[RulePattern, ...] = ()
    id_rules: tuple[RulePattern, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValidationError("discourse unit definition needs a name")


@dataclass(frozen=True)
class DEDefinition:
    """A discourse-edge type: its relation names, calculus and detectors."""

    name: str
    relations: tuple[str, ...]
    calculus: tuple[InferenceRule, ...] = ()
    detect_rules: tuple[RulePattern, ...] = ()

    def __post_init__(self):
        if not self.relations:
            raise ValidationError(f"edge definition {self.name!r} declares no relations")


@dataclass(frozen=True)
class DiscourseModel:
    id: str
    name: str
    id_rules: tuple[IdRule, ...] = ()
    du_defs: tuple[DUDefinition, ...] = ()
    de_defs: tuple[DEDefinition, ...] = ()
    parent: str | None = None

    def __post_init__(self):
        names = [d.name for d in self.du_defs]
        if len(names) != len(set(names)):
            raise ValidationError(f"model {self.id!r} has duplicate DU names")
        declared = {r for de in self.de_defs for r in de.relations}
        for de in self.de_defs:
            for rule in de.calculus:
                for pattern in rule.premises:
                    if not pattern.relation.startswith("?") and pattern.relation not in declared:
                        raise ValidationError(
                            f"model {self.id!r}: calculus relation {pattern.relation!r} undeclared"
                        )

    def du_def(self, name: str) -> DUDefinition:
        for d in self.du_defs:
            if d.name == name:
                return d
        raise NotFoundError(f"model {self.id!r} has no DU definition {name!r}")

    def du_names(self) -> frozenset[str]:
        return frozenset(d.name for d in self.du_defs)

    def relation_names(self) -> frozenset[str]:
        return frozenset(r for de in self.de_defs for r in de.relations)

    def matches(self, file: SourceFile) -> bool:
        """All identification rules must flag true on every reported range."""
        if not self.id_rules:
            return False
        for rule in self.id_rules:
            outcomes = rule.evaluate(file)
            if not outcomes or not all(flag for _, flag in outcomes):
                return False
        return True


def specificity_depth(model: DiscourseModel, universe: dict[str, DiscourseModel]) -> int:
    depth = 0
    current = model
    seen = {model.id}
    while current.parent is not None:
        if current.parent in seen or current.parent not in universe:
            break
        depth += 1
        current = universe[current.parent]
        seen.add(current.id)
    return depth


def identify_discourse_model(file: SourceFile, universe: list[DiscourseModel]) -> str:
    """Pick the single discourse model a file belongs to.

    Most specific matching model wins (deepest specialization chain first,
    then ascending id); files matching nothing fall back to the default
    textual model, which must be present in the universe.
    """
    by_id = {m.id: m for m in universe}
    if DEFAULT_TEXTUAL_DM_ID not in by_id:
        raise ValidationError("universe must contain the default textual model")
    matching = [m for m in universe if m.matches(file)]
    if not matching:
        return DEFAULT_TEXTUAL_DM_ID
    matching.sort(key=lambda m: (-specificity_depth(m, by_id), m.id))
    return matching[0].id


# ---------------------------------------------------------------------------
# The default textual discourse model
# ---------------------------------------------------------------------------

STRUCTURAL_EDGE_NAMES = ("Contains", "Preceeds", "Structural_Coreference")
RHETORICAL_EDGE_NAMES = ("Elaboration", "Justification", "Background", "Evidence", "Summary", "Conclusion")

_HEADING_RULES = (
    RulePattern("du.section.numbered", "regex-on-text",
                r"^(\d+(?:\.\d+)*)[.)]?\s+\S.*$", 10, "_section"),
    RulePattern("du.section.hash", "regex-on-text", r"^(#{1,6})\s+\S.*$", 11, "_section"),
    RulePattern("du.section.allcaps", "regex-on-text",
                r"^[A-Z][A-Z0-9 ,&'-]{2,58}$", 12, "_section"),
)

_ENUM_RULES = (
    RulePattern("du.enumeration.bullet", "regex-on-text",
                r"^\s*(?:[-*•]|\d+[.)]|[a-z][.)])\s+\S.*$", 20, "_bullet_point"),
)

_EXAMPLE_RULES = (
    RulePattern("du.example.cue", "cue-lexicon", "for example, for instance, e.g.", 30, "Example"),
)

_RHETORIC_RULES = (
    RulePattern("de.elaboration.cue", "cue-lexicon",
                "this, these, such, in particular, specifically, in other words", 40, "Elaboration"),
    RulePattern("de.justification.cue", "cue-lexicon",
                "because, since, therefore, thus, hence, as a result, so that", 41, "Justification"),
    RulePattern("de.background.cue", "cue-lexicon",
                "historically, previously, traditionally, in the past, originally", 42, "Background"),
    RulePattern("de.evidence.cue", "cue-lexicon",
                "studies show, research shows, according to, evidence suggests", 43, "Evidence"),
    RulePattern("de.summary.cue", "cue-lexicon",
                "in summary, to summarize, overall, in short", 44, "Summary"),
    RulePattern("de.conclusion.cue", "cue-lexicon",
                "in conclusion, we conclude, concluding, finally", 45, "Conclusion"),
)


def default_textual_model() -> DiscourseModel:
    """The most generic model for text documents.

    Ships the stock discourse units (Document, Section, TopicCluster,
    Enumeration, Example, Table, Figure, Idea) and the structural plus
    rhetorical edge vocabulary all textual encodings share.  Deterministic:
    repeated calls build equal models.
    """
    du_defs = (
        DUDefinition("Document"),
        DUDefinition("Section", attr_defs=("heading", "level"), detect_rules=_HEADING_RULES,
                     id_rules=(RulePattern("du.section.id", "regex-on-text",
                                           r"^(\d+(?:\.\d+)*)", 10, r"\1"),)),
        DUDefinition("TopicCluster", attr_defs=("topic",)),
        DUDefinition("Enumeration", detect_rules=_ENUM_RULES),
        DUDefinition("Example", detect_rules=_EXAMPLE_RULES),
        DUDefinition("Table"),
        DUDefinition("Figure", attr_defs=("caption",)),
        DUDefinition("Idea"),
    )
    de_defs = (
        DEDefinition("Structural", relations=STRUCTURAL_EDGE_NAMES),
        DEDefinition("Discourse", relations=RHETORICAL_EDGE_NAMES, detect_rules=_RHETORIC_RULES),
    )
    return DiscourseModel(
        id=DEFAULT_TEXTUAL_DM_ID,
        name="Default Textual",
        id_rules=(),
        du_defs=du_defs,
        de_defs=de_defs,
    )


def builtin_models() -> list[DiscourseModel]:
    """Format-specific defaults shipped with the engine: plain text plus
    minimal HTML and CSV models."""
    web = DiscourseModel(
        id="dm.web",
        name="Web Document",
        id_rules=(
            IdRule(RulePattern("id.web.root", "structural-predicate", "text-startswith:<", 1)),
            IdRule(RulePattern("id.web.html", "structural-predicate", "text-contains:<html", 2)),
        ),
        du_defs=default_textual_model().du_defs,
        de_defs=default_textual_model().de_defs,
        parent=DEFAULT_TEXTUAL_DM_ID,
    )
    csv_model = DiscourseModel(
        id="dm.csv-row",
        name="CSV Rows",
        id_rules=(IdRule(RulePattern("id.csv.ext", "structural-predicate", "extension=.csv", 1)),),
        du_defs=(DUDefinition("Document"), DUDefinition("Row"), DUDefinition("Idea"),
                 DUDefinition("Section"), DUDefinition("Enumeration")),
        de_defs=(DEDefinition("Structural", relations=STRUCTURAL_EDGE_NAMES),),
        parent=DEFAULT_TEXTUAL_DM_ID,
    )
    return [default_textual_model(), web, csv_model]


# ---------------------------------------------------------------------------
# JSON model files
# ---------------------------------------------------------------------------


def model_to_dict(m: DiscourseModel) -> dict:
    def pat(p: RulePattern) -> dict:
        return {"id": p.id, "kind": p.kind, "body": p.body, "priority": p.priority, "action": p.action}

    return {
        "id": m.id,
        "name": m.name,
        "parent": m.parent,
        "id_rules": [pat(r.pattern) for r in m.id_rules],
        "du_defs": [
            {
                "name": d.name,
                "attr_defs": list(d.attr_defs),
                "detect_rules": [pat(p) for p in d.detect_rules],
                "id_rules": [pat(p) for p in d.id_rules],
            }
            for d in m.du_defs
        ],
        "de_defs": [
            {
                "name": d.name,
                "relations": list(d.relations),
                "calculus": [rule_to_dict(r) for r in d.calculus],
                "detect_rules": [pat(p) for p in d.detect_rules],
            }
            for d in m.de_defs
        ],
    }


def model_from_dict(d: dict) -> DiscourseModel:
    def pat(p: dict) -> RulePattern:
        return RulePattern(p["id"], p["kind"], p["body"], p.get("priority", 100), p.get("action", ""))

    return DiscourseModel(
        id=d["id"],
        name=d.get("name", d["id"]),
        parent=d.get("parent"),
        id_rules=tuple(IdRule(pat(p)) for p in d.get("id_rules", [])),
        du_defs=tuple(
            DUDefinition(
                u["name"],
                tuple(u.get("attr_defs", [])),
                tuple(pat(p) for p in u.get("detect_rules", [])),
                tuple(pat(p) for p in u.get("id_rules", [])),
            )
            for u in d.get("du_defs", [])
        ),
        de_defs=tuple(
            DEDefinition(
                e["name"],
                tuple(e.get("relations", [])),
                tuple(rule_from_dict(r) for r in e.get("calculus", [])),
                tuple(pat(p) for p in e.get("detect_rules", [])),
            )
            for e in d.get("de_defs", [])
        ),
    )


def load_models_dir(directory: str | Path) -> list[DiscourseModel]:
    """Load one model per JSON file from a models directory."""
    d = Path(directory)
    if not d.is_dir():
        raise NotFoundError(f"models directory not found: {d}")
    models = []
    for path in sorted(d.glob("*.json")):
        try:
            models.append(model_from_dict(json.loads(path.read_text("utf-8"))))
        except (json.JSONDecodeError, KeyError) as err:
            raise GyanError(f"bad model file {path}: {err}") from err
    return models
