"""File to sentences: extraction, segmentation, annotation, linguistic
features and iterative simplification.

Extraction maps a physical file into a hierarchical tree of logical blocks
over byte-anchored graphical elements.  Segmentation walks that tree in
reading order and emits sentences that stay traceable to their source bytes.
The default annotator is a deterministic rule/lexicon tagger with a shallow
dependency pass; heavier annotators plug in through AnnotatorContract.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from importlib import resources as importlib_resources
from pathlib import Path

from .discourse import DEFAULT_TEXTUAL_DM_ID, DiscourseModel
from .errors import FormatError, SimplifyLoopError, ValidationError
from .sources import CSV_EXTENSIONS, HTML_EXTENSIONS, SourceFile
from .textspan import SpanMap, apply_edits

BLOCK_LABELS = ("_section", "_paragraph", "_table_cell", "_bullet_point", "_title", "_caption")


def normalize_ws(s: str) -> str:
    return " ".join(s.split())


# ---------------------------------------------------------------------------
# Abstract document tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphicalElement:
    """A primitive piece of file content with its exact byte span."""

    id: str
    content: str
    start: int
    end: int
    ordinal: int
    element_type: str
    attrs: tuple[tuple[str, str], ...] = ()


@dataclass
class Block:
    id: str
    label: str
    element_ids: list[str] = field(default_factory=list)
    attrs: dict = field(default_factory=dict)


class DocTree:
    """Hierarchy of logical blocks; serializes as the gyan-txt v1 format."""

    SCHEMA = "gyan-txt v1"

    def __init__(self, file_id: str):
        self.file_id = file_id
        self.elements: dict[str, GraphicalElement] = {}
        self.blocks: dict[str, Block] = {}
        self.children: dict[str, list[str]] = {}
        self.root_id = self._add_block("_section").id

    def _add_block(self, label: str, parent: str | None = None, attrs: dict | None = None) -> Block:
        if label not in BLOCK_LABELS:
            raise ValidationError(f"unknown block label {label!r}")
        block = Block(f"b{len(self.blocks)}", label, attrs=dict(attrs or {}))
        self.blocks[block.id] = block
        self.children[block.id] = []
        if parent is not None:
            self.children[parent].append(block.id)
        return block

    def add_block(self, label: str, parent: str, attrs: dict | None = None) -> Block:
        if parent not in self.blocks:
            raise ValidationError(f"unknown parent block {parent!r}")
        return self._add_block(label, parent, attrs)

    def register_element(self, element: GraphicalElement) -> None:
        """Record an element without placing it in a block (layout content
        such as blank lines; keeps byte coverage complete)."""
        if element.id in self.elements:
            raise ValidationError(f"element {element.id!r} already registered")
        self.elements[element.id] = element

    def add_element(self, block_id: str, element: GraphicalElement) -> None:
        if element.id in self.elements:
            raise ValidationError(f"element {element.id!r} already placed")
        self.elements[element.id] = element
        self.blocks[block_id].element_ids.append(element.id)

    def walk(self) -> list[Block]:
        """Blocks in reading order (depth-first, sibling order preserved)."""
        out: list[Block] = []

        def visit(block_id: str):
            out.append(self.blocks[block_id])
            for child in self.children[block_id]:
                visit(child)

        visit(self.root_id)
        return out

    def block_text(self, block_id: str) -> str:
        return "".join(self.elements[eid].content for eid in self.blocks[block_id].element_ids)

    def to_dict(self) -> dict:
        def visit(block_id: str) -> dict:
            b = self.blocks[block_id]
            return {
                "id": b.id,
                "label": b.label,
                "attrs": dict(sorted(b.attrs.items())),
                "elements": b.element_ids,
                "children": [visit(c) for c in self.children[block_id]],
            }

        return {
            "schema": self.SCHEMA,
            "file": self.file_id,
            "elements": [
                {
                    "id": e.id,
                    "content": e.content,
                    "start": e.start,
                    "end": e.end,
                    "ordinal": e.ordinal,
                    "type": e.element_type,
                    "attrs": dict(e.attrs),
                }
                for e in sorted(self.elements.values(), key=lambda e: e.ordinal)
            ],
            "tree": visit(self.root_id),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocTree":
        if d.get("schema") != cls.SCHEMA:
            raise FormatError(f"unsupported document tree schema {d.get('schema')!r}")
        tree = cls(d["file"])
        elements = {
            e["id"]: GraphicalElement(
                e["id"], e["content"], e["start"], e["end"], e["ordinal"], e["type"],
                tuple(sorted((e.get("attrs") or {}).items())),
            )
            for e in d["elements"]
        }

        def visit(node: dict, parent: str | None):
            if parent is None:
                block = tree.blocks[tree.root_id]
                block.label = node["label"]
                block.attrs = dict(node.get("attrs") or {})
            else:
                block = tree.add_block(node["label"], parent, node.get("attrs"))
            for eid in node.get("elements", []):
                tree.add_element(block.id, elements[eid])
            for child in node.get("children", []):
                visit(child, block.id)

        visit(d["tree"], None)
        for eid, element in elements.items():
            if eid not in tree.elements:
                tree.register_element(element)
        return tree


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

_HEADING_NUMBERED = re.compile(r"^(\d+(?:\.\d+)*)[.)]?\s+\S")
_HEADING_HASH = re.compile(r"^(#{1,6})\s+\S")
_HEADING_ALLCAPS = re.compile(r"^[A-Z][A-Z0-9 ,&'-]{2,58}$")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)]|[a-z]\))\s+\S")
_CAPTION = re.compile(r"^(?:Figure|Table|Fig\.)\s+\d+", re.IGNORECASE)


def _heading_level(line: str) -> int | None:
    m = _HEADING_NUMBERED.match(line)
    if m:
        return m.group(1).count(".") + 1
    m = _HEADING_HASH.match(line)
    if m:
        return len(m.group(1))
    if _HEADING_ALLCAPS.match(line) and not line.endswith((".", "!", "?")):
        return 1
    return None


def extract(file: SourceFile, dm: DiscourseModel) -> DocTree:
    """Segmentation, classification and structuring of a physical file.

    Every byte of the file is covered by exactly one graphical element; a
    block references each element at most once.
    """
    ext = file.extension
    if ext in HTML_EXTENSIONS:
        return _extract_html(file)
    if ext in CSV_EXTENSIONS:
        return _extract_csv(file)
    if ext and ext not in {".txt", ".md", ".text", ""}:
        raise FormatError(f"unsupported file format {ext!r} for {file.id}")
    return _extract_text(file)


def _line_elements(file: SourceFile) -> list[GraphicalElement]:
    """Partition the file into one element per physical line."""
    data = file.data
    elements = []
    start = 0
    ordinal = 0
    while start < len(data):
        newline = data.find(b"\n", start)
        end = len(data) if newline == -1 else newline + 1
        content = data[start:end].decode("utf-8", errors="replace")
        etype = "blank" if not content.strip() else "span"
        elements.append(GraphicalElement(f"e{ordinal}", content, start, end, ordinal, etype))
        ordinal += 1
        start = end
    return elements


def _extract_text(file: SourceFile) -> DocTree:
    tree = DocTree(file.id)
    elements = _line_elements(file)

    # classification: group consecutive span lines into logical blocks
    pending: list[GraphicalElement] = []
    classified: list[tuple[str, dict, list[GraphicalElement]]] = []

    def flush_pending():
        if pending:
            classified.append(("_paragraph", {}, list(pending)))
            pending.clear()

    for element in elements:
        if element.element_type == "blank":
            flush_pending()
            tree.register_element(element)
            continue
        line = element.content.rstrip("\n")
        level = _heading_level(line)
        if level is not None:
            flush_pending()
            classified.append(("_section", {"heading": normalize_ws(line), "level": str(level)}, [element]))
        elif _CAPTION.match(line.strip()):
            flush_pending()
            classified.append(("_caption", {}, [element]))
        elif _BULLET.match(line):
            flush_pending()
            classified.append(("_bullet_point", {}, [element]))
        else:
            pending.append(element)
    flush_pending()

    # structuring: sections nest by level, content attaches to the open section
    stack: list[tuple[int, str]] = [(0, tree.root_id)]
    for label, attrs, elems in classified:
        if label == "_section":
            level = int(attrs["level"])
            while stack[-1][0] >= level:
                stack.pop()
            block = tree.add_block("_section", stack[-1][1], attrs)
            stack.append((level, block.id))
        else:
            block = tree.add_block(label, stack[-1][1])
        for e in elems:
            tree.add_element(block.id, e)
    return tree


def _extract_csv(file: SourceFile) -> DocTree:
    tree = DocTree(file.id)
    for element in _line_elements(file):
        if element.element_type == "blank":
            tree.register_element(element)
            continue
        block = tree.add_block("_table_cell", tree.root_id, {"row": str(element.ordinal)})
        tree.add_element(block.id, element)
    return tree


_BLOCK_TAGS = {
    "p": "_paragraph",
    "li": "_bullet_point",
    "td": "_table_cell",
    "th": "_table_cell",
    "caption": "_caption",
    "figcaption": "_caption",
    "title": "_title",
}
_HEADING_TAGS = {f"h{i}": i for i in range(1, 7)}
_SKIP_TAGS = {"script", "style", "head"}


class _HtmlExtractor(HTMLParser):
    def __init__(self, file: SourceFile):
        super().__init__(convert_charrefs=True)
        self.file = file
        self.text = file.data.decode("utf-8", errors="replace")
        self.line_starts = [0]
        for i, ch in enumerate(self.text):
            if ch == "\n":
                self.line_starts.append(i + 1)
        byte_offsets = [0]
        for ch in self.text:
            byte_offsets.append(byte_offsets[-1] + len(ch.encode("utf-8")))
        self.byte_offsets = byte_offsets
        self.tree = DocTree(file.id)
        self.section_stack: list[tuple[int, str]] = [(0, self.tree.root_id)]
        self.block_id: str | None = None
        self.current_tag = "body"
        self.skip_depth = 0
        self.ordinal = 0
        self.heading_of: dict[str, int] = {}

    def _char_pos(self) -> int:
        line, col = self.getpos()
        return self.line_starts[line - 1] + col

    def _byte_range(self, char_start: int, char_end: int) -> tuple[int, int]:
        return self.byte_offsets[char_start], self.byte_offsets[char_end]

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self.skip_depth += 1
            return
        if tag in _HEADING_TAGS:
            level = _HEADING_TAGS[tag]
            while self.section_stack[-1][0] >= level:
                self.section_stack.pop()
            block = self.tree.add_block("_section", self.section_stack[-1][1], {"level": str(level)})
            self.section_stack.append((level, block.id))
            self.block_id = block.id
            self.current_tag = tag
        elif tag in _BLOCK_TAGS:
            block = self.tree.add_block(_BLOCK_TAGS[tag], self.section_stack[-1][1])
            self.block_id = block.id
            self.current_tag = tag

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self.skip_depth = max(0, self.skip_depth - 1)
            return
        if tag in _BLOCK_TAGS or tag in _HEADING_TAGS:
            self.block_id = None
            self.current_tag = "body"

    def handle_data(self, data):
        if self.skip_depth or not data.strip():
            return
        char_start = self._char_pos()
        start, end = self._byte_range(char_start, char_start + len(data))
        if self.block_id is None:
            block = self.tree.add_block("_paragraph", self.section_stack[-1][1])
            self.block_id = block.id
            self.current_tag = "body"
        element = GraphicalElement(
            f"e{self.ordinal}", data, start, end, self.ordinal, self.current_tag
        )
        self.ordinal += 1
        self.tree.add_element(self.block_id, element)
        block = self.tree.blocks[self.block_id]
        if block.label == "_section" and "heading" not in block.attrs:
            block.attrs["heading"] = normalize_ws(data)
        if self.current_tag == "body":
            self.block_id = None


def _extract_html(file: SourceFile) -> DocTree:
    parser = _HtmlExtractor(file)
    parser.feed(parser.text)
    parser.close()
    return parser.tree


# ---------------------------------------------------------------------------
# Sentence segmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sentence:
    """Sentence text plus its full physical provenance."""

    text: str
    src: tuple[tuple[str, tuple[int, int]], ...]  # (block id, file byte range)
    file_id: str
    block_id: str
    index: int = 0

    def byte_ranges(self) -> list[tuple[int, int]]:
        return [r for _, r in self.src]


ABBREVIATIONS = {
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "no", "vs", "etc", "fig",
    "e.g", "i.e", "cf", "al", "approx", "dept", "est", "inc", "ltd", "co", "corp", "u.s",
}

_SENT_END = re.compile(r"[.!?]+[\"')\]]*(?=\s|$)")


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for m in _SENT_END.finditer(text):
        end = m.end()
        before = text[start : m.start()]
        last_word = re.findall(r"[\w.]+$", before)
        raw = last_word[0].rstrip(".") if last_word else ""
        token = raw.lower()
        if token in ABBREVIATIONS:
            continue
        if len(raw) == 1 and raw.isalpha() and raw.isupper():
            continue  # single initials such as "J. Smith"
        if re.fullmatch(r"\d+(\.\d+)*", token) and not text[start : m.start()].strip(" \t0123456789.)"):
            continue  # enumeration marker such as "1." or "2.3" opening a heading
        nxt = text[end:].lstrip()
        if "." in m.group() and nxt and nxt[0].islower() and not m.group().startswith(("!", "?")):
            continue  # mid-sentence period followed by a lowercase continuation
        spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return [(a, b) for a, b in spans if text[a:b].strip()]


def sentence_segment(tree: DocTree) -> list[Sentence]:
    """Sentences in reading order with complete byte-level provenance."""
    out: list[Sentence] = []
    for block in tree.walk():
        if not block.element_ids:
            continue
        text = tree.block_text(block.id)
        # char offset -> (element, element-local offset) mapping
        bounds: list[tuple[int, int, GraphicalElement]] = []
        cursor = 0
        for eid in block.element_ids:
            element = tree.elements[eid]
            bounds.append((cursor, cursor + len(element.content), element))
            cursor += len(element.content)

        def to_ranges(a: int, b: int) -> tuple[tuple[str, tuple[int, int]], ...]:
            ranges = []
            for lo, hi, element in bounds:
                s, e = max(a, lo), min(b, hi)
                if s >= e:
                    continue
                # element content is the exact decoded byte slice; relate char
                # offsets back to bytes within the element
                prefix = element.content[: s - lo]
                piece = element.content[s - lo : e - lo]
                byte_start = element.start + len(prefix.encode("utf-8"))
                byte_end = byte_start + len(piece.encode("utf-8"))
                ranges.append((block.id, (byte_start, byte_end)))
            return tuple(ranges)

        for a, b in _sentence_spans(text):
            # trim surrounding whitespace but keep provenance exact
            piece = text[a:b]
            lead = len(piece) - len(piece.lstrip())
            trail = len(piece) - len(piece.rstrip())
            a2, b2 = a + lead, b - trail
            if a2 >= b2:
                continue
            out.append(
                Sentence(
                    text=text[a2:b2],
                    src=to_ranges(a2, b2),
                    file_id=tree.file_id,
                    block_id=block.id,
                    index=len(out),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Annotation: deterministic rule/lexicon tagger + shallow dependencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # char offsets within the sentence text
    end: int
    pos: str
    lemma: str


@dataclass(frozen=True)
class Entity:
    text: str
    start: int
    end: int
    etype: str  # NAME | DATE | GPE


@dataclass(frozen=True)
class AnnotatedSentence:
    base: Sentence
    tokens: tuple[Token, ...]
    entities: tuple[Entity, ...]
    heads: tuple[int, ...]  # head index per token; root points at itself
    labels: tuple[str, ...]
    attrs: tuple[tuple[str, str], ...] = ()
    span_map: SpanMap | None = None  # pre-substitution provenance, if any

    def __post_init__(self):
        if len(self.tokens) != len(self.heads) or len(self.tokens) != len(self.labels):
            raise ValidationError("token/head/label arity mismatch")
        roots = [i for i, h in enumerate(self.heads) if h == i]
        if self.tokens and len(roots) != 1:
            raise ValidationError("dependency parse must have exactly one root")
        # acyclicity: every chain must reach the root
        for i in range(len(self.tokens)):
            seen, j = set(), i
            while self.heads[j] != j:
                if j in seen:
                    raise ValidationError("dependency parse has a cycle")
                seen.add(j)
                j = self.heads[j]

    @property
    def root(self) -> int | None:
        for i, h in enumerate(self.heads):
            if h == i:
                return i
        return None

    def token_byte_ranges(self, i: int) -> list[tuple[int, int]]:
        """File byte ranges of one token, through any substitution map."""
        token = self.tokens[i]
        if self.span_map is not None:
            char_spans = self.span_map.map_range(token.start, token.end)
        else:
            char_spans = [(token.start, token.end)]
        out = []
        for a, b in char_spans:
            out.extend(_char_span_to_bytes(self.base, a, b))
        return out

    def subject_index(self) -> int | None:
        for i, lbl in enumerate(self.labels):
            if lbl in ("nsubj", "nsubjpass"):
                return i
        return None


def _char_span_to_bytes(sentence: Sentence, a: int, b: int) -> list[tuple[int, int]]:
    """Map a char span of the sentence text onto file byte ranges via src.

    Valid because the sentence text is exactly the concatenation of its src
    byte slices, in order.
    """
    out = []
    cursor = 0
    for _block, (byte_start, byte_end) in sentence.src:
        piece_chars = _byte_len_to_chars(sentence.text, cursor, byte_end - byte_start)
        lo, hi = max(a, cursor), min(b, cursor + piece_chars)
        if lo < hi:
            prefix = sentence.text[cursor:lo]
            piece = sentence.text[lo:hi]
            s = byte_start + len(prefix.encode("utf-8"))
            out.append((s, s + len(piece.encode("utf-8"))))
        cursor += piece_chars
    return out


def _byte_len_to_chars(text: str, char_offset: int, byte_len: int) -> int:
    """Number of characters from ``char_offset`` that encode to byte_len."""
    total = 0
    count = 0
    for ch in text[char_offset:]:
        total += len(ch.encode("utf-8"))
        if total > byte_len:
            break
        count += 1
        if total == byte_len:
            break
    return count


DETERMINERS = {"the", "a", "an", "this", "that", "these", "those", "each", "every", "some", "any", "all", "both", "no"}
PRONOUNS = {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
            "who", "whom", "which", "what", "where", "when", "why", "how",
            "his", "hers", "its", "their", "theirs", "my", "your", "our",
            "himself", "herself", "itself", "themselves", "something", "someone"}
WH_WORDS = {"who", "whom", "which", "what", "where", "when", "why", "how", "whose"}
ADPOSITIONS = {"in", "on", "at", "of", "for", "with", "from", "by", "during", "into", "onto",
               "about", "over", "under", "between", "through", "within", "against", "across",
               "after", "before", "near", "around", "via", "per", "without", "upon", "despite"}
COORDINATORS = {"and", "or", "but", "nor", "yet"}
SUBORDINATORS = {"because", "since", "although", "though", "while", "if", "unless", "whereas", "that", "whether"}
AUXILIARIES = {"is", "am", "are", "was", "were", "be", "been", "being",
               "has", "have", "had", "having", "do", "does", "did"}
MODALS = {"can", "could", "may", "might", "must", "shall", "should", "will", "would"}
NEGATIONS = {"not", "never", "n't", "cannot"}
ADVERBS = {"very", "quite", "often", "always", "usually", "rarely", "however", "also",
           "then", "now", "here", "there", "too", "first", "next", "finally", "yesterday",
           "today", "well", "fast", "hard", "far", "late", "early", "soon", "again",
           "almost", "never", "together", "alone", "south", "north", "east", "west"}

IRREGULAR_VERBS = {
    "ate": "eat", "eaten": "eat", "flew": "fly", "flown": "fly", "was": "be", "were": "be",
    "is": "be", "are": "be", "am": "be", "been": "be", "being": "be", "ran": "run",
    "said": "say", "made": "make", "took": "take", "taken": "take", "gave": "give",
    "given": "give", "went": "go", "gone": "go", "saw": "see", "seen": "see",
    "found": "find", "thought": "think", "threw": "throw", "thrown": "throw",
    "drank": "drink", "drunk": "drink", "built": "build", "kept": "keep", "left": "leave",
    "held": "hold", "wrote": "write", "written": "write", "grew": "grow", "grown": "grow",
    "caught": "catch", "won": "win", "lost": "lose", "paid": "pay", "sent": "send",
    "spent": "spend", "rose": "rise", "fell": "fall", "fallen": "fall",
    "fought": "fight", "chose": "choose", "chosen": "choose",
    "laid": "lay", "lay": "lie", "lain": "lie", "did": "do", "done": "do", "has": "have",
    "had": "have", "swam": "swim", "swum": "swim", "broke": "break", "broken": "break",
    "fed": "feed", "met": "meet", "sang": "sing", "sung": "sing", "led": "lead",
    "knew": "know", "known": "know", "came": "come", "got": "get", "gotten": "get",
    "showed": "show", "shown": "show", "died": "die", "lived": "live",
}

COMMON_VERBS = {
    "be", "have", "do", "say", "make", "go", "take", "come", "see", "know", "get", "give",
    "find", "think", "tell", "become", "show", "leave", "feel", "put", "bring", "begin",
    "keep", "hold", "write", "stand", "hear", "let", "mean", "set", "meet", "run", "move",
    "live", "believe", "happen", "appear", "include", "continue", "produce", "contain",
    "eat", "fly", "swim", "walk", "sing", "talk", "speak", "mimic", "imitate", "play",
    "reduce", "cause", "lead", "result", "affect", "protect", "require", "use", "need",
    "help", "grow", "build", "create", "form", "provide", "support", "carry", "remodel",
    "regulate", "trigger", "prevent", "improve", "increase", "decrease", "depend",
    "occur", "remain", "involve", "acquire", "buy", "sell", "cost", "fail", "die",
    "drink", "hunt", "feed", "breathe", "lay", "nest", "migrate", "learn", "teach",
    "preheat", "bake", "mix", "add", "stir", "pour", "cool", "serve", "whisk", "chop",
    "sleep", "chase", "bark", "dive", "jump", "climb", "sail", "push", "pull",
    "open", "close", "wash", "cut", "cook", "boil", "freeze", "melt", "store",
    "throw", "catch", "win", "lose", "pay", "send", "spend", "read", "rise",
    "fall", "fight", "choose", "confirm", "suggest", "report", "observe",
}

_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ity", "ance", "ence", "ism", "ist", "ology", "ware")
_ADJ_SUFFIXES = ("ous", "ful", "ive", "ible", "able", "ical", "ish", "less")
_TOKEN_RE = re.compile(r"[A-Za-z]+(?:['’][A-Za-z]+)?|\d+(?:[.,]\d+)*|\S")

_GPE_GAZETTEER = {"europe", "asia", "africa", "america", "australia", "antarctica", "india",
                  "japan", "brazil", "france", "london", "paris", "tokyo", "canada", "china"}


def verb_lemma(word: str) -> str:
    w = word.lower()
    if w in IRREGULAR_VERBS:
        return IRREGULAR_VERBS[w]
    for suffix, restores in (("ies", ["y"]), ("ing", ["", "e"]), ("ed", ["", "e"]), ("es", ["", "e"]), ("s", [""])):
        if w.endswith(suffix) and len(w) > len(suffix) + 1:
            stem = w[: -len(suffix)]
            for restore in restores:
                candidate = stem + restore
                if candidate in COMMON_VERBS:
                    return candidate
            if suffix in ("s", "es"):
                continue
            return stem
    return w


def noun_lemma(word: str) -> str:
    w = word.lower()
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith(("ses", "xes", "zes", "ches", "shes")) and len(w) > 4:
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) > 3:
        return w[:-1]
    return w


def _tag_tokens(text: str) -> list[Token]:
    raw = [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
    tokens: list[Token] = []
    verb_seen = False
    for i, (word, start, end) in enumerate(raw):
        lower = word.lower()
        pos = None
        if not any(c.isalnum() for c in word):
            pos = "PUNCT"
        elif word[0].isdigit():
            pos = "NUM"
        elif lower in NEGATIONS:
            pos = "PART"
        elif lower in MODALS or lower in AUXILIARIES:
            pos = "AUX"
        elif lower in DETERMINERS:
            pos = "DET"
        elif lower in PRONOUNS:
            pos = "PRON"
        elif lower == "to":
            nxt = raw[i + 1][0].lower() if i + 1 < len(raw) else ""
            pos = "PART" if verb_lemma(nxt) in COMMON_VERBS else "ADP"
        elif lower in ADPOSITIONS:
            pos = "ADP"
        elif lower in COORDINATORS:
            pos = "CCONJ"
        elif lower in SUBORDINATORS:
            pos = "SCONJ"
        elif lower in ADVERBS or (lower.endswith("ly") and len(lower) > 3):
            pos = "ADV"
        if pos is None and word[0].isupper() and i > 0:
            pos = "PROPN"
        if pos is None:
            prev_pos = tokens[-1].pos if tokens else None
            prev_content = next((t.pos for t in reversed(tokens) if t.pos != "PUNCT"), None)
            in_verbs = verb_lemma(lower) in COMMON_VERBS
            if in_verbs and prev_pos in ("AUX", "PART") :
                pos = "VERB"
            elif in_verbs and prev_content in ("NOUN", "PROPN", "PRON"):
                pos = "VERB"
            elif in_verbs and not verb_seen and lower.endswith(("ed", "ing")):
                pos = "VERB"
            elif lower.endswith(_NOUN_SUFFIXES):
                pos = "NOUN"
            elif lower.endswith(_ADJ_SUFFIXES):
                pos = "ADJ"
            elif in_verbs and not verb_seen and i == 0:
                pos = "VERB"  # imperative opener
            else:
                pos = "NOUN"
        if pos == "VERB":
            verb_seen = True
        lemma = verb_lemma(lower) if pos in ("VERB", "AUX") else (
            noun_lemma(lower) if pos in ("NOUN", "PROPN") else lower
        )
        tokens.append(Token(word, start, end, pos, lemma))
    return tokens


def _find_entities(tokens: list[Token]) -> list[Entity]:
    entities: list[Entity] = []
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if t.pos == "NUM" and re.fullmatch(r"[12]\d{3}", t.text):
            entities.append(Entity(t.text, t.start, t.end, "DATE"))
            i += 1
            continue
        if t.pos == "PROPN":
            j = i
            while j + 1 < len(tokens) and tokens[j + 1].pos == "PROPN":
                j += 1
            text = " ".join(tok.text for tok in tokens[i : j + 1])
            etype = "GPE" if any(tok.text.lower() in _GPE_GAZETTEER for tok in tokens[i : j + 1]) else "NAME"
            if i > 0 and tokens[i - 1].lemma == "in":
                etype = "GPE"
            entities.append(Entity(text, tokens[i].start, tokens[j].end, etype))
            i = j + 1
            continue
        i += 1
    return entities


def _parse_dependencies(tokens: list[Token]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    n = len(tokens)
    if n == 0:
        return (), ()
    heads = [-1] * n
    labels = ["dep"] * n

    verb_ix = [i for i, t in enumerate(tokens) if t.pos == "VERB"]
    aux_ix = [i for i, t in enumerate(tokens) if t.pos == "AUX"]
    if verb_ix:
        root = verb_ix[0]
    elif aux_ix:
        root = aux_ix[0]
    else:
        root = next((i for i, t in enumerate(tokens) if t.pos in ("NOUN", "PROPN", "PRON")), 0)
    heads[root] = root
    labels[root] = "root"

    is_passive = any(
        tokens[a].lemma == "be" for a in aux_ix if a < root
    ) and tokens[root].pos == "VERB" and (
        tokens[root].text.lower().endswith(("ed", "en", "wn", "ne", "ut", "lt"))
        or tokens[root].text.lower() in IRREGULAR_VERBS
    )

    def np_head(index: int) -> int:
        """Head of the noun run containing ``index`` (its last noun)."""
        j = index
        while j + 1 < n and tokens[j + 1].pos in ("NOUN", "PROPN"):
            j += 1
        return j

    # noun-phrase internals: determiners, adjectives and compounds lean on the
    # final noun of their run (the already-assigned root is never re-headed)
    for i, t in enumerate(tokens):
        if i == root:
            continue
        if t.pos in ("DET", "ADJ") :
            j = i + 1
            while j < n and tokens[j].pos in ("ADJ", "NOUN", "PROPN"):
                if tokens[j].pos in ("NOUN", "PROPN"):
                    heads[i] = np_head(j)
                    labels[i] = "det" if t.pos == "DET" else "amod"
                    break
                j += 1
        elif t.pos in ("NOUN", "PROPN") and i + 1 < n and tokens[i + 1].pos in ("NOUN", "PROPN"):
            target = np_head(i)
            if target != i:
                heads[i] = target
                labels[i] = "compound"

    subject_assigned = False
    object_assigned = False
    for i, t in enumerate(tokens):
        if heads[i] != -1:
            continue
        if t.pos in ("NOUN", "PROPN", "PRON"):
            if i < root and not subject_assigned:
                heads[i] = root
                labels[i] = "nsubjpass" if is_passive else "nsubj"
                subject_assigned = True
            elif i > root:
                # pobj when a preposition opens this NP, object otherwise
                k = i - 1
                while k > root and tokens[k].pos in ("DET", "ADJ", "NOUN", "PROPN"):
                    k -= 1
                if k >= 0 and tokens[k].pos == "ADP":
                    heads[i] = k
                    labels[i] = "pobj"
                elif not object_assigned:
                    heads[i] = root
                    labels[i] = "attr" if tokens[root].lemma == "be" else "obj"
                    object_assigned = True
                else:
                    heads[i] = root
                    labels[i] = "nmod"
            else:
                heads[i] = root
                labels[i] = "dep"
        elif t.pos == "AUX" and i != root:
            heads[i] = root
            labels[i] = "auxpass" if is_passive and t.lemma == "be" else "aux"
        elif t.pos == "ADP":
            anchor = root
            for j in range(i - 1, -1, -1):
                if tokens[j].pos in ("NOUN", "PROPN", "VERB"):
                    anchor = j if tokens[j].pos == "VERB" else root
                    break
            heads[i] = anchor
            labels[i] = "prep"
        elif t.pos == "PART" and t.text.lower() in NEGATIONS or t.text.lower() == "not":
            heads[i] = root
            labels[i] = "neg"
        elif t.pos == "ADV":
            heads[i] = root
            labels[i] = "advmod"
        else:
            heads[i] = root
            labels[i] = "punct" if t.pos == "PUNCT" else "dep"
    return tuple(heads), tuple(labels)


@dataclass(frozen=True)
class SubstitutionRule:
    id: str
    pattern: str  # regex over sentence text
    replacement: str


@dataclass(frozen=True)
class CorrectionRule:
    id: str
    token_regex: str
    set_pos: str


DEFAULT_PRE_SUBSTITUTIONS = (
    SubstitutionRule("presub.cannot", r"\bcannot\b", "can not"),
    SubstitutionRule("presub.wont", r"\bwon't\b", "will not"),
    SubstitutionRule("presub.nt", r"(?<=\w)n't\b", " not"),
)


@dataclass(frozen=True)
class AnnotatorContract:
    """Pluggable annotation provider with its correction rule lists.

    ``annotate_text(text) -> (tokens, entities, heads, labels)`` must be
    deterministic for a fixed provider and rule set.
    """

    name: str
    annotate_text: "callable"
    pre_substitutions: tuple[SubstitutionRule, ...] = ()
    post_corrections: tuple[CorrectionRule, ...] = ()


def _default_annotate_text(text: str):
    tokens = _tag_tokens(text)
    entities = _find_entities(tokens)
    heads, labels = _parse_dependencies(tokens)
    return tokens, entities, heads, labels


def default_annotator() -> AnnotatorContract:
    return AnnotatorContract(
        name="rulebased-v1",
        annotate_text=_default_annotate_text,
        pre_substitutions=DEFAULT_PRE_SUBSTITUTIONS,
    )


def annotate_sentence(sentence: Sentence, provider: AnnotatorContract) -> AnnotatedSentence:
    text = sentence.text
    edits = []
    for rule in provider.pre_substitutions:
        for m in re.finditer(rule.pattern, text):
            edits.append((m.start(), m.end(), m.expand(rule.replacement)))
    span_map = None
    if edits:
        text, span_map = apply_edits(text, edits)
    tokens, entities, heads, labels = provider.annotate_text(text)
    if provider.post_corrections:
        fixed = []
        for token in tokens:
            pos = token.pos
            for rule in provider.post_corrections:
                if re.fullmatch(rule.token_regex, token.text):
                    pos = rule.set_pos
            fixed.append(replace(token, pos=pos))
        tokens = fixed
    return AnnotatedSentence(
        base=sentence,
        tokens=tuple(tokens),
        entities=tuple(entities),
        heads=tuple(heads),
        labels=tuple(labels),
        span_map=span_map,
    )


def annotate(sentences: list[Sentence], provider: AnnotatorContract | None = None) -> list[AnnotatedSentence]:
    """Annotate every sentence; a per-sentence provider failure yields a
    minimal fallback annotation flagged with the error instead of aborting."""
    provider = provider or default_annotator()
    out = []
    for sentence in sentences:
        try:
            out.append(annotate_sentence(sentence, provider))
        except Exception as err:  # provider failures must not kill the pipeline
            tokens = tuple(
                Token(m.group(), m.start(), m.end(), "X", m.group().lower())
                for m in _TOKEN_RE.finditer(sentence.text)
            )
            heads = tuple(0 for _ in tokens)
            labels = tuple("root" if i == 0 else "dep" for i in range(len(tokens)))
            out.append(
                AnnotatedSentence(
                    base=sentence, tokens=tokens, entities=(), heads=heads, labels=labels,
                    attrs=(("annotation_error", str(err)),),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Linguistic feature analysis
# ---------------------------------------------------------------------------

FEATURE_KEYS = ("voice", "animacy", "case", "definiteness", "gender", "modality",
                "aspect", "tense", "polarity")

OBLIGATIVE_MODALS = {"must", "shall", "should", "ought"}
POSSIBILITY_MODALS = {"can", "could", "may", "might"}
PREDICTIVE_MODALS = {"will", "would"}

_PAST_TENSE = re.compile(r".*(ed)$")
PAST_AUX = {"was", "were", "did", "had"}
IRREGULAR_PAST = {"ate", "flew", "ran", "said", "made", "took", "gave", "went", "saw",
                  "found", "thought", "threw", "drank", "built", "kept", "left", "held",
                  "wrote", "grew", "swam", "broke", "fed", "met", "sang", "led", "knew",
                  "came", "got", "showed", "laid", "caught", "won", "lost", "paid",
                  "sent", "spent", "rose", "fell", "fought", "chose", "began", "brought",
                  "became", "felt", "heard", "stood", "meant"}
ANIMATE_PRONOUNS = {"he", "she", "who", "him", "her", "i", "we", "you", "they", "them", "us", "me"}
INANIMATE_PRONOUNS = {"it", "which"}


@dataclass(frozen=True)
class LinguisticSentence:
    base: AnnotatedSentence
    features: tuple[tuple[str, str], ...]

    def feature(self, key: str) -> str | None:
        return dict(self.features).get(key)

    @property
    def text(self) -> str:
        return self.base.base.text


def _finite_verb(s: AnnotatedSentence) -> Token | None:
    root = s.root
    if root is None:
        return None
    token = s.tokens[root]
    return token if token.pos in ("VERB", "AUX") else None


def analyze_sentence(s: AnnotatedSentence) -> LinguisticSentence:
    features: dict[str, str] = {}
    tokens = s.tokens
    lowers = [t.text.lower() for t in tokens]
    root = s.root
    finite = _finite_verb(s)

    modal = next((t for t in tokens if t.pos == "AUX" and t.text.lower() in MODALS), None)
    if modal is not None:
        m = modal.text.lower()
        if m in OBLIGATIVE_MODALS:
            features["modality"] = "obligative"
        elif m in POSSIBILITY_MODALS:
            features["modality"] = "possible"
        elif m in PREDICTIVE_MODALS:
            features["modality"] = "predictive"

    if finite is not None:
        aux_before = [t for t in tokens if t.pos == "AUX" and t.start < finite.start]
        be_aux = [t for t in aux_before if t.lemma == "be"]
        have_aux = [t for t in aux_before if t.lemma == "have"]
        root_text = finite.text.lower()
        participle = root_text.endswith(("ed", "en", "wn", "ne")) or root_text in IRREGULAR_VERBS
        if be_aux and finite.pos == "VERB" and participle and not root_text.endswith("ing"):
            features["voice"] = "passive"
        else:
            features["voice"] = "active"
        if be_aux and root_text.endswith("ing"):
            features["aspect"] = "progressive"
        elif have_aux and participle:
            features["aspect"] = "perfect"
        else:
            features["aspect"] = "simple"
        if modal is not None and modal.text.lower() in ("will", "shall"):
            features["tense"] = "future"
        elif modal is not None:
            pass  # modals leave tense underdetermined
        else:
            anchor = aux_before[0] if aux_before else finite
            a = anchor.text.lower()
            if a in PAST_AUX or a in IRREGULAR_PAST or (
                anchor.pos == "VERB" and _PAST_TENSE.match(a) and a not in COMMON_VERBS
            ):
                features["tense"] = "past"
            else:
                features["tense"] = "present"
        features["polarity"] = "negative" if any(l in NEGATIONS or l == "not" for l in lowers) else "positive"

    subj = s.subject_index()
    if subj is not None:
        st = tokens[subj]
        lower = st.text.lower()
        if st.pos == "PRON":
            if lower in ANIMATE_PRONOUNS:
                features["animacy"] = "animate"
            elif lower in INANIMATE_PRONOUNS:
                features["animacy"] = "inanimate"
            if lower in ("i", "he", "she", "we", "they", "who"):
                features["case"] = "nominative"
            elif lower in ("me", "him", "her", "us", "them", "whom"):
                features["case"] = "accusative"
            if lower in ("he", "him", "his"):
                features["gender"] = "masculine"
            elif lower in ("she", "her", "hers"):
                features["gender"] = "feminine"
            elif lower == "it":
                features["gender"] = "neuter"
        if subj > 0 and tokens[subj - 1].pos == "DET":
            det = tokens[subj - 1].text.lower()
            if det == "the":
                features["definiteness"] = "definite"
            elif det in ("a", "an"):
                features["definiteness"] = "indefinite"
        elif st.pos == "PROPN":
            features["definiteness"] = "definite"

    return LinguisticSentence(base=s, features=tuple(sorted(features.items())))


def linguistic_analyze(sentences: list[AnnotatedSentence]) -> list[LinguisticSentence]:
    """Grammatical categories by curated rules; a feature that cannot be
    determined is absent, never guessed."""
    return [analyze_sentence(s) for s in sentences]


# ---------------------------------------------------------------------------
# Simplicity transformations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimplifyRule:
    id: str
    type: str  # substitute | split | split-coordination
    pattern: str = ""
    replacement: str = ""
    priority: int = 100


def load_simplify_rules() -> tuple[SimplifyRule, ...]:
    payload = json.loads(
        importlib_resources.files("gyan.resources").joinpath("simplify_rules.json").read_text("utf-8")
    )
    rules = tuple(
        SimplifyRule(r["id"], r["type"], r.get("pattern", ""), r.get("replacement", ""),
                     r.get("priority", 100))
        for r in payload["rules"]
    )
    return tuple(sorted(rules, key=lambda r: (r.priority, r.id)))


@dataclass(frozen=True)
class SimplifiedSentence:
    """A simplification output fragment with replayable provenance."""

    text: str
    src: tuple[tuple[str, tuple[int, int]], ...]
    file_id: str
    origin: int  # index of the source sentence
    derivation: tuple[str, ...]
    origin_sentence: Sentence
    to_origin: SpanMap
    annotated: AnnotatedSentence | None = None
    features: tuple[tuple[str, str], ...] = ()
    substituted: bool = False  # some span no longer byte-recovers

    def feature(self, key: str) -> str | None:
        return dict(self.features).get(key)

    def span_to_bytes(self, start: int, end: int) -> list[tuple[int, int]]:
        """File byte ranges behind a char span of the fragment text."""
        out: list[tuple[int, int]] = []
        for a, b in self.to_origin.map_range(start, end):
            out.extend(_char_span_to_bytes(self.origin_sentence, a, b))
        return out

    def token_byte_ranges(self, i: int) -> list[tuple[int, int]]:
        token = self.annotated.tokens[i]
        if self.annotated.span_map is not None:
            spans = self.annotated.span_map.map_range(token.start, token.end)
        else:
            spans = [(token.start, token.end)]
        out: list[tuple[int, int]] = []
        for a, b in spans:
            out.extend(self.span_to_bytes(a, b))
        return out


@dataclass
class _Fragment:
    text: str
    span_map: SpanMap  # back to the origin sentence text
    derivation: list[str]
    substituted: bool


def _fragment_src(sentence: Sentence, span_map: SpanMap, length: int):
    ranges: list[tuple[str, tuple[int, int]]] = []
    for a, b in span_map.map_range(0, length):
        for byte_range in _char_span_to_bytes(sentence, a, b):
            block = _block_of_range(sentence, byte_range)
            ranges.append((block, byte_range))
    return tuple(ranges)


def _block_of_range(sentence: Sentence, byte_range: tuple[int, int]) -> str:
    for block, (a, b) in sentence.src:
        if byte_range[0] >= a and byte_range[1] <= b:
            return block
    return sentence.block_id


def _has_verb(tokens: list[Token]) -> bool:
    return any(t.pos in ("VERB", "AUX") for t in tokens)


def _split_fragment(frag: _Fragment, cut_start: int, cut_end: int, rule_id: str) -> list[_Fragment]:
    """Split one fragment around [cut_start, cut_end); the separator text is
    consumed.  A side missing terminal punctuation borrows the original's."""
    text = frag.text
    terminal = re.search(r"[.!?]+\s*$", text)
    period = terminal.group().strip() if terminal else "."
    period_span = (terminal.start(), terminal.start() + len(period)) if terminal else None
    pieces: list[_Fragment] = []
    for lo, hi in ((0, cut_start), (cut_end, len(text))):
        raw = text[lo:hi]
        body = raw.strip()
        if not body:
            continue
        lead = lo + (len(raw) - len(raw.lstrip()))
        edits: list[tuple[int, int, str]] = [(0, lead, ""), (lead + len(body), len(text), "")]
        new_text, span_map = apply_edits(text, edits)
        if not re.search(r"[.!?]$", new_text):
            if period_span is not None and period_span[0] >= lead + len(body):
                # keep the original terminal punctuation span for provenance
                edits = [(0, lead, ""), (lead + len(body), period_span[0], ""),
                         (period_span[1], len(text), "")]
            else:
                edits = [(0, lead, ""), (lead + len(body), len(text), period)]
            new_text, span_map = apply_edits(text, edits)
        pieces.append(
            _Fragment(new_text, span_map.compose(frag.span_map),
                      frag.derivation + [rule_id], frag.substituted)
        )
    return pieces


def _try_rule(rule: SimplifyRule, frag: _Fragment, annotate_text) -> list[_Fragment] | None:
    """Apply one rule once; None when it does not fire."""
    text = frag.text
    if rule.type == "substitute":
        m = re.search(rule.pattern, text, re.IGNORECASE)
        if not m:
            return None
        new_text, edit_map = apply_edits(text, [(m.start(), m.end(), m.expand(rule.replacement))])
        return [
            _Fragment(new_text, edit_map.compose(frag.span_map), frag.derivation + [rule.id], True)
        ]
    if rule.type == "split":
        m = re.search(rule.pattern, text)
        if not m or not text[: m.start()].strip() or not text[m.end() :].strip():
            return None
        pieces = _split_fragment(frag, m.start(), m.end(), rule.id)
        return pieces if len(pieces) == 2 else None
    if rule.type == "split-coordination":
        tokens, _, _, _ = annotate_text(text)
        tokens = list(tokens)
        for i, t in enumerate(tokens):
            if t.pos != "CCONJ":
                continue
            left = [tok for tok in tokens[:i] if tok.pos != "PUNCT"]
            right = [tok for tok in tokens[i + 1 :] if tok.pos != "PUNCT"]
            if not (left and right and _has_verb(left) and _has_verb(right)):
                continue
            pieces = _split_fragment(frag, left[-1].end, right[0].start, rule.id)
            if len(pieces) == 2:
                return pieces
        return None
    raise ValidationError(f"unknown simplify rule type {rule.type!r}")


def simplify(
    sentences: list[LinguisticSentence],
    rules: tuple[SimplifyRule, ...] | None = None,
    provider: AnnotatorContract | None = None,
    iteration_cap: int = 100,
) -> list[SimplifiedSentence]:
    """Iterative rule application: after any rule fires the scan restarts at
    the first rule.  Each (rule, fragment text) pair may fire only once, so
    the loop terminates; exceeding the cap names the looping rule.
    """
    rules = rules if rules is not None else load_simplify_rules()
    provider = provider or default_annotator()
    out: list[SimplifiedSentence] = []
    for ls in sentences:
        sentence = ls.base.base
        queue = [_Fragment(sentence.text, SpanMap.identity(len(sentence.text)), [], False)]
        finished: list[_Fragment] = []
        iterations = 0
        fired: set[tuple[str, str]] = set()
        while queue:
            frag = queue.pop(0)
            iterations += 1
            if iterations > iteration_cap:
                last_rule = frag.derivation[-1] if frag.derivation else "<none>"
                raise SimplifyLoopError(last_rule, sentence.text)
            applied = False
            for rule in rules:
                key = (rule.id, frag.text)
                if key in fired:
                    continue
                result = _try_rule(rule, frag, provider.annotate_text)
                if result is not None:
                    fired.add(key)
                    queue = result + queue  # restart from rule 1 on the products
                    applied = True
                    break
            if not applied:
                finished.append(frag)
        for frag in finished:
            annotated = annotate_sentence(
                Sentence(frag.text, sentence.src, sentence.file_id, sentence.block_id, sentence.index),
                provider,
            )
            features = analyze_sentence(annotated).features
            out.append(
                SimplifiedSentence(
                    text=frag.text,
                    src=_fragment_src(sentence, frag.span_map, len(frag.text)),
                    file_id=sentence.file_id,
                    origin=sentence.index,
                    derivation=tuple(frag.derivation),
                    origin_sentence=sentence,
                    to_origin=frag.span_map,
                    annotated=annotated,
                    features=features,
                    substituted=frag.substituted,
                )
            )
    return out


def replay_derivation(
    origin_text: str,
    derivation: tuple[str, ...],
    rules: tuple[SimplifyRule, ...] | None = None,
    provider: AnnotatorContract | None = None,
) -> list[str]:
    """Re-apply a recorded rule sequence to the origin text; the fragment
    texts produced must contain the recorded output."""
    rules = rules if rules is not None else load_simplify_rules()
    provider = provider or default_annotator()
    by_id = {r.id: r for r in rules}
    frags = [_Fragment(origin_text, SpanMap.identity(len(origin_text)), [], False)]
    for rule_id in derivation:
        rule = by_id[rule_id]
        next_frags: list[_Fragment] = []
        fired = False
        for frag in frags:
            result = None if fired else _try_rule(rule, frag, provider.annotate_text)
            if result is not None:
                next_frags.extend(result)
                fired = True
            else:
                next_frags.append(frag)
        frags = next_frags
    return [f.text for f in frags]
