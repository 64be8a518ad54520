"""Span bookkeeping for text rewrites.

Every rewrite (pre-substitution, simplification) must stay traceable to the
original characters, so edits are applied through a map that can answer
"which original span does this rewritten span come from".
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Segment:
    new_start: int
    new_end: int
    old_start: int
    old_end: int
    rewritten: bool  # replacement text: maps to the whole old span


class SpanMap:
    """Maps character ranges of a rewritten string back to the original."""

    def __init__(self, segments: list[Segment]):
        self.segments = sorted(segments, key=lambda s: s.new_start)

    @classmethod
    def identity(cls, length: int) -> "SpanMap":
        return cls([Segment(0, length, 0, length, False)])

    def map_range(self, start: int, end: int) -> list[tuple[int, int]]:
        """Original spans covering [start, end) of the rewritten text."""
        out: list[tuple[int, int]] = []
        for seg in self.segments:
            lo, hi = max(start, seg.new_start), min(end, seg.new_end)
            if lo >= hi:
                continue
            if seg.rewritten:
                span = (seg.old_start, seg.old_end)
            else:
                shift = seg.old_start - seg.new_start
                span = (lo + shift, hi + shift)
            if out and out[-1][1] >= span[0] and not seg.rewritten:
                out[-1] = (out[-1][0], max(out[-1][1], span[1]))
            elif not out or out[-1] != span:
                out.append(span)
        return out

    def compose(self, earlier: "SpanMap") -> "SpanMap":
        """Chain maps: self's original coordinates are ``earlier``'s rewritten
        coordinates; the result maps self's rewritten text to earlier's
        original text."""
        segments: list[Segment] = []
        for seg in self.segments:
            if seg.rewritten:
                for old_a, old_b in earlier.map_range(seg.old_start, seg.old_end):
                    segments.append(Segment(seg.new_start, seg.new_end, old_a, old_b, True))
                continue
            for eseg in earlier.segments:
                lo = max(seg.old_start, eseg.new_start)
                hi = min(seg.old_end, eseg.new_end)
                if lo >= hi:
                    continue
                new_lo = seg.new_start + (lo - seg.old_start)
                new_hi = seg.new_start + (hi - seg.old_start)
                if eseg.rewritten:
                    segments.append(Segment(new_lo, new_hi, eseg.old_start, eseg.old_end, True))
                else:
                    shift = eseg.old_start - eseg.new_start
                    segments.append(Segment(new_lo, new_hi, lo + shift, hi + shift, False))
        return SpanMap(segments)


def apply_edits(text: str, edits: list[tuple[int, int, str]]) -> tuple[str, SpanMap]:
    """Apply non-overlapping (start, end, replacement) edits; returns the new
    text plus the span map back to ``text``."""
    edits = sorted(edits)
    for (a1, b1, _), (a2, _b2, _) in zip(edits, edits[1:]):
        if a2 < b1:
            raise ValueError("overlapping edits")
    pieces: list[str] = []
    segments: list[Segment] = []
    cursor = 0
    new_pos = 0
    for start, end, replacement in edits:
        if start > cursor:
            chunk = text[cursor:start]
            segments.append(Segment(new_pos, new_pos + len(chunk), cursor, start, False))
            pieces.append(chunk)
            new_pos += len(chunk)
        if replacement:
            segments.append(Segment(new_pos, new_pos + len(replacement), start, end, True))
            pieces.append(replacement)
            new_pos += len(replacement)
        cursor = end
    if cursor < len(text):
        chunk = text[cursor:]
        segments.append(Segment(new_pos, new_pos + len(chunk), cursor, len(text), False))
        pieces.append(chunk)
    return "".join(pieces), SpanMap(segments)
