"""Exception hierarchy shared across the engine."""


class GyanError(Exception):
    """Base class for all engine errors."""


class NotFoundError(GyanError):
    """A referenced id, file or path does not exist."""


class ValidationError(GyanError):
    """An invariant of a domain type was violated."""


class CycleError(ValidationError):
    """A hypernym insertion or tree edge would create a cycle."""


class RuleCompileError(GyanError):
    """A declarative rule pattern failed to compile."""

    def __init__(self, rule_id: str, message: str):
        super().__init__(f"rule {rule_id!r}: {message}")
        self.rule_id = rule_id


class ClosureTruncated(GyanError):
    """Deductive closure did not reach a fixpoint within the round cap.

    Carries the partial result so callers can degrade gracefully.
    """

    def __init__(self, partial, rounds: int):
        super().__init__(f"no fixpoint within {rounds} rounds")
        self.partial = partial
        self.rounds = rounds


class ConvergenceError(GyanError):
    """An iterative grouping or rewriting stage exceeded its pass cap."""


class SimplifyLoopError(ConvergenceError):
    """Sentence simplification exceeded its iteration cap."""

    def __init__(self, rule_id: str, sentence: str):
        super().__init__(f"rule {rule_id!r} loops on: {sentence[:80]!r}")
        self.rule_id = rule_id


class FormatError(GyanError):
    """A source file has an unsupported or malformed format."""


class StageError(GyanError):
    """A pipeline stage failed; wraps the cause with stage name and position."""

    def __init__(self, stage: str, file_id: str, cause: Exception):
        super().__init__(f"stage {stage} failed on {file_id}: {cause}")
        self.stage = stage
        self.file_id = file_id
        self.cause = cause


class StoreVersionError(GyanError):
    """Persisted store schema version does not match this build."""


class ChecksumError(GyanError):
    """Persisted store content does not match its manifest checksum."""


class NoKnowledgeError(GyanError):
    """A query concept is absent from the knowledge store entirely.

    Distinct from an empty result: the store has nothing to say about the
    concept at all.
    """


class IntegrityError(GyanError):
    """An internal consistency guarantee was broken (should be impossible)."""


class UndefinedMetricError(GyanError):
    """A ranking metric was requested on an empty ranking."""
