import pytest

from gyan.discourse import (
    DEFAULT_TEXTUAL_DM_ID,
    DiscourseModel,
    IdRule,
    RHETORICAL_EDGE_NAMES,
    RulePattern,
    STRUCTURAL_EDGE_NAMES,
    builtin_models,
    default_textual_model,
    evaluate_rules,
    identify_discourse_model,
    model_from_dict,
    model_to_dict,
)
from gyan.errors import RuleCompileError, ValidationError
from gyan.sources import source_from_text


class TestDefaultModel:
    def test_contains_stock_units(self):
        model = default_textual_model()
        assert {"Document", "Section", "TopicCluster", "Enumeration",
                "Example", "Table", "Figure", "Idea"} <= model.du_names()

    def test_contains_stock_edges(self):
        model = default_textual_model()
        assert "Elaboration" in model.relation_names()
        assert set(STRUCTURAL_EDGE_NAMES) <= model.relation_names()
        assert set(RHETORICAL_EDGE_NAMES) <= model.relation_names()

    def test_deterministic(self):
        assert default_textual_model() == default_textual_model()

    def test_validates_own_invariants(self):
        # constructing twice proves the frozen dataclass invariants hold
        model = default_textual_model()
        assert model.du_def("Section").name == "Section"


class TestRuleEvaluation:
    def test_empty_rule_list(self):
        assert evaluate_rules([], "anything") == []

    def test_regex_rule_with_capture(self):
        rule = RulePattern("r.chapter", "regex-on-text", r"^Chapter (\d+)", 1, r"chapter-\1")
        [match] = evaluate_rules([rule], "Chapter 12\nbody text")
        assert (match.start, match.end) == (0, 10)
        assert match.label == "chapter-12"
        assert match.captures == ("12",)

    def test_priority_wins_on_overlap(self):
        high = RulePattern("r.high", "regex-on-text", r"alpha beta", 1, "high")
        low = RulePattern("r.low", "regex-on-text", r"beta gamma", 2, "low")
        matches = evaluate_rules([high, low], "alpha beta gamma")
        assert [m.label for m in matches] == ["high"]

    def test_deterministic(self):
        rules = [
            RulePattern("r.a", "cue-lexicon", "because, since", 2),
            RulePattern("r.b", "regex-on-text", r"\bsince\b", 1, "b"),
        ]
        text = "since the start, because of rain, since then"
        assert evaluate_rules(rules, text) == evaluate_rules(rules, text)

    def test_malformed_regex_names_rule(self):
        with pytest.raises(RuleCompileError) as err:
            RulePattern("r.broken", "regex-on-text", r"([unclosed", 1)
        assert "r.broken" in str(err.value)

    def test_unknown_kind_rejected(self):
        with pytest.raises(RuleCompileError):
            RulePattern("r.x", "telepathy", "body", 1)


def specialized_web_model():
    return DiscourseModel(
        id="dm.web-article",
        name="Web Article",
        id_rules=(
            IdRule(RulePattern("id.article.html", "structural-predicate", "text-contains:<html", 1)),
            IdRule(RulePattern("id.article.tag", "structural-predicate", "text-contains:<article", 2)),
        ),
        du_defs=default_textual_model().du_defs,
        de_defs=default_textual_model().de_defs,
        parent="dm.web",
    )


class TestIdentification:
    def test_plain_text_falls_back_to_default(self):
        file = source_from_text("Just words.\n", "plain.txt")
        assert identify_discourse_model(file, [default_textual_model()]) == DEFAULT_TEXTUAL_DM_ID

    def test_html_file_hits_web_model(self):
        file = source_from_text("<html><body><p>hi</p></body></html>", "page.html")
        assert identify_discourse_model(file, builtin_models()) == "dm.web"

    def test_specialization_beats_parent(self):
        file = source_from_text("<html><article><p>hi</p></article></html>", "page.html")
        universe = builtin_models() + [specialized_web_model()]
        assert identify_discourse_model(file, universe) == "dm.web-article"

    def test_missing_default_is_an_error(self):
        file = source_from_text("x", "x.txt")
        with pytest.raises(ValidationError):
            identify_discourse_model(file, [specialized_web_model()])

    def test_pure_function_of_bytes(self):
        file = source_from_text("<html></html>", "a.html")
        same_bytes = source_from_text("<html></html>", "b.html")
        universe = builtin_models()
        assert identify_discourse_model(file, universe) == identify_discourse_model(same_bytes, universe)


class TestModelSerialization:
    def test_round_trip(self):
        for model in builtin_models() + [specialized_web_model()]:
            assert model_from_dict(model_to_dict(model)) == model

    def test_duplicate_du_names_rejected(self):
        payload = model_to_dict(default_textual_model())
        payload["du_defs"].append({"name": "Idea"})
        with pytest.raises(ValidationError):
            model_from_dict(payload)
