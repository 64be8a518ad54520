import random

import pytest
from hypothesis import given, settings, strategies as st

from gyan.errors import ClosureTruncated, CycleError, NotFoundError, ValidationError
from gyan.graph import (
    Calculus,
    ConceptDef,
    ContextFrame,
    EdgeKind,
    EdgePattern,
    EdgeTemplate,
    HYPERNYM_TRANSITIVITY,
    InferenceRule,
    RelationDef,
    Trace,
    TypedGraph,
    Universe,
    UNIVERSAL_FRAME,
    deductive_closure,
    derivation_depth,
    graphs_isomorphic,
    is_hypernym,
    logically_equivalent,
    subgraph_matches,
    wl_multiset,
    wl_signature,
)
from oracles import enumerate_embeddings, exhaustive_isomorphic, naive_closure

TRANSITIVITY_CAL = Calculus(axioms=(HYPERNYM_TRANSITIVITY,))


def seed_universe():
    u = Universe("concept")
    u.add(ConceptDef("animal", "a living creature"))
    u.add(ConceptDef("bird", "a feathered animal", hypernyms={"animal"}))
    u.add(ConceptDef("parrot", "a talking bird", hypernyms={"bird"}))
    u.add(ConceptDef("penguin", "a flightless bird", hypernyms={"bird"}))
    u.add(ConceptDef("mammal", "a warm-blooded animal", hypernyms={"animal"}))
    return u


def chain_graph(*labels, relation="hypernym"):
    g = TypedGraph()
    for a, b in zip(labels, labels[1:]):
        g.add_edge(a, b, relation)
    return g


class TestUniverse:
    def test_hypernym_reaches_ancestor(self):
        u = seed_universe()
        assert is_hypernym("bird", "parrot", u) is True

    def test_hypernym_is_reflexive(self):
        u = seed_universe()
        assert is_hypernym("parrot", "parrot", u) is True

    def test_hyponym_is_not_hypernym(self):
        u = seed_universe()
        assert is_hypernym("parrot", "bird", u) is False

    def test_unknown_id_raises(self):
        u = seed_universe()
        with pytest.raises(NotFoundError):
            is_hypernym("bird", "gryphon", u)

    def test_cycle_insert_rejected(self):
        u = Universe("concept")
        u.add(ConceptDef("a", "a", hypernyms={"b"}))
        with pytest.raises(CycleError):
            u.add(ConceptDef("b", "b", hypernyms={"a"}))
        # the failed insert must not leave the universe corrupted
        assert "b" not in u

    def test_duplicate_id_rejected(self):
        u = seed_universe()
        with pytest.raises(ValidationError):
            u.add(ConceptDef("parrot", "again"))

    def test_minimal_hypernym_prefers_most_specific(self):
        u = Universe("concept")
        u.add(ConceptDef("thing", "t"))
        u.add(ConceptDef("creature", "c", hypernyms={"thing"}))
        # both parents declared, but creature is below thing: creature wins
        u.add(ConceptDef("dog", "d", hypernyms={"thing", "creature"}))
        assert u.minimal_hypernym("dog") == "creature"

    def test_minimal_hypernym_lexicographic_tie(self):
        u = Universe("concept")
        u.add(ConceptDef("beta", "b"))
        u.add(ConceptDef("alpha", "a"))
        u.add(ConceptDef("x", "x", hypernyms={"beta", "alpha"}))
        assert u.minimal_hypernym("x") == "alpha"


class TestContextFrame:
    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            ContextFrame.of(flavor="sweet")

    def test_universal_subsumes_everything(self):
        assert UNIVERSAL_FRAME.subsumes(ContextFrame.of(temporal="past"))

    def test_constrained_requires_target_value(self):
        pattern = ContextFrame.of(modality="possible")
        assert pattern.subsumes(ContextFrame.of(modality="possible", temporal="past"))
        assert not pattern.subsumes(UNIVERSAL_FRAME)
        assert not pattern.subsumes(ContextFrame.of(modality="predictive"))

    def test_merge_conflict_is_none(self):
        a = ContextFrame.of(temporal="past")
        assert a.merged(ContextFrame.of(temporal="future")) is None
        merged = a.merged(ContextFrame.of(polarity="negative"))
        assert merged.to_dict() == {"temporal": "past", "polarity": "negative"}


class TestDeductiveClosure:
    def test_empty_graph_stays_empty(self):
        g = TypedGraph()
        out = deductive_closure(g, TRANSITIVITY_CAL)
        assert out.edge_count == 0

    def test_transitivity_adds_edge(self):
        g = chain_graph("A", "B", "C")
        out = deductive_closure(g, TRANSITIVITY_CAL)
        assert out.has_edge_key("A|hypernym|C||Unknown")
        assert out.edge_count == 3

    def test_closed_graph_unchanged(self):
        g = chain_graph("A", "B", "C")
        g.add_edge("A", "C", "hypernym")
        out = deductive_closure(g, TRANSITIVITY_CAL)
        assert out.edge_keys() == g.edge_keys()

    def test_idempotent(self):
        g = chain_graph("A", "B", "C", "D")
        once = deductive_closure(g, TRANSITIVITY_CAL)
        twice = deductive_closure(once, TRANSITIVITY_CAL)
        assert once.edge_keys() == twice.edge_keys()

    def test_monotone(self):
        g = chain_graph("A", "B", "C")
        out = deductive_closure(g, TRANSITIVITY_CAL)
        assert g.edge_keys() <= out.edge_keys()

    def test_derived_edge_carries_rule_trace(self):
        g = chain_graph("A", "B", "C")
        out = deductive_closure(g, TRANSITIVITY_CAL)
        derived = out.edge_by_key("A|hypernym|C||Unknown")
        [variant] = derived.trace.rule_variants()
        assert variant.rule_id == "ax.hypernym-transitivity"
        assert set(variant.premises) == {"A|hypernym|B||Unknown", "B|hypernym|C||Unknown"}

    def test_rule_order_independent(self):
        extra = InferenceRule(
            "r.flip",
            premises=(EdgePattern("?a", "r", "?b"),),
            conclusions=(EdgeTemplate("?b", "s", "?a"),),
        )
        g = chain_graph("A", "B", "C")
        g.add_edge("A", "B", "r")
        one = deductive_closure(g, Calculus(axioms=(HYPERNYM_TRANSITIVITY,), rules=(extra,)))
        two = deductive_closure(g, Calculus(axioms=(extra,), rules=(HYPERNYM_TRANSITIVITY,)))
        assert one.edge_keys() == two.edge_keys()

    def test_truncation_carries_partial(self):
        g = chain_graph(*[f"n{i}" for i in range(12)])
        with pytest.raises(ClosureTruncated) as err:
            deductive_closure(g, TRANSITIVITY_CAL, max_rounds=1)
        assert err.value.partial.edge_count > g.edge_count

    def test_premise_frame_constraint(self):
        rule = InferenceRule(
            "r.past-only",
            premises=(EdgePattern("?a", "saw", "?b", ContextFrame.of(temporal="past")),),
            conclusions=(EdgeTemplate("?b", "seen_by", "?a"),),
        )
        g = TypedGraph()
        g.add_edge("x", "y", "saw", frame=ContextFrame.of(temporal="past"))
        g.add_edge("p", "q", "saw")
        out = deductive_closure(g, Calculus(rules=(rule,)))
        # derived edge inherits the premise frame conjunction
        assert out.has_edge_key("y|seen_by|x|temporal=past|Unknown")
        assert not any(e.relation == "seen_by" and e.src == "q" for e in out.edges())

    def test_range_restriction_enforced(self):
        with pytest.raises(ValidationError):
            InferenceRule(
                "bad",
                premises=(EdgePattern("?a", "r", "?b"),),
                conclusions=(EdgeTemplate("?a", "r", "?c"),),
            )

    def test_depth_of_derived_edges(self):
        g = chain_graph("A", "B", "C", "D")
        out = deductive_closure(g, TRANSITIVITY_CAL)
        assert derivation_depth(out, "A|hypernym|B||Unknown") == 0
        assert derivation_depth(out, "A|hypernym|C||Unknown") == 1
        assert derivation_depth(out, "A|hypernym|D||Unknown") == 2


def random_graph_and_rules(rng: random.Random, max_nodes=10, max_edges=14, max_rules=4):
    node_ids = [f"n{i}" for i in range(rng.randint(2, max_nodes))]
    relations = ["hypernym", "r1", "r2"]
    g = TypedGraph()
    for _ in range(rng.randint(1, max_edges)):
        g.add_edge(rng.choice(node_ids), rng.choice(node_ids), rng.choice(relations))
    rules = [HYPERNYM_TRANSITIVITY]
    for i in range(rng.randint(0, max_rules - 1)):
        body = rng.choice(relations)
        head = rng.choice(relations)
        shape = rng.random()
        if shape < 0.5:
            rule = InferenceRule(
                f"rnd{i}",
                premises=(EdgePattern("?a", body, "?b"),),
                conclusions=(EdgeTemplate("?b", head, "?a"),),
            )
        else:
            rule = InferenceRule(
                f"rnd{i}",
                premises=(EdgePattern("?a", body, "?b"), EdgePattern("?b", head, "?c")),
                conclusions=(EdgeTemplate("?a", head, "?c"),),
            )
        rules.append(rule)
    return g, Calculus(rules=tuple(rules))


class TestClosureOracle:
    def test_matches_naive_fixpoint_on_random_graphs(self):
        rng = random.Random(7)
        for _ in range(40):
            g, cal = random_graph_and_rules(rng)
            assert deductive_closure(g, cal, max_rounds=64).edge_keys() == naive_closure(g, cal)


class TestWLSignature:
    def test_single_node(self):
        g = TypedGraph()
        g.add_node("solo", "solo")
        assert len(wl_signature(g, 3)) == 1

    def test_isomorphic_graphs_share_multiset(self):
        g1 = chain_graph("A", "B", "C", relation="r")
        g2 = TypedGraph()
        g2.add_edge("X", "Y", "r")
        g2.add_edge("Y", "Z", "r")
        # relabel so node labels coincide
        g1b = TypedGraph()
        g1b.add_node("A", "p")
        g1b.add_node("B", "q")
        g1b.add_node("C", "s")
        g1b.add_edge("A", "B", "r")
        g1b.add_edge("B", "C", "r")
        g2b = TypedGraph()
        g2b.add_node("X", "p")
        g2b.add_node("Y", "q")
        g2b.add_node("Z", "s")
        g2b.add_edge("X", "Y", "r")
        g2b.add_edge("Y", "Z", "r")
        assert wl_multiset(g1b) == wl_multiset(g2b)

    def test_path_vs_triangle_separate_at_depth_2(self):
        path = TypedGraph()
        for n in "ABC":
            path.add_node(n, "x")
        path.add_edge("A", "B", "r")
        path.add_edge("B", "C", "r")
        triangle = TypedGraph()
        for n in "ABC":
            triangle.add_node(n, "x")
        triangle.add_edge("A", "B", "r")
        triangle.add_edge("B", "C", "r")
        triangle.add_edge("C", "A", "r")
        assert tuple(sorted(wl_signature(path, 2).values())) != tuple(
            sorted(wl_signature(triangle, 2).values())
        )

    def test_never_separates_isomorphic_small_graphs(self):
        rng = random.Random(21)
        for _ in range(60):
            n = rng.randint(1, 6)
            g1 = TypedGraph()
            names = [f"n{i}" for i in range(n)]
            labels = [rng.choice("xy") for _ in range(n)]
            for name, label in zip(names, labels):
                g1.add_node(name, label)
            for _ in range(rng.randint(0, 8)):
                g1.add_edge(rng.choice(names), rng.choice(names), rng.choice("rs"))
            perm = names[:]
            rng.shuffle(perm)
            rename = dict(zip(names, perm))
            g2 = TypedGraph()
            for name, label in zip(names, labels):
                g2.add_node(rename[name], label)
            for e in g1.edges():
                g2.add_edge(rename[e.src], rename[e.dst], e.relation)
            assert exhaustive_isomorphic(g1, g2)
            assert wl_multiset(g1) == wl_multiset(g2)


class TestSubgraphMatches:
    def test_single_node_pattern(self):
        pattern = TypedGraph()
        pattern.add_node("p", "parrot")
        target = TypedGraph()
        target.add_node("t1", "parrot")
        target.add_node("t2", "speech")
        assert subgraph_matches(pattern, target) == [{"p": "t1"}]

    def test_two_edges_two_mappings(self):
        pattern = TypedGraph()
        pattern.add_node("a", "?a")
        pattern.add_node("b", "?b")
        pattern.add_edge("a", "b", "r")
        target = TypedGraph()
        target.add_edge("x", "y", "r")
        target.add_edge("u", "v", "r")
        found = subgraph_matches(pattern, target)
        assert found == [{"a": "u", "b": "v"}, {"a": "x", "b": "y"}]

    def test_relation_poset_matching(self):
        relations = Universe("relation")
        relations.add(RelationDef("related_to"))
        relations.add(RelationDef("causes", hypernyms={"related_to"}))
        pattern = TypedGraph()
        pattern.add_node("a", "?a")
        pattern.add_node("b", "?b")
        pattern.add_edge("a", "b", "related_to")
        target = TypedGraph()
        target.add_edge("x", "y", "causes")
        assert subgraph_matches(pattern, target, relations=relations) == [{"a": "x", "b": "y"}]
        # and not the other way around
        narrow = TypedGraph()
        narrow.add_node("a", "?a")
        narrow.add_node("b", "?b")
        narrow.add_edge("a", "b", "causes")
        wide_target = TypedGraph()
        wide_target.add_edge("x", "y", "related_to")
        assert subgraph_matches(narrow, wide_target, relations=relations) == []

    def test_frame_subsumption(self):
        pattern = TypedGraph()
        pattern.add_node("a", "?a")
        pattern.add_node("b", "?b")
        pattern.add_edge("a", "b", "r", frame=ContextFrame.of(modality="possible"))
        target = TypedGraph()
        target.add_edge("x", "y", "r", frame=ContextFrame.of(modality="possible", temporal="past"))
        target.add_edge("u", "v", "r")
        assert subgraph_matches(pattern, target) == [{"a": "x", "b": "y"}]

    def test_empty_pattern_rejected(self):
        with pytest.raises(ValidationError):
            subgraph_matches(TypedGraph(), TypedGraph())

    def test_injective(self):
        pattern = TypedGraph()
        pattern.add_node("a", "?a")
        pattern.add_node("b", "?b")
        pattern.add_edge("a", "b", "r")
        target = TypedGraph()
        target.add_edge("x", "x", "r")
        assert subgraph_matches(pattern, target) == []

    def test_limit(self):
        pattern = TypedGraph()
        pattern.add_node("a", "?a")
        target = TypedGraph()
        for i in range(5):
            target.add_node(f"t{i}")
        assert len(subgraph_matches(pattern, target, limit=2)) == 2

    def test_matches_enumeration_oracle_on_random_instances(self):
        rng = random.Random(3)
        for _ in range(50):
            target = TypedGraph()
            t_nodes = [f"t{i}" for i in range(rng.randint(2, 7))]
            for t in t_nodes:
                target.add_node(t, rng.choice(["parrot", "bird", "speech"]))
            for _ in range(rng.randint(1, 9)):
                target.add_edge(rng.choice(t_nodes), rng.choice(t_nodes), rng.choice("rs"))
            pattern = TypedGraph()
            p_nodes = [f"p{i}" for i in range(rng.randint(1, 3))]
            for p in p_nodes:
                label = rng.choice(["parrot", "bird", "speech", f"?{p}"])
                pattern.add_node(p, label)
            for _ in range(rng.randint(0, 2)):
                pattern.add_edge(rng.choice(p_nodes), rng.choice(p_nodes), rng.choice("rs"))
            if pattern.node_count == 0:
                continue
            assert subgraph_matches(pattern, target) == enumerate_embeddings(pattern, target)


class TestIsomorphismAndEquivalence:
    def test_graph_equals_itself(self):
        g = chain_graph("A", "B", "C")
        assert logically_equivalent(g, g, TRANSITIVITY_CAL)

    def test_closure_equivalence(self):
        g1 = chain_graph("A", "B", "C")
        g2 = chain_graph("A", "B", "C")
        g2.add_edge("A", "C", "hypernym")
        assert logically_equivalent(g1, g2, TRANSITIVITY_CAL)

    def test_direction_matters(self):
        g1 = TypedGraph()
        g1.add_edge("A", "B", "r")
        g2 = TypedGraph()
        g2.add_edge("B", "A", "r")
        assert not logically_equivalent(g1, g2, Calculus())

    def test_isomorphism_agrees_with_exhaustive_oracle(self):
        rng = random.Random(11)
        for _ in range(60):
            n = rng.randint(1, 5)
            names = [f"n{i}" for i in range(n)]
            g1 = TypedGraph()
            g2 = TypedGraph()
            for name in names:
                label = rng.choice("ab")
                g1.add_node(name, label)
                g2.add_node(name, label)
            for _ in range(rng.randint(0, 6)):
                g1.add_edge(rng.choice(names), rng.choice(names), rng.choice("rs"))
            for _ in range(rng.randint(0, 6)):
                g2.add_edge(rng.choice(names), rng.choice(names), rng.choice("rs"))
            assert graphs_isomorphic(g1, g2) == exhaustive_isomorphic(g1, g2)


@st.composite
def frame_strategy(draw):
    keys = draw(st.lists(st.sampled_from(["temporal", "modality", "polarity"]), unique=True, max_size=2))
    return ContextFrame(tuple((k, draw(st.sampled_from(["a", "b"]))) for k in keys))


class TestFrameProperties:
    @given(frame_strategy(), frame_strategy())
    @settings(max_examples=80)
    def test_merge_is_commutative_when_defined(self, f1, f2):
        m1, m2 = f1.merged(f2), f2.merged(f1)
        assert (m1 is None) == (m2 is None)
        if m1 is not None:
            assert m1 == m2

    @given(frame_strategy(), frame_strategy())
    @settings(max_examples=80)
    def test_subsumption_antisymmetric_on_equality(self, f1, f2):
        if f1.subsumes(f2) and f2.subsumes(f1):
            assert f1 == f2


class TestSerialization:
    def test_graph_round_trip(self):
        g = TypedGraph()
        g.add_edge(
            "parrot", "speech", "mimics",
            frame=ContextFrame.of(modality="possible"),
            trace=Trace.doc("d1", (0, 10), (12, 20)),
            kind=EdgeKind.EPISODIC,
        )
        restored = TypedGraph.from_dict(g.to_dict())
        assert restored == g
        assert restored.canonical_json() == g.canonical_json()
