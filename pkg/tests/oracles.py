"""Independent brute-force oracles the fast implementations are checked
against.  These stay deliberately naive: correctness by obviousness."""

from __future__ import annotations

import itertools
import math

from gyan.graph import (
    Calculus,
    Edge,
    EdgeKind,
    TypedGraph,
    Universe,
    UNIVERSAL_FRAME,
    Trace,
    RuleVariant,
    is_hypernym,
    _is_var,
)


def naive_closure(g: TypedGraph, cal: Calculus, cap: int = 10_000) -> frozenset[str]:
    """Edge-key fixpoint by re-applying every rule to every edge tuple until
    nothing changes.  Returns the closed edge-key set."""
    edges: dict[str, Edge] = {e.key: e for e in g.edges()}
    rules = cal.all_rules()
    changed = True
    steps = 0
    while changed:
        changed = False
        steps += 1
        if steps > cap:
            raise RuntimeError("oracle did not converge")
        for rule in rules:
            for combo in itertools.product(list(edges.values()), repeat=len(rule.premises)):
                bindings: dict[str, str] = {}
                ok = True
                for pat, e in zip(rule.premises, combo):
                    for term, value in ((pat.subject, e.src), (pat.relation, e.relation), (pat.object, e.dst)):
                        if _is_var(term):
                            if bindings.setdefault(term, value) != value:
                                ok = False
                                break
                        elif term != value:
                            ok = False
                            break
                    if ok and pat.frame is not None and not pat.frame.subsumes(e.frame):
                        ok = False
                    if not ok:
                        break
                if not ok:
                    continue
                for tmpl in rule.conclusions:
                    if tmpl.frame is not None:
                        frame = tmpl.frame
                    else:
                        frame = UNIVERSAL_FRAME
                        conflict = False
                        for e in combo:
                            merged = frame.merged(e.frame)
                            if merged is None:
                                conflict = True
                                break
                            frame = merged
                        if conflict:
                            continue
                    resolve = lambda t: bindings[t] if _is_var(t) else t
                    edge = Edge(
                        resolve(tmpl.subject), resolve(tmpl.object), resolve(tmpl.relation),
                        frame=frame, kind=tmpl.kind,
                        trace=Trace((RuleVariant(rule.id, tuple(e.key for e in combo)),)),
                    )
                    if edge.key not in edges:
                        edges[edge.key] = edge
                        changed = True
    return frozenset(edges)


def enumerate_embeddings(
    pattern: TypedGraph,
    target: TypedGraph,
    relations: Universe | None = None,
) -> list[dict[str, str]]:
    """Every injective mapping, by exhaustive enumeration over target-node
    permutations, that satisfies the same label/relation/frame/kind predicate
    as the production matcher."""
    p_nodes = [n.id for n in pattern.nodes()]
    t_nodes = [n.id for n in target.nodes()]
    if len(p_nodes) > len(t_nodes):
        return []
    results = []
    for combo in itertools.permutations(t_nodes, len(p_nodes)):
        mapping = dict(zip(p_nodes, combo))
        ok = True
        for pid, tid in mapping.items():
            pn, tn = pattern.node(pid), target.node(tid)
            if not pn.is_variable and pn.label != tn.label:
                ok = False
                break
        if not ok:
            continue
        for pe in pattern.edges():
            found = False
            for te in target.edges():
                if te.src != mapping[pe.src] or te.dst != mapping[pe.dst]:
                    continue
                rel_ok = pe.relation == te.relation or (
                    relations is not None
                    and pe.relation in relations
                    and te.relation in relations
                    and is_hypernym(pe.relation, te.relation, relations)
                )
                if (
                    rel_ok
                    and pe.frame.subsumes(te.frame)
                    and (pe.kind == EdgeKind.UNKNOWN or pe.kind == te.kind)
                ):
                    found = True
                    break
            if not found:
                ok = False
                break
        if ok:
            results.append(mapping)
    results.sort(key=lambda m: tuple(m[p] for p in p_nodes))
    return results


def exhaustive_isomorphic(g1: TypedGraph, g2: TypedGraph) -> bool:
    """Isomorphism by trying every bijection (tiny graphs only)."""
    n1 = [n.id for n in g1.nodes()]
    n2 = [n.id for n in g2.nodes()]
    if len(n1) != len(n2) or g1.edge_count != g2.edge_count:
        return False

    def edge_set(g: TypedGraph, rename: dict[str, str]) -> frozenset:
        return frozenset(
            (rename[e.src], rename[e.dst], e.relation, e.frame, e.kind) for e in g.edges()
        )

    ident2 = {i: i for i in n2}
    target_edges = edge_set(g2, ident2)
    target_labels = {i: g2.node(i).label for i in n2}
    for perm in itertools.permutations(n2):
        mapping = dict(zip(n1, perm))
        if any(g1.node(a).label != target_labels[b] for a, b in mapping.items()):
            continue
        if edge_set(g1, mapping) == target_edges:
            return True
    return False


def reference_dcg(gains: list[float]) -> float:
    return sum(gain / math.log2(pos + 2) for pos, gain in enumerate(gains))


def reference_ndcg_prefixes(gains: list[float]) -> list[float]:
    """Cumulative nDCG per prefix, ideal taken over the full gain list."""
    ideal = sorted(gains, reverse=True)
    out = []
    for k in range(1, len(gains) + 1):
        idcg = reference_dcg(ideal[:k])
        out.append(reference_dcg(gains[:k]) / idcg if idcg > 0 else 0.0)
    return out


def reference_rolling_ndcg(gains: list[float], window: int) -> list[float]:
    """Window-local nDCG for every full sliding window (single window when
    the list is shorter than the window)."""
    if len(gains) <= window:
        spans = [gains]
    else:
        spans = [gains[i : i + window] for i in range(len(gains) - window + 1)]
    out = []
    for span in spans:
        idcg = reference_dcg(sorted(span, reverse=True))
        out.append(reference_dcg(span) / idcg if idcg > 0 else 0.0)
    return out
