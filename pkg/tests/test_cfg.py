"""Dominance, reachability and ranking, checked against brute-force oracles.

The oracles take deliberately different routes from the implementation:
dominator sets come from enumerating every simple entry-to-n path and
intersecting the node sets; reachability comes from boolean matrix powering.
"""

import json
import random

import pytest

from predfuzz.cfg import (
    BRANCH,
    CALL,
    FALLTHROUGH,
    RETURN,
    BasicBlock,
    BranchOutcome,
    CfgDescription,
    Edge,
    ProcedureCfg,
    build_from_description,
    build_supergraph,
    compute_dominator_tree,
    dominated_set,
    load_cfg_description,
    parse_static_records,
    rank_predicates,
    reachable_from,
    save_cfg_description,
    score_branch,
    serialize_static_record,
    serialize_static_records,
)
from predfuzz.errors import BlockNotFound, EntryNotFound, InvalidCfg


# ---------------------------------------------------------------------------
# oracles


def simple_path_dom_sets(nodes, succ, entry):
    """dom(n) = intersection over every simple entry->n path of its node set."""
    path_sets = {n: [] for n in nodes}

    def walk(node, on_path):
        path_sets[node].append(frozenset(on_path))
        for s in succ.get(node, ()):
            if s not in on_path:
                on_path.add(s)
                walk(s, on_path)
                on_path.remove(s)

    walk(entry, {entry})
    return {n: frozenset.intersection(*sets) for n, sets in path_sets.items() if sets}


def oracle_idoms(dom_sets, entry):
    """Immediate dominator from dominator sets via the chain property."""
    idoms = {entry: entry}
    for n, doms in dom_sets.items():
        if n == entry:
            continue
        strict = set(doms) - {n}
        winners = [d for d in strict if set(dom_sets[d]) == strict]
        assert len(winners) == 1, f"dominators of {n} do not form a chain"
        idoms[n] = winners[0]
    return idoms


def closure_by_matrix_powering(nodes, succ):
    """Reachability as I + A + A^2 + ... + A^n over boolean matrices."""
    order = sorted(nodes)
    idx = {n: i for i, n in enumerate(order)}
    n = len(order)
    adj = [0] * n
    for u in order:
        for v in succ.get(u, ()):
            adj[idx[u]] |= 1 << idx[v]
    reach = [1 << i for i in range(n)]
    power = adj[:]
    for _ in range(n):
        for i in range(n):
            reach[i] |= power[i]
        nxt = [0] * n
        for i in range(n):
            row, acc, j = power[i], 0, 0
            while row:
                if row & 1:
                    acc |= adj[j]
                row >>= 1
                j += 1
            nxt[i] = acc
        power = nxt
    return {u: {v for v in order if reach[idx[u]] >> idx[v] & 1} for u in order}


def random_digraph(rng, max_nodes=12, max_edges=24, connected=True):
    n = rng.randint(2, max_nodes)
    nodes = [f"n{i:02d}" for i in range(n)]
    edges = set()
    if connected:
        for i in range(1, n):
            edges.add((nodes[rng.randrange(i)], nodes[i]))
    budget = max_edges - len(edges)
    for _ in range(rng.randint(0, max(0, budget))):
        a, b = rng.choice(nodes), rng.choice(nodes)
        if a != b:
            edges.add((a, b))
    return nodes, sorted(edges), nodes[0]


def as_graph(nodes, edges, entry):
    blocks = tuple(BasicBlock(nid, "p", "test.G", "m", i + 1) for i, nid in enumerate(nodes))
    out_deg = {}
    for a, _ in edges:
        out_deg[a] = out_deg.get(a, 0) + 1
    es = tuple(Edge(a, b, BRANCH if out_deg[a] >= 2 else FALLTHROUGH) for a, b in edges)
    return build_supergraph([ProcedureCfg("p", entry, blocks, es)], [], [], "p")


def succ_map(edges):
    out = {}
    for a, b in edges:
        out.setdefault(a, []).append(b)
    return out


# ---------------------------------------------------------------------------
# dominator tree


def test_chain_idoms():
    g = as_graph(["E", "A", "B"], [("E", "A"), ("A", "B")], "E")
    t = compute_dominator_tree(g)
    assert t.idom == {"E": "E", "A": "E", "B": "A"}


def test_diamond_join_idom():
    g = as_graph(["E", "A", "B", "X"], [("E", "A"), ("E", "B"), ("A", "X"), ("B", "X")], "E")
    t = compute_dominator_tree(g)
    assert t.idom["X"] == "E"
    assert t.idom["A"] == "E" and t.idom["B"] == "E"


def test_unreachable_blocks_absent_from_idom():
    g = as_graph(["E", "A", "Z"], [("E", "A")], "E")
    t = compute_dominator_tree(g)
    assert "Z" not in t.idom
    assert set(t.idom) == {"E", "A"}


def test_idom_matches_path_enumeration_oracle_on_random_graphs():
    rng = random.Random(0xD0311)
    for _ in range(60):
        nodes, edges, entry = random_digraph(rng)
        g = as_graph(nodes, edges, entry)
        t = compute_dominator_tree(g)
        dom = simple_path_dom_sets(nodes, succ_map(edges), entry)
        assert t.idom == oracle_idoms(dom, entry)


def test_removing_idom_disconnects():
    rng = random.Random(77)
    for _ in range(40):
        nodes, edges, entry = random_digraph(rng)
        g = as_graph(nodes, edges, entry)
        t = compute_dominator_tree(g)
        succ = succ_map(edges)
        for n, d in t.idom.items():
            if n == entry:
                continue
            seen, frontier = {entry}, [entry]
            if entry == d:
                frontier = []
            while frontier:
                cur = frontier.pop()
                for s in succ.get(cur, ()):
                    if s != d and s not in seen:
                        seen.add(s)
                        frontier.append(s)
            assert n not in seen or n == d


# ---------------------------------------------------------------------------
# reachability


def test_sink_reaches_only_itself():
    g = as_graph(["E", "A"], [("E", "A")], "E")
    assert reachable_from(g, "A") == {"A"}


def test_entry_of_connected_graph_reaches_all():
    g = as_graph(["E", "A", "B"], [("E", "A"), ("A", "B"), ("B", "E")], "E")
    assert reachable_from(g, "E") == {"E", "A", "B"}


def test_reachability_matches_matrix_powering_oracle():
    rng = random.Random(0xC105)
    for _ in range(40):
        nodes, edges, entry = random_digraph(rng, connected=False)
        g = as_graph(nodes, edges, entry)
        oracle = closure_by_matrix_powering(nodes, succ_map(edges))
        for n in nodes:
            assert reachable_from(g, n) == oracle[n]


def test_reachable_from_unknown_block():
    g = as_graph(["E", "A"], [("E", "A")], "E")
    with pytest.raises(BlockNotFound):
        reachable_from(g, "nope")


# ---------------------------------------------------------------------------
# branch scoring


def test_score_branch_five_node_example():
    # E branches to B1/B2; B1 -> X -> Exit; B2 -> Exit
    nodes = ["E", "B1", "B2", "X", "Exit"]
    edges = [("E", "B1"), ("E", "B2"), ("B1", "X"), ("X", "Exit"), ("B2", "Exit")]
    g = as_graph(nodes, edges, "E")
    t = compute_dominator_tree(g)
    assert score_branch(g, t, BranchOutcome("E", "B1", 2)) == 2  # {B1, X}
    assert score_branch(g, t, BranchOutcome("E", "B2", 3)) == 1  # {B2}


def test_score_branch_unreachable_target_is_zero():
    g = as_graph(["E", "A", "Z"], [("E", "A")], "E")
    t = compute_dominator_tree(g)
    assert score_branch(g, t, BranchOutcome("E", "Z", 3)) == 0


def test_score_branch_matches_brute_force_on_random_graphs():
    rng = random.Random(0x5C0E)
    for _ in range(40):
        nodes, edges, entry = random_digraph(rng)
        g = as_graph(nodes, edges, entry)
        t = compute_dominator_tree(g)
        succ = succ_map(edges)
        dom = simple_path_dom_sets(nodes, succ, entry)
        reach = closure_by_matrix_powering(nodes, succ)
        for n in nodes:
            expected = len(reach[n] & {m for m in dom if n in dom[m]}) if n in dom else 0
            assert score_branch(g, t, BranchOutcome("?", n, 1)) == expected


def test_dominated_set_is_reflexive():
    g = as_graph(["E", "A", "B"], [("E", "A"), ("A", "B")], "E")
    t = compute_dominator_tree(g)
    assert dominated_set(t, "A") == {"A", "B"}
    assert dominated_set(t, "B") == {"B"}


# ---------------------------------------------------------------------------
# supergraph construction


def _proc(name, entry, blocks, edges, cls="app.Main"):
    bs = tuple(BasicBlock(bid, name, cls, name, ln) for bid, ln in blocks)
    es = tuple(Edge(a, b, k) for a, b, k in edges)
    return ProcedureCfg(name, entry, bs, es)


def test_single_procedure_identity():
    g = build_supergraph(
        [_proc("main", "A", [("A", 1), ("B", 2)], [("A", "B", FALLTHROUGH)])], [], [], "main"
    )
    assert set(g.blocks) == {"A", "B"}
    assert len(g.edges) == 1
    assert g.entry == "A"


def test_call_and_return_edges():
    main = _proc("main", "C", [("C", 1), ("C_succ", 2)], [("C", "C_succ", FALLTHROUGH)])
    helper = _proc("helper", "H1", [("H1", 10), ("H2", 11)], [("H1", "H2", FALLTHROUGH)])
    g = build_supergraph([main, helper], [("C", "helper")], [], "main")
    expected = {
        Edge("C", "C_succ", FALLTHROUGH),
        Edge("H1", "H2", FALLTHROUGH),
        Edge("C", "H1", CALL),
        Edge("H2", "C_succ", RETURN),
    }
    assert set(g.edges) == expected
    assert g.dangling_calls == ()


def test_excluded_callee_reported_as_dangling():
    main = _proc("main", "C", [("C", 1), ("C_succ", 2)], [("C", "C_succ", FALLTHROUGH)])
    helper = _proc(
        "helper", "H1", [("H1", 10), ("H2", 11)], [("H1", "H2", FALLTHROUGH)], cls="java.lang.String"
    )
    g = build_supergraph([main, helper], [("C", "helper")], ["java.lang"], "main")
    assert set(g.blocks) == {"C", "C_succ"}
    assert g.dangling_calls == (("C", "helper"),)
    assert set(g.edges) == {Edge("C", "C_succ", FALLTHROUGH)}


def test_call_to_missing_procedure_is_dangling():
    main = _proc("main", "C", [("C", 1), ("C_succ", 2)], [("C", "C_succ", FALLTHROUGH)])
    g = build_supergraph([main], [("C", "ghost")], [], "main")
    assert g.dangling_calls == (("C", "ghost"),)


def test_unknown_entry_procedure():
    main = _proc("main", "C", [("C", 1)], [])
    with pytest.raises(EntryNotFound):
        build_supergraph([main], [], [], "other")


def test_duplicate_block_ids_rejected():
    a = _proc("a", "X", [("X", 1)], [])
    b = _proc("b", "X", [("X", 1)], [])
    with pytest.raises(InvalidCfg):
        build_supergraph([a, b], [], [], "a")


def test_exclusion_never_grows_block_count():
    rng = random.Random(9)
    classes = ["app.One", "app.Two", "lib.Helper", "lib.util.Deep"]
    for _ in range(25):
        nodes, edges, entry = random_digraph(rng, max_nodes=8)
        blocks = tuple(
            BasicBlock(n, "p", classes[rng.randrange(len(classes))], "m", i + 1)
            for i, n in enumerate(nodes)
        )
        es = tuple(Edge(a, b, FALLTHROUGH) for a, b in edges)
        proc = ProcedureCfg("p", entry, blocks, es)
        if any(b.id == entry and b.source_class.startswith("lib") for b in blocks):
            continue
        g0 = build_supergraph([proc], [], [], "p")
        g1 = build_supergraph([proc], [], ["lib."], "p")
        assert len(g1.blocks) <= len(g0.blocks)


# ---------------------------------------------------------------------------
# ranking


def test_rank_straight_line_graph_empty():
    g = as_graph(["E", "A", "B"], [("E", "A"), ("A", "B")], "E")
    assert rank_predicates(g) == []


def _two_predicate_graph():
    nodes = ["S", "P1"]
    edges = [("S", "P1")]
    chain = [f"X{i:02d}" for i in range(1, 41)]
    nodes += chain + ["Y1", "J", "P2", "U", "V", "W", "J2"]
    edges += [("P1", chain[0]), ("P1", "Y1")]
    edges += [(chain[i], chain[i + 1]) for i in range(39)]
    edges += [(chain[-1], "J"), ("Y1", "J"), ("J", "P2")]
    edges += [("P2", "U"), ("P2", "V"), ("U", "W"), ("W", "J2"), ("V", "J2")]
    return as_graph(nodes, edges, "S")


def test_rank_orders_by_max_branch_dominance():
    g = _two_predicate_graph()
    records = rank_predicates(g)
    assert len(records) == 2
    assert records[0].score == 40 and records[1].score == 2
    t = compute_dominator_tree(g)
    for rec in records:
        for br in rec.branches:
            assert br.dominance == score_branch(g, t, br)
        assert rec.score == max(b.dominance for b in rec.branches)


def test_rank_is_total_permutation_with_score_bound():
    rng = random.Random(0xBEEF)
    for _ in range(25):
        nodes, edges, entry = random_digraph(rng)
        g = as_graph(nodes, edges, entry)
        records = rank_predicates(g)
        expect_predicates = {
            b for b in g.blocks if sum(1 for e in g.edges if e.src == b and e.kind == BRANCH) >= 2
        }
        assert len(records) == len(expect_predicates)
        scores = [r.score for r in records]
        assert scores == sorted(scores, reverse=True)
        for r in records:
            assert len(r.branches) >= 2
            for b in r.branches:
                assert 0 <= b.dominance <= len(g.blocks)


# ---------------------------------------------------------------------------
# serialization


def test_static_record_serialization_shape():
    g = _two_predicate_graph()
    rec = rank_predicates(g)[1]
    text = serialize_static_record(rec)
    assert json.loads(text) == {
        "class": "test.G",
        "method": "m",
        "line": rec.line,
        "branches": [
            {"line": rec.branches[0].line, "dominance": 2},
            {"line": rec.branches[1].line, "dominance": 1},
        ]
    }
    # branch objects render on one line, paper-record style
    assert '{ "line":' in text


def test_static_records_file_round_trip():
    g = _two_predicate_graph()
    records = rank_predicates(g)
    text = serialize_static_records(records)
    parsed = parse_static_records(text)
    assert [(r.source_class, r.line, r.score) for r in parsed] == [
        (r.source_class, r.line, r.score) for r in records
    ]
    assert serialize_static_records([]) == "[]\n"


def test_cfg_description_round_trip():
    main = _proc("main", "C", [("C", 1), ("C_succ", 2)], [("C", "C_succ", FALLTHROUGH)])
    helper = _proc("helper", "H1", [("H1", 10), ("H2", 11)], [("H1", "H2", BRANCH)])
    desc = CfgDescription(
        {"main": main, "helper": helper}, (("C", "helper"),), ("java.",), "main"
    )
    text = save_cfg_description(desc)
    back = load_cfg_description(text)
    assert back == desc
    g = build_from_description(back)
    assert Edge("C", "H1", CALL) in g.edges
