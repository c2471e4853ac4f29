"""Interprocedural control-flow graphs, dominance and predicate ranking.

A target ships per-procedure block/edge descriptions plus a call list.  The
supergraph stitches them together: a call edge runs from the call-site block
to the callee's entry, and return edges run from every callee exit back to
the call site's syntactic successors.  Dominance and reachability are then
computed on the whole supergraph, so a gate predicate's influence crosses
procedure boundaries.

A block with two or more branch-kind out-edges is a predicate.  Each outgoing
direction is scored by how many nodes are both reachable from its target and
dominated by it; a predicate ranks by the maximum over its directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import BlockNotFound, EntryNotFound, InvalidCfg

FALLTHROUGH = "fallthrough"
BRANCH = "branch"
CALL = "call"
RETURN = "return"

_INTRA_KINDS = (FALLTHROUGH, BRANCH)
_ALL_KINDS = (FALLTHROUGH, BRANCH, CALL, RETURN)


@dataclass(frozen=True)
class BasicBlock:
    id: str
    owner: str
    source_class: str
    source_method: str
    line: int


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class ProcedureCfg:
    """One procedure's intraprocedural CFG as authored in a description."""

    name: str
    entry: str
    blocks: tuple[BasicBlock, ...]
    edges: tuple[Edge, ...]


@dataclass(frozen=True)
class CfgDescription:
    procedures: dict[str, ProcedureCfg]
    calls: tuple[tuple[str, str], ...]  # (call-site block id, callee procedure)
    exclusions: tuple[str, ...]
    entry: str  # entry procedure name


class InterproceduralCfg:
    """Immutable supergraph with adjacency maps.

    ``dangling_calls`` lists call edges that were dropped because the callee
    was missing or fully excluded.
    """

    def __init__(self, blocks, edges, entry, exclusions=(), dangling_calls=()):
        self.blocks: dict[str, BasicBlock] = dict(blocks)
        self.edges: frozenset[Edge] = frozenset(edges)
        self.entry = entry
        self.exclusions = tuple(exclusions)
        self.dangling_calls = tuple(dangling_calls)
        succ: dict[str, list[str]] = {b: [] for b in self.blocks}
        pred: dict[str, list[str]] = {b: [] for b in self.blocks}
        for e in sorted(self.edges, key=lambda e: (e.src, e.dst, e.kind)):
            succ[e.src].append(e.dst)
            pred[e.dst].append(e.src)
        self._succ = succ
        self._pred = pred

    def successors(self, block_id: str) -> list[str]:
        return self._succ[block_id]

    def predecessors(self, block_id: str) -> list[str]:
        return self._pred[block_id]

    def branch_edges(self, block_id: str) -> list[Edge]:
        return sorted(
            (e for e in self.edges if e.src == block_id and e.kind == BRANCH),
            key=lambda e: (self.blocks[e.dst].line, e.dst),
        )


@dataclass(frozen=True)
class DominatorTree:
    idom: dict[str, str]
    _children: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    @staticmethod
    def from_idom(idom: dict[str, str]) -> "DominatorTree":
        children: dict[str, list[str]] = {b: [] for b in idom}
        for b, d in idom.items():
            if b != d:
                children[d].append(b)
        return DominatorTree(dict(idom), {b: tuple(c) for b, c in children.items()})

    def children(self, block_id: str) -> tuple[str, ...]:
        return self._children.get(block_id, ())


@dataclass(frozen=True)
class BranchOutcome:
    predicate_id: str  # block id of the owning predicate
    target_block: str
    line: int
    dominance: int = 0


@dataclass(frozen=True)
class StaticPredicateRecord:
    source_class: str
    source_method: str
    line: int
    branches: tuple[BranchOutcome, ...]
    score: int


def build_supergraph(procedures, call_edges, exclusions, entry) -> InterproceduralCfg:
    """Assemble one graph from per-procedure CFGs and a call list.

    Excluded-class blocks are dropped first (case-sensitive prefix match on
    source_class) together with their incident edges.  Calls whose callee is
    unknown, fully excluded, or whose entry block was excluded are reported
    in ``dangling_calls`` and their edges dropped; calls from an excluded
    block vanish with the block.
    """
    procs = {p.name: p for p in procedures} if not isinstance(procedures, dict) else dict(procedures)
    exclusions = tuple(exclusions)
    if entry not in procs:
        raise EntryNotFound(f"entry procedure {entry!r} not described")

    def excluded(block: BasicBlock) -> bool:
        return any(block.source_class.startswith(px) for px in exclusions)

    blocks: dict[str, BasicBlock] = {}
    for proc in procs.values():
        for b in proc.blocks:
            if b.id in blocks:
                raise InvalidCfg(f"duplicate block id {b.id!r}")
            if b.line < 1:
                raise InvalidCfg(f"block {b.id!r} has line {b.line} < 1")
            if not excluded(b):
                blocks[b.id] = b

    edges: set[Edge] = set()
    for proc in procs.values():
        known = {b.id for b in proc.blocks}
        for e in proc.edges:
            if e.src not in known or e.dst not in known:
                raise InvalidCfg(f"edge {e.src}->{e.dst} leaves procedure {proc.name!r}")
            if e.kind not in _INTRA_KINDS:
                raise InvalidCfg(f"procedure edge {e.src}->{e.dst} has kind {e.kind!r}")
            if e.src in blocks and e.dst in blocks:
                edges.add(e)

    # exits computed after exclusion filtering: a block with no surviving
    # intraprocedural out-edges ends its procedure; only the procedure's own
    # edges count, so call/return edges added for other call sites of the
    # same callee cannot mask its exits
    def proc_exits(proc: ProcedureCfg) -> list[str]:
        alive = [b.id for b in proc.blocks if b.id in blocks]
        has_out = {
            e.src
            for e in proc.edges
            if e.kind in _INTRA_KINDS and e.src in blocks and e.dst in blocks
        }
        return [b for b in alive if b not in has_out]

    dangling: list[tuple[str, str]] = []
    for call_block, callee in call_edges:
        if call_block not in blocks:
            continue  # excluded caller takes its calls with it
        target = procs.get(callee)
        if target is None or target.entry not in blocks:
            dangling.append((call_block, callee))
            continue
        caller_proc = procs[blocks[call_block].owner]
        succs = [
            e.dst
            for e in caller_proc.edges
            if e.src == call_block and e.dst in blocks and e.kind in _INTRA_KINDS
        ]
        edges.add(Edge(call_block, target.entry, CALL))
        for exit_block in proc_exits(target):
            for s in succs:
                edges.add(Edge(exit_block, s, RETURN))

    entry_proc = procs[entry]
    if entry_proc.entry not in blocks:
        raise EntryNotFound(f"entry block of {entry!r} was excluded")
    return InterproceduralCfg(blocks, edges, entry_proc.entry, exclusions, dangling)


def compute_dominator_tree(g: InterproceduralCfg) -> DominatorTree:
    """Iterative immediate-dominator computation over reverse postorder.

    Converges by repeated intersection of predecessor dominators; blocks not
    reachable from the entry are simply absent from the result.
    """
    # iterative DFS postorder from entry
    post: list[str] = []
    seen = {g.entry}
    stack: list[tuple[str, int]] = [(g.entry, 0)]
    while stack:
        node, i = stack.pop()
        succs = g.successors(node)
        if i < len(succs):
            stack.append((node, i + 1))
            nxt = succs[i]
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, 0))
        else:
            post.append(node)
    rpo = list(reversed(post))
    index = {b: i for i, b in enumerate(rpo)}

    idom: dict[str, str] = {g.entry: g.entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in rpo[1:]:
            preds = [p for p in g.predecessors(b) if p in idom]
            if not preds:
                continue
            new = preds[0]
            for p in preds[1:]:
                new = intersect(new, p)
            if idom.get(b) != new:
                idom[b] = new
                changed = True
    return DominatorTree.from_idom(idom)


def reachable_from(g: InterproceduralCfg, block_id: str) -> set[str]:
    """Forward-reachable block ids, including the block itself."""
    if block_id not in g.blocks:
        raise BlockNotFound(block_id)
    out = {block_id}
    frontier = [block_id]
    while frontier:
        node = frontier.pop()
        for s in g.successors(node):
            if s not in out:
                out.add(s)
                frontier.append(s)
    return out


def dominated_set(tree: DominatorTree, block_id: str) -> set[str]:
    """Blocks dominated by ``block_id`` (reflexive: includes itself).

    A block absent from the tree (unreachable) dominates nothing.
    """
    if block_id not in tree.idom:
        return set()
    out = {block_id}
    frontier = [block_id]
    while frontier:
        node = frontier.pop()
        for c in tree.children(node):
            out.add(c)
            frontier.append(c)
    return out


def score_branch(g: InterproceduralCfg, tree: DominatorTree, outcome: BranchOutcome) -> int:
    """|R(target) ∩ D(target)|: nodes both reachable from and dominated by
    the branch target.  Unreachable targets score 0."""
    target = outcome.target_block
    if target not in g.blocks:
        raise BlockNotFound(target)
    if target not in tree.idom:
        return 0
    return len(reachable_from(g, target) & dominated_set(tree, target))


def rank_predicates(g: InterproceduralCfg) -> list[StaticPredicateRecord]:
    """One record per block with ≥ 2 branch-kind out-edges, best-first.

    Sorted by descending score, then (class, method, line); block id is the
    final tiebreaker so the order is total even when several comparison
    blocks share a source line.
    """
    tree = compute_dominator_tree(g)
    records: list[tuple[tuple, StaticPredicateRecord]] = []
    for block_id in sorted(g.blocks):
        branch_edges = g.branch_edges(block_id)
        if len(branch_edges) < 2:
            continue
        outcomes = []
        for e in branch_edges:
            base = BranchOutcome(block_id, e.dst, g.blocks[e.dst].line)
            outcomes.append(
                BranchOutcome(block_id, e.dst, g.blocks[e.dst].line, score_branch(g, tree, base))
            )
        block = g.blocks[block_id]
        rec = StaticPredicateRecord(
            block.source_class,
            block.source_method,
            block.line,
            tuple(outcomes),
            max(o.dominance for o in outcomes),
        )
        key = (-rec.score, rec.source_class, rec.source_method, rec.line, block_id)
        records.append((key, rec))
    records.sort(key=lambda kr: kr[0])
    return [rec for _, rec in records]


# ---------------------------------------------------------------------------
# serialization


def static_record_to_obj(rec: StaticPredicateRecord) -> dict:
    return {
        "class": rec.source_class,
        "method": rec.source_method,
        "line": rec.line,
        "branches": [{"line": b.line, "dominance": b.dominance} for b in rec.branches],
    }


def render_record(scalar_fields, branch_entries) -> str:
    """Record layout: scalar keys one per line, branch objects single-line.

    ``branch_entries`` is a list of (key, value) lists rendered in order.
    """
    lines = ["{"]
    for k, v in scalar_fields:
        lines.append(f'  "{k}": {json.dumps(v)},')
    lines.append('  "branches": [')
    rendered = []
    for entry in branch_entries:
        inner = ", ".join(f'"{k}": {json.dumps(v)}' for k, v in entry)
        rendered.append("    { " + inner + " }")
    lines.append(",\n".join(rendered))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines)


def serialize_static_record(rec: StaticPredicateRecord) -> str:
    return render_record(
        [("class", rec.source_class), ("method", rec.source_method), ("line", rec.line)],
        [[("line", b.line), ("dominance", b.dominance)] for b in rec.branches],
    )


def serialize_static_records(records) -> str:
    """Records file: a JSON array of static predicate records."""
    if not records:
        return "[]\n"
    body = ",\n".join(
        "\n".join("  " + ln for ln in serialize_static_record(r).split("\n")) for r in records
    )
    return "[\n" + body + "\n]\n"


def parse_static_records(text: str) -> list[StaticPredicateRecord]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidCfg(f"bad records file: {exc}") from exc
    out = []
    for obj in raw:
        branches = tuple(
            BranchOutcome("", "", int(b["line"]), int(b["dominance"]))
            for b in obj.get("branches", [])
        )
        score = max((b.dominance for b in branches), default=0)
        out.append(
            StaticPredicateRecord(obj["class"], obj["method"], int(obj["line"]), branches, score)
        )
    return out


def save_cfg_description(desc: CfgDescription) -> str:
    obj = {
        "entry": desc.entry,
        "exclusions": list(desc.exclusions),
        "procedures": {
            name: {
                "entry": proc.entry,
                "blocks": [
                    {
                        "id": b.id,
                        "class": b.source_class,
                        "method": b.source_method,
                        "line": b.line,
                    }
                    for b in proc.blocks
                ],
                "edges": [[e.src, e.dst, e.kind] for e in proc.edges],
            }
            for name, proc in sorted(desc.procedures.items())
        },
        "calls": [list(c) for c in desc.calls],
    }
    return json.dumps(obj, indent=2) + "\n"


def load_cfg_description(text: str) -> CfgDescription:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidCfg(f"bad CFG description: {exc}") from exc
    procedures = {}
    for name, praw in obj.get("procedures", {}).items():
        blocks = tuple(
            BasicBlock(b["id"], name, b["class"], b["method"], int(b["line"]))
            for b in praw["blocks"]
        )
        edges = tuple(Edge(src, dst, kind) for src, dst, kind in praw.get("edges", []))
        procedures[name] = ProcedureCfg(name, praw["entry"], blocks, edges)
    calls = tuple((src, callee) for src, callee in obj.get("calls", []))
    return CfgDescription(procedures, calls, tuple(obj.get("exclusions", [])), obj["entry"])


def build_from_description(desc: CfgDescription) -> InterproceduralCfg:
    return build_supergraph(desc.procedures, desc.calls, desc.exclusions, desc.entry)
