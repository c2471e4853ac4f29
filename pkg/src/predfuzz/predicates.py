"""Distinct-saved-input accounting per tracked predicate branch.

Target code records (predicate, branch line) events into a per-execution
trace while it runs.  The campaign engine commits the trace only when it
decides to keep the input; discarded executions leave every counter
untouched.  Counting is distinct-input: however many times one input
evaluates a predicate, it contributes at most one to each branch it took
and one to the predicate's reach count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cfg import render_record
from .errors import DuplicatePredicate


@dataclass(frozen=True)
class PredicateMeta:
    predicate_id: str
    source_class: str
    source_method: str
    predicate_line: int
    branch_lines: tuple[int, ...]


class ExecutionTrace:
    """Buffered branch events for one target execution."""

    __slots__ = ("events",)

    def __init__(self):
        self.events: list[tuple[str, int]] = []

    def record(self, predicate_id: str, branch_line: int) -> None:
        self.events.append((predicate_id, branch_line))


def record_branch(trace: ExecutionTrace | None, predicate_id: str, branch_line: int) -> None:
    """Instrumentation hook called from inside target code.

    Accepts a missing trace so targets can run untraced at full speed.
    """
    if trace is not None:
        trace.record(predicate_id, branch_line)


@dataclass
class DynamicPredicateRecord:
    meta: PredicateMeta
    predicate_inputs: int
    branch_inputs: dict[int, int]


@dataclass
class DynamicPredicateReport:
    records: list[DynamicPredicateRecord]
    total_saved_inputs: int


class PredicateRegistry:
    """Aggregates committed traces for one campaign."""

    def __init__(self, target_id: str, metas):
        self.target_id = target_id
        self.metas: dict[str, PredicateMeta] = {}
        for m in metas:
            if m.predicate_id in self.metas:
                raise DuplicatePredicate(m.predicate_id)
            self.metas[m.predicate_id] = m
        self._branch_counts = {
            pid: {line: 0 for line in m.branch_lines} for pid, m in self.metas.items()
        }
        self._predicate_counts = {pid: 0 for pid in self.metas}
        self.total_saved_inputs = 0

    def commit_saved_input(self, trace: ExecutionTrace) -> None:
        """Fold one saved input's trace into the counters.

        Events for unregistered predicates, or for lines the predicate does
        not declare, are ignored; duplicates within one trace collapse.
        """
        self.total_saved_inputs += 1
        touched: set[str] = set()
        for pid, line in set(trace.events):
            counts = self._branch_counts.get(pid)
            if counts is None or line not in counts:
                continue
            counts[line] += 1
            touched.add(pid)
        for pid in touched:
            self._predicate_counts[pid] += 1

    def emit_report(self) -> DynamicPredicateReport:
        records = [
            DynamicPredicateRecord(
                meta, self._predicate_counts[pid], dict(self._branch_counts[pid])
            )
            for pid, meta in self.metas.items()
        ]
        return DynamicPredicateReport(records, self.total_saved_inputs)


def register_predicates(target_id: str, metas) -> PredicateRegistry:
    return PredicateRegistry(target_id, metas)


# ---------------------------------------------------------------------------
# serialization (field names interoperate with refiners expecting them)


def serialize_dynamic_record(rec: DynamicPredicateRecord) -> str:
    return render_record(
        [
            ("class", rec.meta.source_class),
            ("method", rec.meta.source_method),
            ("predicateLine", rec.meta.predicate_line),
            ("predicateInputs", rec.predicate_inputs),
        ],
        [
            [("line", line), ("inputs", rec.branch_inputs.get(line, 0))]
            for line in rec.meta.branch_lines
        ],
    )


def serialize_dynamic_report(report: DynamicPredicateReport) -> str:
    lines = ["{", f'  "totalSavedInputs": {report.total_saved_inputs},', '  "records": [']
    body = ",\n".join(
        "\n".join("    " + ln for ln in serialize_dynamic_record(r).split("\n"))
        for r in report.records
    )
    if body:
        lines.append(body)
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def dynamic_record_to_obj(rec: DynamicPredicateRecord) -> dict:
    return {
        "class": rec.meta.source_class,
        "method": rec.meta.source_method,
        "predicateLine": rec.meta.predicate_line,
        "predicateInputs": rec.predicate_inputs,
        "branches": [
            {"line": line, "inputs": rec.branch_inputs.get(line, 0)}
            for line in rec.meta.branch_lines
        ],
    }


def dynamic_report_to_obj(report: DynamicPredicateReport) -> dict:
    return {
        "totalSavedInputs": report.total_saved_inputs,
        "records": [dynamic_record_to_obj(r) for r in report.records],
    }
