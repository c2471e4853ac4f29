"""Distinct-input branch accounting and report serialization."""

import json
import random

import pytest

from predfuzz.errors import DuplicatePredicate
from predfuzz.predicates import (
    DynamicPredicateRecord,
    ExecutionTrace,
    PredicateMeta,
    record_branch,
    register_predicates,
    serialize_dynamic_record,
    serialize_dynamic_report,
)

META = PredicateMeta("ml.plus", "minilang.TypeChecker", "analyzePlus", 206, (207, 208))
OTHER = PredicateMeta("ml.ovr", "minilang.DeclarationAnalyzer", "analyzeClass", 103, (104, 110))


def test_empty_registry_emits_empty_report():
    reg = register_predicates("minilang", [])
    report = reg.emit_report()
    assert report.records == []
    assert report.total_saved_inputs == 0


def test_duplicate_registration_rejected():
    with pytest.raises(DuplicatePredicate):
        register_predicates("minilang", [META, META])


def test_repeated_hits_count_once_per_input():
    reg = register_predicates("minilang", [META])
    t = ExecutionTrace()
    for _ in range(3):
        record_branch(t, "ml.plus", 207)
    reg.commit_saved_input(t)
    rec = reg.emit_report().records[0]
    assert rec.branch_inputs == {207: 1, 208: 0}
    assert rec.predicate_inputs == 1


def test_unreached_predicate_counts_zero():
    reg = register_predicates("minilang", [META, OTHER])
    t = ExecutionTrace()
    record_branch(t, "ml.plus", 207)
    reg.commit_saved_input(t)
    report = {r.meta.predicate_id: r for r in reg.emit_report().records}
    assert report["ml.ovr"].predicate_inputs == 0
    assert report["ml.ovr"].branch_inputs == {104: 0, 110: 0}


def test_both_branches_in_one_run():
    # e.g. a program with two + expressions taking different branches
    reg = register_predicates("minilang", [META])
    t = ExecutionTrace()
    record_branch(t, "ml.plus", 207)
    record_branch(t, "ml.plus", 208)
    reg.commit_saved_input(t)
    rec = reg.emit_report().records[0]
    assert rec.branch_inputs == {207: 1, 208: 1}
    assert rec.predicate_inputs == 1


def test_discarded_inputs_leave_counters_unchanged():
    reg = register_predicates("minilang", [META])
    t = ExecutionTrace()
    record_branch(t, "ml.plus", 207)
    # never committed
    rec = reg.emit_report().records[0]
    assert rec.branch_inputs == {207: 0, 208: 0}
    assert reg.total_saved_inputs == 0


def test_unknown_predicate_and_line_ignored():
    reg = register_predicates("minilang", [META])
    t = ExecutionTrace()
    record_branch(t, "ghost", 1)
    record_branch(t, "ml.plus", 999)  # line the meta does not declare
    reg.commit_saved_input(t)
    rec = reg.emit_report().records[0]
    assert rec.predicate_inputs == 0
    assert reg.total_saved_inputs == 1


def test_counts_match_offline_recount_oracle():
    # script random traces, commit a random subset, recount with plain sets
    rng = random.Random(404)
    reg = register_predicates("minilang", [META, OTHER])
    saved_events = []
    for _ in range(200):
        t = ExecutionTrace()
        for _ in range(rng.randrange(6)):
            pid = rng.choice(["ml.plus", "ml.ovr", "ghost"])
            line = rng.choice([207, 208, 104, 110, 999])
            record_branch(t, pid, line)
        if rng.random() < 0.5:
            reg.commit_saved_input(t)
            saved_events.append(list(t.events))
    # independent recount
    legal = {"ml.plus": {207, 208}, "ml.ovr": {104, 110}}
    branch_sets = {(pid, ln): set() for pid, lns in legal.items() for ln in lns}
    pred_sets = {pid: set() for pid in legal}
    for idx, events in enumerate(saved_events):
        for pid, line in events:
            if pid in legal and line in legal[pid]:
                branch_sets[(pid, line)].add(idx)
                pred_sets[pid].add(idx)
    report = {r.meta.predicate_id: r for r in reg.emit_report().records}
    for pid, lns in legal.items():
        assert report[pid].predicate_inputs == len(pred_sets[pid])
        for ln in lns:
            assert report[pid].branch_inputs[ln] == len(branch_sets[(pid, ln)])
    # bound invariants
    total = reg.total_saved_inputs
    assert total == len(saved_events)
    for rec in report.values():
        counts = list(rec.branch_inputs.values())
        assert max(counts) <= rec.predicate_inputs <= sum(counts) or rec.predicate_inputs == 0
        assert rec.predicate_inputs <= total


def test_dynamic_record_golden_bytes():
    rec = DynamicPredicateRecord(META, 822, {207: 798, 208: 24})
    expected = (
        "{\n"
        '  "class": "minilang.TypeChecker",\n'
        '  "method": "analyzePlus",\n'
        '  "predicateLine": 206,\n'
        '  "predicateInputs": 822,\n'
        '  "branches": [\n'
        '    { "line": 207, "inputs": 798 },\n'
        '    { "line": 208, "inputs": 24 }\n'
        "  ]\n"
        "}"
    )
    assert serialize_dynamic_record(rec) == expected


def test_dynamic_report_is_valid_json():
    reg = register_predicates("minilang", [META, OTHER])
    t = ExecutionTrace()
    record_branch(t, "ml.plus", 208)
    reg.commit_saved_input(t)
    text = serialize_dynamic_report(reg.emit_report())
    obj = json.loads(text)
    assert obj["totalSavedInputs"] == 1
    assert obj["records"][0]["branches"][1] == {"line": 208, "inputs": 1}
