"""Refinement loop: scripted rule, external protocol, checkpointing."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from predfuzz.errors import RefinerInvalid, RefinerTimeout
from predfuzz.generation import GeneratorConfig, builtin_config, validate_config
from predfuzz.predicates import (
    DynamicPredicateRecord,
    DynamicPredicateReport,
    PredicateMeta,
)
from predfuzz.refine import (
    IterationCheckpoint,
    RefineState,
    build_refiner_request,
    coverage_series,
    external_refine,
    llm_identify_predicates,
    run_iteration,
    run_loop,
    scripted_refine,
)
from predfuzz.targets import get_target

_ML_METAS = {m.predicate_id: m for m in get_target("minilang").predicate_metas}


def _report(branch_counts, total=None):
    """Build a minilang dynamic report from {predicate_id: {line: count}}."""
    records = []
    for pid, meta in _ML_METAS.items():
        counts = {line: 0 for line in meta.branch_lines}
        counts.update(branch_counts.get(pid, {}))
        reached = max(counts.values())
        records.append(DynamicPredicateRecord(meta, reached, counts))
    return DynamicPredicateReport(records, total or 100)


_HEALTHY = {
    "ml.override": {104: 40, 110: 60},
    "ml.sig_mismatch": {106: 30, 108: 70},
    "ml.plus": {207: 50, 208: 45},
}


def test_well_covered_report_is_fixpoint():
    cfg = builtin_config("minilang", "structured")
    cfg.toggles["mismatch_signature"] = True
    out = scripted_refine(cfg, _report(_HEALTHY))
    assert out.fingerprint() == cfg.fingerprint()


def test_zero_hit_signature_branch_flips_mismatch_toggle():
    cfg = builtin_config("minilang", "structured")
    report = _report(
        {
            "ml.override": {104: 40, 110: 60},
            "ml.sig_mismatch": {106: 0, 108: 70},
            "ml.plus": {207: 50, 208: 45},
        }
    )
    out = scripted_refine(cfg, report)
    assert out.toggles["mismatch_signature"] is True
    assert cfg.toggles["mismatch_signature"] is False  # input untouched


def test_skewed_plus_branch_bumps_mixed_list_weight():
    # 798 vs 24 of 822: ratio 0.029 sits under the 0.05 trigger
    cfg = builtin_config("minilang", "structured")
    cfg.toggles["mismatch_signature"] = True
    report = _report(
        {
            "ml.override": {104: 300, 110: 500},
            "ml.sig_mismatch": {106: 200, 108: 600},
            "ml.plus": {207: 798, 208: 24},
        },
        total=822,
    )
    before = cfg.weights["w_plus_list_mixed"]
    out = scripted_refine(cfg, report)
    assert out.weights["w_plus_list_mixed"] > before


def test_zero_weight_bumps_to_one():
    cfg = validate_config(GeneratorConfig("minilang", weights={"w_plus_int": 0.0}))
    cfg.toggles["mismatch_signature"] = True
    cfg.toggles["enable_inheritance"] = True
    cfg.toggles["enable_method_override"] = True
    cfg.toggles["enable_lists"] = True
    report = _report(
        {
            "ml.override": {104: 40, 110: 60},
            "ml.sig_mismatch": {106: 30, 108: 70},
            "ml.plus": {207: 0, 208: 45},
        }
    )
    out = scripted_refine(cfg, report)
    assert out.weights["w_plus_int"] == 1.0


def test_weight_multiplier_caps_out():
    cfg = builtin_config("minilang", "structured")
    cfg.toggles["mismatch_signature"] = True
    cfg.toggles["enable_lists"] = True
    cfg.weights["w_plus_list_mixed"] = 64.0
    report = _report(
        {
            "ml.override": {104: 40, 110: 60},
            "ml.sig_mismatch": {106: 30, 108: 70},
            "ml.plus": {207: 500, 208: 0},
        }
    )
    # toggle already on and weight at cap: nothing to change, so identity
    out = scripted_refine(cfg, report)
    assert out.fingerprint() == cfg.fingerprint()


def test_zero_hit_outranks_low_ratio():
    cfg = builtin_config("minilang", "structured")
    report = _report(
        {
            "ml.override": {104: 40, 110: 60},
            "ml.sig_mismatch": {106: 0, 108: 70},     # zero-hit
            "ml.plus": {207: 798, 208: 24},            # starved ratio
        },
        total=822,
    )
    out = scripted_refine(cfg, report)
    assert out.toggles["mismatch_signature"] is True
    assert out.weights["w_plus_list_mixed"] == cfg.weights["w_plus_list_mixed"]


def test_scripted_refine_is_pure():
    cfg = builtin_config("minilang", "structured")
    report = _report({"ml.sig_mismatch": {106: 0, 108: 70}})
    a = scripted_refine(cfg, report)
    b = scripted_refine(cfg, report)
    assert a.fingerprint() == b.fingerprint()


def test_missing_report_keeps_config():
    cfg = builtin_config("json", "naive")
    assert scripted_refine(cfg, None).fingerprint() == cfg.fingerprint()


# ---------------------------------------------------------------------------
# iterations


def test_first_iteration_ratio_is_exactly_one():
    state = RefineState("json", builtin_config("json", "naive"))
    cp = run_iteration(state, budget_execs=50, rng_seed=1)
    assert cp.iteration == 1
    assert cp.coverage_ratio_vs_iter1 == 1.0
    assert not cp.failed


def test_single_execution_budget_still_checkpoints():
    state = RefineState("bzh", builtin_config("bzh", "naive"))
    cp = run_iteration(state, budget_execs=1, rng_seed=1)
    assert cp.campaign.executions == 1
    assert len(cp.campaign.coverage) >= 1


def test_ratio_is_coverage_quotient():
    state = RefineState("minilang", builtin_config("minilang", "naive"))
    cp1 = run_iteration(state, budget_execs=300, rng_seed=3)
    cp2 = run_iteration(state, budget_execs=1200, rng_seed=4)
    expected = len(cp2.campaign.coverage) / len(cp1.campaign.coverage)
    assert cp2.coverage_ratio_vs_iter1 == pytest.approx(expected)


def test_campaign_failure_recorded_not_raised():
    bad = GeneratorConfig("minilang", toggles={"enable_time_machine": True})
    state = RefineState("minilang", bad)
    cp = run_iteration(state, budget_execs=10, rng_seed=1)
    assert cp.failed
    assert cp.campaign is None
    assert state.refiner_errors


def test_coverage_series_shapes():
    state = RefineState("json", builtin_config("json", "naive"))
    run_iteration(state, budget_execs=60, rng_seed=1)
    assert coverage_series(state) == [(1, 1.0)]
    # synthetic ratios: 100 -> 118 -> 90 relative to the first checkpoint
    cfg = state.config
    state.checkpoints.append(
        IterationCheckpoint(2, cfg.copy(), None, 118 / 100)
    )
    state.checkpoints.append(
        IterationCheckpoint(3, cfg.copy(), None, 90 / 100)
    )
    series = coverage_series(state)
    assert series[1] == (2, pytest.approx(1.18))
    assert series[2] == (3, pytest.approx(0.9))


def test_bzh_single_step_recovers_deep_coverage():
    # unbounded origin pointer starves everything behind its gate; one
    # refinement step bounds it and coverage jumps
    cfg = builtin_config("bzh", "structured")
    cfg.toggles["bound_orig_ptr"] = False
    state = RefineState("bzh", cfg, feedback_mode="static")
    state = run_loop(state, iterations=3, budget_execs=2000, rng_seed=5)
    assert state.checkpoints[1].config_snapshot.toggles["bound_orig_ptr"]
    assert state.checkpoints[1].coverage_ratio_vs_iter1 > 1.0


def test_minilang_loop_unlocks_signature_branch(tmp_path):
    state = RefineState(
        "minilang", builtin_config("minilang", "structured"), feedback_mode="static"
    )
    state = run_loop(
        state, iterations=6, budget_execs=3000, rng_seed=42, outdir=tmp_path
    )
    assert state.fixpoint_iteration is not None
    assert state.fixpoint_iteration <= 6
    last = state.checkpoints[-1]
    by_id = {
        r.meta.predicate_id: r for r in last.campaign.dynamic_report.records
    }
    assert by_id["ml.sig_mismatch"].branch_inputs[106] > 0
    assert last.coverage_ratio_vs_iter1 > 1.0
    # checkpoint directory layout
    first = tmp_path / "iter_001"
    for name in ("config.json", "summary.json", "dynamic_report.json", "refine.json"):
        assert (first / name).is_file(), name
    assert (tmp_path / "series.json").is_file()
    series = json.loads((tmp_path / "series.json").read_text())
    assert series["series"][0] == {"iteration": 1, "ratio": 1.0}


# ---------------------------------------------------------------------------
# external refiner


class _Refiner(BaseHTTPRequestHandler):
    mode = "echo"
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Refiner.seen.append(body)
        if _Refiner.mode == "garbage":
            self._send(b"}{ nonsense")
            return
        if _Refiner.mode == "neither":
            self._reply({"hello": "world"})
            return
        if _Refiner.mode == "records":
            self._reply(
                {
                    "records": [
                        {
                            "class": "minilang.TypeChecker",
                            "method": "analyzePlus",
                            "line": 206,
                            "branches": [
                                {"line": 207, "dominance": 10},
                                {"line": 208, "dominance": 40},
                            ],
                        },
                        {
                            "class": "minilang.Imaginary",
                            "method": "nope",
                            "line": 999,
                            "branches": [{"line": 1000, "dominance": 5}],
                        },
                    ]
                }
            )
            return
        config = dict(body["config"])
        if _Refiner.mode == "badknob":
            config["toggles"] = dict(config["toggles"], bogus_knob=True)
        elif _Refiner.mode == "enable_inheritance":
            config["toggles"] = dict(
                config["toggles"],
                enable_inheritance=True,
                enable_method_override=True,
            )
        self._reply({"config": config})

    def _reply(self, obj):
        self._send(json.dumps(obj).encode())

    def _send(self, data):
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def endpoint():
    server = HTTPServer(("127.0.0.1", 0), _Refiner)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Refiner.mode = "echo"
    _Refiner.seen = []
    yield f"http://127.0.0.1:{server.server_port}/"
    server.shutdown()


def _request_for(state, budget=100):
    cp = run_iteration(state, budget_execs=budget, rng_seed=1)
    return build_refiner_request(state, cp)


def test_echoed_config_keeps_loop_stable(endpoint):
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    before = state.config.fingerprint()
    state = run_loop(
        state,
        iterations=3,
        budget_execs=80,
        refiner="external",
        endpoint=endpoint,
        rng_seed=1,
    )
    assert len(state.checkpoints) == 3  # echo does not end the loop early
    assert state.config.fingerprint() == before
    assert not state.refiner_errors


def test_unknown_knob_response_retains_config(endpoint):
    _Refiner.mode = "badknob"
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    before = state.config.fingerprint()
    state = run_loop(
        state,
        iterations=2,
        budget_execs=80,
        refiner="external",
        endpoint=endpoint,
        rng_seed=1,
    )
    assert state.config.fingerprint() == before
    assert any("rejected" in err for err in state.refiner_errors)


def test_garbage_response_raises_invalid(endpoint):
    _Refiner.mode = "garbage"
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    with pytest.raises(RefinerInvalid):
        external_refine(endpoint, _request_for(state))


def test_response_without_config_or_records_invalid(endpoint):
    _Refiner.mode = "neither"
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    with pytest.raises(RefinerInvalid):
        external_refine(endpoint, _request_for(state))


def test_unreachable_endpoint_times_out():
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    with pytest.raises(RefinerTimeout):
        external_refine("http://127.0.0.1:9/", _request_for(state), timeout=2)


def test_base_mode_request_carries_no_predicate_data(endpoint):
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="base")
    obj = _request_for(state).to_obj()
    assert "dynamic_report" not in obj
    assert "static_records" not in obj
    assert obj["sample_inputs"]
    assert obj["stats"]["executions"] == 100


def test_static_mode_request_carries_report(endpoint):
    state = RefineState(
        "minilang", builtin_config("minilang", "structured"), feedback_mode="static"
    )
    state.static_records = []
    obj = _request_for(state).to_obj()
    assert "dynamic_report" in obj
    assert obj["dynamic_report"]["records"]


def test_canned_inheritance_response_reaches_override_branch(endpoint):
    _Refiner.mode = "enable_inheritance"
    cfg = builtin_config("minilang", "structured")
    cfg.toggles["enable_inheritance"] = False
    cfg.toggles["enable_method_override"] = False
    state = RefineState("minilang", cfg, feedback_mode="static")
    state = run_loop(
        state,
        iterations=2,
        budget_execs=2500,
        refiner="external",
        endpoint=endpoint,
        rng_seed=7,
    )
    last = state.checkpoints[-1]
    by_id = {
        r.meta.predicate_id: r for r in last.campaign.dynamic_report.records
    }
    assert by_id["ml.override"].predicate_inputs > 0
    assert by_id["ml.override"].branch_inputs[104] > 0  # needs inheritance on


def test_records_response_updates_state(endpoint):
    _Refiner.mode = "records"
    state = RefineState(
        "minilang", builtin_config("minilang", "structured"), feedback_mode="static"
    )
    state.static_records = []
    state = run_loop(
        state,
        iterations=2,
        budget_execs=100,
        refiner="external",
        endpoint=endpoint,
        rng_seed=1,
    )
    assert state.static_records  # adopted from the response
    assert state.static_records[0].line == 206


def test_identify_accepts_known_drops_unknown(endpoint):
    _Refiner.mode = "records"
    with pytest.warns(UserWarning):
        records = llm_identify_predicates(endpoint, "minilang")
    assert len(records) == 1
    assert records[0].source_class == "minilang.TypeChecker"
    assert records[0].score == 40


def test_identify_failure_falls_back_to_base():
    with pytest.warns(UserWarning):
        records = llm_identify_predicates("http://127.0.0.1:9/", "minilang", timeout=2)
    assert records == []


def test_llm_mode_with_empty_records_runs_as_base(endpoint):
    _Refiner.mode = "neither"  # identify returns no records
    state = RefineState("json", builtin_config("json", "naive"), feedback_mode="llm")
    state = run_loop(
        state,
        iterations=1,
        budget_execs=60,
        refiner="external",
        endpoint=endpoint,
        rng_seed=1,
    )
    assert state.feedback_mode == "base"
