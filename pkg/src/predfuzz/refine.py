"""Iterative generator refinement.

Each iteration runs a short guided campaign under the current generator
configuration, then hands the results to a refiner: either the built-in
scripted rule or an external service spoken to over a small JSON exchange.
Three feedback levels exist: base (campaign stats and sample inputs only),
static (plus ranked predicate records), and llm (an endpoint first proposes
the predicate records itself).
"""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .cfg import (
    StaticPredicateRecord,
    build_supergraph,
    parse_static_records,
    rank_predicates,
    serialize_static_records,
    static_record_to_obj,
)
from .engine import CampaignResult, EngineOptions, run_campaign, save_campaign
from .errors import RefinerInvalid, RefinerTimeout
from .generation import GeneratorConfig, config_from_obj
from .predicates import DynamicPredicateReport, dynamic_report_to_obj
from .stream import ParamStream
from .targets import get_target

_FEEDBACK_MODES = ("base", "static", "llm")

REFINE_THRESHOLD = 0.05   # branch_inputs / predicate_inputs below this is starved
WEIGHT_FACTOR = 4.0       # multiplier applied to a starving production weight
WEIGHT_CAP = 64.0


@dataclass
class IterationCheckpoint:
    iteration: int
    config_snapshot: GeneratorConfig
    campaign: CampaignResult | None
    coverage_ratio_vs_iter1: float
    failed: bool = False


@dataclass
class RefineState:
    target_id: str
    config: GeneratorConfig
    iteration: int = 1
    static_records: list[StaticPredicateRecord] | None = None
    feedback_mode: str = "static"
    checkpoints: list[IterationCheckpoint] = field(default_factory=list)
    fixpoint_iteration: int | None = None
    refiner_errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.feedback_mode not in _FEEDBACK_MODES:
            raise ValueError(
                f"feedback_mode must be one of {_FEEDBACK_MODES}"
            )


def run_iteration(
    state: RefineState,
    budget_execs: int | None = None,
    budget_secs: float | None = None,
    rng_seed: int | None = None,
    options: EngineOptions | None = None,
) -> IterationCheckpoint:
    """Run one campaign under the current config and append a checkpoint.

    A campaign failure is recorded with the failed flag instead of
    propagating, so a loop can continue past a bad configuration.
    """
    number = len(state.checkpoints) + 1
    state.iteration = number
    seed = rng_seed if rng_seed is not None else number
    try:
        campaign = run_campaign(
            state.target_id,
            state.config,
            "guided",
            budget_execs=budget_execs,
            budget_secs=budget_secs,
            rng_seed=seed,
            options=options,
        )
    except Exception as exc:  # keep the loop alive; the flag tells the story
        checkpoint = IterationCheckpoint(
            iteration=number,
            config_snapshot=state.config.copy(),
            campaign=None,
            coverage_ratio_vs_iter1=0.0,
            failed=True,
        )
        state.checkpoints.append(checkpoint)
        state.refiner_errors.append(f"iteration {number} campaign failed: {exc}")
        return checkpoint

    covered = len(campaign.coverage)
    base = covered
    for cp in state.checkpoints:
        if not cp.failed and cp.campaign is not None:
            base = len(cp.campaign.coverage)
            break
    if not state.checkpoints:
        ratio = 1.0  # first checkpoint anchors the series
    else:
        ratio = covered / base if base else 1.0
    checkpoint = IterationCheckpoint(
        iteration=number,
        config_snapshot=state.config.copy(),
        campaign=campaign,
        coverage_ratio_vs_iter1=ratio,
    )
    state.checkpoints.append(checkpoint)
    return checkpoint


def coverage_series(state: RefineState) -> list[tuple[int, float]]:
    """(iteration, coverage ratio vs iteration 1) pairs for plotting."""
    return [
        (cp.iteration, cp.coverage_ratio_vs_iter1) for cp in state.checkpoints
    ]


# ---------------------------------------------------------------------------
# scripted refiner


def scripted_refine(
    config: GeneratorConfig,
    dyn_report: DynamicPredicateReport | None,
    static_records: list[StaticPredicateRecord] | None = None,
    threshold: float = REFINE_THRESHOLD,
    weight_factor: float = WEIGHT_FACTOR,
    weight_cap: float = WEIGHT_CAP,
) -> GeneratorConfig:
    """Deterministic refinement rule over the dynamic predicate report.

    Predicates are ranked by static dominance when records are supplied,
    else by report order.  Zero-hit branches come before merely starved
    ones (branch share below threshold).  The first candidate whose
    target-declared hint actually changes the config wins: hinted toggles
    flip on, a hinted weight is multiplied (zero weights become 1).  With
    no qualifying candidate the config comes back unchanged, which is the
    loop's fixpoint signal.
    """
    if dyn_report is None or not dyn_report.records:
        return config
    binding = get_target(config.target_id)

    score_by_loc: dict[tuple[str, str, int], int] = {}
    if static_records:
        for rec in static_records:
            loc = (rec.source_class, rec.source_method, rec.line)
            score_by_loc[loc] = max(score_by_loc.get(loc, 0), rec.score)

    candidates: list[tuple[tuple, str, int]] = []
    for order, rec in enumerate(dyn_report.records):
        meta = rec.meta
        if static_records:
            loc = (meta.source_class, meta.source_method, meta.predicate_line)
            rank: tuple = (-score_by_loc.get(loc, 0), order)
        else:
            rank = (order,)
        for line in meta.branch_lines:
            inputs = rec.branch_inputs.get(line, 0)
            if inputs == 0:
                priority = 0
            elif (
                rec.predicate_inputs > 0
                and inputs / rec.predicate_inputs < threshold
            ):
                priority = 1
            else:
                continue
            candidates.append(
                ((priority,) + rank + (line,), meta.predicate_id, line)
            )
    candidates.sort(key=lambda c: c[0])

    for _, predicate_id, line in candidates:
        hint = binding.refine_hints.get((predicate_id, line))
        if hint is None:
            continue
        new = config.copy()
        changed = False
        for toggle in hint.toggles:
            if not new.toggles.get(toggle, False):
                new.toggles[toggle] = True
                changed = True
        if hint.weight is not None:
            old = float(new.weights.get(hint.weight, 0.0))
            bumped = 1.0 if old == 0 else min(weight_cap, old * weight_factor)
            if bumped != old:
                new.weights[hint.weight] = bumped
                changed = True
        if changed:
            return new
    return config


# ---------------------------------------------------------------------------
# external refiner protocol


@dataclass
class RefinerRequest:
    target_id: str
    iteration: int
    feedback_mode: str
    config: GeneratorConfig
    stats: dict
    sample_inputs: list[str] = field(default_factory=list)
    dynamic_report: DynamicPredicateReport | None = None
    static_records: list[StaticPredicateRecord] | None = None

    def to_obj(self) -> dict:
        obj = {
            "target_id": self.target_id,
            "iteration": self.iteration,
            "feedback_mode": self.feedback_mode,
            "config": self.config.to_obj(),
            "stats": self.stats,
            "sample_inputs": self.sample_inputs,
        }
        if self.dynamic_report is not None:
            obj["dynamic_report"] = dynamic_report_to_obj(self.dynamic_report)
        if self.static_records is not None:
            obj["static_records"] = [
                static_record_to_obj(r) for r in self.static_records
            ]
        return obj


@dataclass
class RefinerResponse:
    config: GeneratorConfig | None = None
    records: list[StaticPredicateRecord] | None = None


def build_refiner_request(
    state: RefineState, checkpoint: IterationCheckpoint, samples: int = 3
) -> RefinerRequest:
    """Assemble the wire request, gating fields by feedback mode.

    Base mode sends only campaign statistics plus a few decoded sample
    inputs; static and llm modes add the dynamic report and the predicate
    records.
    """
    campaign = checkpoint.campaign
    stats = {
        "executions": campaign.executions if campaign else 0,
        "coverage": len(campaign.coverage) if campaign else 0,
        "corpus_size": len(campaign.corpus) if campaign else 0,
        "failed": checkpoint.failed,
    }
    binding = get_target(state.target_id)
    sample_inputs = []
    for i in range(samples):
        stream = ParamStream(
            bytes((checkpoint.iteration * 37 + i * 11 + j) % 256 for j in range(48)),
            overflow_seed=checkpoint.iteration * 1000 + i,
        )
        payload = binding.decode(state.config, stream)
        sample_inputs.append(payload.decode("latin-1"))
    request = RefinerRequest(
        target_id=state.target_id,
        iteration=checkpoint.iteration,
        feedback_mode=state.feedback_mode,
        config=state.config,
        stats=stats,
        sample_inputs=sample_inputs,
    )
    if state.feedback_mode in ("static", "llm"):
        request.dynamic_report = campaign.dynamic_report if campaign else None
        request.static_records = state.static_records
    return request


def _post_json(endpoint: str, obj: dict, timeout: float) -> dict:
    body = json.dumps(obj).encode("utf-8")
    req = urllib.request.Request(
        endpoint, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except socket.timeout as exc:
        raise RefinerTimeout(f"refiner timed out: {exc}") from exc
    except urllib.error.HTTPError as exc:
        raise RefinerInvalid(f"refiner returned HTTP {exc.code}") from exc
    except urllib.error.URLError as exc:
        raise RefinerTimeout(f"refiner unreachable: {exc.reason}") from exc
    try:
        parsed = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RefinerInvalid(f"refiner response is not JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise RefinerInvalid("refiner response must be a JSON object")
    return parsed


def external_refine(
    endpoint: str, request: RefinerRequest, timeout: float = 30.0
) -> RefinerResponse:
    """POST the request and validate the reply.

    The reply must carry either a full replacement config (validated
    against the target's knob schema before adoption) or a list of
    predicate records.  Anything else raises RefinerInvalid; the caller
    keeps the previous config on any error.
    """
    parsed = _post_json(endpoint, request.to_obj(), timeout)
    if "config" in parsed:
        try:
            config = config_from_obj(parsed["config"])
        except Exception as exc:
            raise RefinerInvalid(f"refiner config rejected: {exc}") from exc
        if config.target_id != request.target_id:
            raise RefinerInvalid(
                f"refiner config targets {config.target_id!r}, "
                f"expected {request.target_id!r}"
            )
        return RefinerResponse(config=config)
    if "records" in parsed:
        try:
            records = parse_static_records(json.dumps(parsed["records"]))
        except Exception as exc:
            raise RefinerInvalid(f"refiner records rejected: {exc}") from exc
        return RefinerResponse(records=records)
    raise RefinerInvalid("refiner response has neither config nor records")


def _known_predicate_locations(target_id: str) -> set[tuple[str, str, int]]:
    binding = get_target(target_id)
    desc = binding.cfg_description()
    graph = build_supergraph(
        desc.procedures, desc.calls, desc.exclusions, desc.entry
    )
    return {
        (r.source_class, r.source_method, r.line) for r in rank_predicates(graph)
    }


def llm_identify_predicates(
    endpoint: str, target_id: str, timeout: float = 30.0
) -> list[StaticPredicateRecord]:
    """Ask an external service to propose predicate records for a target.

    Proposed records are checked against the target's CFG description;
    records at unknown locations are dropped with a warning.  On endpoint
    failure an empty list comes back and the caller falls back to running
    without predicate records.
    """
    binding = get_target(target_id)
    request = {
        "kind": "identify_predicates",
        "target_id": target_id,
        "source": binding.cfg_text(),
    }
    try:
        parsed = _post_json(endpoint, request, timeout)
        records = parse_static_records(json.dumps(parsed.get("records", [])))
    except Exception as exc:
        warnings.warn(f"predicate identification failed: {exc}")
        return []
    known = _known_predicate_locations(target_id)
    accepted = []
    for rec in records:
        loc = (rec.source_class, rec.source_method, rec.line)
        if loc in known:
            accepted.append(rec)
        else:
            warnings.warn(f"dropping record at unknown location {loc}")
    return accepted


# ---------------------------------------------------------------------------
# loop driver


def _default_static_records(target_id: str) -> list[StaticPredicateRecord]:
    binding = get_target(target_id)
    desc = binding.cfg_description()
    graph = build_supergraph(
        desc.procedures, desc.calls, desc.exclusions, desc.entry
    )
    return rank_predicates(graph)


def _save_checkpoint(
    outdir: Path, checkpoint: IterationCheckpoint
) -> None:
    cp_dir = outdir / f"iter_{checkpoint.iteration:03d}"
    cp_dir.mkdir(parents=True, exist_ok=True)
    if checkpoint.campaign is not None:
        save_campaign(checkpoint.campaign, cp_dir)
    meta = {
        "iteration": checkpoint.iteration,
        "coverage_ratio_vs_iter1": checkpoint.coverage_ratio_vs_iter1,
        "failed": checkpoint.failed,
        "config_fingerprint": checkpoint.config_snapshot.fingerprint(),
    }
    (cp_dir / "refine.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_loop(
    state: RefineState,
    iterations: int,
    budget_execs: int | None = None,
    budget_secs: float | None = None,
    refiner: str = "scripted",
    endpoint: str | None = None,
    outdir: str | Path | None = None,
    rng_seed: int = 0,
    threshold: float = REFINE_THRESHOLD,
    timeout: float = 30.0,
    options: EngineOptions | None = None,
) -> RefineState:
    """Run up to `iterations` campaign/refine rounds, stopping at a fixpoint.

    refiner is "scripted" or "external"; external needs an endpoint.  Any
    external error keeps the current config and logs the reason.  When a
    refinement round leaves the config fingerprint unchanged the loop stops
    and records the fixpoint iteration.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if refiner not in ("scripted", "external"):
        raise ValueError("refiner must be 'scripted' or 'external'")
    if refiner == "external" and not endpoint:
        raise ValueError("external refiner needs an endpoint")

    if state.feedback_mode == "static" and state.static_records is None:
        state.static_records = _default_static_records(state.target_id)
    elif state.feedback_mode == "llm":
        if not endpoint:
            raise ValueError("llm feedback mode needs an endpoint")
        records = llm_identify_predicates(endpoint, state.target_id, timeout)
        if records:
            state.static_records = records
        else:
            state.feedback_mode = "base"  # documented fallback

    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for it in range(1, iterations + 1):
        checkpoint = run_iteration(
            state,
            budget_execs=budget_execs,
            budget_secs=budget_secs,
            rng_seed=rng_seed + it,
            options=options,
        )
        if out is not None:
            _save_checkpoint(out, checkpoint)
        if it == iterations:
            break

        previous = state.config
        if refiner == "scripted":
            dyn = checkpoint.campaign.dynamic_report if checkpoint.campaign else None
            records = (
                state.static_records
                if state.feedback_mode in ("static", "llm")
                else None
            )
            if state.feedback_mode == "base":
                dyn = None  # base mode carries no predicate data
            new_config = scripted_refine(
                previous, dyn, records, threshold=threshold
            )
            # the scripted rule is pure, so an unchanged config is final
            if new_config.fingerprint() == previous.fingerprint():
                state.fixpoint_iteration = it
                break
        else:
            request = build_refiner_request(state, checkpoint)
            try:
                response = external_refine(endpoint, request, timeout)
            except (RefinerTimeout, RefinerInvalid) as exc:
                state.refiner_errors.append(str(exc))
                new_config = previous
            else:
                if response.records is not None:
                    state.static_records = response.records
                    new_config = previous
                else:
                    new_config = response.config
        state.config = new_config

    if out is not None:
        series = [
            {"iteration": i, "ratio": r} for i, r in coverage_series(state)
        ]
        (out / "series.json").write_text(
            json.dumps(
                {
                    "target": state.target_id,
                    "feedback_mode": state.feedback_mode,
                    "fixpoint_iteration": state.fixpoint_iteration,
                    "series": series,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        if state.static_records is not None:
            (out / "static_records.json").write_text(
                serialize_static_records(state.static_records), encoding="utf-8"
            )
    return state
