"""Miniature instrumented programs-under-test.

Each target bundles: a decoder that turns a byte stream plus a generator
config into a payload, a run function that executes the payload while
emitting the control-flow edges it traverses, a hand-authored CFG
description shipped as JSON next to the code, tracked predicate metadata
whose locations exist in that CFG, and refinement hints mapping starved
predicate branches to the config knob that would feed them.

Branch ids are edge names "src->dst" over the CFG's block ids, so the
alignment between instrumentation and description is directly checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from ..cfg import CfgDescription, load_cfg_description
from ..errors import TargetNotFound
from ..predicates import ExecutionTrace, PredicateMeta


@dataclass
class RunOutcome:
    status: str  # ok | rejected | error
    reason: str = ""
    branches_hit: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class KnobSchema:
    """Knob names a target's grammar understands, with defaults."""

    weights: dict[str, float]
    toggles: dict[str, bool]
    bounds: dict[str, int]


@dataclass(frozen=True)
class RefineHint:
    """What a refiner may do about a starved branch: enable toggles and/or
    boost one production weight."""

    toggles: tuple[str, ...] = ()
    weight: str | None = None


@dataclass
class TargetBinding:
    target_id: str
    entry_point: str
    knobs: KnobSchema
    predicate_metas: tuple[PredicateMeta, ...]
    decode: Callable
    run_fn: Callable
    cfg_file: str
    refine_hints: dict[tuple[str, int], RefineHint]
    invocations: int = 0  # instrumentation-side execution counter

    def run(self, payload, trace: ExecutionTrace | None = None) -> RunOutcome:
        self.invocations += 1
        return self.run_fn(payload, trace)

    def cfg_text(self) -> str:
        return resources.files(__package__).joinpath("data", self.cfg_file).read_text()

    def cfg_description(self) -> CfgDescription:
        return load_cfg_description(self.cfg_text())


class EdgeSet:
    """Collects traversed edges during one run."""

    __slots__ = ("hits",)

    def __init__(self):
        self.hits: set[str] = set()

    def walk(self, src: str, dst: str) -> None:
        self.hits.add(f"{src}->{dst}")

    def chain(self, names) -> None:
        prev = None
        for name in names:
            if prev is not None:
                self.hits.add(f"{prev}->{name}")
            prev = name


def _registry() -> dict[str, TargetBinding]:
    from . import bzh, jsonmini, minilang

    return {
        b.target_id: b for b in (minilang.BINDING, jsonmini.BINDING, bzh.BINDING)
    }


_TARGETS: dict[str, TargetBinding] | None = None


def get_target(target_id: str) -> TargetBinding:
    global _TARGETS
    if _TARGETS is None:
        _TARGETS = _registry()
    try:
        return _TARGETS[target_id]
    except KeyError:
        raise TargetNotFound(target_id) from None


def all_target_ids() -> list[str]:
    global _TARGETS
    if _TARGETS is None:
        _TARGETS = _registry()
    return sorted(_TARGETS)


def target_cfg(target_id: str) -> CfgDescription:
    """The target's CFG description, loaded from the JSON shipped beside it."""
    return get_target(target_id).cfg_description()


def minilang_check(source: str | bytes, trace=None) -> RunOutcome:
    from . import minilang

    return minilang.minilang_check(source, trace)


def json_parse(payload: bytes, trace=None) -> RunOutcome:
    from . import jsonmini

    return jsonmini.json_parse(payload, trace)


def bzh_decode(payload: bytes, trace=None) -> RunOutcome:
    from . import bzh

    return bzh.bzh_decode(payload, trace)
