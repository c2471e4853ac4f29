"""Coverage-guided fuzzing engine.

The engine drives one campaign at a time: decode a parameter stream into a
target payload, run the instrumented target, and keep the stream in the
corpus when the run reached a branch nobody reached before.  Guided mode
mutates saved streams; random mode draws every stream fresh and never calls
the mutator, which keeps the two arms comparable in an experiment.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EntryCorrupt
from .generation import (
    GeneratedInput,
    GeneratorConfig,
    load_config,
    save_config_file,
    validate_config,
)
from .predicates import (
    ExecutionTrace,
    PredicateRegistry,
    serialize_dynamic_report,
)
from .stream import ParamStream
from .targets import get_target

_MODES = ("guided", "random")

_ENTRY_MAGIC = b"PFZC"
_ENTRY_VERSION = 1


@dataclass
class EngineOptions:
    """Tunables that shape a campaign but are not part of the experiment arm."""

    max_input_size: int = 4096
    max_mutations: int = 8          # stacking depth per mutant
    favored_multiplier: int = 3
    sample_every: int = 200         # executions between coverage samples
    fresh_min: int = 16             # fresh stream length range, inclusive
    fresh_max: int = 96
    insert_max: int = 16            # block-insert length cap


@dataclass
class CoverageMap:
    """Set of branch ids observed so far in a campaign."""

    covered: set[str] = field(default_factory=set)

    def new_of(self, branches: set[str]) -> set[str]:
        return branches - self.covered

    def merge(self, branches: set[str]) -> None:
        self.covered |= branches

    def __len__(self) -> int:
        return len(self.covered)


@dataclass
class CorpusEntry:
    """A saved parameter stream and the branches it was first to reach."""

    stream_bytes: bytes
    overflow_seed: int
    new_branches: set[str]
    payload_sha256: str = ""
    times_selected: int = 0
    favored: bool = False


@dataclass(frozen=True)
class CoverageSample:
    executions: int
    elapsed: float
    covered: int


@dataclass
class CampaignResult:
    target_id: str
    mode: str
    config: GeneratorConfig
    corpus: list[CorpusEntry]
    coverage: CoverageMap
    samples: list[CoverageSample]
    executions: int
    duration: float
    inputs_per_sec: float
    mutate_calls: int
    dynamic_report: object  # DynamicPredicateReport
    rng_seed: int


def should_save(coverage: CoverageMap, branches_hit: set[str]) -> bool:
    """Save exactly when the run covered a branch no earlier run covered."""
    return bool(coverage.new_of(branches_hit))


def mutate(
    data: bytes,
    decisions: ParamStream,
    max_input_size: int = 4096,
    max_mutations: int = 8,
    insert_max: int = 16,
) -> bytes:
    """Apply a stack of 1..max_mutations havoc-style edits to data.

    Every choice is drawn from the decision stream, so a mutant is a pure
    function of (data, decision bytes).  An empty input forces one block
    insert; no other path can grow an empty buffer.
    """
    out = bytearray(data)
    rounds = decisions.next_int(1, max_mutations)
    for _ in range(rounds):
        if not out:
            op = 2  # block insert is the only op defined on empty data
        else:
            op = decisions.next_int(0, 3)
        if op == 0:  # flip one bit
            pos = decisions.next_int(0, len(out) - 1)
            bit = decisions.next_int(0, 7)
            out[pos] ^= 1 << bit
        elif op == 1:  # overwrite one byte
            pos = decisions.next_int(0, len(out) - 1)
            out[pos] = decisions.next_int(0, 255)
        elif op == 2:  # insert a block
            pos = decisions.next_int(0, len(out))
            length = decisions.next_int(1, insert_max)
            block = decisions.next_bytes(length)
            out[pos:pos] = block
        else:  # delete a block
            pos = decisions.next_int(0, len(out) - 1)
            length = decisions.next_int(1, min(insert_max, len(out) - pos))
            del out[pos : pos + length]
        if len(out) > max_input_size:
            del out[max_input_size:]
    return bytes(out)


@dataclass
class ScheduleState:
    """Round-robin seed schedule with an energy boost for favored entries."""

    favored_multiplier: int = 3
    cycle: list[int] = field(default_factory=list)
    cursor: int = 0

    def _rebuild(self, corpus: list[CorpusEntry]) -> None:
        cycle: list[int] = []
        for i, entry in enumerate(corpus):
            cycle.extend([i] * (self.favored_multiplier if entry.favored else 1))
        self.cycle = cycle
        self.cursor = 0

    def next_index(self, corpus: list[CorpusEntry]) -> int:
        if self.cursor >= len(self.cycle):
            self._rebuild(corpus)
        idx = self.cycle[self.cursor]
        self.cursor += 1
        return idx


def select_seed(corpus: list[CorpusEntry], schedule: ScheduleState) -> CorpusEntry:
    """Pick the next parent, counting the selection on the entry."""
    entry = corpus[schedule.next_index(corpus)]
    entry.times_selected += 1
    return entry


def run_campaign(
    target_id: str,
    config: GeneratorConfig,
    mode: str,
    budget_execs: int | None = None,
    budget_secs: float | None = None,
    rng_seed: int = 0,
    options: EngineOptions | None = None,
) -> CampaignResult:
    """Run one fuzzing campaign and return everything an experiment needs.

    Exactly one of budget_execs / budget_secs must be given.  With an
    execution budget the whole run is deterministic in rng_seed; wall-clock
    readings only feed the timing fields.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if (budget_execs is None) == (budget_secs is None):
        raise ValueError("give exactly one of budget_execs or budget_secs")
    if budget_execs is not None and budget_execs < 1:
        raise ValueError("budget_execs must be >= 1")
    if budget_secs is not None and budget_secs <= 0:
        raise ValueError("budget_secs must be positive")

    opts = options or EngineOptions()
    binding = get_target(target_id)
    cfg = validate_config(config.copy())
    registry = PredicateRegistry(target_id, binding.predicate_metas)
    rng = random.Random(rng_seed)

    coverage = CoverageMap()
    corpus: list[CorpusEntry] = []
    schedule = ScheduleState(opts.favored_multiplier)
    samples: list[CoverageSample] = []
    executions = 0
    mutate_calls = 0
    invocations_before = binding.invocations

    start = time.monotonic()

    def budget_open() -> bool:
        if budget_execs is not None:
            return executions < budget_execs
        return time.monotonic() - start < budget_secs

    while budget_open():
        parent: CorpusEntry | None = None
        if mode == "guided" and corpus:
            parent = select_seed(corpus, schedule)
            decision_bytes = bytes(rng.getrandbits(8) for _ in range(64))
            decisions = ParamStream(
                decision_bytes, overflow_seed=rng.getrandbits(64)
            )
            stream_bytes = mutate(
                parent.stream_bytes,
                decisions,
                opts.max_input_size,
                opts.max_mutations,
                opts.insert_max,
            )
            mutate_calls += 1
            overflow_seed = parent.overflow_seed
        else:
            length = rng.randint(opts.fresh_min, opts.fresh_max)
            stream_bytes = bytes(rng.getrandbits(8) for _ in range(length))
            overflow_seed = rng.getrandbits(64)

        stream = ParamStream(stream_bytes, overflow_seed=overflow_seed)
        payload = binding.decode(cfg, stream)
        trace = ExecutionTrace()
        outcome = binding.run(payload, trace)
        executions += 1

        fresh = coverage.new_of(outcome.branches_hit)
        if fresh:
            coverage.merge(fresh)
            corpus.append(
                CorpusEntry(
                    stream_bytes=bytes(stream_bytes),
                    overflow_seed=overflow_seed,
                    new_branches=set(fresh),
                    payload_sha256=hashlib.sha256(payload).hexdigest(),
                )
            )
            registry.commit_saved_input(trace)
            if parent is not None:
                parent.favored = True

        if executions % opts.sample_every == 0:
            samples.append(
                CoverageSample(executions, time.monotonic() - start, len(coverage))
            )

    duration = time.monotonic() - start
    if not samples or samples[-1].executions != executions:
        samples.append(CoverageSample(executions, duration, len(coverage)))

    ran = binding.invocations - invocations_before
    if ran != executions:
        raise RuntimeError(
            f"target invocation count {ran} != executions {executions}"
        )

    return CampaignResult(
        target_id=target_id,
        mode=mode,
        config=cfg,
        corpus=corpus,
        coverage=coverage,
        samples=samples,
        executions=executions,
        duration=duration,
        inputs_per_sec=executions / duration if duration > 0 else 0.0,
        mutate_calls=mutate_calls,
        dynamic_report=registry.emit_report(),
        rng_seed=rng_seed,
    )


# ---------------------------------------------------------------------------
# Corpus persistence


def write_corpus_entry(path: str | Path, entry: CorpusEntry) -> None:
    """Serialize one entry: magic, version, overflow seed, stream length, stream."""
    header = (
        _ENTRY_MAGIC
        + bytes([_ENTRY_VERSION])
        + entry.overflow_seed.to_bytes(8, "big")
        + len(entry.stream_bytes).to_bytes(4, "big")
    )
    Path(path).write_bytes(header + entry.stream_bytes)


def read_corpus_entry(path: str | Path, index: int = 0) -> CorpusEntry:
    raw = Path(path).read_bytes()
    if len(raw) < 17 or raw[:4] != _ENTRY_MAGIC:
        raise EntryCorrupt(index, "bad magic")
    if raw[4] != _ENTRY_VERSION:
        raise EntryCorrupt(index, f"unsupported version {raw[4]}")
    overflow_seed = int.from_bytes(raw[5:13], "big")
    length = int.from_bytes(raw[13:17], "big")
    body = raw[17:]
    if len(body) != length:
        raise EntryCorrupt(index, f"length field {length} != body {len(body)}")
    return CorpusEntry(
        stream_bytes=body, overflow_seed=overflow_seed, new_branches=set()
    )


def save_campaign(result: CampaignResult, outdir: str | Path) -> Path:
    """Write corpus entries plus config, summary, timing, and dynamic report.

    summary.json holds only run-shape facts that replay can reproduce, so its
    bytes are identical across same-seed runs.  Wall-clock numbers live in
    timing.json.
    """
    out = Path(outdir)
    corpus_dir = out / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    for i, entry in enumerate(result.corpus):
        write_corpus_entry(corpus_dir / f"entry_{i:05d}.bin", entry)

    save_config_file(result.config, out / "config.json")

    summary = {
        "target": result.target_id,
        "mode": result.mode,
        "config_fingerprint": result.config.fingerprint(),
        "rng_seed": result.rng_seed,
        "executions": result.executions,
        "mutate_calls": result.mutate_calls,
        "corpus_size": len(result.corpus),
        "final_coverage": {
            "size": len(result.coverage),
            "branches": sorted(result.coverage.covered),
        },
        "samples": [[s.executions, s.covered] for s in result.samples],
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    timing = {
        "duration_secs": result.duration,
        "inputs_per_sec": result.inputs_per_sec,
        "samples_elapsed": [[s.executions, s.elapsed] for s in result.samples],
    }
    (out / "timing.json").write_text(
        json.dumps(timing, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    (out / "dynamic_report.json").write_text(
        serialize_dynamic_report(result.dynamic_report), encoding="utf-8"
    )
    return out


def load_corpus(corpus_dir: str | Path) -> list[tuple[int, CorpusEntry | None]]:
    """Read entry files in index order; a corrupt file yields (index, None)."""
    entries: list[tuple[int, CorpusEntry | None]] = []
    for i, path in enumerate(sorted(Path(corpus_dir).glob("entry_*.bin"))):
        try:
            entries.append((i, read_corpus_entry(path, i)))
        except EntryCorrupt:
            entries.append((i, None))
    return entries


@dataclass
class ReplayResult:
    coverage: CoverageMap
    inputs: list[GeneratedInput]
    payload_hashes: list[str]
    replayed: int
    corrupt: list[int]


def replay_corpus(
    target_id: str,
    corpus: str | Path | list[CorpusEntry],
    config: GeneratorConfig | None = None,
) -> ReplayResult:
    """Re-decode and re-run every saved stream, skipping corrupt entries.

    When corpus is a campaign directory its config.json supplies the
    generator configuration unless one is passed explicitly.
    """
    if isinstance(corpus, (str, Path)):
        base = Path(corpus)
        corpus_dir = base / "corpus" if (base / "corpus").is_dir() else base
        if config is None:
            cfg_path = base / "config.json"
            if not cfg_path.is_file():
                cfg_path = corpus_dir.parent / "config.json"
            config = load_config(cfg_path.read_text(encoding="utf-8"))
        pairs = load_corpus(corpus_dir)
    else:
        if config is None:
            raise ValueError("config is required when replaying in-memory entries")
        pairs = [(i, e) for i, e in enumerate(corpus)]

    binding = get_target(target_id)
    cfg = validate_config(config.copy())
    fingerprint = cfg.fingerprint()
    coverage = CoverageMap()
    inputs: list[GeneratedInput] = []
    hashes: list[str] = []
    corrupt: list[int] = []
    replayed = 0
    for index, entry in pairs:
        if entry is None:
            corrupt.append(index)
            continue
        stream = ParamStream(entry.stream_bytes, overflow_seed=entry.overflow_seed)
        payload = binding.decode(cfg, stream)
        outcome = binding.run(payload, None)
        coverage.merge(outcome.branches_hit)
        inputs.append(GeneratedInput(payload, stream.cursor, fingerprint))
        hashes.append(hashlib.sha256(payload).hexdigest())
        replayed += 1
    return ReplayResult(
        coverage=coverage,
        inputs=inputs,
        payload_hashes=hashes,
        replayed=replayed,
        corrupt=corrupt,
    )
