"""Render test examples into training documents and plan their injection.

Five rendering modes are supported. ``full_prompted`` formats an example the
way it appears at test time, with English language names prepended::

    German: <source text>
    English: <target text>

``source_only`` / ``target_only`` emit the bare field text with no
formatting. ``split_pair`` and ``batched_pair`` emit both bare texts as two
separate unpaired documents; batched halves land in the same training step
while split halves land in different steps.

A plan places ``examples x copies`` rendered copies into a training stream
under a temporal condition: ``early`` / ``middle`` / ``late`` windows start
at 30% / 60% / 90% of training and span ``window_frac`` of the steps (grown
automatically when the per-batch replacement cap would not fit all entries,
and clipped to end at the last step), while ``uniform`` draws steps over the
whole 30%-90% span. No batch ever receives more than
``floor(max_replace_frac * batch_size)`` injected documents (one fewer when
``strict_cap`` is set and the product is exact), and slots within a batch are
drawn uniformly without replacement.

All randomness comes from one counter-based generator (SplitMix64: output i
is the splitmix finalizer applied to ``seed + (i+1) * 0x9E3779B97F4A7C15``;
integers below a bound are taken by rejection sampling). Draw order is:
steps in unit order (source half before target half), then slots per step in
ascending step order. Plans are therefore a pure function of (examples,
condition, config, template) and serialize byte-identically across runs.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

from .corpus_io import (
    CATEGORY_CONTAMINATION,
    CATEGORY_PARALLEL,
    BatchStream,
    CorpusDocument,
    TestExample,
)

GENERATOR_VERSION = "contamkit-planner/1"

PART_WHOLE = "whole"
PART_SOURCE_HALF = "source_half"
PART_TARGET_HALF = "target_half"

_MASK64 = (1 << 64) - 1


class CapacityError(RuntimeError):
    """The plan needs more injection slots than the window provides."""

    def __init__(self, message: str, required: int | None = None, available: int | None = None):
        super().__init__(message)
        self.required = required
        self.available = available


class TemplateError(ValueError):
    """A language tag has no English name in the prompt template."""


class ContaminationMode(str, Enum):
    FULL_PROMPTED = "full_prompted"
    SOURCE_ONLY = "source_only"
    TARGET_ONLY = "target_only"
    SPLIT_PAIR = "split_pair"
    BATCHED_PAIR = "batched_pair"


MODE_ARITY = {
    ContaminationMode.FULL_PROMPTED: 1,
    ContaminationMode.SOURCE_ONLY: 1,
    ContaminationMode.TARGET_ONLY: 1,
    ContaminationMode.SPLIT_PAIR: 2,
    ContaminationMode.BATCHED_PAIR: 2,
}


class Temporal(str, Enum):
    EARLY = "early"
    MIDDLE = "middle"
    LATE = "late"
    UNIFORM = "uniform"


WINDOW_START_FRAC = {Temporal.EARLY: 0.30, Temporal.MIDDLE: 0.60, Temporal.LATE: 0.90}
UNIFORM_RANGE_FRAC = (0.30, 0.90)


@dataclass(frozen=True)
class ContaminationCondition:
    """One cell of the condition matrix: how, when, and how often to inject."""

    mode: ContaminationMode
    temporal: Temporal
    copies: int

    def __post_init__(self):
        object.__setattr__(self, "mode", ContaminationMode(self.mode))
        object.__setattr__(self, "temporal", Temporal(self.temporal))
        if self.copies < 1:
            raise ValueError("copies must be >= 1")

    @property
    def arity(self) -> int:
        return MODE_ARITY[self.mode]


@dataclass(frozen=True)
class TrainingConfig:
    """Stream dimensions and injection limits for planning."""

    total_steps: int
    batch_size: int
    max_replace_frac: float = 0.05
    window_frac: float = 0.02
    seed: int = 0
    strict_cap: bool = False

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.max_replace_frac < 1:
            raise ValueError("max_replace_frac must be in (0, 1)")
        if not 0 < self.window_frac <= 1:
            raise ValueError("window_frac must be in (0, 1]")

    def replace_cap(self) -> int:
        """Max injected documents per batch."""
        exact = self.max_replace_frac * self.batch_size
        cap = int(math.floor(exact + 1e-9))
        if self.strict_cap and abs(cap - exact) < 1e-9:
            cap -= 1
        return cap


DEFAULT_LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "ru": "Russian",
    "cs": "Czech",
    "uk": "Ukrainian",
    "he": "Hebrew",
    "ja": "Japanese",
    "zh": "Chinese",
    "ar": "Arabic",
    "ace": "Acehnese",
    "wo": "Wolof",
    "yo": "Yoruba",
}


@dataclass(frozen=True)
class PromptTemplate:
    """Maps language tags to the English names used in prompted rendering."""

    names: Mapping[str, str]

    def name_for(self, tag: str) -> str:
        try:
            return self.names[tag]
        except KeyError:
            raise TemplateError(f"no English name for language tag {tag!r} in template") from None


DEFAULT_TEMPLATE = PromptTemplate(names=DEFAULT_LANGUAGE_NAMES)


@dataclass(frozen=True)
class RenderedDoc:
    text: str
    part: str
    lang: str


def render(example: TestExample, mode: ContaminationMode, template: PromptTemplate = DEFAULT_TEMPLATE) -> list[RenderedDoc]:
    """Render one example into the training documents its mode calls for."""
    mode = ContaminationMode(mode)
    pair_lang = f"{example.src_lang}-{example.tgt_lang}"
    if mode is ContaminationMode.FULL_PROMPTED:
        text = (
            f"{template.name_for(example.src_lang)}: {example.source_text}\n"
            f"{template.name_for(example.tgt_lang)}: {example.target_text}"
        )
        return [RenderedDoc(text=text, part=PART_WHOLE, lang=pair_lang)]
    if mode is ContaminationMode.SOURCE_ONLY:
        return [RenderedDoc(text=example.source_text, part=PART_WHOLE, lang=example.src_lang)]
    if mode is ContaminationMode.TARGET_ONLY:
        return [RenderedDoc(text=example.target_text, part=PART_WHOLE, lang=example.tgt_lang)]
    # split_pair / batched_pair: both bare texts as separate unpaired documents
    return [
        RenderedDoc(text=example.source_text, part=PART_SOURCE_HALF, lang=example.src_lang),
        RenderedDoc(text=example.target_text, part=PART_TARGET_HALF, lang=example.tgt_lang),
    ]


class CounterRng:
    """Counter-based SplitMix64 stream; fully determined by the seed."""

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.counter = 0

    def draw64(self) -> int:
        self.counter += 1
        z = (self.seed + self.counter * self.GAMMA) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection sampling."""
        if n < 1:
            raise ValueError("bound must be >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.draw64()
            if v < limit:
                return v % n


@dataclass(frozen=True)
class ScheduleEntry:
    step: int
    slot: int
    example_id: str
    copy_index: int
    part: str
    rendered_text: str
    lang: str


@dataclass
class InjectionSchedule:
    """A fully resolved injection plan plus the header that reproduces it."""

    condition: ContaminationCondition
    config: TrainingConfig
    cap: int
    window_start: int
    window_end: int  # exclusive
    template_names: dict[str, str]
    example_count: int
    entries: list[ScheduleEntry]
    generator_version: str = GENERATOR_VERSION

    @property
    def branch_step(self) -> int:
        """The step a trainer would branch a baseline checkpoint at."""
        return self.window_start


def _window(condition: ContaminationCondition, config: TrainingConfig, units: int) -> tuple[int, int]:
    """Resolve the [start, end) step window for a condition, growing
    concentrated windows just enough to fit all entries under the cap."""
    steps = config.total_steps
    cap = config.replace_cap()
    mode = condition.mode
    if condition.temporal is Temporal.UNIFORM:
        lo = int(math.floor(UNIFORM_RANGE_FRAC[0] * steps))
        hi = int(math.floor(UNIFORM_RANGE_FRAC[1] * steps))
        return lo, min(hi + 1, steps)
    start = int(math.floor(WINDOW_START_FRAC[condition.temporal] * steps))
    base = max(1, math.ceil(config.window_frac * steps))
    if mode is ContaminationMode.BATCHED_PAIR:
        units_per_step = cap // 2
        needed = math.ceil(units / units_per_step) if units_per_step else steps + 1
    elif mode is ContaminationMode.SPLIT_PAIR:
        # one spare step of headroom so the different-step constraint on the
        # two halves cannot wedge a tightly packed window
        needed = max(2, math.ceil(2 * units / cap) + 1) if cap else steps + 1
    else:
        needed = math.ceil(units / cap) if cap else steps + 1
    end = min(start + max(base, needed), steps)
    return start, end


def _check_capacity(condition: ContaminationCondition, config: TrainingConfig, units: int, window: tuple[int, int]):
    cap = config.replace_cap()
    width = window[1] - window[0]
    entries = units * condition.arity
    if condition.mode is ContaminationMode.BATCHED_PAIR:
        available = width * (cap // 2) * 2
    else:
        available = width * cap
    if condition.mode is ContaminationMode.SPLIT_PAIR and width < 2 and units > 0:
        raise CapacityError(
            f"split_pair needs a window of at least 2 steps, window has {width}",
            required=2,
            available=width,
        )
    if entries > available:
        raise CapacityError(
            f"plan needs {entries} injection slots but the window provides {available} "
            f"({width} steps x cap {cap})",
            required=entries,
            available=available,
        )


def _draw_step(rng: CounterRng, window: tuple[int, int], ok: Callable[[int], bool]) -> int:
    lo, hi = window
    width = hi - lo
    step = lo
    for _ in range(64):
        step = lo + rng.below(width)
        if ok(step):
            return step
    # deterministic fallback: scan forward from the last draw
    for d in range(width):
        candidate = lo + (step - lo + d) % width
        if ok(candidate):
            return candidate
    raise CapacityError("could not place an entry; window capacity exhausted")


def _sample_slots(rng: CounterRng, batch_size: int, k: int) -> list[int]:
    # partial Fisher-Yates: k distinct slots, uniform over the batch
    slots = list(range(batch_size))
    for i in range(k):
        j = i + rng.below(batch_size - i)
        slots[i], slots[j] = slots[j], slots[i]
    return slots[:k]


def plan_schedule(
    examples: Sequence[TestExample],
    condition: ContaminationCondition,
    config: TrainingConfig,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> InjectionSchedule:
    """Expand a condition into a fully resolved, deterministic injection plan."""
    if not examples:
        raise ValueError("examples must be non-empty")
    cap = config.replace_cap()
    if cap < 1:
        raise CapacityError(
            f"replacement cap is 0 for batch_size {config.batch_size} and "
            f"max_replace_frac {config.max_replace_frac}",
            required=1,
            available=0,
        )
    rendered = {ex.example_id: render(ex, condition.mode, template) for ex in examples}
    if len(rendered) != len(examples):
        raise ValueError("examples must have unique example_ids")
    units = [(ex, copy) for ex in examples for copy in range(condition.copies)]
    window = _window(condition, config, len(units))
    _check_capacity(condition, config, len(units), window)

    rng = CounterRng(config.seed)
    load: dict[int, int] = {}

    def room(step: int, need: int) -> bool:
        return cap - load.get(step, 0) >= need

    pending: list[tuple[str, int, RenderedDoc, int]] = []  # (example_id, copy, doc, step)
    for ex, copy in units:
        docs = rendered[ex.example_id]
        if condition.mode is ContaminationMode.BATCHED_PAIR:
            step = _draw_step(rng, window, lambda s: room(s, 2))
            load[step] = load.get(step, 0) + 2
            pending.append((ex.example_id, copy, docs[0], step))
            pending.append((ex.example_id, copy, docs[1], step))
        elif condition.mode is ContaminationMode.SPLIT_PAIR:
            first = _draw_step(rng, window, lambda s: room(s, 1))
            load[first] = load.get(first, 0) + 1
            second = _draw_step(rng, window, lambda s: s != first and room(s, 1))
            load[second] = load.get(second, 0) + 1
            pending.append((ex.example_id, copy, docs[0], first))
            pending.append((ex.example_id, copy, docs[1], second))
        else:
            step = _draw_step(rng, window, lambda s: room(s, 1))
            load[step] = load.get(step, 0) + 1
            pending.append((ex.example_id, copy, docs[0], step))

    by_step: dict[int, list[tuple[str, int, RenderedDoc]]] = {}
    for example_id, copy, doc, step in pending:
        by_step.setdefault(step, []).append((example_id, copy, doc))

    entries: list[ScheduleEntry] = []
    for step in sorted(by_step):
        group = by_step[step]
        slots = _sample_slots(rng, config.batch_size, len(group))
        for (example_id, copy, doc), slot in zip(group, slots):
            entries.append(
                ScheduleEntry(
                    step=step,
                    slot=slot,
                    example_id=example_id,
                    copy_index=copy,
                    part=doc.part,
                    rendered_text=doc.text,
                    lang=doc.lang,
                )
            )
    entries.sort(key=lambda e: (e.step, e.slot))
    return InjectionSchedule(
        condition=condition,
        config=config,
        cap=cap,
        window_start=window[0],
        window_end=window[1],
        template_names=dict(template.names),
        example_count=len(examples),
        entries=entries,
    )


# -- schedule file I/O -------------------------------------------------------


def write_schedule(schedule: InjectionSchedule, path) -> int:
    """Write a plan: one JSON header line, then one JSON line per entry."""
    header = {
        "kind": "injection-schedule",
        "generator_version": schedule.generator_version,
        "mode": schedule.condition.mode.value,
        "temporal": schedule.condition.temporal.value,
        "copies": schedule.condition.copies,
        "total_steps": schedule.config.total_steps,
        "batch_size": schedule.config.batch_size,
        "max_replace_frac": schedule.config.max_replace_frac,
        "window_frac": schedule.config.window_frac,
        "seed": schedule.config.seed,
        "strict_cap": schedule.config.strict_cap,
        "cap": schedule.cap,
        "window_start": schedule.window_start,
        "window_end": schedule.window_end,
        "branch_step": schedule.branch_step,
        "template_names": dict(sorted(schedule.template_names.items())),
        "example_count": schedule.example_count,
        "entry_count": len(schedule.entries),
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, ensure_ascii=False, sort_keys=True))
        f.write("\n")
        for e in schedule.entries:
            record = {
                "step": e.step,
                "slot": e.slot,
                "example_id": e.example_id,
                "copy_index": e.copy_index,
                "part": e.part,
                "rendered_text": e.rendered_text,
                "lang": e.lang,
            }
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            f.write("\n")
    return len(schedule.entries)


def read_schedule(path) -> InjectionSchedule:
    with open(path, encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: missing schedule header")
        header = json.loads(header_line)
        if header.get("kind") != "injection-schedule":
            raise ValueError(f"{path}: not an injection schedule file")
        entries = []
        for line in f:
            if not line.strip():
                continue
            r = json.loads(line)
            entries.append(
                ScheduleEntry(
                    step=r["step"],
                    slot=r["slot"],
                    example_id=r["example_id"],
                    copy_index=r["copy_index"],
                    part=r["part"],
                    rendered_text=r["rendered_text"],
                    lang=r["lang"],
                )
            )
    condition = ContaminationCondition(
        mode=ContaminationMode(header["mode"]),
        temporal=Temporal(header["temporal"]),
        copies=header["copies"],
    )
    config = TrainingConfig(
        total_steps=header["total_steps"],
        batch_size=header["batch_size"],
        max_replace_frac=header["max_replace_frac"],
        window_frac=header["window_frac"],
        seed=header["seed"],
        strict_cap=header.get("strict_cap", False),
    )
    return InjectionSchedule(
        condition=condition,
        config=config,
        cap=header["cap"],
        window_start=header["window_start"],
        window_end=header["window_end"],
        template_names=header["template_names"],
        example_count=header["example_count"],
        entries=entries,
        generator_version=header.get("generator_version", "unknown"),
    )


# -- application and verification --------------------------------------------


def apply_schedule(
    stream: BatchStream,
    schedule: InjectionSchedule,
    tokenizer: Callable[[str], list[int]] | None = None,
    require_parallel_slots: bool = False,
) -> BatchStream:
    """Substitute scheduled slots with rendered contamination documents.

    Every scheduled (step, slot) gets a ``category=contamination`` document;
    all other slots are returned untouched. With ``require_parallel_slots``
    the incumbent at each scheduled slot must be parallel-category, which is
    the convention that keeps the per-batch parallel-text budget constant
    (contamination is parallel text in substance and counts toward it).

    ``tokenizer`` turns rendered text into token ids; without one the
    replacement documents carry text only and the consumer tokenizes.
    """
    config = schedule.config
    if stream.batch_size != config.batch_size:
        raise ValueError(
            f"stream batch_size {stream.batch_size} does not match schedule batch_size {config.batch_size}"
        )
    if len(stream.steps) != config.total_steps:
        raise ValueError(
            f"stream has {len(stream.steps)} steps, schedule expects {config.total_steps}"
        )
    targets: dict[tuple[int, int], ScheduleEntry] = {}
    for e in schedule.entries:
        key = (e.step, e.slot)
        if key in targets:
            raise ValueError(f"schedule targets (step {e.step}, slot {e.slot}) twice")
        targets[key] = e
    new_steps = [list(batch) for batch in stream.steps]
    for (step, slot), e in targets.items():
        if not 0 <= step < len(new_steps) or not 0 <= slot < stream.batch_size:
            raise ValueError(f"schedule entry out of stream bounds: (step {step}, slot {slot})")
        incumbent = new_steps[step][slot]
        if require_parallel_slots and incumbent.category != CATEGORY_PARALLEL:
            raise ValueError(
                f"(step {step}, slot {slot}): incumbent is {incumbent.category!r}, "
                "expected 'parallel'; replacing it would change the parallel-text budget"
            )
        tokens = tokenizer(e.rendered_text) if tokenizer is not None else []
        new_steps[step][slot] = CorpusDocument(
            doc_id=f"inject/{e.example_id}/{e.copy_index}/{e.part}",
            tokens=tokens,
            category=CATEGORY_CONTAMINATION,
            lang=e.lang,
            text=e.rendered_text,
        )
    return BatchStream(batch_size=stream.batch_size, steps=new_steps)


@dataclass
class ScheduleReport:
    """Outcome of re-checking every schedule invariant."""

    entry_count: int
    steps_used: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "ok" if self.ok else f"{len(self.violations)} violation(s)"
        lines = [f"schedule check: {status} ({self.entry_count} entries over {self.steps_used} steps)"]
        lines.extend(f"  - {v}" for v in self.violations)
        return "\n".join(lines) + "\n"


def verify_schedule(schedule: InjectionSchedule, config: TrainingConfig | None = None) -> ScheduleReport:
    """Re-check cap, window, arity, co-location, and separation invariants."""
    config = config or schedule.config
    condition = schedule.condition
    violations: list[str] = []

    expected_cap = config.replace_cap()
    if schedule.cap != expected_cap:
        violations.append(f"header cap {schedule.cap} does not match config cap {expected_cap}")
    if not 0 <= schedule.window_start < schedule.window_end <= config.total_steps:
        violations.append(
            f"window [{schedule.window_start}, {schedule.window_end}) outside training range "
            f"[0, {config.total_steps})"
        )

    expected_entries = schedule.example_count * condition.copies * condition.arity
    if len(schedule.entries) != expected_entries:
        violations.append(
            f"entry count {len(schedule.entries)} != examples x copies x arity = {expected_entries}"
        )

    per_step: dict[int, int] = {}
    seen_slots: set[tuple[int, int]] = set()
    parts: dict[tuple[str, int], list[ScheduleEntry]] = {}
    for e in schedule.entries:
        per_step[e.step] = per_step.get(e.step, 0) + 1
        if not schedule.window_start <= e.step < schedule.window_end:
            violations.append(
                f"entry ({e.example_id}, copy {e.copy_index}, {e.part}) at step {e.step} "
                f"outside window [{schedule.window_start}, {schedule.window_end})"
            )
        if not 0 <= e.slot < config.batch_size:
            violations.append(f"entry at step {e.step} has slot {e.slot} outside batch of {config.batch_size}")
        key = (e.step, e.slot)
        if key in seen_slots:
            violations.append(f"slot collision at (step {e.step}, slot {e.slot})")
        seen_slots.add(key)
        parts.setdefault((e.example_id, e.copy_index), []).append(e)

    for step, count in sorted(per_step.items()):
        if count > schedule.cap:
            violations.append(f"step {step} has {count} injected entries, cap is {schedule.cap}")

    expected_parts = {
        ContaminationMode.FULL_PROMPTED: [PART_WHOLE],
        ContaminationMode.SOURCE_ONLY: [PART_WHOLE],
        ContaminationMode.TARGET_ONLY: [PART_WHOLE],
        ContaminationMode.SPLIT_PAIR: [PART_SOURCE_HALF, PART_TARGET_HALF],
        ContaminationMode.BATCHED_PAIR: [PART_SOURCE_HALF, PART_TARGET_HALF],
    }[condition.mode]
    for (example_id, copy), group in sorted(parts.items()):
        have = sorted(e.part for e in group)
        if have != sorted(expected_parts):
            violations.append(
                f"({example_id}, copy {copy}) has parts {have}, expected {sorted(expected_parts)}"
            )
            continue
        if condition.mode is ContaminationMode.BATCHED_PAIR:
            if len({e.step for e in group}) != 1:
                violations.append(f"({example_id}, copy {copy}): batched halves are not in the same step")
        if condition.mode is ContaminationMode.SPLIT_PAIR:
            if len({e.step for e in group}) != 2:
                violations.append(f"({example_id}, copy {copy}): split halves share a step")

    copies_seen: dict[str, set[int]] = {}
    for example_id, copy in parts:
        copies_seen.setdefault(example_id, set()).add(copy)
    for example_id, seen in sorted(copies_seen.items()):
        if seen != set(range(condition.copies)):
            violations.append(
                f"{example_id}: copy indexes {sorted(seen)} do not cover 0..{condition.copies - 1}"
            )

    return ScheduleReport(
        entry_count=len(schedule.entries),
        steps_used=len(per_step),
        violations=violations,
    )
