"""Contamination-impact aggregates over BLEU evaluation records.

Given baseline and contaminated score tables this module computes per-pair
deltas and percent improvements, box-plot statistics, translation-direction
groupings (En->X, X->En, X->Y), gaps between improvements on contaminated vs
clean test sets, and peak/final deltas of through-training score series.

Percent improvement always uses the uncontaminated baseline as denominator
and is flagged undefined (``None``) when the baseline is 0 rather than
clamped. Quartiles use linear interpolation between order statistics (the
"inclusive" rule).

Reference score tables ship with the package as versioned JSON fixtures; see
:func:`load_table` and :func:`table_records`.
"""

import json
import statistics
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .injector import ContaminationCondition
from .metrics import EvalRecord

DIRECTION_EN_TO_X = "en_to_x"
DIRECTION_X_TO_EN = "x_to_en"
DIRECTION_X_TO_Y = "x_to_y"


@dataclass(frozen=True)
class ImpactCell:
    """Baseline vs contaminated BLEU for one (condition, pair, test set)."""

    condition: ContaminationCondition | None
    lang_pair: str
    testset_id: str
    baseline_bleu: float
    contaminated_bleu: float
    delta: float
    pct: float | None

    @classmethod
    def build(
        cls,
        condition: ContaminationCondition | None,
        lang_pair: str,
        testset_id: str,
        baseline_bleu: float,
        contaminated_bleu: float,
    ) -> "ImpactCell":
        delta = contaminated_bleu - baseline_bleu
        pct = 100.0 * delta / baseline_bleu if baseline_bleu != 0 else None
        return cls(condition, lang_pair, testset_id, baseline_bleu, contaminated_bleu, delta, pct)


@dataclass(frozen=True)
class ImpactTable:
    """Join result: one cell per shared key plus the keys that failed to join."""

    cells: tuple[ImpactCell, ...]
    missing_baseline: tuple[tuple[str, str], ...]
    missing_contaminated: tuple[tuple[str, str], ...]


def impact_table(
    baseline: Iterable[EvalRecord],
    contaminated: Iterable[EvalRecord],
    condition: ContaminationCondition | None = None,
) -> ImpactTable:
    """Join two record sets on (lang_pair, testset_id) and compute deltas.

    Keys present on only one side are reported in the result, never silently
    dropped. An empty intersection is an error.
    """

    def keyed(records, side):
        table = {}
        for r in records:
            key = (r.lang_pair, r.testset_id)
            if key in table:
                raise ValueError(f"duplicate {side} record for {key}")
            table[key] = r
        return table

    base = keyed(baseline, "baseline")
    cont = keyed(contaminated, "contaminated")
    shared = [k for k in base if k in cont]
    if not shared:
        raise ValueError("baseline and contaminated records share no (lang_pair, testset) keys")
    cells = tuple(
        ImpactCell.build(condition, pair, testset, base[(pair, testset)].bleu, cont[(pair, testset)].bleu)
        for pair, testset in shared
    )
    return ImpactTable(
        cells=cells,
        missing_baseline=tuple(sorted(k for k in cont if k not in base)),
        missing_contaminated=tuple(sorted(k for k in base if k not in cont)),
    )


@dataclass(frozen=True)
class BoxStats:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float


def box_stats(values: Sequence[float]) -> BoxStats:
    """Five-number summary plus mean; quartiles by linear interpolation."""
    if not values:
        raise ValueError("box_stats needs at least one value")
    data = sorted(values)
    if len(data) == 1:
        q1 = median = q3 = data[0]
    else:
        q1, median, q3 = statistics.quantiles(data, n=4, method="inclusive")
    return BoxStats(
        minimum=data[0],
        q1=q1,
        median=median,
        q3=q3,
        maximum=data[-1],
        mean=statistics.fmean(data),
    )


def direction_of(lang_pair: str) -> str:
    """Direction group of a "src-tgt" pair string."""
    src, sep, tgt = lang_pair.partition("-")
    if not sep or not src or not tgt:
        raise ValueError(f"cannot parse lang_pair {lang_pair!r}")
    if src == "en":
        return DIRECTION_EN_TO_X
    if tgt == "en":
        return DIRECTION_X_TO_EN
    return DIRECTION_X_TO_Y


def direction_group(cells: Iterable[ImpactCell]) -> dict[str, float]:
    """Mean percent improvement per direction group; absent groups are absent.

    Cells with an undefined pct (zero baseline) are skipped.
    """
    sums: dict[str, list[float]] = {}
    for cell in cells:
        if cell.pct is None:
            continue
        sums.setdefault(direction_of(cell.lang_pair), []).append(cell.pct)
    return {group: statistics.fmean(vals) for group, vals in sums.items()}


@dataclass(frozen=True)
class GapCell:
    """Improvement on the contaminated set minus improvement on a clean set.

    A positive gap means the contaminated-set improvement exceeds what
    generalizes to clean data, i.e. inflation beyond genuine gains.
    """

    condition: ContaminationCondition | None
    lang_pair: str
    delta_contaminated_set: float
    delta_clean_set: float
    gap: float


def testset_gap(
    contaminated_set: Iterable[ImpactCell],
    clean_set: Iterable[ImpactCell],
) -> list[GapCell]:
    """Per-pair gap between two impact tables sharing (condition, lang_pair)."""

    def keyed(cells, side):
        table = {}
        for c in cells:
            key = (c.condition, c.lang_pair)
            if key in table:
                raise ValueError(f"duplicate {side} cell for {key}")
            table[key] = c
        return table

    contaminated = keyed(contaminated_set, "contaminated-set")
    clean = keyed(clean_set, "clean-set")
    shared = [k for k in contaminated if k in clean]
    if not shared:
        raise ValueError("impact tables share no (condition, lang_pair) keys")
    return [
        GapCell(
            condition=condition,
            lang_pair=pair,
            delta_contaminated_set=contaminated[(condition, pair)].delta,
            delta_clean_set=clean[(condition, pair)].delta,
            gap=contaminated[(condition, pair)].delta - clean[(condition, pair)].delta,
        )
        for condition, pair in shared
    ]


def timeseries_summary(step_scores: Sequence[tuple[int, float]], window_start: int) -> tuple[float, float]:
    """(peak_delta, final_delta) of a through-training score series.

    Both deltas are relative to the last score before ``window_start``:
    peak_delta uses the maximum score at or after it, final_delta the last
    score of the series.
    """
    if not step_scores:
        raise ValueError("step_scores must be non-empty")
    steps = [s for s, _ in step_scores]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be strictly increasing")
    pre = [bleu for step, bleu in step_scores if step < window_start]
    post = [bleu for step, bleu in step_scores if step >= window_start]
    if not pre:
        raise ValueError(f"no score before window_start {window_start}")
    if not post:
        raise ValueError(f"no score at or after window_start {window_start}")
    base = pre[-1]
    return max(post) - base, step_scores[-1][1] - base


# -- packaged reference tables ------------------------------------------------


def load_table(name: str) -> dict:
    """Load a packaged reference score table (e.g. ``bleu_wmt23.json``)."""
    with resources.files("contamkit.data").joinpath(name).open(encoding="utf-8") as f:
        return json.load(f)


def table_records(
    table: dict,
    model: str,
    temporal: str,
    copies: int | str,
    variant: str,
) -> list[EvalRecord]:
    """Flatten one (model, temporal, copies, variant) slice into EvalRecords.

    Segment counts are not part of the reference tables; records carry 1.
    """
    block = table["scores"][model][temporal][str(copies)]
    system_id = f"{model}/{variant}/{temporal}/{copies}"
    return [
        EvalRecord(
            system_id=system_id,
            lang_pair=pair,
            testset_id=table["testset_id"],
            bleu=values[variant],
            segment_count=1,
        )
        for pair, values in sorted(block.items())
    ]


# -- rendering ----------------------------------------------------------------

_DIRECTION_TITLES = (
    (DIRECTION_EN_TO_X, "En->X"),
    (DIRECTION_X_TO_EN, "X->En"),
    (DIRECTION_X_TO_Y, "X->Y"),
)


def render_impact(cells: Sequence[ImpactCell], fmt: str = "text") -> str:
    """Render impact cells as direction-blocked aligned text or as JSON."""
    if fmt == "json":
        payload = [
            {
                "lang_pair": c.lang_pair,
                "testset_id": c.testset_id,
                "baseline_bleu": c.baseline_bleu,
                "contaminated_bleu": c.contaminated_bleu,
                "delta": c.delta,
                "pct": c.pct,
                "condition": None
                if c.condition is None
                else {
                    "mode": c.condition.mode.value,
                    "temporal": c.condition.temporal.value,
                    "copies": c.condition.copies,
                },
            }
            for c in cells
        ]
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}; expected 'text' or 'json'")
    lines = []
    header = f"{'pair':<10} {'baseline':>9} {'contam':>9} {'delta':>8} {'pct':>8}"
    for group, title in _DIRECTION_TITLES:
        members = sorted(
            (c for c in cells if direction_of(c.lang_pair) == group),
            key=lambda c: c.lang_pair,
        )
        if not members:
            continue
        lines.append(title)
        lines.append(header)
        for c in members:
            pct = f"{c.pct:8.2f}" if c.pct is not None else "     n/a"
            lines.append(
                f"{c.lang_pair:<10} {c.baseline_bleu:9.2f} {c.contaminated_bleu:9.2f} {c.delta:8.2f} {pct}"
            )
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def render_gaps(gaps: Sequence[GapCell], fmt: str = "text") -> str:
    """Render test-set gap cells as aligned text or JSON."""
    if fmt == "json":
        payload = [
            {
                "lang_pair": g.lang_pair,
                "delta_contaminated_set": g.delta_contaminated_set,
                "delta_clean_set": g.delta_clean_set,
                "gap": g.gap,
            }
            for g in gaps
        ]
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}; expected 'text' or 'json'")
    lines = [f"{'pair':<10} {'d_contam':>9} {'d_clean':>9} {'gap':>8}"]
    for g in sorted(gaps, key=lambda g: g.lang_pair):
        lines.append(
            f"{g.lang_pair:<10} {g.delta_contaminated_set:9.2f} {g.delta_clean_set:9.2f} {g.gap:8.2f}"
        )
    return "\n".join(lines) + "\n"
