"""WER scoring, relative improvement, perplexity monitoring, and reports.

Normalization before WER is deliberately minimal: lowercase plus
whitespace collapse, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .corpus import DomainDataset, Split
from .errors import (
    DataError,
    DivisionByZeroError,
    EmptyReferenceError,
    InconsistentDomainsError,
)
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, Variant, render


def normalize_text(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class WerResult:
    wer: float
    substitutions: int
    deletions: int
    insertions: int

    def __iter__(self):
        return iter((self.wer, self.substitutions, self.deletions, self.insertions))


def _edit_counts(ref: list[str], hyp: list[str]) -> tuple[int, int, int]:
    """Minimum-cost alignment counts (S, D, I) over unit-cost operations.

    Among equal-cost alignments the one with the fewest insert+delete
    operations wins, i.e. substitutions are preferred over
    insertion+deletion pairs. The DP state is the pair
    (cost, insertions+deletions) under lexicographic minimization.
    """
    n, m = len(ref), len(hyp)
    prev = [(j, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, i)] + [(0, 0)] * m
        ref_tok = ref[i - 1]
        for j in range(1, m + 1):
            if ref_tok == hyp[j - 1]:
                diag = prev[j - 1]
            else:
                diag = (prev[j - 1][0] + 1, prev[j - 1][1])
            dele = (prev[j][0] + 1, prev[j][1] + 1)
            ins = (cur[j - 1][0] + 1, cur[j - 1][1] + 1)
            cur[j] = min(diag, dele, ins)
        prev = cur
    cost, di = prev[m]
    delta_len = n - m
    deletions = (di + delta_len) // 2
    insertions = (di - delta_len) // 2
    substitutions = cost - di
    return substitutions, deletions, insertions


def wer(reference: str, hypothesis: str) -> WerResult:
    """Word error rate over whitespace tokens with unit edit costs."""
    ref = normalize_text(reference)
    hyp = normalize_text(hypothesis)
    if not ref:
        raise EmptyReferenceError("reference is empty after tokenization")
    s, d, i = _edit_counts(ref, hyp)
    return WerResult(wer=(s + d + i) / len(ref), substitutions=s, deletions=d, insertions=i)


def corpus_wer(references: Sequence[str], hypotheses: Sequence[str]) -> WerResult:
    """Corpus-level WER: summed edit counts over summed reference lengths."""
    if len(references) != len(hypotheses):
        raise DataError(
            f"{len(references)} references but {len(hypotheses)} hypotheses"
        )
    total_s = total_d = total_i = total_ref = 0
    for ref_text, hyp_text in zip(references, hypotheses):
        ref = normalize_text(ref_text)
        hyp = normalize_text(hyp_text)
        if not ref:
            raise EmptyReferenceError("reference is empty after tokenization")
        s, d, i = _edit_counts(ref, hyp)
        total_s += s
        total_d += d
        total_i += i
        total_ref += len(ref)
    return WerResult(
        wer=(total_s + total_d + total_i) / total_ref,
        substitutions=total_s,
        deletions=total_d,
        insertions=total_i,
    )


def delta(base_wer: float, adapted_wer: float) -> float:
    """Relative improvement over the base system, in percent, 1-decimal display rounding."""
    if base_wer <= 0:
        raise DivisionByZeroError(f"base WER must be positive, got {base_wer!r}")
    return round((base_wer - adapted_wer) / base_wer * 100.0, 1)


# --- perplexity ---------------------------------------------------------


def perplexity(
    model,
    dataset: DomainDataset,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> float:
    """exp(mean per-character cross-entropy) of transcripts given audio-view inputs."""
    from .batching import BatchItem, View
    from .tinylm import sequence_cross_entropy

    if dataset.split is not Split.VALIDATION:
        raise DataError(f"perplexity expects a VALIDATION split, got {dataset.split.name}")
    items = []
    for utt in dataset.utterances:
        if not utt.surrogate_audio:
            raise DataError(f"utterance {utt.id!r} has no audio channel for perplexity")
        input_region, target_region = render(utt.surrogate_audio, utt.text, Variant.NOISE, template)
        items.append(
            BatchItem(
                view=View.AUDIO,
                utterance_id=utt.id,
                input_region=input_region,
                target_region=target_region,
            )
        )
    total_nll, total_count = sequence_cross_entropy(model, items)
    if total_count == 0:
        raise DataError("no target characters to score")
    value = float(np.exp(total_nll / total_count))
    if not np.isfinite(value):
        raise DataError("perplexity is non-finite")
    return value


@dataclass
class PerplexityMonitor:
    """Collects (step, perplexity) observations during a training phase."""

    observations: list[tuple[int, float]] = field(default_factory=list)

    def record(self, step: int, value: float) -> None:
        if self.observations and step <= self.observations[-1][0]:
            raise DataError("monitor steps must be strictly increasing")
        self.observations.append((step, float(value)))

    def series(self) -> list[tuple[int, float]]:
        return list(self.observations)

    def minimum(self) -> tuple[int, float]:
        if not self.observations:
            raise DataError("no observations recorded")
        return min(self.observations, key=lambda pair: pair[1])


# --- report rendering ---------------------------------------------------


class ReportLayout(Enum):
    TABLE2_STYLE = "systems"
    TABLE4_STYLE = "composition"
    TABLE5_STYLE = "item_type"


@dataclass(frozen=True)
class DomainScore:
    domain: str
    wer: float
    delta: float | None = None


@dataclass(frozen=True)
class EvalReport:
    system_name: str
    per_domain: tuple[DomainScore, ...]
    metadata: dict = field(default_factory=dict)

    def domains(self) -> tuple[str, ...]:
        return tuple(sorted(score.domain for score in self.per_domain))

    def score(self, domain: str) -> DomainScore:
        for entry in self.per_domain:
            if entry.domain == domain:
                return entry
        raise InconsistentDomainsError(f"no score for domain {domain!r}")


def report_to_json(report: EvalReport) -> dict:
    return {
        "system_name": report.system_name,
        "per_domain": [
            {"domain": s.domain, "wer": s.wer, "delta": s.delta} for s in report.per_domain
        ],
        "metadata": report.metadata,
    }


def report_from_json(payload: dict) -> EvalReport:
    try:
        scores = tuple(
            DomainScore(domain=row["domain"], wer=row["wer"], delta=row.get("delta"))
            for row in payload["per_domain"]
        )
        return EvalReport(
            system_name=payload["system_name"],
            per_domain=scores,
            metadata=dict(payload.get("metadata", {})),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed report payload ({exc})") from exc


_CHECK, _BLANK = "x", "-"


def _format_cell(score: DomainScore) -> tuple[str, str]:
    wer_text = f"{score.wer:.2f}"
    delta_text = "--" if score.delta is None else f"{score.delta:.1f}"
    return wer_text, delta_text


def render_report(reports: Sequence[EvalReport], layout: ReportLayout) -> str:
    """Aligned plain-text table; systems in input order, domains alphabetical."""
    if not reports:
        raise DataError("nothing to render")
    domains = reports[0].domains()
    for report in reports[1:]:
        if report.domains() != domains:
            raise InconsistentDomainsError(
                f"domain sets differ: {reports[0].domains()} vs {report.domains()}"
            )

    if layout is ReportLayout.TABLE4_STYLE:
        lead_headers = ["sig_a", "sig_ta", "sig_t"]

        def lead(report: EvalReport) -> list[str]:
            active = set(report.metadata.get("active_views", ()))
            return [
                _CHECK if view in active else _BLANK
                for view in ("sigma_a", "sigma_ta", "sigma_t")
            ]

    elif layout is ReportLayout.TABLE5_STYLE:
        lead_headers = ["strategy", "batch item type"]

        def lead(report: EvalReport) -> list[str]:
            return [report.system_name, str(report.metadata.get("item_type", "?"))]

    else:
        lead_headers = ["system"]

        def lead(report: EvalReport) -> list[str]:
            return [report.system_name]

    headers = lead_headers + [f"{d} WER" for d in domains]
    headers += [f"{d} delta" for d in domains]
    rows = []
    for report in reports:
        wer_cells, delta_cells = [], []
        for domain in domains:
            wer_text, delta_text = _format_cell(report.score(domain))
            wer_cells.append(wer_text)
            delta_cells.append(delta_text)
        rows.append(lead(report) + wer_cells + delta_cells)

    widths = [
        max(len(headers[col]), *(len(row[col]) for row in rows)) for col in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)
