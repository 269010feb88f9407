"""Ablation suite: batch-composition rows and batch-item-type rows.

Disabling a source view redistributes its mass equally over the
remaining active source views while tau stays fixed; the adaptation
share is part of every row.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import RunConfig
from .corpus import DatasetKind, MixtureWeights, Split, load_manifest
from .errors import ConfigError
from .evaluation import DomainScore, EvalReport, delta, report_to_json
from .experiment import (
    DomainData,
    adapt_model,
    evaluate_audio_wer,
    experiment_vocab,
    make_synthetic_domains,
    train_base_model,
)
from .noising import EmbeddingTable
from .prompting import Variant

COMPOSITION_ROWS: tuple[tuple[str, tuple[bool, bool, bool]], ...] = (
    ("audio_only", (True, False, False)),
    ("audio+proj", (True, True, False)),
    ("audio+text", (True, False, True)),
    ("no_audio", (False, True, True)),
    ("all_views", (True, True, True)),
)

ITEM_TYPE_ROWS: tuple[tuple[str, Variant, str], ...] = (
    ("noise", Variant.NOISE, "Prompt(noise(t), t)"),
    ("echoing", Variant.ECHO, "Prompt(t, t)"),
    ("empty", Variant.EMPTY, "Prompt(empty, t)"),
    ("no_prompt", Variant.NO_PROMPT, "t"),
)


def renormalize_weights(tau: float, active: tuple[bool, bool, bool]) -> MixtureWeights:
    """Equal shares of (1 - tau) over the active source views, tau fixed."""
    if not 0.0 <= tau < 1.0:
        raise ConfigError(f"tau must lie in [0, 1) for ablation rows, got {tau!r}")
    n_active = sum(active)
    if n_active == 0:
        raise ConfigError("at least one source view must stay active")
    share = (1.0 - tau) / n_active
    sigma = [share if flag else 0.0 for flag in active]
    return MixtureWeights(sigma_a=sigma[0], sigma_ta=sigma[1], sigma_t=sigma[2], tau=tau)


@dataclass(frozen=True)
class SuiteData:
    src: DomainData
    tgt: DomainData
    table: EmbeddingTable


def load_suite_data(cfg: RunConfig) -> SuiteData:
    """Synthetic domains by default; explicit manifests when all paths are set."""
    path_keys = (
        "data.source_train",
        "data.source_validation",
        "data.source_test",
        "data.target_train",
        "data.target_validation",
        "data.target_test",
        "data.embedding_table",
    )
    paths = {key: str(cfg[key]) for key in path_keys}
    if cfg["synth.enabled"] and not all(paths.values()):
        src, tgt, table = make_synthetic_domains(cfg.synth_spec())
        return SuiteData(src=src, tgt=tgt, table=table)
    missing = [key for key, value in paths.items() if not value]
    if missing:
        raise ConfigError(f"synthetic data disabled but paths missing: {missing}")
    src = DomainData(
        train=load_manifest(paths["data.source_train"], DatasetKind.SOURCE_PAIRED, Split.TRAIN),
        validation=load_manifest(
            paths["data.source_validation"], DatasetKind.SOURCE_PAIRED, Split.VALIDATION
        ),
        test=load_manifest(paths["data.source_test"], DatasetKind.SOURCE_PAIRED, Split.TEST),
    )
    tgt = DomainData(
        train=load_manifest(paths["data.target_train"], DatasetKind.TARGET_TEXT_ONLY, Split.TRAIN),
        validation=load_manifest(
            paths["data.target_validation"], DatasetKind.TARGET_TEXT_ONLY, Split.VALIDATION
        ),
        test=load_manifest(paths["data.target_test"], DatasetKind.TARGET_TEXT_ONLY, Split.TEST),
    )
    return SuiteData(src=src, tgt=tgt, table=EmbeddingTable.load(paths["data.embedding_table"]))


def _report_for_row(
    name: str,
    adapted_target: float,
    adapted_source: float,
    base_target: float,
    base_source: float,
    metadata: dict,
) -> EvalReport:
    scores = (
        DomainScore(domain="source", wer=adapted_source * 100.0,
                    delta=delta(base_source * 100.0, adapted_source * 100.0)),
        DomainScore(domain="target", wer=adapted_target * 100.0,
                    delta=delta(base_target * 100.0, adapted_target * 100.0)),
    )
    return EvalReport(system_name=name, per_domain=scores, metadata=metadata)


def _persist_row(output_dir: Path | None, report: EvalReport) -> None:
    if output_dir is None:
        return
    rows_dir = output_dir / "rows"
    rows_dir.mkdir(parents=True, exist_ok=True)
    path = rows_dir / f"{report.system_name}.report.json"
    path.write_text(
        json.dumps(report_to_json(report), sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def run_ablation_suite(cfg: RunConfig) -> list[EvalReport]:
    """All composition rows plus all item-type rows, sharing one base model.

    The all-views composition row and the noise item-type row are the
    same configuration and share one adaptation run. Each row's report
    is persisted as soon as it is available when an output directory is
    configured.
    """
    data = load_suite_data(cfg)
    tau = cfg.resolve_tau(len(data.src.train), len(data.tgt.train))
    settings = cfg.experiment_settings()
    vocab = experiment_vocab(settings.template)
    train_cfg = cfg.train_config(vocab)
    seed = int(cfg["run.seed"])
    output_dir = Path(str(cfg["run.output_dir"])) if str(cfg["run.output_dir"]) else None

    base = train_base_model(data.src, data.tgt, train_cfg, data.table, settings)
    base_target = evaluate_audio_wer(base, data.tgt.test, settings.template, settings.decode_max_len)
    base_source = evaluate_audio_wer(base, data.src.test, settings.template, settings.decode_max_len)

    common_meta = {
        "tau": tau,
        "seed": seed,
        "config_hash": cfg.config_hash(),
        "base_target_wer": base_target * 100.0,
        "base_source_wer": base_source * 100.0,
    }

    def run_row(weights: MixtureWeights, variant: Variant) -> tuple[float, float]:
        adapted = adapt_model(
            base, data.src, data.tgt, weights, data.table,
            replace(settings, text_variant=variant),
        )
        adapted_target = evaluate_audio_wer(
            adapted, data.tgt.test, settings.template, settings.decode_max_len
        )
        adapted_source = evaluate_audio_wer(
            adapted, data.src.test, settings.template, settings.decode_max_len
        )
        return adapted_target, adapted_source

    jobs: list[tuple[str, MixtureWeights, Variant, dict]] = []
    for name, flags in COMPOSITION_ROWS:
        weights = renormalize_weights(tau, flags)
        active = [
            view
            for view, flag in zip(("sigma_a", "sigma_ta", "sigma_t"), flags)
            if flag
        ]
        jobs.append(
            (f"composition:{name}", weights, Variant.NOISE,
             {**common_meta, "active_views": active, "row": name})
        )
    full_weights = renormalize_weights(tau, (True, True, True))
    for name, variant, item_type in ITEM_TYPE_ROWS:
        if variant is Variant.NOISE:
            continue  # shares the all_views run below
        jobs.append(
            (f"item_type:{name}", full_weights, variant,
             {**common_meta, "item_type": item_type, "row": name})
        )

    reports: dict[str, EvalReport] = {}

    def execute(job: tuple[str, MixtureWeights, Variant, dict]) -> EvalReport:
        name, weights, variant, meta = job
        adapted_target, adapted_source = run_row(weights, variant)
        return _report_for_row(name, adapted_target, adapted_source, base_target, base_source, meta)

    if cfg["ablation.parallel_rows"]:
        with ThreadPoolExecutor(max_workers=4) as pool:
            for report in pool.map(execute, jobs):
                reports[report.system_name] = report
                _persist_row(output_dir, report)
    else:
        for job in jobs:
            report = execute(job)
            reports[report.system_name] = report
            _persist_row(output_dir, report)

    # The noise item-type row mirrors the all-views composition run.
    all_views = reports["composition:all_views"]
    noise_row = EvalReport(
        system_name="item_type:noise",
        per_domain=all_views.per_domain,
        metadata={**common_meta, "item_type": ITEM_TYPE_ROWS[0][2], "row": "noise"},
    )
    reports[noise_row.system_name] = noise_row
    _persist_row(output_dir, noise_row)

    ordered = [f"composition:{name}" for name, _ in COMPOSITION_ROWS]
    ordered += [f"item_type:{name}" for name, _, _ in ITEM_TYPE_ROWS]
    return [reports[name] for name in ordered]
