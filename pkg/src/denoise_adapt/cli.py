"""Command-line pipeline: ingest, noise, quantize, compose, train, adapt,
evaluate, ablate, report, synth.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Commands that write outputs also write a run manifest
(config hash, seed, version) so reruns can be verified bitwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import run_ablation_suite
from .batching import compose_batch, export_manifest, load_batch_manifest
from .config import RunConfig, write_run_manifest
from .corpus import DatasetKind, Split, derive_mixture, load_manifest, save_manifest
from .errors import ConfigError, DataError, ToolkitError
from .evaluation import (
    DomainScore,
    EvalReport,
    ReportLayout,
    delta,
    render_report,
    report_from_json,
    report_to_json,
)
from .experiment import evaluate_audio_wer, make_synthetic_domains
from .noising import (
    EmbeddingTable,
    frames_for_tokens,
    quantize_to_tokens,
    surrogate_acoustic_channel,
    text_noise,
)
from .prompting import COMPACT_TEMPLATE, DEFAULT_TEMPLATE, PromptTemplate, Variant
from .tinylm import init_model, load_checkpoint, save_checkpoint, train


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config field (repeatable)",
    )


def _load_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overridden: set[str] = set()
    for entry in args.overrides:
        if "=" not in entry:
            raise ConfigError(f"--set expects KEY=VALUE, got {entry!r}")
        key, value = entry.split("=", 1)
        cfg.set(key.strip(), value.strip())
        overridden.add(key.strip())
    return cfg, overridden


def _add_noise_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--word-select-prob", type=float)
    parser.add_argument("--char-sub-prob", type=float)
    parser.add_argument("--min-edits", type=int)
    parser.add_argument("--max-edits", type=int)
    parser.add_argument("--dup-prob", type=float)
    parser.add_argument("--dup-min", type=int)
    parser.add_argument("--dup-max", type=int)
    parser.add_argument("--symbol-alphabet")


_NOISE_FLAG_KEYS = {
    "word_select_prob": "noise.word_select_prob",
    "char_sub_prob": "noise.char_sub_prob",
    "min_edits": "noise.min_edits",
    "max_edits": "noise.max_edits",
    "dup_prob": "noise.dup_prob",
    "dup_min": "noise.dup_min",
    "dup_max": "noise.dup_max",
    "symbol_alphabet": "noise.symbol_alphabet",
}


def _apply_noise_flags(cfg: RunConfig, args: argparse.Namespace) -> None:
    for attr, key in _NOISE_FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(key, str(value))


def _template_from_name(name: str) -> PromptTemplate:
    return COMPACT_TEMPLATE if name == "compact" else DEFAULT_TEMPLATE


def _template_extra(template: PromptTemplate, preset: str) -> dict:
    return {
        "template": {
            "preset": preset,
            "header_open": template.header_open,
            "header_close": template.header_close,
            "instruction": template.instruction,
            "eot": template.eot,
            "assistant_header": template.assistant_header,
        }
    }


def _template_from_extra(extra: dict) -> PromptTemplate:
    block = extra.get("template")
    if not block:
        return COMPACT_TEMPLATE
    return PromptTemplate(
        header_open=block["header_open"],
        header_close=block["header_close"],
        instruction=block["instruction"],
        eot=block["eot"],
        assistant_header=block["assistant_header"],
    )


# --- subcommands ---------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    kind = DatasetKind.SOURCE_PAIRED if args.kind == "source" else DatasetKind.TARGET_TEXT_ONLY
    dataset = load_manifest(args.input, kind, Split(args.split), name=args.name)
    print(f"{dataset.name}: {len(dataset)} utterances ({args.kind}, {args.split})")
    if args.output:
        save_manifest(dataset, args.output)
        print(f"wrote canonical manifest to {args.output}")
    return 0


def cmd_noise(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    _apply_noise_flags(cfg, args)
    noise_cfg = cfg.noise_config(seed=args.seed)
    kind = DatasetKind.SOURCE_PAIRED if args.kind == "source" else DatasetKind.TARGET_TEXT_ONLY
    dataset = load_manifest(args.input, kind)
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8", newline="\n") as fh:
        for utt in dataset.utterances:
            noised = text_noise(utt.text, noise_cfg, utt.id)
            fh.write(
                json.dumps(
                    {"id": utt.id, "input": noised, "target": utt.text}, ensure_ascii=False
                )
                + "\n"
            )
    write_run_manifest(out_path.parent, cfg, args.seed)
    print(f"noised {len(dataset)} utterances -> {args.output}")
    return 0


def cmd_quantize(args: argparse.Namespace) -> int:
    table = EmbeddingTable.load(args.table)
    if args.text is not None:
        raw = surrogate_acoustic_channel(args.text, args.seed)
        frames = frames_for_tokens(raw.split(), table.dim)
    elif args.tokens is not None:
        frames = frames_for_tokens(args.tokens.split(), table.dim)
    elif args.frames is not None:
        frames = np.load(args.frames)
    else:
        raise ConfigError("quantize needs one of --text, --tokens, or --frames")
    result = quantize_to_tokens(frames, table)
    if args.output:
        Path(args.output).write_text(result + "\n", encoding="utf-8")
    print(result)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    if args.seed is not None:
        cfg.set("run.seed", str(args.seed))
    out_dir = Path(args.output_dir)
    src, tgt, table = make_synthetic_domains(cfg.synth_spec())
    for domain, data in (("source", src), ("target", tgt)):
        for split_name in ("train", "validation", "test"):
            save_manifest(getattr(data, split_name), out_dir / f"{domain}_{split_name}.jsonl")
    table.save(out_dir / "embedding_table.bin")
    write_run_manifest(out_dir, cfg, int(cfg["run.seed"]))
    print(
        f"wrote synthetic domains ({len(src.train)} source / {len(tgt.train)} target "
        f"train utterances) and a {table.vocab_size}x{table.dim} table to {out_dir}"
    )
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    _apply_noise_flags(cfg, args)
    cfg.set("run.seed", str(args.seed))
    cfg.set("mixture.tau", args.tau)
    src = load_manifest(args.source, DatasetKind.SOURCE_PAIRED)
    tgt = load_manifest(args.target, DatasetKind.TARGET_TEXT_ONLY)
    tau = cfg.resolve_tau(len(src), len(tgt))
    weights = derive_mixture(tau)
    table = EmbeddingTable.load(args.table) if args.table else None
    template = _template_from_name(args.template)
    noise_cfg = cfg.noise_config(seed=args.seed)
    batches = [
        compose_batch(
            src,
            tgt,
            weights,
            args.batch_size,
            index,
            args.seed,
            noise_cfg,
            table,
            template=template,
            text_variant=Variant(args.variant),
        )
        for index in range(args.num_batches)
    ]
    export_manifest(batches, args.export)
    write_run_manifest(Path(args.export).parent, cfg, args.seed)
    print(
        f"composed {args.num_batches} batches of {args.batch_size} "
        f"(tau={tau:.4f}) -> {args.export}"
    )
    return 0


def cmd_train(args: argparse.Namespace, init_from: str | None = None) -> int:
    cfg, overridden = _load_config(args)
    cfg.set("run.seed", str(args.seed))
    batches = load_batch_manifest(args.batches)
    if not batches:
        raise DataError(f"no batches in {args.batches}")
    if init_from is None:
        chars = set()
        for batch in batches:
            for item in batch:
                chars.update(item.input_region)
                chars.update(item.target_region)
        train_cfg = cfg.train_config("".join(sorted(chars)), seed=args.seed)
        if "train.max_steps" not in overridden:
            train_cfg = replace(train_cfg, max_steps=len(batches))
        model = init_model(train_cfg)
        extra = _template_extra(cfg.template(), str(cfg["template.preset"]))
    else:
        model, extra = load_checkpoint(init_from)
        train_cfg = model.config
        if "train.max_steps" not in overridden:
            train_cfg = replace(train_cfg, max_steps=len(batches))
        if "train.learning_rate" in overridden:
            train_cfg = replace(train_cfg, learning_rate=cfg["train.learning_rate"])
    model = train(model, batches, train_cfg)
    save_checkpoint(model, args.output, extra=extra)
    write_run_manifest(Path(args.output).parent, cfg, args.seed)
    last = model.loss_history[-1] if model.loss_history else float("nan")
    print(f"trained {model.step_count} total steps (final loss {last:.4f}) -> {args.output}")
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    return cmd_train(args, init_from=args.init)


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    model, extra = load_checkpoint(args.checkpoint)
    template = _template_from_extra(extra)
    kind = DatasetKind.SOURCE_PAIRED if args.kind == "source" else DatasetKind.TARGET_TEXT_ONLY
    dataset = load_manifest(args.manifest, kind, Split(args.split))
    wer_value = evaluate_audio_wer(model, dataset, template, args.max_len) * 100.0
    delta_value = delta(args.baseline_wer, wer_value) if args.baseline_wer else None
    report = EvalReport(
        system_name=args.system_name,
        per_domain=(DomainScore(domain=dataset.utterances[0].domain, wer=wer_value,
                                delta=delta_value),),
        metadata={
            "checkpoint": str(args.checkpoint),
            "manifest": str(args.manifest),
            "config_hash": cfg.config_hash(),
            "seed": model.config.seed,
        },
    )
    print(render_report([report], ReportLayout.TABLE2_STYLE))
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(
            json.dumps(report_to_json(report), sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        write_run_manifest(Path(args.output).parent, cfg, model.config.seed)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg, _ = _load_config(args)
    if args.seed is not None:
        cfg.set("run.seed", str(args.seed))
    if args.output_dir:
        cfg.set("run.output_dir", args.output_dir)
    if args.parallel_rows:
        cfg.set("ablation.parallel_rows", "true")
    reports = run_ablation_suite(cfg)
    composition = [r for r in reports if r.system_name.startswith("composition:")]
    item_type = [r for r in reports if r.system_name.startswith("item_type:")]
    print(render_report(composition, ReportLayout.TABLE4_STYLE))
    print()
    print(render_report(item_type, ReportLayout.TABLE5_STYLE))
    if args.output_dir:
        write_run_manifest(Path(args.output_dir), cfg, int(cfg["run.seed"]))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.inputs:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        reports.append(report_from_json(payload))
    layout = {
        "table2": ReportLayout.TABLE2_STYLE,
        "table4": ReportLayout.TABLE4_STYLE,
        "table5": ReportLayout.TABLE5_STYLE,
    }[args.layout]
    print(render_report(reports, layout))
    return 0


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denoise-adapt",
        description="Text-only domain adaptation via text denoising",
    )
    parser.add_argument("--version", action="version", version=f"denoise-adapt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("source", "target"), required=True)
    p.add_argument("--split", choices=("train", "validation", "test"), default="train")
    p.add_argument("--output")
    p.add_argument("--name")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("noise", help="apply the naive noise channel to a manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("source", "target"), default="target")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_noise_arguments(p)
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_noise)

    p = sub.add_parser("quantize", help="map frames or token text to nearest vocabulary tokens")
    p.add_argument("--table", required=True)
    p.add_argument("--text", help="transcript; runs the surrogate acoustic channel first")
    p.add_argument("--tokens", help="whitespace tokens embedded directly")
    p.add_argument("--frames", help=".npy file of frame vectors")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(handler=cmd_quantize)

    p = sub.add_parser("synth", help="generate the seeded synthetic domain pair")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int)
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("compose", help="compose mixed training batches")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--tau", default="auto")
    p.add_argument("--batch-size", type=int, default=12)
    p.add_argument("--num-batches", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--export", required=True)
    p.add_argument("--table")
    p.add_argument("--template", choices=("compact", "paper"), default="compact")
    p.add_argument(
        "--variant",
        choices=tuple(v.value for v in Variant),
        default="noise",
        help="item type for the naive-noise views",
    )
    _add_noise_arguments(p)
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_compose)

    p = sub.add_parser("train", help="train a fresh model on a batch manifest")
    p.add_argument("--batches", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("adapt", help="continue training from a checkpoint")
    p.add_argument("--batches", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_adapt)

    p = sub.add_parser("evaluate", help="decode a test manifest and score WER")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=("source", "target"), default="target")
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.add_argument("--system-name", default="model")
    p.add_argument("--baseline-wer", type=float)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--output")
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the composition and item-type ablation suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--parallel-rows", action="store_true")
    _add_config_arguments(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("report", help="render saved report files as a table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument(
        "--layout", choices=("table2", "table4", "table5"), default="table2"
    )
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
