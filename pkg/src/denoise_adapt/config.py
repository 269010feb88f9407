"""Flat key-value run configuration with a stable content hash.

A config file is plain text, one ``key = value`` per line, ``#``
comments allowed. Every key has a schema-typed default; unknown keys
are rejected. The canonical serialization (sorted keys) is hashed so a
run manifest pins the exact configuration that produced an artifact.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .experiment import ExperimentSettings, SynthSpec
from .noising import DEFAULT_SYMBOL_ALPHABET, NoiseConfig
from .prompting import COMPACT_TEMPLATE, DEFAULT_TEMPLATE, PromptTemplate
from .tinylm import TrainConfig

_SCHEMA: dict[str, tuple[str, object]] = {
    # data paths; empty string means "not set" (synthetic generation applies)
    "data.source_train": ("str", ""),
    "data.source_validation": ("str", ""),
    "data.source_test": ("str", ""),
    "data.target_train": ("str", ""),
    "data.target_validation": ("str", ""),
    "data.target_test": ("str", ""),
    "data.embedding_table": ("str", ""),
    "run.output_dir": ("str", ""),
    "run.seed": ("int", 0),
    # synthetic domain generation
    "synth.enabled": ("bool", True),
    "synth.n_src_train": ("int", 1500),
    "synth.n_tgt_train": ("int", 2250),
    "synth.n_validation": ("int", 40),
    "synth.n_test": ("int", 64),
    "synth.lexicon_size": ("int", 30),
    "synth.min_words": ("int", 3),
    "synth.max_words": ("int", 6),
    "synth.function_word_prob": ("float", 0.35),
    "synth.embedding_dim": ("int", 24),
    # naive noise channel
    "noise.word_select_prob": ("float", 0.15),
    "noise.char_sub_prob": ("float", 0.30),
    "noise.min_edits": ("int", 1),
    "noise.max_edits": ("int", 10),
    "noise.dup_prob": ("float", 0.10),
    "noise.dup_min": ("int", 1),
    "noise.dup_max": ("int", 3),
    "noise.symbol_alphabet": ("str", DEFAULT_SYMBOL_ALPHABET),
    # batch mixture
    "mixture.tau": ("str", "auto"),
    "mixture.batch_size": ("int", 12),
    # trainer
    "train.embed_dim": ("int", 48),
    "train.hidden_dim": ("int", 96),
    "train.layers": ("int", 2),
    "train.heads": ("int", 2),
    "train.learning_rate": ("float", 0.5),
    "train.warmup_steps": ("int", 50),
    "train.batch_size": ("int", 12),
    "train.max_steps": ("int", 500),
    "train.max_seq_len": ("int", 160),
    "train.grad_clip": ("float", 1.0),
    "train.base_steps": ("int", 700),
    "train.adapt_steps": ("int", 500),
    "train.decode_max_len": ("int", 64),
    # prompt template
    "template.preset": ("choice:compact,paper", "compact"),
    # ablation controls
    "ablation.disable_sigma_a": ("bool", False),
    "ablation.disable_sigma_ta": ("bool", False),
    "ablation.disable_sigma_t": ("bool", False),
    "ablation.item_variant": ("choice:noise,echo,empty,no_prompt", "noise"),
    "ablation.parallel_rows": ("bool", False),
}


def _coerce(key: str, kind: str, raw: str) -> object:
    if kind == "str":
        return raw
    if kind == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from exc
    if kind == "float":
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from exc
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split(",")
        if raw not in options:
            raise ConfigError(f"{key}: expected one of {options}, got {raw!r}")
        return raw
    raise ConfigError(f"unknown schema kind {kind!r} for {key}")


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        merged = {key: default for key, (_, default) in _SCHEMA.items()}
        for key, value in self.values.items():
            if key not in _SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = value
        self.values = merged

    def __getitem__(self, key: str) -> object:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        self.values[key] = _coerce(key, _SCHEMA[key][0], raw)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"config line {line_no}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            cfg.set(key.strip(), raw.strip())
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_text(path.read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"{key} = {_format_value(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    # --- typed builders --------------------------------------------------

    def noise_config(self, seed: int | None = None) -> NoiseConfig:
        return NoiseConfig(
            word_select_prob=self["noise.word_select_prob"],
            char_sub_prob=self["noise.char_sub_prob"],
            min_edits=self["noise.min_edits"],
            max_edits=self["noise.max_edits"],
            dup_prob=self["noise.dup_prob"],
            dup_min=self["noise.dup_min"],
            dup_max=self["noise.dup_max"],
            symbol_alphabet=self["noise.symbol_alphabet"],
            seed=self["run.seed"] if seed is None else seed,
        )

    def synth_spec(self, seed: int | None = None) -> SynthSpec:
        return SynthSpec(
            seed=self["run.seed"] if seed is None else seed,
            n_src_train=self["synth.n_src_train"],
            n_tgt_train=self["synth.n_tgt_train"],
            n_validation=self["synth.n_validation"],
            n_test=self["synth.n_test"],
            lexicon_size=self["synth.lexicon_size"],
            min_words=self["synth.min_words"],
            max_words=self["synth.max_words"],
            function_word_prob=self["synth.function_word_prob"],
            embedding_dim=self["synth.embedding_dim"],
        )

    def template(self) -> PromptTemplate:
        return COMPACT_TEMPLATE if self["template.preset"] == "compact" else DEFAULT_TEMPLATE

    def train_config(self, vocab: str, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            vocab=vocab,
            model_dims=(self["train.embed_dim"], self["train.hidden_dim"], self["train.layers"]),
            n_heads=self["train.heads"],
            learning_rate=self["train.learning_rate"],
            warmup_steps=self["train.warmup_steps"],
            batch_size=self["train.batch_size"],
            max_steps=self["train.max_steps"],
            seed=self["run.seed"] if seed is None else seed,
            max_seq_len=self["train.max_seq_len"],
            grad_clip=self["train.grad_clip"],
        )

    def experiment_settings(self, seed: int | None = None) -> ExperimentSettings:
        return ExperimentSettings(
            base_steps=self["train.base_steps"],
            adapt_steps=self["train.adapt_steps"],
            seed=self["run.seed"] if seed is None else seed,
            noise_cfg=self.noise_config(seed),
            template=self.template(),
            decode_max_len=self["train.decode_max_len"],
        )

    def resolve_tau(self, n_src: int, n_tgt: int) -> float:
        from .corpus import compute_tau

        raw = self["mixture.tau"]
        if raw == "auto":
            return compute_tau(n_src, n_tgt)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"mixture.tau must be 'auto' or a number, got {raw!r}") from exc


def write_run_manifest(output_dir: str | Path, config: RunConfig, seed: int) -> Path:
    """Record (config hash, seed, version) next to a run's outputs."""
    from . import __version__

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "run_manifest.txt"
    lines = [
        f"config_hash = {config.config_hash()}",
        f"seed = {seed}",
        f"version = denoise-adapt-{__version__}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
