"""Seeded synthetic domains and the adaptation-vs-forgetting experiment.

The two domains share function words but draw content words from
disjoint generated lexicons, so the domain shift is purely lexical.
Source utterances carry pseudo-acoustic channel output on every split;
target utterances carry it on evaluation splits only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

from .batching import BatchItem, compose_batch
from .corpus import DatasetKind, DomainDataset, MixtureWeights, Split, Utterance
from .errors import DataError
from .evaluation import corpus_wer
from .noising import EmbeddingTable, NoiseConfig, build_embedding_table, surrogate_acoustic_channel
from .prompting import COMPACT_TEMPLATE, PromptTemplate, Variant, render
from .rng import derive_seed, make_rng
from .tinylm import ModelState, TrainConfig, decode, init_model, train

FUNCTION_WORDS = ("the", "a", "to", "of", "is", "on", "in", "it", "we", "and")

_ONSETS = "bcdfglmnprstvz"
_NUCLEI = "aeiou"
_CODAS = ("", "n", "r", "s", "t", "l", "k", "m")


@dataclass(frozen=True)
class DomainData:
    """Train/validation/test splits of one domain."""

    train: DomainDataset
    validation: DomainDataset
    test: DomainDataset


@dataclass(frozen=True)
class SynthSpec:
    """Sizes and shape of the generated source/target domain pair."""

    seed: int = 0
    n_src_train: int = 1500
    n_tgt_train: int = 2250
    n_validation: int = 40
    n_test: int = 64
    lexicon_size: int = 30
    min_words: int = 3
    max_words: int = 6
    function_word_prob: float = 0.35
    embedding_dim: int = 24


def _make_word(rng) -> str:
    syllables = rng.randint(2, 3)
    parts = []
    for _ in range(syllables):
        parts.append(rng.choice(_ONSETS) + rng.choice(_NUCLEI) + rng.choice(_CODAS))
    return "".join(parts)


def _make_lexicon(rng, size: int, taken: set[str]) -> tuple[str, ...]:
    words: list[str] = []
    while len(words) < size:
        word = _make_word(rng)
        if word not in taken:
            taken.add(word)
            words.append(word)
    return tuple(words)


def _make_sentence(rng, lexicon: Sequence[str], spec: SynthSpec) -> str:
    length = rng.randint(spec.min_words, spec.max_words)
    words = []
    for _ in range(length):
        if rng.random() < spec.function_word_prob:
            words.append(rng.choice(FUNCTION_WORDS))
        else:
            words.append(rng.choice(lexicon))
    return " ".join(words)


def _make_split(
    domain: str,
    split: Split,
    kind: DatasetKind,
    count: int,
    lexicon: Sequence[str],
    spec: SynthSpec,
    with_audio: bool,
) -> DomainDataset:
    rng = make_rng(spec.seed, "sentences", domain, split.value)
    utterances = []
    for idx in range(count):
        text = _make_sentence(rng, lexicon, spec)
        utt_id = f"{domain}-{split.value}-{idx:05d}"
        audio = None
        if with_audio:
            audio = surrogate_acoustic_channel(text, derive_seed(spec.seed, "audio", utt_id))
        utterances.append(
            Utterance(id=utt_id, text=text, domain=domain, surrogate_audio=audio)
        )
    return DomainDataset(
        name=f"{domain}-{split.value}",
        kind=kind,
        utterances=tuple(utterances),
        split=split,
    )


def make_synthetic_domains(spec: SynthSpec) -> tuple[DomainData, DomainData, EmbeddingTable]:
    """Generate (source, target, embedding table) for one experiment seed.

    The quantization vocabulary holds the clean lexical inventory of
    both domains plus single-character fillers and digits, all
    lowercase; raw channel output (mixed case, arbitrary corruption)
    only ever reaches the model through the AUDIO view.
    """
    lex_rng = make_rng(spec.seed, "lexicons")
    taken = set(FUNCTION_WORDS)
    lex_src = _make_lexicon(lex_rng, spec.lexicon_size, taken)
    lex_tgt = _make_lexicon(lex_rng, spec.lexicon_size, taken)

    src = DomainData(
        train=_make_split("srcdom", Split.TRAIN, DatasetKind.SOURCE_PAIRED,
                          spec.n_src_train, lex_src, spec, with_audio=True),
        validation=_make_split("srcdom", Split.VALIDATION, DatasetKind.SOURCE_PAIRED,
                               spec.n_validation, lex_src, spec, with_audio=True),
        test=_make_split("srcdom", Split.TEST, DatasetKind.SOURCE_PAIRED,
                         spec.n_test, lex_src, spec, with_audio=True),
    )
    tgt = DomainData(
        train=_make_split("tgtdom", Split.TRAIN, DatasetKind.TARGET_TEXT_ONLY,
                          spec.n_tgt_train, lex_tgt, spec, with_audio=False),
        validation=_make_split("tgtdom", Split.VALIDATION, DatasetKind.TARGET_TEXT_ONLY,
                               spec.n_validation, lex_tgt, spec, with_audio=True),
        test=_make_split("tgtdom", Split.TEST, DatasetKind.TARGET_TEXT_ONLY,
                         spec.n_test, lex_tgt, spec, with_audio=True),
    )

    vocab = sorted(
        set(FUNCTION_WORDS)
        | set(lex_src)
        | set(lex_tgt)
        | set("abcdefghijklmnopqrstuvwxyz0123456789")
    )
    table = build_embedding_table(vocab, dim=spec.embedding_dim)
    return src, tgt, table


def experiment_vocab(template: PromptTemplate) -> str:
    """Character inventory covering generated text, both noise channels, and the template."""
    chars = set("abcdefghijklmnopqrstuvwxyz")
    chars |= set("ABCDEFGHIJKLMNOPQRSTUVWXYZ")
    chars |= set("0123456789 ")
    for literal in template.literals():
        chars |= set(literal)
    return "".join(sorted(chars))


def batch_stream(
    src: DomainDataset,
    tgt: DomainDataset,
    weights: MixtureWeights,
    batch_size: int,
    num_batches: int,
    seed: int,
    noise_cfg: NoiseConfig,
    table: EmbeddingTable | None,
    *,
    template: PromptTemplate = COMPACT_TEMPLATE,
    text_variant: Variant = Variant.NOISE,
) -> Iterator[list[BatchItem]]:
    """Deterministic stream of composed batches with consecutive indices."""
    for index in range(num_batches):
        yield compose_batch(
            src,
            tgt,
            weights,
            batch_size,
            index,
            seed,
            noise_cfg,
            table,
            template=template,
            text_variant=text_variant,
        )


AUDIO_ONLY = MixtureWeights(sigma_a=1.0, sigma_ta=0.0, sigma_t=0.0, tau=0.0)


def evaluate_audio_wer(
    model: ModelState,
    dataset: DomainDataset,
    template: PromptTemplate = COMPACT_TEMPLATE,
    max_len: int = 64,
) -> float:
    """Corpus WER of greedy transcriptions from audio-view inputs."""
    references: list[str] = []
    hypotheses: list[str] = []
    for utt in dataset.utterances:
        if not utt.surrogate_audio:
            raise DataError(f"utterance {utt.id!r} has no audio channel to evaluate")
        input_region, _ = render(utt.surrogate_audio, utt.text, Variant.NOISE, template)
        result = decode(model, input_region, max_len)
        references.append(utt.text)
        hypotheses.append(result.text)
    return corpus_wer(references, hypotheses).wer


@dataclass(frozen=True)
class ExperimentResult:
    base_target_wer: float
    adapted_target_wer: float
    base_source_wer: float
    adapted_source_wer: float

    def as_tuple(self) -> tuple[float, float, float]:
        """(base WER, adapted WER, source WER after adaptation) on the probe order."""
        return (self.base_target_wer, self.adapted_target_wer, self.adapted_source_wer)


@dataclass(frozen=True)
class ExperimentSettings:
    """Knobs of the desk-scale run; defaults are the tuned reference setup."""

    base_steps: int = 700
    adapt_steps: int = 500
    seed: int = 0
    noise_cfg: NoiseConfig = field(default_factory=NoiseConfig)
    template: PromptTemplate = COMPACT_TEMPLATE
    text_variant: Variant = Variant.NOISE
    decode_max_len: int = 64


def train_base_model(
    src: DomainData,
    tgt: DomainData,
    cfg: TrainConfig,
    table: EmbeddingTable,
    settings: ExperimentSettings,
) -> ModelState:
    """Train the paired-audio base model on the source domain."""
    model = init_model(cfg)
    stream = batch_stream(
        src.train,
        tgt.train,
        AUDIO_ONLY,
        cfg.batch_size,
        settings.base_steps,
        derive_seed(settings.seed, "base"),
        settings.noise_cfg,
        table,
        template=settings.template,
    )
    return train(model, stream, replace(cfg, max_steps=settings.base_steps))


def adapt_model(
    base: ModelState,
    src: DomainData,
    tgt: DomainData,
    weights: MixtureWeights,
    table: EmbeddingTable,
    settings: ExperimentSettings,
) -> ModelState:
    """Continue training a copy of the base model on the mixed batch stream."""
    model = base.clone()
    stream = batch_stream(
        src.train,
        tgt.train,
        weights,
        model.config.batch_size,
        settings.adapt_steps,
        derive_seed(settings.seed, "adapt"),
        settings.noise_cfg,
        table,
        template=settings.template,
        text_variant=settings.text_variant,
    )
    return train(model, stream, replace(model.config, max_steps=settings.adapt_steps))


def run_adaptation_experiment(
    src: DomainData,
    tgt: DomainData,
    cfg: TrainConfig,
    weights: MixtureWeights,
    *,
    table: EmbeddingTable,
    settings: ExperimentSettings | None = None,
    base: ModelState | None = None,
) -> ExperimentResult:
    """Base training, adaptation, and the three WER probes.

    A pre-trained `base` model may be passed in so ablation rows sharing
    a seed reuse one base checkpoint.
    """
    settings = settings or ExperimentSettings()
    if base is None:
        base = train_base_model(src, tgt, cfg, table, settings)
    adapted = adapt_model(base, src, tgt, weights, table, settings)

    base_target = evaluate_audio_wer(base, tgt.test, settings.template, settings.decode_max_len)
    base_source = evaluate_audio_wer(base, src.test, settings.template, settings.decode_max_len)
    adapted_target = evaluate_audio_wer(adapted, tgt.test, settings.template, settings.decode_max_len)
    adapted_source = evaluate_audio_wer(adapted, src.test, settings.template, settings.decode_max_len)
    return ExperimentResult(
        base_target_wer=base_target,
        adapted_target_wer=adapted_target,
        base_source_wer=base_source,
        adapted_source_wer=adapted_source,
    )
