"""The three noise channels feeding batch composition.

* `text_noise` — naive two-step corruption (character substitution then
  character duplication) that needs nothing but the transcript.
* `surrogate_acoustic_channel` — a deterministic stand-in for a speech
  projector at desk scale: case flips, spurious filler tokens, and
  duplications, intentionally heavier and differently shaped than
  `text_noise`.
* `quantize_to_tokens` — snaps embedding frames to their
  nearest-by-cosine vocabulary tokens, emulating how projector outputs
  read as noisy text once discretized.
"""

from __future__ import annotations

import math
import string
import struct
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyInputError,
    ZeroVectorError,
)
from .rng import derive_seed, make_rng

DEFAULT_SYMBOL_ALPHABET = string.ascii_lowercase + string.digits

_TABLE_MAGIC = b"EMBT"


@dataclass(frozen=True)
class NoiseConfig:
    """Parameters of the two-step naive noise procedure."""

    word_select_prob: float = 0.15
    char_sub_prob: float = 0.30
    min_edits: int = 1
    max_edits: int = 10
    dup_prob: float = 0.10
    dup_min: int = 1
    dup_max: int = 3
    symbol_alphabet: str = DEFAULT_SYMBOL_ALPHABET
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("word_select_prob", "char_sub_prob", "dup_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value!r}")
        if not 1 <= self.min_edits <= self.max_edits:
            raise DataError(
                f"need 1 <= min_edits <= max_edits, got {self.min_edits}, {self.max_edits}"
            )
        if not 1 <= self.dup_min <= self.dup_max:
            raise DataError(
                f"need 1 <= dup_min <= dup_max, got {self.dup_min}, {self.dup_max}"
            )
        if not self.symbol_alphabet:
            raise DataError("symbol_alphabet must be non-empty")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def substitute_characters(words: list[str], cfg: NoiseConfig, rng) -> list[str]:
    """Step 1: per-word selection, in-word substitution, and the edit clamp.

    The total substituted-character count per utterance is clamped to
    [min_edits, max_edits]; a shortfall is topped up by picking a word
    uniformly and then an unedited position inside it, an excess is cut
    to a uniform subset. Replacements always differ from the original
    character, so a substitution is a visible edit.
    """
    edits: list[tuple[int, int]] = []
    for wi, word in enumerate(words):
        if rng.random() < cfg.word_select_prob:
            n = min(len(word), max(1, _round_half_up(cfg.char_sub_prob * len(word))))
            for pos in rng.sample(range(len(word)), n):
                edits.append((wi, pos))

    if len(edits) > cfg.max_edits:
        edits = rng.sample(edits, cfg.max_edits)

    total_positions = sum(len(w) for w in words)
    target_min = min(cfg.min_edits, total_positions)
    edited = set(edits)
    while len(edits) < target_min:
        wi = rng.randrange(len(words))
        free = [p for p in range(len(words[wi])) if (wi, p) not in edited]
        if not free:
            continue
        pick = (wi, rng.choice(free))
        edited.add(pick)
        edits.append(pick)

    out = [list(w) for w in words]
    for wi, pos in edits:
        original = out[wi][pos]
        choices = [c for c in cfg.symbol_alphabet if c != original]
        if not choices:
            choices = list(cfg.symbol_alphabet)
        out[wi][pos] = rng.choice(choices)
    return ["".join(w) for w in out]


def duplicate_characters(s: str, cfg: NoiseConfig, rng) -> str:
    """Step 2: each non-space character may be repeated dup_min..dup_max extra times."""
    pieces: list[str] = []
    for ch in s:
        pieces.append(ch)
        if ch != " " and rng.random() < cfg.dup_prob:
            pieces.append(ch * rng.randint(cfg.dup_min, cfg.dup_max))
    return "".join(pieces)


def text_noise(t: str, cfg: NoiseConfig, item_key: str) -> str:
    """Naive noise: substitution then duplication, seeded per (cfg.seed, item_key)."""
    words = t.split()
    if not words:
        raise EmptyInputError("cannot noise an empty utterance")
    rng = make_rng(cfg.seed, "text_noise", item_key)
    substituted = substitute_characters(words, cfg, rng)
    return duplicate_characters(" ".join(substituted), cfg, rng)


# Filler tokens mimic the stray single-character tokens that projectors
# scatter between words.
_FILLER_CHARS = string.ascii_letters


def surrogate_acoustic_channel(
    t: str,
    seed: int,
    *,
    case_flip_prob: float = 0.3,
    filler_prob: float = 0.4,
    filler_max: int = 2,
    dup_prob: float = 0.15,
    dup_min: int = 1,
    dup_max: int = 3,
) -> str:
    """Deterministic pseudo-projector output for a transcript.

    Heavier and differently distributed than `text_noise`: case flips
    inject characters the naive channel never produces, and filler
    tokens perturb the token count. Parameter overrides exist for
    testing; the defaults are the channel definition.
    """
    words = t.split()
    if not words:
        raise EmptyInputError("cannot project an empty utterance")
    rng = make_rng(seed, "surrogate_channel", t)
    tokens: list[str] = []

    def emit_fillers() -> None:
        if rng.random() < filler_prob:
            for _ in range(rng.randint(1, filler_max)):
                tokens.append(rng.choice(_FILLER_CHARS))

    for word in words:
        emit_fillers()
        chars: list[str] = []
        for ch in word:
            if ch.isalpha() and rng.random() < case_flip_prob:
                ch = ch.lower() if ch.isupper() else ch.upper()
            chars.append(ch)
            if rng.random() < dup_prob:
                chars.append(ch * rng.randint(dup_min, dup_max))
        tokens.append("".join(chars))
    emit_fillers()
    return " ".join(tokens)


# --- nearest-token quantization ----------------------------------------


@lru_cache(maxsize=131072)
def token_vector_cached(token: str, dim: int) -> tuple[float, ...]:
    counts = [0.0] * dim
    for variant, weight in ((token.lower(), 1.0), (token, 0.5)):
        marked = "^" + variant + "$"
        for n in (1, 2, 3):
            for k in range(len(marked) - n + 1):
                h = derive_seed("ngram", marked[k : k + n])
                counts[h % dim] += weight if (h >> 62) & 1 else -weight
    return tuple(counts)


def token_vector(token: str, dim: int) -> np.ndarray:
    """Hashed character n-gram features, L2-normalized.

    Lowercased n-grams dominate so case variants of a word land near
    each other, while a smaller exact-case component keeps them
    distinguishable.
    """
    vec = np.asarray(token_vector_cached(token, dim), dtype=np.float32)
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec = vec / norm
    return vec


def frames_for_tokens(tokens: Sequence[str], dim: int) -> np.ndarray:
    """Stack per-token feature vectors into a frame matrix."""
    if not tokens:
        raise EmptyInputError("no tokens to embed")
    return np.stack([token_vector(tok, dim) for tok in tokens])


@dataclass(frozen=True)
class EmbeddingTable:
    """Vocabulary token strings plus their float32 embedding rows."""

    vectors: np.ndarray
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise DataError("embedding table must be a 2-D matrix")
        if len(self.tokens) != self.vectors.shape[0]:
            raise DataError(
                f"{len(self.tokens)} tokens but {self.vectors.shape[0]} vector rows"
            )
        if len(set(self.tokens)) != len(self.tokens):
            raise DataError("embedding table token strings must be unique")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("embedding table contains non-finite entries")

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        vectors = np.ascontiguousarray(self.vectors, dtype="<f4")
        with path.open("wb") as fh:
            fh.write(_TABLE_MAGIC)
            fh.write(struct.pack("<ii", self.vocab_size, self.dim))
            fh.write(vectors.tobytes())
            for tok in self.tokens:
                raw = tok.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:4] != _TABLE_MAGIC:
            raise DataError(f"{path} is not an embedding table file")
        v, d = struct.unpack_from("<ii", blob, 4)
        offset = 12
        matrix_bytes = v * d * 4
        vectors = np.frombuffer(blob, dtype="<f4", count=v * d, offset=offset).reshape(v, d)
        offset += matrix_bytes
        tokens: list[str] = []
        for _ in range(v):
            (length,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            tokens.append(blob[offset : offset + length].decode("utf-8"))
            offset += length
        return cls(vectors=vectors.copy(), tokens=tuple(tokens))


def build_embedding_table(tokens: Iterable[str], dim: int = 24) -> EmbeddingTable:
    """Embed a vocabulary with the n-gram featurizer used for query frames."""
    token_list = tuple(tokens)
    if not token_list:
        raise DataError("cannot build an embedding table from an empty vocabulary")
    return EmbeddingTable(vectors=frames_for_tokens(token_list, dim), tokens=token_list)


def nearest_token_indices(frames: np.ndarray, table: EmbeddingTable) -> np.ndarray:
    """Index of the highest-cosine row per frame; ties resolve to the lowest index."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    if frames.ndim != 2 or frames.shape[1] != table.dim:
        raise DimensionMismatchError(
            f"frames of dimension {frames.shape[-1] if frames.ndim else '?'} "
            f"against a table of dimension {table.dim}"
        )
    frame_norms = np.linalg.norm(frames, axis=1)
    if np.any(frame_norms == 0):
        bad = int(np.nonzero(frame_norms == 0)[0][0])
        raise ZeroVectorError(f"frame {bad} has zero norm")

    rows = table.vectors.astype(np.float64)
    row_norms = np.linalg.norm(rows, axis=1)
    candidate = row_norms > 0
    if not np.any(candidate):
        raise ZeroVectorError("embedding table has no nonzero rows")
    unit_rows = np.zeros_like(rows)
    unit_rows[candidate] = rows[candidate] / row_norms[candidate, None]
    sims = (frames / frame_norms[:, None]) @ unit_rows.T
    sims[:, ~candidate] = -np.inf
    return np.argmax(sims, axis=1)


def quantize_to_tokens(frames: np.ndarray, table: EmbeddingTable) -> str:
    """Space-joined nearest vocabulary tokens, one per frame, order preserved."""
    idx = nearest_token_indices(frames, table)
    return " ".join(table.tokens[i] for i in idx)


def project_to_tokens(text: str, seed: int, table: EmbeddingTable) -> str:
    """Full projector-noise emulation: acoustic channel, then quantization."""
    raw = surrogate_acoustic_channel(text, seed)
    frames = frames_for_tokens(raw.split(), table.dim)
    return quantize_to_tokens(frames, table)


def default_noise_config(**overrides) -> NoiseConfig:
    return replace(NoiseConfig(), **overrides) if overrides else NoiseConfig()
