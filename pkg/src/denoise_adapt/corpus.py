"""Dataset ingestion and the size-proportional mixing heuristic.

Manifests are UTF-8 JSON-lines files, one flat object per utterance
with fields ``id``, ``text``, optional ``surrogate_audio``, ``domain``.
Source (paired) datasets must carry ``surrogate_audio`` on every
record; target training sets must not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateIdError,
    InvalidCountError,
    InvalidTauError,
    MalformedRecordError,
    MissingAudioError,
    UnexpectedAudioError,
)

_RECORD_FIELDS = ("id", "text", "surrogate_audio", "domain")


class DatasetKind(Enum):
    SOURCE_PAIRED = "source"
    TARGET_TEXT_ONLY = "target"


class Split(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class Utterance:
    """One transcript, optionally paired with a pseudo-acoustic token string."""

    id: str
    text: str
    domain: str
    surrogate_audio: str | None = None


@dataclass(frozen=True)
class MixtureWeights:
    """Batch shares for the four training views; must lie on the simplex.

    ``sigma_a``: source paired-audio pairs, ``sigma_ta``: source
    projector-noise pairs, ``sigma_t``: source naive-noise pairs,
    ``tau``: target naive-noise pairs (the adaptation knob).
    """

    sigma_a: float
    sigma_ta: float
    sigma_t: float
    tau: float

    def __post_init__(self) -> None:
        parts = self.as_tuple()
        if any(w < 0 for w in parts):
            raise InvalidTauError(f"mixture weights must be non-negative, got {parts}")
        if abs(sum(parts) - 1.0) > 1e-12:
            raise InvalidTauError(f"mixture weights must sum to 1, got {sum(parts)!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.sigma_a, self.sigma_ta, self.sigma_t, self.tau)


@dataclass(frozen=True)
class DomainDataset:
    name: str
    kind: DatasetKind
    utterances: tuple[Utterance, ...]
    split: Split = Split.TRAIN

    def __post_init__(self) -> None:
        if self.kind is DatasetKind.SOURCE_PAIRED:
            for utt in self.utterances:
                if not utt.surrogate_audio:
                    raise MissingAudioError(utt.id)
        elif self.split is Split.TRAIN:
            for utt in self.utterances:
                if utt.surrogate_audio:
                    raise UnexpectedAudioError(utt.id)

    def __len__(self) -> int:
        return len(self.utterances)


def _parse_record(line: str, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecordError(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise MalformedRecordError(line_no, "record is not an object")
    for key in ("id", "text", "domain"):
        if key not in record:
            raise MalformedRecordError(line_no, f"missing field {key!r}")
    unknown = set(record) - set(_RECORD_FIELDS)
    if unknown:
        raise MalformedRecordError(line_no, f"unknown fields {sorted(unknown)}")
    for key, value in record.items():
        if not isinstance(value, str):
            raise MalformedRecordError(line_no, f"field {key!r} is not a string")
    if not record["id"]:
        raise MalformedRecordError(line_no, "empty id")
    if not record["text"].strip():
        raise MalformedRecordError(line_no, "empty text")
    return record


def load_manifest(
    path: str | Path,
    kind: DatasetKind,
    split: Split = Split.TRAIN,
    name: str | None = None,
) -> DomainDataset:
    """Load a manifest file, preserving file order and validating invariants."""
    path = Path(path)
    utterances: list[Utterance] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = _parse_record(line, line_no)
            if record["id"] in seen:
                raise DuplicateIdError(record["id"])
            seen.add(record["id"])
            utterances.append(
                Utterance(
                    id=record["id"],
                    text=record["text"],
                    domain=record["domain"],
                    surrogate_audio=record.get("surrogate_audio"),
                )
            )
    return DomainDataset(
        name=name or path.stem,
        kind=kind,
        utterances=tuple(utterances),
        split=split,
    )


def utterance_to_line(utt: Utterance) -> str:
    record: dict[str, str] = {"id": utt.id, "text": utt.text}
    if utt.surrogate_audio is not None:
        record["surrogate_audio"] = utt.surrogate_audio
    record["domain"] = utt.domain
    return json.dumps(record, ensure_ascii=False)


def save_manifest(dataset: DomainDataset, path: str | Path) -> None:
    """Write the dataset back out in canonical manifest form."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for utt in dataset.utterances:
            fh.write(utterance_to_line(utt) + "\n")


def compute_tau(n_src: int, n_tgt: int) -> float:
    """Adaptation share from dataset sizes: n_tgt / (n_tgt + n_src).

    Reporting rounds to two decimals; downstream consumers get the
    unrounded value.
    """
    if n_src < 1:
        raise InvalidCountError(f"need at least one source training example, got {n_src}")
    if n_tgt < 0:
        raise InvalidCountError(f"negative target count {n_tgt}")
    return n_tgt / (n_tgt + n_src)


def derive_mixture(tau: float) -> MixtureWeights:
    """Spread the non-adaptation mass equally over the three source views."""
    if not 0.0 <= tau < 1.0:
        raise InvalidTauError(
            f"tau must lie in [0, 1), got {tau!r}; tau >= 1 would drop all "
            "source-domain coverage and forget the acoustic alignment"
        )
    share = (1.0 - tau) / 3.0
    return MixtureWeights(sigma_a=share, sigma_ta=share, sigma_t=share, tau=tau)
