"""Four-view batch composition with seeded determinism.

Every slot of a batch independently draws its view from the categorical
distribution (sigma_a, sigma_ta, sigma_t, tau) and samples an utterance
with replacement from the owning dataset, so any mixture is realizable
at any batch size and batches can be composed out of order or in
parallel.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import DatasetKind, DomainDataset, MixtureWeights, Utterance
from .errors import (
    ConfigError,
    EmptyDatasetError,
    IoError,
    MalformedRecordError,
    WeightViewMismatchError,
)
from .noising import EmbeddingTable, NoiseConfig, project_to_tokens, quantize_to_tokens, text_noise
from .prompting import DEFAULT_TEMPLATE, PromptTemplate, Variant, render
from .rng import derive_seed, make_rng


class View(Enum):
    AUDIO = "AUDIO"
    PROJ_NOISE = "PROJ_NOISE"
    TEXT_NOISE_SRC = "TEXT_NOISE_SRC"
    TEXT_NOISE_TGT = "TEXT_NOISE_TGT"


class ForgettingRiskWarning(UserWarning):
    """Raised when a mixture drops the paired-audio view entirely."""


@dataclass(frozen=True)
class BatchItem:
    view: View
    utterance_id: str
    input_region: str
    target_region: str


_VIEW_ORDER = (View.AUDIO, View.PROJ_NOISE, View.TEXT_NOISE_SRC, View.TEXT_NOISE_TGT)


def _pick_view(weights: MixtureWeights, r: float) -> View:
    acc = 0.0
    for view, w in zip(_VIEW_ORDER, weights.as_tuple()):
        acc += w
        if r < acc:
            return view
    return _VIEW_ORDER[-1]


def compose_batch(
    src: DomainDataset,
    tgt: DomainDataset,
    weights: MixtureWeights,
    batch_size: int,
    batch_index: int,
    seed: int,
    noise_cfg: NoiseConfig,
    table: EmbeddingTable | None = None,
    *,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    text_variant: Variant = Variant.NOISE,
    frames: Mapping[str, np.ndarray] | None = None,
) -> list[BatchItem]:
    """Compose one batch; pure in (seed, batch_index) and all inputs.

    `text_variant` swaps the item type of the two naive-noise views
    (NOISE/ECHO/EMPTY/NO_PROMPT) for item-type ablations; the audio and
    projector-noise views always render as NOISE. When `frames` supplies
    projector output vectors for an utterance id, the AUDIO view
    quantizes them instead of using the stored surrogate string.
    """
    if src.kind is not DatasetKind.SOURCE_PAIRED:
        raise WeightViewMismatchError(f"{src.name} is not a paired source dataset")
    if tgt.kind is not DatasetKind.TARGET_TEXT_ONLY:
        raise WeightViewMismatchError(f"{tgt.name} is not a text-only target dataset")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    if all(w > 0 for w in weights.as_tuple()) and batch_size < 4:
        raise ConfigError("batch_size must be at least 4 when all four views are active")
    if weights.sigma_a + weights.sigma_ta + weights.sigma_t > 0 and len(src) == 0:
        raise EmptyDatasetError(f"source dataset {src.name} is empty")
    if weights.tau > 0 and len(tgt) == 0:
        raise EmptyDatasetError(f"target dataset {tgt.name} is empty")
    if weights.sigma_ta > 0 and table is None:
        raise WeightViewMismatchError(
            "sigma_ta > 0 requires an embedding table for projector-noise emulation"
        )
    if weights.sigma_a == 0.0:
        warnings.warn(
            "mixture has sigma_a = 0: no paired-audio exposure, expect severe "
            "forgetting of the acoustic alignment",
            ForgettingRiskWarning,
            stacklevel=2,
        )

    rng = make_rng(seed, "batch", batch_index)
    items: list[BatchItem] = []
    for slot in range(batch_size):
        view = _pick_view(weights, rng.random())
        dataset = tgt if view is View.TEXT_NOISE_TGT else src
        utt = dataset.utterances[rng.randrange(len(dataset))]
        item_key = f"{batch_index}:{slot}:{utt.id}"
        items.append(
            _make_item(view, utt, item_key, seed, noise_cfg, table, template, text_variant, frames)
        )
    return items


def _make_item(
    view: View,
    utt: Utterance,
    item_key: str,
    seed: int,
    noise_cfg: NoiseConfig,
    table: EmbeddingTable | None,
    template: PromptTemplate,
    text_variant: Variant,
    frames: Mapping[str, np.ndarray] | None,
) -> BatchItem:
    if view is View.AUDIO:
        if frames is not None and utt.id in frames:
            if table is None:
                raise WeightViewMismatchError("frame quantization requires an embedding table")
            slot = quantize_to_tokens(frames[utt.id], table)
        elif utt.surrogate_audio:
            slot = utt.surrogate_audio
        else:
            raise WeightViewMismatchError(
                f"utterance {utt.id!r} has no audio channel for the AUDIO view"
            )
        variant = Variant.NOISE
    elif view is View.PROJ_NOISE:
        assert table is not None
        slot = project_to_tokens(utt.text, derive_seed(seed, "channel", item_key), table)
        variant = Variant.NOISE
    else:
        variant = text_variant
        if variant is Variant.NOISE:
            slot = text_noise(utt.text, noise_cfg, item_key)
        else:
            slot = ""
    input_region, target_region = render(slot, utt.text, variant, template)
    return BatchItem(
        view=view,
        utterance_id=utt.id,
        input_region=input_region,
        target_region=target_region,
    )


def export_manifest(batches: Sequence[Sequence[BatchItem]], path: str | Path) -> None:
    """Write composed batches as JSON lines for any external trainer."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for batch_index, batch in enumerate(batches):
                for item in batch:
                    fh.write(
                        json.dumps(
                            {
                                "batch_index": batch_index,
                                "view": item.view.value,
                                "utterance_id": item.utterance_id,
                                "input_region": item.input_region,
                                "target_region": item.target_region,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
    except OSError as exc:
        raise IoError(f"cannot write batch manifest {path}: {exc}") from exc


def load_batch_manifest(path: str | Path) -> list[list[BatchItem]]:
    """Read back a manifest written by `export_manifest`, grouped by batch."""
    path = Path(path)
    batches: list[list[BatchItem]] = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read batch manifest {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            index = int(record["batch_index"])
            item = BatchItem(
                view=View(record["view"]),
                utterance_id=record["utterance_id"],
                input_region=record["input_region"],
                target_region=record["target_region"],
            )
        except (KeyError, ValueError) as exc:
            raise MalformedRecordError(line_no, f"bad batch record ({exc})") from exc
        while len(batches) <= index:
            batches.append([])
        batches[index].append(item)
    return batches
