"""Prompt rendering for the four batch item variants.

A rendered example is split into an input region (everything the model
conditions on) and a target region (where the training loss applies,
immediately after the assistant header).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import EmptyTargetError, MissingInputError, TemplateCollisionError


class Variant(Enum):
    NOISE = "noise"        # input slot carries a noisy rendition of the target
    ECHO = "echo"          # input slot carries the clean target verbatim
    EMPTY = "empty"        # input slot left empty
    NO_PROMPT = "no_prompt"  # raw target text, no template at all


@dataclass(frozen=True)
class PromptTemplate:
    """Literal token strings wrapped around the input and target slots."""

    header_open: str
    header_close: str
    instruction: str
    eot: str
    assistant_header: str

    def literals(self) -> tuple[str, ...]:
        return tuple(
            s
            for s in (
                self.header_open,
                self.header_close,
                self.instruction,
                self.eot,
                self.assistant_header,
            )
            if s
        )


DEFAULT_TEMPLATE = PromptTemplate(
    header_open="<|start_header_id|>user",
    header_close="<|end_header_id|>",
    instruction="Transcribe speech to text. Speech:",
    eot="<|eot_id|>",
    assistant_header="<|start_header_id|>assistant<|end_header_id|>",
)

# Short markers keep sequences cheap for the character-level trainer while
# preserving the same input/target structure.
COMPACT_TEMPLATE = PromptTemplate(
    header_open="",
    header_close="",
    instruction="N:",
    eot=";",
    assistant_header="T:",
)


def _check_collisions(slot: str, template: PromptTemplate, what: str) -> None:
    for literal in template.literals():
        if literal in slot:
            raise TemplateCollisionError(
                f"{what} contains template token {literal!r}; rendering would be ambiguous"
            )


def render(
    i: str,
    t: str,
    variant: Variant,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> tuple[str, str]:
    """Render one training example as (input_region, target_region)."""
    if not t:
        raise EmptyTargetError("target transcript is empty")
    if variant is Variant.NO_PROMPT:
        return "", t

    if variant is Variant.NOISE:
        if not i:
            raise MissingInputError("NOISE variant requires a non-empty input slot")
        slot = i
    elif variant is Variant.ECHO:
        slot = t
    else:  # EMPTY
        slot = ""

    _check_collisions(slot, template, "input slot")
    _check_collisions(t, template, "target")
    input_region = (
        template.header_open
        + template.header_close
        + template.instruction
        + slot
        + template.eot
        + template.assistant_header
    )
    return input_region, t


def parse(
    input_region: str,
    target_region: str,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> tuple[str, str]:
    """Invert `render` for templated variants, recovering (slot, target)."""
    prefix = template.header_open + template.header_close + template.instruction
    suffix = template.eot + template.assistant_header
    if not input_region.startswith(prefix) or not input_region.endswith(suffix):
        raise TemplateCollisionError("input region does not match the template structure")
    slot = input_region[len(prefix) : len(input_region) - len(suffix)]
    return slot, target_region
