"""Prompt construction for the direct, RAG, and judge calls.

Templates live as versioned text resources under ``ragduel/templates`` so
their wording stays byte-exact and auditable; building a prompt is plain
placeholder substitution plus deterministic context packing.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

TEMPLATES_VERSION = "1"

CHUNK_SEPARATOR = "\n\n"

_PLACEHOLDERS = {
    "direct": ("{question}",),
    "rag": ("{context}", "{question}"),
    "judge": ("{question}", "{ground_truth}", "{answer_a}", "{answer_b}"),
}


class PromptError(ValueError):
    """Base class for prompt construction failures."""


class EmptyPromptField(PromptError):
    """A required prompt field is empty after trimming."""


class NoContextError(PromptError):
    """build_rag_prompt was called with zero retrieved chunks."""


class BudgetTooSmall(PromptError):
    """The context budget cannot accommodate even one chunk."""


@dataclass(frozen=True)
class PromptTemplate:
    """A named template body whose placeholders each occur exactly once."""

    template_id: str
    body: str

    def __post_init__(self) -> None:
        for placeholder in _PLACEHOLDERS[self.template_id]:
            count = self.body.count(placeholder)
            if count != 1:
                raise PromptError(
                    f"template {self.template_id!r} must contain {placeholder} "
                    f"exactly once, found {count}"
                )


@dataclass(frozen=True)
class ContextBudget:
    """Upper bound on rendered RAG prompt length, in code points."""

    max_chars: int = 8000

    def __post_init__(self) -> None:
        if self.max_chars <= 0:
            raise PromptError(f"max_chars must be positive, got {self.max_chars}")


@lru_cache(maxsize=None)
def load_template(template_id: str) -> PromptTemplate:
    if template_id not in _PLACEHOLDERS:
        raise PromptError(f"unknown template id {template_id!r}")
    body = (
        resources.files("ragduel").joinpath(f"templates/{template_id}.txt").read_text("utf-8")
    )
    return PromptTemplate(template_id=template_id, body=body)


def template_hashes() -> dict[str, str]:
    """SHA-256 of each template body, recorded in run manifests."""
    return {
        tid: hashlib.sha256(load_template(tid).body.encode("utf-8")).hexdigest()
        for tid in _PLACEHOLDERS
    }


def _require(value: str, field_name: str) -> str:
    trimmed = value.strip()
    if not trimmed:
        raise EmptyPromptField(f"empty {field_name}")
    return trimmed


def _instantiate(body: str, values: dict[str, str]) -> str:
    # Single pass over the template body; substituted values are never
    # rescanned, so field text containing a literal placeholder is safe.
    pattern = re.compile("|".join(re.escape("{" + name + "}") for name in values))
    return pattern.sub(lambda m: values[m.group(0)[1:-1]], body)


def build_direct_prompt(question: str) -> str:
    """Instantiate the direct-answer template with the trimmed question."""
    return _instantiate(load_template("direct").body, {"question": _require(question, "question")})


def build_rag_prompt(question: str, chunk_texts: list[str], budget: ContextBudget) -> str:
    """Instantiate the RAG template with retrieved chunks packed in rank order.

    Chunks are joined by one blank line.  If the rendered prompt exceeds
    ``budget.max_chars``, whole chunks are dropped from the lowest rank
    (end of list) upward until it fits.
    """
    question = _require(question, "question")
    if not chunk_texts:
        raise NoContextError("no context retrieved")

    body = load_template("rag").body
    for keep in range(len(chunk_texts), 0, -1):
        context = CHUNK_SEPARATOR.join(chunk_texts[:keep])
        prompt = _instantiate(body, {"context": context, "question": question})
        if len(prompt) <= budget.max_chars:
            return prompt
    raise BudgetTooSmall(
        f"context budget of {budget.max_chars} chars cannot fit even one chunk"
    )


def build_judge_prompt(question: str, ground_truth: str, answer_a: str, answer_b: str) -> str:
    """Instantiate the judge template with the four labeled sections."""
    return _instantiate(
        load_template("judge").body,
        {
            "question": _require(question, "question"),
            "ground_truth": _require(ground_truth, "ground_truth"),
            "answer_a": _require(answer_a, "answer_a"),
            "answer_b": _require(answer_b, "answer_b"),
        },
    )
