"""Judge-report parsing, verdict arithmetic, debiasing, and human labels.

The judge model is instructed to emit six criterion blocks followed by a
verdict section.  ``parse_judge_report`` enforces that grammar strictly on
structure (every criterion exactly once, scores in range, a recognizable
preference token) while tolerating the usual LLM drift: case, arbitrary
whitespace, and optional markdown bold around headers.
"""

from __future__ import annotations

import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .textutil import tokenize

CRITERIA = ("HELPFULNESS", "GROUNDENESS", "CORRECTNESS", "CONCISENESS", "COHERENCE", "DETAIL")

PREFERENCES = ("A", "B", "Tie")

CORRECTNESS_LABELS = ("correct", "partial", "incorrect")

# The judge may round verdict means to integers; tolerate that much drift.
VERDICT_MEAN_TOLERANCE = 0.51

# Recomputed means closer than this admit any preference.
PREFERENCE_TIE_BAND = 0.5


class JudgeParseError(ValueError):
    """Judge output does not satisfy the report grammar."""


class MissingCriterionError(JudgeParseError):
    """A required criterion block is absent."""


class DuplicateCriterionError(JudgeParseError):
    """A criterion block appears more than once."""


class ScoreOutOfRangeError(JudgeParseError):
    """A criterion score falls outside [0, 100]."""


class MissingVerdictError(JudgeParseError):
    """The verdict evaluation or verdict scores lines are absent."""


class PreferenceTokenError(JudgeParseError):
    """The [[A]]/[[B]]/[[C]] preference token is absent or unrecognized."""


class UnknownRecordError(KeyError):
    """A human label references a record id that does not exist."""


@dataclass(frozen=True)
class CriterionScore:
    criterion: str
    evaluation: str
    score_a: float
    score_b: float


@dataclass(frozen=True)
class JudgeReport:
    criteria: tuple[CriterionScore, ...]
    verdict_evaluation: str
    verdict_score_a: float
    verdict_score_b: float
    preference: str
    raw_text: str


@dataclass(frozen=True)
class HumanLabel:
    question_id: str
    correctness_a: str
    correctness_b: str
    preferred: str
    notes: str = ""

    def __post_init__(self) -> None:
        for label_field in (self.correctness_a, self.correctness_b):
            if label_field not in CORRECTNESS_LABELS:
                raise ValueError(f"correctness must be one of {CORRECTNESS_LABELS}, got {label_field!r}")
        if self.preferred not in PREFERENCES:
            raise ValueError(f"preferred must be one of {PREFERENCES}, got {self.preferred!r}")


# "GROUNDENESS" is matched as the prompt spells it; the corrected spelling
# is accepted as an alias and canonicalized.
_HEADER_RE = re.compile(
    r"^[ \t]*(?:\*\*)?[ \t]*"
    r"(HELPFULNESS|GROUNDEDNESS|GROUNDENESS|CORRECTNESS|CONCISENESS|COHERENCE|DETAIL)"
    r"[ \t]*:?[ \t]*(?:\*\*)?[ \t]*$",
    re.IGNORECASE | re.MULTILINE,
)
_EVALUATION_RE = re.compile(
    r"(?:\*\*)?Evaluation[ \t]*:?(?:\*\*)?[ \t]*(.*?)\s*(?:\*\*)?Scores[ \t]*:",
    re.IGNORECASE | re.DOTALL,
)
_SCORES_RE = re.compile(
    r"Scores[ \t]*:(?:\*\*)?\s*A[ \t]*:[ \t]*(-?\d+)[ \t]*,\s*B[ \t]*:[ \t]*(-?\d+)",
    re.IGNORECASE,
)
_VERDICT_EVAL_RE = re.compile(
    r"^[ \t]*(?:\*\*)?[ \t]*Verdict Evaluation[ \t]*:(?:\*\*)?[ \t]*",
    re.IGNORECASE | re.MULTILINE,
)
_VERDICT_SCORES_RE = re.compile(
    r"^[ \t]*(?:\*\*)?[ \t]*Verdict Scores[ \t]*:(?:\*\*)?\s*"
    r"A[ \t]*:[ \t]*(-?\d+(?:\.\d+)?)[ \t]*,\s*B[ \t]*:[ \t]*(-?\d+(?:\.\d+)?)",
    re.IGNORECASE | re.MULTILINE,
)
_PREFERENCE_RE = re.compile(
    r"^[ \t]*(?:\*\*)?[ \t]*Verdict Preference[ \t]*:(?:\*\*)?\s*\[\[([ABCabc])\]\]",
    re.IGNORECASE | re.MULTILINE,
)

_PREFERENCE_BY_TOKEN = {"A": "A", "B": "B", "C": "Tie"}
_TOKEN_BY_PREFERENCE = {"A": "A", "B": "B", "Tie": "C"}


def _canonical_criterion(header: str) -> str:
    name = header.upper()
    return "GROUNDENESS" if name == "GROUNDEDNESS" else name


def _parse_criterion_score(raw: str) -> int:
    score = int(raw)
    if not (0 <= score <= 100):
        raise ScoreOutOfRangeError(f"score out of range: {score}")
    return score


def parse_judge_report(text: str) -> JudgeReport:
    """Parse a judge reply into a structured report.

    Raises a distinct ``JudgeParseError`` subclass for each grammar
    violation: missing or duplicate criterion, score out of [0, 100],
    missing verdict lines, or a bad preference token.
    """
    verdict_eval_match = _VERDICT_EVAL_RE.search(text)
    if verdict_eval_match is None:
        raise MissingVerdictError("missing verdict lines: no 'Verdict Evaluation:' found")
    criteria_region = text[: verdict_eval_match.start()]

    headers = list(_HEADER_RE.finditer(criteria_region))
    seen: dict[str, CriterionScore] = {}
    for index, header in enumerate(headers):
        name = _canonical_criterion(header.group(1))
        if name in seen:
            raise DuplicateCriterionError(f"duplicate criterion {name}")
        block_end = headers[index + 1].start() if index + 1 < len(headers) else len(criteria_region)
        block = criteria_region[header.end() : block_end]
        eval_match = _EVALUATION_RE.search(block)
        if eval_match is None:
            raise JudgeParseError(f"criterion {name}: no 'Evaluation:' / 'Scores:' pair found")
        scores_match = _SCORES_RE.search(block, eval_match.start(1))
        if scores_match is None:
            raise JudgeParseError(f"criterion {name}: malformed 'Scores: A: n, B: m' line")
        seen[name] = CriterionScore(
            criterion=name,
            evaluation=eval_match.group(1).strip(),
            score_a=_parse_criterion_score(scores_match.group(1)),
            score_b=_parse_criterion_score(scores_match.group(2)),
        )

    for name in CRITERIA:
        if name not in seen:
            raise MissingCriterionError(f"missing criterion {name}")

    verdict_scores_match = _VERDICT_SCORES_RE.search(text, verdict_eval_match.end())
    if verdict_scores_match is None:
        raise MissingVerdictError("missing verdict lines: no 'Verdict Scores: A: x, B: y' found")
    verdict_evaluation = text[verdict_eval_match.end() : verdict_scores_match.start()].strip()

    preference_match = _PREFERENCE_RE.search(text, verdict_scores_match.end())
    if preference_match is None:
        raise PreferenceTokenError("missing or unrecognized preference token (expected [[A]], [[B]] or [[C]])")

    return JudgeReport(
        criteria=tuple(seen.values()),
        verdict_evaluation=verdict_evaluation,
        verdict_score_a=float(verdict_scores_match.group(1)),
        verdict_score_b=float(verdict_scores_match.group(2)),
        preference=_PREFERENCE_BY_TOKEN[preference_match.group(1).upper()],
        raw_text=text,
    )


def _fmt_score(value: float) -> str:
    number = float(value)
    return str(int(number)) if number.is_integer() else repr(number)


def render_judge_report(report: JudgeReport) -> str:
    """Emit a report in the exact output format the judge is instructed to use."""
    blocks = [
        f"{c.criterion}\n\nEvaluation: {c.evaluation}\n\n"
        f"Scores: A: {_fmt_score(c.score_a)}, B: {_fmt_score(c.score_b)}"
        for c in report.criteria
    ]
    blocks.append(f"Verdict Evaluation: {report.verdict_evaluation}")
    blocks.append(
        f"Verdict Scores: A: {_fmt_score(report.verdict_score_a)}, "
        f"B: {_fmt_score(report.verdict_score_b)}"
    )
    blocks.append(f"Verdict Preference: [[{_TOKEN_BY_PREFERENCE[report.preference]}]]")
    return "\n\n".join(blocks)


def compute_verdict_means(criteria: tuple[CriterionScore, ...] | list[CriterionScore]) -> tuple[float, float]:
    """Arithmetic mean of the six criterion scores, per assistant."""
    if len(criteria) != len(CRITERIA):
        raise ValueError(f"expected exactly {len(CRITERIA)} criteria, got {len(criteria)}")
    mean_a = sum(c.score_a for c in criteria) / len(criteria)
    mean_b = sum(c.score_b for c in criteria) / len(criteria)
    return mean_a, mean_b


def _preference_from_means(mean_a: float, mean_b: float) -> str:
    delta = mean_a - mean_b
    if delta > PREFERENCE_TIE_BAND:
        return "A"
    if delta < -PREFERENCE_TIE_BAND:
        return "B"
    return "Tie"


def validate_report(report: JudgeReport) -> list[str]:
    """Cross-check the judge's own arithmetic; returns warnings, never raises."""
    warnings = []
    mean_a, mean_b = compute_verdict_means(report.criteria)
    if abs(report.verdict_score_a - mean_a) > VERDICT_MEAN_TOLERANCE:
        warnings.append(
            f"verdict mean mismatch for A: reported {report.verdict_score_a}, recomputed {mean_a:.2f}"
        )
    if abs(report.verdict_score_b - mean_b) > VERDICT_MEAN_TOLERANCE:
        warnings.append(
            f"verdict mean mismatch for B: reported {report.verdict_score_b}, recomputed {mean_b:.2f}"
        )
    if abs(mean_a - mean_b) > PREFERENCE_TIE_BAND:
        strict_winner = "A" if mean_a > mean_b else "B"
        if report.preference != strict_winner:
            warnings.append(
                f"preference contradicts means: {report.preference} despite "
                f"recomputed {mean_a:.2f} vs {mean_b:.2f}"
            )
    return warnings


def debias_swap(report_ab: JudgeReport, report_ba: JudgeReport) -> JudgeReport:
    """Merge a forward report with a swapped-position report.

    ``report_ba`` must come from a judge call where the two answers were
    presented in exchanged slots, so its B column scores the original A.
    Per criterion the final scores average the two views of each answer;
    the preference is recomputed from the merged means with the tie band.
    """
    by_name_ba = {c.criterion: c for c in report_ba.criteria}
    if len(report_ab.criteria) != len(CRITERIA) or set(by_name_ba) != set(
        c.criterion for c in report_ab.criteria
    ):
        raise ValueError("debias_swap requires two reports with the same six criteria")

    merged = tuple(
        CriterionScore(
            criterion=c.criterion,
            evaluation=c.evaluation,
            score_a=(c.score_a + by_name_ba[c.criterion].score_b) / 2,
            score_b=(c.score_b + by_name_ba[c.criterion].score_a) / 2,
        )
        for c in report_ab.criteria
    )
    mean_a, mean_b = compute_verdict_means(merged)
    report = JudgeReport(
        criteria=merged,
        verdict_evaluation=report_ab.verdict_evaluation,
        verdict_score_a=mean_a,
        verdict_score_b=mean_b,
        preference=_preference_from_means(mean_a, mean_b),
        raw_text="",
    )
    return replace(report, raw_text=render_judge_report(report))


def token_f1(answer: str, ground_truth: str) -> float:
    """F1 overlap of lowercased alphanumeric token multisets."""
    answer_tokens = Counter(tokenize(answer))
    truth_tokens = Counter(tokenize(ground_truth))
    if not answer_tokens and not truth_tokens:
        return 1.0
    common = sum((answer_tokens & truth_tokens).values())
    if common == 0:
        return 0.0
    precision = common / sum(answer_tokens.values())
    recall = common / sum(truth_tokens.values())
    return 2 * precision * recall / (precision + recall)


def report_to_json(report: JudgeReport) -> dict:
    """Parsed-report JSON shape used for persistence."""
    return {
        "criteria": [
            {
                "criterion": c.criterion,
                "score_a": c.score_a,
                "score_b": c.score_b,
                "evaluation": c.evaluation,
            }
            for c in report.criteria
        ],
        "verdict": {
            "a": report.verdict_score_a,
            "b": report.verdict_score_b,
            "preference": report.preference,
            "evaluation": report.verdict_evaluation,
        },
    }


def report_from_json(data: dict, raw_text: str = "") -> JudgeReport:
    return JudgeReport(
        criteria=tuple(
            CriterionScore(
                criterion=c["criterion"],
                evaluation=c["evaluation"],
                score_a=c["score_a"],
                score_b=c["score_b"],
            )
            for c in data["criteria"]
        ),
        verdict_evaluation=data["verdict"]["evaluation"],
        verdict_score_a=data["verdict"]["a"],
        verdict_score_b=data["verdict"]["b"],
        preference=data["verdict"]["preference"],
        raw_text=raw_text,
    )


@dataclass
class LabelStore:
    """Append-only JSONL store of human labels; the latest label per record wins.

    Every recording is kept, so the file doubles as the audit log.  Writes
    are serialized with a lock; reads take a snapshot.
    """

    path: Path
    known_ids: frozenset[str]
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, label: HumanLabel) -> dict:
        if label.question_id not in self.known_ids:
            raise UnknownRecordError(f"unknown record id {label.question_id!r}")
        row = {
            "recorded_at": datetime.now(timezone.utc).isoformat(),
            "question_id": label.question_id,
            "correctness_a": label.correctness_a,
            "correctness_b": label.correctness_b,
            "preferred": label.preferred,
            "notes": label.notes,
        }
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
        return row

    def history(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]

    def latest(self) -> dict[str, HumanLabel]:
        labels: dict[str, HumanLabel] = {}
        for row in self.history():
            labels[row["question_id"]] = HumanLabel(
                question_id=row["question_id"],
                correctness_a=row["correctness_a"],
                correctness_b=row["correctness_b"],
                preferred=row["preferred"],
                notes=row.get("notes", ""),
            )
        return labels
