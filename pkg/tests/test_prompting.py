"""Tests for prompt templates and deterministic context packing."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragduel.prompting import (
    BudgetTooSmall,
    ContextBudget,
    EmptyPromptField,
    NoContextError,
    build_direct_prompt,
    build_judge_prompt,
    build_rag_prompt,
    load_template,
    template_hashes,
)

CLASS3_QUESTION = (
    "In the context of CANDU Nuclear Power Plant, how long can class 3 power be interrupted for?"
)
CLASS3_TRUTH = "Class III power can be interrupted for up to 5 minutes."

DIRECT_TEMPLATE = (
    "Answer the question below.\n"
    "Please stick to facts and avoid including any information which you're not sure about.\n"
    "\n"
    "Question: {question}"
)

RAG_TEMPLATE = (
    "Answer the question based only on the following context:\n"
    "\n"
    "{context}\n"
    "\n"
    "Please do not use any external information.\n"
    "\n"
    "Please include as much information as possible in your response from the provided context.\n"
    "\n"
    "Question: {question}"
)

CRITERION_TOKENS = ("HELPFULNESS", "GROUNDENESS", "CORRECTNESS", "CONCISENESS", "COHERENCE", "DETAIL")


class TestTemplateResources:
    def test_direct_template_byte_exact(self):
        assert load_template("direct").body == DIRECT_TEMPLATE

    def test_rag_template_byte_exact(self):
        assert load_template("rag").body == RAG_TEMPLATE

    def test_judge_template_contains_quoted_instructions(self):
        body = load_template("judge").body
        assert body.startswith(
            "Please act as an impartial judge and evaluate the quality of the responses "
            "provided by two AI assistants to the user question displayed below."
        )
        for line in (
            'HELPFULNESS: "Is the submission helpful, insightful, and appropriate?"',
            'GROUNDENESS: "Is the submission grounded in facts as compared to the ground truth provided?"',
            'CORRECTNESS: "Is the submission correct, accurate, and factual?"',
            'CONCISENESS: "Is the submission concise and to the point?"',
            'COHERENCE: "Is the submission coherent, well-structured, and organized?"',
            'DETAIL: "Does the submission demonstrate attention to detail?"',
            '"CRITERION\n\nEvaluation: explanation.\n\nScores: A: score, B: score"',
            "sum(scores for each criterion) / number of criteria",
            '"Verdict Evaluation: evaluation"',
            '"Verdict Scores: A: score, B: score"',
            '"Verdict Preference: "',
            "[[A]] if assistant A is better, [[B]] if assistant B is better, and [[C]] for a tie.",
            "Double-check the explanations, scores, and final verdicts have been included.",
        ):
            assert line in body, line
        assert body.index("[User Question]") > body.index("Double-check")

    def test_template_hashes_stable(self):
        hashes = template_hashes()
        assert set(hashes) == {"direct", "rag", "judge"}
        assert all(len(h) == 64 for h in hashes.values())


class TestDirectPrompt:
    def test_paper_question(self):
        prompt = build_direct_prompt(CLASS3_QUESTION)
        assert prompt == DIRECT_TEMPLATE.replace("{question}", CLASS3_QUESTION)

    def test_trims_whitespace(self):
        assert build_direct_prompt("  q  ") == DIRECT_TEMPLATE.replace("{question}", "q")

    def test_empty_question(self):
        with pytest.raises(EmptyPromptField):
            build_direct_prompt("   ")

    @given(st.text(min_size=1, max_size=60).filter(lambda s: s.strip()))
    @settings(max_examples=100, deadline=None)
    def test_injective_in_question(self, question):
        prompt = build_direct_prompt(question)
        assert question.strip() in prompt


class TestRagPrompt:
    def test_single_chunk(self):
        prompt = build_rag_prompt(CLASS3_QUESTION, [CLASS3_TRUTH], ContextBudget(8000))
        assert prompt == RAG_TEMPLATE.replace("{context}", CLASS3_TRUTH).replace(
            "{question}", CLASS3_QUESTION
        )

    def test_chunks_joined_by_blank_line_in_rank_order(self):
        prompt = build_rag_prompt("q", ["first", "second"], ContextBudget(8000))
        assert "first\n\nsecond" in prompt

    def test_drops_lowest_rank_chunk_when_over_budget(self):
        chunks = ["a" * 400, "b" * 400, "c" * 400]
        base_len = len(RAG_TEMPLATE) - len("{context}") - len("{question}") + 1
        budget = ContextBudget(base_len + 400 * 2 + 2 * len("\n\n"))
        prompt = build_rag_prompt("q", chunks, budget)
        assert "a" * 400 in prompt and "b" * 400 in prompt
        assert "c" * 400 not in prompt
        assert len(prompt) <= budget.max_chars

    def test_no_chunks(self):
        with pytest.raises(NoContextError, match="no context retrieved"):
            build_rag_prompt("q", [], ContextBudget(8000))

    def test_budget_too_small_for_one_chunk(self):
        with pytest.raises(BudgetTooSmall):
            build_rag_prompt("q", ["x" * 500], ContextBudget(100))

    def test_result_always_within_budget(self):
        for max_chars in (300, 500, 1000, 4000):
            budget = ContextBudget(max_chars)
            try:
                prompt = build_rag_prompt("q", ["x" * 120] * 30, budget)
            except BudgetTooSmall:
                continue
            assert len(prompt) <= max_chars

    def test_literal_placeholder_in_chunk_not_substituted(self):
        prompt = build_rag_prompt("real question", ["see {question} marker"], ContextBudget(8000))
        assert "see {question} marker" in prompt


class TestJudgePrompt:
    def test_embeds_four_sections(self):
        prompt = build_judge_prompt(CLASS3_QUESTION, CLASS3_TRUTH, "answer one", "answer two")
        assert f"[User Question]\n{CLASS3_QUESTION}" in prompt
        assert f"[Ground Truth]\n{CLASS3_TRUTH}" in prompt
        assert "[Assistant A]\nanswer one" in prompt
        assert "[Assistant B]\nanswer two" in prompt
        for token in CRITERION_TOKENS:
            assert token in prompt

    def test_swapped_answers_exchange_sections_only(self):
        ab = build_judge_prompt("q", "t", "first", "second")
        ba = build_judge_prompt("q", "t", "second", "first")
        assert ab != ba
        assert ab.replace("[Assistant A]\nfirst", "[Assistant A]\nsecond").replace(
            "[Assistant B]\nsecond", "[Assistant B]\nfirst"
        ) == ba

    def test_empty_ground_truth(self):
        with pytest.raises(EmptyPromptField, match="ground_truth"):
            build_judge_prompt("q", "  ", "a", "b")
