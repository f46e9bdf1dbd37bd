"""Answer grading: rule-based extraction first, then an LLM judge or an external command."""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
from dataclasses import dataclass
from typing import Sequence

from thinkswitch.answers import as_number, extract_boxed, extract_option_letter, normalize_letter, normalize_math
from thinkswitch.core import Query
from thinkswitch.gateway import JUDGE_MAX_TOKENS, CompletionRequest, GatewayError
from thinkswitch.prompts import PromptSet, load_prompt_set, render_llm_judge
from thinkswitch.strategies.judge import parse_correct_verdict
from thinkswitch.strategies.runners import Completer

logger = logging.getLogger(__name__)


def _math_reference(reference: str) -> str:
    boxed = extract_boxed(reference)
    return normalize_math(boxed if boxed is not None else reference)


def grade_rule_based(q: Query, response_text: str) -> bool | None:
    """True/False when the answer can be decided by extraction; None means ask a judge."""
    if q.domain == "math":
        boxed = extract_boxed(response_text)
        if boxed is None:
            return None
        pred = normalize_math(boxed)
        if not pred:
            return None
        ref = _math_reference(q.reference)
        if pred == ref:
            return True
        a, b = as_number(pred), as_number(ref)
        if a is not None and b is not None:
            return a == b
        return None
    if q.domain == "science":
        ref = normalize_letter(q.reference)
        letter = extract_option_letter(response_text)
        if ref is None or letter is None:
            return None
        return letter == ref
    return None


def grade_llm_judge(
    q: Query,
    reference: str,
    response_text: str,
    judge: Completer,
    prompts: PromptSet | None = None,
) -> bool:
    """Ask ``judge`` for a ``{"correct": bool}`` verdict; anything unparseable counts as incorrect.

    Gateway errors propagate so the caller can mark the record failed.
    """
    prompts = prompts or load_prompt_set()
    system, user = render_llm_judge(q, reference, response_text, prompts)
    trace = judge.complete(
        CompletionRequest(
            user_message=user,
            mode=judge.profile.no_think_mode,
            system_prompt=system,
            max_output_tokens=JUDGE_MAX_TOKENS,
            temperature=0.0,
            query_id=q.id,
        )
    )
    verdict = parse_correct_verdict(trace.answer_text)
    if verdict is None:
        verdict = parse_correct_verdict(trace.thinking_text + trace.answer_text)
    return bool(verdict)


class ExternalGraderError(RuntimeError):
    """The grader command could not be started."""


def grade_external(
    q: Query,
    response_text: str,
    command: str | Sequence[str],
    timeout: float = 60.0,
) -> bool:
    """Run ``command`` with a JSON payload on stdin; exit status 0 means correct."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    payload = json.dumps(
        {
            "id": q.id,
            "domain": q.domain,
            "problem": q.problem,
            "reference": q.reference,
            "grader_payload": q.grader_payload,
            "response": response_text,
        }
    )
    try:
        proc = subprocess.run(argv, input=payload, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        logger.warning("external grader timed out after %ss on %s", timeout, q.id)
        return False
    except OSError as exc:
        raise ExternalGraderError(f"cannot run grader {argv[0] if argv else command!r}: {exc}") from exc
    return proc.returncode == 0


@dataclass(frozen=True)
class Grade:
    correct: bool
    source: str
    failed: bool = False
    error: str | None = None


@dataclass
class Grader:
    """Grading cascade.

    Code problems go to the external command when one is set. Otherwise the
    rule-based result stands when it is decisive (for math only a match is
    decisive); the judge handles the rest and, without a judge, they count as
    incorrect.
    """

    judge: Completer | None = None
    external_command: str | Sequence[str] | None = None
    external_timeout: float = 60.0
    prompts: PromptSet | None = None

    def grade(self, q: Query, response_text: str) -> Grade:
        if q.domain == "code" and self.external_command is not None:
            try:
                return Grade(grade_external(q, response_text, self.external_command, self.external_timeout), "external")
            except ExternalGraderError as exc:
                return Grade(False, "external", failed=True, error=str(exc))
        verdict = grade_rule_based(q, response_text)
        decisive = verdict is True or (verdict is False and q.domain != "math")
        if decisive:
            return Grade(bool(verdict), "rule")
        if self.judge is None:
            return Grade(False, "rule")
        try:
            return Grade(grade_llm_judge(q, q.reference, response_text, self.judge, self.prompts), "judge")
        except GatewayError as exc:
            return Grade(False, "judge", failed=True, error=f"{type(exc).__name__}: {exc}")

    __call__ = grade
