"""Final-answer extraction and normalization."""

from __future__ import annotations

import re
from fractions import Fraction

_BOX_COMMANDS = ("\\boxed", "\\fbox")


def extract_boxed(text: str) -> str | None:
    """Content of the last brace-balanced ``\\boxed{...}`` in ``text``."""
    best = -1
    for cmd in _BOX_COMMANDS:
        best = max(best, text.rfind(cmd + "{"), text.rfind(cmd + " {"))
    if best < 0:
        return None
    open_at = text.index("{", best)
    depth = 0
    for i in range(open_at, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[open_at + 1 : i]
    return None


_SPACING = re.compile(r"\\[,;:! ]|\\left|\\right|\$")
_THOUSANDS = re.compile(r"^-?\d{1,3}(,\d{3})+(\.\d+)?$")


def normalize_math(s: str) -> str:
    s = s.replace("−", "-").replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac")
    s = _SPACING.sub("", s)
    s = re.sub(r"\s+", "", s)
    s = s.rstrip(".")
    while len(s) >= 2 and s[0] == "{" and s[-1] == "}" and extract_boxed("\\boxed" + s) == s[1:-1]:
        s = s[1:-1]
    if s.startswith("+"):
        s = s[1:]
    if s in ("-0", "-0.0"):
        s = s[1:]
    return s


_DECIMAL = r"\d+(?:\.\d*)?|\.\d+"
_FRAC = re.compile(r"(-?)\\frac(?:\{(\d+)\}\{(\d+)\}|(\d)(\d))")
_SLASH = re.compile(rf"(-?)({_DECIMAL})/({_DECIMAL})")


def as_number(s: str) -> Fraction | None:
    """Exact value of a plain number, ``a/b`` or ``\\frac{a}{b}``; None for anything else."""
    if _THOUSANDS.match(s):
        s = s.replace(",", "")
    if re.fullmatch(rf"-?(?:{_DECIMAL})", s):
        return Fraction(s)
    m = _FRAC.fullmatch(s) or _SLASH.fullmatch(s)
    if m is None:
        return None
    sign, num, den = m.group(1), *(g for g in m.groups()[1:] if g is not None)
    if Fraction(den) == 0:
        return None
    value = Fraction(num) / Fraction(den)
    return -value if sign else value


_LETTER = re.compile(
    r"(?i:answer)(?:\s+(?i:is))?\s*[:：]?\s*\(?([A-J])\)?(?![A-Za-z])"
    r"|\(([A-J])\)"
    r"|\\boxed\{\s*\(?([A-J])\)?\s*\}"
    r"|^[ \t]*\(?([A-J])\)?[.)]?[ \t]*$",
    re.MULTILINE,
)


def extract_option_letter(text: str) -> str | None:
    """The last multiple-choice letter stated in ``text``."""
    last = None
    for m in _LETTER.finditer(text):
        last = next(g for g in m.groups() if g)
    return last


def normalize_letter(reference: str) -> str | None:
    m = re.fullmatch(r"\s*\(?([A-Ja-j])\)?\.?\s*", reference)
    return m.group(1).upper() if m else None


def answer_key(domain: str, text: str) -> str:
    """Canonical key for vote counting across sampled answers."""
    if domain == "math":
        boxed = extract_boxed(text)
        if boxed is not None:
            return normalize_math(boxed)
    elif domain == "science":
        letter = extract_option_letter(text)
        if letter is not None:
            return letter
    return " ".join(text.split())
