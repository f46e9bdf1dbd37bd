"""Prompt sets stored as plain-text assets, plus their renderers.

Layout of a prompt-set directory (see ``assets/default``)::

    answer_format/{math,science,code}.txt
    user/{math,science,code}.txt
    pt_system/<family>.txt            pt_user.txt
    routing_judge_system/<family>.txt routing_judge_user/<family>.txt
    routing_solve_system.txt          sft_mode_selection_system.txt
    baseline_system.txt               llm_judge_system.txt  llm_judge_user.txt

Files hold the exact prompt bytes; a single trailing newline, if an editor
added one, is ignored.  Placeholders are ``{name}`` with a lowercase name;
anything else in braces (``\\boxed{}``, JSON examples) is literal text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

from thinkswitch.core import DOMAINS, Query
from thinkswitch.profiles import Family

ASSET_ROOT = Path(__file__).parent / "assets"
PRESET_DIR = ASSET_ROOT / "presets"
FAMILIES = tuple(f.value for f in Family)

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


class PromptError(KeyError):
    pass


def placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template))


def render(template: str, values: Mapping[str, object]) -> str:
    """Substitute ``{name}`` slots in one pass; inserted text is never re-scanned."""
    missing = placeholders(template) - set(values)
    if missing:
        raise PromptError(f"template needs values for {sorted(missing)}")

    def sub(m: re.Match[str]) -> str:
        return str(values[m.group(1)])

    return _PLACEHOLDER.sub(sub, template)


def _read(path: Path) -> str:
    text = path.read_bytes().decode("utf-8")
    return text[:-1] if text.endswith("\n") else text


@dataclass(frozen=True)
class PromptSet:
    id: str
    answer_format: Mapping[str, str]
    user_template: Mapping[str, str]
    pt_system: Mapping[str, str]
    pt_user: str
    routing_judge: Mapping[str, tuple[str, str]]
    routing_solve_system: str
    sft_mode_selection_system: str
    baseline_system: str
    llm_judge: tuple[str, str]
    presets: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_directory(cls, path: str | Path, set_id: str | None = None) -> PromptSet:
        root = Path(path)
        if not root.is_dir():
            raise PromptError(f"prompt set directory {root} does not exist")

        def per(sub: str, keys: tuple[str, ...]) -> dict[str, str]:
            return {k: _read(root / sub / f"{k}.txt") for k in keys if (root / sub / f"{k}.txt").exists()}

        judge_sys = per("routing_judge_system", FAMILIES)
        judge_user = per("routing_judge_user", FAMILIES)
        presets = {p.stem: _read(p) for p in sorted(PRESET_DIR.glob("*.txt"))}
        if (root / "presets").is_dir():
            presets.update({p.stem: _read(p) for p in sorted((root / "presets").glob("*.txt"))})
        return cls(
            id=set_id or root.name,
            answer_format=per("answer_format", DOMAINS),
            user_template=per("user", DOMAINS),
            pt_system=per("pt_system", FAMILIES),
            pt_user=_read(root / "pt_user.txt"),
            routing_judge={f: (judge_sys[f], judge_user[f]) for f in judge_sys if f in judge_user},
            routing_solve_system=_read(root / "routing_solve_system.txt"),
            sft_mode_selection_system=_read(root / "sft_mode_selection_system.txt"),
            baseline_system=_read(root / "baseline_system.txt"),
            llm_judge=(_read(root / "llm_judge_system.txt"), _read(root / "llm_judge_user.txt")),
            presets=presets,
        )


@lru_cache(maxsize=None)
def load_prompt_set(set_id: str = "default", directory: str | None = None) -> PromptSet:
    """Load a shipped prompt set by id, or a user directory when given."""
    if directory is not None:
        return PromptSet.from_directory(directory, set_id)
    path = ASSET_ROOT / set_id
    if set_id == "presets" or not path.is_dir():
        raise PromptError(f"no shipped prompt set {set_id!r}")
    return PromptSet.from_directory(path, set_id)


def _family_key(family: Family | str) -> str:
    return Family(family).value


def render_user_message(q: Query, prompts: PromptSet) -> str:
    try:
        template = prompts.user_template[q.domain]
    except KeyError:
        raise PromptError(f"prompt set {prompts.id!r} has no user template for domain {q.domain!r}") from None
    return render(template, {"problem": q.problem})


def render_pt_user_message(q: Query, prompts: PromptSet) -> str:
    """Prompt-tuning wrapper around the problem, then the domain answer format once."""
    try:
        fmt = prompts.answer_format[q.domain]
    except KeyError:
        raise PromptError(f"prompt set {prompts.id!r} has no answer format for domain {q.domain!r}") from None
    return render(prompts.pt_user, {"problem": q.problem}) + "\n\n" + fmt


def pt_system_prompt(family: Family | str, prompts: PromptSet) -> str:
    try:
        return prompts.pt_system[_family_key(family)]
    except KeyError:
        raise PromptError(f"prompt set {prompts.id!r} has no prompt-tuning system prompt for {family}") from None


def render_judge_messages(q: Query, family: Family | str, prompts: PromptSet) -> tuple[str, str]:
    try:
        system, user = prompts.routing_judge[_family_key(family)]
    except KeyError:
        raise PromptError(f"prompt set {prompts.id!r} has no routing judge template for {family}") from None
    return system, render(user, {"problem": q.problem})


def render_llm_judge(q: Query, reference: str, response: str, prompts: PromptSet) -> tuple[str, str]:
    system, user = prompts.llm_judge
    return system, render(user, {"problem": q.problem, "reference": reference, "response": response})


def strategy_system_prompt(strategy: str, family: Family | str, prompts: PromptSet) -> str:
    """System prompt shared by training-data construction and inference for ``strategy``."""
    if strategy == "pt":
        return pt_system_prompt(family, prompts)
    if strategy == "rt":
        return prompts.routing_solve_system
    if strategy == "baseline":
        return prompts.baseline_system
    raise PromptError(f"unknown strategy {strategy!r}; expected pt, rt or baseline")


def preset_prompt(name: str, prompts: PromptSet, **values: object) -> str:
    try:
        template = prompts.presets[name]
    except KeyError:
        raise PromptError(f"no preset prompt {name!r}") from None
    return render(template, values)
