"""Stage II prompt templates.

Each template file holds one prompt fragment per line. Fragments are joined
with no separator (the prompts are long single strings), so line breaks in the
file never reach the model. Placeholders use ``string.Template`` syntax:

    ${analyses}            "[Analysis i/K]:<text>" for each analysis, concatenated
    ${video_duration_sec}  clip duration in seconds
    ${contradiction_text}  raw output of the contradiction stage
    ${log_text}            synthesized behavior log
"""
from __future__ import annotations

import hashlib
from enum import Enum
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

TEMPLATE_VERSION = "v1"


class Stage(str, Enum):
    INDEPENDENT_GAZE = "independent_gaze"
    INDEPENDENT_PROXEMICS = "independent_proxemics"
    CONTRADICTION = "contradiction"
    VERIFY = "verify"
    MAJORITY_VOTE = "majority_vote"
    ACTION = "action"


PLACEHOLDERS = {
    Stage.INDEPENDENT_GAZE: (),
    Stage.INDEPENDENT_PROXEMICS: (),
    Stage.CONTRADICTION: ("analyses",),
    Stage.VERIFY: ("video_duration_sec", "analyses", "contradiction_text"),
    Stage.MAJORITY_VOTE: ("analyses",),
    Stage.ACTION: ("log_text",),
}


class MissingContextError(ValueError):
    pass


@lru_cache(maxsize=None)
def template_text(stage: Stage, version: str = TEMPLATE_VERSION) -> str:
    raw = resources.files(__package__).joinpath(version, f"{Stage(stage).value}.txt").read_text()
    return "".join(raw.split("\n")[:-1] if raw.endswith("\n") else raw.split("\n"))


def template_sha256(stage: Stage, version: str = TEMPLATE_VERSION) -> str:
    return hashlib.sha256(template_text(stage, version).encode()).hexdigest()


def format_analyses(analyses: Sequence[str]) -> str:
    k = len(analyses)
    return "".join(f"[Analysis {i + 1}/{k}]:{a}" for i, a in enumerate(analyses))


def format_duration(seconds: float) -> str:
    """Seconds as Python prints a float, rounded to centiseconds (e.g. "6.0", "4.27")."""
    return str(round(float(seconds), 2))


def render(stage: Stage, **values: str) -> str:
    stage = Stage(stage)
    missing = [p for p in PLACEHOLDERS[stage] if values.get(p) is None]
    if missing:
        raise MissingContextError(f"{stage.value} prompt needs {missing}")
    return Template(template_text(stage)).substitute({p: values[p] for p in PLACEHOLDERS[stage]})
