"""Stage II: sample K behavior analyses, synthesize a log, and pick an action.

Two synthesis strategies share the sampling step:

* self-consistency: count intent votes over well-formed analyses, compute
  ``u_sc = 1 - max_votes / n_well_formed`` and defer to Probe when it exceeds
  ``eta``; otherwise ask for a majority-vote log.
* self-critique: extract contradictions, verify them against the clip, and
  defer when the overall intention is Inconclusive or an intent-bearing issue
  stays unresolved.

Intent keywords (matched case-insensitively, no-intent phrases first and then
removed before interact phrases are checked) are frozen in NO_INTENT_PHRASES
and INTERACT_PHRASES. An explicit ``Overall intention:`` line always wins.
"""
from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from . import prompts
from .backends import Backend, ClipRef, VlmRequest, call_with_retry
from .gate import GAZE, TriggerEvent
from .prompts import MissingContextError, Stage

logger = logging.getLogger(__name__)

INTERACT = "Interact"
NO_INTENT = "NoIntent"
INCONCLUSIVE = "Inconclusive"
INTENTS = (INTERACT, NO_INTENT, INCONCLUSIVE)

APPROACH, LEAVE, PROBE = "Approach", "Leave", "Probe"

NO_INTENT_PHRASES = (
    "no intent to interact", "no intent", "does not want to interact",
    "doesn't want to interact", "not interested", "no interest", "disinterest",
    "ignores", "ignoring", "ignored", "looks away", "turns away", "avoids",
    "continues their activity", "continues prior activity",
)
INTERACT_PHRASES = (
    "wants to interact", "want to interact", "intends to interact", "willing to interact",
    "interested in interacting", "waves", "waving", "beckons", "invites the robot",
    "reaches toward", "holds out",
)
# an unresolved issue defers only if it mentions one of these cues
KEY_CLAIM_KEYWORDS = (
    "glance", "gaze", "look", "eye contact", "wave", "waving", "smile", "nod",
    "turn", "ignore", "approach", "gesture", "beckon", "interact", "intent", "reach",
)

EVIDENCE_GRACE_S = 1.0
_TS = re.compile(r"\[(\d{1,2}):(\d{2})(?:\s*[-–]\s*\d{1,2}:\d{2})?\]")
_ANSWER = re.compile(r"^\s*Answer:\s*(.*)$", re.M | re.I)
_OVERALL = re.compile(
    r"Overall intention:\s*(?:Overall intention:\s*)?\[?\s*"
    r"(No Intent to Interact|No Intent|NoIntent|Interact|Inconclusive)", re.I)


class Strategy(str, Enum):
    SELF_CONSISTENCY = "SelfConsistency"
    SELF_CRITIQUE = "SelfCritique"


class Provenance(str, Enum):
    GATE_DEFAULT = "GateDefault"
    UNCERTAINTY_DEFERRAL = "UncertaintyDeferral"
    CRITIQUE_INCONCLUSIVE = "CritiqueInconclusive"
    ACTION_PROMPT = "ActionPrompt"


class AllMalformedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Evidence:
    seconds: float
    text: str

    @property
    def stamp(self) -> str:
        m, s = divmod(int(self.seconds), 60)
        return f"{m:02d}:{s:02d}"


@dataclass(frozen=True)
class Analysis:
    raw: str
    answer: str | None
    evidence: tuple[Evidence, ...]
    intent: str | None
    malformed: bool = False
    rejected_evidence: tuple[Evidence, ...] = ()


def _intent_from_text(text: str) -> str:
    low = text.lower()
    no_hits = [p for p in NO_INTENT_PHRASES if p in low]
    for p in no_hits:
        low = low.replace(p, " ")
    yes_hits = [p for p in INTERACT_PHRASES if p in low]
    if no_hits and not yes_hits:
        return NO_INTENT
    if yes_hits and not no_hits:
        return INTERACT
    return INCONCLUSIVE


def parse_intent_line(text: str) -> str | None:
    """Intent from the last ``Overall intention:`` line, if any."""
    hits = _OVERALL.findall(text)
    if not hits:
        return None
    label = hits[-1].lower()
    if label.startswith("no"):
        return NO_INTENT
    return INTERACT if label == "interact" else INCONCLUSIVE


def parse_evidence(text: str) -> list[Evidence]:
    out = []
    for line in text.splitlines():
        m = _TS.search(line)
        if m:
            cue = line[m.end():].lstrip(" :-").strip()
            out.append(Evidence(int(m.group(1)) * 60 + int(m.group(2)), cue))
    return out


def parse_analysis(text: str | None, clip_duration: float | None = None) -> Analysis:
    """Parse one independent analysis; never raises.

    Malformed means empty, or neither an ``Answer:`` nor an ``Overall intention:``
    line. Evidence outside ``[-1, duration + 1]`` seconds of the clip is set aside.
    """
    text = text or ""
    answer_m = _ANSWER.search(text)
    explicit = parse_intent_line(text)
    if not text.strip() or (answer_m is None and explicit is None):
        return Analysis(text, None, (), None, malformed=True)
    answer = answer_m.group(1).strip() if answer_m else None
    evidence = parse_evidence(text)
    kept, rejected = evidence, []
    if clip_duration is not None:
        ok = lambda e: -EVIDENCE_GRACE_S <= e.seconds <= clip_duration + EVIDENCE_GRACE_S
        kept = [e for e in evidence if ok(e)]
        rejected = [e for e in evidence if not ok(e)]
    intent = explicit if explicit is not None else _intent_from_text(answer or text)
    return Analysis(text, answer, tuple(kept), intent, False, tuple(rejected))


@dataclass
class Candidate:
    analysis: int | None = None
    quote: str = ""
    video_check: str | None = None


@dataclass
class Issue:
    issue: str
    candidates: list[Candidate] = field(default_factory=list)
    resolution: str | None = None

    @property
    def verdicts(self) -> list[str]:
        return [c.video_check for c in self.candidates if c.video_check]

    @property
    def status(self) -> str:
        """'resolved', 'inconclusive', or 'unverified' (no checks and no resolution)."""
        if self.resolution:
            return "inconclusive" if re.search(r"\binconclusive\b", self.resolution, re.I) else "resolved"
        checks = self.verdicts
        if not checks:
            return "unverified"
        if "inconclusive" in checks or checks.count("supported") > 1:
            return "inconclusive"
        return "resolved"

    @property
    def is_key(self) -> bool:
        text = " ".join([self.issue, *(c.quote for c in self.candidates)]).lower()
        return any(k in text for k in KEY_CLAIM_KEYWORDS)


def parse_issues(text: str) -> list[Issue]:
    """Contradiction blocks from contradiction or verification output."""
    if re.search(r"contradictions:\s*\[\s*\]", text):
        return []
    issues: list[Issue] = []
    for line in text.splitlines():
        s = line.strip().lstrip("-").strip()
        low = s.lower()
        if low.startswith("issue:"):
            issues.append(Issue(s[6:].strip()))
        elif not issues:
            continue
        elif low.startswith("analysis:"):
            num = re.search(r"\d+", s)
            issues[-1].candidates.append(Candidate(int(num.group()) if num else None))
        elif low.startswith("quote:") and issues[-1].candidates:
            issues[-1].candidates[-1].quote = s[6:].strip().strip('"')
        elif low.startswith("video_check:") and issues[-1].candidates:
            m = re.search(r"supported|refuted|inconclusive", low[12:])
            issues[-1].candidates[-1].video_check = m.group() if m else None
        elif low.startswith("resolution"):
            issues[-1].resolution = s.split(":", 1)[1].strip() if ":" in s else s
        elif low.startswith("final log"):
            break
    return issues


def final_log(text: str) -> str:
    """The 'Final log' section through the end, or the whole text if absent."""
    m = re.search(r"^\s*Final log.*$", text, re.M | re.I)
    return text[m.start():].strip() if m else text.strip()


@dataclass
class AnalysisBundle:
    analyses: list[Analysis]
    strategy: Strategy
    intent_votes: dict[str, int]
    synthesized_log: str | None = None
    intent: str | None = None
    u_sc: float | None = None
    contradictions: list[Issue] = field(default_factory=list)
    verification: list[Issue] = field(default_factory=list)
    deferral: "Deferral | None" = None

    @property
    def k(self) -> int:
        return len(self.analyses)


@dataclass(frozen=True)
class Deferral:
    provenance: Provenance
    reason: str


@dataclass(frozen=True)
class Decision:
    action: str
    justification: str
    provenance: Provenance
    event: TriggerEvent | None = None
    diagnostic: str | None = None

    def __post_init__(self):
        if self.action not in (APPROACH, LEAVE, PROBE):
            raise ValueError(f"unknown action {self.action!r}")
        if self.provenance in (Provenance.GATE_DEFAULT, Provenance.UNCERTAINTY_DEFERRAL,
                               Provenance.CRITIQUE_INCONCLUSIVE) and self.action != PROBE:
            raise ValueError(f"{self.provenance.value} decisions must be Probe")

    def to_json(self) -> dict:
        return {
            "event": None if self.event is None else self.event.to_json(),
            "action": self.action,
            "provenance": self.provenance.value,
            "justification": self.justification,
            "diagnostic": self.diagnostic,
        }


@dataclass(frozen=True)
class StageTwoConfig:
    strategy: Strategy = Strategy.SELF_CONSISTENCY
    k: int = 5
    temperature: float = 0.7
    eta: float = 0.25
    min_well_formed: int = 3
    malformed_retries: int = 1
    transport_retries: int = 2
    backoff_s: float = 0.5
    max_workers: int = 1
    media_ref: str = "{episode_id}"
    overlay_ref: str = "{episode_id}.overlay.json"

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must be in [0, 1]")


def _scenario_id(event: TriggerEvent) -> str:
    return f"{event.episode_id}/{event.track_id}"


def _clip(event: TriggerEvent, config: StageTwoConfig) -> ClipRef:
    fields = {"episode_id": event.episode_id, "track_id": event.track_id}
    return ClipRef(event.clip[0], event.clip[1], config.media_ref.format(**fields),
                   config.overlay_ref.format(**fields))


def build_prompt(event: TriggerEvent, stage: Stage, analyses: Sequence[str] | None = None,
                 contradiction_text: str | None = None, log_text: str | None = None) -> str:
    """Instantiate the stage's template for this event."""
    stage = Stage(stage)
    if stage in (Stage.INDEPENDENT_GAZE, Stage.INDEPENDENT_PROXEMICS):
        return prompts.render(stage)
    if stage in (Stage.CONTRADICTION, Stage.VERIFY, Stage.MAJORITY_VOTE) and not analyses:
        raise MissingContextError(f"{stage.value} prompt needs the independent analyses")
    joined = prompts.format_analyses(analyses) if analyses else None
    if stage is Stage.VERIFY and contradiction_text is None:
        raise MissingContextError("verify prompt needs the contradiction output")
    if stage is Stage.ACTION and not log_text:
        raise MissingContextError("action prompt needs a synthesized behavior log")
    return prompts.render(stage, analyses=joined, contradiction_text=contradiction_text,
                          log_text=log_text,
                          video_duration_sec=prompts.format_duration(event.duration))


def independent_stage(event: TriggerEvent) -> Stage:
    return Stage.INDEPENDENT_GAZE if event.kind == GAZE else Stage.INDEPENDENT_PROXEMICS


class _Caller:
    def __init__(self, event: TriggerEvent, backend: Backend, config: StageTwoConfig, sleep=None):
        self.event, self.backend, self.config = event, backend, config
        self.kw = {} if sleep is None else {"sleep": sleep}

    def __call__(self, stage: Stage, prompt: str, sample: int = 0, attempt: int = 0,
                 temperature: float | None = None) -> str:
        req = VlmRequest(_clip(self.event, self.config), prompt,
                         self.config.temperature if temperature is None else temperature,
                         stage.value, self.event.kind, _scenario_id(self.event), sample, attempt)
        return call_with_retry(self.backend, req, self.config.transport_retries,
                               self.config.backoff_s, **self.kw)


def sample_analyses(event: TriggerEvent, backend: Backend, config: StageTwoConfig | None = None,
                    sleep=None) -> list[Analysis]:
    """K independent analyses in sample order; malformed replies are re-requested once."""
    config = config or StageTwoConfig()
    if config.k < 1:
        raise ValueError("k must be >= 1")
    call = _Caller(event, backend, config, sleep)
    stage = independent_stage(event)
    prompt = build_prompt(event, stage)

    def one(i: int) -> Analysis:
        analysis = None
        for attempt in range(config.malformed_retries + 1):
            analysis = parse_analysis(call(stage, prompt, i, attempt), event.duration)
            if not analysis.malformed:
                break
            logger.info("sample %d of %s/%s malformed (attempt %d)",
                        i, event.episode_id, event.track_id, attempt)
        return analysis

    if config.max_workers > 1:
        with ThreadPoolExecutor(config.max_workers) as pool:
            analyses = list(pool.map(one, range(config.k)))
    else:
        analyses = [one(i) for i in range(config.k)]
    if all(a.malformed for a in analyses):
        raise AllMalformedError(f"all {config.k} analyses malformed")
    return analyses


def count_votes(analyses: Sequence[Analysis]) -> dict[str, int]:
    votes = {s: 0 for s in INTENTS}
    for a in analyses:
        if not a.malformed and a.intent in votes:
            votes[a.intent] += 1
    return votes


def u_sc(votes: dict[str, int] | Sequence[int], n: int | None = None) -> float:
    """1 - (largest vote count) / n, where n defaults to the total vote count."""
    counts = list(votes.values()) if isinstance(votes, dict) else list(votes)
    n = sum(counts) if n is None else n
    if n <= 0:
        return 1.0
    return 1.0 - max(counts) / n


def self_consistency(event: TriggerEvent, analyses: Sequence[Analysis], backend: Backend,
                     config: StageTwoConfig | None = None, sleep=None
                     ) -> tuple[AnalysisBundle, str | Deferral]:
    config = config or StageTwoConfig()
    votes = count_votes(analyses)
    n_ok = sum(votes.values())
    u = u_sc(votes, n_ok)
    bundle = AnalysisBundle(list(analyses), Strategy.SELF_CONSISTENCY, votes, u_sc=u)
    if n_ok < config.min_well_formed:
        bundle.deferral = Deferral(Provenance.UNCERTAINTY_DEFERRAL,
                                   f"only {n_ok} of {len(analyses)} analyses well-formed")
        return bundle, bundle.deferral
    if u > config.eta:
        bundle.deferral = Deferral(Provenance.UNCERTAINTY_DEFERRAL,
                                   f"u_sc {u:.3f} exceeds eta {config.eta:.3f}")
        return bundle, bundle.deferral
    call = _Caller(event, backend, config, sleep)
    reply = call(Stage.MAJORITY_VOTE,
                 build_prompt(event, Stage.MAJORITY_VOTE, [a.raw for a in analyses]))
    bundle.synthesized_log = final_log(reply)
    bundle.intent = parse_intent_line(reply) or INCONCLUSIVE
    return bundle, bundle.intent


def self_critique(event: TriggerEvent, analyses: Sequence[Analysis], backend: Backend,
                  config: StageTwoConfig | None = None, sleep=None
                  ) -> tuple[AnalysisBundle, str | Deferral]:
    config = config or StageTwoConfig()
    votes = count_votes(analyses)
    bundle = AnalysisBundle(list(analyses), Strategy.SELF_CRITIQUE, votes,
                            u_sc=u_sc(votes))
    raws = [a.raw for a in analyses]
    call = _Caller(event, backend, config, sleep)
    contradiction_text = call(Stage.CONTRADICTION, build_prompt(event, Stage.CONTRADICTION, raws))
    bundle.contradictions = parse_issues(contradiction_text)
    reply = call(Stage.VERIFY, build_prompt(event, Stage.VERIFY, raws, contradiction_text))
    bundle.verification = parse_issues(reply)
    bundle.synthesized_log = final_log(reply)
    intent = parse_intent_line(reply)
    if intent is None:
        bundle.deferral = Deferral(Provenance.CRITIQUE_INCONCLUSIVE,
                                   "verification output has no overall intention")
        return bundle, bundle.deferral
    bundle.intent = intent
    if intent == INCONCLUSIVE:
        bundle.deferral = Deferral(Provenance.CRITIQUE_INCONCLUSIVE, "overall intention inconclusive")
        return bundle, bundle.deferral
    checked = bundle.verification
    if bundle.contradictions and not checked:
        checked = [Issue(i.issue, i.candidates) for i in bundle.contradictions]
    open_key = [i.issue for i in checked if i.status != "resolved" and i.is_key]
    if open_key:
        bundle.deferral = Deferral(Provenance.CRITIQUE_INCONCLUSIVE,
                                   f"unresolved key claims: {open_key}")
        return bundle, bundle.deferral
    return bundle, intent


_ACTION_PATTERNS = (
    (APPROACH, re.compile(r"\bapproach", re.I)),
    (LEAVE, re.compile(r"\bleave\b", re.I)),
    (PROBE, re.compile(r"keep probing|\bprob(e|ing)\b|\binconclusive\b", re.I)),
)


def parse_action(text: str) -> tuple[str | None, str]:
    """Earliest action phrase after the last 'Decision:' marker, plus the remaining text."""
    idx = text.lower().rfind("decision:")
    segment = text[idx + len("decision:"):] if idx >= 0 else text
    found = [(m.start(), action) for action, pat in _ACTION_PATTERNS
             for m in [pat.search(segment)] if m]
    if not found:
        return None, text.strip()
    return min(found)[1], segment.strip()


def select_action(event: TriggerEvent, bundle: AnalysisBundle, backend: Backend,
                  config: StageTwoConfig | None = None, sleep=None) -> Decision:
    if bundle.deferral is not None:
        raise ValueError("cannot select an action for a deferred bundle")
    if bundle.intent == INCONCLUSIVE or bundle.intent is None:
        return Decision(PROBE, "synthesized intention is inconclusive",
                        Provenance.UNCERTAINTY_DEFERRAL, event)
    config = config or StageTwoConfig()
    call = _Caller(event, backend, config, sleep)
    reply = call(Stage.ACTION, build_prompt(event, Stage.ACTION, log_text=bundle.synthesized_log))
    action, justification = parse_action(reply)
    if action is None:
        return Decision(PROBE, justification, Provenance.ACTION_PROMPT, event,
                        diagnostic="unparseable action reply")
    return Decision(action, justification, Provenance.ACTION_PROMPT, event)


def run_stage_two(event: TriggerEvent, backend: Backend, config: StageTwoConfig | None = None,
                  sleep=None) -> tuple[Decision, AnalysisBundle | None]:
    """Full Stage II for one trigger event."""
    config = config or StageTwoConfig()
    try:
        analyses = sample_analyses(event, backend, config, sleep)
    except AllMalformedError as exc:
        return Decision(PROBE, str(exc), Provenance.UNCERTAINTY_DEFERRAL, event,
                        diagnostic="all analyses malformed"), None
    synth = self_consistency if config.strategy is Strategy.SELF_CONSISTENCY else self_critique
    bundle, outcome = synth(event, analyses, backend, config, sleep)
    if isinstance(outcome, Deferral):
        return Decision(PROBE, outcome.reason, outcome.provenance, event), bundle
    return select_action(event, bundle, backend, config, sleep), bundle
