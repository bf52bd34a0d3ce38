"""VLM backends: a scripted mock for offline runs and a thin HTTP+JSON adapter.

HTTP wire contract (one POST per request)::

    request:  {"model": <model id>,
               "media": {"uri": <media ref>, "start": s, "end": s, "overlay": <sidecar ref>},
               "prompt": <text>, "temperature": <float>}
    response: {"text": <model output>}

The bearer token is read from the ``SOCIALGATE_VLM_TOKEN`` environment variable.

Mock script directories are laid out as
``<root>/<episode_id>/<track_id>/<event kind>/<stage>.<sample>.txt``; an optional
``<stage>.<sample>.r<attempt>.txt`` overrides the reply to a re-request.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

logger = logging.getLogger(__name__)

TOKEN_ENV = "SOCIALGATE_VLM_TOKEN"


class BackendError(RuntimeError):
    pass


class TransportError(BackendError):
    """Retryable failure talking to the backend."""


class BackendUnavailableError(BackendError):
    pass


class ScriptMissingError(BackendError):
    pass


@dataclass(frozen=True)
class ClipRef:
    start: float
    end: float
    media_ref: str = ""
    overlay_ref: str = ""


@dataclass(frozen=True)
class VlmRequest:
    clip: ClipRef
    prompt: str
    temperature: float
    stage: str
    kind: str
    scenario_id: str
    sample_index: int = 0
    attempt: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.prompt:
            raise ValueError("prompt must be nonempty")

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.kind, self.scenario_id, self.stage, self.sample_index)


class Backend(Protocol):
    def complete(self, request: VlmRequest) -> str: ...


class ScriptedBackend:
    """In-memory mock keyed on (kind, scenario_id, stage, sample_index[, attempt])."""

    def __init__(self, script: dict[tuple, str] | None = None):
        self.script = dict(script or {})
        self.requests: list[VlmRequest] = []
        self._lock = threading.Lock()

    def add(self, kind: str, scenario_id: str, stage: str, sample: int, text: str,
            attempt: int | None = None) -> None:
        key = (kind, scenario_id, stage, sample)
        self.script[key if attempt is None else key + (attempt,)] = text

    def complete(self, request: VlmRequest) -> str:
        with self._lock:
            self.requests.append(request)
        text = self.script.get(request.key + (request.attempt,))
        if text is None:
            text = self.script.get(request.key)
        if text is None:
            raise ScriptMissingError(f"no scripted reply for {request.key}")
        return text

    @property
    def call_count(self) -> int:
        return len(self.requests)

    def calls_by_stage(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.requests:
            out[r.stage] = out.get(r.stage, 0) + 1
        return dict(sorted(out.items()))


class MockBackend(ScriptedBackend):
    """Scripted backend loaded from a mock script directory."""

    def __init__(self, root: str | Path):
        super().__init__()
        self.root = Path(root)
        for path in sorted(self.root.rglob("*.txt")):
            rel = path.relative_to(self.root).parts
            if len(rel) < 4:
                continue
            kind = rel[-2]
            scenario = "/".join(rel[:-2])
            parts = path.name[:-4].split(".")
            stage, sample = parts[0], int(parts[1])
            attempt = int(parts[2][1:]) if len(parts) > 2 else None
            self.add(kind, scenario, stage, sample, path.read_text(), attempt)


def write_script(root: str | Path, kind: str, scenario_id: str, stage: str, sample: int,
                 text: str, attempt: int | None = None) -> Path:
    suffix = "" if attempt is None else f".r{attempt}"
    path = Path(root) / scenario_id / kind / f"{stage}.{sample}{suffix}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


class HttpBackend:
    def __init__(self, url: str, model_id: str, timeout: float = 60.0,
                 token: str | None = None):
        self.url = url
        self.model_id = model_id
        self.timeout = timeout
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)

    def payload(self, request: VlmRequest) -> dict:
        clip = request.clip
        return {
            "model": self.model_id,
            "media": {"uri": clip.media_ref, "start": clip.start, "end": clip.end,
                      "overlay": clip.overlay_ref},
            "prompt": request.prompt,
            "temperature": request.temperature,
        }

    def complete(self, request: VlmRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, json.dumps(self.payload(request)).encode(),
                                     headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode())
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise TransportError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise TransportError(f"response is not JSON: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise TransportError("response lacks a 'text' field")
        return body["text"]


def call_with_retry(backend: Backend, request: VlmRequest, retries: int = 2,
                    backoff_s: float = 0.5, sleep: Callable[[float], None] = time.sleep) -> str:
    """Issue a request, retrying transport failures with exponential backoff."""
    for attempt in range(retries + 1):
        try:
            return backend.complete(request)
        except TransportError as exc:
            if attempt == retries:
                raise BackendUnavailableError(
                    f"backend failed after {retries + 1} attempts: {exc}") from exc
            delay = backoff_s * 2 ** attempt
            logger.warning("backend transport error (%s); retrying in %.2fs", exc, delay)
            sleep(delay)
    raise AssertionError("unreachable")
