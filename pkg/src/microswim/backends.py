"""Chat backends: scripted and replay test doubles plus an HTTP client.

Every backend exposes one method, ``complete(prompt, temperature)``, and
keeps no conversational state between calls; the control loop re-sends
whatever context matters inside the prompt itself.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import BackendError, ReplayExhaustedError
from .oracle import GaitCycle
from .swimmers import Action


class ChatBackend(Protocol):
    def complete(self, prompt: str, temperature: float = 0.0) -> str: ...


def action_text(a: Action) -> str:
    """Canonical response grammar for an action."""
    if a.is_null:
        return "DOF 1 ROC 0"
    return f"DOF {a.dof} ROC {a.roc:+d}"


class ScriptedBackend:
    """Wraps a deterministic policy (call index -> Action) as a text emitter."""

    def __init__(self, policy: Callable[[int], Action]):
        self.policy = policy
        self.calls = 0

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        a = self.policy(self.calls)
        self.calls += 1
        return action_text(a)


def scripted_cycle_backend(cycle: GaitCycle) -> ScriptedBackend:
    """Plays a gait cycle's actions forever, starting at its own phase."""
    actions = cycle.actions
    return ScriptedBackend(lambda i: actions[i % len(actions)])


class ReplayBackend:
    """Returns recorded responses in order; errors once they run out."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.calls = 0

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        if self.calls >= len(self.responses):
            raise ReplayExhaustedError(
                f"replay exhausted after {len(self.responses)} responses")
        out = self.responses[self.calls]
        self.calls += 1
        return out

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise BackendError(f"recording {path} must be a JSON list of strings")
        return cls([str(x) for x in data])


class RecordingBackend:
    """Pass-through wrapper that captures responses for later replay."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.responses: list[str] = []

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        out = self.inner.complete(prompt, temperature)
        self.responses.append(out)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.responses, indent=0) + "\n", encoding="utf-8")


API_KEY_ENV = "MICROSWIM_API_KEY"
RETRYABLE_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str
    model: str
    timeout: float = 60.0
    max_retries: int = 5
    backoff_base: float = 0.5
    api_key_env: str = API_KEY_ENV


class HttpBackend:
    """Minimal client for a chat-completions style endpoint.

    Sends a single user message per call with the configured model name and
    the verbatim temperature; reads the first choice's message content.
    Transport failures and retryable statuses back off exponentially up to
    ``max_retries`` attempts, then raise BackendError.  Safe for concurrent
    independent sessions (one requests.Session per instance).
    """

    def __init__(self, cfg: HttpBackendConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last_err = None
        for attempt in range(self.cfg.max_retries):
            if attempt:
                time.sleep(self.cfg.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self.session.post(url, json=payload, headers=self._headers(),
                                         timeout=self.cfg.timeout)
            except requests.RequestException as exc:
                last_err = f"transport error: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_err = f"HTTP {resp.status_code}: {resp.text[:200]}"
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed completion payload: {exc!r}") from exc
        raise BackendError(f"gave up after {self.cfg.max_retries} attempts; last: {last_err}")
