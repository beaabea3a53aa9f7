"""The prompted control loop: prompt, complete, parse, act, remember.

Each step builds the five-sentence prompt from the demonstration buffer and
the current environment summary, queries the backend at temperature zero,
parses the reply into an action and validates it against the legal set.
Unreadable or illegal replies trigger up to three re-queries with a short
appended correction; after that the step records a null action so episodes
always run to completion.  Backend transport failures abort the episode and
return the partial transcript flagged as aborted.
"""

from __future__ import annotations

from collections import deque

from .backends import ChatBackend
from .environment import Environment, Transcript
from .errors import ActionParseError, BackendError
from .prompting import (
    EnvSummary,
    HistoryBuffer,
    PromptConfig,
    build_prompt,
    maybe_clear_history,
    parse_action,
    transform_displacement,
)
from .swimmers import Action, NULL_ACTION, shape_levels

CORRECTION_SENTENCE = ("That reply was not one legal action, so answer again "
                       "with exactly one action taken from the stated group.")
MAX_REQUERIES = 3


def env_summary(env: Environment) -> EnvSummary:
    return EnvSummary(
        direction=env.cfg.target_direction,
        levels=shape_levels(env.state, env.model, env.params),
        legal_actions=env.valid_actions(),
    )


def _is_legal(action: Action, legal: tuple[Action, ...]) -> bool:
    if action.is_null:
        return any(a.is_null for a in legal)
    return action in legal


def run_llm_episode(env: Environment, backend: ChatBackend, cfg: PromptConfig,
                    max_steps: int = 50, temperature: float = 0.0) -> Transcript:
    """Drive the environment for ``max_steps`` steps with a chat backend."""
    buf = HistoryBuffer(cfg.n_ht)
    recent: deque[float] = deque(maxlen=cfg.stall_window)
    aborted = False
    for _ in range(max_steps):
        legal = env.valid_actions()
        prompt = build_prompt(cfg, buf, env_summary(env))
        action = None
        try:
            for attempt in range(1 + MAX_REQUERIES):
                query = prompt if attempt == 0 else prompt + " " + CORRECTION_SENTENCE
                response = backend.complete(query, temperature)
                try:
                    candidate = parse_action(response)
                except ActionParseError:
                    continue
                if _is_legal(candidate, legal):
                    action = candidate
                    break
        except BackendError:
            aborted = True
            break
        if action is None:
            action = NULL_ACTION
        rec = env.step(action)
        buf.push(action, transform_displacement(env.reported_progress(), cfg.x_min))
        recent.append(rec.dx_noisy)
        cleared = maybe_clear_history(buf, recent, cfg)
        if cleared is not buf:
            buf = cleared
            recent.clear()
    transcript = env.transcript
    transcript.aborted = aborted
    return transcript
