"""Prompt construction for the in-context-learning control loop.

The prompt is five single-sentence sections:

S1  objective (target direction, long-run displacement growth),
S2  constraints on the two degrees of freedom,
S3  the latest few (action, displacement) demonstrations,
S4  a reminder that actions have long-term impact,
S5  the current levels plus the group of legal actions to choose from.

Language-model-facing numbers are kept friendly: the displacement is
shifted by a baseline and scaled to a nonnegative integer
(``(x - x_min) * 1000``), DOF values appear as levels 0/1, and actions are
rendered with the sign-free tokens ``DOF k UP`` / ``DOF k DOWN`` / ``HOLD``
so no negative or fractional numeric token ever reaches the model.  Long
terms are compressed through an alias map ("degree of freedom" -> "DOF",
"rate of change" -> "ROC") to keep prompts short.

A stall detector clears the demonstration buffer outright whenever the
displacement gained over the last ``stall_window`` steps falls below
``stall_threshold``; the buffer then rebuilds from subsequent steps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import ActionParseError, ConfigError, PromptTemplateError, TransformRangeError
from .swimmers import NG, Action, NULL_ACTION, action_id, make_action

TEMPLATE_VERSION = 1

SENTENCE_LABELS = ("S1", "S2", "S3", "S4", "S5")

DEFAULT_SENTENCES = (
    ("S1", "Your objective is to steer a microswimmer along the {direction} axis "
           "by issuing one rate of change action per step so that its displacement "
           "X grows as fast as possible over the long run."),
    ("S2", "The swimmer has exactly 2 degree of freedom variables, each confined "
           "to level 0 or level 1, so an action that would push a degree of freedom "
           "outside these levels is illegal."),
    ("S3", "Here are the latest {count} records of actions and the resulting "
           "displacement X: {records}."),
    ("S4", "Keep in mind that an action reshapes the swimmer and thereby sets how "
           "much every later action can move it, so judge each action by its long "
           "term impact on X rather than the immediate change."),
    ("S5", "The degree of freedom levels are now DOF 1 at {level1} and DOF 2 at "
           "{level2}, and you must answer with exactly one action taken from this "
           "group: {action_group}."),
)

DEFAULT_ALIASES = (
    ("degree of freedom", "DOF"),
    ("rate of change", "ROC"),
)

DIRECTION_WORDS = {"+x": "plus x", "-x": "minus x"}


@dataclass(frozen=True)
class PromptConfig:
    sentences: tuple[tuple[str, str], ...] = DEFAULT_SENTENCES
    n_ht: int = 2
    x_min: float = -100.0
    stall_window: int = 4
    stall_threshold: float = 0.01
    aliases: tuple[tuple[str, str], ...] = DEFAULT_ALIASES
    ablation_mask: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.n_ht < 0:
            raise ConfigError("n_ht must be >= 0")
        if self.stall_threshold <= 0.0:
            raise ConfigError("stall_threshold must be positive")
        if self.stall_window < 1:
            raise ConfigError("stall_window must be >= 1")
        labels = [lab for lab, _ in self.sentences]
        if labels != list(SENTENCE_LABELS):
            raise ConfigError(f"sentences must carry labels {SENTENCE_LABELS} in order")
        unknown = set(self.ablation_mask) - set(SENTENCE_LABELS)
        if unknown:
            raise ConfigError(f"unknown sentence labels in ablation mask: {sorted(unknown)}")


def default_prompt_config(model: str, direction: str = "+x") -> PromptConfig:
    """Per-model history lengths: 3/6 for the three-sphere swimmer toward
    +x/-x, 2 for the three-link swimmer (sweepable)."""
    if model == NG:
        n_ht = 3 if direction == "+x" else 6
    else:
        n_ht = 2
    return PromptConfig(n_ht=n_ht)


class HistoryBuffer:
    """Chronological (action, transformed displacement) pairs, newest last."""

    def __init__(self, capacity: int, entries=()):
        if capacity < 0:
            raise ConfigError("buffer capacity must be >= 0")
        self.capacity = capacity
        self._entries: list[tuple[Action, int]] = list(entries)[-capacity:] if capacity else []

    def push(self, action: Action, transformed_x: int) -> None:
        self._entries.append((action, int(transformed_x)))
        if len(self._entries) > self.capacity:
            del self._entries[: len(self._entries) - self.capacity]

    @property
    def entries(self) -> list[tuple[Action, int]]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def transform_displacement(x: float, x_min: float) -> int:
    """Shift by the baseline and scale to a nonnegative integer.

    Exact for inputs already truncated to three decimals; the inverse is
    ``t / 1000 + x_min``.
    """
    if x < x_min:
        raise TransformRangeError(f"displacement {x} fell below the baseline {x_min}")
    return int(round((x - x_min) * 1000.0))


def render_action(a: Action) -> str:
    """Sign-free action token used in prompts."""
    if a.is_null:
        return "HOLD"
    return f"DOF {a.dof} {'UP' if a.roc > 0 else 'DOWN'}"


@dataclass(frozen=True)
class EnvSummary:
    """What the prompt needs to know about the environment right now."""

    direction: str
    levels: tuple[int, int]
    legal_actions: tuple[Action, ...]


class _StrictMap(dict):
    def __missing__(self, key):
        raise KeyError(key)


def _apply_aliases(text: str, aliases) -> str:
    for long, short in sorted(aliases, key=lambda kv: -len(kv[0])):
        text = text.replace(long, short)
    return text


def build_prompt(cfg: PromptConfig, buf: HistoryBuffer, summary: EnvSummary) -> str:
    """Render the five sentences (minus any ablated ones) deterministically."""
    shown = buf.entries[-cfg.n_ht:] if cfg.n_ht else []
    if shown:
        records = "; ".join(f"{render_action(a)} then X {x}" for a, x in shown)
    else:
        records = "none"
    group = ", ".join(render_action(a)
                      for a in sorted(summary.legal_actions, key=action_id))
    values = _StrictMap(
        direction=DIRECTION_WORDS[summary.direction],
        count=len(shown),
        records=records,
        level1=summary.levels[0],
        level2=summary.levels[1],
        action_group=group,
    )
    parts = []
    for label, template in cfg.sentences:
        if label in cfg.ablation_mask:
            continue
        try:
            sentence = template.format_map(values)
        except (KeyError, IndexError, ValueError) as exc:
            raise PromptTemplateError(f"cannot render {label}: {exc!r}") from exc
        sentence = _apply_aliases(sentence, cfg.aliases)
        if sentence.count(".") != 1 or not sentence.endswith("."):
            raise PromptTemplateError(f"{label} must render to exactly one sentence")
        parts.append(sentence)
    return " ".join(parts)


# Negative or fractional numeric tokens must never reach the model.
NEGATIVE_OR_FRACTIONAL_RE = re.compile(r"-\s*\d|\d\.\d")


def has_negative_or_fractional_token(text: str) -> bool:
    return NEGATIVE_OR_FRACTIONAL_RE.search(text) is not None


def maybe_clear_history(buf: HistoryBuffer, recent_displacements,
                        cfg: PromptConfig) -> HistoryBuffer:
    """Empty the buffer when a full window of recent steps went nowhere."""
    window = list(recent_displacements)
    if len(window) >= cfg.stall_window and abs(sum(window[-cfg.stall_window:])) < cfg.stall_threshold:
        return HistoryBuffer(buf.capacity)
    return buf


_ROC_PATTERN = re.compile(
    r"\bDOF\W{0,8}?([12])\W{0,12}?ROC\W{0,8}?([+-]?\s*[01])\b", re.IGNORECASE)
_WORD_PATTERN = re.compile(r"\bDOF\W{0,8}?([12])\W{0,8}?(UP|DOWN)\b", re.IGNORECASE)
_HOLD_PATTERN = re.compile(r"\bHOLD\b", re.IGNORECASE)


def parse_action(response: str) -> Action:
    """Extract the first action token from a backend response.

    Accepts the canonical grammar ``DOF <1|2> ROC <-1|0|+1>`` (punctuation
    tolerated) and the prompt-side tokens ``DOF <k> UP|DOWN`` / ``HOLD``.
    """
    candidates = []
    m = _ROC_PATTERN.search(response)
    if m:
        roc = int(m.group(2).replace(" ", ""))
        candidates.append((m.start(), make_action(int(m.group(1)), roc)))
    m = _WORD_PATTERN.search(response)
    if m:
        roc = 1 if m.group(2).upper() == "UP" else -1
        candidates.append((m.start(), make_action(int(m.group(1)), roc)))
    m = _HOLD_PATTERN.search(response)
    if m:
        candidates.append((m.start(), NULL_ACTION))
    if not candidates:
        raise ActionParseError(f"no action found in response: {response!r}")
    return min(candidates)[1]


def ablated(cfg: PromptConfig, labels) -> PromptConfig:
    """Copy of the config with the given sentences omitted."""
    return replace(cfg, ablation_mask=frozenset(labels))
