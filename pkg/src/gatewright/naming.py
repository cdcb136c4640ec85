"""Identifier conventions: kebab-case skill names vs snake_case tool names.

The two grammars keep document identifiers and callable tool identifiers
visually distinct, so a skill name can never be mistaken for something to
invoke. A bare lowercase word has no separator to distinguish it; it is
treated as a tool name, the safe default at call sites.
"""

from __future__ import annotations

import enum
import re

KEBAB_RE = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")
SNAKE_RE = re.compile(r"^[a-z0-9]+(?:_[a-z0-9]+)*$")


class NameKind(enum.Enum):
    SKILL_NAME = "SkillName"
    TOOL_NAME = "ToolName"
    INVALID = "Invalid"


def is_skill_name(token: str) -> bool:
    return bool(KEBAB_RE.match(token))


def is_tool_name(token: str) -> bool:
    return bool(SNAKE_RE.match(token))


def classify_name(token: str) -> NameKind:
    """Partition any token into exactly one of SkillName/ToolName/Invalid."""
    if not token:
        return NameKind.INVALID
    has_hyphen = "-" in token
    has_underscore = "_" in token
    if has_hyphen and has_underscore:
        return NameKind.INVALID
    if has_hyphen:
        return NameKind.SKILL_NAME if is_skill_name(token) else NameKind.INVALID
    return NameKind.TOOL_NAME if is_tool_name(token) else NameKind.INVALID


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit costs."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1,      # deletion
                               current[j - 1] + 1,   # insertion
                               previous[j - 1] + cost))
        previous = current
    return previous[-1]


def nearest_name(token: str, candidates: list[str]) -> str | None:
    """Closest candidate by edit distance; ties break lexicographically."""
    best: str | None = None
    best_distance = -1
    for name in candidates:
        distance = levenshtein(token, name)
        if best is None or distance < best_distance or \
                (distance == best_distance and name < best):
            best, best_distance = name, distance
    return best
