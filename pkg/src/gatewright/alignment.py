"""Global sequence alignment with linear gap costs.

Deterministic by construction: the traceback prefers diagonal moves, then
consuming the first sequence, then the second, so the same inputs always
produce the same aligned column pairs on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

from gatewright.errors import GatewrightError


class EmptySequence(GatewrightError):
    """Alignment inputs must both be non-empty."""


@dataclass(frozen=True)
class AlignmentParams:
    match_score: float = 1.0
    mismatch_score: float = -1.0
    gap_penalty: float = -2.0

    def __post_init__(self) -> None:
        if self.match_score <= self.mismatch_score:
            raise ValueError("match score must exceed mismatch score")
        if self.gap_penalty >= 0:
            raise ValueError("gap penalty must be negative")


@dataclass(frozen=True)
class Alignment:
    """Optimal global alignment: score plus 0-based aligned index pairs."""

    score: float
    pairs: tuple[tuple[int, int], ...]


def needleman_wunsch(a: str, b: str,
                     params: AlignmentParams | None = None) -> Alignment:
    params = params or AlignmentParams()
    if not a or not b:
        raise EmptySequence("both sequences must be non-empty")
    gap = params.gap_penalty

    rows, cols = len(a) + 1, len(b) + 1
    score = [[0.0] * cols for _ in range(rows)]
    for i in range(1, rows):
        score[i][0] = i * gap
    for j in range(1, cols):
        score[0][j] = j * gap
    for i in range(1, rows):
        for j in range(1, cols):
            sub = params.match_score if a[i - 1] == b[j - 1] else params.mismatch_score
            score[i][j] = max(score[i - 1][j - 1] + sub,
                              score[i - 1][j] + gap,
                              score[i][j - 1] + gap)

    pairs: list[tuple[int, int]] = []
    i, j = len(a), len(b)
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            sub = params.match_score if a[i - 1] == b[j - 1] else params.mismatch_score
            if score[i][j] == score[i - 1][j - 1] + sub:
                pairs.append((i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and score[i][j] == score[i - 1][j] + gap:
            i -= 1
            continue
        j -= 1
    pairs.reverse()
    return Alignment(score=score[len(a)][len(b)], pairs=tuple(pairs))
