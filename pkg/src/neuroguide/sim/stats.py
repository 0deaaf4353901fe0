"""Descriptive study statistics: Latin-square ordering, log-odds ratios of
optimal-state incidence, and error rate ratios. These are the fixed-effect
descriptive analogs of the study's mixed-effects analyses; random-effect
estimation is out of scope by design."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "latin_square",
    "validate_latin_square",
    "LogOddsResult",
    "optimal_log_odds",
    "error_rate_ratio",
    "ZeroDenominatorRate",
]


class ZeroDenominatorRate(ZeroDivisionError):
    pass


def latin_square(conditions, participants: int) -> list:
    """Cyclic Latin square rows assigned to participants: row i is the
    condition list rotated by i mod k."""
    conditions = list(conditions)
    if not conditions:
        raise ValueError("need at least one condition")
    k = len(conditions)
    rows = []
    for i in range(participants):
        r = i % k
        rows.append(conditions[r:] + conditions[:r])
    return rows


def validate_latin_square(rows) -> bool:
    """Brute-force row/column uniqueness over the first k rows (k = width)."""
    if not rows:
        return False
    k = len(rows[0])
    if any(len(row) != k for row in rows):
        return False
    square = rows[:k]
    if len(square) < k:
        return False
    symbols = set(square[0])
    if len(symbols) != k:
        return False
    for row in square:
        if set(row) != symbols:
            return False
    for col in range(k):
        if {row[col] for row in square} != symbols:
            return False
    return True


@dataclass(frozen=True)
class LogOddsResult:
    log_odds: float
    corrected: bool  # Haldane +0.5 applied to all four cells

    def __float__(self) -> float:
        return self.log_odds


def optimal_log_odds(counts_a, counts_b) -> LogOddsResult:
    """ln[(opt_a/non_a) / (opt_b/non_b)] for {"optimal","non"} count dicts.

    Any zero cell triggers the Haldane correction (+0.5 to all four cells),
    flagged in the result.
    """
    a_opt, a_non = counts_a["optimal"], counts_a["non"]
    b_opt, b_non = counts_b["optimal"], counts_b["non"]
    cells = [a_opt, a_non, b_opt, b_non]
    if any(c < 0 for c in cells):
        raise ValueError("counts must be nonnegative")
    corrected = any(c == 0 for c in cells)
    if corrected:
        a_opt, a_non, b_opt, b_non = (c + 0.5 for c in cells)
    value = math.log((a_opt / a_non) / (b_opt / b_non))
    return LogOddsResult(value, corrected)


def error_rate_ratio(errors_a: float, exposure_a: float,
                     errors_b: float, exposure_b: float) -> float:
    """(errors_a/exposure_a) / (errors_b/exposure_b)."""
    if exposure_a <= 0 or exposure_b <= 0:
        raise ValueError("exposures must be positive")
    if errors_b == 0:
        raise ZeroDenominatorRate("comparison rate is zero; ratio undefined")
    return (errors_a / exposure_a) / (errors_b / exposure_b)
