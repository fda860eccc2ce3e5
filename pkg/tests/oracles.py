"""Independent reference implementations used to derive expected values.

These stay deliberately naive (recursion, enumeration, direct counting) and
never share code with the implementations they check.
"""

from __future__ import annotations

import itertools
from functools import lru_cache


def recursive_levenshtein(a: str, b: str) -> int:
    """Plain recursive edit distance definition."""

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            go(i - 1, j) + 1,
            go(i, j - 1) + 1,
            go(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return go(len(a), len(b))


def best_assignment(matrix) -> float:
    """Maximum total score over all injective assignments (exhaustive)."""
    n_src = len(matrix)
    n_tgt = len(matrix[0]) if n_src else 0
    best = 0.0
    if n_src <= n_tgt:
        for cols in itertools.permutations(range(n_tgt), n_src):
            total = sum(matrix[r][c] for r, c in enumerate(cols))
            if total > best:
                best = total
    else:
        for rows in itertools.permutations(range(n_src), n_tgt):
            total = sum(matrix[r][c] for c, r in enumerate(rows))
            if total > best:
                best = total
    return best


def adjacent_swaps(digits: str) -> set[str]:
    """All strings reachable by exactly one adjacent swap."""
    out = set()
    for i in range(len(digits) - 1):
        if digits[i] != digits[i + 1]:
            swapped = digits[:i] + digits[i + 1] + digits[i] + digits[i + 2 :]
            out.add(swapped)
    return out


def structural_json_diff(a, b, prefix=""):
    """Recursive structural compare; returns (added, removed, changed) paths."""
    added, removed, changed = [], [], []
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            p = f"{prefix}/{k}"
            if k not in a:
                added.append(p)
            elif k not in b:
                removed.append(p)
            else:
                a2, r2, c2 = structural_json_diff(a[k], b[k], p)
                added += a2
                removed += r2
                changed += c2
    elif isinstance(a, list) and isinstance(b, list):
        for i in range(min(len(a), len(b))):
            a2, r2, c2 = structural_json_diff(a[i], b[i], f"{prefix}/{i}")
            added += a2
            removed += r2
            changed += c2
        for i in range(min(len(a), len(b)), len(b)):
            added.append(f"{prefix}/{i}")
        for i in range(min(len(a), len(b)), len(a)):
            removed.append(f"{prefix}/{i}")
    elif a != b or type(a) is not type(b):
        changed.append(prefix or "/")
    return added, removed, changed


def apply_edit_ops(source: str, ops) -> str:
    """Replay an (op, position, char) script against the source string.

    Positions index the original source; replaying in emitted order with a
    running offset keeps them valid.
    """
    result = list(source)
    offset = 0
    for kind, pos, char in ops:
        if kind == "sub":
            result[pos + offset] = char
        elif kind == "del":
            del result[pos + offset]
            offset -= 1
        else:  # ins
            result.insert(pos + offset, char)
            offset += 1
    return "".join(result)


def rounding_scan(source: float, target: float) -> int | None:
    """Smallest d in [0,12] whose half-away rounding reproduces target."""
    from decimal import Decimal, ROUND_HALF_UP

    for d in range(13):
        q = Decimal(repr(source)).quantize(Decimal(1).scaleb(-d), rounding=ROUND_HALF_UP)
        if float(q) == target:
            return d
    return None
