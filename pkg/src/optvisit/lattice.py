"""The memory lattice ``{0,1}^N`` encoded as integer bitmasks.

Target ``j`` (1-based) is stored in bit ``j - 1``.  Bit strings are written in
target order, target 1 first: with ``N = 4`` the state ``(1, 0, 0, 0)`` is the
mask ``0b0001`` and prints as ``"1000"``.
"""

from __future__ import annotations

MAX_N = 12


def final_state(n: int) -> int:
    return (1 << n) - 1


def is_final(p: int, n: int) -> bool:
    return p == final_state(n)


def popcount(p: int) -> int:
    return bin(p).count("1")


def to_bits(p: int, n: int) -> str:
    return "".join("1" if p >> j & 1 else "0" for j in range(n))


def from_bits(bits: str, n: int | None = None) -> int:
    bits = bits.strip()
    if n is not None and len(bits) != n:
        raise ValueError(f"bit string {bits!r} must have length {n}")
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"bit string {bits!r} must consist of 0/1")
    return sum(1 << j for j, c in enumerate(bits) if c == "1")


def to_tuple(p: int, n: int) -> tuple[int, ...]:
    return tuple(p >> j & 1 for j in range(n))


def from_tuple(bits) -> int:
    return sum(1 << j for j, b in enumerate(bits) if b)


def is_successor(p: int, q: int, n: int) -> bool:
    """``q`` keeps every visited bit of ``p`` and sets at least one new one."""
    return q & p == p and q != p and q <= final_state(n)


def successors(p: int, n: int) -> list[int]:
    """All legal switch destinations from ``p`` in ascending mask order."""
    free = final_state(n) & ~p
    out = []
    sub = free
    while sub:
        out.append(p | sub)
        sub = (sub - 1) & free
    out.sort()
    return out


def chi(j: int, p: int, q: int) -> int:
    """1 if target ``j`` (1-based) changes between ``p`` and ``q``."""
    return (p ^ q) >> (j - 1) & 1


def backward_levels(n: int) -> list[list[int]]:
    """States grouped by number of unvisited targets, ``p̄`` first."""
    if not 1 <= n <= MAX_N:
        raise ValueError(f"number of targets must be in 1..{MAX_N}, got {n}")
    levels: list[list[int]] = [[] for _ in range(n + 1)]
    for p in range(1 << n):
        levels[n - popcount(p)].append(p)
    return levels


def backward_order(n: int) -> list[int]:
    return [p for level in backward_levels(n) for p in level]
