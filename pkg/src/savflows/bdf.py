"""Backward-differentiation coefficient tables and step history.

The implicit combination uses weights `a_coeffs` (newest first) so that
(alpha*u_new - sum a_i u_i)/dt approximates du/dt at the new time level to
order k; `b_coeffs` extrapolates the newest k values to the new time level
exactly for polynomials of degree <= k-1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction as F


# Exact rationals; evaluated to 64-bit floats at table construction.
_TABLES = {
    1: (F(1), [F(1)], [F(1)]),
    2: (F(3, 2), [F(2), F(-1, 2)], [F(2), F(-1)]),
    3: (F(11, 6), [F(3), F(-3, 2), F(1, 3)], [F(3), F(-3), F(1)]),
    4: (F(25, 12), [F(4), F(-3), F(4, 3), F(-1, 4)], [F(4), F(-6), F(4), F(-1)]),
    5: (
        F(137, 60),
        [F(5), F(-5), F(10, 3), F(-5, 4), F(1, 5)],
        [F(5), F(-10), F(10), F(-5), F(1)],
    ),
}


@dataclass(frozen=True)
class BdfTable:
    k: int
    alpha: float
    a_coeffs: tuple[float, ...]
    b_coeffs: tuple[float, ...]


def bdf_table(k: int) -> BdfTable:
    if k not in _TABLES:
        raise ValueError(f"order must be between 1 and 5, got {k}")
    alpha, a, b = _TABLES[k]
    return BdfTable(k, float(alpha), tuple(map(float, a)), tuple(map(float, b)))


class InsufficientHistoryError(RuntimeError):
    pass


class History:
    """Ring buffer of the most recent accepted entries, newest last.

    Entries are (time, value) pairs with strictly increasing times; values
    may be fields or scalars (anything supporting + and scalar *).
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) == self.capacity

    def push(self, t: float, value):
        if self._items and t <= self._items[-1][0]:
            raise ValueError(f"history times must be strictly increasing ({t} after "
                             f"{self._items[-1][0]})")
        self._items.append((t, value))

    def newest_first(self, count: int | None = None) -> list:
        count = self.capacity if count is None else count
        if len(self._items) < count:
            raise InsufficientHistoryError(
                f"need {count} history entries, have {len(self._items)}"
            )
        return [v for _, v in list(self._items)[-count:]][::-1]

    def latest_time(self) -> float:
        if not self._items:
            raise InsufficientHistoryError("history is empty")
        return self._items[-1][0]

    def latest(self):
        if not self._items:
            raise InsufficientHistoryError("history is empty")
        return self._items[-1][1]


def weighted_sum(values, weights):
    out = values[0] * weights[0]
    for v, w in zip(values[1:], weights[1:]):
        out = out + v * w
    return out


def combine_A(h: History, t: BdfTable):
    """Weighted history combination entering the implicit side."""
    return weighted_sum(h.newest_first(t.k), t.a_coeffs)


def extrapolate_B(h: History, t: BdfTable):
    """Extrapolation of the newest k entries to the next time level."""
    return weighted_sum(h.newest_first(t.k), t.b_coeffs)
