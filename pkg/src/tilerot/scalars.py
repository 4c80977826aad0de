"""Exact arithmetic in real quadratic fields, plus tolerance helpers.

Tile lengths and form weights live either in a fixed field Q(sqrt(d)) (exact
mode) or in ordinary floats with a global tolerance (float mode).  Exact mode
is what lets "is this integral ever exactly an integer" be decided rather
than guessed.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from functools import total_ordering
from typing import Union

RationalLike = Union[int, Fraction]


def _is_square_free(d: int) -> bool:
    if d < 2:
        return False
    k = 2
    while k * k <= d:
        if d % (k * k) == 0:
            return False
        k += 1
    return True


@total_ordering
class QuadraticNumber:
    """p + q*sqrt(d) with rational p, q and a square-free integer d >= 2.

    Purely rational values are stored with d == 0 and combine with any field.
    Arithmetic between two numbers with different nonzero d is rejected.
    Ordering is exact (no floating point is consulted).
    """

    __slots__ = ("p", "q", "d")

    def __init__(self, p: RationalLike, q: RationalLike = 0, d: int = 0):
        q = Fraction(q)
        if q == 0:
            d = 0
        elif d == 0 or not _is_square_free(d):
            raise ValueError(f"irrational part needs a square-free d >= 2, got d={d}")
        object.__setattr__(self, "p", Fraction(p))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", d)

    def __setattr__(self, name, value):
        raise AttributeError("QuadraticNumber is immutable")

    # -- helpers -----------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "QuadraticNumber":
        if isinstance(x, QuadraticNumber):
            return x
        if isinstance(x, (int, Fraction)):
            return QuadraticNumber(x)
        raise TypeError(f"cannot mix QuadraticNumber with {type(x).__name__}")

    def _join(self, other: "QuadraticNumber") -> int:
        if self.d == 0:
            return other.d
        if other.d == 0 or other.d == self.d:
            return self.d
        raise ValueError(f"mixed quadratic fields: sqrt({self.d}) vs sqrt({other.d})")

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return QuadraticNumber(self.p + o.p, self.q + o.q, self._join(o))

    __radd__ = __add__

    def __neg__(self):
        return QuadraticNumber(-self.p, -self.q, self.d)

    def __sub__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        d = self._join(o)
        p = self.p * o.p + self.q * o.q * d
        q = self.p * o.q + self.q * o.p
        return QuadraticNumber(p, q, d)

    __rmul__ = __mul__

    def __truediv__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        d = self._join(o)
        norm = o.p * o.p - o.q * o.q * d
        if norm == 0:
            if o.p == 0 and o.q == 0:
                raise ZeroDivisionError("division by zero")
            raise ZeroDivisionError("division by zero norm element")
        # multiply by the conjugate (o.p - o.q sqrt d) / norm
        p = (self.p * o.p - self.q * o.q * d) / norm
        q = (self.q * o.p - self.p * o.q) / norm
        return QuadraticNumber(p, q, d)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- ordering ----------------------------------------------------------

    def sign(self) -> int:
        """Exact sign of p + q*sqrt(d)."""
        p, q = self.p, self.q
        if q == 0:
            return (p > 0) - (p < 0)
        if p == 0:
            return 1 if q > 0 else -1
        if p > 0 and q > 0:
            return 1
        if p < 0 and q < 0:
            return -1
        # opposite signs: compare p^2 with d q^2 on the side of p
        lhs, rhs = p * p, self.d * q * q
        if p > 0:  # q < 0
            return 1 if lhs > rhs else (-1 if lhs < rhs else 0)
        return -1 if lhs > rhs else (1 if lhs < rhs else 0)

    def __eq__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        if self.d and o.d and self.d != o.d:
            return False
        return self.p == o.p and self.q == o.q

    def __lt__(self, other):
        o = self._coerce(other)
        return (self - o).sign() < 0

    def __hash__(self):
        if self.q == 0:
            return hash(self.p)
        return hash((self.p, self.q, self.d))

    def __bool__(self):
        return self.p != 0 or self.q != 0

    # -- conversions -------------------------------------------------------

    def __float__(self) -> float:
        if self.q == 0:
            return float(self.p)
        return float(self.p) + float(self.q) * math.sqrt(self.d)

    def __floor__(self) -> int:
        n = math.floor(float(self))
        # correct any float rounding at integer boundaries, exactly
        while (self - n).sign() < 0:
            n -= 1
        while (self - (n + 1)).sign() >= 0:
            n += 1
        return n

    def is_rational(self) -> bool:
        return self.q == 0

    def is_integer(self) -> bool:
        return self.q == 0 and self.p.denominator == 1

    def __repr__(self):
        if self.q == 0:
            return f"QuadraticNumber({self.p})"
        return f"QuadraticNumber({self.p}, {self.q}, d={self.d})"

    def __str__(self):
        if self.q == 0:
            return str(self.p)
        sign = "+" if self.q >= 0 else "-"
        return f"{self.p} {sign} {abs(self.q)}*sqrt({self.d})"


def sqrt_of(d: int) -> QuadraticNumber:
    return QuadraticNumber(0, 1, d)


GOLDEN = QuadraticNumber(Fraction(1, 2), Fraction(1, 2), 5)  # (1 + sqrt 5)/2

#: Scalar values flowing through the library: exact or float.
Scalar = Union[QuadraticNumber, Fraction, int, float]


def as_float(x: Scalar) -> float:
    return float(x)


def exact(x: Scalar) -> bool:
    return isinstance(x, (QuadraticNumber, Fraction, int))


def scalars_close(a: Scalar, b: Scalar, tol: float) -> bool:
    """Equality test honoring the mode: exact when both sides are exact."""
    if exact(a) and exact(b):
        if isinstance(a, QuadraticNumber) or isinstance(b, QuadraticNumber):
            return QuadraticNumber._coerce(a) == QuadraticNumber._coerce(b)
        return a == b
    return abs(float(a) - float(b)) <= tol


def floor_scalar(x: Scalar) -> int:
    if isinstance(x, QuadraticNumber):
        return math.floor(x)
    if isinstance(x, (int, Fraction)):
        return math.floor(x)
    return math.floor(x)


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.\d+|\d+)|(sqrt\d+)|(.))")


def parse_scalar(text: str, default_d: int | None = None):
    """Parse an exact scalar expression: integers, fractions, sqrtN, + - * / ().

    Examples: "1", "3/2", "(1+sqrt5)/2", "1+1*sqrt5/2", "21/20".
    Decimal literals force a float result.  Returns QuadraticNumber, Fraction
    coerced to QuadraticNumber, or float.
    """
    tokens: list[str] = []
    saw_decimal = False
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            break
        pos = m.end()
        num, root, ch = m.groups()
        if num is not None:
            tokens.append(num)
            saw_decimal = saw_decimal or "." in num
        elif root is not None:
            tokens.append(root)
        elif ch.strip():
            tokens.append(ch)
    tokens.append("$")

    state = {"i": 0}

    def peek() -> str:
        return tokens[state["i"]]

    def advance() -> str:
        t = tokens[state["i"]]
        state["i"] += 1
        return t

    def atom():
        t = advance()
        if t == "(":
            v = expr()
            if advance() != ")":
                raise ValueError(f"unbalanced parentheses in {text!r}")
            return v
        if t == "-":
            return -atom()
        if t == "+":
            return atom()
        if t.startswith("sqrt"):
            d = int(t[4:])
            if default_d is not None and d != default_d:
                raise ValueError(f"sqrt{d} conflicts with declared field sqrt{default_d}")
            return math.sqrt(d) if saw_decimal else sqrt_of(d)
        if "." in t:
            return float(t)
        if t.isdigit():
            return float(t) if saw_decimal else QuadraticNumber(int(t))
        raise ValueError(f"cannot parse scalar {text!r} (at token {t!r})")

    def term():
        v = atom()
        while peek() in ("*", "/"):
            op = advance()
            w = atom()
            v = v * w if op == "*" else v / w
        return v

    def expr():
        v = term()
        while peek() in ("+", "-"):
            op = advance()
            w = term()
            v = v + w if op == "+" else v - w
        return v

    value = expr()
    if peek() != "$":
        raise ValueError(f"trailing input in scalar expression {text!r}")
    if saw_decimal:
        return float(value)
    return value
