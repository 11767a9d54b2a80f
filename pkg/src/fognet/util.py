"""Exact-rate arithmetic and deterministic seed derivation.

All capacities and traffic rates in the simulator are `fractions.Fraction`
values so that conservation checks hold exactly, with no float tolerance.
Config files may spell rates as ints, decimals, or "p/q" strings.
"""

from __future__ import annotations

import hashlib
from decimal import Decimal, InvalidOperation
from fractions import Fraction

ZERO = Fraction(0)


def to_rate(value) -> Fraction:
    """Parse a config number into an exact Fraction.

    Accepts int, float, Fraction, decimal strings ("2.5") and ratio
    strings ("5/2"). Floats go through their shortest repr, so a YAML
    ``0.1`` becomes exactly 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError(f"expected a number, got bool {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(Decimal(repr(value)))
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, _, den = text.partition("/")
            return Fraction(int(num), int(den))
        try:
            return Fraction(Decimal(text))
        except InvalidOperation as exc:
            raise ValueError(f"not a rate: {value!r}") from exc
    raise TypeError(f"expected a number, got {type(value).__name__}")


def rate_str(x: Fraction) -> str:
    """Shortest exact rendering of a Fraction: decimal if finite, else p/q."""
    num, den = x.numerator, x.denominator
    if den == 1:
        return str(num)
    rest = den
    twos = fives = 0
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        return f"{num}/{den}"
    digits = max(twos, fives)
    scaled = abs(num) * 10**digits // den
    text = str(scaled).rjust(digits + 1, "0")
    sign = "-" if num < 0 else ""
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def fmt6(x) -> str:
    """Fixed 6-decimal rendering used in metric exports (byte-stable)."""
    return f"{float(x):.6f}"


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent sub-seed for one random stream.

    Streams are keyed by label so adding a new stream never perturbs the
    draws of existing ones.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
