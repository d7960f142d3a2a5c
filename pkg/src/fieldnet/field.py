"""Prime-field arithmetic with centered-lift signed semantics.

Residues live in [0, p) internally; the signed view maps them to
[-(p-1)/2, (p-1)/2] so that network values (which are signed) embed
losslessly as long as they stay within that range.  Field elements are
plain Python ints, which also gives arbitrary-precision intermediates
for free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

# A field element is a reduced residue: an int in [0, p).
FieldElement = int

# Witness set proven sufficient for all n < 3.3e24, which covers 64-bit.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin primality test, exact for n < 2**64."""
    if n < 2:
        return False
    for q in _MR_WITNESSES:
        if n % q == 0:
            return n == q
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    if n <= 2:
        return 2
    c = n | 1
    while not is_prime(c):
        c += 2
    return c


@dataclass(frozen=True)
class Modulus:
    """An odd prime p < 2**64 defining the field F_p."""

    p: int

    def __post_init__(self):
        if not isinstance(self.p, int) or isinstance(self.p, bool):
            raise TypeError("modulus must be an int")
        if self.p < 3 or self.p >= 1 << 64:
            raise ValueError(f"modulus must be in [3, 2**64), got {self.p}")
        if not is_prime(self.p):
            raise ValueError(f"modulus {self.p} is not prime")

    @property
    def half(self) -> int:
        """Largest magnitude representable in the signed view: (p-1)/2."""
        return (self.p - 1) // 2


def encode(v: int, m: Modulus) -> FieldElement:
    """Embed a signed integer with |v| <= (p-1)/2 as a residue mod p."""
    if abs(v) > m.half:
        raise OverflowError(
            f"|{v}| exceeds (p-1)/2 = {m.half}; signed embedding would wrap"
        )
    return v % m.p


def decode(e: FieldElement, m: Modulus) -> int:
    """Centered lift: residue in [0, p) back to [-(p-1)/2, (p-1)/2]."""
    return e if e <= m.half else e - m.p


def add(a: FieldElement, b: FieldElement, m: Modulus) -> FieldElement:
    return (a + b) % m.p


def mul(a: FieldElement, b: FieldElement, m: Modulus) -> FieldElement:
    # Python ints widen automatically, so a*b never overflows.
    return (a * b) % m.p


def neg(a: FieldElement, m: Modulus) -> FieldElement:
    return (-a) % m.p


def dot(a: Sequence[FieldElement], b: Sequence[FieldElement], m: Modulus) -> FieldElement:
    """Sum of products mod p, reduced as it accumulates."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    s = 0
    for x, y in zip(a, b):
        s = (s + x * y) % m.p
    return s


def eval_int_poly_field(coeffs: Sequence[int], x: FieldElement, m: Modulus) -> FieldElement:
    """Horner evaluation in F_p of a polynomial with signed integer coefficients.

    coeffs[k] is the coefficient of x^k.
    """
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + encode(c, m)) % m.p
    return acc
