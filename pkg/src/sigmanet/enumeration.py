"""Exact bijections between positive integers, rationals and monic polynomials.

Positive integers are mapped to positive rationals by the Calkin-Wilf tree,
integers to signed rationals by interleaving, and canonical continued
fractions of positive rationals to monic polynomials with rational
coefficients.

The binary expansion of ``n`` and the continued fraction of ``q_n`` carry the
same information: reading ``n`` from the least significant bit, the run
lengths of alternating ones and zeros are the partial quotients of ``q_n``
(the run next to the leading bit is one shorter).  :class:`TreeIndex` stores
an index in that run-length form, which keeps indices with astronomically
many bits usable without ever building the integer.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import gmpy2

Rational = Fraction
IntLike = Union[int, "TreeIndex"]

# indices wider than this are never materialized as Python ints
DEFAULT_MAX_BITS = 1 << 20

_RUN = re.compile(r"1+|0+")


def _as_fraction(q) -> Fraction:
    if isinstance(q, Fraction):
        return q
    if isinstance(q, int):
        return Fraction(q)
    if isinstance(q, str):
        return parse_rational(q)
    raise TypeError(f"expected an exact rational, got {type(q).__name__}")


def parse_rational(text: str) -> Fraction:
    """Parse ``"num/den"`` or an integer literal; decimals are rejected."""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(parse_int(num), parse_int(den))
    return Fraction(parse_int(text))


def parse_int(text: str) -> int:
    text = text.strip()
    if not re.fullmatch(r"[+-]?\d+", text):
        raise ValueError(f"not an integer literal: {text!r}")
    return int(gmpy2.mpz(text))


def int_to_decimal(n: int) -> str:
    """Decimal string of an integer of any size."""
    return gmpy2.mpz(n).digits(10)


def _size(k: int) -> str:
    """Short text for a possibly enormous count."""
    return str(k) if k.bit_length() <= 64 else f"about 2^{k.bit_length() - 1}"


def format_rational(q: Fraction) -> str:
    return f"{int_to_decimal(q.numerator)}/{int_to_decimal(q.denominator)}"


# --------------------------------------------------------------------------
# continued fractions


@dataclass(frozen=True)
class ContinuedFraction:
    """Canonical finite continued fraction ``[m0; m1, ..., ml]``."""

    terms: tuple[int, ...]

    def __post_init__(self):
        t = self.terms
        if not t:
            raise ValueError("a continued fraction needs at least one term")
        if any(not isinstance(m, int) for m in t):
            raise TypeError("terms must be integers")
        if t[0] < 0 or any(m < 1 for m in t[1:]):
            raise ValueError(f"non-canonical terms {t}")
        if len(t) > 1 and t[-1] < 2:
            raise ValueError(f"last term must be at least 2 in {t}")
        if len(t) == 1 and t[0] < 1:
            raise ValueError("value must be positive")

    def value(self) -> Fraction:
        num, den = 1, 0
        for m in reversed(self.terms):
            num, den = m * num + den, num
        return Fraction(num, den)

    def __len__(self) -> int:
        return len(self.terms)

    def __str__(self) -> str:
        head, *rest = self.terms
        return f"[{head}; {', '.join(map(str, rest))}]" if rest else f"[{head}]"


def cf_canonical(q) -> ContinuedFraction:
    """Canonical continued fraction of a positive rational (Euclid)."""
    q = _as_fraction(q)
    if q <= 0:
        raise ValueError(f"continued fractions are defined here for q > 0, got {q}")
    a, b = q.numerator, q.denominator
    terms = []
    while b:
        m, r = divmod(a, b)
        terms.append(m)
        a, b = b, r
    # Euclid already ends with a term >= 2 unless the expansion has one term
    return ContinuedFraction(tuple(terms))


def cf_depth(q) -> int:
    """Depth of ``|q|`` in the Calkin-Wilf tree (root 1 has depth 0, and 0 has depth 0).

    Equal to ``bit_length(calkin_wilf_index(|q|)) - 1``.
    """
    q = abs(_as_fraction(q))
    if q == 0:
        return 0
    return sum(cf_canonical(q).terms) - 1


# --------------------------------------------------------------------------
# run-length form of positive integers


@dataclass(frozen=True)
class TreeIndex:
    """A positive integer ``n`` stored as the continued fraction of ``q_n``.

    ``terms`` are the canonical partial quotients of the Calkin-Wilf value,
    equivalently the lengths of the alternating bit runs of ``n`` read from
    the least significant end.  ``bit_length`` and the leading bits are
    available without materializing ``n``.
    """

    terms: tuple[int, ...]

    def __post_init__(self):
        ContinuedFraction(self.terms)

    @classmethod
    def from_int(cls, n: int) -> "TreeIndex":
        if not isinstance(n, int) or isinstance(n, bool):
            raise TypeError("index must be an int")
        if n < 1:
            raise ValueError(f"indices start at 1, got {n}")
        runs = [len(r) for r in _RUN.findall(bin(n)[3:][::-1])]
        body = bin(n)[3:]
        if not body:
            return cls((1,))
        terms = []
        if body[-1] == "0":
            terms.append(0)
        terms.extend(runs)
        terms[-1] += 1
        return cls(tuple(terms))

    @classmethod
    def from_rational(cls, q) -> "TreeIndex":
        return cls(cf_canonical(q).terms)

    @classmethod
    def of(cls, n: IntLike) -> "TreeIndex":
        return n if isinstance(n, TreeIndex) else cls.from_int(n)

    @cached_property
    def rational(self) -> Fraction:
        """The Calkin-Wilf value ``q_n``."""
        return ContinuedFraction(self.terms).value()

    def bit_length(self) -> int:
        return sum(self.terms)

    def _runs_msb_first(self) -> Iterable[tuple[int, int]]:
        """Yield ``(bit, length)`` runs below the leading one, most significant first."""
        last = len(self.terms) - 1
        for i in range(last, -1, -1):
            length = self.terms[i] - 1 if i == last else self.terms[i]
            if length:
                yield (1 if i % 2 == 0 else 0), length

    def to_int(self, max_bits: int | None = DEFAULT_MAX_BITS) -> int:
        bits = self.bit_length()
        if max_bits is not None and bits > max_bits:
            raise OverflowError(f"index has {_size(bits)} bits, above the limit of {max_bits}")
        n = 1
        for bit, length in self._runs_msb_first():
            n <<= length
            if bit:
                n |= (1 << length) - 1
        return n

    def is_materializable(self, max_bits: int = DEFAULT_MAX_BITS) -> bool:
        return self.bit_length() <= max_bits

    def top_bits(self, k: int) -> tuple[int, int]:
        """Return ``(top, shift)`` with ``top = n >> shift`` holding the leading ``min(k, bits)`` bits."""
        if k < 1:
            raise ValueError("k must be positive")
        top, used = 1, 1
        for bit, length in self._runs_msb_first():
            take = min(length, k - used)
            if take <= 0:
                break
            top <<= take
            if bit:
                top |= (1 << take) - 1
            used += take
        return top, self.bit_length() - used

    def succ(self) -> "TreeIndex":
        # q_{n+1} = 1 / (2 floor(q_n) - q_n + 1)
        q = self.rational
        return TreeIndex.from_rational(1 / (2 * (q.numerator // q.denominator) - q + 1))

    def pred(self) -> "TreeIndex":
        q = self.rational
        if q == 1:
            raise ValueError("1 has no predecessor")
        inv = 1 / q
        if inv.denominator == 1:
            return TreeIndex.from_rational(inv - 1)
        fl = inv.numerator // inv.denominator
        return TreeIndex.from_rational(fl + 1 - (inv - fl))

    def __int__(self) -> int:
        return self.to_int()

    def decimal(self, max_bits: int = DEFAULT_MAX_BITS) -> str | None:
        return int_to_decimal(self.to_int(max_bits=None)) if self.is_materializable(max_bits) else None

    def to_json(self, max_bits: int = DEFAULT_MAX_BITS) -> dict:
        return {"n": self.decimal(max_bits), "cf": [int_to_decimal(m) for m in self.terms]}

    @classmethod
    def from_json(cls, obj: dict) -> "TreeIndex":
        if obj.get("cf") is not None:
            idx = cls(tuple(parse_int(m) for m in obj["cf"]))
            if obj.get("n") is not None and idx.decimal() != obj["n"].strip():
                raise ValueError("index fields 'n' and 'cf' disagree")
            return idx
        return cls.from_int(parse_int(obj["n"]))

    def __str__(self) -> str:
        dec = self.decimal(max_bits=4096)
        return dec if dec is not None else f"<index with {_size(self.bit_length())} bits>"

    def __repr__(self) -> str:
        if self.bit_length() <= 4096:
            return f"TreeIndex({self.terms})"
        return f"TreeIndex(<{len(self.terms)} terms, {_size(self.bit_length())} bits>)"


# --------------------------------------------------------------------------
# Calkin-Wilf sequence and signed enumeration


def calkin_wilf(n: int) -> Fraction:
    """``q_n`` by walking the tree along the binary digits of ``n``."""
    if isinstance(n, TreeIndex):
        return n.rational
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"calkin_wilf needs a positive integer, got {n!r}")
    a, b = 1, 1
    for run in _RUN.findall(bin(n)[3:]):
        r = len(run)
        if run[0] == "0":
            b += r * a
        else:
            a += r * b
    return Fraction(a, b)


def calkin_wilf_index(q) -> int:
    q = _as_fraction(q)
    if q <= 0:
        raise ValueError(f"Calkin-Wilf indices exist only for q > 0, got {q}")
    return TreeIndex.from_rational(q).to_int(max_bits=None)


def rational_enum(k: int) -> Fraction:
    """``r_0 = 0, r_{2n} = q_n, r_{2n-1} = -q_n``."""
    if not isinstance(k, int) or k < 0:
        raise ValueError(f"rational_enum needs k >= 0, got {k!r}")
    if k == 0:
        return Fraction(0)
    if k % 2 == 0:
        return calkin_wilf(k // 2)
    return -calkin_wilf((k + 1) // 2)


def rational_enum_index(r) -> int:
    r = _as_fraction(r)
    if r == 0:
        return 0
    if r > 0:
        return 2 * calkin_wilf_index(r)
    return 2 * calkin_wilf_index(-r) - 1


# --------------------------------------------------------------------------
# monic polynomials


@dataclass(frozen=True)
class MonicPoly:
    """Monic polynomial ``rho_0 + rho_1 x + ... + rho_{l-1} x^{l-1} + x^l``."""

    coeffs: tuple[Fraction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_as_fraction(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    def full_coeffs(self) -> tuple[Fraction, ...]:
        """Ascending coefficients including the leading 1."""
        return self.coeffs + (Fraction(1),)

    def __call__(self, x):
        acc = 1
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def eval_with(self, x, coeffs: Sequence):
        """Horner evaluation with pre-converted ascending coefficients (leading 1 excluded)."""
        acc = 1
        for c in reversed(coeffs):
            acc = acc * x + c
        return acc

    def derivative(self) -> tuple[Fraction, ...]:
        full = self.full_coeffs()
        return tuple(i * full[i] for i in range(1, len(full)))

    def bounds(self) -> tuple[Fraction, Fraction]:
        """``(B_1, B_2)``: lower and upper bounds of ``u`` on ``[0, 1]`` from coefficient signs."""
        if not self.coeffs:
            return Fraction(1), Fraction(1)
        rho0, rest = self.coeffs[0], self.coeffs[1:]
        neg = sum((c for c in rest if c < 0), Fraction(0))
        pos = sum((c for c in rest if c > 0), Fraction(0))
        return rho0 + neg, rho0 + pos + 1

    def to_json(self) -> list[str]:
        return [format_rational(c) for c in self.coeffs]

    @classmethod
    def from_json(cls, items: Sequence[str]) -> "MonicPoly":
        return cls(tuple(parse_rational(s) for s in items))

    @classmethod
    def parse(cls, text: str) -> "MonicPoly":
        """Parse expressions such as ``"x^3 - 1/2 x + 2"``; the result must be monic."""
        src = text.replace(" ", "").replace("**", "^").replace("*", "")
        if not src:
            raise ValueError("empty polynomial")
        if src[0] not in "+-":
            src = "+" + src
        terms = re.findall(r"[+-][^+-]+", src)
        if "".join(terms) != src:
            raise ValueError(f"cannot parse polynomial {text!r}")
        coeffs: dict[int, Fraction] = {}
        for term in terms:
            m = re.fullmatch(r"([+-])(\d+(?:/\d+)?)?(x(?:\^(\d+))?)?", term)
            if not m or (m.group(2) is None and m.group(3) is None):
                raise ValueError(f"cannot parse term {term!r} in {text!r}")
            sign = -1 if m.group(1) == "-" else 1
            c = parse_rational(m.group(2)) if m.group(2) else Fraction(1)
            power = 0 if m.group(3) is None else int(m.group(4) or 1)
            coeffs[power] = coeffs.get(power, Fraction(0)) + sign * c
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        if not coeffs:
            raise ValueError("the zero polynomial is not monic")
        deg = max(coeffs)
        if coeffs[deg] != 1:
            raise ValueError(f"polynomial {text!r} is not monic")
        return cls(tuple(coeffs.get(i, Fraction(0)) for i in range(deg)))

    def __str__(self) -> str:
        parts = []
        for power, c in sorted(enumerate(self.full_coeffs()), reverse=True):
            if c == 0:
                continue
            mag = abs(c)
            mono = "" if power == 0 else ("x" if power == 1 else f"x^{power}")
            body = mono if (mag == 1 and mono) else (f"{mag}" + (f" {mono}" if mono else ""))
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out


def poly_to_address(p: MonicPoly) -> TreeIndex:
    """Index of ``p`` in run-length form; works for any coefficient size."""
    if not isinstance(p, MonicPoly):
        raise TypeError("poly_to_address needs a MonicPoly")
    if p.degree == 0:
        return TreeIndex((1,))
    ks = [rational_enum_index(c) for c in p.coeffs]
    if p.degree == 1:
        terms = [ks[0] + 2]
    else:
        terms = [ks[0]] + [k + 1 for k in ks[1:-1]] + [ks[-1] + 2]
    return TreeIndex(tuple(terms))


def poly_to_index(p: MonicPoly, max_bits: int | None = DEFAULT_MAX_BITS) -> int:
    if not isinstance(p, MonicPoly):
        raise ValueError("poly_to_index needs a monic polynomial")
    return poly_to_address(p).to_int(max_bits=max_bits)


def index_to_poly(n: IntLike) -> MonicPoly:
    """``u_n``: ``u_1 = 1``; otherwise decoded from the continued fraction of ``q_n``."""
    terms = TreeIndex.of(n).terms
    if terms == (1,):
        return MonicPoly()
    if len(terms) == 1:
        return MonicPoly((rational_enum(terms[0] - 2),))
    shifts = [0] + [1] * (len(terms) - 2) + [2]
    return MonicPoly(tuple(rational_enum(m - sh) for m, sh in zip(terms, shifts)))


def first_polys(count: int) -> list[MonicPoly]:
    return [index_to_poly(n) for n in range(1, count + 1)]


def iter_calkin_wilf() -> Iterable[Fraction]:
    """The sequence ``q_1, q_2, ...`` via the successor recurrence."""
    q = Fraction(1)
    for _ in itertools.count():
        yield q
        q = 1 / (2 * (q.numerator // q.denominator) - q + 1)
