"""The computable sigmoidal activation.

Layout of the real line for interval length ``s``:

* ``x < s``: a smooth tail rising from 0 to ``(1 + M_1)/2``;
* ``[(2n-1)s, 2ns]``: the affine image ``a_n + b_n u_n(t)`` of the n-th monic
  rational polynomial, ``t = x/s - (2n-1)``;
* ``[2ns, (2n+1)s]``: a C-infinity blend from piece ``n`` to the midpoint value
  ``K_n`` and on to piece ``n+1``.

Everything is evaluated in a numeric context: plain floats (``mpmath.fp``)
at 53 bits, otherwise an ``mpmath`` context at the requested precision.
Pieces are addressed by :class:`~sigmanet.enumeration.TreeIndex`, so the
index of a piece may have far more bits than fit in memory as an integer.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath

from .enumeration import IntLike, MonicPoly, TreeIndex, index_to_poly

# pieces whose index has more bits than precision + _LOG_GUARD use leading bits for log(n)
_LOG_GUARD = 24

C_BOUNDS = ("coefficient", "exact")


@dataclass(frozen=True)
class SigmaParams:
    s: float = 3.0
    lambda_mono: float = 0.5
    precision: int = 53
    # "coefficient": sum of i |rho_i| R^(i-1); "exact": true supremum of |u'|
    c_bound: str = "coefficient"

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"s must be positive and finite, got {self.s}")
        if not (self.lambda_mono > 0 and math.isfinite(self.lambda_mono)):
            raise ValueError(f"lambda_mono must be positive, got {self.lambda_mono}")
        if int(self.precision) != self.precision or self.precision < 53:
            raise ValueError(f"precision must be an integer >= 53, got {self.precision}")
        if self.c_bound not in C_BOUNDS:
            raise ValueError(f"c_bound must be one of {C_BOUNDS}, got {self.c_bound!r}")

    def with_precision(self, bits: int) -> "SigmaParams":
        return replace(self, precision=max(self.precision, int(bits)))


@lru_cache(maxsize=None)
def numeric_context(precision: int):
    """``mpmath.fp`` for double precision, otherwise a private multiprecision context."""
    if precision == 53:
        return mpmath.fp
    ctx = mpmath.MPContext()
    ctx.prec = precision
    return ctx


def to_ctx(ctx, q):
    """Round an exact rational (or int) into ``ctx``."""
    if ctx is mpmath.fp:
        return float(q)
    if isinstance(q, Fraction):
        return ctx.mpf(q.numerator) / q.denominator
    return ctx.mpf(q)


def format_real(ctx, x) -> str:
    """Deterministic decimal text: shortest round-trip for floats, enough digits otherwise."""
    if ctx is mpmath.fp:
        return repr(float(x))
    digits = int(ctx.prec * math.log10(2)) + 3
    return mpmath.libmp.to_str(ctx.mpf(x)._mpf_, digits)


def parse_real(ctx, text: str):
    return float(text) if ctx is mpmath.fp else ctx.mpf(text)


def bump(ctx, x):
    """``exp(-1/x)`` for ``x > 0``, else 0."""
    if x <= 0:
        return ctx.zero if ctx is not mpmath.fp else 0.0
    return ctx.exp(-1 / x)


def transition(a, b, x, ctx=mpmath.fp):
    """C-infinity step equal to 1 for ``x <= a`` and 0 for ``x >= b``."""
    if not a < b:
        raise ValueError(f"transition needs a < b, got a={a}, b={b}")
    return _blend(ctx, x - a, b - x)


def _blend(ctx, left, right):
    """Weight of the left side given distances to both ends of a transition."""
    if left <= 0:
        return ctx.one if ctx is not mpmath.fp else 1.0
    if right <= 0:
        return ctx.zero if ctx is not mpmath.fp else 0.0
    wl, wr = bump(ctx, right), bump(ctx, left)
    return wl / (wl + wr)


# --------------------------------------------------------------------------
# suprema of |u'| for the transition widths


def sup_abs_poly(coeffs: Sequence[Fraction], lo: Fraction, hi: Fraction) -> Fraction:
    """Upper bound for ``max |v|`` on ``[lo, hi]``, exact when the critical points are rational.

    ``coeffs`` are ascending.  Critical points of degree >= 3 polynomials are
    isolated in rational intervals and bounded outward.
    """
    coeffs = list(coeffs)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    if not coeffs:
        return Fraction(0)

    def val(x):
        acc = Fraction(0)
        for c in reversed(coeffs):
            acc = acc * x + c
        return acc

    best = max(abs(val(lo)), abs(val(hi)))
    dv = [i * coeffs[i] for i in range(1, len(coeffs))]
    if len(dv) <= 1:
        return best
    if len(dv) == 2:
        root = -dv[0] / dv[1]
        if lo < root < hi:
            best = max(best, abs(val(root)))
        return best
    import sympy

    x = sympy.Symbol("x")
    poly = sympy.Poly([sympy.Rational(c.numerator, c.denominator) for c in reversed(dv)], x, domain="QQ")
    eps = sympy.Rational(1, 2**64)
    d2 = [i * dv[i] for i in range(1, len(dv))]
    for (l, r), _mult in poly.intervals(inf=sympy.Rational(lo.numerator, lo.denominator),
                                        sup=sympy.Rational(hi.numerator, hi.denominator), eps=eps):
        l, r = Fraction(int(l.p), int(l.q)), Fraction(int(r.p), int(r.q))
        mid = (l + r) / 2
        rad = max(abs(l), abs(r))
        # v' vanishes at the root, so |v(root) - v(mid)| <= max|v''| (r-l)^2 / 2
        slope2 = sum(abs(c) * rad**i for i, c in enumerate(d2))
        best = max(best, abs(val(mid)) + slope2 * (r - l) ** 2 / 2)
    return best


def coefficient_bound(coeffs: Sequence[Fraction], lo: Fraction, hi: Fraction) -> Fraction:
    """Triangle-inequality bound ``sum |c_i| R^i`` for ``|v|`` on ``[lo, hi]``, ``R = max(|lo|, |hi|)``."""
    rad = max(abs(lo), abs(hi))
    return sum((abs(c) * rad**i for i, c in enumerate(coeffs)), Fraction(0))


# --------------------------------------------------------------------------
# piece data


@dataclass(frozen=True)
class PieceCore:
    """Data needed to evaluate piece ``n`` on its own interval."""

    index: TreeIndex
    u: MonicPoly
    B_1: Fraction
    B_2: Fraction
    M: object
    one_minus_M: object
    a: object
    b: object
    u_ctx: tuple


@dataclass(frozen=True)
class PieceData:
    n: TreeIndex
    u_n: MonicPoly
    B_1: Fraction
    B_2: Fraction
    M_n: object
    a_n: object
    b_n: object
    K_n: object
    delta: object
    delta_bar: object
    delta_units: Fraction
    delta_bar_units: Fraction


class Sigma:
    """Evaluator for one parameter set, with a thread-safe cache of piece data."""

    def __init__(self, params: SigmaParams):
        self.params = params
        self.ctx = numeric_context(params.precision)
        ctx = self.ctx
        self.s = to_ctx(ctx, Fraction(params.s))
        self.c = to_ctx(ctx, min(Fraction(1, 2), Fraction(params.lambda_mono)))
        self._lock = threading.Lock()
        self._cores: dict[TreeIndex, PieceCore] = {}
        self._pieces: dict[TreeIndex, PieceData] = {}
        self._first = self.core(TreeIndex((1,)))

    @classmethod
    @lru_cache(maxsize=64)
    def for_params(cls, params: SigmaParams) -> "Sigma":
        return cls(params)

    # ---- envelope

    def envelope(self, x):
        ctx, s = self.ctx, self.s
        if x <= s - 1:
            raise ValueError(f"envelope is defined for x > s - 1, got {x}")
        return 1 - self.c / (1 + ctx.log(x - s + 1))

    def _log_piece(self, n: TreeIndex):
        """``log(2 n s + 1)``, the log inside ``M_n = h((2n+1)s)``."""
        ctx = self.ctx
        bits = n.bit_length()
        if bits <= self.params.precision + _LOG_GUARD:
            return ctx.log(2 * self.s * to_ctx(ctx, n.to_int()) + 1)
        top, shift = n.top_bits(self.params.precision + _LOG_GUARD)
        # 1/n is below the working precision here
        return ctx.log(to_ctx(ctx, top)) + shift * ctx.ln2 + ctx.log(2 * self.s)

    # ---- pieces

    def core(self, n: IntLike) -> PieceCore:
        n = TreeIndex.of(n)
        hit = self._cores.get(n)
        if hit is not None:
            return hit
        ctx = self.ctx
        u = index_to_poly(n)
        B1, B2 = u.bounds()
        E = self.c / (1 + self._log_piece(n))
        M = 1 - E
        if n.terms == (1,):
            a = to_ctx(ctx, Fraction(1, 2))
            b = M / 2
        else:
            width = to_ctx(ctx, 3 * (B2 - B1))
            a = 1 - E * to_ctx(ctx, 2 * B2 - B1) / width
            b = E / width
        core = PieceCore(n, u, B1, B2, M, E, a, b, tuple(to_ctx(ctx, c) for c in u.coeffs))
        with self._lock:
            return self._cores.setdefault(n, core)

    def piece(self, n: IntLike) -> PieceData:
        n = TreeIndex.of(n)
        hit = self._pieces.get(n)
        if hit is not None:
            return hit
        ctx = self.ctx
        cur, nxt = self.core(n), self.core(n.succ())
        left_end = cur.a + cur.b * to_ctx(ctx, cur.u(Fraction(1)))
        right_end = nxt.a + nxt.b * to_ctx(ctx, nxt.u(Fraction(0)))
        K = (left_end + right_end) / 2
        du, dbu = self.delta_units(n, "left"), self.delta_units(n, "right")
        data = PieceData(n, cur.u, cur.B_1, cur.B_2, cur.M, cur.a, cur.b, K,
                         self.s * to_ctx(ctx, du), self.s * to_ctx(ctx, dbu), du, dbu)
        with self._lock:
            return self._pieces.setdefault(n, data)

    def delta_units(self, n: IntLike, side: str) -> Fraction:
        """Transition width divided by ``s``.

        With ``eps = (1 - M)/6`` and ``b = (1 - M)/(3 (B_2 - B_1))`` the width
        ``eps s / (b C)`` reduces to ``s (B_2 - B_1) / (2C)``, so it is exact
        given ``C``.
        """
        n = TreeIndex.of(n)
        if side == "left":
            u, lo, hi = index_to_poly(n), Fraction(1), Fraction(3, 2)
        elif side == "right":
            u, lo, hi = index_to_poly(n.succ()), Fraction(-1, 2), Fraction(0)
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        bound = sup_abs_poly if self.params.c_bound == "exact" else coefficient_bound
        C = bound(u.derivative(), lo, hi)
        if C == 0:
            return Fraction(1, 2)
        if side == "left" and n.terms == (1,):  # b_1 does not follow the general formula
            return Fraction(1, 2)
        B1, B2 = u.bounds()
        return min((B2 - B1) / (2 * C), Fraction(1, 2))

    # ---- evaluation

    def on_piece(self, core: PieceCore, t):
        return core.a + core.b * core.u.eval_with(t, core.u_ctx)

    def _tail(self, dist):
        """Value at ``x = s - dist`` for ``dist > 0``."""
        return (1 - bump(self.ctx, dist)) * (1 + self._first.M) / 2

    def _eval(self, n: TreeIndex, tau):
        """Evaluate at local position ``tau`` in ``[0, 2)`` measured from ``(2n-1)s``."""
        if tau <= 1:
            return self.on_piece(self.core(n), tau)
        p = self.piece(n)
        s = self.s
        if tau <= 1.5:
            dist = (tau - 1) * s
            if dist >= p.delta:
                return p.K_n
            w = _blend(self.ctx, dist, p.delta - dist)
            return p.K_n - w * (p.K_n - self.on_piece(self.core(n), tau))
        dist = (2 - tau) * s
        if dist >= p.delta_bar:
            return p.K_n
        w = 1 - _blend(self.ctx, p.delta_bar - dist, dist)
        return p.K_n - w * (p.K_n - self.on_piece(self.core(n.succ()), tau - 2))

    def __call__(self, x):
        ctx, s = self.ctx, self.s
        x = self._num(x)
        if x < s:
            return self._tail(s - x)
        y = x / s
        k = int(ctx.floor(y))
        n = (k + 1) // 2
        tau = y - (2 * n - 1)
        return self._eval(TreeIndex.from_int(n), tau)

    def piece_exact(self, n: IntLike, t):
        if not 0 <= t <= 1:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        return self.on_piece(self.core(n), self._num(t))

    def local(self, n: IntLike, t):
        """``sigma(s (t + 2n - 1))`` without forming the absolute argument."""
        if not -2 <= t <= 3:
            raise ValueError(f"local coordinate must lie in [-2, 3], got {t}")
        n = TreeIndex.of(n)
        t = self._num(t)
        if t < 0:
            if n.terms == (1,):
                return self._tail(-t * self.s)
            return self._eval(n.pred(), t + 2)
        if t < 2:
            return self._eval(n, t)
        return self._eval(n.succ(), t - 2)

    def _num(self, t):
        if self.ctx is mpmath.fp:
            return float(t)
        return to_ctx(self.ctx, t) if isinstance(t, (int, Fraction)) else self.ctx.mpf(t)


# --------------------------------------------------------------------------
# functional interface


def _sig(params: SigmaParams) -> Sigma:
    return Sigma.for_params(params)


def envelope_h(x, params: SigmaParams):
    return _sig(params).envelope(x)


def piece_data(n: IntLike, params: SigmaParams) -> PieceData:
    if isinstance(n, int) and n < 1:
        raise ValueError(f"pieces are numbered from 1, got {n}")
    return _sig(params).piece(n)


def compute_delta(n: IntLike, side: str, params: SigmaParams):
    sig = _sig(params)
    return sig.s * to_ctx(sig.ctx, sig.delta_units(n, side))


def sigma(x, params: SigmaParams):
    return _sig(params)(x)


def sigma_piece_exact(n: IntLike, t, params: SigmaParams):
    return _sig(params).piece_exact(n, t)


def sigma_local(n: IntLike, t, params: SigmaParams):
    return _sig(params).local(n, t)


def sigma_table(params: SigmaParams, start: float, end: float, step: float) -> list[tuple[float, object]]:
    """Rows ``(t, sigma(t))`` for ``t = start, start + step, ...`` up to ``end`` inclusive."""
    if not step > 0:
        raise ValueError("step must be positive")
    if end < start:
        raise ValueError("end must not be below start")
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    sig = _sig(params)
    rows = []
    for i in range(count):
        t = start + i * step
        rows.append((t, sig(t)))
    return rows
