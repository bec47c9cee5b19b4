"""Single-neuron representation of univariate functions on ``[0, 1]``.

A continuous ``g`` is approximated by ``p0 * u(x)`` with ``u`` monic with
rational coefficients.  If ``u = u_n`` then on ``[0, 1]``

    g(x) ~ alpha * sigma(s x + (2n - 1) s) - gamma,   alpha = p0/b_n, gamma = p0 a_n/b_n.

The index ``n`` grows like ``2**(2**depth)`` in the Calkin-Wilf depth of the
coefficients ``rho_i = p_i/p0``, and the working precision needed to evaluate
the term grows like that depth.  Fitting therefore tries to keep the depth
small: plain Chebyshev interpolation first, then a linear program that
balances coefficient sizes, and in both cases each ``rho_i`` is replaced by
the simplest rational inside its error window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .activation import Sigma, SigmaParams, format_real, numeric_context, parse_real, to_ctx
from .enumeration import MonicPoly, TreeIndex, cf_depth, format_rational, parse_rational, poly_to_address

DEFAULT_MAX_DEPTH = 1 << 14
# share of the tolerance the fitted float polynomial may use; the rest absorbs rationalization
_FIT_SHARE = 0.6
_LP_SCAN = 9


class FitError(RuntimeError):
    """No polynomial within the degree and depth limits met the tolerance."""

    def __init__(self, message: str, best_error: float):
        super().__init__(f"{message} (best error {best_error:.3e})")
        self.best_error = best_error


@dataclass(frozen=True)
class RationalizedFit:
    p0: Fraction
    u: MonicPoly
    sup_error: float
    degree: int
    grid_size: int
    method: str = "chebyshev"

    @property
    def max_depth(self) -> int:
        return max((cf_depth(c) for c in self.u.coeffs), default=0)


def simplest_between(lo: Fraction, hi: Fraction) -> Fraction:
    """The rational with smallest denominator (then numerator) in the closed interval ``[lo, hi]``."""
    if lo > hi:
        raise ValueError("empty interval")
    if lo <= 0 <= hi:
        return Fraction(0)
    if hi < 0:
        return -simplest_between(-hi, -lo)
    fl = lo.numerator // lo.denominator
    if fl == lo:
        return Fraction(fl)
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    return fl + 1 / simplest_between(1 / (hi - fl), 1 / (lo - fl))


def verification_grid(grid_size: int = 1024) -> np.ndarray:
    """``grid_size`` equispaced points plus ``grid_size`` Chebyshev-Lobatto nodes of ``[0, 1]``."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    k = np.arange(grid_size)
    nodes = 0.5 - 0.5 * np.cos(np.pi * k / (grid_size - 1))
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, grid_size), nodes]))


def vectorized(g: Callable) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap ``g`` so it maps float arrays to float arrays, calling it pointwise if needed."""

    def call(xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        try:
            out = np.asarray(g(xs), dtype=float)
            if out.shape == xs.shape:
                return out
        except Exception:
            pass
        return np.array([float(g(float(x))) for x in xs.ravel()]).reshape(xs.shape)

    return call


def grid_error(gv: np.ndarray, xs: np.ndarray, p0: Fraction, u: MonicPoly) -> float:
    """Sup of ``|g - p0 u|`` on ``xs``.

    Small polynomials are evaluated exactly in rationals; otherwise in floats
    plus a bound on the rounding error, or in extended precision when that
    bound would be visible.
    """
    coeffs = [p0 * c for c in u.full_coeffs()]
    if u.degree <= 8 and all(c.denominator < 2**64 for c in coeffs):
        worst = Fraction(0)
        for x, gx in zip(xs, gv):
            X = Fraction(float(x))
            acc = Fraction(0)
            for c in reversed(coeffs):
                acc = acc * X + c
            worst = max(worst, abs(acc - Fraction(float(gx))))
        return float(worst)
    fc = np.array([float(c) for c in coeffs])
    scale = float(np.sum(np.abs(fc)))
    bound = (2 * len(fc) + 4) * 2.0**-53 * (scale + float(np.max(np.abs(gv), initial=0.0)))
    if bound <= 1e-9:
        vals = np.polynomial.polynomial.polyval(xs, fc)
        return float(np.max(np.abs(vals - gv))) + bound
    ctx = numeric_context(64 + max(0, math.ceil(math.log2(scale + 1))) + 16)
    mc = [to_ctx(ctx, c) for c in coeffs]
    worst = 0.0
    for x, gx in zip(xs, gv):
        acc = ctx.zero
        for c in reversed(mc):
            acc = acc * float(x) + c
        worst = max(worst, abs(float(acc) - gx))
    return worst + 1e-15


def _degrees(max_degree: int) -> list[int]:
    seq = [0, 1, 2, 4, 8, 16, 24, 32, 48, 64]
    while seq[-1] < max_degree:
        seq.append(seq[-1] * 2)
    return [m for m in seq if m <= max_degree] or [max_degree]


def _rationalize(coef: Sequence[float], gv, xs, tol, fit_err, grid_size, method) -> RationalizedFit | None:
    """Round float monomial coefficients to a monic rational polynomial within ``tol``."""
    budget = tol - fit_err
    if budget <= 0:
        return None
    coef = list(coef)
    # drop negligible leading terms (each costs at most |c| on [0, 1])
    dropped = 0.0
    while coef and abs(coef[-1]) + dropped <= budget / 4:
        dropped += abs(coef.pop())
    if not coef:
        err = float(np.max(np.abs(gv)))
        return RationalizedFit(Fraction(0), MonicPoly(), err, 0, grid_size, method) if err < tol else None
    m = len(coef) - 1
    share = (budget - dropped) * 0.7 / (m + 1)
    lead = Fraction(coef[-1])
    for attempt in range(4):
        w = Fraction(share) / 8**attempt / abs(lead)
        rho = tuple(simplest_between(Fraction(c) / lead - w, Fraction(c) / lead + w) for c in coef[:-1])
        # with u fixed, moving p0 by d moves p0 u by at most |d| (1 + sum |rho_i|) on [0, 1]
        w0 = Fraction(share) / 8**attempt / (1 + sum(abs(r) for r in rho))
        p0 = simplest_between(lead - w0, lead + w0) if abs(lead) > 2 * w0 else lead
        u = MonicPoly(rho)
        err = grid_error(gv, xs, p0, u)
        if err < tol:
            return RationalizedFit(p0, u, err, m, grid_size, method)
    return None


def _lp_fixed_leading(V, gv, lead, tau):
    """Minimize ``max |p_i|`` (i < m) subject to ``|V p - g| <= tau`` with ``p_m = lead``."""
    npts, mp1 = V.shape
    m = mp1 - 1
    rhs = gv - lead * V[:, m]
    A = V[:, :m]
    zcol = np.zeros((npts, 1))
    eye = np.eye(m)
    ones = -np.ones((m, 1))
    A_ub = np.vstack([np.hstack([A, zcol]), np.hstack([-A, zcol]), np.hstack([eye, ones]), np.hstack([-eye, ones])])
    b_ub = np.concatenate([rhs + tau, -(rhs - tau), np.zeros(2 * m)])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * m + [(0, None)], method="highs")
    if res.status != 0:
        return None
    return np.append(res.x[:m], lead)


def _lp_balanced(V, gv, tau):
    """Minimize ``max |p_i|`` over all coefficients subject to ``|V p - g| <= tau``."""
    npts, mp1 = V.shape
    zcol = np.zeros((npts, 1))
    eye = np.eye(mp1)
    ones = -np.ones((mp1, 1))
    A_ub = np.vstack([np.hstack([V, zcol]), np.hstack([-V, zcol]), np.hstack([eye, ones]), np.hstack([-eye, ones])])
    b_ub = np.concatenate([gv + tau, -(gv - tau), np.zeros(2 * mp1)])
    c = np.zeros(mp1 + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * mp1 + [(0, None)], method="highs")
    if res.status != 0:
        return None
    return res.x[:mp1], res.x[-1]


def _measure(coef, gv, xs) -> float:
    return float(np.max(np.abs(np.polynomial.polynomial.polyval(xs, coef) - gv)))


def _balanced_candidates(m, gv, xs, tol, grid_size, max_depth):
    """LP fits whose leading coefficient is scanned around the balanced value."""
    tau = _FIT_SHARE * tol
    V = np.vander(xs, m + 1, increasing=True)
    first = _lp_balanced(V, gv, tau)
    if first is None:
        return None
    p, t = first
    if p[-1] == 0 or t == 0:
        return None
    base = math.copysign(math.sqrt(t * max(abs(p[0]), tau)), p[-1])
    best = None
    for k in range(_LP_SCAN):
        lead = base * 10 ** ((k - _LP_SCAN // 2) / 4)
        coef = _lp_fixed_leading(V, gv, lead, tau)
        if coef is None:
            continue
        fit = _rationalize(coef, gv, xs, tol, _measure(coef, gv, xs), grid_size, "balanced-lp")
        if fit is None or fit.max_depth > max_depth:
            continue
        if best is None or fit.max_depth < best.max_depth:
            best = fit
    return best


def fit_polynomial(g: Callable, tol: float, max_degree: int = 64, grid_size: int = 1024,
                   max_depth: int = DEFAULT_MAX_DEPTH) -> RationalizedFit:
    """Fit ``p0 * u`` with ``u`` monic rational so that the grid error is below ``tol``.

    Degrees are tried in a fixed increasing sequence and the first success is
    returned, so raising ``max_degree`` can only find the same fit or a later one.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    xs = verification_grid(grid_size)
    gfun = vectorized(g)
    gv = gfun(xs)
    if not np.all(np.isfinite(gv)):
        raise ValueError("g returned non-finite values on the verification grid")
    best_err = math.inf
    for m in _degrees(max_degree):
        cheb = np.polynomial.Chebyshev.interpolate(gfun, m, domain=[0.0, 1.0])
        cheb_err = float(np.max(np.abs(cheb(xs) - gv)))
        best_err = min(best_err, cheb_err)
        if cheb_err <= tol / 2:
            mono = cheb.convert(kind=np.polynomial.Polynomial, domain=[0.0, 1.0], window=[0.0, 1.0]).coef
            mono = np.pad(mono, (0, m + 1 - len(mono)))
            fit = _rationalize(mono, gv, xs, tol, _measure(mono, gv, xs), grid_size, "chebyshev")
            if fit is not None and fit.max_depth <= max_depth:
                return fit
        if m >= 2 and cheb_err <= 2 * tol:
            fit = _balanced_candidates(m, gv, xs, tol, grid_size, max_depth)
            if fit is not None:
                return fit
    raise FitError(f"no fit within tol={tol} up to degree {max_degree} and depth {max_depth}", best_err)


# --------------------------------------------------------------------------
# sigma terms


def required_precision(p0: Fraction, u: MonicPoly, index: TreeIndex, params: SigmaParams) -> int:
    """Bits needed so that ``alpha sigma - gamma`` keeps about 60 correct bits.

    ``alpha = p0/b_n`` with ``1/b_n ~ 3 (B_2 - B_1) (1 + log n)/c``; the value
    ``sigma`` is close to 1 and that factor is lost to cancellation.
    """
    if p0 == 0 or index.terms == (1,):
        return params.precision
    B1, B2 = u.bounds()
    bits = index.bit_length()
    lost = (math.log2(abs(float(p0)) + 1e-300) if abs(p0) < 2**1000 else p0.numerator.bit_length())
    lost += math.log2(3 * float(B2 - B1)) + bits.bit_length() + 1
    lost += math.log2(1 / min(0.5, params.lambda_mono))
    return max(params.precision, 64 + max(0, math.ceil(lost)) + 8)


@dataclass(frozen=True)
class SigmaTerm:
    """``x -> alpha * sigma(s x - beta) - gamma`` with ``beta = s - 2 n s`` kept as the index ``n``."""

    alpha: object
    index: TreeIndex
    gamma: object
    p0: Fraction
    u: MonicPoly
    params: SigmaParams
    _sigma: Sigma = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._sigma is None:
            object.__setattr__(self, "_sigma", Sigma.for_params(self.params))

    @property
    def n(self) -> TreeIndex:
        return self.index

    @property
    def ctx(self):
        return self._sigma.ctx

    @property
    def sigma(self) -> Sigma:
        return self._sigma

    def __call__(self, x):
        """Value at ``x``; valid for ``x`` in ``[-2, 3]`` (local coordinate of piece ``n``)."""
        return self.alpha * self._sigma.local(self.index, x) - self.gamma

    def values(self, xs) -> np.ndarray:
        return np.array([float(self(float(x))) for x in xs])

    def to_json(self) -> dict:
        ctx = self.ctx
        return {
            "alpha": format_real(ctx, self.alpha),
            **self.index.to_json(),
            "gamma": format_real(ctx, self.gamma),
            "p0": format_rational(self.p0),
            "u": self.u.to_json(),
            "s": repr(float(self.params.s)),
            "lambda_mono": repr(float(self.params.lambda_mono)),
            "c_bound": self.params.c_bound,
            "precision": self.params.precision,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SigmaTerm":
        params = SigmaParams(float(obj["s"]), float(obj["lambda_mono"]), int(obj["precision"]),
                             obj.get("c_bound", "coefficient"))
        ctx = numeric_context(params.precision)
        index = TreeIndex.from_json(obj)
        u = MonicPoly.from_json(obj["u"]) if "u" in obj else None
        from .enumeration import index_to_poly

        if u is None:
            u = index_to_poly(index)
        elif poly_to_address(u) != index:
            raise ValueError("polynomial and index of the sigma term disagree")
        return cls(parse_real(ctx, obj["alpha"]), index, parse_real(ctx, obj["gamma"]),
                   parse_rational(obj["p0"]), u, params)


def sigma_rep(fit: RationalizedFit, params: SigmaParams) -> SigmaTerm:
    """Turn a rational fit into its single-neuron form, raising precision as needed."""
    index = poly_to_address(fit.u)
    params = params.with_precision(required_precision(fit.p0, fit.u, index, params))
    sig = Sigma.for_params(params)
    ctx = sig.ctx
    if fit.p0 == 0:
        zero = to_ctx(ctx, 0)
        return SigmaTerm(zero, TreeIndex((1,)), zero, Fraction(0), MonicPoly(), params)
    core = sig.core(index)
    p0 = to_ctx(ctx, fit.p0)
    return SigmaTerm(p0 / core.b, index, p0 * core.a / core.b, fit.p0, fit.u, params)


def represent_univariate(g: Callable, tol: float, params: SigmaParams, **fit_kwargs) -> SigmaTerm:
    return sigma_rep(fit_polynomial(g, tol, **fit_kwargs), params)


def term_grid_error(term: SigmaTerm, g: Callable, grid_size: int = 1024) -> float:
    """Sup of ``|g - term|`` on the verification grid, evaluated through sigma."""
    xs = verification_grid(grid_size)
    gv = vectorized(g)(xs)
    return float(np.max(np.abs(term.values(xs) - gv)))
