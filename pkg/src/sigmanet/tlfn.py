"""Fixed-weight two-hidden-layer network built from the superposition.

The network is

    N(x) = sum_{p=1}^{2d+2} e_p sigma( sum_q c_pq sigma(x_q - theta_pq) - zeta_p )

with first-layer weights equal to the coordinate vectors.  Units ``1..2d+1``
share ``e_p = alpha_0``; unit ``2d+2`` has all ``c = 0`` and realizes the
constant ``-(2d+1) gamma_0``.

Thresholds are astronomically large in general, so they are stored as a
piece index plus an offset:

* ``theta_pq = a + s - 2 n_p s``  stored as ``(n_p, a)``,
* ``zeta_p = s gamma_p + s - 2 n_0 s``  stored as ``(n_0, s gamma_p)``,

and every sigma is evaluated in the local coordinate of its piece.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .activation import Sigma, SigmaParams, format_real, numeric_context, parse_real, to_ctx
from .enumeration import MonicPoly, TreeIndex
from .kst import (DEFAULT_TABLE_SIZE, DEFAULT_WEIGHT_RATIO, build_decomposition,
                  compute_outer, evaluate_points, tensor_grid)
from .poly_fit import FitError, RationalizedFit, SigmaTerm, fit_polynomial, sigma_rep

SCHEMA_VERSION = 1


class BudgetError(RuntimeError):
    """A construction stage missed its error budget."""

    def __init__(self, stage: str, achieved: float, budget: float):
        super().__init__(f"stage '{stage}' achieved {achieved:.3e}, budget {budget:.3e}")
        self.stage = stage
        self.achieved = achieved
        self.budget = budget


@dataclass(frozen=True)
class Threshold:
    """``offset + s - 2 n s``, kept exact in ``n``."""

    index: TreeIndex
    offset: object

    def to_json(self, ctx) -> dict:
        return {**self.index.to_json(), "offset": format_real(ctx, self.offset)}

    @classmethod
    def from_json(cls, obj: dict, ctx) -> "Threshold":
        return cls(TreeIndex.from_json(obj), parse_real(ctx, obj["offset"]))

    def approx(self, s: float) -> float | None:
        """Lossy float value, or None when it overflows."""
        bits = self.index.bit_length()
        if bits > 1000:
            return None
        return float(self.offset) + s - 2 * float(self.index.to_int()) * s


@dataclass(frozen=True)
class TlfnModel:
    d: int
    a: float
    b: float
    params: SigmaParams
    eps: float
    outer: SigmaTerm
    inner: tuple[SigmaTerm, ...]
    kst_weights: tuple[float, ...]
    e: tuple
    c: tuple
    theta: tuple
    zeta: tuple
    constant_e: object
    _sigma: Sigma = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._sigma is None:
            object.__setattr__(self, "_sigma", Sigma.for_params(self.params))

    @property
    def s(self) -> float:
        return self.params.s

    @property
    def ctx(self):
        return self._sigma.ctx

    @property
    def units(self) -> int:
        return len(self.e) + 1

    def weights(self) -> list[tuple[int, ...]]:
        """First-layer weights: the coordinate vectors."""
        return [tuple(1 if j == q else 0 for j in range(self.d)) for q in range(self.d)]

    def neuron_counts(self) -> dict:
        d = self.d
        return {
            "abstract": 3 * d + 2,
            "first_layer_as_written": d * (2 * d + 2),
            "first_layer_evaluated": d * (2 * d + 1),
            "second_layer": 2 * d + 2,
        }

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.d,):
            raise ValueError(f"expected {self.d} coordinates, got {x.shape[0]}")
        if np.any(x < self.a) or np.any(x > self.b):
            raise ValueError(f"point {x.tolist()} outside the box [{self.a}, {self.b}]^{self.d}")
        return x

    def unit_outputs(self, x) -> list:
        """Second-layer sigma values, constant unit last."""
        x = self._check(x)
        sig, ctx = self._sigma, self.ctx
        s = sig.s
        local = [to_ctx(ctx, Fraction(float(v)) - Fraction(self.a)) / s for v in x]
        out = []
        for p in range(len(self.e)):
            th = self.theta[p]
            acc = sum((self.c[p][q] * sig.local(th[q].index, local[q]) for q in range(self.d)), ctx.zero)
            t_out = (acc - self.zeta[p].offset) / s
            out.append(sig.local(self.zeta[p].index, t_out))
        out.append(sig(0))
        return out

    def __call__(self, x):
        vals = self.unit_outputs(x)
        return sum((e * v for e, v in zip(self.e, vals)), self.ctx.zero) + self.constant_e * vals[-1]

    def to_json(self) -> dict:
        ctx = self.ctx
        s = self.s
        return {
            "schema_version": SCHEMA_VERSION,
            "d": self.d,
            "a": repr(float(self.a)),
            "b": repr(float(self.b)),
            "s": repr(float(s)),
            "lambda_mono": repr(float(self.params.lambda_mono)),
            "c_bound": self.params.c_bound,
            "precision": self.params.precision,
            "eps": repr(float(self.eps)),
            "weights": [list(w) for w in self.weights()],
            "outer": self.outer.to_json(),
            "inner": [t.to_json() for t in self.inner],
            "kst_weights": [repr(float(w)) for w in self.kst_weights],
            "e": [format_real(ctx, v) for v in self.e],
            "c": [[format_real(ctx, v) for v in row] for row in self.c],
            "theta": [[t.to_json(ctx) for t in row] for row in self.theta],
            "zeta": [z.to_json(ctx) for z in self.zeta],
            "constant_unit": {"e": format_real(ctx, self.constant_e), "zeta": "0"},
            "neurons": self.neuron_counts(),
            "float_mirror": {
                "authoritative": False,
                "theta": [[t.approx(s) for t in row] for row in self.theta],
                "zeta": [z.approx(s) for z in self.zeta],
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TlfnModel":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {obj.get('schema_version')!r}")
        params = SigmaParams(float(obj["s"]), float(obj["lambda_mono"]), int(obj["precision"]),
                             obj.get("c_bound", "coefficient"))
        ctx = numeric_context(params.precision)
        d = int(obj["d"])
        weights = obj.get("weights")
        if weights is not None and weights != [[1 if j == q else 0 for j in range(d)] for q in range(d)]:
            raise ValueError("first-layer weights must be the coordinate vectors")
        e = tuple(parse_real(ctx, v) for v in obj["e"])
        if len(e) != 2 * d + 1:
            raise ValueError("expected 2d+1 equal coefficients e_p")
        if obj["constant_unit"].get("zeta", "0") not in ("0", "0.0"):
            raise ValueError("the constant unit must have zeta = 0")
        return cls(
            d, float(obj["a"]), float(obj["b"]), params, float(obj["eps"]),
            SigmaTerm.from_json(obj["outer"]),
            tuple(SigmaTerm.from_json(t) for t in obj["inner"]),
            tuple(float(w) for w in obj["kst_weights"]),
            e,
            tuple(tuple(parse_real(ctx, v) for v in row) for row in obj["c"]),
            tuple(tuple(Threshold.from_json(t, ctx) for t in row) for row in obj["theta"]),
            tuple(Threshold.from_json(z, ctx) for z in obj["zeta"]),
            parse_real(ctx, obj["constant_unit"]["e"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


@dataclass(frozen=True)
class BuildReport:
    eps: float
    budgets: dict
    kst_residual: float
    kst_iterations: int
    kst_history: tuple[float, ...]
    kst_stagnated: bool
    outer_fit_error: float
    inner_fit_errors: tuple[float, ...]
    delta: float
    pad: float
    measured_error: float
    grid: int
    neurons: dict

    @property
    def within_budget(self) -> bool:
        return self.measured_error <= self.eps

    def to_json(self) -> dict:
        return {
            "eps": repr(float(self.eps)),
            "budgets": {k: repr(float(v)) for k, v in sorted(self.budgets.items())},
            "kst_residual": repr(float(self.kst_residual)),
            "kst_iterations": self.kst_iterations,
            "kst_history": [repr(float(h)) for h in self.kst_history],
            "kst_stagnated": self.kst_stagnated,
            "outer_fit_error": repr(float(self.outer_fit_error)),
            "inner_fit_errors": [repr(float(v)) for v in self.inner_fit_errors],
            "delta": repr(float(self.delta)),
            "pad": repr(float(self.pad)),
            "measured_error": repr(float(self.measured_error)),
            "grid": self.grid,
            "neurons": self.neurons,
            "within_budget": self.within_budget,
        }


# --------------------------------------------------------------------------
# construction


def modulus_delta(term: SigmaTerm, tol: float, range_pad: float, params: SigmaParams | None = None,
                  samples: int = 4097, max_refine: int = 3) -> float:
    """A ``delta`` with ``|term(x) - term(y)| <= tol`` whenever ``|x - y| <= delta`` on ``[-pad, 1 + pad]``.

    Estimated from dense samples: the largest window whose value range stays
    within ``tol``, found by bisection on the window length, then halved.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = -range_pad, 1.0 + range_pad
    if term.alpha == 0:
        return hi - lo
    n = samples
    for _ in range(max_refine + 1):
        zs = np.linspace(lo, hi, n)
        vals = term.values(zs)
        h = (hi - lo) / (n - 1)

        def spread(k: int) -> float:
            size = k + 1
            top = maximum_filter1d(vals, size, mode="nearest")
            bot = minimum_filter1d(vals, size, mode="nearest")
            return float(np.max(top - bot))

        if spread(1) <= tol:
            break
        n = (n - 1) * 8 + 1
    else:
        return h / 2
    good, bad = 1, n
    while bad - good > 1:
        mid = (good + bad) // 2
        if spread(mid) <= tol:
            good = mid
        else:
            bad = mid
    return good * h / 2


def _affine_fit(slope: Fraction, intercept: Fraction) -> RationalizedFit:
    return RationalizedFit(slope, MonicPoly((intercept / slope,)), 0.0, 1, 0, "exact-affine")


def _fit_or_fail(stage: str, g: Callable, tol: float, **kwargs) -> RationalizedFit:
    try:
        fit = fit_polynomial(g, tol, **kwargs)
    except FitError as err:
        raise BudgetError(stage, err.best_error, tol) from err
    return fit


def build_network(f: Callable, d: int, eps: float, params: SigmaParams, *, a: float = 0.0,
                  b: float | None = None,
                  kst_budget: float | None = None, fit_budgets: dict | None = None, grid: int = 33,
                  kst_iterations: int = 60, kst_grid: int | None = None, table_size: int = DEFAULT_TABLE_SIZE,
                  weight_ratio: float = DEFAULT_WEIGHT_RATIO, levels: int = 1, pad: float = 1 / 16,
                  max_degree: int = 64) -> tuple[TlfnModel, BuildReport]:
    """Assemble the network for ``f`` on ``[a, b]^d`` and measure its error.

    ``b`` defaults to ``a + s``; any ``b`` with ``0 < b - a <= s`` works since
    inner units then use only part of their piece.

    Budget split: ``eps/2`` for the outer stage (half superposition residual,
    half the polynomial fit of ``g`` spread over ``2d+1`` terms) and ``eps/2``
    for propagating inner-fit errors through the outer term.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if d < 1:
        raise ValueError("d must be at least 1")
    terms = 2 * d + 1
    s = params.s
    b = a + s if b is None else b
    if not 0 < b - a <= s:
        raise ValueError(f"box side b - a = {b - a} must lie in (0, s = {s}]")
    fit_budgets = dict(fit_budgets or {})
    kst_budget = eps / 4 if kst_budget is None else kst_budget
    outer_tol = fit_budgets.get("outer", eps / (4 * terms))
    prop_tol = fit_budgets.get("propagation", eps / (2 * terms))

    decomp = build_decomposition(d, a, b, levels=levels, weight_ratio=weight_ratio)
    outer = compute_outer(f, decomp, target_residual=kst_budget, max_iterations=kst_iterations,
                          grid=kst_grid or grid, table_size=table_size)
    if outer.achieved_residual > kst_budget:
        raise BudgetError("kst", outer.achieved_residual, kst_budget)

    g_fit = _fit_or_fail("outer fit", outer, outer_tol, max_degree=max_degree)
    outer_term = sigma_rep(g_fit, params)

    # Exact affine inner maps keep every outer argument inside [0, 1], so the
    # modulus is only needed there.  Otherwise fix the pad first and fit the
    # inner maps to min(delta, pad) so their outputs stay within it.
    affine = [decomp.inner_affine(p) for p in range(terms)]
    if all(af is not None for af in affine):
        pad = 0.0
        delta = modulus_delta(outer_term, prop_tol, pad)
        # phi_p is affine in (t - a)/(b - a); the sigma term sees x = (t - a)/s
        stretch = Fraction(s) / (Fraction(b) - Fraction(a))
        inner_fits = [_affine_fit(slope * stretch, icpt) for slope, icpt in affine]
        inner_tol = 0.0
    else:
        delta = modulus_delta(outer_term, prop_tol, pad)
        inner_tol = min(delta, pad)
        inner_fits = []
        for p in range(terms):
            phi = (lambda t, p=p: decomp.inner(p, a + s * np.asarray(t, dtype=float)))
            inner_fits.append(_fit_or_fail(f"inner fit {p + 1}", phi, inner_tol, max_degree=max_degree))

    # one precision for the whole network
    bits = max([outer_term.params.precision] + [sigma_rep(fit, params).params.precision for fit in inner_fits])
    if bits > 53:
        bits += math.ceil(math.log2(terms + 1))
    net_params = params.with_precision(bits)
    outer_term = sigma_rep(g_fit, net_params)
    inner_terms = tuple(sigma_rep(fit, net_params) for fit in inner_fits)
    sig = Sigma.for_params(net_params)
    ctx = sig.ctx

    lam = decomp.kst_weights
    lam_ctx = [to_ctx(ctx, Fraction(w)) for w in lam]
    e = tuple(outer_term.alpha for _ in range(terms))
    c = tuple(tuple(sig.s * lam_ctx[q] * t.alpha for q in range(d)) for t in inner_terms)
    theta = tuple(tuple(Threshold(t.index, to_ctx(ctx, Fraction(a))) for _ in range(d)) for t in inner_terms)
    zeta = tuple(Threshold(outer_term.index, sig.s * t.gamma) for t in inner_terms)
    constant_e = -terms * outer_term.gamma / sig(0)
    model = TlfnModel(d, float(a), float(b), net_params, float(eps), outer_term, inner_terms, lam, e, c, theta, zeta,
                      constant_e)

    measured = sup_error(model, f, grid)
    report = BuildReport(
        eps=float(eps),
        budgets={"kst": kst_budget, "outer_fit_per_term": outer_tol, "propagation_per_term": prop_tol,
                 "inner_fit": inner_tol},
        kst_residual=outer.achieved_residual,
        kst_iterations=outer.iterations,
        kst_history=outer.history,
        kst_stagnated=outer.stagnated,
        outer_fit_error=g_fit.sup_error,
        inner_fit_errors=tuple(fit.sup_error for fit in inner_fits),
        delta=delta,
        pad=pad,
        measured_error=measured,
        grid=grid,
        neurons=model.neuron_counts(),
    )
    return model, report


def evaluate(model: TlfnModel, x) -> float:
    return model(x)


def evaluate_many(model: TlfnModel, X: np.ndarray) -> np.ndarray:
    return np.array([float(model(row)) for row in np.atleast_2d(X)])


def sup_error(model: TlfnModel, f: Callable, grid_per_axis: int) -> float:
    if grid_per_axis < 2:
        raise ValueError("grid must have at least 2 points per axis")
    X = tensor_grid(model.a, model.b, model.d, grid_per_axis)
    F = evaluate_points(f, X)
    return float(np.max(np.abs(F - evaluate_many(model, X))))


def load_model(text: str) -> TlfnModel:
    return TlfnModel.from_json(json.loads(text))
