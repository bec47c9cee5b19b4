"""Constructive superposition ``f(x) ~ sum_p g(sum_q lambda_q phi_p(x_q))``.

Inner functions come from a Koppen-type generator ``psi`` with base
``gamma = 2d + 2``, shifted per term:

    phi_p(x) = psi((xhat + p * shift) / (1 + 2 d shift)),   shift = 1/(gamma (gamma - 1)),

where ``xhat`` maps the box side onto ``[0, 1]``.  With ``levels=1`` the
generator is the identity and the inner maps are affine with exact rational
coefficients, which is the setting the network builder uses.  Higher levels
give the genuinely nonlinear generator but an outer function too rough for
low-degree polynomial fitting.

The outer function is tabulated on ``[0, 1]`` and computed by residual
iteration: the residual on a tensor grid is averaged back onto the table
through every inner map, and a damped step is taken with backtracking so the
sup residual never increases.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

DEFAULT_RESOLUTION = 1 << 14
DEFAULT_WEIGHT_RATIO = 0.9
DEFAULT_TABLE_SIZE = 1025
DEFAULT_BANDWIDTH = 1 / 16
MIN_BANDWIDTH = 1 / 256
_SLOW_PROGRESS = 1e-2
_MAX_PSI_TABLE = 1 << 20


def koppen_table(d: int, levels: int) -> list[Fraction]:
    """Values of the generator at ``j / gamma**levels``, normalized so ``psi(1) = 1``."""
    g = 2 * d + 2
    if levels < 1:
        raise ValueError("levels must be at least 1")
    if g**levels > _MAX_PSI_TABLE:
        raise ValueError(f"generator table with {g}**{levels} entries is too large")

    def beta(r: int) -> int:
        return r if d == 1 else (d**r - 1) // (d - 1)

    # values at level k from level k-1; digit gamma-1 averages its neighbours
    vals = [Fraction(j, g) for j in range(g + 1)]
    for k in range(2, levels + 1):
        nxt = [Fraction(0)] * (g**k + 1)
        for j in range(g**k + 1):
            i, head = j % g, j // g
            if i < g - 1:
                nxt[j] = vals[head] + Fraction(i, g ** beta(k))
        for j in range(g**k + 1):
            if j % g == g - 1:
                nxt[j] = (nxt[j - 1] + vals[j // g + 1]) / 2
        vals = nxt
    top = vals[-1]
    return [v / top for v in vals]


@dataclass(frozen=True)
class KstDecomposition:
    d: int
    a: float
    b: float
    kst_weights: tuple[float, ...]
    breakpoints: np.ndarray
    inner_tables: tuple[np.ndarray, ...]
    levels: int = 1
    weight_ratio: float = DEFAULT_WEIGHT_RATIO

    @property
    def terms(self) -> int:
        return 2 * self.d + 1

    @property
    def shift(self) -> Fraction:
        g = 2 * self.d + 2
        return Fraction(1, g * (g - 1))

    def inner(self, p: int, x) -> np.ndarray:
        """``phi_p`` (0-based ``p``) by linear interpolation of its table."""
        return np.interp(x, self.breakpoints, self.inner_tables[p])

    def inner_affine(self, p: int) -> tuple[Fraction, Fraction] | None:
        """``(slope, intercept)`` of ``phi_p`` in ``xhat`` when the inner maps are affine."""
        if self.levels != 1:
            return None
        scale = 1 + 2 * self.d * self.shift
        return 1 / scale, p * self.shift / scale

    def inner_args(self, X: np.ndarray) -> np.ndarray:
        """``z[p, i] = sum_q lambda_q phi_p(X[i, q])`` for points ``X`` of shape ``(N, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lam = np.asarray(self.kst_weights)
        return np.stack([sum(lam[q] * self.inner(p, X[:, q]) for q in range(self.d)) for p in range(self.terms)])

    def check_box(self, X: np.ndarray) -> None:
        if np.any(X < self.a) or np.any(X > self.b):
            raise ValueError(f"point outside the box [{self.a}, {self.b}]^{self.d}")

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "a": repr(float(self.a)),
            "b": repr(float(self.b)),
            "levels": self.levels,
            "weight_ratio": repr(float(self.weight_ratio)),
            "kst_weights": [repr(float(w)) for w in self.kst_weights],
            "breakpoints": [repr(float(v)) for v in self.breakpoints],
            "inner": [[repr(float(v)) for v in t] for t in self.inner_tables],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KstDecomposition":
        return cls(int(obj["d"]), float(obj["a"]), float(obj["b"]),
                   tuple(float(w) for w in obj["kst_weights"]),
                   np.array([float(v) for v in obj["breakpoints"]]),
                   tuple(np.array([float(v) for v in t]) for t in obj["inner"]),
                   int(obj["levels"]), float(obj["weight_ratio"]))


def kst_weights(d: int, ratio: float = DEFAULT_WEIGHT_RATIO) -> tuple[float, ...]:
    """Geometric weights ``ratio**(q-1)`` normalized to sum 1."""
    if not 0 < ratio:
        raise ValueError("weight ratio must be positive")
    w = np.array([ratio**q for q in range(d)], dtype=float)
    w = w / w.sum()
    return tuple(float(v) for v in w)


def build_decomposition(d: int, a: float = 0.0, b: float = 1.0, resolution: int = DEFAULT_RESOLUTION,
                        levels: int = 1, weight_ratio: float = DEFAULT_WEIGHT_RATIO) -> KstDecomposition:
    if d < 1:
        raise ValueError("d must be at least 1")
    if not a < b:
        raise ValueError("need a < b")
    if resolution < 1:
        raise ValueError("resolution must be positive")
    g = 2 * d + 2
    shift = 1 / (g * (g - 1))
    psi_x = np.linspace(0.0, 1.0, g**levels + 1)
    psi_y = np.array([float(v) for v in koppen_table(d, levels)])
    xs = np.linspace(a, b, resolution + 1)
    xhat = (xs - a) / (b - a)
    tables = []
    for p in range(2 * d + 1):
        arg = (xhat + p * shift) / (1 + 2 * d * shift)
        tables.append(np.clip(np.interp(arg, psi_x, psi_y), 0.0, 1.0))
    return KstDecomposition(d, float(a), float(b), kst_weights(d, weight_ratio), xs, tuple(tables),
                            levels, float(weight_ratio))


@dataclass(frozen=True)
class OuterFunction:
    nodes: np.ndarray
    values: np.ndarray
    achieved_residual: float
    iterations: int
    history: tuple[float, ...] = ()
    stagnated: bool = False

    def __call__(self, z):
        return np.interp(z, self.nodes, self.values)

    def to_json(self) -> dict:
        return {
            "nodes": [repr(float(v)) for v in self.nodes],
            "values": [repr(float(v)) for v in self.values],
            "achieved_residual": repr(float(self.achieved_residual)),
            "iterations": self.iterations,
            "history": [repr(float(h)) for h in self.history],
            "stagnated": self.stagnated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OuterFunction":
        return cls(np.array([float(v) for v in obj["nodes"]]), np.array([float(v) for v in obj["values"]]),
                   float(obj["achieved_residual"]), int(obj["iterations"]),
                   tuple(float(h) for h in obj.get("history", [])), bool(obj.get("stagnated", False)))


def evaluate_points(f: Callable, X: np.ndarray) -> np.ndarray:
    """Evaluate a d-variate ``f`` on rows of ``X``, vectorized when ``f`` allows it."""
    X = np.asarray(X, dtype=float)
    try:
        out = np.asarray(f(X), dtype=float)
        if out.shape == (X.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(f(*row)) for row in X])


def tensor_grid(a: float, b: float, d: int, per_axis: int) -> np.ndarray:
    axis = np.linspace(a, b, per_axis)
    return np.array(list(itertools.product(axis, repeat=d)), dtype=float)


def _pullback(z: np.ndarray, resid: np.ndarray, size: int, bandwidth: float) -> np.ndarray:
    """Kernel-average ``resid`` onto the table nodes through every inner map.

    Gaussian weights keep the step smooth even where few grid points land,
    which the later polynomial fit of ``g`` depends on.
    """
    nodes = np.linspace(0.0, 1.0, size)
    num = np.zeros(size)
    den = np.zeros(size)
    for zp in z:
        w = np.exp(-0.5 * ((nodes[:, None] - zp[None, :]) / bandwidth) ** 2)
        num += w @ resid
        den += w.sum(axis=1)
    hit = den > 1e-300
    if not np.any(hit):
        return np.zeros(size)
    return np.interp(nodes, nodes[hit], num[hit] / den[hit])


def compute_outer(f: Callable, decomp: KstDecomposition, target_residual: float = 0.0,
                  max_iterations: int = 60, grid: int = 33, table_size: int = DEFAULT_TABLE_SIZE,
                  min_step: float = 1e-4, bandwidth: float = DEFAULT_BANDWIDTH,
                  min_bandwidth: float = MIN_BANDWIDTH) -> OuterFunction:
    """Residual iteration for the outer table; the sup residual never increases.

    ``bandwidth`` is the kernel width on ``[0, 1]``.  Wide kernels give a
    smooth ``g`` that low-degree polynomials fit well; when progress stalls the
    kernel is halved, down to ``min_bandwidth``, before giving up.
    """
    if grid < 2:
        raise ValueError("grid must have at least 2 points per axis")
    if not 0 < min_bandwidth <= bandwidth:
        raise ValueError("need 0 < min_bandwidth <= bandwidth")
    X = tensor_grid(decomp.a, decomp.b, decomp.d, grid)
    F = evaluate_points(f, X)
    if not np.all(np.isfinite(F)):
        raise ValueError("f returned non-finite values on the grid")
    z = decomp.inner_args(X)
    nodes = np.linspace(0.0, 1.0, table_size)
    values = np.zeros(table_size)

    def recon(vals):
        return sum(np.interp(zp, nodes, vals) for zp in z)

    resid = F - recon(values)
    history = [float(np.max(np.abs(resid)))]
    theta0 = 1.0 / decomp.terms
    stagnated = False
    iterations = 0
    bw = bandwidth
    while history[-1] > target_residual and iterations < max_iterations:
        step = _pullback(z, resid, table_size, bw)
        theta = theta0
        accepted = False
        while theta >= min_step * theta0:
            trial = values + theta * step
            trial_resid = F - recon(trial)
            r = float(np.max(np.abs(trial_resid)))
            if r <= history[-1]:
                accepted = True
                break
            theta /= 2
        slow = not accepted or r > (1 - _SLOW_PROGRESS) * history[-1]
        if accepted and r < history[-1]:
            values, resid = trial, trial_resid
            history.append(r)
            iterations += 1
        if slow:
            if bw / 2 < min_bandwidth:
                stagnated = True
                break
            bw /= 2
    return OuterFunction(nodes, values, history[-1], iterations, tuple(history), stagnated)


def reconstruct(decomp: KstDecomposition, outer: OuterFunction, x) -> float:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape != (1, decomp.d):
        raise ValueError(f"expected a point with {decomp.d} coordinates")
    decomp.check_box(X)
    return float(reconstruct_many(decomp, outer, X)[0])


def reconstruct_many(decomp: KstDecomposition, outer: OuterFunction, X: np.ndarray) -> np.ndarray:
    z = decomp.inner_args(X)
    return sum(outer(zp) for zp in z)


def dumps(decomp: KstDecomposition, outer: OuterFunction | None = None) -> str:
    obj = {"decomposition": decomp.to_json()}
    if outer is not None:
        obj["outer"] = outer.to_json()
    return json.dumps(obj, sort_keys=True)
