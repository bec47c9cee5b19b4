"""One test per acceptance criterion, each at its stated tolerance and runtime limit."""

import random
import subprocess
import sys
import time

import numpy as np
import pytest

from sigmanet.activation import Sigma, SigmaParams
from sigmanet.enumeration import first_polys, index_to_poly, poly_to_address, poly_to_index, TreeIndex
from sigmanet.poly_fit import represent_univariate, term_grid_error
from sigmanet.tlfn import build_network, sup_error

from test_activation import TABLE


def test_criterion_1_table(acceptance):
    start = time.perf_counter()
    sig = Sigma(SigmaParams(3.0, 0.5))  # uncached instance, so the timing includes piece setup
    got = [float(sig(t)) for t in range(50)]
    elapsed = time.perf_counter() - start
    worst = max(abs(g - w) for g, w in zip(got, TABLE))
    spot = max(abs(got[t] - TABLE[t]) for t in (0, 7, 8, 9))
    ok = worst <= 1e-4 and spot <= 5e-6 and elapsed < 1.0
    acceptance(1, ok, f"max |diff| {worst:.2e} (<= 1e-4), spot {spot:.2e} (<= 5e-6), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_criterion_2_enumeration(acceptance):
    start = time.perf_counter()
    first = [str(p) for p in first_polys(8)]
    list_ok = first == ["1", "x^2", "x", "x^2 - x", "x^2 - 1", "x^3", "x - 1", "x^2 + x"]
    small_ok = all(poly_to_index(index_to_poly(n)) == n for n in range(1, 10**4 + 1))
    rng = random.Random(2024)
    big = [rng.getrandbits(128) | 1 for _ in range(100)]
    big_ok = all(poly_to_address(index_to_poly(TreeIndex.from_int(n))).to_int() == n for n in big)
    elapsed = time.perf_counter() - start
    ok = list_ok and small_ok and big_ok and elapsed < 10
    acceptance(2, ok, f"first eight {list_ok}, n <= 1e4 {small_ok}, 100 x 128-bit {big_ok}, {elapsed:.2f} s (< 10 s)")
    assert ok


def _junction_checks(s, lam):
    sig = Sigma(SigmaParams(s, lam, precision=160))
    ctx = sig.ctx
    h = ctx.mpf(2) ** -60
    worst_val = worst_der = 0.0
    for n in range(1, 21):
        for j in (2 * n - 1, 2 * n):
            x = ctx.mpf(s) * j
            worst_val = max(worst_val, float(abs(sig(x - h) - sig(x + h))))
            left = (3 * sig(x) - 4 * sig(x - h) + sig(x - 2 * h)) / (2 * h)
            right = (-3 * sig(x) + 4 * sig(x + h) - sig(x + 2 * h)) / (2 * h)
            worst_der = max(worst_der, float(abs(left - right)))
    return worst_val, worst_der


def test_criterion_3_sigma_properties(acceptance):
    start = time.perf_counter()
    failures = []
    worst_val = worst_der = 0.0
    for s in (1.0, 3.0):
        for lam in (0.75, 0.5, 0.1):
            sig = Sigma(SigmaParams(s, lam))
            for x in np.linspace(s, 100 * s, 10**4):
                h, v = sig.envelope(x), sig(x)
                if not (h < v < 1 and 0 < v - h <= lam):
                    failures.append(("sandwich", s, lam, x))
                    break
            vals = [sig(x) for x in np.linspace(s - 50, s, 10**3)]
            if not all(b > a for a, b in zip(vals, vals[1:])):
                failures.append(("monotone", s, lam))
            jv, jd = _junction_checks(s, lam)
            worst_val, worst_der = max(worst_val, jv), max(worst_der, jd)
    elapsed = time.perf_counter() - start
    ok = not failures and worst_val <= 1e-10 and worst_der <= 1e-8 and elapsed < 30
    acceptance(3, ok, f"sandwich/monotone failures {failures or 'none'}, junction jump {worst_val:.1e} (<= 1e-10), "
                      f"derivative mismatch {worst_der:.1e}, {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_4_piece_identity(acceptance):
    sig = Sigma(SigmaParams(3.0, 0.5))
    worst = 0.0
    for n in range(1, 51):
        for t in np.linspace(0.0, 1.0, 64):
            exact = sig.piece_exact(n, float(t))
            worst = max(worst, abs(sig(3.0 * t + (2 * n - 1) * 3.0) - exact) / abs(exact))
    ok = worst <= 1e-12
    acceptance(4, ok, f"max relative deviation {worst:.1e} (<= 1e-12) over n <= 50, 64 t values")
    assert ok


def _bits(b: int) -> str:
    return str(b) if b < 10**6 else f"~2^{b.bit_length() - 1}"


def test_criterion_5_univariate(acceptance):
    start = time.perf_counter()
    params = SigmaParams(3.0, 0.5)
    results = {}
    for name, g in (("sin(pi x)", lambda x: np.sin(np.pi * x)), ("|x - 1/2|", lambda x: np.abs(x - 0.5))):
        term = represent_univariate(g, 1e-2, params)
        results[name] = (term_grid_error(term, g), term.index.bit_length())
    elapsed = time.perf_counter() - start
    errors_ok = all(err < 1e-2 for err, _ in results.values())
    big_ok = any(bits > 64 for _, bits in results.values())
    ok = errors_ok and big_ok and elapsed < 120
    detail = ", ".join(f"{k}: err {e:.2e}, n has {_bits(b)} bits" for k, (e, b) in results.items())
    acceptance(5, ok, f"{detail}; {elapsed:.1f} s (< 120 s)")
    assert ok


def test_criterion_6_multivariate(acceptance):
    start = time.perf_counter()
    f = lambda X: (X[:, 0] + X[:, 1]) / 2
    model, report = build_network(f, 2, 0.2, SigmaParams(3.0, 0.5), a=0.0, b=1.0)
    err = sup_error(model, f, 33)
    elapsed = time.perf_counter() - start
    hist = report.kst_history
    checks = {
        "6 units": model.units == 6,
        "coordinate weights": model.weights() == [(1, 0), (0, 1)],
        "equal e": len(model.e) == 5 and len(set(model.e)) == 1,
        "error": err <= 0.2,
        "kst nonincreasing": all(b <= a for a, b in zip(hist, hist[1:])),
        "time": elapsed < 600,
    }
    ok = all(checks.values())
    acceptance(6, ok, f"33x33 sup error {err:.4f} (<= 0.2), kst history {[round(h, 4) for h in hist]}, "
                      f"failed checks {[k for k, v in checks.items() if not v] or 'none'}, {elapsed:.1f} s")
    assert ok


@pytest.mark.parametrize("c", [2.5, -0.7])
def test_criterion_7_constants(acceptance, c):
    errs = []
    for d in (1, 2):
        _, report = build_network(lambda X: np.full(X.shape[0], c), d, 1e-2, SigmaParams(3.0, 0.5), b=1.0)
        errs.append(report.measured_error)
    ok = max(errs) <= 1e-9
    acceptance(7, ok, f"f = {c}: measured error d=1 {errs[0]:.1e}, d=2 {errs[1]:.1e} (<= 1e-9)")
    assert ok


def test_criterion_8_determinism(acceptance, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"model{i}.json"
        cmd = [sys.executable, "-m", "sigmanet.cli", "build", "--function", "mean2", "--d", "2", "--eps", "0.2",
               "--out", str(path)]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    acceptance(8, ok, f"two separate build processes, {len(outs[0])} bytes each, byte-identical {ok}")
    assert ok
