"""Acceptance suite: eight criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.  Each criterion also has a wall-clock
budget that counts toward its verdict.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import catalog  # noqa: E402
from shrinklab import symfun as sf  # noqa: E402
from shrinklab.battery import run_battery  # noqa: E402
from shrinklab.hypersurface import HEMISPHERE, AxiConvexBody, AxiGraphHemisphere, legendre  # noqa: E402
from shrinklab.matrixfun import F_of, d2F_action  # noqa: E402
from shrinklab.quantities import (  # noqa: E402
    G_value,
    T_normalization,
    W_field,
    Z_field,
    fg_minus_trace,
    fg_minus_trace_pairwise,
)
from shrinklab.solver import (  # noqa: E402
    FlowRun,
    ShrinkerProblem,
    homothetic_radius,
    perturbed_body,
    residual,
    run_flow,
    slice_radius,
    solve_shrinker,
    sphere_radius,
)

PROBE_FNS = {"Quotient(2,1)": sf.quotient(2, 1), "E_2^(1/2)": sf.ek_root(2), "H_-1": sf.power_mean(-1.0)}
PROBE_ALPHAS = (1.5, 2.0, 3.0)


def bisect(g, lo, hi, iters=200):
    glo = g(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sphere_oracle(c, alpha, C=0.0):
    return bisect(lambda r: (c / r) ** alpha - r + C, 1e-6, 100.0)


# ---------------------------------------------------------------------------
# criteria; each returns (ok, detail)


def _fd_errors(f, k, hg=1e-6, hh=1e-5):
    """Max relative gradient and Hessian errors against central differences over a batch."""
    b = sf.derivs(f, k)
    n = k.shape[1]
    g_fd = np.empty_like(k)
    H_fd = np.empty(k.shape + (n,))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        step = hg * k[:, i:i + 1] * e
        g_fd[:, i] = (sf.eval(f, k + step) - sf.eval(f, k - step)) / (2 * step[:, i])
        step = hh * k[:, i:i + 1] * e
        H_fd[:, i, :] = (sf.derivs(f, k + step).grad - sf.derivs(f, k - step).grad) / (2 * step[:, i:i + 1])
    g_scale = np.max(np.abs(g_fd), axis=1)
    h_scale = np.maximum(np.max(np.abs(H_fd), axis=(1, 2)), b.value / np.max(k, axis=1) ** 2)
    g_err = np.max(np.abs(b.grad - g_fd), axis=1) / g_scale
    h_err = np.max(np.abs(b.hess - H_fd), axis=(1, 2)) / h_scale
    return float(g_err.max()), float(h_err.max())


def criterion_1():
    rng = np.random.default_rng(1)
    worst, count = 0.0, 0
    for n in (2, 3, 5):
        for f in catalog(n):
            k = sf.sample_kappa(rng, 200, n)
            worst = max(worst, *_fd_errors(f, k))
            count += 1
    return worst <= 1e-6, f"{count} (f, n) pairs x 200 points, worst rel. error {worst:.2e}"


def _random_pair(rng, n, gap):
    lam = np.exp(rng.uniform(np.log(0.2), np.log(5.0), size=n))
    if gap is not None:
        lam[1] = lam[0] * (1.0 + gap)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    B = rng.standard_normal((n, n))
    return Q @ np.diag(lam) @ Q.T, 0.5 * (B + B.T)


def _second_difference(f, A, B, t=1e-2):
    def d2(h):
        return (F_of(f, A + h * B) - 2 * F_of(f, A) + F_of(f, A - h * B)) / h**2

    return (4 * d2(t / 2) - d2(t)) / 3


def criterion_2():
    rng = np.random.default_rng(2)
    fns = [sf.ek_root(3), sf.quotient(3, 1), sf.power_mean(-1.0), sf.power_mean(2.0),
           sf.dual(sf.quotient(2, 1)), sf.combo((0.3, 0.7), (sf.ek_root(2), sf.power_mean(-1.0)))]
    gaps = (None, 1e-1, 1e-3, 1e-5, 1e-7)
    worst = 0.0
    for i in range(100):
        f, gap, n = fns[i % len(fns)], gaps[i % len(gaps)], 3 + (i % 2)
        A, B = _random_pair(rng, n, gap)
        fd = _second_difference(f, A, B)
        worst = max(worst, abs(d2F_action(f, A, B) - fd) / max(1.0, abs(fd)))
    return worst <= 1e-5, f"100 pairs, gaps down to 1e-7, worst abs/rel error {worst:.2e}"


def criterion_3():
    checked, worst, worst_name = 0, math.inf, ""
    failures = []
    for n in (2, 3, 5):
        for f in catalog(n):
            if not f.flags(n)["inverse_concave"]:
                continue
            rows = run_battery(f, n, samples=10_000, seed=n)
            for r in rows:
                if r.declared or r.required:
                    if r.min_margin < worst:
                        worst, worst_name = r.min_margin, f"{f.spec()} n={n} {r.check}"
                    if not r.holds:
                        failures.append(f"{f.spec()} n={n} {r.check}")
            checked += 1
    witness = sf.check_condition2(sf.quotient(2, 1), np.array([1.0, 1.0, 4.0]), np.array([0.0, 0.0, 1.0]))
    ok = not failures and witness < -1e-6
    detail = (f"{checked} inverse-concave (f, n) batteries x 10^4 samples x alpha in {{1,1.5,2,3}}, "
              f"worst asserted margin {worst:.2e} ({worst_name}); Quotient(2,1) witness margin {witness:.3e}")
    if failures:
        detail += f"; failing: {failures[:5]}"
    return ok, detail


def criterion_4():
    worst = 0.0
    for f in (sf.quotient(2, 1), sf.ek_root(2), sf.power_mean(-1.0), sf.scaled(3.0, sf.quotient(3, 1))):
        for a in (1.0, 1.5, 2.0, 3.0):
            r = sphere_oracle(f.unit_value(3), a)
            body = AxiConvexBody.sphere(3, 256, r)
            worst = max(worst, float(np.max(np.abs(residual(body, ShrinkerProblem(f, a, m=256))))))
    golden = math.acos((math.sqrt(5) - 1) / 2)
    slice_err = 0.0
    for f in (sf.ek_root(2), sf.normalized(sf.power_mean(-1.0), 3)):
        r0 = slice_radius(f, 3, 1.0)
        slice_err = max(slice_err, abs(r0 - golden))
        g = AxiGraphHemisphere.slice(3, 256, r0)
        worst = max(worst, float(np.max(np.abs(residual(g, ShrinkerProblem(f, 1.0, ambient=HEMISPHERE))))))
    ok = worst <= 1e-12 and slice_err <= 1e-10
    return ok, f"sup residual {worst:.2e} on m=256; |r0 - arccos((sqrt5-1)/2)| = {slice_err:.2e}"


def criterion_5():
    worst, solves = 0.0, 0
    for name, f in PROBE_FNS.items():
        for a in PROBE_ALPHAS:
            r_star = sphere_oracle(f.unit_value(3), a)
            for seed in range(20):
                rng = np.random.default_rng(seed)
                amp = rng.uniform(0.05, 0.3)
                w = rng.standard_normal(5)
                # |P_l| <= 1, so sum |w| = 1 keeps sup|s - r*| / r* <= amp
                init, _ = perturbed_body(3, 128, r_star, amp, (2, 3, 4, 5, 6), w / np.abs(w).sum())
                body, rep = solve_shrinker(ShrinkerProblem(f, a, m=128), init)
                worst = max(worst, float(np.max(np.abs(body.values - r_star))))
                solves += 1
    return worst <= 1e-8, f"{solves} Newton solves (20 seeds per f, alpha), worst sup|s - r*| {worst:.2e}"


def criterion_6():
    f = sf.ek_root(2)
    hom = 0.0
    for a in (1.0, 1.5, 2.0, 3.0):
        R0 = 1.2
        T = R0 ** (a + 1) / (a + 1)
        run = FlowRun(AxiConvexBody.sphere(3, 16, R0), max_time=0.95 * T, stop_when_round=False, record_every=25)
        tr = run_flow(run, ShrinkerProblem(f, a, m=16))
        t, r = tr.column("time"), tr.column("r_min")
        exact = homothetic_radius(t, T, a, 1.0)
        hom = max(hom, float(np.max(np.abs(r - exact) / exact)))
    lines, all_round = [], True
    for name, g in PROBE_FNS.items():
        for a in PROBE_ALPHAS:
            init = AxiConvexBody.from_function(3, 32, lambda th: 1 + 0.3 * legendre(2, np.cos(th)))
            tr = run_flow(FlowRun(init, record_every=200), ShrinkerProblem(g, a, m=32))
            ratio = tr.column("roundness")
            mono = bool(np.all(np.diff(ratio) < 0))
            all_round &= tr.reached_round and mono and ratio[-1] <= 1.001
            lines.append(f"{name}/a={a:g}: {ratio[-1]:.7f}")
    ok = hom <= 1e-6 and all_round
    return ok, f"homothetic rel. error {hom:.2e}; final roundness " + ", ".join(lines)


def criterion_7():
    worst_beta, worst_wz, worst_const, worst_id = 0.0, math.inf, 0.0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        body, _ = perturbed_body(3, 64, 1.0, 0.3, (2, 3, 4, 5, 6), rng.standard_normal(5))
        for f in PROBE_FNS.values():
            for a in (1.0, 2.0, 3.0):
                Z, W = Z_field(body, f, a), W_field(body, f, a)
                beta, _, _ = T_normalization(body, f, a)
                worst_beta = max(worst_beta, abs(beta - W.max()))
                worst_wz = min(worst_wz, float(np.min(W.values - Z.values)))
    for f in PROBE_FNS.values():
        for a in (1.0, 2.0, 3.0):
            bodies = [AxiConvexBody.sphere(3, 64, sphere_radius(f, 3, a)), AxiConvexBody.sphere(3, 64, 0.7),
                      AxiGraphHemisphere.slice(3, 64, slice_radius(f, 3, a))]
            for b in bodies:
                for fld in (Z_field(b, f, a), W_field(b, f, a)):
                    v = fld.values
                    worst_const = max(worst_const, float(np.ptp(v)) / max(1.0, float(np.max(np.abs(v)))))
    rng = np.random.default_rng(7)
    for n in (2, 3, 5):
        k = sf.sample_kappa(rng, 2000, n)
        for f in catalog(n):
            scale = sf.eval(f, k) * G_value(k)
            err = np.abs(fg_minus_trace(f, k) - fg_minus_trace_pairwise(f, k)) / scale
            worst_id = max(worst_id, float(err.max()))
    ok = worst_beta <= 1e-12 and worst_wz >= -1e-12 and worst_const <= 1e-12 and worst_id <= 1e-12
    return ok, (f"|beta* - max W| {worst_beta:.1e}; min(W - Z) {worst_wz:.2e}; Z, W spread on spheres/slices "
                f"{worst_const:.1e}; FG - sum f^i pairwise identity {worst_id:.1e}")


def criterion_8():
    worst, cases = 0.0, 0
    for f in PROBE_FNS.values():
        for a in (1.0, 1.5, 2.0, 3.0):
            base = sphere_radius(f, 3, a)
            init, _ = perturbed_body(3, 64, base, 0.2, (2, 3))
            body, _ = solve_shrinker(ShrinkerProblem(f, a, m=64), init)
            base_solved = float(np.mean(body.values))
            for c in (0.5, 2.0, 5.0):
                g = sf.scaled(c, f)
                predicted = c ** (a / (a + 1)) * base
                direct = sphere_radius(g, 3, a)
                init, _ = perturbed_body(3, 64, direct, 0.2, (2, 3))
                body, _ = solve_shrinker(ShrinkerProblem(g, a, m=64), init)
                solved = float(np.mean(body.values))
                worst = max(worst, abs(direct - predicted) / predicted,
                            abs(solved - c ** (a / (a + 1)) * base_solved) / predicted)
                cases += 1
    return worst <= 1e-10, f"{cases} (f, alpha, c) cases, worst relative deviation {worst:.2e}"


CRITERIA = [
    (1, "derivative correctness", criterion_1, 10),
    (2, "matrix second-derivative formula", criterion_2, 10),
    (3, "inequality battery", criterion_3, 120),
    (4, "sphere/slice exactness", criterion_4, 5),
    (5, "uniqueness probe", criterion_5, 300),
    (6, "flow behavior", criterion_6, 300),
    (7, "quantity identities", criterion_7, 30),
    (8, "scaling covariance", criterion_8, 5),
]


def evaluate(num):
    _, title, fn, budget = CRITERIA[num - 1]
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    in_budget = elapsed <= budget
    verdict = "PASS" if ok and in_budget else "FAIL"
    line = f"[{verdict}] criterion {num} ({title}): {detail}; runtime {elapsed:.1f}s (budget {budget}s)"
    return ok and in_budget, line


@pytest.mark.parametrize("num", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_acceptance(num, capsys):
    ok, line = evaluate(num)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for c in CRITERIA:
        results.append(evaluate(c[0]))
        print(results[-1][1], flush=True)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
