"""Named end-to-end checks, shared by the ``verify`` command and the acceptance tests.

Each check returns a :class:`CheckResult`.  A check fails when its
numerical condition fails or when it overruns its time budget.
"""
from __future__ import annotations

import io
import itertools
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import closed_form as cf
from . import geometry as geo
from . import oracle
from . import sampler
from .params import ModelParams

__all__ = ["CheckResult", "CHECKS", "run_checks", "GRID"]

GRID = np.linspace(0.25, 4.0, 5)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (budget {self.budget:g}s)" if self.budget else ""
        return f"[{status}] {self.number:2d} {self.name}: {self.detail}; {self.seconds:.2f}s{budget}"


def _grid_params():
    for lam, c, t in itertools.product(GRID, GRID, GRID):
        yield ModelParams(float(lam), float(c), float(t))


def _rel(a, b):
    return abs(a - b) / abs(b)


# -- 1 ---------------------------------------------------------------------

def check_geometry(cases: int = 10_000, seed: int = 1):
    rng = np.random.default_rng(seed)
    eta = rng.uniform(0.0, 10.0, (cases, 2))
    alpha = rng.uniform(-math.pi, math.pi, (cases, 2))
    worst_eta = worst_alpha = worst_carnot = worst_pyth = 0.0
    for i in range(cases):
        p1 = geo.HyperbolicPolar(eta[i, 0], alpha[i, 0])
        p2 = geo.HyperbolicPolar(eta[i, 1], alpha[i, 1])
        q1, q2 = geo.polar_to_cartesian(p1), geo.polar_to_cartesian(p2)
        back = geo.cartesian_to_polar(q1)
        worst_eta = max(worst_eta, abs(back.eta - p1.eta))
        worst_alpha = max(worst_alpha, abs(geo.normalize_angle(back.alpha - p1.alpha)))
        carnot = geo.carnot_cosh(p1.eta, p2.eta, p1.alpha - p2.alpha)
        worst_carnot = max(worst_carnot, _rel(geo.cosh_distance_pair(q1, q2), carnot))
        a, b = eta[i]
        worst_pyth = max(worst_pyth, _rel(geo.carnot_cosh(a, b, 0.5 * math.pi), math.cosh(a) * math.cosh(b)))
    ok = worst_eta < 1e-10 and worst_alpha < 1e-10 and worst_carnot < 1e-10 and worst_pyth < 1e-14
    return ok, (f"round trip eta {worst_eta:.1e} alpha {worst_alpha:.1e}, "
                f"Carnot {worst_carnot:.1e}, Pythagoras {worst_pyth:.1e}")


# -- 2 ---------------------------------------------------------------------

def check_mixture():
    worst = max(_rel(cf.mean_cosh_by_mixture(p), cf.mean_cosh(p)) for p in _grid_params())
    return worst < 1e-8, f"max rel {worst:.1e} over 125 points"


# -- 3 ---------------------------------------------------------------------

def check_conditional():
    pts = list(itertools.product(np.linspace(0.25, 2.0, 4), np.linspace(0.25, 3.0, 5)))
    worst_closed = 0.0
    for (c, t), n in itertools.product(pts, range(4)):
        worst_closed = max(worst_closed, _rel(cf.conditional_mean_cosh(n, c, t),
                                              cf.conditional_mean_cosh_closed(n, c, t)))
    worst_quad = 0.0
    for (c, t), n in itertools.product(pts[::3], range(4)):
        worst_quad = max(worst_quad, _rel(cf.conditional_mean_cosh(n, c, t),
                                          oracle.conditional_mean_oracle("cosh", n, c, t)))
    ok = worst_closed < 1e-10 and worst_quad < 1e-7
    return ok, f"series vs closed {worst_closed:.1e}, series vs quadrature {worst_quad:.1e}"


# -- 4 ---------------------------------------------------------------------

def check_ode():
    worst = {}
    for kind in cf.ODE_KINDS:
        worst[kind] = max(cf.ode_residual(kind, ModelParams(float(lam), float(c), 1.0), GRID)
                          for lam, c in itertools.product(GRID, GRID))
    ok = all(v < 1e-6 for v in worst.values())
    return ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


# -- 5 ---------------------------------------------------------------------

def check_cardano():
    worst_val = worst_root = 0.0
    for lam, t in itertools.product((0.3, 0.75, 1.5, 3.0), (0.1, 0.5, 1.0, 2.0, 4.0)):
        c = lam / 3.0
        p = ModelParams(lam, c, t)
        worst_val = max(worst_val, _rel(cf.second_moment(p), cf.second_moment_special(c, t)))
        s = sorted(z.real for z in cf.second_moment_roots(p).roots)
        want = (-math.sqrt(7.0) * c, 0.0, math.sqrt(7.0) * c)
        worst_root = max(worst_root, max(abs(a - b) for a, b in zip(s, want)))
    ok = worst_val < 1e-10 and worst_root < 1e-12
    return ok, f"value rel {worst_val:.1e}, roots abs {worst_root:.1e} at 20 points"


# -- 6 ---------------------------------------------------------------------

def check_jumpback():
    worst_k = worst_dec = worst_gamma = 0.0
    for p in _grid_params():
        g1 = cf.jumpback_mean(p, 1)
        g2 = cf.jumpback_mean(p, 2)
        worst_k = max(worst_k, _rel(cf.jumpback_mean_k1(p), g1), _rel(cf.jumpback_mean_k2(p), g2))
        mu = p.mu
        dec = ((p.c / p.lam) ** 2 * cf.poisson_tail(2, mu) * g2
               + cf.poisson_tail(1, mu) * g1 + math.exp(-mu))
        worst_dec = max(worst_dec, _rel(dec, cf.mean_cosh(p)))
    for p in list(_grid_params())[::7]:
        for k in (1, 2, 3):
            worst_gamma = max(worst_gamma, _rel(cf.gamma_mixture_mean(p, float(k)), cf.jumpback_mean(p, k)))
    ok = worst_k < 1e-9 and worst_dec < 1e-8 and worst_gamma < 1e-6
    return ok, (f"k=1,2 displays {worst_k:.1e}, decomposition {worst_dec:.1e}, "
                f"Gamma mixture {worst_gamma:.1e}")


# -- 7 ---------------------------------------------------------------------

def check_spherical():
    worst_crit = worst_imag = 0.0
    for c, t in itertools.product(GRID, GRID):
        lam = 2.0 * c
        want = math.exp(-0.5 * lam * t) * (1.0 + 0.5 * lam * t)
        worst_crit = max(worst_crit, _rel(cf.spherical_mean(ModelParams(lam, c, t)), want))
    for lam, c, t in itertools.product(GRID, GRID, GRID):
        if 2 * c > lam:
            got = cf.spherical_mean(ModelParams(lam, c, t))
            worst_imag = max(worst_imag, abs(got - cf.mean_cosh_analytic(lam, -c * c, t)) / max(1e-300, abs(got)))
    far = cf.spherical_mean(ModelParams(1e3, 1.0, 1.0))
    ok = worst_crit < 1e-12 and worst_imag < 1e-10 and abs(far - 1.0) < 1e-2
    return ok, (f"critical {worst_crit:.1e}, imaginary radius {worst_imag:.1e}, "
                f"lam=1e3 gives {far:.6f}")


# -- 8 ---------------------------------------------------------------------

MC_CASES = (
    ("cosh_eta", None, 1),
    ("cos_spherical", None, 1),
    ("jumpback", None, 1),
    ("cosh_eta", sampler.Condition.exactly(2), 1),
)


def check_monte_carlo(replications: int = 100_000, seeds: int = 100, workers: int | None = None):
    p = ModelParams(1.0, 0.5, 2.0)
    if workers is None:
        workers = os.cpu_count() or 1
    parts = []
    ok = True
    for kind, cond, k in MC_CASES:
        z = [sampler.estimate(kind, p, cond, replications, sampler.SeedSpec(s), workers, k).zscore
             for s in range(seeds)]
        exceed = sum(abs(v) > 3.0 for v in z)
        ok &= abs(z[0]) <= 3.0 and exceed <= max(2, seeds // 50)
        label = kind if cond is None else f"{kind}|{cond}"
        parts.append(f"{label} z0={z[0]:+.2f} {exceed}/{seeds} beyond 3SE")
    return ok, "; ".join(parts)


# -- 9 ---------------------------------------------------------------------

def check_radius(replications: int = 100_000):
    worst_q = 0.0
    for (c, t), n in itertools.product(((0.5, 1.0), (1.0, 1.0), (1.0, 2.5), (2.0, 1.5)), range(4)):
        quad = oracle.nested_integral(oracle.NestedIntegralSpec("sinh", n, c, t)).value
        worst_q = max(worst_q, _rel(cf.radius_bound_series(n, c, t), quad))
    worst_g = 0.0
    for lam, c, t in itertools.product(GRID, GRID, GRID[:3]):
        target = cf.radius_generating_function(lam, c, t)
        partial, n = 0.0, 0
        # tail bound: J_n <= t^n/n! sinh(ct)
        while True:
            partial += lam**n * cf.radius_bound_series(n, c, t)
            n += 1
            if math.exp(n * math.log(lam * t) - math.lgamma(n + 1)) * math.sinh(c * t) < 1e-9 * target:
                break
        worst_g = max(worst_g, _rel(partial, target))
    p = ModelParams(1.0, 0.5, 2.0)
    batch = sampler.sample_batch(p, replications, sampler.SeedSpec(2024).generator(0))
    lc = batch.log_cosh_eta(p.c)
    ls = sampler.log_sinh_from_log_cosh(lc)
    bound = batch.log_sinh_bound(p.c)
    violations = int(np.sum(bound > ls + 1e-12 * np.maximum(1.0, np.abs(ls))))
    ok = worst_q < 1e-7 and worst_g < 1e-6 and violations == 0
    return ok, (f"series vs quadrature {worst_q:.1e}, generating function {worst_g:.1e}, "
                f"{violations} bound violations in {replications}")


# -- 10 --------------------------------------------------------------------

CLI_RUNS = (
    ["simulate", "--kind", "cosh", "--lambda", "1", "--c", "0.5", "--t", "2", "--reps", "20000", "--seed", "42"],
    ["simulate", "--kind", "jumpback", "--k", "2", "--lambda", "1", "--c", "0.5", "--t", "2",
     "--reps", "20000", "--seed", "7", "--sweep", "c:0.1:1:3"],
    ["mean", "--lambda", "1", "--c", "1", "--t", "1", "--sweep", "t:0.1:10:7:log"],
)


def check_cli_determinism():
    from . import cli

    def capture(argv, workers):
        out = io.StringIO()
        code = cli.main(argv + ["--workers", str(workers)], stdout=out)
        return code, out.getvalue().encode()

    bad = []
    for argv in CLI_RUNS:
        a, b, c = capture(argv, 1), capture(argv, 1), capture(argv, 3)
        if a[0] != 0 or not (a == b == c):
            bad.append(argv[0])
    return not bad, ("byte-identical CSV across repeats and worker counts"
                     if not bad else f"mismatch in {bad}")


CHECKS = {
    1: ("geometry identities", check_geometry, 1.0),
    2: ("closed form vs Poisson mixture", check_mixture, 5.0),
    3: ("conditional means", check_conditional, 30.0),
    4: ("ODE residuals", check_ode, 10.0),
    5: ("Cardano special case", check_cardano, None),
    6: ("jump-back means", check_jumpback, None),
    7: ("spherical mean", check_spherical, None),
    8: ("Monte Carlo vs analytic", check_monte_carlo, 60.0),
    9: ("radius bound", check_radius, None),
    10: ("CLI determinism", check_cli_determinism, None),
}


def run_checks(numbers=None, **overrides):
    """Run the selected checks (all by default) and return their results in order.

    ``overrides`` maps ``"check_<n>"`` to keyword arguments for that check.
    Overriding anything but ``workers`` leaves the acceptance configuration,
    so the time budget is then not enforced.
    """
    results = []
    for num in sorted(numbers or CHECKS):
        name, fn, budget = CHECKS[num]
        kwargs = overrides.get(f"check_{num}", {})
        t0 = time.perf_counter()
        try:
            ok, detail = fn(**kwargs)
        except ArithmeticError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        if set(kwargs) - {"workers"}:
            budget = None
        if budget is not None and dt > budget:
            ok = False
            detail += "; over time budget"
        results.append(CheckResult(num, name, bool(ok), detail, dt, budget))
    return results
