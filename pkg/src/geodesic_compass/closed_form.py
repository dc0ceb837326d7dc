"""Explicit moment formulas for the orthogonal-deviation random motion.

Notation used throughout: ``lam`` is the Poisson rate, ``c`` the speed, ``t``
the horizon, ``D = sqrt(lam^2 + 4 c^2)`` and ``N(t)`` the number of direction
changes before ``t``.

Contents
--------
* ``mean_cosh``: ``E cosh eta(t)``, with the conditional means
  ``E_n(t) = E{cosh eta(t) | N(t)=n}`` as power series and as their Poisson
  mixture.
* ``radius_bound_series`` / ``radius_bound_mean``: the ordered integrals of the
  product of ``sinh`` over the legs, and their Poisson mixture (a lower bound
  for the mean radius of the circle of equidistant points).
* ``second_moment``: ``E cosh^2 eta(t)`` from the third-order linear ODE, its
  characteristic cubic solved by Cardano's method.
* ``jumpback_mean`` / ``gamma_mixture_mean``: the motion restarted from the
  origin at the ``k``-th Poisson event, or at a Gamma-distributed time.
* ``spherical_mean``: ``E cos d(P0, Pt)`` for the analogous motion on the unit
  sphere, in its three regimes.
* ``ode_residual``: finite-difference residuals of the governing ODEs.
"""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import special

from .errors import ConditioningError, DiscretizationError, QuadratureError, SeriesTruncationError
from .params import ModelParams

__all__ = [
    "SeriesControl",
    "DEFAULT_SERIES",
    "CubicRoots",
    "Regime",
    "poisson_tail",
    "mean_cosh",
    "mean_cosh_analytic",
    "conditional_mean_cosh",
    "conditional_mean_cosh_closed",
    "mean_cosh_by_mixture",
    "radius_bound_series",
    "radius_bound_mean",
    "radius_generating_function",
    "solve_depressed_cubic",
    "second_moment_roots",
    "second_moment",
    "second_moment_special",
    "phi",
    "jumpback_mean",
    "jumpback_mean_explicit",
    "jumpback_mean_k1",
    "jumpback_mean_k2",
    "gamma_mixture_mean",
    "regime",
    "spherical_mean",
    "ode_residual",
    "ODE_KINDS",
]


@dataclass(frozen=True)
class SeriesControl:
    """Truncation rule for the infinite positive series.

    A series stops once two consecutive terms are both below
    ``rel_tol`` times the running sum; reaching ``max_terms`` first raises
    :class:`SeriesTruncationError`.
    """

    rel_tol: float = 1e-12
    max_terms: int = 10**6

    def __post_init__(self):
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_SERIES = SeriesControl()


def _sqrt_d(lam, c):
    return math.hypot(lam, 2.0 * c)


def poisson_tail(k: int, mu: float) -> float:
    """``Pr{N >= k}`` for ``N ~ Poisson(mu)``, via the regularised incomplete gamma."""
    if k <= 0:
        return 1.0
    if mu <= 0:
        return 0.0
    return float(special.gammainc(k, mu))


# ---------------------------------------------------------------------------
# mean hyperbolic distance

def _mean_cosh(lam, c, t):
    d = _sqrt_d(lam, c)
    # (D - lam) and (1 - lam/D) rewritten without subtraction
    grow = 4.0 * c * c / (d + lam)
    w_minus = grow / d
    return 0.5 * ((1.0 + lam / d) * math.exp(-0.5 * (lam - d) * t)
                  + w_minus * math.exp(-0.5 * (lam + d) * t))


def mean_cosh(p: ModelParams) -> float:
    """``E cosh eta(t) = e^{-lam t/2} [cosh(tD/2) + (lam/D) sinh(tD/2)]``.

    Evaluated as a weighted sum of two exponentials so that large ``t`` does
    not overflow the intermediate ``cosh``.
    """
    if p.c == 0.0:
        return 1.0
    return _mean_cosh(p.lam, p.c, p.t)


def mean_cosh_analytic(lam: float, c_squared: float, t: float) -> float:
    """The mean-distance formula with ``c^2`` allowed to be any real number.

    Complex arithmetic is used so that ``c_squared < 0`` continues the
    hyperbolic formula onto the sphere (``c -> i c``).
    """
    d = cmath.sqrt(lam * lam + 4.0 * c_squared)
    if d == 0:
        return math.exp(-0.5 * lam * t) * (1.0 + 0.5 * lam * t)
    z = 0.5 * t * d
    val = cmath.exp(-0.5 * lam * t) * (cmath.cosh(z) + lam / d * cmath.sinh(z))
    return val.real


def _scaled_series(log_first, x2, ratio, ctl):
    """Sum a positive series given its first term (log) and a term-ratio callable."""
    term = math.exp(log_first)
    total = term
    small = 0
    j = 0
    while True:
        term *= ratio(j) * x2
        j += 1
        total += term
        if term <= ctl.rel_tol * total:
            small += 1
            if small >= 2:
                return total
        else:
            small = 0
        if j >= ctl.max_terms:
            raise SeriesTruncationError(
                f"series did not reach rel_tol={ctl.rel_tol} within {ctl.max_terms} terms")


def _cond_block(log_coef, r, odd, x, ctl):
    # e^{-x} * coef * sum_j C(r+j, j) x^{2j} / (2r+2j+odd)!
    base = 2 * r + odd
    log_first = log_coef - math.lgamma(base + 1) - x
    if x == 0.0:
        return math.exp(log_first)

    def ratio(j):
        return (r + j + 1) / ((j + 1) * (base + 2 * j + 1) * (base + 2 * j + 2))

    return _scaled_series(log_first, x * x, ratio, ctl)


def conditional_mean_cosh(n: int, c: float, t: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """``E{cosh eta(t) | N(t) = n}`` from its double power series in ``(ct)^2``.

    Every term is positive.  Coefficients are formed in log space, and the
    whole sum is carried scaled by ``e^{-ct}``, so moderately large ``n`` and
    ``ct`` neither overflow nor lose digits.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if c < 0 or t < 0:
        raise ValueError("c and t must be >= 0")
    x = c * t
    if n == 0:
        return math.cosh(x)
    log_nfact = math.lgamma(n + 1) - n * math.log(2.0)
    parts = []
    for r in range(n // 2 + 1):
        parts.append(_cond_block(log_nfact - math.lgamma(n - 2 * r + 1), r, 0, x, ctl))
    for r in range((n - 1) // 2 + 1):
        parts.append(_cond_block(log_nfact - math.lgamma(n - 2 * r), r, 1, x, ctl))
    return math.fsum(parts) * math.exp(x)


def _taylor_coefficients(n, terms):
    """Exact coefficients of ``(ct)^{2j}``, ``j < terms``, in ``E_n(t)``."""
    out = []
    for j in range(terms):
        s = Fraction(0)
        for r in range(n // 2 + 1):
            s += Fraction(math.factorial(n) * math.comb(r + j, j),
                          2**n * math.factorial(n - 2 * r) * math.factorial(2 * r + 2 * j))
        for r in range((n - 1) // 2 + 1):
            s += Fraction(math.factorial(n) * math.comb(r + j, j),
                          2**n * math.factorial(n - 2 * r - 1) * math.factorial(2 * r + 2 * j + 1))
        out.append(float(s))
    return out


def conditional_mean_cosh_closed(n: int, c: float, t: float) -> float:
    """Elementary closed forms of ``E_n(t)`` for ``n <= 3``.

    For ``ct < 1e-2`` the ``1/(ct)^k`` terms cancel badly, so the first five
    terms of the Taylor expansion in ``(ct)^2`` are used instead.
    """
    x = c * t
    if n == 0:
        return math.cosh(x)
    if n > 3 or n < 0:
        raise ValueError("closed forms exist only for n = 0..3")
    if x < 1e-2:
        x2 = x * x
        return math.fsum(a * x2**j for j, a in enumerate(_taylor_coefficients(n, 5)))
    ch, sh = math.cosh(x), math.sinh(x)
    if n == 1:
        return 0.5 * ch + sh / (2.0 * x)
    if n == 2:
        return 0.25 * ch + (1.0 / (4.0 * x) + 1.0 / (2.0 * x)) * sh
    return (1 / 8 + 3 / (8 * x * x)) * ch + (6 / (8 * x) - 3 / (2 * x) ** 3) * sh


def _poisson_logpmf(n, mu):
    return n * math.log(mu) - mu - math.lgamma(n + 1)


def mean_cosh_by_mixture(p: ModelParams, ctl: SeriesControl = DEFAULT_SERIES,
                         n_cap: int | None = None) -> float:
    """``sum_n Pr{N(t)=n} E_n(t)``; an independent route to :func:`mean_cosh`.

    Since ``E_n(t) <= cosh(ct)``, the neglected tail is bounded by
    ``Pr{N(t) > n_cap} cosh(ct)``; it must fall below ``rel_tol``.  With
    ``n_cap=None`` the smallest admissible cap is chosen.
    """
    mu = p.mu
    if p.c == 0.0 or mu == 0.0:
        return math.cosh(p.c * p.t)
    ch = math.cosh(p.c * p.t)
    if n_cap is None:
        n_cap = int(mu)
        while special.pdtrc(n_cap, mu) * ch > ctl.rel_tol:
            n_cap += 1
            if n_cap > ctl.max_terms:
                raise SeriesTruncationError("Poisson tail does not vanish within max_terms")
    elif special.pdtrc(n_cap, mu) * ch > ctl.rel_tol:
        raise SeriesTruncationError(
            f"Poisson tail beyond n_cap={n_cap} exceeds rel_tol={ctl.rel_tol}")
    terms = [math.exp(_poisson_logpmf(n, mu)) * conditional_mean_cosh(n, p.c, p.t, ctl)
             for n in range(n_cap + 1)]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# radius lower bound

def radius_bound_series(n: int, c: float, t: float, ctl: SeriesControl = DEFAULT_SERIES) -> float:
    """Ordered integral of ``prod_k sinh(c * leg_k)`` over ``n`` interior points.

    ``J_n(t) = t^{2n+1} c^{n+1} / n! * sum_r (n+r)!/r! (ct)^{2r} / (2r+2n+1)!``
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if c < 0 or t < 0:
        raise ValueError("c and t must be >= 0")
    x = c * t
    if n == 0:
        return math.sinh(x)
    if c == 0.0 or t == 0.0:
        return 0.0
    log_first = (2 * n + 1) * math.log(t) + (n + 1) * math.log(c) - math.lgamma(2 * n + 2) - x

    def ratio(r):
        return (n + r + 1) / ((r + 1) * (2 * r + 2 * n + 2) * (2 * r + 2 * n + 3))

    return _scaled_series(log_first, x * x, ratio, ctl) * math.exp(x)


def radius_generating_function(s: float, c: float, t: float) -> float:
    """``sum_n s^n J_n(t) = sqrt(c/(s+c)) sinh(t sqrt(c(s+c)))``."""
    if c == 0.0:
        return 0.0
    g = math.sqrt(c * (s + c))
    return math.sqrt(c / (s + c)) * math.sinh(t * g)


def radius_bound_mean(p: ModelParams) -> float:
    """``E prod_k sinh(c * leg_k) = e^{-lam t} sqrt(c/(lam+c)) sinh(t sqrt(c(lam+c)))``."""
    lam, c, t = p.lam, p.c, p.t
    if c == 0.0 or t == 0.0:
        return 0.0
    g = math.sqrt(c * (lam + c))
    return 0.5 * math.sqrt(c / (lam + c)) * math.exp((g - lam) * t) * -math.expm1(-2.0 * g * t)


# ---------------------------------------------------------------------------
# second moment

@dataclass(frozen=True)
class CubicRoots:
    """Roots of the characteristic cubic of the second-moment ODE.

    ``roots`` solve the depressed cubic ``s^3 + p s + q = 0``;
    ``shifted_roots`` are ``r = s - 2 lam/3``, the exponential rates of
    ``E cosh^2 eta(t)``.
    """

    roots: tuple
    shifted_roots: tuple
    p: float
    q: float

    @property
    def discriminant(self) -> float:
        return self.p**3 / 27.0 + self.q**2 / 4.0

    @property
    def min_gap(self) -> float:
        r = self.shifted_roots
        return min(abs(r[0] - r[1]), abs(r[0] - r[2]), abs(r[1] - r[2]))

    @property
    def near_degenerate(self) -> bool:
        scale = max(abs(z) for z in self.shifted_roots) or 1.0
        return self.min_gap < 1e-6 * scale


def solve_depressed_cubic(p: float, q: float) -> tuple:
    """All three roots of ``s^3 + p s + q = 0`` (as complex numbers).

    With a negative discriminant all roots are real and the trigonometric
    form is used; otherwise Cardano's radicals with real cube roots.
    """
    disc = p**3 / 27.0 + q * q / 4.0
    if disc < 0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg)))
        s = [m * math.cos((theta - 2.0 * math.pi * k) / 3.0) for k in range(3)]
        return tuple(complex(v) for v in sorted(s, reverse=True))
    sq = math.sqrt(disc)
    u = float(np.cbrt(-0.5 * q + sq))
    v = float(np.cbrt(-0.5 * q - sq))
    s1 = u + v
    re = -0.5 * (u + v)
    im = 0.5 * math.sqrt(3.0) * (u - v)
    return (complex(s1), complex(re, im), complex(re, -im))


_EPS = np.finfo(float).eps


def _newton(f, x):
    for _ in range(40):
        fx, dfx = f(x)
        if dfx == 0.0:
            break
        step = fx / dfx
        x -= step
        if abs(step) <= 2.0 * _EPS * abs(x):
            break
    return x


def second_moment_roots(p: ModelParams) -> CubicRoots:
    """Roots of ``r^3 + 2 lam r^2 - (4c^2 - lam^2) r - 2 c^2 lam = 0`` via ``s = r + 2 lam/3``.

    The discriminant equals ``-(c^2/27)(2 lam^4 + 13 lam^2 c^2 + 64 c^4)``, so
    the roots are real and distinct whenever ``c > 0`` and the trigonometric
    form applies.  As ``c -> 0`` two roots merge at ``-lam`` and ``acos``
    becomes ill-conditioned.  Each root is therefore refined by Newton's
    method on ``r (r + lam)^2 - c^2 (4r + 2 lam)``, written in ``r`` or in
    ``r + lam``, whichever is smaller, and for ``c << lam`` it starts from
    the asymptotic roots ``2c^2/lam`` and ``-lam +- sqrt(2) c``.
    """
    lam, c = p.lam, p.c
    c2 = c * c
    pp = -(lam * lam / 3.0 + 4.0 * c2)
    qq = (2.0 * lam / 3.0) * (c2 - lam * lam / 9.0)
    shift = 2.0 * lam / 3.0
    if c == 0.0:
        r = (0.0, -lam, -lam)
    else:
        if c < 1e-4 * lam:
            guesses = (2.0 * c2 / lam, -lam + math.sqrt(2.0) * c, -lam - math.sqrt(2.0) * c)
        else:
            m = 2.0 * math.sqrt(-pp / 3.0)
            theta = math.acos(max(-1.0, min(1.0, 3.0 * qq / (pp * m))))
            guesses = tuple(m * math.cos((theta - 2.0 * math.pi * k) / 3.0) - shift for k in range(3))

        def near_zero(r):
            u = r + lam
            return r * u * u - c2 * (4.0 * r + 2.0 * lam), u * (3.0 * r + lam) - 4.0 * c2

        def near_lam(d):
            # same polynomial in d = r + lam
            return (d - lam) * d * d - c2 * (4.0 * d - 2.0 * lam), d * (3.0 * d - 2.0 * lam) - 4.0 * c2

        r = []
        for g in guesses:
            if abs(g) <= abs(g + lam):
                r.append(_newton(near_zero, g))
            else:
                r.append(_newton(near_lam, g + lam) - lam)
        r = tuple(sorted(r, reverse=True))
    s = tuple(complex(z + shift) for z in r)
    return CubicRoots(s, tuple(complex(z) for z in r), pp, qq)


def _phi1(z):
    return 1.0 if z == 0.0 else math.expm1(z) / z


def second_moment(p: ModelParams) -> float:
    """``E cosh^2 eta(t)`` solving the third-order ODE with ``M(0)=1, M'(0)=0, M''(0)=2c^2``.

    The solution is expanded in the Newton basis ``e^{at}``, ``e^{[a,b]t}``,
    ``e^{[a,b,c]t}`` (divided differences of ``r -> e^{rt}``), which equals
    the ``sum a_i e^{r_i t}`` expansion for distinct roots and turns into
    ``t e^{rt}`` continuously when two roots merge (``c -> 0``).
    """
    if p.c == 0.0:
        return 1.0
    a, b, cc = (z.real for z in second_moment_roots(p).shifted_roots)
    t = p.t
    y0, y1, y2 = 1.0, 0.0, 2.0 * p.c * p.c
    k1 = y0
    k2 = y1 - k1 * a
    k3 = y2 - k1 * a * a - k2 * (a + b)
    dd_ab = math.exp(b * t) * t * _phi1((a - b) * t)
    dd_bc = math.exp(cc * t) * t * _phi1((b - cc) * t)
    dd_abc = (dd_ab - dd_bc) / (a - cc)
    return k1 * math.exp(a * t) + k2 * dd_ab + k3 * dd_abc


def second_moment_special(c: float, t: float) -> float:
    """Closed form of ``E cosh^2 eta(t)`` when ``c = lam/3``."""
    w = math.sqrt(7.0) * c * t
    return math.exp(-2.0 * c * t) / 7.0 * (1.0 + 6.0 * math.cosh(w) + 2.0 * math.sqrt(7.0) * math.sinh(w))


# ---------------------------------------------------------------------------
# jumps back to the origin

def phi(m: int, z: float) -> float:
    """``phi_m(z) = sum_{j>=0} z^j / (j+m)!`` (so ``phi_0 = exp``)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return math.exp(z)
    if abs(z) <= m + 1:
        term = 1.0 / math.factorial(m)
        total = term
        j = 0
        while abs(term) > 1e-17 * abs(total) or j < 2:
            term *= z / (j + m + 1)
            total += term
            j += 1
        return total
    val = math.expm1(z) / z
    fact = 1.0
    for j in range(2, m + 1):
        fact *= j - 1
        val = (val - 1.0 / fact) / z
    return val


def _jumpback_prefactor(lam, t, k):
    mu = lam * t
    tail = poisson_tail(k, mu)
    if not tail > 0.0:
        raise ConditioningError(f"Pr{{N(t) >= {k}}} is zero or underflows (lam*t={mu})")
    return tail


def jumpback_mean(p: ModelParams, k: int) -> float:
    """``E{cosh eta_k(t) | N(t) >= k}`` for the motion restarted at the ``k``-th event.

    The bracket ``e^{At}/A^{k-1} - e^{Bt}/B^{k-1} + sum_i (B^{-i} - A^{-i}) t^{k-i-1}/(k-i-1)!``
    equals ``t^{k-1} (phi_{k-1}(At) - phi_{k-1}(Bt))``, which stays finite as
    ``B -> 0`` (``c -> 0``) and avoids the cancellation between the inverse
    powers of ``B``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    lam, c, t = p.lam, p.c, p.t
    tail = _jumpback_prefactor(lam, t, k)
    d = _sqrt_d(lam, c)
    a = 0.5 * (lam + d)
    b = -2.0 * c * c / (lam + d)
    bracket = math.exp(-lam * t) * (phi(k - 1, a * t) - phi(k - 1, b * t))
    return lam**k * t ** (k - 1) * bracket / (d * tail)


def jumpback_mean_explicit(p: ModelParams, k: int) -> float:
    """The same quantity evaluated term by term (reference form; needs ``c > 0``)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    lam, c, t = p.lam, p.c, p.t
    if c == 0.0:
        raise ValueError("explicit form is singular at c = 0")
    tail = _jumpback_prefactor(lam, t, k)
    d = _sqrt_d(lam, c)
    a = 0.5 * (lam + d)
    b = 0.5 * (lam - d)
    s = math.exp(a * t) / a ** (k - 1) - math.exp(b * t) / b ** (k - 1)
    for i in range(1, k):
        s += (b**-i - a**-i) * t ** (k - i - 1) / math.factorial(k - i - 1)
    return lam**k * math.exp(-lam * t) * s / (d * tail)


def jumpback_mean_k1(p: ModelParams) -> float:
    """``(lam/D) sinh(tD/2) / sinh(lam t/2)``."""
    lam, c, t = p.lam, p.c, p.t
    d = _sqrt_d(lam, c)
    if t == 0.0:
        raise ConditioningError("Pr{N(0) >= 1} = 0")
    return lam / d * math.sinh(0.5 * t * d) / math.sinh(0.5 * lam * t)


def jumpback_mean_k2(p: ModelParams) -> float:
    """``lam^2 e^{-lam t/2} [cosh(tD/2) - (lam/D) sinh(tD/2) - e^{-lam t/2}] / (c^2 Pr{N>=2})``."""
    lam, c, t = p.lam, p.c, p.t
    if c == 0.0:
        raise ValueError("display is singular at c = 0")
    d = _sqrt_d(lam, c)
    tail = _jumpback_prefactor(lam, t, 2)
    h = 0.5 * t * d
    inner = math.cosh(h) - lam / d * math.sinh(h) - math.exp(-0.5 * lam * t)
    return lam * lam * math.exp(-0.5 * lam * t) * inner / (c * c * tail)


def gamma_mixture_mean(p: ModelParams, nu: float, quad_pts: int = 64) -> float:
    """Mean ``cosh`` distance when the restart time is Gamma(``nu``, ``lam``) truncated to ``(0, t)``.

    ``lam^nu e^{-lam t} / (Pr{T_nu <= t} Gamma(nu)) * int_0^t (t-s)^{nu-1} e^{lam s} E(s) ds``

    The ``(t-s)^{nu-1}`` factor is absorbed into a Gauss-Jacobi rule, which
    handles the endpoint singularity for ``nu < 1``.  The rule is repeated
    with half the nodes and the two results must agree to ``1e-9``.
    """
    if nu <= 0:
        raise ValueError("nu must be > 0")
    if quad_pts < 4:
        raise ValueError("quad_pts must be >= 4")
    lam, c, t = p.lam, p.c, p.t
    mu = lam * t
    if mu == 0.0:
        raise ConditioningError("Pr{T_nu <= t} = 0")
    norm = special.gammainc(nu, mu)
    if not norm > 0.0:
        raise ConditioningError(f"Pr{{T_nu <= t}} underflows (nu={nu}, lam*t={mu})")
    if c == 0.0:
        return 1.0

    def rule(npts):
        x, w = special.roots_jacobi(npts, nu - 1.0, 0.0)
        s = 0.5 * t * (1.0 + x)
        g = np.array([math.exp(-lam * (t - si)) * _mean_cosh(lam, c, si) for si in s])
        # lam^nu (t/2)^nu / Gamma(nu) * sum w g, in log space
        log_pref = nu * math.log(0.5 * mu) - special.gammaln(nu)
        return math.exp(log_pref) * math.fsum(w * g) / norm

    fine = rule(quad_pts)
    coarse = rule(max(quad_pts // 2, 2))
    if abs(fine - coarse) > 1e-9 * abs(fine):
        raise QuadratureError(
            f"Gauss-Jacobi rule not converged: {fine!r} vs {coarse!r} with {quad_pts} nodes")
    return fine


# ---------------------------------------------------------------------------
# the sphere

class Regime(str, enum.Enum):
    SUBCRITICAL = "subcritical"      # 2c < lam, over-damped
    CRITICAL = "critical"            # 2c = lam
    SUPERCRITICAL = "supercritical"  # 2c > lam, oscillating

    def __str__(self):
        return self.value


CRITICAL_BAND = 1e-12


def regime(p: ModelParams) -> Regime:
    disc = p.lam * p.lam - 4.0 * p.c * p.c
    if abs(disc) < CRITICAL_BAND * (p.lam * p.lam + 4.0 * p.c * p.c):
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if disc > 0 else Regime.SUPERCRITICAL


def _spherical_mean(lam, c, t, reg):
    damp = math.exp(-0.5 * lam * t)
    half = 0.5 * lam * t
    if reg is Regime.CRITICAL:
        return damp * (1.0 + half)
    w = math.sqrt(abs(lam * lam - 4.0 * c * c))
    x = 0.5 * t * w
    if reg is Regime.SUPERCRITICAL:
        sinc = 1.0 if x == 0.0 else math.sin(x) / x
        return damp * (math.cos(x) + half * sinc)
    if x < 1.0:
        sinhc = 1.0 if x == 0.0 else math.sinh(x) / x
        return damp * (math.cosh(x) + half * sinhc)
    # both exponents are <= 0 here, as w < lam
    return 0.5 * ((1.0 + lam / w) * math.exp(-0.5 * (lam - w) * t)
                  + (1.0 - lam / w) * math.exp(-0.5 * (lam + w) * t))


def spherical_mean(p: ModelParams) -> float:
    """``E cos d(P0, Pt)`` on the unit sphere.

    The damped term is written as ``cosh x + (lam t/2) sinh(x)/x`` (or the
    ``cos``/``sinc`` analogue), so both non-critical branches tend to the
    critical value ``e^{-lam t/2}(1 + lam t/2)`` without loss of precision.
    """
    if p.c == 0.0:
        return 1.0
    return _spherical_mean(p.lam, p.c, p.t, regime(p))


# ---------------------------------------------------------------------------
# ODE residuals

ODE_KINDS = ("hyperbolic_mean", "second_moment", "spherical_mean")


def _ode_parts(kind, p):
    # coefficients (a_0, a_1, ...) of L[f] = sum_k a_k f^(k)
    lam, c = p.lam, p.c
    if kind == "hyperbolic_mean":
        return (lambda t: mean_cosh(p.at(t))), (-c * c, lam, 1.0)
    if kind == "spherical_mean":
        return (lambda t: spherical_mean(p.at(t))), (c * c, lam, 1.0)
    if kind == "second_moment":
        return (lambda t: second_moment(p.at(t))), (-2 * c * c * lam, lam * lam - 4 * c * c, 2 * lam, 1.0)
    raise ValueError(f"unknown ODE kind {kind!r}; expected one of {ODE_KINDS}")


# 4th-order central stencils, offsets -3..3
_STENCILS = {
    0: np.array([0, 0, 0, 1, 0, 0, 0], float),
    1: np.array([0, 1, -8, 0, 8, -1, 0], float) / 12.0,
    2: np.array([0, -1, 16, -30, 16, -1, 0], float) / 12.0,
    3: np.array([1, -8, 13, 0, -13, 8, -1], float) / 8.0,
}


def _residual_at(f, coef, t, h):
    vals = np.array([f(t + j * h) for j in range(-3, 4)])
    res = 0.0
    for order, a in enumerate(coef):
        res += a * float(_STENCILS[order] @ vals) / h**order
    return res, vals[3]


def ode_residual(kind: str, p: ModelParams, t_grid, h: float | None = None,
                 tol: float = 1e-6) -> float:
    """Max of ``|L[f](t)| / max(1, |f(t)|)`` over ``t_grid``.

    ``L`` is the linear operator of the governing ODE:

    * ``hyperbolic_mean``: ``E'' + lam E' - c^2 E``
    * ``second_moment``:   ``M''' + 2 lam M'' - (4c^2 - lam^2) M' - 2 c^2 lam M``
    * ``spherical_mean``:  ``E'' + lam E' + c^2 E``

    Derivatives use 4th-order central differences of the closed forms at
    steps ``h`` and ``2h``, combined by one Richardson step.  The default
    ``h`` scales inversely with the fastest rate in the problem and is capped
    so the widest stencil stays in ``t >= 0``.  If the
    extrapolated residual exceeds ``tol`` and also moves by more than ``tol``
    when the steps are doubled, the stencil error dominates and
    :class:`DiscretizationError` is raised.
    """
    f, coef = _ode_parts(kind, p)
    rate = max(1.0, p.lam, _sqrt_d(p.lam, p.c))
    t_grid = np.atleast_1d(np.asarray(t_grid, float))
    if h is None:
        h = min(0.04 / rate, t_grid.min() / 12.0)
    if t_grid.min() - 12 * h < 0:
        raise ValueError("t_grid must stay above 12h so every stencil remains in t >= 0")
    worst = 0.0
    worst_coarse = 0.0
    for t in t_grid:
        r1, v = _residual_at(f, coef, t, h)
        r2, _ = _residual_at(f, coef, t, 2 * h)
        r4, _ = _residual_at(f, coef, t, 4 * h)
        scale = max(1.0, abs(v))
        worst = max(worst, abs(16 * r1 - r2) / 15 / scale)
        worst_coarse = max(worst_coarse, abs(16 * r2 - r4) / 15 / scale)
    if worst > tol and abs(worst_coarse - worst) > tol:
        raise DiscretizationError(
            f"{kind} residual {worst:.3g} dominated by discretisation "
            f"(doubled steps give {worst_coarse:.3g})")
    return worst
