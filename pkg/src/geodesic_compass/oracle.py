"""Brute-force quadrature of the ordered integrals behind the closed forms.

Every conditional moment of the motion given ``N(t) = n`` is ``n!/t^n`` times
an integral over the ordered simplex ``0 < t_1 < ... < t_n < t`` of a product
of one kernel per leg,

    F_n(t) = int ... int  prod_{k=1}^{n+1} K(c (t_k - t_{k-1})),   t_0 = 0, t_{n+1} = t.

Such an integral is an ``n``-fold convolution, ``F_n = F_{n-1} * K``.  Here it
is evaluated literally: one composite Gauss-Legendre rule per axis, nested
``n`` deep, with nothing borrowed from the closed-form module.  That makes the
results usable as ground truth for it.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DiscretizationError, QuadratureError
from .params import ModelParams

__all__ = [
    "KERNELS",
    "MAX_N",
    "NestedIntegralSpec",
    "QuadratureResult",
    "kernel_function",
    "nested_integral",
    "nested_values",
    "conditional_mean_oracle",
    "poisson_mixture_oracle",
    "difference_differential_residual",
    "RECURSIONS",
]

KERNELS = ("cosh", "sinh", "cosh2", "sinh2", "cos")
MAX_N = 4
GL_ORDER = 4            # Gauss-Legendre nodes per panel
_CHUNK = 1 << 21        # max kernel evaluations held in memory at once

_POWER = re.compile(r"^cosh\^(\d+)$")


def kernel_function(kernel: str):
    """Vectorised ``x -> K(x)`` for a kernel name (``cosh^m`` for integer ``m >= 1``)."""
    if kernel == "cosh":
        return np.cosh
    if kernel == "sinh":
        return np.sinh
    if kernel == "cosh2":
        return lambda x: np.cosh(x) ** 2
    if kernel == "sinh2":
        return lambda x: np.sinh(x) ** 2
    if kernel == "cos":
        return np.cos
    m = _POWER.match(kernel)
    if m and int(m.group(1)) >= 1:
        e = int(m.group(1))
        return lambda x: np.cosh(x) ** e
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS} or 'cosh^m'")


@dataclass(frozen=True)
class NestedIntegralSpec:
    kernel: str
    n: int
    c: float
    t: float
    panels: int = 16

    def __post_init__(self):
        kernel_function(self.kernel)
        if not 0 <= self.n <= MAX_N:
            raise ValueError(f"n must be in [0, {MAX_N}], got {self.n}")
        if self.panels < 8:
            raise ValueError(f"panels must be >= 8, got {self.panels}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be finite and >= 0, got {self.c!r}")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError(f"t must be finite and >= 0, got {self.t!r}")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float            # |I(panels) - I(panels/2)|, floored at rounding level
    panels: int

    def __float__(self):
        return self.value


def _rule(panels):
    # composite Gauss-Legendre on [0, 1]
    x, w = np.polynomial.legendre.leggauss(GL_ORDER)
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, width = edges[:-1, None], np.diff(edges)[:, None]
    nodes = (lo + 0.5 * width * (x + 1.0)).ravel()
    weights = (0.5 * width * w).ravel()
    return nodes, weights


def _convolve(j, s, kfun, c, nodes, weights, reverse):
    """``F_j`` at every entry of the 1-d array ``s``."""
    if j == 0:
        return kfun(c * s)
    m = nodes.size
    per_point = m ** j
    step = max(1, _CHUNK // per_point)
    out = np.empty_like(s)
    for lo in range(0, s.size, step):
        sc = s[lo:lo + step]
        # F_j(s) = s * sum_i w_i F_{j-1}(s x_i) K(c s (1 - x_i)); reverse swaps the roles
        inner = sc[:, None] * (nodes[None, :] if not reverse else 1.0 - nodes[None, :])
        outer = sc[:, None] - inner
        prev = _convolve(j - 1, inner.ravel(), kfun, c, nodes, weights, reverse).reshape(inner.shape)
        out[lo:lo + step] = sc * ((prev * kfun(c * outer)) @ weights)
    return out


def nested_values(kernel: str, n: int, c: float, s, panels: int = 16, reverse: bool = False):
    """``F_n`` at each point of ``s`` (array), with ``panels`` composite panels per axis.

    ``reverse=True`` makes the first event time the outermost integration
    variable instead of the last one.  The value is the same by exchangeability
    of the legs, so comparing both orders checks the quadrature.
    """
    if not 0 <= n <= MAX_N:
        raise ValueError(f"n must be in [0, {MAX_N}], got {n}")
    s = np.atleast_1d(np.asarray(s, dtype=float)).ravel()
    nodes, weights = _rule(panels)
    return _convolve(n, s, kernel_function(kernel), float(c), nodes, weights, reverse)


def nested_integral(spec: NestedIntegralSpec, rtol: float = 1e-6, reverse: bool = False) -> QuadratureResult:
    """The ordered ``n``-fold integral with an error estimate.

    The estimate is the change against half the panels; Gauss-Legendre
    converges spectrally here, so the true error at ``panels`` is far below
    it.  :class:`QuadratureError` is raised when it exceeds ``rtol`` relative.
    """
    args = (spec.kernel, spec.n, spec.c, [spec.t])
    fine = float(nested_values(*args, panels=spec.panels, reverse=reverse)[0])
    coarse = float(nested_values(*args, panels=spec.panels // 2, reverse=reverse)[0])
    scale = max(abs(fine), 1e-300)
    err = max(abs(fine - coarse), 64 * (spec.n + 1) * np.finfo(float).eps * scale)
    if err > rtol * scale:
        raise QuadratureError(
            f"{spec.kernel} n={spec.n}: panel halving moves the value by {err:.3g} "
            f"(relative {err / scale:.3g} > {rtol:g})")
    return QuadratureResult(fine, err, spec.panels)


def conditional_mean_oracle(kernel: str, n: int, c: float, t: float, panels: int = 16) -> float:
    """``E{prod K(c leg) | N(t) = n} = n!/t^n F_n(t)``."""
    if t <= 0:
        if n == 0:
            return float(kernel_function(kernel)(np.float64(0.0)))
        raise ValueError("t must be > 0 when n >= 1")
    res = nested_integral(NestedIntegralSpec(kernel, n, c, t, panels))
    return math.exp(math.lgamma(n + 1) - n * math.log(t)) * res.value


def poisson_mixture_oracle(kernel: str, p: ModelParams, n_max: int = MAX_N, panels: int = 16):
    """``sum_{n <= n_max} Pr{N(t)=n} E{prod K | N(t)=n}`` and the omitted mass ``Pr{N(t) > n_max}``."""
    if not 0 <= n_max <= MAX_N:
        raise ValueError(f"n_max must be in [0, {MAX_N}]")
    mu = p.mu
    terms = [stats.poisson.pmf(n, mu) * conditional_mean_oracle(kernel, n, p.c, p.t, panels)
             for n in range(n_max + 1)]
    return math.fsum(terms), float(stats.poisson.sf(n_max, mu))


# ---------------------------------------------------------------------------
# difference-differential equations

# kind -> (kernel, order, residual(c, d_n, d_prev)) where d_x[k] is the k-th derivative
RECURSIONS = {
    # I_n'' = I_{n-1}' + c^2 I_n
    "I": ("cosh", 2, lambda c, f, g: f[2] - g[1] - c * c * f[0]),
    # J_n'' = c J_{n-1} + c^2 J_n
    "J": ("sinh", 2, lambda c, f, g: f[2] - c * g[0] - c * c * f[0]),
    # H_n'' = H_{n-1}' - c^2 H_n
    "H": ("cos", 2, lambda c, f, g: f[2] - g[1] + c * c * f[0]),
    # U_n''' = U_{n-1}'' + 4c^2 U_n' - 2c^2 U_{n-1}
    "U": ("cosh2", 3, lambda c, f, g: f[3] - g[2] - 4 * c * c * f[1] + 2 * c * c * g[0]),
    # V_n''' = 4c^2 V_n' + 2c^2 V_{n-1}
    "V": ("sinh2", 3, lambda c, f, g: f[3] - 4 * c * c * f[1] - 2 * c * c * g[0]),
}

# offsets -3..3; 4th order for orders 0-2, 2nd order for the third derivative
_STENCIL = {
    0: np.array([0, 0, 0, 1, 0, 0, 0], float),
    1: np.array([0, 1, -8, 0, 8, -1, 0], float) / 12.0,
    2: np.array([0, -1, 16, -30, 16, -1, 0], float) / 12.0,
    3: np.array([0, -1, 2, 0, -2, 1, 0], float) / 2.0,
}
_OFFSETS = np.arange(-3, 4)


def _residuals(kind, n, c, t_grid, h, panels, signed=False):
    kernel, order, resid = RECURSIONS[kind]
    pts = (t_grid[:, None] + h * _OFFSETS[None, :]).ravel()
    vals = nested_values(kernel, n, c, pts, panels).reshape(-1, 7)
    prev = nested_values(kernel, n - 1, c, pts, panels).reshape(-1, 7)

    def derivs(v):
        return [v @ _STENCIL[k] / h**k for k in range(order + 1)]

    f, g = derivs(vals), derivs(prev)
    r = resid(c, f, g) / np.maximum(1.0, np.abs(vals[:, 3]))
    return r if signed else np.abs(r)


def _extrapolated(kind, n, c, t_grid, h, panels):
    if RECURSIONS[kind][1] < 3:
        return _residuals(kind, n, c, t_grid, h, panels)
    # the third-derivative stencil is 2nd order; one Richardson step lifts it to 4th
    # (signed residuals are needed for that, so recompute without the abs)
    r1 = _residuals(kind, n, c, t_grid, h, panels, signed=True)
    r2 = _residuals(kind, n, c, t_grid, 2 * h, panels, signed=True)
    return np.abs(4.0 * r1 - r2) / 3.0


def difference_differential_residual(kind: str, n: int, c: float, t_grid, h: float = 1e-2,
                                     panels: int = 64, tol: float = 1e-4) -> float:
    """Largest normalised residual of the named recursion on quadrature values.

    ``kind`` is one of ``I, J, H`` (second order) or ``U, V`` (third order).
    Third derivatives use a 2nd-order stencil at ``h`` and ``2h`` combined by
    one Richardson step.  The whole evaluation is repeated with the steps
    doubled.  If the result exceeds ``tol`` and changes by more than ``tol``
    between the two, the finite differences rather than the recursion are at
    fault and :class:`DiscretizationError` is raised.
    """
    if kind not in RECURSIONS:
        raise ValueError(f"unknown recursion {kind!r}; expected one of {sorted(RECURSIONS)}")
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    t_grid = np.atleast_1d(np.asarray(t_grid, float))
    if t_grid.min() - 12 * h <= 0:
        raise ValueError("t_grid must stay above 12h")
    fine = float(_extrapolated(kind, n, c, t_grid, h, panels).max())
    coarse = float(_extrapolated(kind, n, c, t_grid, 2 * h, panels).max())
    if fine > tol and abs(coarse - fine) > tol:
        raise DiscretizationError(
            f"{kind}_{n} residual {fine:.3g} dominated by the stencil (doubled steps give {coarse:.3g})")
    return fine
