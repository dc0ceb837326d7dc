"""Monte Carlo simulation of the motion.

Only the leg durations matter: the distance after the last event is the
product of ``cosh(c * leg)`` over the legs (``cos(c * leg)`` on the sphere),
whichever way each turn goes.  Positions and turn directions are therefore
not sampled.

Single trajectories (:func:`sample_poisson_times`, :func:`sample_times_given_n`)
are convenient for inspection and tests.  :func:`estimate` works on padded
batches (:class:`TrajectoryBatch`) in fixed-size chunks.  Chunk ``j`` always
draws from the same random stream and the per-chunk moments are merged in
chunk order, so the result does not depend on the number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import closed_form as cf
from . import kernels
from .errors import ConditioningError
from .oracle import MAX_N, conditional_mean_oracle
from .params import ModelParams

__all__ = [
    "SeedSpec",
    "Trajectory",
    "SampleStatistic",
    "Condition",
    "TrajectoryBatch",
    "EstimateReport",
    "KINDS",
    "KIND_ALIASES",
    "sample_poisson_times",
    "sample_times_given_n",
    "sample_batch",
    "cosh_eta",
    "cos_spherical",
    "cosh_eta_jumpback",
    "log_sinh_from_log_cosh",
    "estimate",
    "analytic_value",
    "default_workers",
]

KINDS = ("cosh_eta", "cosh_eta_squared", "cos_spherical", "jumpback", "sinh_bound")
KIND_ALIASES = {
    "cosh": "cosh_eta",
    "cosh2": "cosh_eta_squared",
    "cos": "cos_spherical",
    "spherical": "cos_spherical",
    "sinh": "sinh_bound",
}
_CELLS_PER_CHUNK = 1 << 20  # target rows * columns per batch


@dataclass(frozen=True)
class SeedSpec:
    """Key of an independent random stream: ``(master_seed, stream_id)``."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if self.stream_id < 0:
            raise ValueError("stream_id must be >= 0")

    def generator(self, chunk: int | None = None) -> np.random.Generator:
        """Philox generator keyed by the seed, the stream and (optionally) a chunk index."""
        key = (self.stream_id,) if chunk is None else (self.stream_id, chunk)
        ss = np.random.SeedSequence(self.master_seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Trajectory:
    event_times: tuple
    t: float

    def __post_init__(self):
        prev = 0.0
        for s in self.event_times:
            if not prev < s < self.t:
                raise ValueError("event times must be strictly increasing inside (0, t)")
            prev = s

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    @property
    def legs(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.event_times, [self.t])))


@dataclass(frozen=True)
class SampleStatistic:
    log_cosh_eta: float
    sinh_bound_log: float
    n_events: int

    @property
    def cosh_eta(self) -> float:
        return math.exp(self.log_cosh_eta)


@dataclass(frozen=True)
class Condition:
    """Conditioning on the number of events: none, ``N(t) = n`` or ``N(t) >= n``."""

    mode: str = "none"
    n: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "exactly", "at_least"):
            raise ValueError(f"unknown condition mode {self.mode!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def exactly(cls, n: int):
        return cls("exactly", n)

    @classmethod
    def at_least(cls, k: int):
        return cls("at_least", k)

    def probability(self, mu: float) -> float:
        if self.mode == "none":
            return 1.0
        if self.mode == "exactly":
            return float(stats.poisson.pmf(self.n, mu))
        return cf.poisson_tail(self.n, mu)

    def __str__(self):
        if self.mode == "none":
            return "none"
        return f"N={self.n}" if self.mode == "exactly" else f"N>={self.n}"


# ---------------------------------------------------------------------------
# single trajectories

def sample_poisson_times(p: ModelParams, seed: SeedSpec) -> Trajectory:
    """Event times of a rate-``lam`` Poisson process on ``(0, t)``."""
    rng = seed.generator()
    times = []
    s = rng.exponential(1.0 / p.lam)
    while s < p.t:
        times.append(float(s))
        s += rng.exponential(1.0 / p.lam)
    return Trajectory(tuple(times), p.t)


def sample_times_given_n(p: ModelParams, n: int, seed: SeedSpec) -> Trajectory:
    """``n`` event times distributed as the order statistics of ``n`` uniforms on ``(0, t)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 0 and p.t == 0.0:
        raise ConditioningError("no events can occur when t = 0")
    rng = seed.generator()
    u = np.sort(rng.uniform(0.0, p.t, size=n))
    return Trajectory(tuple(float(x) for x in u), p.t)


def _single(traj):
    legs = traj.legs[None, :]
    return legs, np.array([legs.shape[1]], dtype=np.int64)


def cosh_eta(traj: Trajectory, c: float) -> SampleStatistic:
    legs, counts = _single(traj)
    return SampleStatistic(float(kernels.row_log_cosh_sum(legs, counts, c)[0]),
                           float(kernels.row_log_sinh_sum(legs, counts, c)[0]),
                           traj.n_events)


def cos_spherical(traj: Trajectory, c: float) -> float:
    legs, counts = _single(traj)
    return float(kernels.row_cos_product(legs, counts, c)[0])


def cosh_eta_jumpback(traj: Trajectory, c: float, k: int) -> SampleStatistic:
    """The statistic of the motion restarted from the origin at the ``k``-th event."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > traj.n_events:
        raise ValueError(f"jump-back at event {k} needs at least {k} events, got {traj.n_events}")
    legs, counts = _single(traj)
    return SampleStatistic(float(kernels.row_log_cosh_sum(legs, counts, c, k)[0]),
                           float(kernels.row_log_sinh_sum(legs, counts, c, k)[0]),
                           traj.n_events - k)


def log_sinh_from_log_cosh(log_cosh):
    """``log sinh eta`` from ``log cosh eta`` (``-inf`` at ``eta = 0``)."""
    lc = np.asarray(log_cosh, dtype=float)
    with np.errstate(divide="ignore"):
        return lc + 0.5 * np.log(-np.expm1(-2.0 * lc))


# ---------------------------------------------------------------------------
# batches

@dataclass(frozen=True)
class TrajectoryBatch:
    """``legs[i, :counts[i]]`` are the leg durations of trajectory ``i``; the rest is padding."""

    legs: np.ndarray
    counts: np.ndarray
    t: float

    def __len__(self):
        return self.legs.shape[0]

    @property
    def n_events(self) -> np.ndarray:
        return self.counts - 1

    def log_cosh_eta(self, c: float, start: int = 0) -> np.ndarray:
        return kernels.row_log_cosh_sum(self.legs, self.counts, c, start)

    def log_sinh_bound(self, c: float, start: int = 0) -> np.ndarray:
        return kernels.row_log_sinh_sum(self.legs, self.counts, c, start)

    def cos_spherical(self, c: float) -> np.ndarray:
        return kernels.row_cos_product(self.legs, self.counts, c)

    def trajectory(self, i: int) -> Trajectory:
        times = np.cumsum(self.legs[i, : self.counts[i] - 1])
        return Trajectory(tuple(float(x) for x in times), self.t)


def _spacings(rng, lengths, counts, width):
    """Rows of ``counts[i]`` uniform spacings of ``[0, lengths[i]]``, zero-padded to ``width``."""
    e = rng.standard_exponential((counts.size, width))
    e[np.arange(width)[None, :] >= counts[:, None]] = 0.0
    return e * (lengths / e.sum(axis=1))[:, None]


def sample_batch(p: ModelParams, size: int, rng: np.random.Generator,
                 condition: Condition = Condition()) -> TrajectoryBatch:
    """``size`` independent trajectories drawn under ``condition``.

    Given ``m`` events the legs are uniform spacings (normalised exponentials)
    of the interval.  Under ``N(t) >= k`` the ``k``-th event time is drawn from
    its truncated Erlang law by exact inversion of the regularised incomplete
    gamma function.  The first ``k`` legs are spacings of ``(0, T_k)``, and an
    unconditioned Poisson process runs on ``(T_k, t)``.
    """
    mu = p.mu
    if condition.probability(mu) <= 0.0:
        raise ConditioningError(f"Pr{{{condition}}} is zero at lam*t={mu}")
    t = p.t
    full = np.full(size, t)
    if condition.mode == "exactly":
        counts = np.full(size, condition.n + 1, dtype=np.int64)
        return TrajectoryBatch(_spacings(rng, full, counts, condition.n + 1), counts, t)
    if condition.mode == "none" or condition.n == 0:
        counts = rng.poisson(mu, size).astype(np.int64) + 1
        width = int(counts.max())
        return TrajectoryBatch(_spacings(rng, full, counts, width), counts, t)
    k = condition.n
    u = rng.uniform(size=size)
    tk = special.gammaincinv(k, u * special.gammainc(k, mu)) / p.lam
    tk = np.minimum(tk, t)
    rest = t - tk
    tail = rng.poisson(p.lam * rest).astype(np.int64) + 1
    head = _spacings(rng, tk, np.full(size, k, dtype=np.int64), k)
    width = int(tail.max())
    tail_legs = _spacings(rng, rest, tail, width)
    return TrajectoryBatch(np.hstack([head, tail_legs]), tail + k, t)


# ---------------------------------------------------------------------------
# estimation

def _canonical_kind(kind):
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    return kind


def _values(kind, batch, c, k):
    if kind == "cosh_eta":
        return np.exp(batch.log_cosh_eta(c))
    if kind == "cosh_eta_squared":
        return np.exp(2.0 * batch.log_cosh_eta(c))
    if kind == "cos_spherical":
        return batch.cos_spherical(c)
    if kind == "jumpback":
        return np.exp(batch.log_cosh_eta(c, k))
    return np.exp(batch.log_sinh_bound(c))


def _conditional(kind, p, n):
    """Analytic ``E{X | N(t) = n}`` or ``None``."""
    c, t = p.c, p.t
    if kind == "cosh_eta":
        return cf.conditional_mean_cosh(n, c, t)
    if kind == "sinh_bound":
        if n == 0:
            return math.sinh(c * t)
        return cf.radius_bound_series(n, c, t) * math.exp(math.lgamma(n + 1) - n * math.log(t))
    if n > MAX_N:
        return None
    kernel = {"cosh_eta_squared": "cosh2", "cos_spherical": "cos"}.get(kind)
    return None if kernel is None else conditional_mean_oracle(kernel, n, c, t)


def _unconditional(kind, p):
    return {
        "cosh_eta": cf.mean_cosh,
        "cosh_eta_squared": cf.second_moment,
        "cos_spherical": cf.spherical_mean,
        "sinh_bound": cf.radius_bound_mean,
    }[kind](p)


def analytic_value(kind: str, p: ModelParams, condition: Condition = Condition(), k: int = 1):
    """Closed-form (or quadrature-oracle) value matching :func:`estimate`, ``None`` if unavailable.

    Under ``N(t) >= m`` the head ``sum_{n<m} Pr{N=n} E{X | N=n}`` is removed
    from the unconditioned mean.
    """
    kind = _canonical_kind(kind)
    if kind == "jumpback":
        if condition.mode == "at_least" and condition.n == k:
            return cf.jumpback_mean(p, k)
        return None
    if condition.mode == "none":
        return _unconditional(kind, p)
    if condition.mode == "exactly":
        return _conditional(kind, p, condition.n)
    m = condition.n
    if m == 0:
        return _unconditional(kind, p)
    head = [_conditional(kind, p, n) for n in range(m)]
    if any(h is None for h in head):
        return None
    mu = p.mu
    pmf = stats.poisson.pmf(np.arange(m), mu)
    return (_unconditional(kind, p) - math.fsum(pmf * head)) / cf.poisson_tail(m, mu)


@dataclass(frozen=True)
class EstimateReport:
    kind: str
    condition: Condition
    params: ModelParams
    mean: float
    stderr: float
    replications: int
    analytic: float | None = None
    seed: SeedSpec | None = field(default=None, compare=False)

    @property
    def zscore(self) -> float | None:
        if self.analytic is None:
            return None
        diff = self.mean - self.analytic
        if self.stderr == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.stderr


def default_workers() -> int:
    raw = os.environ.get("GEODESIC_COMPASS_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError:
        raise ValueError(f"GEODESIC_COMPASS_WORKERS must be an integer, got {raw!r}") from None
    if w < 1:
        raise ValueError("GEODESIC_COMPASS_WORKERS must be >= 1")
    return w


def _chunk_rows(p, condition):
    # expected leg count, padded by a generous Poisson margin
    mu = p.mu
    width = max(mu, condition.n) + 6.0 * math.sqrt(mu) + 8.0
    return int(min(16384, max(256, _CELLS_PER_CHUNK // width)))


def estimate(kind: str, p: ModelParams, condition: Condition | None = None, replications: int = 100_000,
             seed: SeedSpec | int = 0, workers: int | None = None, k: int = 1) -> EstimateReport:
    """Sample mean and standard error of a distance functional, with its analytic value.

    ``kind`` is one of :data:`KINDS` (or an alias from :data:`KIND_ALIASES`).
    ``jumpback`` restarts the motion at event ``k`` and defaults to the
    condition ``N(t) >= k``.
    """
    kind = _canonical_kind(kind)
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    if condition is None:
        condition = Condition.at_least(k) if kind == "jumpback" else Condition.none()
    if kind == "jumpback":
        if k < 1:
            raise ValueError("k must be >= 1")
        if condition.mode == "none" or condition.n < k:
            raise ValueError(f"jump-back at event {k} requires conditioning on at least {k} events")
    if condition.probability(p.mu) <= 0.0:
        raise ConditioningError(f"Pr{{{condition}}} is zero at lam*t={p.mu}")
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")

    rows = _chunk_rows(p, condition)
    n_chunks = -(-replications // rows)

    def run(j):
        size = min(rows, replications - j * rows)
        batch = sample_batch(p, size, seed.generator(j), condition)
        x = _values(kind, batch, p.c, k)
        m = float(x.mean())
        return size, m, float(((x - m) ** 2).sum())

    if workers == 1 or n_chunks == 1:
        parts = [run(j) for j in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, range(n_chunks)))

    # Chan et al. pairwise update, in chunk order
    n_tot, mean, m2 = 0, 0.0, 0.0
    for n_j, mean_j, m2_j in parts:
        n_new = n_tot + n_j
        delta = mean_j - mean
        mean += delta * n_j / n_new
        m2 += m2_j + delta * delta * n_tot * n_j / n_new
        n_tot = n_new
    stderr = math.sqrt(m2 / (n_tot - 1) / n_tot) if n_tot > 1 else math.nan
    return EstimateReport(kind, condition, p, mean, stderr, n_tot,
                          analytic_value(kind, p, condition, k), seed)
