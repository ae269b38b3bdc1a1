"""Monte Carlo certificates for the distance to stationarity of the walk on G_n(q).

The upper bound chains d_i(T) <= d_{i-1}(T) + P(span fails at level i) from an
exactly computed base level n0 up to n, replacing each failure probability by
an exact binomial upper confidence limit. The lower bound compares the number
of zeros in the last column with its stationary Binomial(n-1, 1/q) law.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import beta, binom

from . import exact
from .gfq import RankBasis, check_modulus, inv_mod
from .pool import thread_map
from .rng import check_seed, stream
from .walk import BackwardPath

SPAN_CHUNK = 10_000


@dataclass
class ConfidenceInterval:
    point: float
    lower: float
    upper: float
    level: float
    samples: int
    successes: int | None = None

    @property
    def halfwidth(self):
        return 0.5 * (self.upper - self.lower)


def clopper_pearson(k, N, level=0.99, side="two"):
    """Exact binomial interval for k successes in N trials.

    ``side`` is "two", "upper" (lower fixed at 0) or "lower" (upper fixed at 1).
    """
    if N < 1:
        raise ValueError("need at least one sample")
    alpha = 1 - level
    tail = alpha / 2 if side == "two" else alpha
    lo = 0.0 if k == 0 or side == "upper" else float(beta.ppf(tail, k, N - k + 1))
    hi = 1.0 if k == N or side == "lower" else float(beta.ppf(1 - tail, k + 1, N - k))
    return ConfidenceInterval(k / N, lo, hi, level, N, int(k))


@dataclass
class SpanRecord:
    n: int
    q: int
    T: float
    spanned: bool
    first_span_time: float | None
    rank_path: list


def span_vectors(split):
    """Y_{T-s_k} e_{n-1} restricted to coordinates 1..n-1, for k = 1..J(T)."""
    n = split.n
    return [Y.entries[: n - 1, n - 2].copy() for Y in BackwardPath(split).at_last_events()]


def span_event_check(split):
    """Do the vectors Y_{T-s_k} e_{n-1} span Z_q^{n-1}? Inserted in order of s_k."""
    n, q = split.n, split.q
    basis = RankBasis(q, n - 1)
    path, first = [], None
    for s, v in zip(split.last_times, span_vectors(split)):
        basis.insert(v)
        path.append((float(s), basis.rank))
        if basis.rank == n - 1:
            first = float(s)
            break
    return SpanRecord(n, q, split.T, first is not None, first, path)


def _insert_bits(basis, rank, idx, v, d):
    """Insert bit-packed vectors v (one per sample idx) into GF(2) bases with lowest-bit pivots."""
    one = np.uint64(1)
    while idx.size:
        nz = v != 0
        idx, v = idx[nz], v[nz]
        low = v & (~v + one)
        b = np.log2(low.astype(np.float64)).astype(np.int64)
        cur = basis[idx, b]
        place = cur == 0
        basis[idx[place], b[place]] = v[place]
        rank[idx[place]] += 1
        keep = ~place
        idx, v = idx[keep], v[keep] ^ cur[keep]


def _insert_mod(basis, rank, idx, v, d, q, inv):
    """Same for Z_q, q odd: basis[s, b] is the row with pivot b (normalized to 1)."""
    alive = v.any(axis=1)
    for b in range(d):
        if not alive.any():
            break
        c = v[:, b]
        has = (c != 0) & alive
        if not has.any():
            continue
        cur = basis[idx, b]
        place = has & (cur[:, b] == 0)
        if place.any():
            basis[idx[place], b] = v[place] * inv[c[place]][:, None] % q
            rank[idx[place]] += 1
            alive &= ~place
        red = has & ~place
        v[red] = (v[red] - c[red, None] * cur[red]) % q


def _span_times_chunk(n, q, S, horizon, rng):
    d = n - 1
    out = np.full(S, np.inf)
    tau = np.zeros(S)
    rank = np.zeros(S, dtype=np.int64)
    live = np.arange(S)
    packed = q == 2
    if packed:
        cols = np.tile(np.left_shift(np.uint64(1), np.arange(d, dtype=np.uint64)), (S, 1))
        basis = np.zeros((S, d), dtype=np.uint64)
    else:
        cols = np.tile(np.eye(d, dtype=np.int32), (S, 1, 1))  # cols[s, column, row]
        basis = np.zeros((S, d, d), dtype=np.int32)
        inv = np.array([0] + [inv_mod(x, q) for x in range(1, q)], dtype=np.int32)
    while live.size:
        nxt = tau[live] + rng.exponential(1.0 / d, size=live.size)
        keep = nxt <= horizon
        live = live[keep]
        if not live.size:
            break
        tau[live] = nxt[keep]
        clock = rng.integers(1, n, size=live.size)
        a = rng.integers(0, q, size=live.size)
        f = (clock <= n - 2) & (a != 0)
        if f.any():
            s, i = live[f], clock[f]
            if packed:
                cols[s, i] ^= cols[s, i - 1]
            else:
                cols[s, i] = (cols[s, i] + a[f, None].astype(np.int32) * cols[s, i - 1]) % q
        last = clock == n - 1
        if last.any():
            s = live[last]
            v = cols[s, d - 1].copy()
            if packed:
                _insert_bits(basis, rank, s, v, d)
            else:
                _insert_mod(basis, rank, s, v, d, q, inv)
            done = rank[s] == d
            if done.any():
                out[s[done]] = tau[s[done]]
                live = np.setdiff1d(live, s[done], assume_unique=True)
    return out


def span_times(n, q, samples, seed, horizon, chunk=SPAN_CHUNK):
    """Backward time at which each sample's span event first holds (inf if not by ``horizon``).

    Events are generated backwards from the terminal time, so P(A(T, n)^c) is
    estimated by the fraction of samples with span time > T for every T <= horizon.
    """
    check_modulus(q)
    if n < 2:
        raise ValueError("span levels start at n = 2")
    check_seed(seed)
    parts = []
    for c, start in enumerate(range(0, samples, chunk)):
        size = min(chunk, samples - start)
        parts.append(_span_times_chunk(n, q, size, float(horizon), stream(seed, 20, n, c)))
    return np.concatenate(parts) if parts else np.empty(0)


def estimate_span_failure(n, q, T, samples, confidence=0.99, seed=0):
    """Two-sided exact binomial interval on P(A(T, n)^c)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    fails = int(np.count_nonzero(span_times(n, q, samples, seed, T) > T))
    return clopper_pearson(fails, samples, confidence)


@lru_cache(maxsize=32)
def _group_chain(n, q):
    space = exact.enumerate_space("group", n, q=q)
    rm = exact.build_generator(space)
    return rm, exact.stationary(space), exact._uniformization(rm)


def exact_group_tv(n, q, T):
    """Exact d_n(T) from the identity; G_1 is trivial."""
    if n == 1:
        return 0.0
    rm, pi, cache = _group_chain(n, q)
    mu = exact.propagate(rm, exact.point_mass(rm.size), T, _cache=cache)
    return float(exact.tv_distance(mu, pi))


def base_level_limit(q, max_states=1024):
    """Largest m with |G_m(q)| <= max_states."""
    m = 1
    while q ** ((m + 1) * m // 2) <= max_states:
        m += 1
    return m


@dataclass
class LevelEstimate:
    i: int
    samples: int
    failures: int
    ci_upper: float


@dataclass
class CertificateReport:
    n: int
    q: int
    T: float
    base_n0: int
    base_tv: float
    levels: list = field(default_factory=list)
    bound: float = 0.0
    delta: float = 0.01

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["levels"] = [LevelEstimate(**lv) for lv in data["levels"]]
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class Certifier:
    """Certified upper bounds on d_n(T) for any T up to ``horizon``.

    Span times are simulated once per level and reused for every T, so the
    bound is exactly nonincreasing in T for a fixed seed.
    """

    def __init__(self, n, q, n0=2, samples=10_000, delta=0.01, seed=0, horizon=100.0,
                 cache=None):
        check_modulus(q)
        if not 1 <= n0 <= n:
            raise ValueError(f"need 1 <= n0 <= n, got n0={n0}, n={n}")
        if n0 > base_level_limit(q, exact.DEFAULT_CAP):
            raise exact.CapExceeded(f"base level G_{n0}({q}) too large for exact analysis")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.n, self.q, self.n0 = n, q, n0
        self.samples, self.delta, self.seed = samples, delta, check_seed(seed)
        self.horizon = float(horizon)
        # cache: optional dict shared between certifiers with matching settings
        cache = {} if cache is None else cache
        levels = list(range(n0 + 1, n + 1))
        keys = [(i, q, samples, self.seed, self.horizon) for i in levels]
        todo = [k for k in keys if k not in cache]
        times = thread_map(lambda k: span_times(k[0], q, samples, seed, self.horizon), todo)
        cache.update(zip(todo, times))
        self._times = {i: cache[k] for i, k in zip(levels, keys)}

    def level_confidence(self):
        k = self.n - self.n0
        return 1 - self.delta / k if k else 1.0

    def report(self, T):
        if T > self.horizon:
            raise ValueError(f"T={T} beyond simulated horizon {self.horizon}")
        levels = []
        for i, t in self._times.items():
            fails = int(np.count_nonzero(t > T))
            ci = clopper_pearson(fails, self.samples, self.level_confidence(), side="upper")
            levels.append(LevelEstimate(i, self.samples, fails, ci.upper))
        base = exact_group_tv(self.n0, self.q, T)
        bound = base + sum(lv.ci_upper for lv in levels)
        return CertificateReport(self.n, self.q, float(T), self.n0, base, levels, bound, self.delta)


def certified_tv_upper(n, q, T, n0=2, samples=10_000, delta=0.01, seed=0):
    return Certifier(n, q, n0, samples, delta, seed, horizon=T).report(T)


# lower bound from the last column

def last_column_zeros(n, q, T, samples, seed):
    """Zeros among entries 1..n-1 of the last column of X_T, started at the identity."""
    check_modulus(q)
    rng = stream(check_seed(seed), 30, n)
    K = rng.poisson((n - 1) * T, size=samples)
    if q == 2 and n <= 63:
        col = np.full(samples, np.uint64(1) << np.uint64(n - 1))
        for j in range(int(K.max(initial=0))):
            s = np.flatnonzero(K > j)
            i = rng.integers(1, n, size=s.size).astype(np.uint64)
            a = rng.integers(0, 2, size=s.size).astype(np.uint64)
            col[s] ^= ((col[s] >> i) & a) << (i - np.uint64(1))
        ones = np.bitwise_count(col).astype(np.int64) - 1
        return (n - 1) - ones
    col = np.zeros((samples, n), dtype=np.int64)
    col[:, n - 1] = 1
    for j in range(int(K.max(initial=0))):
        s = np.flatnonzero(K > j)
        i = rng.integers(1, n, size=s.size)
        a = rng.integers(0, q, size=s.size)
        col[s, i - 1] = (col[s, i - 1] + a * col[s, i]) % q
    return np.count_nonzero(col[:, : n - 1] == 0, axis=1)


@dataclass
class StatisticBound(ConfidenceInterval):
    threshold: int = 0


def lower_bound_from_stats(stats, n, q, confidence=0.99):
    """TV lower bound from zero counts via the events {stat >= r}, r = 0..n-1.

    Bonferroni over the n thresholds; ``lower`` is the certified bound.
    """
    stats = np.asarray(stats)
    N = len(stats)
    level = 1 - (1 - confidence) / n
    best = None
    for r in range(n):
        k = int(np.count_nonzero(stats >= r))
        target = float(binom.sf(r - 1, n - 1, 1 / q))
        ci = clopper_pearson(k, N, level)
        lo = max(0.0, ci.lower - target, target - ci.upper)
        hi = min(1.0, max(ci.upper - target, target - ci.lower))
        cand = (lo, abs(k / N - target), hi, r)
        if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] > best[1]):
            best = cand
    lo, point, hi, r = best
    return StatisticBound(point, lo, max(hi, point), confidence, N, None, r)


def tv_lower_statistic(n, q, T, samples, seed=0, confidence=0.99):
    return lower_bound_from_stats(last_column_zeros(n, q, T, samples, seed), n, q, confidence)


# occupation times

def occupation_fraction(traj, predicate):
    """(1/T) * time the trajectory spends where ``predicate(state)`` holds."""
    T = traj.T
    if not T > 0:
        raise ValueError("empty horizon")
    total = 0.0
    for t0, t1, state in traj.segments():
        if t1 > t0 and predicate(state):
            total += t1 - t0
    return total / T


def simulate_occupation(rm, in_set, starts, t, rng):
    """Time spent in ``in_set`` over [0, t] by the chain with generator ``rm``, one run per start."""
    lam = rm.max_exit_rate()
    P = np.eye(rm.size) + rm.dense() / lam
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    state = np.asarray(starts, dtype=np.int64).copy()
    clock = np.zeros(len(state))
    occ = np.zeros(len(state))
    live = np.arange(len(state))
    while live.size:
        hold = rng.exponential(1.0 / lam, size=live.size)
        end = np.minimum(clock[live] + hold, t)
        occ[live] += (end - clock[live]) * in_set[state[live]]
        clock[live] = end
        go = end < t
        live = live[go]
        u = rng.random(live.size)
        state[live] = (cum[state[live]] < u[:, None]).sum(axis=1)
    return occ


@dataclass
class LezaudReport:
    t: float
    epsilon: float
    nu_A: float
    nu_min: float
    gap: float
    bound: float
    empirical: float
    ci_lower: float
    samples: int
    passed: bool


def lezaud_tail_check(space, subset, t, epsilon, samples=10_000, seed=0, confidence=0.99):
    """Compare P(|occupation of A - t nu(A)| > eps t), started stationary, with
    (2 / sqrt(nu_min)) exp(-t eps^2 gap / 12)."""
    rm = exact.build_generator(space)
    nu = exact.stationary(space)
    in_set = np.asarray(subset, dtype=bool) if not callable(subset) else \
        np.array([bool(subset(s)) for s in space.states])
    if in_set.shape != (space.size,):
        raise ValueError("subset must mark every state")
    nu_A = float(nu[in_set].sum())
    nu_min = float(nu[nu > 0].min())
    gap = exact.spectral_gap(rm, nu).gap
    bound = 2 / math.sqrt(nu_min) * math.exp(-t * epsilon**2 * gap / 12)
    rng = stream(check_seed(seed), 40)
    starts = rng.choice(space.size, size=samples, p=nu)
    occ = simulate_occupation(rm, in_set.astype(float), starts, t, rng)
    k = int(np.count_nonzero(np.abs(occ - t * nu_A) > epsilon * t))
    ci = clopper_pearson(k, samples, confidence, side="lower")
    return LezaudReport(t, epsilon, nu_A, nu_min, gap, bound, k / samples, ci.lower, samples,
                        ci.lower <= bound)
