"""Trajectories of the continuous-time walk on G_n(q) and its lazy discrete version.

Clock ``i`` (1 <= i <= n-1) rings at rate 1; a ring draws ``a`` uniform in Z_q
(zero included) and adds ``a`` times row ``i+1`` to row ``i``. Splitting the
clocks into ``i <= n-2`` and ``i = n-1`` gives the backward column process
``Y`` and the decomposition

    X_T = Y_T + sum_k a_k Y_{T - s_k} E_{n-1,n}

where ``s_k`` are the ring times of clock ``n-1``.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .gfq import (
    FieldVector,
    UnitriMatrix,
    check_modulus,
    elementary,
    encode_digits,
    inv_mod,
)
from .rng import check_seed, stream


def _check_params(n, q, T):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    check_modulus(q)
    if not T >= 0:
        raise ValueError(f"horizon must be nonnegative, got {T}")


@dataclass
class EventLog:
    """Time-sorted clock rings on [0, T].

    ``clocks`` are 1-based; equal times (probability zero) keep list order.
    """

    n: int
    q: int
    T: float
    times: np.ndarray
    clocks: np.ndarray
    scalars: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        _check_params(self.n, self.q, self.T)
        self.times = np.asarray(self.times, dtype=float)
        self.clocks = np.asarray(self.clocks, dtype=np.int64)
        self.scalars = np.asarray(self.scalars, dtype=np.int64)
        k = len(self.times)
        if len(self.clocks) != k or len(self.scalars) != k:
            raise ValueError("times, clocks and scalars must have equal length")
        if k:
            if np.any(np.diff(self.times) < 0):
                raise ValueError("event times must be sorted")
            if self.times[0] <= 0 or self.times[-1] > self.T:
                raise ValueError("event times must lie in (0, T]")
            if self.clocks.min() < 1 or self.clocks.max() > self.n - 1:
                raise ValueError("clock index out of range")
            if self.scalars.min() < 0 or self.scalars.max() >= self.q:
                raise ValueError("scalar out of range")

    def __len__(self):
        return len(self.times)

    def N(self, t):
        """Number of rings of clocks 1..n-2 in [0, t]."""
        f = self.clocks <= self.n - 2
        return int(np.count_nonzero(f & (self.times <= t)))

    def J(self, t):
        """Number of rings of clock n-1 in [0, t]."""
        last = self.clocks == self.n - 1
        return int(np.count_nonzero(last & (self.times <= t)))

    def split(self):
        return SplitLog(self)

    def until(self, t):
        keep = self.times <= t
        return EventLog(self.n, self.q, self.T, self.times[keep], self.clocks[keep],
                        self.scalars[keep], self.seed)

    def restrict(self, m):
        """Log of the walk on the top-left m x m block (clocks < m)."""
        keep = self.clocks < m
        return EventLog(m, self.q, self.T, self.times[keep], self.clocks[keep],
                        self.scalars[keep], self.seed)

    def to_text(self):
        buf = io.StringIO()
        seed = "-" if self.seed is None else str(self.seed)
        buf.write(f"{self.n} {self.q} {self.T!r} {seed}\n")
        for t, c, a in zip(self.times, self.clocks, self.scalars):
            buf.write(f"{float(t)!r}\t{int(c)}\t{int(a)}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text):
        lines = text.strip("\n").split("\n")
        n, q, T, seed = lines[0].split()
        rows = [ln.split("\t") for ln in lines[1:] if ln]
        times = [float(r[0]) for r in rows]
        clocks = [int(r[1]) for r in rows]
        scalars = [int(r[2]) for r in rows]
        return cls(int(n), int(q), float(T), np.array(times), np.array(clocks, dtype=np.int64),
                   np.array(scalars, dtype=np.int64), None if seed == "-" else int(seed))


def _exp_arrivals(rng, rate, horizon):
    """Arrival times of a rate-``rate`` Poisson process on (0, horizon]."""
    chunk = max(16, int(rate * horizon * 1.2) + 16)
    times = np.empty(0)
    last = 0.0
    while True:
        t = last + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        times = np.concatenate([times, t])
        last = t[-1]
        if last > horizon:
            break
    return times[times <= horizon]


def sample_event_log(n, q, T, seed):
    """Superposition of n-1 rate-1 clocks: global Exp(n-1) gaps, uniform clock labels."""
    _check_params(n, q, T)
    rng = stream(check_seed(seed), 0)
    times = _exp_arrivals(rng, n - 1, T) if T > 0 else np.empty(0)
    k = len(times)
    clocks = rng.integers(1, n, size=k)
    scalars = rng.integers(0, q, size=k)
    return EventLog(n, q, T, times, clocks, scalars, seed)


def sample_event_log_backward(n, q, T, seed):
    """Like :func:`sample_event_log` but generated backwards from time T.

    Events are drawn in fixed-size blocks of (gap, clock, scalar), so logs with
    the same seed and a longer horizon agree on the events closest to the
    terminal time; span detection is then monotone in T.
    """
    _check_params(n, q, T)
    rng = stream(check_seed(seed), 1)
    taus, clocks, scalars = [], [], []
    last = 0.0
    while T > 0 and last <= T:
        tau = last + np.cumsum(rng.exponential(1.0 / (n - 1), size=_BLOCK))
        taus.append(tau)
        clocks.append(rng.integers(1, n, size=_BLOCK))
        scalars.append(rng.integers(0, q, size=_BLOCK))
        last = tau[-1]
    if not taus:
        return EventLog(n, q, T, np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), seed)
    tau, clocks, scalars = (np.concatenate(x) for x in (taus, clocks, scalars))
    keep = tau < T
    tau, clocks, scalars = tau[keep][::-1], clocks[keep][::-1], scalars[keep][::-1]
    return EventLog(n, q, T, T - tau, clocks, scalars, seed)


_BLOCK = 64


@dataclass
class SplitLog:
    """Rings of clocks 1..n-2 (``f_*``) separated from rings of clock n-1 (``last_*``)."""

    log: EventLog
    f_times: np.ndarray = field(init=False)
    f_clocks: np.ndarray = field(init=False)
    f_scalars: np.ndarray = field(init=False)
    last_times: np.ndarray = field(init=False)
    last_scalars: np.ndarray = field(init=False)

    def __post_init__(self):
        log = self.log
        f = log.clocks <= log.n - 2
        self.f_times = log.times[f]
        self.f_clocks = log.clocks[f]
        self.f_scalars = log.scalars[f]
        self.last_times = log.times[~f]
        self.last_scalars = log.scalars[~f]

    @property
    def n(self):
        return self.log.n

    @property
    def q(self):
        return self.log.q

    @property
    def T(self):
        return self.log.T


def evolve_forward(log, until=None):
    """X at time ``until`` (default T), starting from the identity."""
    n, q = log.n, log.q
    X = np.eye(n, dtype=np.int64)
    for t, i, a in zip(log.times, log.clocks, log.scalars):
        if until is not None and t > until:
            break
        if a:
            X[i - 1] = (X[i - 1] + a * X[i]) % q
    return UnitriMatrix._trusted(X, q)


def _product_after(split, lo, hi=np.inf):
    """Product of the f-event matrices with times in (lo, hi], latest on the left."""
    n, q = split.n, split.q
    Y = np.eye(n, dtype=np.int64)
    times = split.f_times
    for k in range(len(times) - 1, -1, -1):
        t = times[k]
        if t > hi:
            continue
        if t <= lo:
            break
        a = split.f_scalars[k]
        if a:
            i = split.f_clocks[k]
            Y[:, i] = (Y[:, i] + a * Y[:, i - 1]) % q
    return UnitriMatrix._trusted(Y, q)


class BackwardPath:
    """The backward process Y built from the f-events of a split log.

    ``Y_t`` multiplies the f-event matrices with ring times in (T-t, T], most
    recent on the left; equivalently column dynamics run in reversed time.
    """

    def __init__(self, split):
        self.split = split
        self._last_cache = None

    @property
    def T(self):
        return self.split.T

    def at(self, t):
        if not 0 <= t <= self.T:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        if t == 0:
            return UnitriMatrix.identity(self.split.n, self.split.q)
        return _product_after(self.split, self.T - t)

    def after(self, s):
        """Y_{T-s}, selecting events by forward time (> s) to avoid round-off."""
        return _product_after(self.split, s)

    def between(self, t, t2):
        """Y_{t,t'} = Y_t^{-1} Y_{t'} for 0 <= t <= t' <= T."""
        if not 0 <= t <= t2 <= self.T:
            raise ValueError(f"need 0 <= t <= t' <= T, got {t}, {t2}")
        return _product_after(self.split, self.T - t2, self.T - t)

    def window(self, s_lo, s_hi):
        """Product of f-events with forward times in (s_lo, s_hi]."""
        return _product_after(self.split, s_lo, s_hi)

    def at_last_events(self):
        """[Y_{T-s_k} for k = 1..J(T)] from a single backward sweep."""
        if self._last_cache is None:
            split = self.split
            n, q = split.n, split.q
            Y = np.eye(n, dtype=np.int64)
            ft, fc, fa = split.f_times, split.f_clocks, split.f_scalars
            out = []
            j = len(ft) - 1
            for s in split.last_times[::-1]:
                while j >= 0 and ft[j] > s:
                    if fa[j]:
                        i = fc[j]
                        Y[:, i] = (Y[:, i] + fa[j] * Y[:, i - 1]) % q
                    j -= 1
                out.append(UnitriMatrix._trusted(Y.copy(), q))
            self._last_cache = out[::-1]
        return self._last_cache


def evolve_backward(split, t):
    return BackwardPath(split).at(t)


def expansion_reconstruct(split):
    """Y_T + sum_k a_k Y_{T-s_k} E_{n-1,n}."""
    n, q = split.n, split.q
    path = BackwardPath(split)
    acc = path.after(0.0)
    E = elementary(n, n - 1, n, q)
    for Y, a in zip(path.at_last_events(), split.last_scalars):
        acc = acc + (Y @ E).scale(int(a))
    return UnitriMatrix(acc.entries, q)


@dataclass
class ZTrajectory:
    """Piecewise-constant path of Z_t = b . Y_t on [0, T] (backward time).

    ``states[k]`` holds on [times[k], times[k+1]); ``times[0] = 0``.
    """

    b: np.ndarray
    q: int
    T: float
    times: np.ndarray
    states: np.ndarray

    @property
    def lead(self):
        """1-based index of the first nonzero entry of b."""
        return int(np.flatnonzero(self.b)[0]) + 1

    def state_at(self, t):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(k, 0)]

    def segments(self):
        ends = np.append(self.times[1:], self.T)
        for t0, t1, z in zip(self.times, ends, self.states):
            yield float(t0), float(t1), z

    def east_view(self):
        """Entries lead..n-1 of each state: a q-state East path with pinned first site."""
        return self.states[:, self.lead - 1:len(self.b) - 1]


def inner_chain(b, split):
    """Path of b . Y_t; ``b`` is rescaled so its first nonzero entry is 1."""
    n, q = split.n, split.q
    if isinstance(b, FieldVector):
        b = b.entries
    b = np.asarray(b, dtype=np.int64) % q
    if b.shape != (n,):
        raise ValueError(f"b must have length {n}")
    nz = np.flatnonzero(b)
    if nz.size == 0:
        raise ValueError("b must be nonzero")
    if b[-1] != 0:
        raise ValueError("b must vanish in coordinate n")
    b = b * inv_mod(int(b[nz[0]]), q) % q
    z = b.copy()
    times, states = [0.0], [z.copy()]
    T = split.T
    for k in range(len(split.f_times) - 1, -1, -1):
        a = split.f_scalars[k]
        i = split.f_clocks[k]
        if a and z[i - 1]:
            z[i] = (z[i] + a * z[i - 1]) % q
            times.append(T - split.f_times[k])
            states.append(z.copy())
    return ZTrajectory(b, q, T, np.array(times), np.array(states))


def simulate_discrete_lazy(n, q, steps, seed):
    """Discrete walk: each step picks uniform i in 1..n-1 and uniform a in Z_q."""
    _check_params(n, q, 0)
    rng = stream(check_seed(seed), 2)
    clocks = rng.integers(1, n, size=steps)
    scalars = rng.integers(0, q, size=steps)
    X = np.eye(n, dtype=np.int64)
    for i, a in zip(clocks, scalars):
        if a:
            X[i - 1] = (X[i - 1] + a * X[i]) % q
    return UnitriMatrix._trusted(X, q)


# Batch simulators used for Monte Carlo estimates. Samples advance in lockstep,
# one event per step, each step drawing fresh variables only for live samples.

def _encode_upper(X, q):
    n = X.shape[-1]
    iu = np.triu_indices(n, 1)
    return encode_digits(X[:, iu[0], iu[1]], q)


def simulate_states_batch(n, q, times, samples, seed, chunk=50_000):
    """Encoded states of X_t (from the identity) at each of ``times``.

    Returns an int array of shape (samples, len(times)); encoding is the
    lexicographic index of the strictly-upper entries read row-major.
    """
    _check_params(n, q, 0)
    times = np.sort(np.asarray(times, dtype=float))
    out = np.empty((samples, len(times)), dtype=np.int64)
    for c, start in enumerate(range(0, samples, chunk)):
        size = min(chunk, samples - start)
        out[start:start + size] = _states_chunk(n, q, times, size, stream(seed, 3, c))
    return out


def _states_chunk(n, q, targets, S, rng):
    X = np.broadcast_to(np.eye(n, dtype=np.int64), (S, n, n)).copy()
    clock = np.zeros(S)
    out = np.empty((S, len(targets)), dtype=np.int64)
    recorded = np.zeros((S, len(targets)), dtype=bool)
    live = np.arange(S)
    tmax = targets[-1] if len(targets) else 0.0
    while live.size:
        nxt = clock[live] + rng.exponential(1.0 / (n - 1), size=live.size)
        for m, t in enumerate(targets):
            hit = (nxt > t) & ~recorded[live, m]
            if hit.any():
                idx = live[hit]
                out[idx, m] = _encode_upper(X[idx], q)
                recorded[idx, m] = True
        go = nxt <= tmax
        live, nxt = live[go], nxt[go]
        clock[live] = nxt
        i = rng.integers(1, n, size=live.size)
        a = rng.integers(0, q, size=live.size)
        X[live, i - 1, :] = (X[live, i - 1, :] + a[:, None] * X[live, i, :]) % q
    return out


def simulate_discrete_batch(n, q, steps, samples, seed):
    """Encoded states of the discrete walk after each count in ``steps``."""
    _check_params(n, q, 0)
    steps = sorted(int(s) for s in steps)
    rng = stream(seed, 4)
    X = np.broadcast_to(np.eye(n, dtype=np.int64), (samples, n, n)).copy()
    out = np.empty((samples, len(steps)), dtype=np.int64)
    rows = np.arange(samples)
    done = 0
    for m, s in enumerate(steps):
        for _ in range(s - done):
            i = rng.integers(1, n, size=samples)
            a = rng.integers(0, q, size=samples)
            X[rows, i - 1, :] = (X[rows, i - 1, :] + a[:, None] * X[rows, i, :]) % q
        done = s
        out[:, m] = _encode_upper(X, q)
    return out
