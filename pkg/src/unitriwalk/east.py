"""Continuous-time East models: binary with parameter p, and q-state over Z_q.

Sites are 1-based and site 1 is pinned to 1. Clock ``i`` (1 <= i <= n-1)
rings at rate 1 and refreshes site ``i+1`` only when site ``i`` is nonzero.
"""

import io
from dataclasses import dataclass

import numpy as np

from .gfq import check_modulus
from .rng import check_seed, stream


@dataclass(frozen=True)
class EastStateBinary:
    h: tuple

    def __post_init__(self):
        if not self.h or self.h[0] != 1:
            raise ValueError("site 1 must be pinned to 1")
        if any(v not in (0, 1) for v in self.h):
            raise ValueError("binary East states take values in {0, 1}")

    @property
    def n(self):
        return len(self.h)


@dataclass(frozen=True)
class EastStateQ:
    h: tuple
    q: int

    def __post_init__(self):
        check_modulus(self.q)
        if not self.h or self.h[0] != 1:
            raise ValueError("site 1 must be pinned to 1")
        if any(not 0 <= v < self.q for v in self.h):
            raise ValueError("entries must be residues mod q")

    @property
    def n(self):
        return len(self.h)


@dataclass(frozen=True)
class EastParams:
    n: int
    flavor: str  # "binary" or "qstate"
    p: float | None = None
    q: int | None = None
    T: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.flavor == "binary":
            if self.p is None or not 0 < self.p < 1:
                raise ValueError(f"binary East needs 0 < p < 1, got {self.p}")
        elif self.flavor == "qstate":
            check_modulus(self.q)
        else:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.T < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def param(self):
        return self.p if self.flavor == "binary" else self.q

    def initial(self):
        """The all-empty state (1, 0, ..., 0)."""
        h = (1,) + (0,) * (self.n - 1)
        return EastStateBinary(h) if self.flavor == "binary" else EastStateQ(h, self.q)


def _check_site(n, i):
    if not 1 <= i <= n - 1:
        raise IndexError(f"clock {i} outside 1..{n - 1}")


def east_step_binary(h, i, u, p):
    """Clock ``i`` rings with uniform draw ``u``: site i+1 becomes [u < p] if site i is 1."""
    _check_site(h.n, i)
    if h.h[i - 1] != 1:
        return h
    new = list(h.h)
    new[i] = 1 if u < p else 0
    return EastStateBinary(tuple(new))


def east_step_q(h, i, u):
    """Clock ``i`` rings: site i+1 becomes floor(u q) if site i is nonzero."""
    _check_site(h.n, i)
    if h.h[i - 1] == 0:
        return h
    new = list(h.h)
    new[i] = min(int(u * h.q), h.q - 1)
    return EastStateQ(tuple(new), h.q)


def coupled_binary_draw(u, q):
    """Draw for the binary step that reproduces psi of the q-state step fed ``u``."""
    return 0.0 if min(int(u * q), q - 1) != 0 else 1.0


def psi_project(h):
    return EastStateBinary(tuple(1 if v else 0 for v in h.h))


@dataclass
class EastTrajectory:
    """Change-points of an East path: ``values[k]`` written to ``sites[k]`` at ``times[k]``."""

    params: EastParams
    initial: tuple
    times: np.ndarray
    sites: np.ndarray
    values: np.ndarray
    seed: int | None = None

    @property
    def T(self):
        return self.params.T

    def state_at(self, t):
        h = list(self.initial)
        for s, site, v in zip(self.times, self.sites, self.values):
            if s > t:
                break
            h[site - 1] = int(v)
        return tuple(h)

    def segments(self):
        h = list(self.initial)
        t0 = 0.0
        for s, site, v in zip(self.times, self.sites, self.values):
            yield t0, float(s), tuple(h)
            h[site - 1] = int(v)
            t0 = float(s)
        yield t0, float(self.T), tuple(h)

    def dense(self):
        """States after each change-point, with the initial state first."""
        h = np.array(self.initial, dtype=np.int64)
        out = [h.copy()]
        for site, v in zip(self.sites, self.values):
            h[site - 1] = v
            out.append(h.copy())
        return np.array(out)

    def to_text(self):
        p = self.params
        buf = io.StringIO()
        seed = "-" if self.seed is None else str(self.seed)
        buf.write(f"{p.flavor} {p.n} {p.param!r} {p.T!r} {seed}\n")
        for t, s, v in zip(self.times, self.sites, self.values):
            buf.write(f"{float(t)!r}\t{int(s)}\t{int(v)}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text, initial=None):
        lines = text.strip("\n").split("\n")
        flavor, n, param, T, seed = lines[0].split()
        n = int(n)
        if flavor == "binary":
            params = EastParams(n, flavor, p=float(param), T=float(T))
        else:
            params = EastParams(n, flavor, q=int(param), T=float(T))
        rows = [ln.split("\t") for ln in lines[1:] if ln]
        init = tuple(initial) if initial is not None else params.initial().h
        return cls(params, init, np.array([float(r[0]) for r in rows]),
                   np.array([int(r[1]) for r in rows], dtype=np.int64),
                   np.array([int(r[2]) for r in rows], dtype=np.int64),
                   None if seed == "-" else int(seed))


def east_drive(params, initial, times, clocks, uniforms, seed=None):
    """Run the dynamics on given ring times, clock labels and uniform draws."""
    h = list(initial.h)
    q = params.q
    ts, ss, vs = [], [], []
    for t, i, u in zip(times, clocks, uniforms):
        if h[i - 1] == 0:
            continue
        if params.flavor == "binary":
            v = 1 if u < params.p else 0
        else:
            v = min(int(u * q), q - 1)
        if v != h[i]:
            h[i] = v
            ts.append(t)
            ss.append(i + 1)
            vs.append(v)
    return EastTrajectory(params, tuple(initial.h), np.array(ts, dtype=float),
                          np.array(ss, dtype=np.int64), np.array(vs, dtype=np.int64), seed)


def east_randomness(n, T, seed):
    """Ring times, clock labels and uniforms driving :func:`east_simulate`."""
    rng = stream(check_seed(seed), 10)
    if n < 2 or T == 0:
        return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0)
    k = rng.poisson((n - 1) * T)
    times = np.sort(rng.uniform(0.0, T, size=k))
    clocks = rng.integers(1, n, size=k)
    uniforms = rng.random(size=k)
    return times, clocks, uniforms


def _check_initial(params, initial):
    if initial is None:
        return params.initial()
    if isinstance(initial, (EastStateBinary, EastStateQ)):
        state = initial
    elif params.flavor == "binary":
        state = EastStateBinary(tuple(int(v) for v in initial))
    else:
        state = EastStateQ(tuple(int(v) for v in initial), params.q)
    if state.n != params.n:
        raise ValueError(f"initial state has length {state.n}, expected {params.n}")
    return state


def east_simulate(params, initial=None, seed=0):
    initial = _check_initial(params, initial)
    times, clocks, uniforms = east_randomness(params.n, params.T, seed)
    return east_drive(params, initial, times, clocks, uniforms, seed)


def east_stationary_sample(params, seed, size=None):
    """Product measure: Bernoulli(p) or uniform Z_q on sites 2..n, site 1 = 1.

    With ``size`` given, returns an int array of shape (size, n).
    """
    rng = stream(check_seed(seed), 11)
    m = (1 if size is None else size, params.n - 1)
    if params.flavor == "binary":
        rest = (rng.random(m) < params.p).astype(np.int64)
    else:
        rest = rng.integers(0, params.q, size=m)
    h = np.concatenate([np.ones((m[0], 1), dtype=np.int64), rest], axis=1)
    if size is not None:
        return h
    if params.flavor == "binary":
        return EastStateBinary(tuple(int(v) for v in h[0]))
    return EastStateQ(tuple(int(v) for v in h[0]), params.q)
