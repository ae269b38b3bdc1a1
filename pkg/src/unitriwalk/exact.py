"""Exhaustive analysis of small instances.

States are indexed lexicographically on their free digits: the strictly-upper
entries read row-major for G_n(q), and sites 2..n for the East models. Under
this indexing the identity matrix and the all-empty East state are index 0.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.stats import poisson

from .gfq import check_modulus, decode_digits, encode_digits

DEFAULT_CAP = 2**16
DENSE_LIMIT = 2000
MODELS = ("group", "east-binary", "east-q")
TMIX_EPS = 1 / (2 * math.e)


class CapExceeded(ValueError):
    """State space too large for exhaustive analysis; use Monte Carlo instead."""


class NotReversible(ValueError):
    pass


class NotLumpable(ValueError):
    def __init__(self, source_class, x, y, target_class, rate_x, rate_y):
        self.source_class = source_class
        self.pair = (x, y)
        self.target_class = target_class
        self.rates = (rate_x, rate_y)
        super().__init__(
            f"states {x} and {y} of class {source_class} jump to class {target_class} "
            f"at rates {rate_x} and {rate_y}")


@dataclass
class StateSpace:
    model: str
    n: int
    base: int
    states: np.ndarray
    q: int | None = None
    p: float | None = None

    @property
    def size(self):
        return len(self.states)

    @property
    def param(self):
        return self.p if self.model == "east-binary" else self.q

    def index(self, digits):
        return encode_digits(digits, self.base)

    def full_states(self):
        """East states with the pinned first site prepended."""
        ones = np.ones((self.size, 1), dtype=np.int64)
        return np.concatenate([ones, self.states], axis=1)

    def matrices(self):
        """Group states as an (S, n, n) array of unitriangular matrices."""
        n = self.n
        X = np.broadcast_to(np.eye(n, dtype=np.int64), (self.size, n, n)).copy()
        iu = np.triu_indices(n, 1)
        X[:, iu[0], iu[1]] = self.states
        return X


def state_count(model, n, q=None):
    if model == "group":
        return q ** (n * (n - 1) // 2)
    if model == "east-binary":
        return 2 ** (n - 1)
    if model == "east-q":
        return q ** (n - 1)
    raise ValueError(f"unknown model {model!r}")


def enumerate_space(model, n, q=None, p=None, cap=DEFAULT_CAP):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if model == "east-binary":
        if p is None or not 0 < p < 1:
            raise ValueError(f"binary East needs 0 < p < 1, got {p}")
        base = 2
    else:
        base = check_modulus(q)
    if n < (2 if model == "group" else 1):
        raise ValueError(f"n={n} too small for {model}")
    S = state_count(model, n, base)
    if S > cap:
        raise CapExceeded(f"{model} n={n} has {S} states, cap is {cap}")
    m = n * (n - 1) // 2 if model == "group" else n - 1
    states = decode_digits(np.arange(S), base, m)
    return StateSpace(model, n, base, states, q=q if model != "east-binary" else None, p=p)


@dataclass
class RateMatrix:
    matrix: sp.csr_matrix
    space: StateSpace | None = None

    @property
    def size(self):
        return self.matrix.shape[0]

    def dense(self):
        return self.matrix.toarray()

    def max_exit_rate(self):
        return float(-self.matrix.diagonal().min())


def _assemble(S, rows, cols, rates):
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    rates = np.concatenate(rates) if rates else np.empty(0)
    off = sp.coo_matrix((rates, (rows, cols)), shape=(S, S)).tocsr()
    off.sum_duplicates()
    diag = sp.diags(-np.asarray(off.sum(axis=1)).ravel())
    return (off + diag).tocsr()


def build_generator(space):
    S, n = space.size, space.n
    rows, cols, rates = [], [], []
    src = np.arange(S)
    if space.model == "group":
        q = space.q
        X = space.matrices()
        iu = np.triu_indices(n, 1)
        for i in range(1, n):
            for a in range(1, q):
                Y = X.copy()
                Y[:, i - 1, :] = (X[:, i - 1, :] + a * X[:, i, :]) % q
                tgt = encode_digits(Y[:, iu[0], iu[1]], q)
                rows.append(src)
                cols.append(tgt)
                rates.append(np.full(S, 1.0 / q))
    else:
        H = space.full_states()
        if space.model == "east-binary":
            choices = [(0, 1 - space.p), (1, space.p)]
        else:
            choices = [(v, 1.0 / space.q) for v in range(space.q)]
        for i in range(1, n):
            active = H[:, i - 1] != 0
            for v, rate in choices:
                moved = active & (H[:, i] != v)
                G = H[moved].copy()
                G[:, i] = v
                rows.append(src[moved])
                cols.append(encode_digits(G[:, 1:], space.base))
                rates.append(np.full(int(moved.sum()), rate))
    return RateMatrix(_assemble(S, rows, cols, rates), space)


def stationary(space):
    """Uniform on G_n(q) and on the q-state East model; Bernoulli(p) product for binary East."""
    if space.model == "east-binary":
        ones = space.states.sum(axis=1)
        m = space.n - 1
        pi = space.p ** ones * (1 - space.p) ** (m - ones)
    else:
        pi = np.full(space.size, 1.0 / space.size)
    return pi


@dataclass
class Residuals:
    stationarity: float
    reversibility: float


def stationarity_residual(rm, pi):
    """Max-norm of pi L, and max |pi_x L_xy - pi_y L_yx|."""
    L = rm.matrix
    pi = np.asarray(pi, dtype=float)
    if len(pi) != L.shape[0]:
        raise ValueError("distribution and generator sizes differ")
    stat = float(np.abs(L.T @ pi).max())
    F = sp.diags(pi) @ L
    rev = abs(F - F.T)
    return Residuals(stat, float(rev.max()) if rev.nnz else 0.0)


def _uniformization(rm):
    lam = max(rm.max_exit_rate(), 1e-300)
    P = (sp.identity(rm.size, format="csr") + rm.matrix / lam).tocsr()
    return P.T.tocsr(), lam


def propagate(rm, mu, t, tol=1e-14, extra_terms=0, _cache=None):
    """mu e^{tL} by uniformization; ``mu`` may hold one distribution per row.

    The Poisson series is cut where its tail mass drops below ``tol``.
    """
    mu = np.asarray(mu, dtype=float)
    if t == 0:
        return mu.copy()
    PT, lam = _cache if _cache is not None else _uniformization(rm)
    x = lam * t
    K = int(poisson.isf(tol, x)) + 1 + int(extra_terms)
    w = poisson.pmf(np.arange(K + 1), x)
    v = mu.T.copy()
    acc = w[0] * v
    for k in range(1, K + 1):
        v = PT @ v
        acc += w[k] * v
    return acc.T


def tv_distance(mu, pi):
    return 0.5 * np.abs(np.asarray(mu) - np.asarray(pi)).sum(axis=-1)


def tv_curve(rm, mu0, times, pi=None, tol=1e-14, extra_terms=0):
    """||mu0 e^{tL} - pi||_TV at each time (propagated incrementally in sorted order)."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    if pi is None:
        pi = stationary(rm.space)
    cache = _uniformization(rm)
    order = np.argsort(times, kind="stable")
    out = [0.0] * len(times)
    mu, now = np.asarray(mu0, dtype=float), 0.0
    for k in order:
        mu = propagate(rm, mu, times[k] - now, tol, extra_terms, cache)
        now = times[k]
        out[k] = float(tv_distance(mu, pi))
    return out


def point_mass(size, index=0):
    mu = np.zeros(size)
    mu[index] = 1.0
    return mu


def default_starts(rm):
    # the group walk is transitive, so the identity is a worst-case start
    if rm.space is not None and rm.space.model == "group":
        return [0]
    return list(range(rm.size))


def worst_tv(rm, pi, t, starts=None, _cache=None):
    starts = default_starts(rm) if starts is None else list(starts)
    mu0 = np.zeros((len(starts), rm.size))
    mu0[np.arange(len(starts)), starts] = 1.0
    mu = propagate(rm, mu0, t, _cache=_cache)
    return float(tv_distance(mu, pi).max())


def exact_tmix(rm, pi=None, eps=TMIX_EPS, starts=None, tol=1e-6, t_cap=1e6):
    """Smallest t with worst-case TV <= eps, by doubling then bisection."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if pi is None:
        pi = stationary(rm.space)
    cache = _uniformization(rm)

    def d(t):
        return worst_tv(rm, pi, t, starts, cache)

    hi = 1.0
    while d(hi) > eps:
        hi *= 2
        if hi > t_cap:
            raise RuntimeError("mixing time exceeds t_cap")
    lo = 0.0 if hi == 1.0 else hi / 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if d(mid) > eps:
            lo = mid
        else:
            hi = mid
    return hi


def discrete_tv_curve(rm, mu0, steps, rate, pi=None):
    """TV of the discrete chain P = I + L / rate after each step count."""
    if pi is None:
        pi = stationary(rm.space)
    P = (sp.identity(rm.size, format="csr") + rm.matrix / rate).T.tocsr()
    mu = np.asarray(mu0, dtype=float)
    out, done = {}, 0
    for s in sorted(set(int(s) for s in steps)):
        for _ in range(s - done):
            mu = P @ mu
        done = s
        out[s] = float(tv_distance(mu, pi))
    return [out[int(s)] for s in steps]


@dataclass
class SpectralResult:
    gap: float
    method: str
    residual: float


def _symmetrized(rm, pi):
    d = np.sqrt(np.asarray(pi, dtype=float))
    A = sp.diags(d) @ (-rm.matrix) @ sp.diags(1 / d)
    return ((A + A.T) * 0.5).tocsr(), d


def spectral_gap(rm, pi=None, rev_tol=1e-10):
    """Second-smallest eigenvalue of -L via its symmetrization D^{1/2}(-L)D^{-1/2}."""
    if pi is None:
        pi = stationary(rm.space)
    if rm.size < 2:
        raise ValueError("a single-state chain has no spectral gap")
    res = stationarity_residual(rm, pi)
    if res.reversibility > rev_tol:
        raise NotReversible(f"reversibility residual {res.reversibility:.3g}")
    A, root = _symmetrized(rm, pi)
    if rm.size <= DENSE_LIMIT:
        w, V = eigh(A.toarray())
        gap, v = float(w[1]), V[:, 1]
        residual = float(np.linalg.norm(A @ v - gap * v))
        return SpectralResult(gap, "dense-eigen", residual)
    # largest eigenvalue of c I - A after projecting out sqrt(pi), c above the spectrum
    u = root / np.linalg.norm(root)
    c = 2 * rm.max_exit_rate() + 1.0

    def matvec(x):
        x = np.ravel(x)
        x = x - u * (u @ x)
        y = c * x - A @ x
        return y - u * (u @ y)

    op = LinearOperator(A.shape, matvec=matvec, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(rm.size)
    v0 -= u * (u @ v0)
    w, V = eigsh(op, k=1, which="LA", tol=1e-12, v0=v0, ncv=min(rm.size, 64), maxiter=100_000)
    gap, v = float(c - w[0]), V[:, 0]
    residual = float(np.linalg.norm(A @ v - gap * v))
    return SpectralResult(gap, "iterative", residual)


def lump_check(rm, partition, tol=1e-12):
    """Lumped generator for a partition (labels 0..C-1), or NotLumpable."""
    labels = np.asarray(partition, dtype=np.int64)
    if labels.shape != (rm.size,):
        raise ValueError("partition must label every state")
    C = int(labels.max()) + 1
    M = sp.csr_matrix((np.ones(rm.size), (np.arange(rm.size), labels)), shape=(rm.size, C))
    R = np.asarray((rm.matrix @ M).todense())
    lumped = np.empty((C, C))
    for c in range(C):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            raise ValueError(f"class {c} is empty")
        rows = R[members]
        dev = np.abs(rows - rows[0])
        if dev.max() > tol:
            k, d = np.unravel_index(int(dev.argmax()), dev.shape)
            x, y = int(members[0]), int(members[k])
            raise NotLumpable(c, x, y, int(d), float(R[x, d]), float(R[y, d]))
        lumped[c] = rows[0]
    return lumped


def psi_partition(space):
    """Zero/nonzero pattern of a q-state East space, indexed like the binary East space."""
    if space.model != "east-q":
        raise ValueError("psi partition needs a q-state East space")
    return encode_digits((space.states != 0).astype(np.int64), 2)


def column_partition(space, j):
    """Column j (1-based) of each group state, indexed like the j-length q-state East space.

    East site k corresponds to row j+1-k, so the pinned site is the diagonal 1.
    """
    if space.model != "group":
        raise ValueError("column partition needs a group space")
    if not 1 <= j <= space.n:
        raise ValueError(f"column {j} outside 1..{space.n}")
    X = space.matrices()
    digits = X[:, j - 2::-1, j - 1] if j >= 2 else np.zeros((space.size, 0), dtype=np.int64)
    return encode_digits(digits, space.q)


@dataclass
class GapRow:
    n: int
    result: SpectralResult
    running_inf: float


def gap_table(flavor, param, n_range, cap=DEFAULT_CAP):
    """East spectral gaps over ``n_range``; ``param`` is p (binary) or q (q-state)."""
    model = {"binary": "east-binary", "qstate": "east-q"}.get(flavor, flavor)
    rows, inf = [], math.inf
    for n in n_range:
        if model == "east-binary":
            space = enumerate_space(model, n, p=param, cap=cap)
        else:
            space = enumerate_space(model, n, q=param, cap=cap)
        res = spectral_gap(build_generator(space), stationary(space))
        inf = min(inf, res.gap)
        rows.append(GapRow(n, res, inf))
    return rows


@dataclass
class ExactRow:
    model: str
    n: int
    q_or_p: float
    quantity: str
    value: float
    residual: float = 0.0


CSV_FIELDS = ["model", "n", "q_or_p", "quantity", "value", "residual"]


def summarize(model, n, q=None, p=None, eps=TMIX_EPS, cap=DEFAULT_CAP):
    space = enumerate_space(model, n, q=q, p=p, cap=cap)
    rm = build_generator(space)
    pi = stationary(space)
    res = stationarity_residual(rm, pi)
    param = space.param
    rows = [
        ExactRow(model, n, param, "states", float(space.size)),
        ExactRow(model, n, param, "stationarity_residual", res.stationarity),
        ExactRow(model, n, param, "reversibility_residual", res.reversibility),
    ]
    if space.size >= 2:
        gap = spectral_gap(rm, pi)
        rows.append(ExactRow(model, n, param, "gap", gap.gap, gap.residual))
        rows.append(ExactRow(model, n, param, "tmix", exact_tmix(rm, pi, eps)))
    return rows


def write_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.model, r.n, r.q_or_p, r.quantity, repr(float(r.value)), repr(float(r.residual))])
