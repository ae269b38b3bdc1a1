"""Experiment runner: configs, mixing-time search, scaling fits, result files."""

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import certify, exact
from .gfq import is_prime
from .walk import evolve_forward, sample_event_log

KINDS = ("simulate", "exact", "certify", "east-gap", "scaling", "lower-bound", "fit")
ALIASES = {"tmix-scan": "scaling"}
CSV_FIELDS = ["kind", "n", "q_or_p", "T", "quantity", "value", "uncertainty", "seed", "walltime_s"]


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ExperimentConfig:
    kind: str
    n: list = field(default_factory=lambda: [3])
    q: list = field(default_factory=lambda: [2])
    p: list = field(default_factory=list)
    T: list = field(default_factory=lambda: [1.0])
    samples: int = 10_000
    delta: float = 0.01
    seed: int = 1
    cap: int = exact.DEFAULT_CAP
    n0: int = 2
    eps: float = exact.TMIX_EPS
    rel_tol: float = 0.05
    t_cap: float | None = None
    out: str | None = None
    format: str = "csv"
    input: str | None = None
    log_out: str | None = None

    def __post_init__(self):
        self.kind = ALIASES.get(self.kind, self.kind)
        for name in ("n", "q", "p", "T"):
            v = getattr(self, name)
            if not isinstance(v, (list, tuple)):
                setattr(self, name, [v])
        self.n = [int(v) for v in self.n]
        self.q = [int(v) for v in self.q]
        self.p = [float(v) for v in self.p]
        self.T = [float(v) for v in self.T]

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"unknown experiment kind {self.kind!r}")
        if self.kind == "fit":
            if not self.input:
                raise ConfigError("input", "fit needs an input CSV from tmix-scan")
            return self
        if not self.n:
            raise ConfigError("n", "list must be nonempty")
        if any(v < 1 for v in self.n):
            raise ConfigError("n", "entries must be positive")
        if self.kind == "east-gap":
            if not self.q and not self.p:
                raise ConfigError("q", "east-gap needs q (q-state) or p (binary) values")
        elif not self.q:
            raise ConfigError("q", "list must be nonempty")
        for v in self.q:
            if not is_prime(v):
                raise ConfigError("q", f"{v} is not prime")
        if any(not 0 < v < 1 for v in self.p):
            raise ConfigError("p", "entries must lie in (0, 1)")
        if self.kind in ("simulate", "certify", "lower-bound") and not self.T:
            raise ConfigError("T", "list must be nonempty")
        if any(v < 0 for v in self.T):
            raise ConfigError("T", "entries must be nonnegative")
        if self.samples < 1:
            raise ConfigError("samples", "must be >= 1")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.cap < 1:
            raise ConfigError("cap", "must be positive")
        if not 0 < self.eps < 1:
            raise ConfigError("eps", "must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be csv or json")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def hash(self):
        body = {k: v for k, v in self.to_dict().items() if k not in ("out", "log_out")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ResultRow:
    kind: str
    n: int
    q_or_p: float
    T: float | None
    quantity: str
    value: float
    uncertainty: float
    seed: int
    walltime_s: float
    config_hash: str = ""


# mixing-time search and scaling fits

@dataclass
class TmixResult:
    n: int
    q: int
    T_star: float
    T_low: float
    bound_low: float
    bound_high: float
    n0: int
    evaluations: int


def tmix_search(n, q, eps=exact.TMIX_EPS, n0=2, samples=10_000, delta=0.01, seed=0,
                rel_tol=0.05, t_start=1.0, t_cap=None, span_cache=None):
    """Smallest T (to relative tolerance) whose certified bound is <= eps.

    With n0 >= n the bound is the exact d_n(T). Brackets by doubling from
    ``t_start``, then bisects; ``bound(T_low) > eps >= bound(T_star)``.
    """
    n0 = min(n0, n)
    t_cap = float(t_cap if t_cap is not None else 64 * n * max(1.0, math.log(q)))
    if n0 == n:
        def bound(T):
            return certify.exact_group_tv(n, q, T)
    else:
        cert = certify.Certifier(n, q, n0, samples, delta, seed, horizon=t_cap, cache=span_cache)

        def bound(T):
            return cert.report(T).bound
    calls = 0

    def evaluate(T):
        nonlocal calls
        calls += 1
        return bound(T)

    lo, b_lo = 0.0, 1.0
    hi = float(t_start)
    b_hi = evaluate(hi)
    while b_hi > eps:
        lo, b_lo = hi, b_hi
        hi *= 2
        if hi > t_cap:
            raise RuntimeError(f"no T <= {t_cap} certifies eps={eps} for n={n}, q={q}")
        b_hi = evaluate(hi)
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        b = evaluate(mid)
        if b > eps:
            lo, b_lo = mid, b
        else:
            hi, b_hi = mid, b
    return TmixResult(n, q, hi, lo, b_lo, b_hi, n0, calls)


@dataclass
class ScalingFit:
    C: float
    alpha: float
    beta: float | None
    residual: float
    rows: list


def scaling_fit(rows):
    """Least squares for log T* = log C + alpha log n + beta log log q.

    ``beta`` is fitted only when the rows span at least two values of q.
    """
    data = np.array([(float(n), float(q), float(t)) for n, q, t in rows])
    if len(np.unique(data[:, 0])) < 3:
        raise ValueError("need at least 3 distinct n values")
    cols = [np.ones(len(data)), np.log(data[:, 0])]
    with_q = len(np.unique(data[:, 1])) >= 2
    if with_q:
        cols.append(np.log(np.log(data[:, 1])))
    A = np.column_stack(cols)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValueError("degenerate design matrix")
    y = np.log(data[:, 2])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.abs(A @ coef - y).max())
    return ScalingFit(float(np.exp(coef[0])), float(coef[1]),
                      float(coef[2]) if with_q else None, resid, [tuple(r) for r in data.tolist()])


# experiment dispatch

def _rows_simulate(cfg):
    rows = []
    for n in cfg.n:
        for q in cfg.q:
            for T in cfg.T:
                t0 = time.perf_counter()
                counts, ident, zeros = [], 0, []
                for k in range(cfg.samples):
                    log = sample_event_log(n, q, T, _task_seed(cfg.seed, k))
                    if k == 0 and cfg.log_out:
                        _atomic_write(cfg.log_out, log.to_text())
                    X = evolve_forward(log)
                    counts.append(len(log))
                    ident += int(not X.upper_entries().any())
                    zeros.append(int(np.count_nonzero(X.entries[: n - 1, n - 1] == 0)))
                wall = time.perf_counter() - t0
                se = float(np.std(counts) / math.sqrt(len(counts)))
                base = dict(kind="simulate", n=n, q_or_p=q, T=T, seed=cfg.seed, walltime_s=wall)
                rows.append(ResultRow(quantity="mean_events", value=float(np.mean(counts)),
                                      uncertainty=se, **base))
                rows.append(ResultRow(quantity="identity_fraction", value=ident / cfg.samples,
                                      uncertainty=_binom_se(ident, cfg.samples), **base))
                rows.append(ResultRow(quantity="last_column_zeros_mean", value=float(np.mean(zeros)),
                                      uncertainty=float(np.std(zeros) / math.sqrt(cfg.samples)),
                                      **base))
                if exact.state_count("group", n, q) <= min(cfg.cap, 4096):
                    rows.append(ResultRow(quantity="exact_tv", value=certify.exact_group_tv(n, q, T),
                                          uncertainty=0.0, **base))
    return rows


def _task_seed(seed, k):
    return (seed * 1_000_003 + k) % 2**64


def _binom_se(k, N):
    p = k / N
    return math.sqrt(p * (1 - p) / N)


def _rows_exact(cfg):
    rows = []
    for n in cfg.n:
        for q in cfg.q:
            t0 = time.perf_counter()
            summary = exact.summarize("group", n, q=q, eps=cfg.eps, cap=cfg.cap)
            tvs = []
            if cfg.T:
                space = exact.enumerate_space("group", n, q=q, cap=cfg.cap)
                rm = exact.build_generator(space)
                tvs = exact.tv_curve(rm, exact.point_mass(space.size), cfg.T)
            wall = time.perf_counter() - t0
            for r in summary:
                rows.append(ResultRow("exact", n, q, None, r.quantity, r.value, r.residual,
                                      cfg.seed, wall))
            for T, v in zip(cfg.T, tvs):
                rows.append(ResultRow("exact", n, q, T, "tv", v, 0.0, cfg.seed, wall))
    return rows


def _certificates(cfg):
    reports, rows = [], []
    for n in cfg.n:
        for q in cfg.q:
            for T in cfg.T:
                t0 = time.perf_counter()
                rep = certify.certified_tv_upper(n, q, T, min(cfg.n0, n), cfg.samples,
                                                 cfg.delta, cfg.seed)
                wall = time.perf_counter() - t0
                reports.append(rep)
                base = dict(kind="certify", n=n, q_or_p=q, T=T, seed=cfg.seed, walltime_s=wall)
                rows.append(ResultRow(quantity="bound", value=rep.bound, uncertainty=0.0, **base))
                rows.append(ResultRow(quantity="base_tv", value=rep.base_tv, uncertainty=0.0, **base))
                for lv in rep.levels:
                    rows.append(ResultRow(quantity=f"level_{lv.i}_failure_ci_upper",
                                          value=lv.ci_upper, uncertainty=lv.failures / lv.samples,
                                          **base))
    return reports, rows


def _rows_east_gap(cfg):
    rows = []
    params = [("qstate", q) for q in cfg.q] + [("binary", p) for p in cfg.p]
    for flavor, param in params:
        t0 = time.perf_counter()
        table = exact.gap_table(flavor, param, cfg.n, cap=cfg.cap)
        wall = time.perf_counter() - t0
        kind = "east-gap"
        for g in table:
            rows.append(ResultRow(kind, g.n, param, None, f"{flavor}_gap", g.result.gap,
                                  g.result.residual, cfg.seed, wall))
            rows.append(ResultRow(kind, g.n, param, None, f"{flavor}_running_inf", g.running_inf,
                                  0.0, cfg.seed, wall))
    return rows


def _rows_scaling(cfg):
    rows, cache = [], {}
    for q in cfg.q:
        for n in cfg.n:
            t0 = time.perf_counter()
            res = tmix_search(n, q, cfg.eps, cfg.n0, cfg.samples, cfg.delta, cfg.seed,
                              cfg.rel_tol, t_cap=cfg.t_cap, span_cache=cache)
            wall = time.perf_counter() - t0
            base = dict(kind="scaling", n=n, q_or_p=q, T=None, seed=cfg.seed, walltime_s=wall)
            rows.append(ResultRow(quantity="T_star", value=res.T_star,
                                  uncertainty=res.T_star - res.T_low, **base))
            # continuous time runs n-1 clocks at once; the discrete lazy walk needs about (n-1) T* steps
            rows.append(ResultRow(quantity="discrete_steps", value=(n - 1) * res.T_star,
                                  uncertainty=(n - 1) * (res.T_star - res.T_low), **base))
            rows.append(ResultRow(quantity="bound_at_T_star", value=res.bound_high,
                                  uncertainty=0.0, **base))
    return rows


def _rows_lower(cfg):
    rows = []
    for n in cfg.n:
        for q in cfg.q:
            for T in cfg.T:
                t0 = time.perf_counter()
                lb = certify.tv_lower_statistic(n, q, T, cfg.samples, cfg.seed, 1 - cfg.delta)
                wall = time.perf_counter() - t0
                base = dict(kind="lower-bound", n=n, q_or_p=q, T=T, seed=cfg.seed, walltime_s=wall)
                rows.append(ResultRow(quantity="tv_lower", value=lb.lower, uncertainty=0.0, **base))
                rows.append(ResultRow(quantity="statistic_gap", value=lb.point,
                                      uncertainty=lb.upper - lb.point, **base))
                rows.append(ResultRow(quantity="threshold", value=float(lb.threshold),
                                      uncertainty=0.0, **base))
    return rows


def read_rows(path):
    with open(path) as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(body))


def fit_from_csv(path):
    data = [(int(r["n"]), float(r["q_or_p"]), float(r["value"]))
            for r in read_rows(path) if r["quantity"] == "T_star"]
    return scaling_fit(data)


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, cfg):
    buf = io.StringIO()
    buf.write(f"# unitriwalk {cfg.kind}\n")
    buf.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
    buf.write(f"# config_hash: {cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])
    return buf.getvalue()


def _atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render(cfg):
    """Run the experiment and return the output text."""
    cfg.validate()
    if cfg.kind == "fit":
        fit = fit_from_csv(cfg.input)
        return json.dumps({"config": cfg.to_dict(), "config_hash": cfg.hash(), "fit": asdict(fit)},
                          indent=2, sort_keys=True) + "\n"
    reports = None
    if cfg.kind == "certify":
        reports, rows = _certificates(cfg)
    else:
        rows = {
            "simulate": _rows_simulate,
            "exact": _rows_exact,
            "east-gap": _rows_east_gap,
            "scaling": _rows_scaling,
            "lower-bound": _rows_lower,
        }[cfg.kind](cfg)
    h = cfg.hash()
    for r in rows:
        r.config_hash = h
    if cfg.format == "csv":
        return rows_to_csv(rows, cfg)
    doc = {"config": cfg.to_dict(), "config_hash": h, "rows": [asdict(r) for r in rows]}
    if reports is not None:
        doc["certificates"] = [r.to_dict() for r in reports]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run(cfg):
    """Run ``cfg``; write to ``cfg.out`` atomically when set. Returns the output text."""
    text = render(cfg)
    if cfg.out:
        _atomic_write(cfg.out, text)
    return text
