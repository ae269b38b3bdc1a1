"""Arithmetic over Z_q (q prime) and unitriangular matrices.

Indices in the public API are 1-based, matching the row/clock labels used for
the walk: ``row_update(X, i, a)`` adds ``a`` times row ``i+1`` to row ``i``.
Scalars may be passed as :class:`FieldScalar` or as plain ints (reduced mod q).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class ModulusError(ValueError):
    """Operands live over different (or invalid) moduli."""


@lru_cache(maxsize=None)
def is_prime(q):
    if q < 2:
        return False
    d = 2
    while d * d <= q:
        if q % d == 0:
            return False
        d += 1
    return True


def check_modulus(q):
    q = int(q)
    if not is_prime(q):
        raise ModulusError(f"modulus must be prime, got {q}")
    return q


def inv_mod(x, q):
    """Inverse of ``x`` mod ``q`` by the extended Euclidean algorithm."""
    x %= q
    if x == 0:
        raise ZeroDivisionError("zero has no inverse")
    r0, r1, s0, s1 = q, x, 0, 1
    while r1:
        k = r0 // r1
        r0, r1 = r1, r0 - k * r1
        s0, s1 = s1, s0 - k * s1
    return s0 % q


@dataclass(frozen=True)
class FieldScalar:
    value: int
    modulus: int

    def __post_init__(self):
        check_modulus(self.modulus)
        if not 0 <= self.value < self.modulus:
            raise ValueError(f"{self.value} is not a residue mod {self.modulus}")

    @classmethod
    def of(cls, value, q):
        return cls(int(value) % q, q)

    def _other(self, y):
        if isinstance(y, FieldScalar):
            if y.modulus != self.modulus:
                raise ModulusError(f"mod {self.modulus} vs mod {y.modulus}")
            return y.value
        return int(y)

    def __add__(self, y):
        return FieldScalar((self.value + self._other(y)) % self.modulus, self.modulus)

    def __sub__(self, y):
        return FieldScalar((self.value - self._other(y)) % self.modulus, self.modulus)

    def __mul__(self, y):
        return FieldScalar((self.value * self._other(y)) % self.modulus, self.modulus)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return FieldScalar(-self.value % self.modulus, self.modulus)

    def inverse(self):
        return FieldScalar(inv_mod(self.value, self.modulus), self.modulus)

    def __int__(self):
        return self.value


def scalar_arith(x, y, op):
    """Apply ``op`` in {"add", "mul", "neg", "inv"}; ``y`` is ignored for unary ops."""
    if op == "add":
        return x + y
    if op == "mul":
        return x * y
    if op == "neg":
        return -x
    if op == "inv":
        return x.inverse()
    raise ValueError(f"unknown op {op!r}")


def _residue(a, q):
    if isinstance(a, FieldScalar):
        if a.modulus != q:
            raise ModulusError(f"scalar mod {a.modulus} used with matrix mod {q}")
        return a.value
    return int(a) % q


class FieldMatrix:
    """Square matrix over Z_q stored as a row-major int64 array of residues."""

    __slots__ = ("entries", "q")

    def __init__(self, entries, q):
        self.q = check_modulus(q)
        arr = np.array(entries, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        self.entries = arr % self.q

    @property
    def n(self):
        return self.entries.shape[0]

    def _check(self, other):
        if self.q != other.q:
            raise ModulusError(f"mod {self.q} vs mod {other.q}")
        if self.n != other.n:
            raise ValueError(f"dimension {self.n} vs {other.n}")

    def __eq__(self, other):
        if not isinstance(other, FieldMatrix):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.q, self.entries.tobytes()))

    def __add__(self, other):
        self._check(other)
        return _wrap(self.entries + other.entries, self.q)

    def __sub__(self, other):
        self._check(other)
        return _wrap(self.entries - other.entries, self.q)

    def scale(self, a):
        return FieldMatrix(self.entries * _residue(a, self.q), self.q)

    def __matmul__(self, other):
        return mat_mul(self, other)

    def is_unitriangular(self):
        e = self.entries
        return bool(np.all(np.diag(e) == 1) and not np.tril(e, -1).any())

    def to_string(self):
        return format_matrix(self)

    def __repr__(self):
        return f"{type(self).__name__}({self.to_string()!r}, q={self.q})"


class UnitriMatrix(FieldMatrix):
    """Element of G_n(q): upper triangular with unit diagonal."""

    __slots__ = ()

    def __init__(self, entries, q):
        super().__init__(entries, q)
        if not self.is_unitriangular():
            raise ValueError("matrix is not unitriangular")

    @classmethod
    def identity(cls, n, q):
        return cls(np.eye(n, dtype=np.int64), q)

    @classmethod
    def _trusted(cls, arr, q):
        out = object.__new__(cls)
        out.entries = arr
        out.q = q
        return out

    def copy(self):
        return UnitriMatrix._trusted(self.entries.copy(), self.q)

    def row_update(self, i, a):
        return row_update(self, i, a)

    def col_update(self, i, a):
        return col_update(self, i, a)

    def submatrix(self, m):
        """Top-left ``m`` x ``m`` block."""
        return UnitriMatrix._trusted(self.entries[:m, :m].copy(), self.q)

    def upper_entries(self):
        """Strictly-upper entries read row-major."""
        return self.entries[np.triu_indices(self.n, 1)]


def _wrap(arr, q):
    arr = arr % q
    out = FieldMatrix.__new__(FieldMatrix)
    out.entries = arr
    out.q = q
    if np.all(np.diag(arr) == 1) and not np.tril(arr, -1).any():
        return UnitriMatrix._trusted(arr, q)
    return out


def elementary(n, i, j, q):
    """E_{i,j}: single 1 at (i, j), 1-based."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"({i}, {j}) outside {n}x{n}")
    e = np.zeros((n, n), dtype=np.int64)
    e[i - 1, j - 1] = 1
    return FieldMatrix(e, q)


def generator_matrix(n, i, a, q):
    """I + a E_{i,i+1}."""
    if not 1 <= i <= n - 1:
        raise IndexError(f"clock {i} outside 1..{n - 1}")
    e = np.eye(n, dtype=np.int64)
    e[i - 1, i] = _residue(a, q)
    return UnitriMatrix._trusted(e, q)


def mat_mul(A, B):
    A._check(B)
    return _wrap(A.entries @ B.entries, A.q)


def row_update(X, i, a):
    """(I + a E_{i,i+1}) X: row i += a * row (i+1)."""
    n = X.n
    if not 1 <= i <= n - 1:
        raise IndexError(f"row {i} outside 1..{n - 1}")
    a = _residue(a, X.q)
    out = X.entries.copy()
    if a:
        out[i - 1] = (out[i - 1] + a * out[i]) % X.q
    return UnitriMatrix._trusted(out, X.q)


def col_update(X, i, a):
    """X (I + a E_{i,i+1}): column (i+1) += a * column i."""
    n = X.n
    if not 1 <= i <= n - 1:
        raise IndexError(f"column {i} outside 1..{n - 1}")
    a = _residue(a, X.q)
    out = X.entries.copy()
    if a:
        out[:, i] = (out[:, i] + a * out[:, i - 1]) % X.q
    return UnitriMatrix._trusted(out, X.q)


def format_matrix(X):
    """Row-major decimal digits, rows separated by '/'; comma-separated if q > 10."""
    sep = "," if X.q > 10 else ""
    return "/".join(sep.join(str(int(v)) for v in row) for row in X.entries)


def parse_matrix(text, q):
    rows = text.strip().split("/")
    if q > 10:
        data = [[int(v) for v in r.split(",")] for r in rows]
    else:
        data = [[int(c) for c in r] for r in rows]
    return _wrap(np.array(data, dtype=np.int64), check_modulus(q))


class BitUnitri:
    """Unitriangular matrix over Z_2 with each row packed into an int.

    Bit ``j`` of ``rows[i]`` is entry (i, j), 0-based. Row updates are XORs.
    """

    __slots__ = ("n", "rows")

    def __init__(self, n, rows=None):
        self.n = n
        self.rows = list(rows) if rows is not None else [1 << i for i in range(n)]

    @classmethod
    def from_unitri(cls, X):
        if X.q != 2:
            raise ModulusError("bit packing needs q = 2")
        rows = [int(sum(int(b) << j for j, b in enumerate(r))) for r in X.entries]
        return cls(X.n, rows)

    def to_unitri(self):
        e = np.array([[(r >> j) & 1 for j in range(self.n)] for r in self.rows], dtype=np.int64)
        return UnitriMatrix(e, 2)

    def row_update(self, i, a):
        if not 1 <= i <= self.n - 1:
            raise IndexError(f"row {i} outside 1..{self.n - 1}")
        out = BitUnitri(self.n, self.rows)
        if int(a) % 2:
            out.rows[i - 1] ^= out.rows[i]
        return out

    def col_update(self, i, a):
        if not 1 <= i <= self.n - 1:
            raise IndexError(f"column {i} outside 1..{self.n - 1}")
        out = BitUnitri(self.n, self.rows)
        if int(a) % 2:
            src, dst = i - 1, i
            out.rows = [r ^ (((r >> src) & 1) << dst) for r in out.rows]
        return out

    def __matmul__(self, other):
        # row r of the product is the XOR of rows k of other where bit k of r is set
        rows = []
        for r in self.rows:
            acc, k = 0, 0
            while r:
                if r & 1:
                    acc ^= other.rows[k]
                r >>= 1
                k += 1
            rows.append(acc)
        return BitUnitri(self.n, rows)

    def __eq__(self, other):
        return isinstance(other, BitUnitri) and self.rows == other.rows


@dataclass(frozen=True)
class FieldVector:
    entries: tuple
    modulus: int

    def __post_init__(self):
        check_modulus(self.modulus)
        if any(not 0 <= v < self.modulus for v in self.entries):
            raise ValueError("entries must be residues")

    @classmethod
    def of(cls, values, q):
        return cls(tuple(int(v) % q for v in values), q)

    def __len__(self):
        return len(self.entries)

    def array(self):
        return np.array(self.entries, dtype=np.int64)


class RankBasis:
    """Reduced row echelon basis over Z_q, grown one vector at a time.

    Pivots are the lowest nonzero index of each row; pivot entries are 1 and
    every other row is zero in each pivot column.
    """

    def __init__(self, q, dim):
        self.q = check_modulus(q)
        self.dim = dim
        self.rows = []
        self.pivots = []

    @property
    def rank(self):
        return len(self.rows)

    def copy(self):
        out = RankBasis(self.q, self.dim)
        out.rows = [r.copy() for r in self.rows]
        out.pivots = list(self.pivots)
        return out

    def _coerce(self, v):
        if isinstance(v, FieldVector):
            if v.modulus != self.q:
                raise ModulusError(f"vector mod {v.modulus}, basis mod {self.q}")
            v = v.entries
        arr = np.asarray(v, dtype=np.int64) % self.q
        if arr.shape != (self.dim,):
            raise ValueError(f"vector of length {arr.shape} for dimension {self.dim}")
        return arr

    def reduce(self, v):
        """Residual of ``v`` after eliminating the pivot columns."""
        v = self._coerce(v).copy()
        for row, p in zip(self.rows, self.pivots):
            c = v[p]
            if c:
                v = (v - c * row) % self.q
        return v

    def contains(self, v):
        return not self.reduce(v).any()

    def insert(self, v):
        """Add ``v`` in place; return True iff the rank increased."""
        v = self.reduce(v)
        nz = np.flatnonzero(v)
        if nz.size == 0:
            return False
        p = int(nz[0])
        v = v * inv_mod(int(v[p]), self.q) % self.q
        for k, row in enumerate(self.rows):
            c = row[p]
            if c:
                self.rows[k] = (row - c * v) % self.q
        pos = int(np.searchsorted(self.pivots, p))
        self.rows.insert(pos, v)
        self.pivots.insert(pos, p)
        return True


def rank_insert(basis, v):
    out = basis.copy()
    increased = out.insert(v)
    return out, increased


def encode_digits(digits, q):
    """Lexicographic index of the digit rows along the last axis (most significant first)."""
    digits = np.asarray(digits, dtype=np.int64)
    m = digits.shape[-1]
    weights = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return digits @ weights


def decode_digits(index, q, m):
    index = np.asarray(index, dtype=np.int64)
    out = np.empty(index.shape + (m,), dtype=np.int64)
    rest = index.copy()
    for k in range(m - 1, -1, -1):
        out[..., k] = rest % q
        rest //= q
    return out
