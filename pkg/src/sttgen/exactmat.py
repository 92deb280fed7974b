"""Exact integer/rational matrix helpers.

Everything here works on plain Python ints and fractions.Fraction so that
nullspaces, inverses and lattice bases come out exact. Matrices are lists
of row lists. Sizes are tiny (3x3 and friends), so clarity beats speed.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd

Vec = tuple[int, ...]
Mat = list[list[int]]


def det3(m: Mat) -> int:
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def adjugate3(m: Mat) -> Mat:
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    return [
        [e * i - f * h, c * h - b * i, b * f - c * e],
        [f * g - d * i, a * i - c * g, c * d - a * f],
        [d * h - e * g, b * g - a * h, a * e - b * d],
    ]


def inverse3(m: Mat) -> list[list[Fraction]]:
    d = det3(m)
    if d == 0:
        raise ZeroDivisionError("singular 3x3 matrix")
    adj = adjugate3(m)
    return [[Fraction(x, d) for x in row] for row in adj]


def matmul(a, b):
    """Matrix product; entries may be int or Fraction."""
    cols = len(b[0])
    inner = len(b)
    return [
        [sum(a[r][k] * b[k][c] for k in range(inner)) for c in range(cols)]
        for r in range(len(a))
    ]


def matvec(a, v):
    return tuple(sum(row[i] * v[i] for i in range(len(v))) for row in a)


def vec_gcd(v) -> int:
    g = 0
    for x in v:
        g = gcd(g, abs(x))
    return g


def primitive(v: Vec) -> Vec:
    """Divide out the gcd; zero vectors stay zero."""
    g = vec_gcd(v)
    if g == 0:
        return tuple(v)
    return tuple(x // g for x in v)


def rational_nullspace(m) -> list[tuple[Fraction, ...]]:
    """Kernel basis of a rational matrix via Gauss elimination.

    Returns one basis vector per free column (unit in the free slot,
    back-substituted pivot entries).
    """
    rows = [[Fraction(x) for x in row] for row in m]
    ncols = len(m[0]) if m else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pr = None
        for i in range(r, len(rows)):
            if rows[i][c] != 0:
                pr = i
                break
        if pr is None:
            continue
        rows[r], rows[pr] = rows[pr], rows[r]
        pv = rows[r][c]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for pr, pc in enumerate(pivots):
            v[pc] = -rows[pr][fc]
        basis.append(tuple(v))
    return basis


def rational_rank(m) -> int:
    if not m:
        return 0
    return len(m[0]) - len(rational_nullspace(m))


def integer_kernel_basis(m) -> list[Vec]:
    """Basis of the saturated integer kernel lattice {x in Z^n : m·x = 0}.

    Unimodular row reduction is applied to m^T while the same operations
    accumulate in an identity matrix U; the U rows aligned with zero rows
    of the reduced m^T are exactly a basis of ker(m) ∩ Z^n. Entries of m
    may be int or Fraction (denominators are cleared first).
    """
    if not m:
        return []
    n = len(m[0])
    rows = []
    for row in m:
        den = 1
        for x in row:
            d = getattr(x, "denominator", 1)
            den = den * d // gcd(den, d)
        rows.append([int(x * den) for x in row])
    g = [[rows[r][c] for r in range(len(rows))] for c in range(n)]  # m^T
    u = [[int(i == j) for j in range(n)] for i in range(n)]
    done = 0
    for c in range(len(rows)):
        if done == n:
            break
        while True:
            nz = [i for i in range(done, n) if g[i][c] != 0]
            if not nz:
                break
            i = min(nz, key=lambda k: abs(g[k][c]))
            g[done], g[i] = g[i], g[done]
            u[done], u[i] = u[i], u[done]
            if g[done][c] < 0:
                g[done] = [-x for x in g[done]]
                u[done] = [-x for x in u[done]]
            clean = True
            for k in range(done + 1, n):
                q = g[k][c] // g[done][c]
                if q:
                    g[k] = [a - q * b for a, b in zip(g[k], g[done])]
                    u[k] = [a - q * b for a, b in zip(u[k], u[done])]
                if g[k][c] != 0:
                    clean = False
            if clean:
                break
        if done < n and g[done][c] != 0:
            done += 1
    return [tuple(u[i]) for i in range(done, n)]


def hnf_rows(vectors: list[Vec], col_order: tuple[int, ...] | None = None) -> list[Vec]:
    """Row-style Hermite normal form of the lattice spanned by `vectors`.

    Columns are pivoted in `col_order` (default left to right). Pivots are
    positive, entries below a pivot are zero, entries above are reduced to
    [0, pivot). The result is a canonical basis for the row lattice.
    """
    if not vectors:
        return []
    n = len(vectors[0])
    order = col_order if col_order is not None else tuple(range(n))
    rows = [list(v) for v in vectors]
    done = 0
    for c in order:
        if done == len(rows):
            break
        # euclidean reduction of column c over the rows not yet pivoted
        while True:
            nz = [i for i in range(done, len(rows)) if rows[i][c] != 0]
            if not nz:
                break
            i = min(nz, key=lambda k: abs(rows[k][c]))
            rows[done], rows[i] = rows[i], rows[done]
            if rows[done][c] < 0:
                rows[done] = [-x for x in rows[done]]
            clean = True
            for k in range(done + 1, len(rows)):
                q = rows[k][c] // rows[done][c]
                if q:
                    rows[k] = [x - q * y for x, y in zip(rows[k], rows[done])]
                if rows[k][c] != 0:
                    clean = False
            if clean:
                break
        if done < len(rows) and rows[done][c] != 0:
            for k in range(done):
                q = rows[k][c] // rows[done][c]
                if q:
                    rows[k] = [x - q * y for x, y in zip(rows[k], rows[done])]
            done += 1
    out = [tuple(r) for r in rows[:done] if any(r)]
    return out
