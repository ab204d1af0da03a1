#!/usr/bin/env python3
"""Independent reference solve of an SDPA sparse file with cvxpy/Clarabel.

The file encodes  min c'x  s.t.  sum_k x_k F_k - F_0 PSD.  Prints
    offset - (optimal value)
which is the maximized objective of the problem the file was exported from.
Exit code 77 when cvxpy is unavailable.
"""
import sys

try:
    import numpy as np
    import scipy.sparse as sp
    import cvxpy as cp
except ImportError:
    sys.exit(77)


def tokens(path):
    with open(path) as fh:
        for line in fh:
            if line.startswith('"') or line.startswith("*"):
                continue
            for ch in ",{}()":
                line = line.replace(ch, " ")
            yield from line.split()


def read_sdpa(path):
    it = tokens(path)
    m = int(next(it))
    nblock = int(next(it))
    sizes = [abs(int(next(it))) for _ in range(nblock)]
    c = np.array([float(next(it)) for _ in range(m)])
    entries = []
    rest = list(it)
    for i in range(0, len(rest), 5):
        k, b, r, col = (int(t) for t in rest[i:i + 4])
        entries.append((k, b - 1, r - 1, col - 1, float(rest[i + 4])))
    return m, sizes, c, entries


def solve(path, offset):
    # conic dual: max <F0, Y> s.t. <F_k, Y> = c_k, Y PSD; equal to min c'x
    m, sizes, c, entries = read_sdpa(path)
    ys = [cp.Variable((n, n), symmetric=True) for n in sizes]
    offs = np.cumsum([0] + [n * n for n in sizes])
    rows, cols, vals = [], [], []
    f0 = [np.zeros((n, n)) for n in sizes]
    for k, b, r, col, v in entries:
        n = sizes[b]
        if k == 0:
            f0[b][r, col] = f0[b][col, r] = v
            continue
        if r == col:
            rows.append(k - 1)
            cols.append(offs[b] + r * n + col)
            vals.append(v)
        else:
            rows += [k - 1, k - 1]
            cols += [offs[b] + r * n + col, offs[b] + col * n + r]
            vals += [v, v]
    vec = cp.hstack([cp.vec(y, order="C") for y in ys])
    cons = [y >> 0 for y in ys]
    if m:
        a = sp.csr_matrix((vals, (rows, cols)), shape=(m, int(offs[-1])))
        cons.append(a @ vec == c)
    obj = sum(cp.sum(cp.multiply(f, y)) for f, y in zip(f0, ys))
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        print(prob.status)
        sys.exit(2)
    return offset - prob.value


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("usage: sdpa_reference.py FILE [OFFSET]", file=sys.stderr)
        sys.exit(64)
    off = float(sys.argv[2]) if len(sys.argv) > 2 else 0.0
    print("%.10f" % solve(sys.argv[1], off))
