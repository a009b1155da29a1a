"""Independent reference implementations the package code is checked against."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def edit_scripts(m: int, n: int) -> tuple[tuple[tuple[str, int, int], ...], ...]:
    """Every edit script turning a length-m sequence into a length-n one.

    A script is a tuple of ("sub", i, j), ("del", i, -1), ("ins", -1, j) steps.
    """
    if m == 0 and n == 0:
        return ((),)
    out = []
    if m and n:
        out += [s + (("sub", m - 1, n - 1),) for s in edit_scripts(m - 1, n - 1)]
    if m:
        out += [s + (("del", m - 1, -1),) for s in edit_scripts(m - 1, n)]
    if n:
        out += [s + (("ins", -1, n - 1),) for s in edit_scripts(m, n - 1)]
    return tuple(out)


def brute_force_cost(source, target, cost, indel):
    """Minimum over all edit scripts; ``cost(a, b)`` is used only when a != b."""
    best = float("inf")
    for script in edit_scripts(len(source), len(target)):
        total = 0.0
        for op, i, j in script:
            if op == "sub":
                a, b = source[i], target[j]
                total += 0.0 if a == b else cost(a, b)
            else:
                total += indel
        best = min(best, total)
    return best


def brute_force_costs(m: int, n: int, alphabet: int, C: np.ndarray, indel: float) -> np.ndarray:
    """Vectorized brute force over every (source, target) pair of the given lengths.

    Returns an (alphabet**m, alphabet**n) array indexed by the pairs in
    ``itertools.product(range(alphabet), repeat=...)`` order. Identical phones
    substitute at zero cost regardless of the diagonal of ``C``.
    """
    C = C.copy()
    np.fill_diagonal(C, 0.0)
    S = np.array(list(itertools.product(range(alphabet), repeat=m)), dtype=np.intp).reshape(alphabet**m, m)
    T = np.array(list(itertools.product(range(alphabet), repeat=n)), dtype=np.intp).reshape(alphabet**n, n)
    sub = [C[S[:, i][:, None], T[:, j][None, :]] for i in range(m) for j in range(n)]
    best = np.full((len(S), len(T)), np.inf)
    for script in edit_scripts(m, n):
        total = np.zeros((len(S), len(T)))
        for op, i, j in script:
            total += sub[i * n + j] if op == "sub" else indel
        np.minimum(best, total, out=best)
    return best


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    sa, sb = a.sum(), b.sum()
    cov = n * (a * b).sum() - sa * sb
    va = n * (a * a).sum() - sa * sa
    vb = n * (b * b).sum() - sb * sb
    if va <= 0 or vb <= 0:
        return 0.0
    return float(cov / np.sqrt(va * vb))
