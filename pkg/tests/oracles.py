"""Independent reference computations used by the tests.

None of these call into the package's numeric code.  Running this file
recomputes the frozen values in ``oracle_values.json``:

    python3 tests/oracles.py
"""

from __future__ import annotations

import itertools
import json
import math
import os
from fractions import Fraction

import mpmath
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
FROZEN_PATH = os.path.join(HERE, "oracle_values.json")


# -- operator norm by characteristic polynomial root bracketing -------------


def _charpoly(g, dps):
    """Coefficients c_0..c_n of det(lambda I - G), highest degree first (Faddeev-LeVerrier)."""
    with mpmath.workdps(dps):
        n = g.rows
        coeffs = [mpmath.mpf(1)]
        m = mpmath.zeros(n, n)
        ident = mpmath.eye(n)
        for k in range(1, n + 1):
            m = g * m + coeffs[-1] * ident
            gm = g * m
            tr = sum(gm[i, i] for i in range(n))
            coeffs.append(-tr / k)
        return [mpmath.re(c) for c in coeffs]


def _polyval(c, x):
    acc = mpmath.mpf(0)
    for a in c:
        acc = acc * x + a
    return acc


def _polyrem(a, b):
    a = list(a)
    while len(a) >= len(b):
        if a[0] == 0:
            a.pop(0)
            continue
        q = a[0] / b[0]
        for i in range(len(b)):
            a[i] -= q * b[i]
        a.pop(0)
    return a


def _sturm(c):
    deriv = [c[i] * (len(c) - 1 - i) for i in range(len(c) - 1)]
    chain = [c, deriv]
    while len(chain[-1]) > 1:
        r = _polyrem(chain[-2], chain[-1])
        while r and abs(r[0]) < mpmath.mpf(10) ** (-40) * max(abs(x) for x in chain[-1]):
            r.pop(0)
        if not r:
            break
        chain.append([-x for x in r])
    return chain


def _sign_changes(chain, x):
    vals = [_polyval(p, x) for p in chain]
    vals = [v for v in vals if v != 0]
    return sum(1 for a, b in zip(vals, vals[1:]) if (a > 0) != (b > 0))


def op_norm_oracle(m, dps: int = 60) -> float:
    """sqrt of the largest root of det(lambda I - M^H M), bracketed with Sturm counts."""
    m = np.asarray(m, dtype=complex)
    with mpmath.workdps(dps):
        mm = mpmath.matrix([[mpmath.mpc(complex(z)) for z in row] for row in m])
        g = mm.H * mm
        c = _charpoly(g, dps)
        chain = _sturm(c)
        hi = mpmath.mpf(sum(abs(complex(z)) ** 2 for z in m.ravel())) + 1
        lo = mpmath.mpf(0)
        # count(x) = number of roots above x
        top = _sign_changes(chain, hi)
        if _sign_changes(chain, lo) == top:
            return 0.0
        for _ in range(200):
            mid = (lo + hi) / 2
            if _sign_changes(chain, mid) == top:
                hi = mid
            else:
                lo = mid
        return float(mpmath.sqrt(hi))


# -- matchings ---------------------------------------------------------------


def chord_scalar(a, b):
    return abs(complex(math.cos(a), math.sin(a)) - complex(math.cos(b), math.sin(b)))


def matching_bruteforce(a, b):
    """Min over permutations of the max chordal displacement."""
    best = math.inf
    for perm in itertools.permutations(range(len(b))):
        best = min(best, max((chord_scalar(x, b[k]) for x, k in zip(a, perm)), default=0.0))
    return best


def matching_bottleneck_graph(a, b):
    """Bottleneck matching by thresholding and bipartite perfect matching (Kuhn)."""
    n = len(a)
    cost = [[chord_scalar(x, y) for y in b] for x in a]
    values = sorted(set(v for row in cost for v in row))

    def perfect(th):
        match_to = [-1] * n

        def augment(i, seen):
            for k in range(n):
                if cost[i][k] <= th and not seen[k]:
                    seen[k] = True
                    if match_to[k] < 0 or augment(match_to[k], seen):
                        match_to[k] = i
                        return True
            return False

        return all(augment(i, [False] * n) for i in range(n))

    lo, hi = 0, len(values) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if perfect(values[mid]):
            hi = mid
        else:
            lo = mid + 1
    return values[lo]


def diameter_bruteforce(angles):
    return max((chord_scalar(x, y) for x in angles for y in angles), default=0.0)


# -- doubling map ------------------------------------------------------------


def orbits_bruteforce(n):
    remaining = set(range(n))
    orbits = []
    while remaining:
        x = min(remaining)
        orb = []
        while x in remaining:
            remaining.remove(x)
            orb.append(x)
            x = (2 * x) % n
        orbits.append(orb)
    return orbits


def census_bruteforce(n):
    counts = {}
    for o in orbits_bruteforce(n):
        counts[len(o)] = counts.get(len(o), 0) + 1
    return sorted(counts.items())


def histogram_exact(n, bins):
    """Bin the eigenangles q/L (in turns) with exact rationals."""
    counts = [0] * bins
    for o in orbits_bruteforce(n):
        L = len(o)
        for q in range(L):
            t = Fraction(q, L)
            counts[int(t * bins)] += 1
    return counts


# -- frozen values -----------------------------------------------------------


def chain_defects_svd(p, j):
    """Chain defects recomputed with LAPACK SVD (2-norm) from the package's generators."""
    from mfrep.chain import build_chain

    rep = build_chain(p, j, measure=False)
    out = {}
    for i in range(-j - 1, j + 1):
        x = rep.gens[i].entries
        s = rep.gens[i + 1].entries
        out[str(i)] = float(np.linalg.norm(s.conj().T @ x @ s - x @ x, 2))
    return out


def spread_displacement_oracle(p):
    """Bottleneck distance from the doubling spectrum to the f-th roots (graph method)."""
    f = (1 << p) - 1
    src = []
    for o in orbits_bruteforce(f):
        L = len(o)
        src += [2 * math.pi * q / L for q in range(L)]
    dst = [2 * math.pi * k / f for k in range(f)]
    return matching_bottleneck_graph(src, dst)


def freeze():
    rng = np.random.default_rng(20240601)
    opnorm_cases = []
    for dim in (1, 2, 3, 5, 8):
        m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        opnorm_cases.append({"re": m.real.tolist(), "im": m.imag.tolist(),
                             "norm": op_norm_oracle(m)})
    values = {
        "op_norm_random": opnorm_cases,
        "diameter_D7": diameter_bruteforce([2 * math.pi * k / 7 for k in range(7)]),
        "matching_cube_roots_vs_ones": matching_bruteforce(
            [0.0, 2 * math.pi / 3, -2 * math.pi / 3], [0.0, 0.0, 0.0]),
        "census": {str(n): census_bruteforce(n) for n in (3, 7, 15, 31, 63, 127, 255, 1001)},
        "histogram_15_4": histogram_exact(15, 4),
        "histogram_7_3": histogram_exact(7, 3),
        "spread_chordal": {str(p): spread_displacement_oracle(p) for p in (3, 5)},
        "chain_defects": {str(p): chain_defects_svd(p, 0) for p in (3, 5, 7)},
        "k_delta": {repr(d): int(mpmath.floor(mpmath.log(mpmath.pi / mpmath.mpf(d), 2))) + 1
                    for d in (math.pi, math.sqrt(2), 1.0, 0.5, 0.19, 0.1)},
    }
    with open(FROZEN_PATH, "w", encoding="utf-8") as fh:
        json.dump(values, fh, indent=1)
        fh.write("\n")
    return values


def load_frozen():
    with open(FROZEN_PATH, encoding="utf-8") as fh:
        return json.load(fh)


if __name__ == "__main__":
    v = freeze()
    print(json.dumps({k: v[k] for k in v if k != "op_norm_random"}, indent=1))
