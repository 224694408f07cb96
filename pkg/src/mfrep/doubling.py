"""Root-of-unity diagonals, cyclic shifts and the doubling permutation x -> 2x mod n.

The permutation matrix P sends basis vector e_x to e_{2x mod n}, hence
P^{-1} D_n P = D_n^2.  Its eigendata comes from the cycle decomposition: a
cycle (x_0, ..., x_{L-1}) with x_{m+1} = 2 x_m contributes the Fourier vectors
sum_m e^{-2 pi i q m / L} e_{x_m} / sqrt(L) with eigenvalues e^{2 pi i q / L}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .matkernel import TWO_PI, UnitaryMatrix, parallel_map, root_angles

#: Above this size cycle censuses use number theory instead of orbit walks.
ENUMERATION_LIMIT = 1 << 20


def _require_odd(n: int) -> int:
    n = int(n)
    if n < 1 or n % 2 == 0:
        raise ValueError(f"n must be a positive odd integer, got {n}")
    return n


def diag_root_matrix(n: int) -> UnitaryMatrix:
    """D_n = diag(e^{2 pi i k / n}), k = 0..n-1."""
    if n < 1:
        raise ValueError("n must be positive")
    return UnitaryMatrix.diagonal(root_angles(n))


def _fourier_block(L: int) -> np.ndarray:
    m = np.arange(L)
    return np.exp(-2j * math.pi * np.outer(m, m) / L) / math.sqrt(L)


def shift_matrix(n: int) -> UnitaryMatrix:
    """T_n with T[r, r+1 mod n] = 1, eigendata in the Fourier basis."""
    if n < 1:
        raise ValueError("n must be positive")
    t = np.zeros((n, n), dtype=complex)
    t[np.arange(n), (np.arange(n) + 1) % n] = 1.0
    # T v = lambda v for v_m = lambda^m, lambda = e^{2 pi i q / n}
    frame = lambda: np.conj(_fourier_block(n))  # noqa: E731
    return UnitaryMatrix(t, frame=frame, angles=root_angles(n), check=False)


def doubling_map(n: int) -> np.ndarray:
    n = _require_odd(n)
    return (2 * np.arange(n)) % n


def doubling_cycles(n: int) -> list[np.ndarray]:
    """Orbits of x -> 2x mod n, each starting at its smallest element."""
    n = _require_odd(n)
    seen = np.zeros(n, dtype=bool)
    cycles = []
    for start in range(n):
        if seen[start]:
            continue
        orbit = [start]
        seen[start] = True
        x = (2 * start) % n
        while x != start:
            orbit.append(x)
            seen[x] = True
            x = (2 * x) % n
        cycles.append(np.array(orbit, dtype=np.int64))
    return cycles


def _factorize(n: int) -> dict[int, int]:
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def multiplicative_order(a: int, n: int) -> int:
    """Order of a modulo n (gcd(a, n) = 1 required)."""
    if n == 1:
        return 1
    if math.gcd(a, n) != 1:
        raise ValueError("a and n must be coprime")
    phi = 1
    for q, e in _factorize(n).items():
        phi *= (q - 1) * q ** (e - 1)
    order = phi
    for q in _factorize(phi):
        while order % q == 0 and pow(a, order // q, n) == 1:
            order //= q
    return order


def _divisors(factors: dict[int, int]) -> list[tuple[int, dict[int, int]]]:
    divs = [(1, {})]
    for q, e in factors.items():
        divs = [(d * q ** k, {**f, q: k} if k else f) for d, f in divs for k in range(e + 1)]
    return divs


def cycle_structure(n: int, method: str = "auto") -> list[tuple[int, int]]:
    """Census of cycle lengths of x -> 2x mod n as sorted (length, count) pairs.

    ``method="orbits"`` walks the orbits; ``method="number_theory"`` groups x
    by d = n / gcd(x, n): there are phi(d) such x, each on an orbit of length
    ord_d(2).
    """
    n = _require_odd(n)
    if method == "auto":
        method = "orbits" if n <= ENUMERATION_LIMIT else "number_theory"
    counts: dict[int, int] = {}
    if method == "orbits":
        for c in doubling_cycles(n):
            counts[len(c)] = counts.get(len(c), 0) + 1
    elif method == "number_theory":
        for d, f in _divisors(_factorize(n)):
            phi = 1
            for q, e in f.items():
                phi *= (q - 1) * q ** (e - 1)
            L = multiplicative_order(2, d)
            counts[L] = counts.get(L, 0) + phi // L
    else:
        raise ValueError(f"unknown method {method!r}")
    return sorted(counts.items())


def format_census(census) -> str:
    return ",".join(f"({L},{c})" for L, c in census)


def doubling_eigendata(n: int):
    """(frame, angles) of the doubling permutation, ordered cycle by cycle."""
    cycles = doubling_cycles(n)
    angles = np.concatenate([TWO_PI * np.arange(len(c)) / len(c) for c in cycles])

    def frame():
        f = np.zeros((n, n), dtype=complex)
        col = 0
        for c in cycles:
            L = len(c)
            f[c, col:col + L] = _fourier_block(L)
            col += L
        return f

    return cycles, frame, angles


def doubling_permutation(n: int) -> UnitaryMatrix:
    """Permutation matrix with P e_x = e_{2x mod n}, eigendata from its cycles."""
    n = _require_odd(n)
    sigma = doubling_map(n)

    def entries():
        p = np.zeros((n, n), dtype=complex)
        p[sigma, np.arange(n)] = 1.0
        return p

    _, frame, angles = doubling_eigendata(n)
    return UnitaryMatrix(entries, frame=frame, angles=angles, check=False)


def conjugation_identity_error(n: int) -> float:
    """Entrywise error of P^{-1} D_n P against D_n^2 without dense products.

    The permutation is read off the materialized matrix P (column x holds its
    single 1 in row sigma(x)), so P^{-1} D P = diag(d[sigma(x)]).  Off-diagonal
    entries of both sides vanish identically; the diagonal is compared with
    the squared entries of D.
    """
    n = _require_odd(n)
    p = doubling_permutation(n).entries
    sigma = np.argmax(np.abs(p), axis=0)
    if not np.array_equal(np.sort(sigma), np.arange(n)) or np.count_nonzero(p) != n:
        raise AssertionError("doubling matrix is not a permutation matrix")
    d = np.diag(diag_root_matrix(n).entries)
    return float(np.abs(d[sigma] - d * d).max())


@dataclass
class DoublingSpec:
    """Modulus f = 2^p - 1 for a prime p together with its doubling permutation."""

    p: int

    def __post_init__(self):
        if self.p < 2 or any(self.p % q == 0 for q in range(2, int(math.isqrt(self.p)) + 1)):
            raise ValueError(f"p must be prime, got {self.p}")

    @property
    def f(self) -> int:
        return (1 << self.p) - 1

    def expected_census(self) -> list[tuple[int, int]]:
        return [(1, 1), (self.p, ((1 << self.p) - 2) // self.p)]

    def permutation(self) -> UnitaryMatrix:
        return doubling_permutation(self.f)


@dataclass(frozen=True)
class HistogramBin:
    start: float
    end: float
    count: int
    fraction: float


def spectrum_histogram(n: int, bins: int) -> list[HistogramBin]:
    """Eigenvalue counts of the doubling permutation over ``bins`` equal arcs [start, end).

    The angle 2 pi q / L falls in bin floor(q * bins / L), so binning is exact
    integer arithmetic; a cycle of length L puts ceil((b+1)L/bins) - ceil(bL/bins)
    eigenvalues into bin b.
    """
    n = _require_odd(n)
    if bins < 1:
        raise ValueError("bins must be positive")
    b = np.arange(bins + 1, dtype=object)
    counts = np.zeros(bins, dtype=object)
    for L, c in cycle_structure(n):
        edges = np.array([-((-int(k) * L) // bins) for k in b], dtype=object)
        counts += c * (edges[1:] - edges[:-1])
    return [HistogramBin(TWO_PI * k / bins, TWO_PI * (k + 1) / bins, int(counts[k]),
                         int(counts[k]) / n) for k in range(bins)]


def write_histogram_csv(path, n: int, hist: list[HistogramBin]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "bin_start_angle", "bin_end_angle", "count", "fraction"])
        for h in hist:
            w.writerow([n, repr(h.start), repr(h.end), h.count, repr(h.fraction)])


def density_scan(ns, bins: int, threads: int | None = None) -> dict[int, list[HistogramBin]]:
    """Histograms for several odd n, merged in ascending n order."""
    ns = sorted(set(int(n) for n in ns))
    hists = parallel_map(lambda n: spectrum_histogram(n, bins), ns, threads)
    return dict(zip(ns, hists))
