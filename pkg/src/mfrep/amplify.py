"""Conjugation amplification u -> Ad(u), identity padding and separation boosting.

Ad(u) acts on n x n matrices by X -> u X u^{-1}.  In the row-major
matrix-unit basis it is kron(u, conj(u)), whose eigenangles are the pairwise
differences alpha_i - alpha_j of the eigenangles of u.  Each application
therefore doubles the widest spectral gap until it wraps past pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matkernel import (
    TWO_PI,
    UnitaryMatrix,
    chord,
    direct_sum,
    ensure_eigendata,
    normalize_angles,
    spectral_diameter,
)

GAMMA_DIM_CAP = 128
#: Tracked diagonal inputs only need the angle list, so they may go further.
GAMMA_DIAGONAL_CAP = 1 << 26
SQRT2 = math.sqrt(2.0)


class GammaCapError(ValueError):
    pass


class BoostBoundError(ArithmeticError):
    """No exponent below k_delta reaches the target separation."""

    def __init__(self, message, k_found):
        super().__init__(message)
        self.k_found = k_found


def gamma(u: UnitaryMatrix) -> UnitaryMatrix:
    n = u.dim
    if u.is_diagonal:
        if n * n > GAMMA_DIAGONAL_CAP:
            raise GammaCapError(f"gamma of a diagonal of size {n} exceeds {GAMMA_DIAGONAL_CAP}")
        a = u.angles
        return UnitaryMatrix.diagonal((a[:, None] - a[None, :]).ravel())
    if n > GAMMA_DIM_CAP:
        raise GammaCapError(f"gamma input dimension {n} exceeds cap {GAMMA_DIM_CAP}")
    e = u.entries
    entries = np.kron(e, e.conj())
    if u.has_eigendata:
        f = u.frame_or_identity()
        a = u.angles
        return UnitaryMatrix(entries, frame=lambda: np.kron(f, f.conj()),
                             angles=(a[:, None] - a[None, :]).ravel(), check=False)
    return UnitaryMatrix(entries, check=False)


def gamma_power(u: UnitaryMatrix, k: int) -> UnitaryMatrix:
    for _ in range(k):
        u = gamma(u)
    return u


def k_delta(delta: float) -> int:
    """floor(log2(pi / delta)) + 1 for 0 < delta <= pi."""
    if not (0.0 < delta <= math.pi):
        raise ValueError(f"delta must lie in (0, pi], got {delta}")
    return math.floor(math.log2(math.pi / delta)) + 1


def pad_identity(u: UnitaryMatrix) -> UnitaryMatrix:
    """u (+) 1."""
    return direct_sum([u, UnitaryMatrix.identity(1)])


def _dedupe_circle(angles: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    a = np.sort(normalize_angles(angles))
    if len(a) == 0:
        return a
    keep = np.concatenate([[True], np.diff(a) > tol])
    a = a[keep]
    if len(a) > 1 and TWO_PI - a[-1] + a[0] <= tol:
        a = a[:-1]
    return a


class AngleLevels:
    """Distinct eigenangles of gamma^k(u) for k = 0, 1, ... built on demand.

    The norm ``||gamma^k(u) - I||`` only depends on the set of angles, so the
    multiplicity-free set is enough and stays small even when the matrix
    dimension n^(2^k) does not.
    """

    def __init__(self, angles, max_size: int = 1 << 22):
        self.levels = [_dedupe_circle(np.asarray(angles, dtype=float))]
        self.max_size = max_size

    def level(self, k: int) -> np.ndarray:
        while len(self.levels) <= k:
            a = self.levels[-1]
            if len(a) * len(a) > self.max_size:
                raise GammaCapError(f"angle set at level {len(self.levels)} too large")
            self.levels.append(_dedupe_circle((a[:, None] - a[None, :]).ravel()))
        return self.levels[k]

    def distance_to_identity(self, k: int) -> float:
        """``||gamma^k(u) - I||``; for k >= 1 this is the diameter at level k - 1."""
        if k == 0:
            return float(chord(self.level(0)).max())
        return spectral_diameter(self.level(k - 1))


@dataclass
class AmplifySchedule:
    delta: float
    k_delta: int
    applied_k: int
    norms: list = field(default_factory=list)


@dataclass
class BoostResult:
    k: int
    schedule: AmplifySchedule
    padded: bool
    base: UnitaryMatrix
    norm: float

    @property
    def v(self) -> UnitaryMatrix:
        """gamma^k of the (possibly padded) input, built on first use."""
        cached = getattr(self, "_v", None)
        if cached is None:
            cached = gamma_power(self.base, self.k)
            self._v = cached
        return cached


def _output_dim_ok(u: UnitaryMatrix, k: int) -> bool:
    n = u.dim
    for _ in range(k):
        if u.is_diagonal:
            if n * n > GAMMA_DIAGONAL_CAP:
                return False
        elif n > GAMMA_DIM_CAP:
            return False
        n *= n
    return True


def boost_separation(u: UnitaryMatrix, delta: float, target: float = SQRT2,
                     strict: bool = True, atol: float = 1e-12) -> BoostResult:
    """Smallest k with ``||gamma^k(u') - I|| >= target`` where u' is u padded by 1.

    Padding happens only when 1 is not already an eigenvalue.  The diameter
    precondition is checked on the padded spectrum (padding can only widen it).
    With ``strict=True`` a minimal k that is not below ``k_delta(delta)``
    raises :class:`BoostBoundError`; ``strict=False`` returns it anyway.
    ``atol`` absorbs the rounding of chords such as 2 sin(pi/4) against sqrt(2).
    """
    kd = k_delta(delta)
    u = ensure_eigendata(u)
    padded = not np.any(chord(u.angles) <= 1e-12)
    base = pad_identity(u) if padded else u
    levels = AngleLevels(base.angles)
    diam = spectral_diameter(levels.level(0))
    if not diam > delta:
        raise ValueError(f"spectral diameter {diam:.6g} does not exceed delta = {delta}")
    norms = []
    k = 0
    while True:
        nrm = levels.distance_to_identity(k)
        norms.append(nrm)
        if nrm >= target - atol:
            break
        if k >= kd:
            raise BoostBoundError(f"no k <= k_delta = {kd} reaches {target}", None)
        k += 1
    if k >= kd and strict:
        raise BoostBoundError(f"smallest boosting exponent is {k}, not below k_delta = {kd}", k)
    if not _output_dim_ok(base, k):
        raise GammaCapError(f"gamma^{k} of a {base.dim}-dimensional matrix exceeds the cap")
    sched = AmplifySchedule(delta, kd, k, norms)
    return BoostResult(k, sched, padded, base, nrm)
