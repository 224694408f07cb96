"""Dense and block-structured unitary matrices, operator norms, circle spectra.

Every unitary built by this package is either a conjugated diagonal or a
permutation with known cycle structure, so eigendata (an eigenvector frame
plus eigenangles) is carried alongside the entries instead of being
recomputed.  A frame of ``None`` means "diagonal in the standard basis".
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

#: Above this total dimension block-structured matrices are never densified.
DENSE_LIMIT = 2048

UNITARY_TOL = 1e-10


class OpNormConvergenceError(ArithmeticError):
    """Power iteration hit its iteration cap before reaching the tolerance."""

    def __init__(self, message, rayleigh_quotient, iterations):
        super().__init__(message)
        self.rayleigh_quotient = rayleigh_quotient
        self.iterations = iterations


class MissingEigendataError(ValueError):
    pass


class DenseLimitError(MemoryError):
    pass


# ---------------------------------------------------------------------------
# small helpers


def chord(theta):
    """Chordal length ``|e^{i theta} - 1| = 2 sin(|theta|/2)`` for angles in [-2pi, 2pi]."""
    return 2.0 * np.abs(np.sin(np.asarray(theta) / 2.0))


def normalize_angles(angles) -> np.ndarray:
    a = np.mod(np.asarray(angles, dtype=float), TWO_PI)
    # np.mod can round tiny negatives up to exactly 2pi
    a[a >= TWO_PI] -= TWO_PI
    return a


def angular_distance(a, b):
    """Circular distance in [0, pi] between angle arrays (broadcasting)."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def root_angles(n: int) -> np.ndarray:
    """Angles ``2 pi k / n`` of the n-th roots of unity, k = 0..n-1."""
    return TWO_PI * np.arange(n) / n


def default_threads() -> int:
    env = os.environ.get("MFREP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer MFREP_THREADS=%r", env)
    return 1


def parallel_map(fn: Callable, items: Iterable, threads: int | None = None) -> list:
    """Ordered map; results are merged in input order whatever the worker count."""
    items = list(items)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _resolve(value):
    return value() if callable(value) else value


# ---------------------------------------------------------------------------
# operator norm


def _fixed_perturbation(n: int) -> np.ndarray:
    rng = np.random.default_rng(0x6D66)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _power_top_eigenvalue(gram, start, tol, max_iter):
    """Largest eigenvalue of a PSD matrix by power iteration.

    Stops once the eigen-residual ``||G x - rq x||`` is below ``tol * rq``.
    A Rayleigh-quotient step test alone is fooled by clusters of nearly
    equal top eigenvalues, where the quotient creeps up slowly long after
    it appears to have settled.  Returns ``(rq, iterations)``.
    """
    x = start / np.linalg.norm(start)
    res_hist: list[float] = []
    rq = 0.0
    for it in range(max_iter):
        z = gram @ x
        rq = float(np.vdot(x, z).real)
        nz = float(np.linalg.norm(z))
        if nz == 0.0 or rq <= 0.0:
            return max(rq, 0.0), it
        res = float(np.linalg.norm(z - rq * x))
        res_hist.append(res)
        if res <= tol * rq:
            return rq, it
        # bail out early when the residual decay over the second half of the
        # run cannot reach tol in time; the residual is not monotone early on
        if it >= 1000 and it % 500 == 0:
            half = it // 2
            rate = (res / res_hist[half]) ** (1.0 / (it - half)) if res_hist[half] > 0.0 else 1.0
            needed = math.log(tol * rq / res) / math.log(rate) if rate < 1.0 else math.inf
            if it + needed > max_iter:
                raise OpNormConvergenceError(
                    f"power iteration stalled (residual rate {rate:.12f}); "
                    f"last Rayleigh quotient {rq!r}",
                    rq,
                    it,
                )
        x = z / nz
    raise OpNormConvergenceError(
        f"power iteration did not converge in {max_iter} iterations; "
        f"last Rayleigh quotient {rq!r}",
        rq,
        max_iter,
    )


def op_norm(m, tol: float = 1e-8, max_iter: int = 100_000, fallback: bool = False) -> float:
    """Largest singular value of ``m``.

    Power iteration on ``m^H m`` from the normalized all-ones vector.  If the
    iterate is trapped in an invariant subspace (detected when the start is an
    exact eigenvector or the Rayleigh quotient lies below the mean eigenvalue
    ``||m||_F^2 / n``, which the top eigenvalue can never do) a fixed
    pseudo-random start is also run and the larger value kept.

    With ``fallback=True`` a stalled iteration is finished by LAPACK
    (top eigenvalue of the Gram matrix) instead of raising.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError("op_norm expects a 2-d array")
    if m.size == 0:
        return 0.0
    if not np.all(np.isfinite(m)):
        raise ValueError("op_norm requires finite entries")
    m = m.astype(complex, copy=False)
    n = m.shape[1]
    fro2 = float(np.vdot(m, m).real)
    if fro2 == 0.0:
        return 0.0
    gram = m.conj().T @ m
    # keep the Hermitian part only; removes rounding asymmetry
    gram = 0.5 * (gram + gram.conj().T)
    try:
        rq, iters = _power_top_eigenvalue(gram, np.ones(n, dtype=complex), tol, max_iter)
        if iters <= 1 or rq < fro2 / n * (1.0 - 1e-12):
            rq2, _ = _power_top_eigenvalue(gram, _fixed_perturbation(n), tol, max_iter)
            rq = max(rq, rq2)
    except OpNormConvergenceError:
        if not fallback:
            raise
        logger.debug("op_norm: falling back to LAPACK for n=%d", n)
        rq = float(scipy.linalg.eigvalsh(gram, subset_by_index=[n - 1, n - 1])[0])
    return math.sqrt(max(rq, 0.0))


def _minus_identity(a: np.ndarray) -> np.ndarray:
    d = np.array(a, dtype=complex, copy=True)
    d[np.diag_indices_from(d)] -= 1.0
    return d


# ---------------------------------------------------------------------------
# circle spectra


class CircleSpectrum:
    """Multiset of eigenangles in [0, 2pi)."""

    __slots__ = ("angles",)

    def __init__(self, angles):
        a = normalize_angles(np.atleast_1d(np.asarray(angles, dtype=float)).ravel())
        a.setflags(write=False)
        self.angles = a

    @classmethod
    def roots(cls, n: int) -> "CircleSpectrum":
        return cls(root_angles(n))

    def __len__(self):
        return len(self.angles)

    def __repr__(self):
        return f"CircleSpectrum(n={len(self)})"

    def sorted(self) -> np.ndarray:
        return np.sort(self.angles, kind="stable")

    def multiplicities(self, tol: float = 1e-12) -> list[tuple[float, int]]:
        """Group angles closer than ``tol`` (circularly) into (angle, count) pairs."""
        s = self.sorted()
        groups: list[list] = []
        for x in s:
            if groups and x - groups[-1][0] <= tol:
                groups[-1][1] += 1
            else:
                groups.append([x, 1])
        if len(groups) > 1 and TWO_PI - groups[-1][0] + groups[0][0] <= tol:
            groups[0][1] += groups.pop()[1]
        return [(float(a), c) for a, c in groups]

    def same_multiset(self, other: "CircleSpectrum", tol: float = 1e-12) -> bool:
        if len(self) != len(other):
            return False
        dist, _ = _best_cyclic_matching(self.angles, other.angles)
        return dist <= tol

    def diameter(self) -> float:
        return spectral_diameter(self)


def _angles_of(s) -> np.ndarray:
    if isinstance(s, CircleSpectrum):
        return s.angles
    return normalize_angles(np.atleast_1d(np.asarray(s, dtype=float)))


def spectral_diameter(s) -> float:
    """Largest chordal distance ``|e^{ia} - e^{ib}|`` between two points of the spectrum."""
    a = np.sort(_angles_of(s))
    n = len(a)
    if n == 0:
        raise ValueError("spectral_diameter of an empty spectrum")
    if n == 1:
        return 0.0
    # farthest partner of each point sits next to its antipode
    ext = np.concatenate([a - TWO_PI, a, a + TWO_PI])
    target = a + math.pi
    pos = np.searchsorted(ext, target)
    best = 0.0
    for off in (-1, 0):
        cand = ext[np.clip(pos + off, 0, len(ext) - 1)]
        best = max(best, float(chord(angular_distance(a, cand)).max()))
    return best


def _best_cyclic_matching(a, b):
    """Bottleneck matching between equal-size angle multisets.

    Optimal matchings on the circle are cyclic shifts of the sorted orders, so
    all n shifts are scanned.  Returns ``(max angular displacement, matching)``
    with ``a[i]`` matched to ``b[matching[i]]``; ties go to the smallest shift.
    """
    a = _angles_of(a)
    b = _angles_of(b)
    n = len(a)
    if n != len(b):
        raise ValueError(f"spectra have different sizes ({n} vs {len(b)})")
    if n == 0:
        return 0.0, np.zeros(0, dtype=int)
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    sa, sb = a[ia], b[ib]
    sb2 = np.concatenate([sb, sb])
    base = np.arange(n)
    chunk = max(1, 4_000_000 // n)
    best_val, best_shift = math.inf, 0
    for start in range(0, n, chunk):
        shifts = np.arange(start, min(n, start + chunk))
        worst = angular_distance(sa[None, :], sb2[base[None, :] + shifts[:, None]]).max(axis=1)
        k = int(np.argmin(worst))
        if worst[k] < best_val:
            best_val, best_shift = float(worst[k]), int(shifts[k])
    matching = np.empty(n, dtype=int)
    matching[ia] = ib[(base + best_shift) % n]
    return best_val, matching


def circular_matching_distance(a, b) -> tuple[float, np.ndarray]:
    """Min over bijections of the max chordal displacement, with the optimal bijection."""
    ang, matching = _best_cyclic_matching(a, b)
    return float(chord(ang)), matching


# ---------------------------------------------------------------------------
# unitary matrices


class UnitaryMatrix:
    """Square unitary matrix with optional tracked eigendata.

    ``entries`` and ``frame`` may be given lazily as zero-argument callables;
    they are materialized on first access.  When ``entries`` is omitted it is
    rebuilt from the eigendata.
    """

    __slots__ = ("_entries", "_frame", "angles", "dim", "_diagonal")

    def __init__(self, entries=None, *, frame=None, angles=None, dim=None,
                 diagonal: bool = False, check: bool = True):
        if angles is not None:
            angles = normalize_angles(np.asarray(angles, dtype=float).ravel())
            angles.setflags(write=False)
        if isinstance(entries, np.ndarray) or (entries is not None and not callable(entries)):
            entries = np.array(entries, dtype=complex)
            if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
                raise ValueError(f"unitary matrix must be square, got shape {entries.shape}")
            entries.setflags(write=False)
            dim = entries.shape[0]
        elif angles is not None:
            dim = len(angles)
        if dim is None:
            raise ValueError("cannot infer dimension: give entries, angles or dim")
        if entries is None and angles is None:
            raise ValueError("need entries or eigendata")
        if angles is not None and len(angles) != dim:
            raise ValueError("eigenangle count does not match dimension")
        self._entries = entries
        self._frame = frame
        self.angles = angles
        self.dim = int(dim)
        self._diagonal = bool(diagonal or (angles is not None and frame is None))
        if check:
            defect = self.unitarity_defect()
            if defect > UNITARY_TOL:
                raise ValueError(f"matrix is not unitary: ||U^H U - I|| = {defect:.3e}")
            if self.has_eigendata and not self._diagonal and not callable(self._entries) \
                    and self._entries is not None:
                res = self.eigendata_residual()
                if res > UNITARY_TOL:
                    raise ValueError(f"eigendata inconsistent with entries (residual {res:.3e})")

    # -- constructors ------------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "UnitaryMatrix":
        return cls.diagonal(np.zeros(n))

    @classmethod
    def diagonal(cls, angles) -> "UnitaryMatrix":
        angles = normalize_angles(angles)
        return cls(lambda: np.diag(np.exp(1j * angles)), angles=angles, check=False)

    @classmethod
    def from_eigendata(cls, frame, angles, check: bool = False) -> "UnitaryMatrix":
        return cls(None, frame=frame, angles=angles, check=check)

    # -- storage -----------------------------------------------------------
    @property
    def entries(self) -> np.ndarray:
        e = self._entries
        if e is None:
            e = self._entries_from_eigendata()
        elif callable(e):
            e = np.asarray(e(), dtype=complex)
        else:
            return e
        e.setflags(write=False)
        self._entries = e
        return e

    @property
    def frame(self) -> np.ndarray | None:
        """Eigenvector frame; ``None`` for matrices diagonal in the standard basis."""
        f = self._frame
        if callable(f):
            f = np.asarray(f(), dtype=complex)
            f.setflags(write=False)
            self._frame = f
        return f

    def frame_or_identity(self) -> np.ndarray:
        f = self.frame
        return np.eye(self.dim, dtype=complex) if f is None else f

    @property
    def has_eigendata(self) -> bool:
        return self.angles is not None

    @property
    def is_diagonal(self) -> bool:
        return self._diagonal and self.angles is not None

    def _entries_from_eigendata(self):
        if self.angles is None:
            raise MissingEigendataError("no entries and no eigendata")
        ph = np.exp(1j * self.angles)
        f = self.frame
        if f is None:
            return np.diag(ph)
        return (f * ph[None, :]) @ f.conj().T

    def __array__(self, dtype=None, copy=None):
        e = self.entries
        return e.astype(dtype) if dtype is not None else e

    def __repr__(self):
        tag = "tracked" if self.has_eigendata else "untracked"
        return f"UnitaryMatrix(dim={self.dim}, {tag})"

    # -- algebra -----------------------------------------------------------
    def adjoint(self) -> "UnitaryMatrix":
        src = self

        def build():
            return src.entries.conj().T.copy()

        if self.has_eigendata:
            return UnitaryMatrix(build, frame=self._frame, angles=-self.angles,
                                 diagonal=self._diagonal, check=False)
        return UnitaryMatrix(build, dim=self.dim, check=False)

    inverse = adjoint

    def __matmul__(self, other: "UnitaryMatrix") -> "UnitaryMatrix":
        if not isinstance(other, UnitaryMatrix):
            return NotImplemented
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch {self.dim} vs {other.dim}")
        if self.is_diagonal and other.is_diagonal:
            return UnitaryMatrix.diagonal(self.angles + other.angles)
        return UnitaryMatrix(self.entries @ other.entries, check=False)

    def power(self, e: int) -> "UnitaryMatrix":
        e = int(e)
        if e == 0:
            return UnitaryMatrix.identity(self.dim)
        if e < 0:
            return self.adjoint().power(-e)
        if e == 1:
            return self
        src = self

        def build():
            return np.linalg.matrix_power(src.entries, e)

        if self.has_eigendata:
            return UnitaryMatrix(build, frame=self._frame, angles=self.angles * e,
                                 diagonal=self._diagonal, check=False)
        return UnitaryMatrix(build, dim=self.dim, check=False)

    def conjugate_by(self, v: "UnitaryMatrix") -> "UnitaryMatrix":
        """``v^{-1} self v`` with eigendata transported (frame ``v^H F``)."""
        vh = v.entries.conj().T
        entries = vh @ self.entries @ v.entries
        if self.has_eigendata:
            f = self.frame
            frame = vh.copy() if f is None else vh @ f
            return UnitaryMatrix(entries, frame=frame, angles=self.angles, check=False)
        return UnitaryMatrix(entries, check=False)

    # -- measurements ------------------------------------------------------
    def spectrum(self) -> CircleSpectrum:
        if self.angles is None:
            raise MissingEigendataError("matrix carries no eigendata")
        return CircleSpectrum(self.angles)

    def unitarity_defect(self) -> float:
        """``||U^H U - I||``; cheap Frobenius bound first, op norm if that is inconclusive."""
        if self._entries is None or callable(self._entries):
            if self.is_diagonal:
                return 0.0
        e = self.entries
        d = _minus_identity(e.conj().T @ e)
        fro = float(np.linalg.norm(d))
        if fro <= UNITARY_TOL:
            return fro
        return op_norm(d, fallback=True)

    def eigendata_residual(self) -> float:
        """``||U - F diag(e^{i angles}) F^H||``."""
        if self.angles is None:
            raise MissingEigendataError("matrix carries no eigendata")
        diff = np.asarray(self.entries) - self._entries_from_eigendata()
        fro = float(np.linalg.norm(diff))
        if fro <= UNITARY_TOL:
            return fro
        return op_norm(diff, fallback=True)

    def distance_to_identity(self, fallback: bool = True) -> float:
        """``||U - I||``: exact spectral formula when eigendata is tracked."""
        if self.angles is not None:
            if len(self.angles) == 0:
                return 0.0
            return float(chord(self.angles).max())
        return op_norm(_minus_identity(self.entries), fallback=fallback)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        e = self.entries
        return {"dim": self.dim, "entries": np.stack([e.real, e.imag], axis=-1).tolist()}

    @classmethod
    def from_json(cls, obj: dict, check: bool = True) -> "UnitaryMatrix":
        try:
            dim = int(obj["dim"])
            arr = np.asarray(obj["entries"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed matrix object: {exc}") from exc
        if arr.shape != (dim, dim, 2):
            raise ValueError(f"entries must have shape ({dim}, {dim}, 2), got {arr.shape}")
        return cls(arr[..., 0] + 1j * arr[..., 1], check=check)


def direct_sum(mats: Sequence[UnitaryMatrix]) -> UnitaryMatrix:
    """Block-diagonal sum; eigendata is combined when every summand tracks it."""
    mats = list(mats)
    if not mats:
        raise ValueError("empty direct sum")
    if all(m.is_diagonal for m in mats):
        return UnitaryMatrix.diagonal(np.concatenate([m.angles for m in mats]))
    entries = scipy.linalg.block_diag(*[m.entries for m in mats])
    if all(m.has_eigendata for m in mats):
        frame = scipy.linalg.block_diag(*[m.frame_or_identity() for m in mats])
        angles = np.concatenate([m.angles for m in mats])
        return UnitaryMatrix(entries, frame=frame, angles=angles, check=False)
    return UnitaryMatrix(entries, check=False)


def ensure_eigendata(u: UnitaryMatrix) -> UnitaryMatrix:
    """Return ``u`` with eigendata, computing it by a complex Schur form if absent.

    For a unitary (hence normal) matrix the Schur factor is diagonal up to
    rounding, so the Schur vectors form an eigenvector frame.
    """
    if u.has_eigendata:
        return u
    t, z = scipy.linalg.schur(np.asarray(u.entries), output="complex")
    angles = np.angle(np.diag(t))
    out = UnitaryMatrix(u.entries, frame=z, angles=angles, check=False)
    res = out.eigendata_residual()
    if res > UNITARY_TOL:
        raise ArithmeticError(f"Schur eigendata residual {res:.3e} exceeds tolerance")
    return out


def conjugator_from_eigendata(x: UnitaryMatrix, y: UnitaryMatrix, matching) -> UnitaryMatrix:
    """Unitary ``u`` with ``u^{-1} x u`` close to ``y``.

    ``matching[i] = k`` pairs eigenvector ``i`` of ``x`` with eigenvector ``k``
    of ``y``; ``u`` carries the first onto the second, so the residual
    ``||u^{-1} x u - y||`` equals the chordal displacement of the matching.
    """
    if not (x.has_eigendata and y.has_eigendata):
        raise MissingEigendataError("both matrices need tracked eigendata")
    matching = np.asarray(matching, dtype=int)
    n = x.dim
    if y.dim != n or matching.shape != (n,) or sorted(matching.tolist()) != list(range(n)):
        raise ValueError("matching must be a bijection between the two eigenbases")
    cols = np.empty(n, dtype=int)
    cols[matching] = np.arange(n)
    fx = x.frame_or_identity()
    fy = y.frame_or_identity()
    return UnitaryMatrix(fx[:, cols] @ fy.conj().T, check=False)


def conjugation_residual(u: UnitaryMatrix, x: UnitaryMatrix, y: UnitaryMatrix,
                         fallback: bool = True) -> float:
    """``||u^{-1} x u - y||``."""
    ue = u.entries
    d = ue.conj().T @ x.entries @ ue - y.entries
    return op_norm(d, fallback=fallback)


# ---------------------------------------------------------------------------
# block-monomial matrices


class BlockMatrix:
    """Square block-monomial matrix with equal square blocks.

    Row block ``r`` holds its only nonzero block ``blocks[r]`` in column block
    ``perm[r]``.  ``perm=None`` means block diagonal; a block of ``None`` is an
    exact identity block, so permutation bookkeeping never touches floats.
    """

    __slots__ = ("blocks", "block_dim", "perm")

    def __init__(self, blocks: Sequence, block_dim: int, perm=None):
        self.blocks = tuple(None if b is None else np.asarray(b) for b in blocks)
        self.block_dim = int(block_dim)
        for b in self.blocks:
            if b is not None and b.shape != (self.block_dim, self.block_dim):
                raise ValueError(f"block of shape {b.shape}, expected {self.block_dim}")
        if perm is not None:
            perm = tuple(int(c) for c in perm)
            if sorted(perm) != list(range(len(self.blocks))):
                raise ValueError("perm is not a permutation of the block indices")
            if perm == tuple(range(len(perm))):
                perm = None
        self.perm = perm

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return self.block_dim * self.block_count

    @property
    def is_block_diagonal(self) -> bool:
        return self.perm is None

    def column_of(self, r: int) -> int:
        return r if self.perm is None else self.perm[r]

    def block(self, r: int) -> np.ndarray:
        b = self.blocks[r]
        return np.eye(self.block_dim, dtype=complex) if b is None else b

    def __repr__(self):
        kind = "diagonal" if self.perm is None else "monomial"
        return f"{type(self).__name__}({self.block_count}x{self.block_dim}, {kind})"

    def _product_blocks(self, other: "BlockMatrix", threads=None):
        if self.block_dim != other.block_dim or self.block_count != other.block_count:
            raise ValueError("block structures differ")
        cols = [self.column_of(r) for r in range(self.block_count)]

        def one(r):
            x, y = self.blocks[r], other.blocks[cols[r]]
            if x is None:
                return y
            if y is None:
                return x
            return x @ y

        blocks = parallel_map(one, range(self.block_count), threads)
        perm = [other.column_of(c) for c in cols]
        return blocks, perm

    def matmul(self, other: "BlockMatrix", threads=None) -> "BlockMatrix":
        blocks, perm = self._product_blocks(other, threads)
        cls = BlockUnitary if isinstance(self, BlockUnitary) and isinstance(other, BlockUnitary) \
            else BlockMatrix
        return cls(blocks, self.block_dim, perm)

    def __matmul__(self, other):
        if not isinstance(other, BlockMatrix):
            return NotImplemented
        return self.matmul(other)

    def __sub__(self, other: "BlockMatrix") -> "BlockMatrix":
        if self.perm != other.perm or self.block_dim != other.block_dim \
                or self.block_count != other.block_count:
            raise ValueError("difference only defined for matching block patterns")
        blocks = [self.block(r) - other.block(r) for r in range(self.block_count)]
        return BlockMatrix(blocks, self.block_dim, self.perm)

    def adjoint(self) -> "BlockMatrix":
        m = self.block_count
        blocks: list = [None] * m
        perm = [0] * m
        for r in range(m):
            c = self.column_of(r)
            b = self.blocks[r]
            blocks[c] = None if b is None else b.conj().T
            perm[c] = r
        return type(self)(blocks, self.block_dim, perm)

    def to_dense(self, force: bool = False) -> np.ndarray:
        if self.dim > DENSE_LIMIT and not force:
            raise DenseLimitError(
                f"refusing to densify a {self.dim}-dimensional block matrix (limit {DENSE_LIMIT})")
        n = self.block_dim
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for r in range(self.block_count):
            c = self.column_of(r)
            out[r * n:(r + 1) * n, c * n:(c + 1) * n] = self.block(r)
        return out

    def block_norms(self, threads=None, fallback: bool = True) -> list[float]:
        """Operator norms of the blocks (``None`` blocks count as identity)."""

        def one(b):
            return 1.0 if b is None else op_norm(b, fallback=fallback)

        return parallel_map(one, self.blocks, threads)

    def op_norm(self, threads=None, fallback: bool = True) -> float:
        """For block-monomial matrices the norm is the largest block norm."""
        return max(self.block_norms(threads, fallback), default=0.0)


class BlockUnitary(BlockMatrix):
    """Block-monomial matrix whose blocks are unitary."""

    @classmethod
    def identity(cls, block_dim: int, block_count: int) -> "BlockUnitary":
        return cls([None] * block_count, block_dim)

    @classmethod
    def block_shift(cls, block_dim: int, block_count: int) -> "BlockUnitary":
        """Identity blocks on the block sub-diagonal (row r, column r-1 mod m).

        With ``B`` this shift, ``B^{-1} M B`` moves block ``r+1`` of a block
        diagonal ``M`` into position ``r``.
        """
        m = block_count
        return cls([None] * m, block_dim, [(r - 1) % m for r in range(m)])

    def inverse(self) -> "BlockUnitary":
        return self.adjoint()

    def power(self, e: int, threads=None) -> "BlockUnitary":
        e = int(e)
        if e < 0:
            return self.adjoint().power(-e, threads)
        result = BlockUnitary.identity(self.block_dim, self.block_count)
        base = self
        while e:
            if e & 1:
                result = result.matmul(base, threads)
            e >>= 1
            if e:
                base = base.matmul(base, threads)
        return result

    def rotate(self, s: int) -> "BlockUnitary":
        """``B^{-s} M B^{s}`` for the block shift ``B``, by pure index bookkeeping."""
        m = self.block_count
        s %= m
        blocks = [self.blocks[(r + s) % m] for r in range(m)]
        if self.perm is None:
            return BlockUnitary(blocks, self.block_dim)
        perm = [(self.perm[(r + s) % m] - s) % m for r in range(m)]
        return BlockUnitary(blocks, self.block_dim, perm)

    def distance_to_identity(self, threads=None, fallback: bool = True) -> float:
        """``||M - I||``.

        Block diagonal: largest block distance.  Otherwise ``M - I`` splits
        along the cycles of the block permutation and each cycle is measured
        densely (refused above the dense limit).
        """
        n = self.block_dim
        if self.perm is None:
            def one(b):
                return 0.0 if b is None else op_norm(_minus_identity(b), fallback=fallback)
            return max(parallel_map(one, self.blocks, threads), default=0.0)
        seen = [False] * self.block_count
        cycles = []
        for start in range(self.block_count):
            if seen[start]:
                continue
            cyc = []
            r = start
            while not seen[r]:
                seen[r] = True
                cyc.append(r)
                r = self.perm[r]
            cycles.append(cyc)

        def cycle_norm(cyc):
            if len(cyc) * n > DENSE_LIMIT:
                raise DenseLimitError(f"cycle of {len(cyc)} blocks exceeds dense limit")
            pos = {r: k for k, r in enumerate(cyc)}
            sub = np.zeros((len(cyc) * n, len(cyc) * n), dtype=complex)
            for r in cyc:
                k, c = pos[r], pos[self.perm[r]]
                sub[k * n:(k + 1) * n, c * n:(c + 1) * n] = self.block(r)
            return op_norm(_minus_identity(sub), fallback=fallback)

        return max(parallel_map(cycle_norm, cycles, threads))


# ---------------------------------------------------------------------------
# matrix files


def save_matrix(path, u: UnitaryMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(u.to_json(), fh)


def load_matrix(path, check: bool = True) -> UnitaryMatrix:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return UnitaryMatrix.from_json(obj, check=check)
