"""Almost representations of the chain groups H_{j+1} with uniform spectra.

Every generator is W_i D_f W_i^H for a unitary frame W_i, f = 2^p - 1, so
all generators share the spectrum of simple f-th roots of unity.  One step
of the construction:

1. V = W_i P W_i^H, where P is the doubling permutation, conjugates the
   current generator x to x^2 exactly.
2. V's eigenvalues (1 plus p-th roots with equal multiplicity) are moved to
   the f-th roots by an optimal circular matching, keeping V's eigenvectors.
   The result S is the next generator and ||S - V|| equals the chordal
   displacement of the matching.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import doubling
from .matkernel import (
    CircleSpectrum,
    UnitaryMatrix,
    _best_cyclic_matching,
    chord,
    circular_matching_distance,
    direct_sum,
    ensure_eigendata,
    op_norm,
    root_angles,
    save_matrix,
)
from .words import GeneratorAssignment, chain_presentation, indexed_name

logger = logging.getLogger(__name__)

ALLOWED_PRIMES = (2, 3, 5, 7, 11, 13)


class ChainCapError(ValueError):
    pass


@dataclass
class SpreadResult:
    matching: np.ndarray  # source index -> index k of the root 2 pi k / f
    displacement: float  # angular
    chordal: float


def spread_spectrum(source, f: int) -> SpreadResult:
    """Optimal matching of ``source`` onto the simple f-th roots of unity."""
    src = source.angles if isinstance(source, CircleSpectrum) else np.asarray(source, float)
    if len(src) != f:
        raise ValueError(f"source has {len(src)} angles, expected {f}")
    ang, matching = _best_cyclic_matching(src, root_angles(f))
    return SpreadResult(matching, ang, float(chord(ang)))


def spread_bound(p: int) -> float:
    """Angular bound 2 pi / p + 2 pi / f on the spreading displacement."""
    f = (1 << p) - 1
    return 2 * math.pi / p + 2 * math.pi / f


def defect_bound(p: int) -> float:
    return 2.0 * float(chord(spread_bound(p)))


def _frame_times_doubling_frame(w, cycles, f):
    """W @ F_P computed cycle by cycle (F_P is block Fourier on each orbit)."""
    out = np.empty((f, f), dtype=complex)
    col = 0
    for c in cycles:
        L = len(c)
        fourier = doubling._fourier_block(L)
        if w is None:
            out[:, col:col + L] = 0.0
            out[c, col:col + L] = fourier
        else:
            out[:, col:col + L] = w[:, c] @ fourier
        col += L
    return out


@dataclass
class ChainRep:
    p: int
    j: int
    gens: dict = field(default_factory=dict)
    defects: dict = field(default_factory=dict)
    spreads: dict = field(default_factory=dict)

    @property
    def f(self) -> int:
        return (1 << self.p) - 1

    @property
    def indices(self) -> list[int]:
        return list(range(-self.j - 1, self.j + 2))

    def exact_conjugator(self, i: int) -> UnitaryMatrix:
        """V_i = W_i P W_i^H with V_i^{-1} gens[i] V_i = gens[i]^2."""
        g = self.gens[i]
        sigma = doubling.doubling_map(self.f)
        if g.frame is None:
            return doubling.doubling_permutation(self.f)
        w = g.frame
        # (W P)[:, x] = W[:, 2x mod f]
        return UnitaryMatrix(w[:, sigma] @ w.conj().T, check=False)

    def assignment(self) -> GeneratorAssignment:
        return GeneratorAssignment({indexed_name(i): self.gens[i] for i in self.indices})

    def max_defect(self) -> float:
        return max(self.defects.values(), default=0.0)

    def manifest(self) -> dict:
        return {
            "p": self.p,
            "f": self.f,
            "j": self.j,
            "defects": {str(i): self.defects[i] for i in sorted(self.defects)},
        }

    def save(self, outdir) -> None:
        os.makedirs(outdir, exist_ok=True)
        for i in self.indices:
            save_matrix(os.path.join(outdir, f"gen_{i}.json"), self.gens[i])
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2)
            fh.write("\n")


def check_prime(p: int) -> None:
    if p not in ALLOWED_PRIMES:
        raise ChainCapError(f"p must be one of {ALLOWED_PRIMES}, got {p}")
    if p == 2:
        logger.warning("p = 2 (f = 3) is accepted as a smoke test only")


def build_chain(p: int, j: int, measure: bool = True) -> ChainRep:
    """Generators a_{-j-1}..a_{j+1} starting from D_f, with measured defects."""
    check_prime(p)
    if j < 0:
        raise ValueError("j must be nonnegative")
    f = (1 << p) - 1
    cycles, _, p_angles = doubling.doubling_eigendata(f)
    spread = spread_spectrum(p_angles, f)
    roots = root_angles(f)
    rep = ChainRep(p, j)
    rep.gens[-j - 1] = doubling.diag_root_matrix(f)
    w = None
    for i in range(-j - 1, j + 1):
        wf = _frame_times_doubling_frame(w, cycles, f)
        w_next = np.empty_like(wf)
        w_next[:, spread.matching] = wf
        rep.gens[i + 1] = UnitaryMatrix.from_eigendata(w_next, roots)
        rep.spreads[i] = spread.chordal
        if measure:
            x = rep.gens[i].entries
            s = rep.gens[i + 1].entries
            rep.defects[i] = op_norm(s.conj().T @ x @ s - x @ x, fallback=True)
            logger.info("p=%d step %d defect %.6g", p, i, rep.defects[i])
        w = w_next
    return rep


# ---------------------------------------------------------------------------
# geodesic path


def branch_angles(angles) -> np.ndarray:
    """Angles mapped to (-pi, pi]; exactly pi stays at +pi."""
    a = np.mod(np.asarray(angles, dtype=float), 2 * math.pi)
    return np.where(a > math.pi, a - 2 * math.pi, a)


@dataclass
class GeodesicPath:
    """u_t = I for t <= 0 and u_t = F diag(e^{-i theta t / k}) F^H for 0 <= t <= k.

    u_k = u^{-1}, so u_{-k} u_k^{-1} = u.
    """

    k: int
    frame: np.ndarray | None
    theta: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.theta)

    def is_identity_at(self, t: int) -> bool:
        return t <= 0 or not np.any(self.theta)

    def point(self, t: int) -> UnitaryMatrix:
        if abs(t) > self.k:
            raise IndexError(f"path index {t} outside [-{self.k}, {self.k}]")
        if t <= 0:
            return UnitaryMatrix.identity(self.dim)
        ang = -self.theta * t / self.k
        if self.frame is None:
            return UnitaryMatrix.diagonal(ang)
        return UnitaryMatrix.from_eigendata(self.frame, ang)

    def points(self) -> list[UnitaryMatrix]:
        return [self.point(t) for t in range(-self.k, self.k + 1)]

    def step_bound(self) -> float:
        """max_t ||u_{t+1} - u_t||, equal to the largest chord of theta / k."""
        if self.dim == 0:
            return 0.0
        return float(chord(self.theta / self.k).max())

    def measured_steps(self) -> list[float]:
        pts = self.points()
        return [op_norm(np.asarray(b.entries) - np.asarray(a.entries), fallback=True)
                for a, b in zip(pts, pts[1:])]


def geodesic_path_steps(u: UnitaryMatrix, k: int) -> GeodesicPath:
    if not u.has_eigendata:
        raise ValueError("geodesic path needs tracked eigendata")
    if k < 1:
        raise ValueError("k must be positive")
    return GeodesicPath(int(k), u.frame, branch_angles(u.angles))


def geodesic_path(u: UnitaryMatrix, epsilon: float) -> GeodesicPath:
    """Path with k = floor(1/epsilon) steps on each side (0 < epsilon <= 1)."""
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    return geodesic_path_steps(u, math.floor(1.0 / epsilon))


# ---------------------------------------------------------------------------
# merging an external summand


@dataclass
class PadResult:
    distance: float
    matching: np.ndarray
    displacement: float


def uniformize_pad(lambdas, n: int) -> PadResult:
    """Match {e^{i lambda}} together with the n-th roots onto the (n + m)-th roots."""
    lam = np.asarray(list(lambdas), dtype=float)
    src = np.concatenate([lam, root_angles(n)])
    if len(src) == 0:
        return PadResult(0.0, np.zeros(0, dtype=int), 0.0)
    ang, matching = _best_cyclic_matching(src, root_angles(len(src)))
    return PadResult(float(chord(ang)), matching, ang)


@dataclass
class PhiReport:
    p: int
    j: int
    dim: int
    defects: dict
    separations: dict
    condition4: dict
    relator_defects: dict


def build_phi(p: int, j: int, psi: GeneratorAssignment | None = None,
              chain: ChainRep | None = None):
    """Chain generators (optionally merged with ``psi``) for H_{j+1} plus a report.

    With ``psi`` of dimension m the result is psi (+) m copies of the chain.
    """
    chain = chain if chain is not None else build_chain(p, j)
    pres = chain_presentation(j + 1)
    f = chain.f
    if psi is None:
        asg = chain.assignment()
        # all tracked spectra coincide, so every pair is conjugate on the nose
        specs = [asg[g].angles for g in pres.generators]
        direct = max(circular_matching_distance(specs[0], s)[0] for s in specs)
        cond4 = {"direct_matching": direct, "pad_displacement": {}, "pairwise_bound": direct}
    else:
        if set(psi.names()) != set(pres.generators):
            raise ValueError(f"psi generators {sorted(psi.names())} do not match "
                             f"{sorted(pres.generators)}")
        m = psi.dim
        psi_t = {g: ensure_eigendata(psi[g]) for g in pres.generators}
        mats = {}
        pad = {}
        for g in pres.generators:
            i = int(g[1:])
            mats[g] = direct_sum([psi_t[g]] + [chain.gens[i]] * m)
            pad[g] = max(uniformize_pad([lam], f).distance for lam in psi_t[g].angles)
        asg = GeneratorAssignment(mats)
        specs = [asg[g].angles for g in pres.generators]
        direct = max(circular_matching_distance(a, b)[0] for a in specs for b in specs)
        worst = max(pad.values())
        cond4 = {"direct_matching": direct, "pad_displacement": pad, "pairwise_bound": 2 * worst}
    separations = {g: asg[g].distance_to_identity() for g in pres.generators}
    relator_defects = {str(r): asg.evaluate(r).distance_to_identity() for r in pres.relators}
    report = PhiReport(p, j, asg.dim, dict(chain.defects), separations, cond4, relator_defects)
    return asg, report
