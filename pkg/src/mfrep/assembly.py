"""Direct sums, finite semidirect extensions and the block-shift Baumslag assembly.

The Baumslag group <a, b | a^{a^b} = a^2> is realized by two block matrices:
A is block diagonal with blocks A_i = v_i^{-1} phi(a_i) v_i, i = -j..j, and B
is the block shift, so B^{-i} A B^i plays the role of a_i.  The conjugators
v_i follow a geodesic path from I to u^{-1} in plateaus of width 2 k0 + 1,
where u carries phi(a_{-j}) onto phi(a_{j+1}); the central window is exactly
the chain representation.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chain import GeodesicPath, build_chain, geodesic_path_steps
from .matkernel import (
    BlockUnitary,
    UnitaryMatrix,
    circular_matching_distance,
    conjugation_residual,
    conjugator_from_eigendata,
    direct_sum as direct_sum_matrices,
    ensure_eigendata,
    op_norm,
    parallel_map,
    save_matrix,
)
from .words import (
    GeneratorAssignment,
    Word,
    generator_index,
    indexed_name,
    reduce,
)

logger = logging.getLogger(__name__)

MAX_PRIME = 11
BLOCK_BUDGET = 1 << 26  # block_count * f^2 complex entries


class BudgetError(ValueError):
    pass


def direct_sum(assignments) -> GeneratorAssignment:
    """Generator-wise direct sum of assignments over the same generators."""
    assignments = list(assignments)
    if not assignments:
        raise ValueError("empty direct sum")
    names = assignments[0].names()
    for a in assignments[1:]:
        if set(a.names()) != set(names):
            raise ValueError("assignments have different generator sets")
    return GeneratorAssignment({g: direct_sum_matrices([a[g] for a in assignments])
                                for g in names})


# ---------------------------------------------------------------------------
# G x| F for a finite group F


def _check_group_table(table) -> int:
    t = np.asarray(table, dtype=int)
    m = t.shape[0]
    if t.shape != (m, m) or t.min() < 0 or t.max() >= m:
        raise ValueError("multiplication table must be square with entries in range")
    for row in itertools.chain(t, t.T):
        if sorted(row.tolist()) != list(range(m)):
            raise ValueError("multiplication table is not a Latin square")
    ident = [e for e in range(m) if all(t[e, x] == x and t[x, e] == x for x in range(m))]
    if not ident:
        raise ValueError("multiplication table has no identity")
    for a, b, c in itertools.product(range(m), repeat=3):
        if t[t[a, b], c] != t[a, t[b, c]]:
            raise ValueError("multiplication table is not associative")
    return ident[0]


def semidirect_finite(alpha: GeneratorAssignment, table, action, names=None) -> GeneratorAssignment:
    """Extend ``alpha`` from G to G x| F.

    ``table[h][k]`` is the index of hk in F and ``action[k]`` maps each
    generator g of G to a word for k^{-1} g k.  The result acts on
    C^{|F|} (x) C^n: beta(g) is block diagonal with block h equal to
    alpha(h^{-1} g h), and beta(k) moves block h to block kh.
    """
    e = _check_group_table(table)
    t = np.asarray(table, dtype=int)
    m = t.shape[0]
    if len(action) != m:
        raise ValueError("action must give one substitution per element of F")
    names = names or [f"k{i}" for i in range(m)]
    gens = alpha.names()
    for h in range(m):
        if set(action[h]) != set(gens):
            raise ValueError(f"action of element {h} does not cover the generators")
    n = alpha.dim
    out = {}
    for g in gens:
        blocks = [alpha.evaluate(action[h][g]).entries for h in range(m)]
        out[g] = UnitaryMatrix(scipy.linalg.block_diag(*blocks), check=False)
    for k in range(m):
        if k == e:
            continue
        perm = np.zeros((m, m))
        for h in range(m):
            perm[t[k, h], h] = 1.0
        out[names[k]] = UnitaryMatrix(np.kron(perm, np.eye(n)), check=False)
    return GeneratorAssignment(out)


# ---------------------------------------------------------------------------
# Baumslag assembly


def block_count(k0: int, N: int) -> int:
    return (2 * k0 + 1) * (2 * N + 1)


def check_budget(p: int, k0: int, N: int) -> None:
    if p > MAX_PRIME:
        raise BudgetError(f"p = {p} exceeds the assembly cap p <= {MAX_PRIME}")
    if k0 < 1 or N < 1:
        raise BudgetError("k0 and N must be positive")
    f = (1 << p) - 1
    if block_count(k0, N) * f * f > BLOCK_BUDGET:
        raise BudgetError(f"{block_count(k0, N)} blocks of size {f} exceed the storage budget")


@dataclass
class BaumslagInstance:
    p: int
    k0: int
    N: int
    j: int
    chain: object
    u: UnitaryMatrix
    path: GeodesicPath
    v: dict
    A: BlockUnitary
    B: BlockUnitary
    block_defects: list = field(default_factory=list)
    delta_chain: float = 0.0
    delta_step: float = 0.0
    delta_conj: float = 0.0
    threads: int | None = None

    @property
    def f(self) -> int:
        return (1 << self.p) - 1

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def epsilon_eff(self) -> float:
        return max(self.delta_chain, self.delta_step, self.delta_conj)

    def phi(self, i: int) -> UnitaryMatrix:
        return self.chain.gens[i]

    def position(self, i: int) -> int:
        """Block position of index i in -j..j."""
        if abs(i) > self.j:
            raise IndexError(f"index {i} outside the window |i| <= {self.j}")
        return i + self.j

    def a_matrix(self, i: int) -> BlockUnitary:
        """B^{-i} A B^{i}."""
        return self.A.rotate(i)

    def word_in_AB(self, w: Word) -> BlockUnitary:
        """Evaluate a word in a_i (a_i -> B^{-i} A B^i) or in a, b, block-wise."""
        w = reduce(w)
        out = BlockUnitary.identity(self.f, self.A.block_count)
        for g, e in w.syllables:
            if g == "a":
                base = self.A
            elif g == "b":
                base = self.B
            else:
                i = generator_index(g)
                if abs(i) > self.j:
                    raise IndexError(f"generator {g} outside the window |i| <= {self.j}")
                base = self.a_matrix(i)
            out = out.matmul(base.power(e, self.threads), self.threads)
        return out

    evaluate = word_in_AB

    def compression(self, w: Word) -> np.ndarray:
        """P_0 w(...) P_0 as an f x f matrix."""
        m = self.word_in_AB(w)
        r = self.position(0)
        if m.column_of(r) != r:
            return np.zeros((self.f, self.f), dtype=complex)
        return m.block(r)

    def residual(self):
        """R = Ad_{B^{-1}AB} A - A^2 through generic block products."""
        nxt = self.a_matrix(1)
        lhs = nxt.adjoint().matmul(self.A, self.threads).matmul(nxt, self.threads)
        return lhs - self.A.matmul(self.A, self.threads)

    def interior_defect(self) -> float:
        return max(self.block_defects[:-1], default=0.0)

    def wrap_defect(self) -> float:
        return self.block_defects[-1]

    def total_defect(self) -> float:
        return max(self.block_defects)

    def bound_flags(self) -> dict:
        e = self.epsilon_eff
        return {
            "interior_within_17eps": self.interior_defect() <= 17 * e,
            "wrap_within_3eps": self.wrap_defect() <= 3 * e,
            "total_within_17eps": self.total_defect() <= 17 * e,
        }

    def manifest(self) -> dict:
        return {
            "p": self.p,
            "k0": self.k0,
            "N": self.N,
            "j": self.j,
            "epsilon_eff": self.epsilon_eff,
            "block_defects": list(self.block_defects),
        }

    def save(self, outdir) -> None:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2)
            fh.write("\n")
        phidir = os.path.join(outdir, "phi")
        os.makedirs(phidir, exist_ok=True)
        for i in range(-self.j, self.j + 2):
            save_matrix(os.path.join(phidir, f"gen_{i}.json"), self.phi(i))
        pathdir = os.path.join(outdir, "path")
        os.makedirs(pathdir, exist_ok=True)
        for t in range(-self.N, self.N + 1):
            save_matrix(os.path.join(pathdir, f"u_{t}.json"), self.path.point(t))
        for name, mat in (("A", self.A), ("B", self.B)):
            d = os.path.join(outdir, name)
            os.makedirs(d, exist_ok=True)
            stored = []
            for r, blk in enumerate(mat.blocks):
                if blk is None:
                    stored.append(None)
                    continue
                fname = f"block_{r}.json"
                save_matrix(os.path.join(d, fname), UnitaryMatrix(blk, check=False))
                stored.append(fname)
            structure = {
                "block_dim": mat.block_dim,
                "block_count": mat.block_count,
                "perm": None if mat.perm is None else list(mat.perm),
                "blocks": stored,
            }
            with open(os.path.join(d, "structure.json"), "w", encoding="utf-8") as fh:
                json.dump(structure, fh, indent=2)
                fh.write("\n")


def build_baumslag(p: int, k0: int, N: int, threads: int | None = None,
                   chain=None) -> BaumslagInstance:
    check_budget(p, k0, N)
    m = block_count(k0, N)
    j = (m - 1) // 2
    chain = chain if chain is not None else build_chain(p, j)
    if chain.p != p or chain.j != j:
        raise ValueError("supplied chain does not match (p, j)")
    x, y = chain.gens[-j], chain.gens[j + 1]
    _, matching = circular_matching_distance(x.spectrum(), y.spectrum())
    u = ensure_eigendata(conjugator_from_eigendata(x, y, matching))
    delta_conj = conjugation_residual(u, x, y)
    path = geodesic_path_steps(u, N)
    width = 2 * k0 + 1

    v = {i: path.point((i + j) // width - N) for i in range(-j, j + 1)}

    def block(i):
        t = (i + j) // width - N
        phi = chain.gens[i].entries
        if path.is_identity_at(t):
            return phi
        ve = v[i].entries
        return ve.conj().T @ phi @ ve

    blocks = parallel_map(block, range(-j, j + 1), threads)
    A = BlockUnitary(blocks, chain.f)
    B = BlockUnitary.block_shift(chain.f, m)
    inst = BaumslagInstance(p, k0, N, j, chain, u, path, v, A, B, threads=threads)

    def block_defect(r):
        a = A.blocks[r]
        nxt = A.blocks[(r + 1) % m]
        return op_norm(nxt.conj().T @ a @ nxt - a @ a, fallback=True)

    inst.block_defects = parallel_map(block_defect, range(m), threads)
    inst.delta_chain = max(chain.defects[i] for i in range(-j, j + 1))
    inst.delta_step = path.step_bound()
    inst.delta_conj = delta_conj
    flags = inst.bound_flags()
    if not all(flags.values()):
        logger.warning("measured block defects exceed the certified bounds: %s", flags)
    return inst


def window_words(k0: int) -> list[tuple[str, Word]]:
    """Generators a_i and quotients a_i a_l^{-1} for |i|, |l| <= k0."""
    out = []
    idx = range(-k0, k0 + 1)
    for i in idx:
        out.append((indexed_name(i), Word(((indexed_name(i), 1),))))
    for i in idx:
        for l in idx:
            if i != l:
                w = Word(((indexed_name(i), 1), (indexed_name(l), -1)))
                out.append((str(w), w))
    return out
