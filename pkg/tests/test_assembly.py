import json

import numpy as np
import pytest

from conftest import random_unitary
from mfrep.assembly import (
    BudgetError,
    block_count,
    build_baumslag,
    direct_sum,
    semidirect_finite,
    window_words,
)
from mfrep.certify import certify
from mfrep.doubling import diag_root_matrix, doubling_permutation
from mfrep.matkernel import UnitaryMatrix, op_norm
from mfrep.words import GeneratorAssignment, Presentation, Word, chain_relator, parse_word


def random_window_word(rng, k0, length=6):
    syl = [(f"a{int(rng.integers(-k0, k0 + 1))}", int(rng.choice([-2, -1, 1, 2])))
           for _ in range(length)]
    return Word(tuple(syl))


@pytest.fixture(scope="module")
def inst311():
    return build_baumslag(3, 1, 1)


class TestDirectSum:
    def test_single(self, rng):
        a = GeneratorAssignment({"x": UnitaryMatrix(random_unitary(rng, 3))})
        s = direct_sum([a])
        assert np.array_equal(s["x"].entries, a["x"].entries)

    def test_defect_is_max(self, rng):
        pres = Presentation("BS", ["a", "b"], [parse_word("b^-1 a b a^-2")])
        exact = GeneratorAssignment({"a": diag_root_matrix(7), "b": doubling_permutation(7)})
        noisy = []
        for scale in (0.01, 0.05):
            h = rng.standard_normal((3, 3)) * scale
            pert = UnitaryMatrix(np.linalg.qr(np.eye(3) + h)[0])
            noisy.append(GeneratorAssignment({"a": pert, "b": UnitaryMatrix(random_unitary(rng, 3))}))
        defects = [certify(pres, x, 1.0).relator_defects[0][1] for x in [exact] + noisy]
        assert defects[0] <= 1e-12
        summed = certify(pres, direct_sum(noisy), 1.0).relator_defects[0][1]
        assert summed == pytest.approx(max(defects[1:]), abs=1e-10)
        exact2 = certify(pres, direct_sum([exact, exact]), 1.0).relator_defects[0][1]
        assert exact2 <= 1e-12

    def test_mismatch(self):
        with pytest.raises(ValueError):
            direct_sum([GeneratorAssignment({"x": UnitaryMatrix.identity(1)}),
                        GeneratorAssignment({"y": UnitaryMatrix.identity(1)})])


class TestSemidirect:
    def test_trivial_group(self, rng):
        a = GeneratorAssignment({"g": UnitaryMatrix(random_unitary(rng, 2))})
        b = semidirect_finite(a, [[0]], [{"g": parse_word("g")}])
        assert np.allclose(b["g"].entries, a["g"].entries) and b.names() == ["g"]

    def test_inverting_z2(self):
        theta = 0.7
        a = GeneratorAssignment({"g": UnitaryMatrix.diagonal([theta])})
        action = [{"g": parse_word("g")}, {"g": parse_word("g^-1")}]
        b = semidirect_finite(a, [[0, 1], [1, 0]], action, names=["e", "flip"])
        assert np.allclose(b["g"].entries, np.diag(np.exp([1j * theta, -1j * theta])))
        assert np.array_equal(b["flip"].entries, [[0, 1], [1, 0]])
        lhs = b.evaluate(parse_word("flip^-1 g flip")).entries
        assert np.abs(lhs - b.evaluate(parse_word("g^-1")).entries).max() < 1e-15

    def test_nontrivial_elements_far_from_identity(self, rng):
        table = [[(h + k) % 3 for k in range(3)] for h in range(3)]
        a = GeneratorAssignment({"g": UnitaryMatrix(random_unitary(rng, 2))})
        action = [{"g": parse_word("g")}] * 3
        b = semidirect_finite(a, table, action)
        for k in ("k1", "k2"):
            assert np.all(np.diag(b[k].entries) == 0)
            assert op_norm(b[k].entries - np.eye(6)) >= 1.0
        assert np.array_equal(b["k1"].entries @ b["k1"].entries, b["k2"].entries)

    def test_bad_tables(self):
        a = GeneratorAssignment({"g": UnitaryMatrix.identity(1)})
        with pytest.raises(ValueError):
            semidirect_finite(a, [[0, 0], [1, 1]], [{"g": Word()}] * 2)
        with pytest.raises(ValueError):
            semidirect_finite(a, [[1, 0], [0, 1]] + [[0, 1]], [{"g": Word()}] * 2)
        with pytest.raises(ValueError):
            semidirect_finite(a, [[0, 1], [1, 0]], [{"g": Word()}])


class TestBaumslag:
    def test_sizes_and_identity_window(self, inst311):
        inst = inst311
        assert inst.j == 4 and block_count(1, 1) == 9 and inst.dim == 63
        for i in (-1, 0, 1):
            assert np.array_equal(inst.v[i].entries, np.eye(7))
            assert np.array_equal(inst.A.block(inst.position(i)), inst.phi(i).entries)

    def test_b_order_exact(self, inst311):
        bm = inst311.B.power(2 * inst311.j + 1)
        assert bm.perm is None and all(b is None for b in bm.blocks)
        assert np.array_equal(bm.to_dense(), np.eye(63))
        assert inst311.B.power(3).perm is not None

    def test_rotation_is_exact(self, inst311):
        inst = inst311
        lhs = inst.B.inverse() @ inst.A @ inst.B
        rot = inst.A.rotate(1)
        assert lhs.perm is None
        for r in range(9):
            assert np.array_equal(lhs.block(r), rot.block(r))
            assert np.array_equal(rot.block(r), inst.A.block((r + 1) % 9))

    def test_residual_block_diagonal_and_bounds(self, inst311):
        inst = inst311
        r = inst.residual()
        assert r.perm is None
        dense = r.to_dense()
        mask = np.kron(np.eye(9), np.ones((7, 7))) == 0
        assert np.all(dense[mask] == 0)
        norms = [op_norm(b) for b in r.blocks]
        assert norms == pytest.approx(inst.block_defects, rel=1e-8)
        assert inst.total_defect() <= 17 * inst.epsilon_eff
        assert inst.wrap_defect() <= 3 * inst.epsilon_eff
        assert all(inst.bound_flags().values())

    def test_conjugator(self, inst311):
        inst = inst311
        x, y = inst.phi(-inst.j), inst.phi(inst.j + 1)
        ue = inst.u.entries
        assert op_norm(ue.conj().T @ x.entries @ ue - y.entries) == pytest.approx(
            inst.delta_conj, abs=1e-12)
        assert inst.delta_conj < 1e-12
        end = inst.v[-inst.j].entries @ inst.v[inst.j].entries.conj().T
        assert op_norm(end - ue) < 1e-9

    def test_dense_cross_check(self, inst311, rng):
        inst = inst311
        a, b = inst.A.to_dense(), inst.B.to_dense()
        for _ in range(5):
            w = random_window_word(rng, 2, 5)
            dense = np.eye(63, dtype=complex)
            for g, e in w.syllables:
                i = int(g[1:])
                bi = np.linalg.matrix_power(b, i) if i >= 0 else np.linalg.matrix_power(b.T, -i)
                ai = np.linalg.inv(bi) @ a @ bi
                dense = dense @ np.linalg.matrix_power(ai if e > 0 else ai.conj().T, abs(e))
            assert np.abs(inst.word_in_AB(w).to_dense() - dense).max() < 1e-10
        rel = parse_word("b^-1 a^-1 b a b^-1 a b a^-2")
        dense_rel = (b.T @ a.conj().T @ b @ a @ b.T @ a @ b @ a.conj().T @ a.conj().T)
        assert np.abs(inst.word_in_AB(rel).to_dense() - dense_rel).max() < 1e-10
        assert inst.word_in_AB(rel).distance_to_identity() == pytest.approx(
            inst.total_defect(), rel=1e-8)

    def test_words(self, inst311):
        inst = inst311
        ident = inst.word_in_AB(Word())
        assert ident.perm is None and all(x is None for x in ident.blocks)
        a0 = inst.word_in_AB(parse_word("a0"))
        assert all(np.array_equal(a0.block(r), inst.A.block(r)) for r in range(9))
        rel = inst.word_in_AB(chain_relator(0))
        assert rel.distance_to_identity() <= 17 * inst.epsilon_eff
        with pytest.raises(IndexError):
            inst.word_in_AB(parse_word("a5"))

    def test_compression_and_separation(self, inst311, rng):
        inst = inst311
        phi = GeneratorAssignment({f"a{i}": inst.phi(i) for i in (-1, 0, 1)})
        for _ in range(20):
            w = random_window_word(rng, 1)
            comp = inst.compression(w)
            assert np.abs(comp - phi.evaluate(w).entries).max() <= 1e-9
            full = inst.word_in_AB(w).distance_to_identity()
            assert full >= phi.evaluate(w).distance_to_identity() - 1e-8
        for label, w in window_words(1)[:3]:
            assert inst.word_in_AB(w).distance_to_identity() >= np.sqrt(2)

    def test_budget(self):
        with pytest.raises(BudgetError):
            build_baumslag(13, 1, 1)
        with pytest.raises(BudgetError):
            build_baumslag(11, 5, 5)
        with pytest.raises(BudgetError):
            build_baumslag(3, 0, 1)

    def test_defects_decrease_in_p(self, inst311):
        others = [build_baumslag(p, 1, 1) for p in (5, 7)]
        chain_d = [inst311.delta_chain] + [x.delta_chain for x in others]
        assert chain_d[0] > chain_d[1] > chain_d[2]
        wraps = [inst311.wrap_defect()] + [x.wrap_defect() for x in others]
        assert wraps[0] > wraps[1] > wraps[2]

    def test_threads_do_not_change_results(self):
        a = build_baumslag(3, 1, 1, threads=1)
        b = build_baumslag(3, 1, 1, threads=4)
        assert a.block_defects == b.block_defects
        assert all(np.array_equal(x, y) for x, y in zip(a.A.blocks, b.A.blocks))

    def test_save(self, inst311, tmp_path):
        inst311.save(tmp_path)
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert list(m) == ["p", "k0", "N", "j", "epsilon_eff", "block_defects"]
        assert len(m["block_defects"]) == 9
        s = json.loads((tmp_path / "B" / "structure.json").read_text())
        assert s["blocks"] == [None] * 9 and s["perm"] == [8, 0, 1, 2, 3, 4, 5, 6, 7]
        assert len(list((tmp_path / "A").glob("block_*.json"))) == 9
