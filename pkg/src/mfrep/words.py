"""Free-group words: parsing, free reduction, evaluation on unitary matrices."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .matkernel import UNITARY_TOL, UnitaryMatrix

_GEN = r"[A-Za-z_][A-Za-z0-9_]*(?:-\d+)?"
_SYLLABLE = re.compile(rf"({_GEN})(?:\^(-?\d+))?")
_INDEXED = re.compile(r"^a(-?\d+)$")


class WordSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownGeneratorError(KeyError):
    pass


@dataclass(frozen=True)
class Word:
    """Sequence of (generator, nonzero exponent) syllables.

    Instances built by :func:`parse_word` and :func:`reduce` are reduced;
    the raw constructor accepts anything so that reduction can be tested.
    """

    syllables: tuple = ()

    def __post_init__(self):
        syl = tuple((str(g), int(e)) for g, e in self.syllables)
        object.__setattr__(self, "syllables", syl)

    def __len__(self):
        return len(self.syllables)

    def __iter__(self):
        return iter(self.syllables)

    def __mul__(self, other: "Word") -> "Word":
        return reduce(Word(self.syllables + other.syllables))

    def __str__(self):
        return " ".join(g if e == 1 else f"{g}^{e}" for g, e in self.syllables)

    def __repr__(self):
        return f"Word({str(self)!r})"

    def inverse(self) -> "Word":
        return Word(tuple((g, -e) for g, e in reversed(self.syllables)))

    def is_empty(self) -> bool:
        return not self.syllables

    def is_reduced(self) -> bool:
        if any(e == 0 for _, e in self.syllables):
            return False
        return all(a[0] != b[0] for a, b in zip(self.syllables, self.syllables[1:]))

    def generators(self) -> set[str]:
        return {g for g, _ in self.syllables}

    def substitute(self, images: Mapping[str, "Word"]) -> "Word":
        """Replace each generator by a word (generators absent from ``images`` stay)."""
        out: list = []
        for g, e in self.syllables:
            img = images.get(g)
            if img is None:
                out.append((g, e))
                continue
            piece = img if e > 0 else img.inverse()
            out.extend(piece.syllables * abs(e))
        return reduce(Word(tuple(out)))


def reduce(w: Word) -> Word:
    """Free reduction: merge equal neighbours, drop zero exponents (stack based)."""
    stack: list[list] = []
    for g, e in w.syllables:
        if e == 0:
            continue
        if stack and stack[-1][0] == g:
            stack[-1][1] += e
            if stack[-1][1] == 0:
                stack.pop()
        else:
            stack.append([g, e])
    return Word(tuple((g, e) for g, e in stack))


def parse_word(text: str) -> Word:
    """Parse ``gen`` / ``gen^e`` syllables separated by whitespace.

    Generator names may carry a trailing ``-digits`` so that indexed names
    such as ``a-3`` are single tokens.
    """
    syl = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _SYLLABLE.match(text, pos)
        if m is None:
            raise WordSyntaxError(f"unexpected character {text[pos]!r}", pos)
        end = m.end()
        if end < n and not text[end].isspace():
            raise WordSyntaxError(f"unexpected character {text[end]!r}", end)
        exp = 1 if m.group(2) is None else int(m.group(2))
        if exp == 0:
            raise WordSyntaxError("exponent 0 is not allowed", m.start(2))
        syl.append((m.group(1), exp))
        pos = end
    return reduce(Word(tuple(syl)))


def generator_index(name: str) -> int:
    m = _INDEXED.match(name)
    if m is None:
        raise ValueError(f"generator {name!r} is not of the form a<integer>")
    return int(m.group(1))


def indexed_name(i: int) -> str:
    return f"a{i}"


def max_k(words: Iterable[Word]) -> int:
    """Largest |i| over generators a<i> occurring in the reduced words (0 if none)."""
    best = 0
    for w in words:
        for g in reduce(w).generators():
            best = max(best, abs(generator_index(g)))
    return best


@dataclass
class LabelledWord:
    label: str
    word: Word
    trivial: bool = False


@dataclass
class Presentation:
    name: str
    generators: list[str]
    relators: list[Word]
    words: list[LabelledWord] = field(default_factory=list)

    def __post_init__(self):
        if len(set(self.generators)) != len(self.generators):
            raise ValueError("duplicate generator names")
        declared = set(self.generators)
        self.relators = [reduce(r) for r in self.relators]
        for r in self.relators:
            missing = r.generators() - declared
            if missing:
                raise ValueError(f"relator {r} uses undeclared generators {sorted(missing)}")
        labels = set()
        for lw in self.words:
            lw.word = reduce(lw.word)
            missing = lw.word.generators() - declared
            if missing:
                raise ValueError(f"word {lw.label!r} uses undeclared generators {sorted(missing)}")
            if lw.word.is_empty() and not lw.trivial:
                raise ValueError(f"word {lw.label!r} is empty but not labelled trivial")
            if lw.label in labels:
                raise ValueError(f"duplicate word label {lw.label!r}")
            labels.add(lw.label)

    @classmethod
    def from_json(cls, obj: dict) -> "Presentation":
        try:
            words = [LabelledWord(str(w["label"]), parse_word(w["word"]), bool(w.get("trivial", False)))
                     for w in obj.get("words", [])]
            return cls(
                name=str(obj["name"]),
                generators=[str(g) for g in obj["generators"]],
                relators=[parse_word(r) for r in obj.get("relators", [])],
                words=words,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed presentation: {exc}") from exc

    def to_json(self) -> dict:
        words = []
        for lw in self.words:
            entry = {"label": lw.label, "word": str(lw.word)}
            if lw.trivial:
                entry["trivial"] = True
            words.append(entry)
        return {
            "name": self.name,
            "generators": list(self.generators),
            "relators": [str(r) for r in self.relators],
            "words": words,
        }

    @classmethod
    def load(cls, path) -> "Presentation":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def chain_relator(i: int) -> Word:
    """``a_{i+1}^{-1} a_i a_{i+1} a_i^{-2}``."""
    a, b = indexed_name(i), indexed_name(i + 1)
    return Word(((b, -1), (a, 1), (b, 1), (a, -2)))


def chain_presentation(j: int) -> Presentation:
    """Generators a_{-j}..a_j with a_{i+1}^{-1} a_i a_{i+1} = a_i^2 for consecutive indices."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    gens = [indexed_name(i) for i in range(-j, j + 1)]
    relators = [chain_relator(i) for i in range(-j, j)]
    words = [LabelledWord(g, Word(((g, 1),))) for g in gens]
    return Presentation(f"H_{j}", gens, relators, words)


def baumslag_relator() -> Word:
    """``a^{a^b} a^{-2}`` expanded with ``x^y = y^{-1} x y``."""
    return parse_word("b^-1 a^-1 b a b^-1 a b a^-2")


class GeneratorAssignment:
    """Map generator name -> UnitaryMatrix, all of one dimension."""

    def __init__(self, mats: Mapping[str, UnitaryMatrix]):
        self.mats = dict(mats)
        dims = {m.dim for m in self.mats.values()}
        if len(dims) > 1:
            raise ValueError(f"generators have different dimensions {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

    def __getitem__(self, name):
        try:
            return self.mats[name]
        except KeyError:
            raise UnknownGeneratorError(name) from None

    def __contains__(self, name):
        return name in self.mats

    def __iter__(self):
        return iter(self.mats)

    def names(self) -> list[str]:
        return list(self.mats)

    def check_unitary(self, tol: float = UNITARY_TOL) -> None:
        for g, m in self.mats.items():
            d = m.unitarity_defect()
            if d > tol:
                raise ValueError(f"generator {g} is not unitary (defect {d:.3e})")

    def evaluate(self, w: Word) -> UnitaryMatrix:
        return evaluate(w, self)

    @classmethod
    def load_dir(cls, directory, generators: Iterable[str], check: bool = True):
        """Read ``<generator>.json`` matrix files from a directory."""
        from .matkernel import load_matrix
        import os

        return cls({g: load_matrix(os.path.join(directory, f"{g}.json"), check=check)
                    for g in generators})


def evaluate(w: Word, asg: GeneratorAssignment) -> UnitaryMatrix:
    """Matrix product of the syllables, inverse powers as conjugate transposes.

    Words over generators that are all tracked diagonals are evaluated on the
    eigenangles so the result stays exactly diagonal.
    """
    for g in w.generators():
        if g not in asg:
            raise UnknownGeneratorError(f"generator {g!r} not in assignment (word {w})")
    if w.is_empty():
        return UnitaryMatrix.identity(asg.dim)
    mats = [asg[g] for g, _ in w.syllables]
    if all(m.is_diagonal for m in mats):
        angles = np.zeros(asg.dim)
        for (_, e), m in zip(w.syllables, mats):
            angles = angles + e * m.angles
        return UnitaryMatrix.diagonal(angles)
    out = None
    for (_, e), m in zip(w.syllables, mats):
        base = m.entries if e > 0 else m.entries.conj().T
        factor = np.linalg.matrix_power(base, abs(e))
        out = factor if out is None else out @ factor
    return UnitaryMatrix(out, check=False)
