"""Finite-presentation certification: relator defects below epsilon, words separated from I."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .amplify import SQRT2, AngleLevels, BoostBoundError, gamma_power, k_delta, pad_identity
from .matkernel import ensure_eigendata, parallel_map, spectral_diameter
from .words import GeneratorAssignment, Presentation, Word


class EvaluationError(RuntimeError):
    def __init__(self, word: Word, cause: Exception):
        super().__init__(f"evaluating {word}: {cause}")
        self.word = word


@dataclass
class CertReport:
    presentation: str
    epsilon: float
    separation_threshold: float
    relator_defects: list = field(default_factory=list)  # (relator, norm)
    separations: list = field(default_factory=list)  # (label, norm)
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return decide(self.relator_defects, self.separations, self.epsilon,
                      self.separation_threshold)

    def to_json(self) -> dict:
        return {
            "presentation": self.presentation,
            "epsilon": self.epsilon,
            "separation_threshold": self.separation_threshold,
            "relator_defects": [{"relator": r, "norm": n} for r, n in self.relator_defects],
            "separations": [{"label": lab, "norm": n} for lab, n in self.separations],
            "pass": self.passed,
            "params": self.params,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, obj: dict) -> "CertReport":
        return cls(
            obj["presentation"],
            obj["epsilon"],
            obj["separation_threshold"],
            [(d["relator"], d["norm"]) for d in obj["relator_defects"]],
            [(d["label"], d["norm"]) for d in obj["separations"]],
            obj.get("params", {}),
        )


def decide(relator_defects, separations, epsilon, threshold) -> bool:
    """Exact comparisons: every defect < epsilon and every separation >= threshold."""
    return all(n < epsilon for _, n in relator_defects) and \
        all(n >= threshold for _, n in separations)


def recompute_pass(obj: dict) -> bool:
    """Pass verdict re-derived from a report's JSON alone."""
    return decide([(d["relator"], d["norm"]) for d in obj["relator_defects"]],
                  [(d["label"], d["norm"]) for d in obj["separations"]],
                  obj["epsilon"], obj["separation_threshold"])


def _distance(asg, w: Word) -> float:
    try:
        return float(asg.evaluate(w).distance_to_identity())
    except Exception as exc:  # attach the offending word
        raise EvaluationError(w, exc) from exc


def certify(pres: Presentation, asg, epsilon: float, separation_threshold: float = 1.0,
            params: dict | None = None, threads: int | None = None,
            extra_relators=()) -> CertReport:
    """Measure every relator and every listed word.

    ``asg`` is anything with ``evaluate(word)`` returning an object with
    ``distance_to_identity()``: a GeneratorAssignment or a block instance.
    Words labelled trivial are reported with the relators.
    """
    relators = [(str(r), r) for r in pres.relators]
    relators += [(str(r), r) for r in extra_relators]
    relators += [(lw.label, lw.word) for lw in pres.words if lw.trivial]
    words = sorted(((lw.label, lw.word) for lw in pres.words if not lw.trivial),
                   key=lambda t: t[0])
    rel_norms = parallel_map(lambda t: _distance(asg, t[1]), relators, threads)
    sep_norms = parallel_map(lambda t: _distance(asg, t[1]), words, threads)
    return CertReport(
        pres.name,
        float(epsilon),
        float(separation_threshold),
        [(name, n) for (name, _), n in zip(relators, rel_norms)],
        [(label, n) for (label, _), n in zip(words, sep_norms)],
        dict(params or {}),
    )


def boost_and_recertify(pres: Presentation, asg: GeneratorAssignment, epsilon: float,
                        delta: float, separation_threshold: float = 1.0,
                        target: float = SQRT2, atol: float = 1e-12, strict: bool = True):
    """Pad every generator by 1, amplify all of them by the same gamma^k, re-certify.

    k is the smallest exponent for which every listed word reaches ``target``;
    it is found on eigenangles (the word evaluated on the padded generators is
    the original word padded by 1) before any matrix is amplified.
    Returns ``(report, k)``.
    """
    kd = k_delta(delta)
    levels = []
    for lw in pres.words:
        if lw.trivial:
            continue
        val = pad_identity(ensure_eigendata(asg.evaluate(lw.word)))
        lv = AngleLevels(val.angles)
        if not spectral_diameter(lv.level(0)) > delta:
            raise ValueError(f"word {lw.label!r} has spectral diameter <= delta after padding")
        levels.append(lv)
    k = 0
    while not all(lv.distance_to_identity(k) >= target - atol for lv in levels):
        k += 1
        if k > kd:
            raise BoostBoundError(f"no common k <= k_delta = {kd} separates every word", None)
    if k >= kd and strict:
        raise BoostBoundError(f"smallest common exponent is {k}, not below k_delta = {kd}", k)
    boosted = GeneratorAssignment({g: gamma_power(pad_identity(asg[g]), k) for g in asg})
    params = {"boost_k": k, "k_delta": kd, "delta": delta, "dim": boosted.dim}
    return certify(pres, boosted, epsilon, separation_threshold, params), k


def inflation_factors(before: CertReport, after: CertReport) -> list[float]:
    """after / before for each relator defect (nan where the original defect is 0)."""
    out = []
    for (_, a), (_, b) in zip(before.relator_defects, after.relator_defects):
        out.append(b / a if a > 0 else float("nan"))
    return out
