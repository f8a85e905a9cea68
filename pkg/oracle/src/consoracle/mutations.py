"""Seeded corruptions of a result bundle for negative controls.

Each mutation makes one small, meaningful change (a flipped sign or a
dropped term) in a reported expression; a sound harness must flag the
mutated bundle as failing.
"""

from __future__ import annotations

import copy
import random


def _flip_first_sign(text: str) -> str:
    if " + " in text:
        return text.replace(" + ", " - ", 1)
    if " - " in text:
        return text.replace(" - ", " + ", 1)
    return "-(" + text + ")" if not text.startswith("-") else text[1:]


def _drop_last_term(text: str) -> str:
    for sep in (" + ", " - "):
        k = text.rfind(sep)
        if k > 0:
            return text[:k]
    return text + " + 1"


def _mutable_slots(bundle: dict) -> list:
    """Fields that the harness actually verifies: first integrals, current
    components, and the multiplier used in the conservation identity."""
    slots = []
    for bi, branch in enumerate(bundle["branches"]):
        for ii, rec in enumerate(branch.get("integrals", [])):
            if rec["psi"] != "0":
                slots.append((bi, ii, "psi"))
            for v in rec["current"]:
                slots.append((bi, ii, ("current", v)))
            slots.append((bi, ii, "reduced_multiplier"))
    return slots


def mutate(bundle: dict, seed: int) -> dict:
    """One deterministic corruption per seed."""
    rng = random.Random(seed)
    out = copy.deepcopy(bundle)
    slots = _mutable_slots(out)
    if not slots:
        raise ValueError("nothing to mutate")
    bi, ii, what = slots[rng.randrange(len(slots))]
    op = rng.choice((_flip_first_sign, _drop_last_term))
    branch = out["branches"][bi]
    rec = branch["integrals"][ii]
    if what in ("psi", "reduced_multiplier"):
        rec[what] = op(rec[what])
    else:
        _, v = what
        rec["current"][v] = op(rec["current"][v])
    return out
