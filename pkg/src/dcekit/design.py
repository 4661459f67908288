"""
Choice-card design: candidate enumeration, dominance screening, D-error
scoring and coordinate-exchange search, plus block assignment.

Cards hold the generated alternatives only; the status-quo alternative
(every attribute at level 0, i.e. reference dummies and the lowest price)
is appended when a card is scored or written.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (AttributeSpec, ChoiceCard, DCEError, ParseError, ValidationError,
                   encode, format_number)

__all__ = ["DesignError", "DesignPlan", "full_factorial", "preference_direction",
           "is_dominated", "is_degenerate", "information_matrix", "score_d_error",
           "random_design", "optimize_design", "assign_blocks", "block_imbalance",
           "write_design_csv", "read_design_csv", "MAX_CANDIDATES"]

MAX_CANDIDATES = 10 ** 7
ALT_LABELS = "ABCDEFGHIJ"


class DesignError(DCEError):
    pass


def full_factorial(attributes: Sequence[AttributeSpec]) -> np.ndarray:
    """All level combinations in lexicographic order, shape (prod levels, n_attributes)."""
    if not attributes:
        raise ValidationError("need at least one attribute")
    counts = [a.n_levels for a in attributes]
    if math.prod(counts) > MAX_CANDIDATES:
        raise DesignError(f"full factorial of {math.prod(counts)} profiles exceeds "
                          f"{MAX_CANDIDATES}")
    return np.array(list(itertools.product(*[range(c) for c in counts])), dtype=int)


def preference_direction(attributes: Sequence[AttributeSpec]) -> dict:
    """Default signs: higher dummy level desirable (+1), higher continuous value
    (price) undesirable (-1)."""
    return {a.name: (-1 if a.coding == "continuous" else 1) for a in attributes}


def _as_levels(card):
    if isinstance(card, ChoiceCard):
        return card.levels(baseline=False)
    return np.atleast_2d(np.asarray(card, dtype=int))


def _signs(attributes, direction):
    direction = preference_direction(attributes) if direction is None else direction
    missing = [a.name for a in attributes if a.name not in direction]
    if missing:
        raise ValidationError(f"no preference direction for {missing}")
    return np.array([direction[a.name] for a in attributes], dtype=float)


def is_dominated(card, attributes: Sequence[AttributeSpec],
                 direction: Mapping | None = None) -> bool:
    """True iff one alternative is at least as good on every attribute and
    strictly better on one.  Identical alternatives are not dominance (see
    :func:`is_degenerate`).  Levels are compared by index, which orders both
    dummy and continuous attributes."""
    lv = _as_levels(card) * _signs(attributes, direction)
    for i, j in itertools.permutations(range(len(lv)), 2):
        if np.all(lv[i] >= lv[j]) and np.any(lv[i] > lv[j]):
            return True
    return False


def is_degenerate(card) -> bool:
    """True when two alternatives of the card are identical."""
    lv = _as_levels(card)
    return len({tuple(r) for r in lv}) < len(lv)


def _coded_cards(levels, attributes, include_asc, baseline):
    """levels: (n_cards, n_alts, n_attr) -> coded (n_cards, J, K)."""
    n_cards, n_alts, n_attr = levels.shape
    if baseline:
        levels = np.concatenate([levels, np.zeros((n_cards, 1, n_attr), dtype=int)], axis=1)
    J = levels.shape[1]
    X = encode(levels.reshape(-1, n_attr), attributes).reshape(n_cards, J, -1)
    if include_asc:
        asc = np.zeros((n_cards, J, n_alts))
        asc[:, np.arange(n_alts), np.arange(n_alts)] = 1.0
        X = np.concatenate([asc, X], axis=2)
    return X


def _card_info(X, prior):
    """Per-card MNL information contributions, (..., K, K)."""
    v = X @ prior
    v = v - v.max(axis=-1, keepdims=True)
    p = np.exp(v)
    p /= p.sum(axis=-1, keepdims=True)
    xbar = np.einsum("...j,...jk->...k", p, X)
    dev = X - xbar[..., None, :]
    return np.einsum("...j,...jk,...jl->...kl", p, dev, dev)


def _card_levels(cards):
    return np.stack([_as_levels(c) for c in cards])


def information_matrix(cards, attributes, prior=None, include_asc=True, baseline=True):
    levels = _card_levels(cards)
    X = _coded_cards(levels, attributes, include_asc, baseline)
    prior = np.zeros(X.shape[2]) if prior is None else np.asarray(prior, float)
    if prior.shape != (X.shape[2],):
        raise ValidationError(f"prior must have {X.shape[2]} entries")
    return _card_info(X, prior).sum(axis=0)


def _d_from_info(info):
    K = info.shape[-1]
    sign, logdet = np.linalg.slogdet(info)
    scale = np.maximum(np.abs(np.diagonal(info, axis1=-2, axis2=-1)).max(axis=-1), 1e-300)
    ok = (sign > 0) & (logdet - K * np.log(scale) > -30 * math.log(10))
    return np.where(ok, np.exp(-logdet / K), np.inf)


def score_d_error(cards, attributes, prior=None, include_asc=True, baseline=True) -> float:
    """D-error det(I^-1)^(1/K) of the MNL information matrix I at ``prior``.

    ``prior`` is ordered as [ASC per generated alternative, coded attribute
    columns]; zero by default.  Returns ``inf`` for a singular design.
    """
    return float(_d_from_info(information_matrix(cards, attributes, prior,
                                                 include_asc, baseline)))


@dataclass(frozen=True, eq=False)
class DesignPlan:
    cards: tuple
    n_blocks: int
    prior: np.ndarray
    d_error: float
    attribute_correlation: np.ndarray
    attributes: tuple
    include_asc: bool = True

    @property
    def n_cards(self) -> int:
        return len(self.cards)

    def block(self, b: int) -> list:
        return [c for c in self.cards if c.block_id == b]

    def rescore(self) -> float:
        return score_d_error(self.cards, self.attributes, self.prior, self.include_asc)


def _feasible(levels, attributes, signs):
    lv = levels * signs
    n = len(lv)
    for i in range(n):
        for j in range(n):
            if i != j and np.all(lv[i] >= lv[j]):
                return False   # dominance or identical
    return True


def _feasible_pairs_mask(cand, signs):
    """mask[i, j]: candidates i, j neither identical nor dominating each other."""
    s = cand * signs
    ge = np.all(s[:, None, :] >= s[None, :, :], axis=2)
    return ~(ge | ge.T)


def random_design(candidates, attributes, n_cards, rng, n_alts=2, direction=None,
                  max_tries=1000) -> np.ndarray:
    """Random non-dominated, non-degenerate design, shape (n_cards, n_alts, n_attr)."""
    cand = np.asarray(candidates, dtype=int)
    signs = _signs(attributes, direction)
    out = []
    for _ in range(n_cards):
        for _ in range(max_tries):
            pick = cand[rng.choice(len(cand), n_alts, replace=len(cand) < n_alts)]
            if _feasible(pick, attributes, signs):
                out.append(pick)
                break
        else:
            if n_alts == 2:
                ok = np.argwhere(_feasible_pairs_mask(cand, signs))
                if len(ok) == 0:
                    raise DesignError("no non-dominated card can be formed from the candidates")
                out.append(cand[ok[rng.integers(len(ok))]])
            else:
                raise DesignError("could not draw a non-dominated card")
    return np.stack(out)


def _attribute_correlation(levels, attributes):
    X = encode(levels.reshape(-1, levels.shape[2]), attributes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.corrcoef(X, rowvar=False)


def optimize_design(candidates, attributes: Sequence[AttributeSpec], n_cards: int = 16,
                    n_alts: int = 2, n_blocks: int = 4, prior=None, seed: int = 1,
                    max_sweeps: int = 50, direction: Mapping | None = None,
                    include_asc: bool = True) -> DesignPlan:
    """Coordinate-exchange search for a low D-error design.

    Starting from a random feasible design, every (card, alternative) slot is
    offered each candidate profile in turn; the best replacement is accepted
    when it strictly lowers the D-error and keeps the card non-dominated and
    non-degenerate.  Stops after a sweep without improvement or ``max_sweeps``.
    """
    if n_cards % n_blocks:
        raise ValidationError(f"{n_cards} cards cannot be split into {n_blocks} equal blocks")
    cand = np.asarray(candidates, dtype=int)
    if cand.ndim != 2 or len(cand) == 0:
        raise ValidationError("candidate set is empty")
    attributes = tuple(attributes)
    signs = _signs(attributes, direction)
    rng = np.random.default_rng(seed)
    levels = random_design(cand, attributes, n_cards, rng, n_alts, direction)
    X = _coded_cards(levels, attributes, include_asc, True)
    K = X.shape[2]
    prior = np.zeros(K) if prior is None else np.asarray(prior, float)
    if prior.shape != (K,):
        raise ValidationError(f"prior must have {K} entries")
    infos = _card_info(X, prior)
    current = float(_d_from_info(infos.sum(axis=0)))

    cand_s = cand * signs
    for _ in range(max_sweeps):
        improved = False
        for c in range(n_cards):
            for a in range(n_alts):
                others = np.delete(levels[c], a, axis=0) * signs
                # feasibility of each candidate against the card's other alternatives
                ge = np.all(cand_s[:, None, :] >= others[None, :, :], axis=2)
                le = np.all(cand_s[:, None, :] <= others[None, :, :], axis=2)
                ok = ~np.any(ge | le, axis=1)
                if not ok.any():
                    continue
                trial = np.repeat(levels[c][None], ok.sum(), axis=0)
                trial[:, a] = cand[ok]
                tX = _coded_cards(trial, attributes, include_asc, True)
                rest = infos.sum(axis=0) - infos[c]
                tinfo = _card_info(tX, prior)
                d = _d_from_info(rest[None] + tinfo)
                best = int(np.argmin(d))
                if d[best] < current * (1 - 1e-12):
                    levels[c] = trial[best]
                    infos[c] = tinfo[best]
                    current = float(d[best])
                    improved = True
        if not improved:
            break

    cards = [ChoiceCard(i + 1, 0, tuple(map(tuple, levels[i]))) for i in range(n_cards)]
    blocks = assign_blocks(cards, n_blocks, seed, attributes)
    cards = tuple(ChoiceCard(c.card_id, int(b), c.alternatives) for c, b in zip(cards, blocks))
    d_error = score_d_error(cards, attributes, prior, include_asc)
    return DesignPlan(cards, n_blocks, prior, d_error,
                      _attribute_correlation(levels, attributes), attributes, include_asc)


def _level_counts(levels, attributes):
    """(n_cards, total levels) count of each attribute level over a card's alternatives."""
    cols = []
    for i, a in enumerate(attributes):
        cols.append((levels[:, :, i][:, :, None] == np.arange(a.n_levels)).sum(axis=1))
    return np.concatenate(cols, axis=1)


def block_imbalance(cards, labels, n_blocks, attributes):
    """(max abs deviation, sum of squared deviations) of per-block level
    frequencies from the design-wide frequency / n_blocks."""
    counts = _level_counts(_card_levels(cards), attributes)
    labels = np.asarray(labels)
    target = counts.sum(axis=0) / n_blocks
    per = np.stack([counts[labels == b].sum(axis=0) for b in range(1, n_blocks + 1)])
    dev = per - target
    return float(np.abs(dev).max()), float((dev ** 2).sum())


def assign_blocks(cards, n_blocks: int, seed: int, attributes) -> np.ndarray:
    """Equal-size block labels (1..n_blocks) by greedy pairwise-swap descent on
    :func:`block_imbalance`, from a seeded random start."""
    n = len(cards)
    if n_blocks < 1 or n % n_blocks:
        raise ValidationError(f"{n} cards cannot be split into {n_blocks} equal blocks")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(1, n_blocks + 1), n // n_blocks)[rng.permutation(n)]
    best = block_imbalance(cards, labels, n_blocks, attributes)
    while True:
        move = None
        for i in range(n):
            for j in range(i + 1, n):
                if labels[i] == labels[j]:
                    continue
                labels[i], labels[j] = labels[j], labels[i]
                score = block_imbalance(cards, labels, n_blocks, attributes)
                labels[i], labels[j] = labels[j], labels[i]
                if score < best and (move is None or score < move[0]):
                    move = (score, i, j)
        if move is None:
            return labels
        best, i, j = move
        labels[i], labels[j] = labels[j], labels[i]


# ---------------------------------------------------------------------------
# design CSV
# ---------------------------------------------------------------------------

def write_design_csv(plan: DesignPlan, path) -> None:
    """``card_id,block_id,alt_id,<attributes...>``; the status-quo row is alt C."""
    attrs = plan.attributes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["card_id", "block_id", "alt_id"] + [a.name for a in attrs])
        for c in sorted(plan.cards, key=lambda c: c.card_id):
            for k, alt in enumerate(c.levels(baseline=True)):
                w.writerow([c.card_id, c.block_id, ALT_LABELS[k]]
                           + [format_number(a.value_of(lv)) for a, lv in zip(attrs, alt)])


def read_design_csv(path, attributes, prior=None, include_asc=True) -> DesignPlan:
    attrs = tuple(attributes)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["card_id", "block_id", "alt_id"] + [a.name for a in attrs]:
            raise ParseError("unexpected design header", 1)
        by_card: dict = {}
        for lineno, rec in enumerate(reader, start=2):
            try:
                cid, bid = int(rec[0]), int(rec[1])
                lv = [a.level_of(float(v)) for a, v in zip(attrs, rec[3:])]
            except (ValueError, IndexError) as e:
                raise ParseError(str(e), lineno) from None
            by_card.setdefault((cid, bid), []).append(lv)
    cards = []
    for (cid, bid), alts in by_card.items():
        if any(alts[-1]):
            raise ParseError(f"card {cid}: last row must be the status-quo alternative")
        cards.append(ChoiceCard(cid, bid, tuple(map(tuple, alts[:-1]))))
    n_blocks = len({c.block_id for c in cards})
    levels = _card_levels(cards)
    d = score_d_error(cards, attrs, prior, include_asc)
    K = _coded_cards(levels[:1], attrs, include_asc, True).shape[2]
    prior = np.zeros(K) if prior is None else np.asarray(prior, float)
    return DesignPlan(tuple(cards), n_blocks, prior, d,
                      _attribute_correlation(levels, attrs), attrs, include_asc)
