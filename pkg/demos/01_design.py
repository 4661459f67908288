"""Build a 16-card, 4-block D-efficient design and compare it with random ones.

    python demos/01_design.py [out.csv]
"""
import sys
from pathlib import Path

import numpy as np

from dcekit.core import ChoiceCard, read_attributes
from dcekit.design import (block_imbalance, full_factorial, optimize_design, random_design,
                           score_d_error, write_design_csv)

here = Path(__file__).parent
attrs = read_attributes(here / "attributes.txt")
cand = full_factorial(attrs)
print(f"{len(cand)} candidate profiles")

plan = optimize_design(cand, attrs, n_cards=16, n_blocks=4, seed=1)
print(f"optimised D-error: {plan.d_error:.4f}")

# reference point: random non-dominated designs of the same size
rng = np.random.default_rng(0)
ds = [score_d_error([ChoiceCard(i + 1, 1, tuple(map(tuple, lv)))
                     for i, lv in enumerate(random_design(cand, attrs, 16, rng))], attrs)
      for _ in range(100)]
print(f"random designs:    {np.mean(ds):.4f} mean, {np.min(ds):.4f} best of 100")

labels = np.array([c.block_id for c in plan.cards])
worst, ss = block_imbalance(plan.cards, labels, 4, attrs)
print(f"block level imbalance: max {worst:.2f}, sum of squares {ss:.2f}")
for c in plan.block(1):
    print(c.card_id, c.alternatives)

out = sys.argv[1] if len(sys.argv) > 1 else "design.csv"
write_design_csv(plan, out)
print("wrote", out)
