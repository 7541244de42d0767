"""Prox-subgradient on a 1-D lasso, and the Indicator/PSGD equivalence.

    python demos/prox_lasso.py
"""

import numpy as np

from markovopt.algorithms import Constant, InvSqrt, RunConfig, run_prox_subgrad, run_psgd
from markovopt.core import L1, Indicator, soft_threshold
from markovopt.problems import lasso_prox, nonconvex_quadratic
from markovopt.samplers import cycle_walk, make_iid

problem, chain = lasso_prox(make_iid([1.0]), dim=1, target=1.0)
for w in (0.0, 0.3, 0.5, 1.5):
    tr = run_prox_subgrad(problem, chain, RunConfig(schedule=Constant(0.1), horizon=10_000, regularizer=L1(w)))
    exact = soft_threshold(problem.data["cbar"], w)[0]
    print(f"weight {w:.1f}: theta_T = {tr.final_iterate[0]:.6f}   closed form {exact:.6f}")

problem, chain = nonconvex_quadratic(cycle_walk(8), dim=20, seed=0)
cfg = RunConfig(schedule=InvSqrt(1.0), horizon=5000, seed=4, checkpoint_stride=1, record_loss="none")
a = run_psgd(problem, chain, cfg)
b = run_prox_subgrad(problem, chain, RunConfig(**{**cfg.__dict__, "algorithm": "prox",
                                                  "regularizer": Indicator(problem.constraint)}))
print("prox with the box indicator reproduces PSGD bit for bit:",
      np.array_equal(a.checkpoint_iterates, b.checkpoint_iterates))
