"""Full-gradient L-BFGS-TR and L-SR1-TR on Rosenbrock and an ill-conditioned quadratic.

    python3 demos/deterministic.py
"""
import numpy as np

from sqntr import QuadraticObjective, Rosenbrock, TrainConfig, train
from sqntr.cli import random_spd

for method in ("lsr1-tr", "lbfgs-tr"):
    res = train(TrainConfig(method=method, max_iter=500, grad_tol=1e-8), Rosenbrock(), w0=[-1.2, 1.0])
    acc = sum(r.accepted for r in res.records)
    print(f"Rosenbrock {method}: w={np.round(res.w, 8)}, f={Rosenbrock().loss(res.w):.1e}, "
          f"{len(res.records)} iterations ({acc} accepted), stop: {res.stop_reason}")

h, g = random_spd(20, 1e3, 0)
quad = QuadraticObjective(h, g)
for memory in (5, 10, 20):
    res = train(TrainConfig(method="lbfgs-tr", memory=memory, max_iter=1000), quad)
    gnorm = np.linalg.norm(quad.eval_batch(res.w)[1])
    acc = sum(r.accepted for r in res.records)
    print(f"quadratic n=20 cond=1e3, memory {memory:2d}: ||g||={gnorm:.1e} after "
          f"{len(res.records)} iterations ({acc} accepted)")
