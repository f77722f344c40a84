"""Trust-region subproblem on a small indefinite L-SR1 matrix.

Builds B from two curvature pairs of an indefinite quadratic, solves the
subproblem for a few radii and compares each answer with a dense solver.

    python3 demos/subproblem.py
"""
import numpy as np

from sqntr import CurvaturePairBuffer, build_sr1, select_gamma_sr1, solve_subproblem
from sqntr.testing import more_sorensen

rng = np.random.default_rng(3)
n = 6
h = np.diag([-2.0, -0.5, 1.0, 2.0, 3.0, 4.0])
buf = CurvaturePairBuffer(2)
for _ in range(2):
    s = rng.standard_normal(n)
    buf.push(s, h @ s)

gamma = select_gamma_sr1(buf).gamma
b = build_sr1(buf, gamma)
bmat = b.to_dense()
print(f"gamma = {gamma:.4f}")
print("eigenvalues of B:", np.round(np.linalg.eigvalsh(bmat), 4))

g = rng.standard_normal(n)
print(f"\n{'delta':>7} {'case':>10} {'sigma':>10} {'||p||':>8} {'Q(p)':>11} {'dense Q':>11}")
for delta in (0.1, 0.5, 1.0, 5.0):
    sol = solve_subproblem(b, g, delta)
    ref = more_sorensen(bmat, g, delta)
    print(f"{delta:7.2f} {sol.case:>10} {sol.sigma:10.4f} {np.linalg.norm(sol.p):8.4f} "
          f"{sol.q_value:11.6f} {ref.q_value:11.6f}")

# hard case: g has no component in the leftmost eigenspace
lam, vec = np.linalg.eigh(bmat)
left = vec[:, np.abs(lam - lam[0]) < 1e-9 * np.abs(lam).max()]
g_hard = g - left @ (left.T @ g)
sol = solve_subproblem(b, g_hard, 5.0)
print(f"\nhard case: case={sol.case}, sigma={sol.sigma:.4f} (-lambda_min = {-lam[0]:.4f}), "
      f"||p||={np.linalg.norm(sol.p):.4f}")
