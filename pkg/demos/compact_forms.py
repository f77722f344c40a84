"""Compact L-BFGS and L-SR1 matrices against their dense recursions.

    python3 demos/compact_forms.py
"""
import numpy as np

from sqntr import CurvaturePairBuffer, build_bfgs, build_sr1, select_gamma_bfgs, select_gamma_sr1
from sqntr.testing import dense_bfgs_recursion, dense_sr1_recursion

rng = np.random.default_rng(0)
n, m = 8, 4
a = rng.standard_normal((n, n))
h = a @ a.T / n + 0.5 * np.eye(n)

buf = CurvaturePairBuffer(m)
pairs = []
for _ in range(m):
    s = rng.standard_normal(n)
    pairs.append((s, h @ s))
    buf.push(*pairs[-1])

for name, select, build, recursion in (
    ("L-BFGS", select_gamma_bfgs, build_bfgs, dense_bfgs_recursion),
    ("L-SR1", select_gamma_sr1, build_sr1, dense_sr1_recursion),
):
    gamma = select(buf).gamma
    b = build(buf, gamma)
    gap = np.abs(b.to_dense() - recursion(gamma, pairs, n)).max()
    s, y = pairs[-1]
    secant = np.abs(b.apply(s) - y).max()
    print(f"{name:6s} gamma={gamma:8.4f}  Psi {b.psi.shape}  max |compact - recursion| {gap:.1e}  "
          f"last-pair secant residual {secant:.1e}")

# SR1 reproduces H on span(S) when the pairs are exact
b = build_sr1(buf, select_gamma_sr1(buf).gamma)
v = buf.S @ rng.standard_normal(m)
print(f"\nSR1 on span(S): |Bv - Hv| = {np.abs(b.apply(v) - h @ v).max():.1e}")
