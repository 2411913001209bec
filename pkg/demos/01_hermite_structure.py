"""Walk through the Hermite model: basis, norms, inclusions, heat semigroup.

Run:  python demos/01_hermite_structure.py
"""

import numpy as np

from nucleartight import (
    BasisSpec,
    TestFunction,
    heat_flow_ground_state,
    heat_matrix,
    hermite_functions,
    hs_inclusion_converges,
    hs_norm,
    project_function,
    quadrature_nodes,
    quadrature_weights,
    seminorm,
)

basis = BasisSpec(size=64, quad_order=128)
nodes = quadrature_nodes(basis)
weights = quadrature_weights(basis)

print("== orthonormality under the quadrature rule ==")
h = hermite_functions(nodes, basis.size)
gram = h.T @ (weights[:, None] * h)
print(f"max |Gram - I| over {basis.size} modes: {np.abs(gram - np.eye(basis.size)).max():.2e}")

print("\n== projecting a sampled function ==")
# x * h_0(x) is exactly h_1 / sqrt(2); the projector recovers that
samples = nodes * h[:, 0]
phi = project_function(samples, basis)
print(f"coefficient on mode 1: {phi.coeffs[1]:.12f}  (1/sqrt(2) = {1/np.sqrt(2):.12f})")
print(f"largest spurious coefficient: {np.abs(np.delete(phi.coeffs, 1)).max():.2e}")

print("\n== the graded norm ladder ==")
bump = TestFunction(basis, np.r_[1.0, 0.5, 0.25, np.zeros(basis.size - 3)])
for r in (0.0, 0.5, 1.0, 2.0):
    print(f"p_{r}(phi) = {seminorm(bump, r):.6f}")

print("\n== Hilbert-Schmidt inclusions ==")
for gap in (1.0, 0.75, 0.25):
    sizes = (10, 100, 1000, 10000)
    vals = [hs_norm(0.0, gap, n) ** 2 for n in sizes]
    tagline = "converges" if hs_inclusion_converges(0.0, gap) else "DIVERGES"
    print(f"gap {gap}: squared norms {['%.4f' % v for v in vals]} -> {tagline}")
print(f"gap 1.0 limit: pi^2/8 = {np.pi**2 / 8:.7f}")

print("\n== heat semigroup vs Gaussian convolution ==")
t = 0.5
e_t = heat_matrix(t, basis)
evolved = hermite_functions(nodes, basis.size) @ e_t[:, 0]
exact = heat_flow_ground_state(t, nodes)
l2 = np.sqrt(np.sum(weights * (evolved - exact) ** 2))
print(f"L2 error of exp(tL) h_0 against the closed form at t={t}: {l2:.2e}")
law = np.abs(heat_matrix(0.3, basis) @ heat_matrix(0.2, basis) - e_t).max()
print(f"semigroup law defect E(0.3)E(0.2) vs E(0.5): {law:.2e}")
