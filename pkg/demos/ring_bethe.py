"""Two and three delta-interacting bosons on a ring: FEM against Bethe ansatz.

The FEM contact strength alpha multiplies delta(x - y) in the quadratic
form, the Bethe equations are written for 2c delta, so c = alpha / 2.
"""
import numpy as np

from qgcontact.bethe import bethe_spectrum, coupling_from_alpha
from qgcontact.boundary import ContactSpec
from qgcontact.graph import GraphSpec, ring
from qgcontact.spectra import spectrum

L = 2 * np.pi
alpha = 2.0
spec = GraphSpec(ring(L), 2, "bosonic", "kirchhoff", ContactSpec.delta(alpha))
res = spectrum(spec, 5, L / 60, richardson=True)
ref = bethe_spectrum(2, L, coupling_from_alpha(alpha), 5)
print("N=2, alpha=2")
print(f"{'FEM h':>12} {'FEM h/2':>12} {'Richardson':>12} {'Bethe':>12}")
coarse, fine = res.convergence["values"]
for row in zip(coarse, fine, res.convergence["richardson"], ref):
    print("".join(f"{v:12.7f} " for v in row))

spec3 = GraphSpec(ring(L), 3, "bosonic", "kirchhoff", ContactSpec.delta(1.0))
for n in (8, 12):
    g = spectrum(spec3, 1, L / n).eigenvalues[0]
    print(f"N=3, alpha=1, h=L/{n}: ground {g:.5f}")
print(f"Bethe c=0.5: {bethe_spectrum(3, L, 0.5, 1)[0]:.5f}")
