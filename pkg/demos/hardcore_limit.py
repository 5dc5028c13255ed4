"""Bosons on an interval approach free fermions as alpha grows.

With Dirichlet vertices the hardcore bose levels are i^2 + j^2 with
0 < i < j, and the fermi sector does not see alpha at all.
"""
import numpy as np

from qgcontact.boundary import ContactSpec
from qgcontact.graph import GraphSpec, interval
from qgcontact.spectra import spectrum

base = GraphSpec(interval(np.pi), 2, "distinguishable", "dirichlet", ContactSpec.delta(0.0))
h = np.pi / 40
print("alpha      lowest bose levels                     lowest fermi level")
for alpha in (0.0, 1.0, 10.0, 100.0, 1000.0):
    r = spectrum(base.replace(contact=ContactSpec.delta(alpha)), 16, h)
    b, f = r.sector("bose")[:5], r.sector("fermi")[0]
    print(f"{alpha:7g}  " + " ".join(f"{v:7.3f}" for v in b) + f"   {f:.6f}")
hc = spectrum(base.replace(statistics="bosonic", contact=ContactSpec.hardcore()), 5, h)
print("hardcore " + " ".join(f"{v:7.3f}" for v in hc.eigenvalues) + "   (exact 5 10 13 17 20)")
