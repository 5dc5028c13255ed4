"""Counting function of two particles on a ring and its Weyl asymptotics.

N(lambda) ~ L^2 lambda / (4 pi) for distinguishable particles; the bose
sector carries half of it.
"""
import numpy as np

from qgcontact.boundary import ContactSpec
from qgcontact.graph import GraphSpec, ring
from qgcontact.spectra import counting_function, spectrum, weyl_fit

spec = GraphSpec(ring(np.pi), 2, "distinguishable", "kirchhoff", ContactSpec.delta(1.0))
res = spectrum(spec, 300, np.pi / 60)
fit = weyl_fit(res, "distinguishable2", spec.graph, min_count=150)
bose = res.sector("bose")
bfit = weyl_fit(bose, "bose2", spec.graph, min_count=50)
print(f"fitted slope {fit.fitted_slope:.4f}  theory {fit.theory_slope:.4f}  "
      f"deviation {fit.rel_deviation:.3f}  ({fit.count} eigenvalues)")
print(f"bose slope   {bfit.fitted_slope:.4f}  theory {bfit.theory_slope:.4f}  "
      f"deviation {bfit.rel_deviation:.3f}")
for lam in np.linspace(fit.window[0], fit.window[1], 6):
    n = counting_function(res, lam)
    nb = counting_function(bose, lam) if lam <= bose[-1] else float("nan")
    print(f"lambda {lam:8.2f}  N {n:4d}  N_bose {nb:4}  Weyl {fit.theory_slope * lam:7.1f}")
