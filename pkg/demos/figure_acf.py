"""Sample autocorrelations of the figure configurations.

The LSTAR models behave like a random walk over short spans; the ESTAR
variant with the larger r0 pulls back harder and its ACF falls off faster.
"""

from subgeo import acf, simulate
from subgeo.config import load

for name in ("fig1_left", "fig1_middle", "fig1_right", "fig2_left", "fig2_middle", "fig2_right"):
    mf = load(name)
    path = simulate(mf.model, 100_000, burn_in=1000, seed=7)
    r = acf(path.values, 20)
    print(f"{name:12s} acf(1)={r[1]:.4f} acf(3)={r[3]:.4f} acf(20)={r[20]:.4f}")
