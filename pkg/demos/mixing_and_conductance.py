"""How fast does the allocation chain forget its start?

For the 8-state MAC chain we uniformize, compute the exact conductance over
all cuts, the second eigenvalue modulus, and the step count after which the
distance to stationarity is guaranteed below rho.  Then we evolve the
distribution from the worst point mass and see where it actually crosses.
"""

import math

import numpy as np

from ratealloc.markov import (
    AllocationChain,
    conductance,
    conductance_lower_bound,
    evolve,
    mixing_time_bound,
    slem,
    stationary,
    tv_distance,
    uniformize,
)
from ratealloc.region import GaussianMacRegion, discretize

grid = discretize(GaussianMacRegion(3, 1), levels_override=[[0, 0.4, 1], [0, 0.4, 1]])
rho = 0.01

print(f"{'v':>14} {'A':>8} {'Phi':>8} {'Phi_lb':>9} {'sigma':>7} {'bound':>8} {'actual':>7}")
for v in [(0, 0), (1, 1), (3, -1), (5, 5), (-2, 4)]:
    chain = AllocationChain.from_grid(grid, np.array(v, dtype=float))
    dtmc = uniformize(chain)
    pi = stationary(chain)
    bound = mixing_time_bound(dtmc, rho)
    # first step at which every point mass is within rho
    actual = 0
    mus = np.eye(chain.size)
    while max(tv_distance(m, pi) for m in mus) > rho:
        mus = mus @ dtmc.P
        actual += 1
    print(f"{str(v):>14} {dtmc.A:8.2f} {conductance(dtmc):8.4f} {conductance_lower_bound(chain):9.2e} "
          f"{slem(dtmc):7.4f} {math.ceil(bound):8d} {actual:7d}")
