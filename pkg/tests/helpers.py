import numpy as np

from sfmlab.eval import energy_distance


def perm_energy_pvalue(a, b, n_perm, rng):
    """Permutation p-value of the energy distance between two samples."""
    stat = energy_distance(a, b)
    pooled = np.vstack([a, b])
    hits = 0
    for _ in range(n_perm):
        p = rng.permutation(len(pooled))
        hits += energy_distance(pooled[p[: len(a)]], pooled[p[len(a):]]) >= stat
    return (hits + 1) / (n_perm + 1)
