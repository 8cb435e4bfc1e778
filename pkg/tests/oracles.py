"""Reference computations that share no code with the package.

They are slow or closed-form on purpose.  ``make_oracle_values.py`` runs them
once and freezes the numbers in ``oracle_values.json``; the tests read that
file.
"""
import itertools
import math

import mpmath
import numpy as np

# model pairs used by the property suite: (psi tag, W tag) -> callables
PSI = {"quadratic": lambda t: t * t, "linear": lambda t: t, "cubic": lambda t: t ** 3}
SQRT_W = {
    "quadratic_well": lambda s: 1 - s,
    "linear_well": lambda s: mpmath.sqrt(1 - s),
    "quartic_well": lambda s: (1 - s) ** 2,
}


def c_w(w_tag, t):
    """2 * integral_t^1 sqrt(W) by adaptive mpmath quadrature."""
    f = SQRT_W[w_tag]
    return float(2 * mpmath.quad(f, [t, 1]))


def g_closed_form(z):
    """psi = t^2, W = (1-s)^2: minimize t^2 z + 2 (1-t)^2 analytically."""
    return 2.0 * z / (z + 2.0), 2.0 / (z + 2.0)


def g_linear_psi(z):
    """psi = t, W = (1-s)^2: t* = max(0, 1 - z/4)."""
    t = max(0.0, 1.0 - z / 4.0)
    return t * z + 2.0 * (1.0 - t) ** 2, t


def g_grid_search(psi_tag, w_tag, z, n=200_001):
    """Dense grid search with an exact (polynomial) c_W for the tags used here."""
    t = np.linspace(0.0, 1.0, n)
    cw = {
        "quadratic_well": (1 - t) ** 2,
        "linear_well": 4.0 / 3.0 * (1 - t) ** 1.5,
        "quartic_well": 2.0 / 3.0 * (1 - t) ** 3,
    }[w_tag]
    vals = PSI[psi_tag](t) * z + 2.0 * cw
    i = int(np.argmin(vals))
    return float(vals[i]), float(t[i])


def lifting_bruteforce(theta, g, edges, length, K):
    """Plain itertools enumeration with cell 0 fixed at k = 0."""
    theta = list(theta)
    best, best_k = math.inf, None
    for rest in itertools.product(range(-K, K + 1), repeat=len(theta) - 1):
        k = (0,) + rest
        val = 0.0
        for a, b in edges:
            val += g(abs(theta[b] - theta[a] + 2 * math.pi * (k[b] - k[a]))) * length
        if val < best:
            best, best_k = val, k
    return best, best_k


def inverse_distance_integral(side, hole):
    """Integral of 1/|x - c| over a square of side ``side`` centered at c minus the centered square of side ``hole``."""
    def quadrant(a):
        # integral over [0, a]^2 of 1/r in closed form
        return 2.0 * a * math.log(1.0 + math.sqrt(2.0))
    return 4.0 * (quadrant(side / 2.0) - quadrant(hole / 2.0))


def matching_cost(plus, minus, g2pi):
    best = math.inf
    for perm in itertools.permutations(range(len(minus))):
        best = min(best, sum(math.dist(plus[i], minus[j]) for i, j in enumerate(perm)))
    return g2pi * best
