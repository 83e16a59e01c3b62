"""Fixed Gauss rules: piecewise Gauss-Legendre, tensor products, Gauss-Jacobi on [0, 1]."""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def piecewise_legendre(breaks, n):
    """Composite Gauss-Legendre rule with ``n`` nodes on every panel.

    Parameters
    ----------
    breaks : sequence of float
        Increasing panel boundaries; the integrand should be smooth inside
        each panel (kernel discontinuities belong in ``breaks``).
    n : int
        Nodes per panel.

    Returns
    -------
    nodes, weights : ndarray
    """
    breaks = np.asarray(breaks, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
        raise ValueError("breaks must be a strictly increasing sequence of length >= 2")
    x, w = _leggauss(int(n))
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def tensor_rule(rules):
    """Tensor product of one-dimensional ``(nodes, weights)`` rules.

    Returns points of shape ``(N, d)`` and weights of shape ``(N,)``.
    """
    rules = list(rules)
    if len(rules) == 1:
        x, w = rules[0]
        return x[:, None].copy(), w.copy()
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return points, weights


@lru_cache(maxsize=64)
def jacobi_unit(n, beta):
    """Nodes/weights for ``int_0^1 tau**beta f(tau) dtau`` (``beta > -1``)."""
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    x, w = roots_jacobi(int(n), 0.0, float(beta))
    tau = 0.5 * (1.0 + x)
    wt = w * 2.0 ** (-beta - 1.0)
    tau.setflags(write=False)
    wt.setflags(write=False)
    return tau, wt
