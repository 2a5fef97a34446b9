"""Burst-size densities on a cube ``[0, width]^dim``.

Two families: ``constant`` (uniform) and ``truncexp``, a product of
truncated exponentials whose rate depends on the current state through
``beta(y) = beta_min + (beta_max - beta_min) |y| / (1 + |y|)``.
"""

import math

import numpy as np

from .errors import SpecError


def _trunc_cdf(beta, x, width):
    return -np.expm1(-beta * x) / -np.expm1(-beta * width)


def _trunc_cdf_dbeta(beta, x, width):
    """Derivative of the truncated-exponential CDF in the rate."""
    z = -np.expm1(-beta * width)
    num = x * np.exp(-beta * x) * z + np.expm1(-beta * x) * width * np.exp(-beta * width)
    return num / z ** 2


def trunc_exp_mean(beta, width=1.0):
    """Mean of the exponential law of rate ``beta`` truncated to ``[0, width]``."""
    if beta == 0:
        return width / 2
    return 1.0 / beta - width * math.exp(-beta * width) / -math.expm1(-beta * width)


def trunc_exp_l1_slope(beta, width):
    """``int |d/dbeta q_beta(x)| dx`` for the truncated density ``q_beta``.

    The derivative changes sign once, at the point where the score
    ``1/beta - x - width e^{-beta width}/(1 - e^{-beta width})`` vanishes,
    which is the mean; so the integral is twice the CDF derivative there.
    """
    xm = min(max(trunc_exp_mean(beta, width), 0.0), width)
    return 2.0 * abs(float(_trunc_cdf_dbeta(beta, xm, width)))


def trunc_exp_overlap(b1, b2, width):
    """``int min(q_b1, q_b2)`` over ``[0, width]``."""
    if b1 == b2:
        return 1.0
    lo, hi = min(b1, b2), max(b1, b2)
    zl, zh = -math.expm1(-lo * width), -math.expm1(-hi * width)
    # densities cross once; the steeper one dominates near zero
    xc = math.log(hi * zl / (lo * zh)) / (hi - lo)
    xc = min(max(xc, 0.0), width)
    return float(_trunc_cdf(lo, xc, width) + 1.0 - _trunc_cdf(hi, xc, width))


class BurstDensity:
    """Density ``p(y, theta)`` with envelope and Lipschitz/overlap constants."""

    def __init__(self, kind="constant", width=1.0, dim=1, beta_min=1.0, beta_max=1.0):
        if kind not in ("constant", "truncexp"):
            raise SpecError(f"unknown burst density kind {kind!r}")
        if not width > 0:
            raise SpecError("burst width must be positive")
        if kind == "truncexp" and not 0 < beta_min <= beta_max:
            raise SpecError("need 0 < beta_min <= beta_max")
        self.kind = kind
        self.width = float(width)
        self.dim = int(dim)
        self.beta_min = float(beta_min)
        self.beta_max = float(beta_max)

    @property
    def constant(self):
        return self.kind == "constant" or self.beta_min == self.beta_max

    def rate(self, y):
        r = np.linalg.norm(np.atleast_2d(y), axis=1)
        return self.beta_min + (self.beta_max - self.beta_min) * r / (1.0 + r)

    def __call__(self, y, theta):
        theta = np.atleast_2d(theta)
        inside = np.all((theta >= 0) & (theta <= self.width), axis=1)
        if self.kind == "constant":
            return inside / self.width ** self.dim
        beta = self.rate(y)[:, None]
        q = beta * np.exp(-beta * theta) / -np.expm1(-beta * self.width)
        return inside * np.prod(q, axis=1)

    @property
    def p_max(self):
        if self.kind == "constant":
            return self.width ** -self.dim
        b = self.beta_max
        return (b / -math.expm1(-b * self.width)) ** self.dim

    @property
    def L_p(self):
        """Lipschitz constant of ``y -> p(y, .)`` in L1.

        ``r/(1+r)`` is 1-Lipschitz, so the rate is ``(beta_max - beta_min)``-
        Lipschitz; the L1 distance of a product is at most the sum over
        coordinates.
        """
        if self.constant:
            return 0.0
        betas = np.linspace(self.beta_min, self.beta_max, 1001)
        slope = max(trunc_exp_l1_slope(b, self.width) for b in betas)
        return self.dim * (self.beta_max - self.beta_min) * slope

    @property
    def delta_p(self):
        """Overlap ``int min(p(y1,.), p(y2,.))`` at the extreme rates.

        The family has monotone likelihood ratio, so the overlap is smallest
        for the most separated rates.  Products are integrated on a
        midpoint grid for ``dim > 1``.
        """
        if self.constant:
            return 1.0
        if self.dim == 1:
            return trunc_exp_overlap(self.beta_min, self.beta_max, self.width)
        n = {2: 400, 3: 80}.get(self.dim, 24)
        x = (np.arange(n) + 0.5) / n * self.width
        lo, hi = self.beta_min, self.beta_max
        q1 = lo * np.exp(-lo * x) / -math.expm1(-lo * self.width)
        q2 = hi * np.exp(-hi * x) / -math.expm1(-hi * self.width)
        grids1 = np.meshgrid(*([q1] * self.dim), indexing="ij")
        grids2 = np.meshgrid(*([q2] * self.dim), indexing="ij")
        m = np.minimum(np.prod(grids1, axis=0), np.prod(grids2, axis=0))
        return float(m.sum() * (self.width / n) ** self.dim)

    def params(self):
        return {"kind": self.kind, "width": self.width, "dim": self.dim,
                "beta_min": self.beta_min, "beta_max": self.beta_max}
