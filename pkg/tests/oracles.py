"""Independent numerical oracles shared by the regression tests."""
import math

import numpy as np
from scipy import integrate


def gprior_log_marginal_quadrature(y, Xc, g):
    """log of the (alpha, sigma^2) double integral with the slope integral done in closed form.

    Under beta ~ N(0, g sigma^2 (Xc'Xc)^-1), y - alpha ~ N(0, sigma^2 (I + g H))
    where H is the hat matrix of Xc. The prior on (alpha, sigma^2) is 1/sigma^2,
    handled by integrating over u = log sigma^2.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if Xc is None or Xc.shape[1] == 0:
        k, H = 0, np.zeros((n, n))
    else:
        k = Xc.shape[1]
        H = Xc @ np.linalg.solve(Xc.T @ Xc, Xc.T)
    P = np.eye(n) - g / (1.0 + g) * H

    def logf(alpha, u):
        r = y - alpha
        s2 = math.exp(u)
        quad = float(r @ P @ r)
        return (-0.5 * n * math.log(2 * math.pi * s2) - 0.5 * k * math.log1p(g) - quad / (2 * s2))

    ybar = float(y.mean())
    sd = float(np.sqrt(np.sum((y - ybar) ** 2) / n))
    u0 = math.log(max(float((y - ybar) @ P @ (y - ybar)) / n, 1e-300))
    shift = logf(ybar, u0)
    a_lo, a_hi = ybar - 12 * sd, ybar + 12 * sd
    val, _ = integrate.dblquad(lambda alpha, u: math.exp(logf(alpha, u) - shift), u0 - 6, u0 + 12,
                               a_lo, a_hi, epsabs=0, epsrel=1e-11)
    return math.log(val) + shift
