"""Pure-numpy fallback for the EP site-update sweep.

Mirrors the compiled extension operation for operation so both backends
produce the same fixed point; keep the two in sync when editing either.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfcx

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

#: cavity precisions below this are treated as degenerate and skipped.
MIN_CAVITY_PRECISION = 1e-12
#: floor for tilted variances; backstop only, see MAX_SITE_PRECISION.
MIN_TILTED_VARIANCE = 1e-10
#: probit site precisions satisfy tau <= 1 at any fixed point (the probit
#: log-likelihood has curvature at most 1), so anything above this cap is
#: transient numerical drift; capping keeps cavity subtractions benign.
MAX_SITE_PRECISION = 2.0
#: rank-1 downdates are clamped so 1 + dtau * Sigma_ii never falls below
#: this; a near-zero denominator multiplies the posterior by ~1/denom.
MIN_RANK1_DENOM = 1e-3
#: site natural means are a few times the latent scale at any fixed point;
#: far larger values are update transients worth clipping.
MAX_SITE_NATURAL_MEAN = 1e5
#: damping shrinks dying sites geometrically without ever reaching zero;
#: below this precision a site is snapped to exactly vacuous, otherwise its
#: residual natural mean (fp noise) dominates nu^2/tau evidence terms.
MIN_ACTIVE_SITE_PRECISION = 1e-12


def probit_ratio(u: float) -> float:
    """N(u) / Phi(u), stable for arbitrarily negative u."""
    return _SQRT_2_OVER_PI / float(erfcx(-u * _INV_SQRT2))


def ep_sweep(
    K: np.ndarray,
    mu: np.ndarray,
    Sigma: np.ndarray,
    tau: np.ndarray,
    nu: np.ndarray,
    z: np.ndarray,
    order: np.ndarray,
    damping: float,
) -> float:
    """One damped EP sweep over the sites listed in ``order``.

    Updates ``mu``, ``Sigma``, ``tau`` and ``nu`` in place via rank-1
    posterior refreshes and returns the largest damped site-parameter change.
    """
    max_delta = 0.0
    for i in order:
        sii = Sigma[i, i]
        tau_cav = 1.0 / sii - tau[i]
        if tau_cav < MIN_CAVITY_PRECISION:
            continue
        nu_cav = mu[i] / sii - nu[i]
        var_cav = 1.0 / tau_cav
        mean_cav = nu_cav * var_cav

        s = math.sqrt(1.0 + var_cav)
        u = z[i] * mean_cav / s
        r = probit_ratio(u)
        mean_tilt = mean_cav + z[i] * var_cav * r / s
        var_tilt = var_cav - var_cav * var_cav * r * (u + r) / (1.0 + var_cav)
        if var_tilt < MIN_TILTED_VARIANCE:
            var_tilt = MIN_TILTED_VARIANCE

        tau_prop = 1.0 / var_tilt - tau_cav
        if tau_prop < 0.0:
            tau_prop = 0.0
            nu_prop = 0.0
        else:
            if tau_prop > MAX_SITE_PRECISION:
                tau_prop = MAX_SITE_PRECISION
            nu_prop = mean_tilt * (tau_prop + tau_cav) - nu_cav

        tau_next = (1.0 - damping) * tau[i] + damping * tau_prop
        nu_next = (1.0 - damping) * nu[i] + damping * nu_prop
        if tau_next < MIN_ACTIVE_SITE_PRECISION:
            tau_next = 0.0
            nu_next = 0.0
        if nu_next > MAX_SITE_NATURAL_MEAN:
            nu_next = MAX_SITE_NATURAL_MEAN
        elif nu_next < -MAX_SITE_NATURAL_MEAN:
            nu_next = -MAX_SITE_NATURAL_MEAN
        dtau = tau_next - tau[i]
        dnu = nu_next - nu[i]
        denom = 1.0 + dtau * sii
        if denom < MIN_RANK1_DENOM:
            # partial downdate: the largest step keeping the rank-1 update
            # well-conditioned
            dtau = (MIN_RANK1_DENOM - 1.0) / sii
            tau_next = tau[i] + dtau
            denom = MIN_RANK1_DENOM

        col = Sigma[:, i].copy()
        mu += ((dnu - dtau * mu[i]) / denom) * col
        Sigma -= np.outer((dtau / denom) * col, col)
        tau[i] = tau_next
        nu[i] = nu_next
        max_delta = max(max_delta, abs(dtau), abs(dnu))
    return max_delta
