# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled EP site-update sweep.

Same operation order as bads._ep_numpy.ep_sweep; keep both in sync.
"""

from libc.math cimport exp, sqrt, fabs, erfc

cdef double INV_SQRT2 = 0.7071067811865475244
cdef double INV_SQRT_2PI = 0.3989422804014326779
cdef double MIN_CAVITY_PRECISION = 1e-12
cdef double MIN_TILTED_VARIANCE = 1e-10
# probit site precisions satisfy tau <= 1 at any fixed point; above this is
# transient numerical drift (see the numpy fallback for details)
cdef double MAX_SITE_PRECISION = 2.0
cdef double MIN_RANK1_DENOM = 1e-3
cdef double MAX_SITE_NATURAL_MEAN = 1e5
cdef double MIN_ACTIVE_SITE_PRECISION = 1e-12


cdef inline double probit_ratio(double u) nogil:
    """N(u) / Phi(u), stable for arbitrarily negative u."""
    cdef double x, t
    cdef int k
    if u > -6.0:
        return exp(-0.5 * u * u) * INV_SQRT_2PI / (0.5 * erfc(-u * INV_SQRT2))
    # Mills-ratio continued fraction, evaluated backward: for x = -u > 6,
    # N(u)/Phi(u) = x + 1/(x + 2/(x + 3/(x + ...))).
    x = -u
    t = x
    for k in range(64, 0, -1):
        t = x + k / t
    return t


def ep_sweep(double[:, ::1] K not None,
             double[::1] mu not None,
             double[:, ::1] Sigma not None,
             double[::1] tau not None,
             double[::1] nu not None,
             double[::1] z not None,
             long long[::1] order not None,
             double damping):
    """One damped EP sweep over the sites listed in ``order``.

    Updates ``mu``, ``Sigma``, ``tau`` and ``nu`` in place via rank-1
    posterior refreshes and returns the largest damped site-parameter change.
    """
    cdef Py_ssize_t n = mu.shape[0]
    cdef Py_ssize_t idx, i, a, b
    cdef double sii, tau_cav, nu_cav, var_cav, mean_cav, s, u, r
    cdef double mean_tilt, var_tilt, tau_prop, nu_prop
    cdef double tau_next, nu_next, dtau, dnu, denom, coef_mu, coef_sig, ca
    cdef double max_delta = 0.0
    cdef double[::1] col = K[0].copy()  # scratch buffer, overwritten per site

    with nogil:
        for idx in range(order.shape[0]):
            i = <Py_ssize_t> order[idx]
            sii = Sigma[i, i]
            tau_cav = 1.0 / sii - tau[i]
            if tau_cav < MIN_CAVITY_PRECISION:
                continue
            nu_cav = mu[i] / sii - nu[i]
            var_cav = 1.0 / tau_cav
            mean_cav = nu_cav * var_cav

            s = sqrt(1.0 + var_cav)
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
                # partial downdate: the largest step keeping the rank-1
                # update well-conditioned
                dtau = (MIN_RANK1_DENOM - 1.0) / sii
                tau_next = tau[i] + dtau
                denom = MIN_RANK1_DENOM

            for a in range(n):
                col[a] = Sigma[a, i]
            coef_mu = (dnu - dtau * mu[i]) / denom
            coef_sig = dtau / denom
            for a in range(n):
                mu[a] += coef_mu * col[a]
            # symmetric rank-1 downdate: fill the upper triangle, mirror it
            for a in range(n):
                ca = coef_sig * col[a]
                for b in range(a, n):
                    Sigma[a, b] -= ca * col[b]
            for a in range(n):
                for b in range(a + 1, n):
                    Sigma[b, a] = Sigma[a, b]
            tau[i] = tau_next
            nu[i] = nu_next
            if fabs(dtau) > max_delta:
                max_delta = fabs(dtau)
            if fabs(dnu) > max_delta:
                max_delta = fabs(dnu)
    return max_delta
