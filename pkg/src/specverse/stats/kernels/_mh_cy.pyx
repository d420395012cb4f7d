# cython: language_level=3
"""Compiled random-walk Metropolis kernel (hot loop).

Contract mirrors _mh_py.mh_chain. The log-posterior drops additive constants;
overflow of exp() yields -inf and the proposal is rejected, matching the
numpy backend's errstate(over="ignore") behaviour.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef double _log_posterior(double[:, ::1] x, double[::1] y, int family,
                           double dispersion, double[::1] prior_mean,
                           double[::1] prior_sd, double[::1] beta) nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t p = beta.shape[0]
    cdef Py_ssize_t i, j
    cdef double lp = 0.0
    cdef double eta, mu, log_denom, d, log_theta

    for j in range(p):
        d = (beta[j] - prior_mean[j]) / prior_sd[j]
        lp += -0.5 * d * d

    if n == 0:
        return lp

    if family == 2:
        log_theta = log(dispersion)

    for i in range(n):
        eta = 0.0
        for j in range(p):
            eta += x[i, j] * beta[j]
        if family == 0:
            d = y[i] - eta
            lp += -0.5 / dispersion * d * d
        elif family == 1:
            lp += y[i] * eta - exp(eta)
        else:
            mu = exp(eta)
            if mu == INFINITY:
                return -INFINITY
            log_denom = log(dispersion + mu)
            lp += y[i] * (eta - log_denom) + dispersion * (log_theta - log_denom)
    return lp


def mh_chain(double[:, ::1] x, double[::1] y, int family, double dispersion,
             double[::1] prior_mean, double[::1] prior_sd, double[::1] proposal_sd,
             double[::1] start, double[:, ::1] z, double[::1] logu, int stuck_window):
    """Run the chain; returns (states, n_accept, stuck_at)."""
    cdef Py_ssize_t n_iter = z.shape[0]
    cdef Py_ssize_t p = z.shape[1]
    states_arr = np.empty((n_iter, p), dtype=np.float64)
    prop_arr = np.empty(p, dtype=np.float64)
    beta_arr = np.array(start, dtype=np.float64, copy=True)
    cdef double[:, ::1] states = states_arr
    cdef double[::1] prop = prop_arr
    cdef double[::1] beta = beta_arr
    cdef double lp, lp_prop
    cdef Py_ssize_t t, j
    cdef long n_accept = 0
    cdef long consecutive_rejects = 0
    cdef long stuck_at = -1

    with nogil:
        lp = _log_posterior(x, y, family, dispersion, prior_mean, prior_sd, beta)
        for t in range(n_iter):
            for j in range(p):
                prop[j] = beta[j] + proposal_sd[j] * z[t, j]
            lp_prop = _log_posterior(x, y, family, dispersion, prior_mean, prior_sd, prop)
            if lp_prop - lp >= logu[t]:
                for j in range(p):
                    beta[j] = prop[j]
                lp = lp_prop
                n_accept += 1
                consecutive_rejects = 0
            else:
                consecutive_rejects += 1
                if stuck_window > 0 and consecutive_rejects >= stuck_window:
                    for j in range(p):
                        states[t, j] = beta[j]
                    stuck_at = t
                    break
            for j in range(p):
                states[t, j] = beta[j]
    if stuck_at >= 0:
        return states_arr[: stuck_at + 1], n_accept, stuck_at
    return states_arr, n_accept, -1
