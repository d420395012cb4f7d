"""Pure-numpy random-walk Metropolis kernel (fallback backend).

Same contract as the compiled kernel in _mh_cy.pyx: one iteration per row of
the pre-generated increment matrix, acceptance decided against pre-generated
log-uniforms, states recorded after every iteration.
"""

import numpy as np


def _log_posterior(x, y, family, dispersion, prior_mean, prior_sd, beta):
    lp = -0.5 * float(np.sum(((beta - prior_mean) / prior_sd) ** 2))
    if y.shape[0] == 0:
        return lp
    eta = x @ beta
    if family == 0:  # gaussian, identity link, known variance
        lp += -0.5 / dispersion * float(np.sum((y - eta) ** 2))
    elif family == 1:  # poisson, log link
        lp += float(np.sum(y * eta - np.exp(eta)))
    else:  # negative binomial, log link, fixed dispersion theta
        theta = dispersion
        mu = np.exp(eta)
        log_denom = np.log(theta + mu)
        lp += float(np.sum(y * (eta - log_denom) + theta * (np.log(theta) - log_denom)))
    return lp


def mh_chain(x, y, family, dispersion, prior_mean, prior_sd, proposal_sd, start, z, logu,
             stuck_window):
    """Run the chain; returns (states, n_accept, stuck_at).

    states has one row per iteration (the current state after the accept /
    reject step). stuck_at is the iteration index at which stuck_window
    consecutive rejections were reached, or -1.
    """
    n_iter, p = z.shape
    states = np.empty((n_iter, p), dtype=np.float64)
    beta = np.asarray(start, dtype=np.float64).copy()
    lp = _log_posterior(x, y, family, dispersion, prior_mean, prior_sd, beta)
    n_accept = 0
    consecutive_rejects = 0
    with np.errstate(over="ignore"):
        for t in range(n_iter):
            prop = beta + proposal_sd * z[t]
            lp_prop = _log_posterior(x, y, family, dispersion, prior_mean, prior_sd, prop)
            if lp_prop - lp >= logu[t]:
                beta = prop
                lp = lp_prop
                n_accept += 1
                consecutive_rejects = 0
            else:
                consecutive_rejects += 1
                if stuck_window > 0 and consecutive_rejects >= stuck_window:
                    states[t] = beta
                    return states[: t + 1], n_accept, t
            states[t] = beta
    return states, n_accept, -1
