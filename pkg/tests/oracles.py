"""Brute-force reference computations, independent of the package's solvers."""

import itertools

import numpy as np


def logistic_loglik(beta, X, y):
    eta = X @ beta
    return np.sum(y * eta - np.logaddexp(0.0, eta))


def grid_logistic_mle(X, y, half_width=8.0, points=21, final_step=1e-7):
    """Maximize the log-likelihood by repeatedly zooming a full tensor grid.

    The log-likelihood is concave, so the best grid point always lies within
    one spacing of the maximizer; each round shrinks the box around it.
    """
    k = X.shape[1]
    center = np.zeros(k)
    hw = half_width
    axis = np.linspace(-1.0, 1.0, points)
    offsets = np.array(list(itertools.product(axis, repeat=k)))
    while True:
        cand = center + hw * offsets
        eta = cand @ X.T
        ll = (eta * y).sum(axis=1) - np.logaddexp(0.0, eta).sum(axis=1)
        center = cand[np.argmax(ll)]
        step = 2 * hw / (points - 1)
        if step < final_step:
            return center
        hw = 2 * step


def kappa_grid(a, b, step=1e-3):
    """deff(kappa) on a grid for weights kappa*a (S1) and (1-kappa)*b (S2)."""
    ks = np.arange(0.0, 1.0 + step / 2, step)
    n = len(a) + len(b)
    out = []
    for k in ks:
        w = np.r_[k * a, (1 - k) * b]
        out.append(n * np.sum(w**2) / np.sum(w) ** 2)
    return ks, np.array(out)


def calibration_kkt(w0, X, t):
    """Solve min sum (v - w0)^2 / (2 w0) s.t. X'v = t through the full KKT system."""
    n, k = X.shape
    A = np.zeros((n + k, n + k))
    A[:n, :n] = np.diag(1.0 / w0)
    A[:n, n:] = X
    A[n:, :n] = X.T
    rhs = np.r_[np.ones(n), t]
    sol = np.linalg.solve(A, rhs)
    return sol[:n]


def fd_linearized_var_mean(y, w, h=1e-6):
    """With-replacement variance of the ratio mean via numerically differentiated influence values."""
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    n = len(w)

    def mean(ww):
        return np.sum(ww * y) / np.sum(ww)

    u = np.empty(n)
    for i in range(n):
        hi = w.copy()
        lo = w.copy()
        hi[i] += h * w[i]
        lo[i] -= h * w[i]
        # u_i = w_i * d(mean)/d(w_i)
        u[i] = (mean(hi) - mean(lo)) / (2 * h)
    return n / (n - 1) * np.sum((u - u.mean()) ** 2)


def enumerate_poisson_expectation(y, d, stat):
    """Exact E[stat(sample)] over every subset of a Poisson design with inclusion probs d."""
    N = len(y)
    total = 0.0
    for mask in itertools.product([False, True], repeat=N):
        m = np.array(mask)
        prob = np.prod(np.where(m, d, 1 - d))
        total += prob * stat(m)
    return total
