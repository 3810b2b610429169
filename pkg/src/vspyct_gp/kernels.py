"""
Hot inner loops, each with a numba and a pure-numpy implementation.

The public functions dispatch on ``_accel.USE_NUMBA`` at call time.  Random
draws are always made by the caller with a numpy ``Generator`` and passed
in, so both paths consume identical noise.
"""
import numpy as np

from . import _accel
from ._accel import njit

ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


# --------------------------------------------------------------------------
# split training: reparameterized ELBO with a soft weighted-variance impurity
# --------------------------------------------------------------------------

def _train_split_numpy(X, y, mu, log_std, eps, lr, beta):
    n, d = X.shape
    mu = mu.copy()
    s = log_std.copy()
    m_mu = np.zeros(d + 1)
    v_mu = np.zeros(d + 1)
    m_s = np.zeros(d + 1)
    v_s = np.zeros(d + 1)
    y_sum = y.sum()
    for t in range(eps.shape[0]):
        sigma = np.exp(s)
        theta = mu + sigma * eps[t]
        z = X @ theta[:d] + theta[d]
        r = np.empty(n)
        pos = z >= 0
        r[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        r[~pos] = ez / (1.0 + ez)
        s_r = r.sum()
        a_r = r @ y
        s_l = n - s_r
        ybar_r = a_r / s_r if s_r > 1e-12 else 0.0
        ybar_l = (y_sum - a_r) / s_l if s_l > 1e-12 else 0.0
        dr = ((y - ybar_r) ** 2 - (y - ybar_l) ** 2) / n
        gz = dr * r * (1.0 - r)
        g = np.empty(d + 1)
        g[:d] = X.T @ gz
        g[d] = gz.sum()
        g_mu = g + beta * mu
        g_s = g * eps[t] * sigma + beta * (sigma * sigma - 1.0)

        k = t + 1
        bc1 = 1.0 - ADAM_B1 ** k
        bc2 = 1.0 - ADAM_B2 ** k
        m_mu = ADAM_B1 * m_mu + (1.0 - ADAM_B1) * g_mu
        v_mu = ADAM_B2 * v_mu + (1.0 - ADAM_B2) * g_mu * g_mu
        mu -= lr * (m_mu / bc1) / (np.sqrt(v_mu / bc2) + ADAM_EPS)
        m_s = ADAM_B1 * m_s + (1.0 - ADAM_B1) * g_s
        v_s = ADAM_B2 * v_s + (1.0 - ADAM_B2) * g_s * g_s
        s -= lr * (m_s / bc1) / (np.sqrt(v_s / bc2) + ADAM_EPS)
    return mu, s


@njit(cache=True)
def _train_split_numba(X, y, mu, log_std, eps, lr, beta):
    n, d = X.shape
    p = d + 1
    mu = mu.copy()
    s = log_std.copy()
    m_mu = np.zeros(p)
    v_mu = np.zeros(p)
    m_s = np.zeros(p)
    v_s = np.zeros(p)
    theta = np.empty(p)
    sigma = np.empty(p)
    g = np.empty(p)
    r = np.empty(n)
    y_sum = 0.0
    for i in range(n):
        y_sum += y[i]
    for t in range(eps.shape[0]):
        for j in range(p):
            sigma[j] = np.exp(s[j])
            theta[j] = mu[j] + sigma[j] * eps[t, j]
        s_r = 0.0
        a_r = 0.0
        for i in range(n):
            z = theta[d]
            for j in range(d):
                z += X[i, j] * theta[j]
            if z >= 0:
                ri = 1.0 / (1.0 + np.exp(-z))
            else:
                ez = np.exp(z)
                ri = ez / (1.0 + ez)
            r[i] = ri
            s_r += ri
            a_r += ri * y[i]
        s_l = n - s_r
        ybar_r = a_r / s_r if s_r > 1e-12 else 0.0
        ybar_l = (y_sum - a_r) / s_l if s_l > 1e-12 else 0.0
        for j in range(p):
            g[j] = 0.0
        for i in range(n):
            er = y[i] - ybar_r
            el = y[i] - ybar_l
            gz = (er * er - el * el) / n * r[i] * (1.0 - r[i])
            for j in range(d):
                g[j] += X[i, j] * gz
            g[d] += gz
        k = t + 1
        bc1 = 1.0 - ADAM_B1 ** k
        bc2 = 1.0 - ADAM_B2 ** k
        for j in range(p):
            g_mu = g[j] + beta * mu[j]
            g_s = g[j] * eps[t, j] * sigma[j] + beta * (sigma[j] * sigma[j] - 1.0)
            m_mu[j] = ADAM_B1 * m_mu[j] + (1.0 - ADAM_B1) * g_mu
            v_mu[j] = ADAM_B2 * v_mu[j] + (1.0 - ADAM_B2) * g_mu * g_mu
            mu[j] -= lr * (m_mu[j] / bc1) / (np.sqrt(v_mu[j] / bc2) + ADAM_EPS)
            m_s[j] = ADAM_B1 * m_s[j] + (1.0 - ADAM_B1) * g_s
            v_s[j] = ADAM_B2 * v_s[j] + (1.0 - ADAM_B2) * g_s * g_s
            s[j] -= lr * (m_s[j] / bc1) / (np.sqrt(v_s[j] / bc2) + ADAM_EPS)
    return mu, s


def train_split(X, y, mu0, log_std0, eps, lr, beta):
    """Run Adam on the split ELBO for ``len(eps)`` epochs.

    ``mu0``/``log_std0`` pack (w, b) as a length d+1 vector; ``eps`` holds one
    standard-normal reparameterization draw per epoch.  Returns the final
    (mean, log_std) pair.
    """
    args = (
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.asarray(mu0, dtype=np.float64),
        np.asarray(log_std0, dtype=np.float64),
        np.ascontiguousarray(eps, dtype=np.float64),
        float(lr),
        float(beta),
    )
    if _accel.USE_NUMBA:
        return _train_split_numba(*args)
    return _train_split_numpy(*args)


# --------------------------------------------------------------------------
# Monte-Carlo routing
# --------------------------------------------------------------------------

def _route_numpy(left, right, leaf_of, split_of, W_mean, W_std, b_mean, b_std, x, noise, depth):
    M = noise.shape[0]
    d = x.shape[0]
    W = W_mean[None] + W_std[None] * noise[:, :, :d]
    logits = W @ x + b_mean[None] + b_std[None] * noise[:, :, d]
    rho = np.empty_like(logits)
    pos = logits >= 0
    rho[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ez = np.exp(logits[~pos])
    rho[~pos] = ez / (1.0 + ez)
    go_right = rho > 0.5
    node = np.zeros(M, dtype=np.int64)
    rows = np.arange(M)
    for _ in range(depth):
        k = split_of[node]
        internal = k >= 0
        if not internal.any():
            break
        kk = np.where(internal, k, 0)
        nxt = np.where(go_right[rows, kk], right[node], left[node])
        node = np.where(internal, nxt, node)
    return leaf_of[node]


@njit(cache=True)
def _route_numba(left, right, leaf_of, split_of, W_mean, W_std, b_mean, b_std, x, noise, depth):
    M = noise.shape[0]
    d = x.shape[0]
    out = np.empty(M, dtype=np.int64)
    for m in range(M):
        node = 0
        while split_of[node] >= 0:
            k = split_of[node]
            z = b_mean[k] + b_std[k] * noise[m, k, d]
            for j in range(d):
                z += (W_mean[k, j] + W_std[k, j] * noise[m, k, j]) * x[j]
            if z >= 0:
                rho = 1.0 / (1.0 + np.exp(-z))
            else:
                ez = np.exp(z)
                rho = ez / (1.0 + ez)
            if rho <= 0.5:
                node = left[node]
            else:
                node = right[node]
        out[m] = leaf_of[node]
    return out


def route_samples(arrays, x, noise):
    """Leaf id reached by each of ``len(noise)`` sampled routings of ``x``.

    ``arrays`` is the flattened tree from ``Tree.routing_arrays``; ``noise``
    has shape (M, n_internal, d+1) and holds the standard-normal draws for
    every internal node of every sample.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if arrays.n_internal == 0:
        return np.full(noise.shape[0], arrays.leaf_of[0], dtype=np.int64)
    args = (arrays.left, arrays.right, arrays.leaf_of, arrays.split_of,
            arrays.W_mean, arrays.W_std, arrays.b_mean, arrays.b_std,
            x, np.ascontiguousarray(noise, dtype=np.float64), arrays.depth)
    if _accel.USE_NUMBA:
        return _route_numba(*args)
    return _route_numpy(*args)
