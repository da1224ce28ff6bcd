"""Pure-numpy kernel backend.

Used when the compiled extension is unavailable (or forced via
DURACD_NO_EXTENSION=1). The duration-model recursions are evaluated with
scipy's linear filter where that is exact, and the recurrent-network
kernels are vectorized across the batch dimension. Both backends expose
the same functions with the same signatures; see ``duracd._kernels``.

Conventions shared with the compiled backend:
  * all float arrays are C-contiguous float64;
  * the network input at step t is [features_t..., feedback] where the
    feedback scalar is the previous step's scalar head output (the seed
    value at t=0);
  * the gate concatenation order is [h_prev, x_t].
"""

import numpy as np
from scipy.signal import lfilter, lfiltic

NAME = "numpy"


# ---------------------------------------------------------------------------
# duration-model recursions


def acd_recursion(omega, alphas, betas, dt, presample):
    """Conditional means mu_i = omega + sum_j alphas[j]*dt_{i-1-j}
    + sum_j betas[j]*mu_{i-1-j}, with pre-sample dt and mu equal to
    ``presample``. Scalar loop, summation order identical to the
    compiled backend."""
    n = dt.shape[0]
    p = alphas.shape[0]
    q = betas.shape[0]
    mu = np.empty(n)
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        mu[i] = m
    return mu


def _ar_filter(betas, rhs, init):
    """y_i = rhs_i + sum_j betas[j] * y_{i-1-j} with y_{<0} = init.

    lfilter evaluates the same recurrence in direct form II transposed;
    the summation order differs from the scalar loop by O(ulp)."""
    q = betas.shape[0]
    if q == 0:
        return rhs.copy()
    a = np.empty(q + 1)
    a[0] = 1.0
    a[1:] = -betas
    zi = lfiltic([1.0], a, y=np.full(q, init))
    y, _ = lfilter([1.0], a, rhs, zi=zi)
    return y


def _lagged(x, lag, n, presample):
    """x_{i-lag} for i = 0..n-1 with pre-sample entries equal to presample."""
    out = np.empty(n)
    out[:lag] = presample
    if lag < n:
        out[lag:] = x[: n - lag]
    return out


def _mu_fast(omega, alphas, betas, dt, presample):
    rhs = np.full(dt.shape[0], omega)
    for j in range(alphas.shape[0]):
        rhs += alphas[j] * _lagged(dt, j + 1, dt.shape[0], presample)
    return _ar_filter(betas, rhs, presample)


def acd_nll(omega, alphas, betas, dt, presample):
    """Negative log-likelihood sum_i [ln mu_i + dt_i / mu_i]."""
    mu = _mu_fast(omega, alphas, betas, dt, presample)
    if np.any(mu <= 0.0):
        return np.inf
    return float(np.sum(np.log(mu) + dt / mu))


def acd_nll_grad(omega, alphas, betas, dt, presample):
    """NLL and its gradient w.r.t. (omega, alphas, betas).

    Sensitivities d mu_i / d theta follow the same AR recurrence as mu
    with pre-sample sensitivities zero (the pre-sample level is a data
    constant, not a parameter)."""
    n = dt.shape[0]
    p = alphas.shape[0]
    q = betas.shape[0]
    mu = _mu_fast(omega, alphas, betas, dt, presample)
    if np.any(mu <= 0.0) or not np.all(np.isfinite(mu)):
        return np.inf, np.nan, np.full(p, np.nan), np.full(q, np.nan)
    w = (mu - dt) / (mu * mu)
    nll = float(np.sum(np.log(mu) + dt / mu))
    domega = float(w @ _ar_filter(betas, np.ones(n), 0.0))
    dalphas = np.empty(p)
    for j in range(p):
        s = _ar_filter(betas, _lagged(dt, j + 1, n, presample), 0.0)
        dalphas[j] = w @ s
    dbetas = np.empty(q)
    for j in range(q):
        s = _ar_filter(betas, _lagged(mu, j + 1, n, presample), 0.0)
        dbetas[j] = w @ s
    return nll, domega, dalphas, dbetas


def acd_simulate(omega, alphas, betas, eps, presample):
    """Run the duration recursion forward with multiplicative noise:
    mu_i from the recursion, dt_i = mu_i * eps_i. Returns (dt, mu)."""
    n = eps.shape[0]
    p = alphas.shape[0]
    q = betas.shape[0]
    mu = np.empty(n)
    dt = np.empty(n)
    for i in range(n):
        m = omega
        for j in range(p):
            k = i - 1 - j
            m += alphas[j] * (dt[k] if k >= 0 else presample)
        for j in range(q):
            k = i - 1 - j
            m += betas[j] * (mu[k] if k >= 0 else presample)
        mu[i] = m
        dt[i] = m * eps[i]
    return dt, mu


# ---------------------------------------------------------------------------
# recurrent network with per-step scalar head feedback


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def hybrid_forward(feats, seed, Wf, Wi, Wo, Wc, bf, bi, bo, bc, W1, b1, w2, b2):
    """Forward pass over a batch of windows.

    feats : (B, T, nf) input features per step
    seed  : (B,) feedback value fed to step 0
    W*    : (H, H+nf+1) gate weights acting on [h_prev, x_t]
    W1,b1 : (dh, H), (dh,) hidden layer of the scalar head (tanh)
    w2,b2 : (dh,), scalar - linear output layer of the head

    The head output y_t is computed at every step and fed back as the
    last input component of step t+1. Returns the cache dict consumed by
    :func:`hybrid_backward` ('y' holds the per-step head outputs).
    """
    B, T, nf = feats.shape
    H = bf.shape[0]
    D = nf + 1
    dh = b1.shape[0]
    Wall = np.vstack([Wf, Wi, Wo, Wc])
    ball = np.concatenate([bf, bi, bo, bc])
    cache = {
        "h": np.empty((B, T, H)),
        "c": np.empty((B, T, H)),
        "f": np.empty((B, T, H)),
        "i": np.empty((B, T, H)),
        "o": np.empty((B, T, H)),
        "g": np.empty((B, T, H)),
        "tanh_c": np.empty((B, T, H)),
        "a": np.empty((B, T, dh)),
        "y": np.empty((B, T)),
    }
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    fb = np.asarray(seed, dtype=np.float64)
    z = np.empty((B, H + D))
    for t in range(T):
        z[:, :H] = h_prev
        z[:, H : H + nf] = feats[:, t, :]
        z[:, H + nf] = fb
        pre = z @ Wall.T + ball
        ft = _sigmoid(pre[:, :H])
        it = _sigmoid(pre[:, H : 2 * H])
        ot = _sigmoid(pre[:, 2 * H : 3 * H])
        gt = np.tanh(pre[:, 3 * H :])
        ct = ft * c_prev + it * gt
        tc = np.tanh(ct)
        ht = ot * tc
        at = np.tanh(ht @ W1.T + b1)
        yt = at @ w2 + b2
        cache["f"][:, t] = ft
        cache["i"][:, t] = it
        cache["o"][:, t] = ot
        cache["g"][:, t] = gt
        cache["c"][:, t] = ct
        cache["tanh_c"][:, t] = tc
        cache["h"][:, t] = ht
        cache["a"][:, t] = at
        cache["y"][:, t] = yt
        h_prev, c_prev, fb = ht, ct, yt
    return cache


def hybrid_backward(feats, seed, Wf, Wi, Wo, Wc, bf, bi, bo, bc, W1, b1, w2, b2,
                    cache, dh_ext, dy_ext):
    """Reverse-mode pass matching :func:`hybrid_forward`.

    dh_ext : (B, T, H) externally supplied gradients on each hidden state
    dy_ext : (B, T) externally supplied gradients on each head output

    The feedback path (y_t entering step t+1) is handled internally.
    Returns a dict of gradients keyed like the weight arguments plus
    'feats' and 'seed'.
    """
    B, T, nf = feats.shape
    H = bf.shape[0]
    D = nf + 1
    Wall = np.vstack([Wf, Wi, Wo, Wc])
    h, c = cache["h"], cache["c"]
    f, i_, o, g = cache["f"], cache["i"], cache["o"], cache["g"]
    tanh_c, a, y = cache["tanh_c"], cache["a"], cache["y"]

    dWall = np.zeros_like(Wall)
    dball = np.zeros(4 * H)
    dW1 = np.zeros_like(W1)
    db1 = np.zeros_like(b1)
    dw2 = np.zeros_like(w2)
    db2 = 0.0
    dfeats = np.empty_like(feats)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dfb = np.zeros(B)
    z = np.empty((B, H + D))
    for t in range(T - 1, -1, -1):
        dy = dy_ext[:, t] + dfb
        a_t = a[:, t]
        h_t = h[:, t]
        dw2 += a_t.T @ dy
        db2 += float(dy.sum())
        dz1 = (dy[:, None] * w2) * (1.0 - a_t * a_t)
        dW1 += dz1.T @ h_t
        db1 += dz1.sum(axis=0)
        dh = dh_ext[:, t] + dh_next + dz1 @ W1

        tc = tanh_c[:, t]
        dc = dc_next + dh * o[:, t] * (1.0 - tc * tc)
        do = dh * tc
        c_prev = c[:, t - 1] if t > 0 else np.zeros((B, H))
        df = dc * c_prev
        di = dc * g[:, t]
        dg = dc * i_[:, t]
        dpre = np.empty((B, 4 * H))
        dpre[:, :H] = df * f[:, t] * (1.0 - f[:, t])
        dpre[:, H : 2 * H] = di * i_[:, t] * (1.0 - i_[:, t])
        dpre[:, 2 * H : 3 * H] = do * o[:, t] * (1.0 - o[:, t])
        dpre[:, 3 * H :] = dg * (1.0 - g[:, t] * g[:, t])

        z[:, :H] = h[:, t - 1] if t > 0 else 0.0
        z[:, H : H + nf] = feats[:, t, :]
        z[:, H + nf] = y[:, t - 1] if t > 0 else seed
        dWall += dpre.T @ z
        dball += dpre.sum(axis=0)
        dz = dpre @ Wall
        dh_next = dz[:, :H]
        dfeats[:, t, :] = dz[:, H : H + nf]
        dfb = dz[:, H + nf]
        dc_next = dc * f[:, t]
    return {
        "Wf": dWall[:H], "Wi": dWall[H : 2 * H],
        "Wo": dWall[2 * H : 3 * H], "Wc": dWall[3 * H :],
        "bf": dball[:H], "bi": dball[H : 2 * H],
        "bo": dball[2 * H : 3 * H], "bc": dball[3 * H :],
        "W1": dW1, "b1": db1, "w2": dw2, "b2": db2,
        "feats": dfeats, "seed": dfb,
    }
