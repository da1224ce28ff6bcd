"""Classic ACD(p, q) duration model with exponential errors.

The conditional mean follows
    mu_i = omega + sum_{j=1..p} alpha_j * dt_{i-j} + sum_{j=1..q} beta_j * mu_{i-j}
and durations are conditionally exponential with mean mu_i, giving the
negative log-likelihood sum_i [ln mu_i + dt_i / mu_i].

Fitting maximizes the likelihood over log-reparameterized coordinates
(omega, alpha_j, beta_j all exp of unconstrained values) by gradient
descent with Barzilai-Borwein step seeding and Armijo backtracking.
Gradients come from forward accumulation through the recursion (see the
kernel backends).
"""

from dataclasses import dataclass

import numpy as np

from duracd import _kernels as K
from duracd.errors import DataError, NumericError

__all__ = [
    "AcdParams",
    "AcdFitResult",
    "acd_recursion",
    "acd_nll",
    "acd_fit",
    "acd_forecast_one",
    "exp_quantile",
    "save_acd_params",
    "load_acd_params",
]


@dataclass
class AcdParams:
    """omega > 0, alphas >= 0 (duration lags), betas >= 0 (mean lags)."""

    omega: float
    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        self.omega = float(self.omega)
        self.alphas = np.atleast_1d(np.asarray(self.alphas, dtype=np.float64))
        self.betas = np.atleast_1d(np.asarray(self.betas, dtype=np.float64))
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if np.any(self.alphas < 0) or np.any(self.betas < 0):
            raise ValueError("alpha and beta coefficients must be nonnegative")

    @property
    def p(self) -> int:
        return self.alphas.shape[0]

    @property
    def q(self) -> int:
        return self.betas.shape[0]

    @property
    def persistence(self) -> float:
        return float(self.alphas.sum() + self.betas.sum())

    def is_stationary(self) -> bool:
        return self.persistence < 1.0

    def unconditional_mean(self) -> float:
        if not self.is_stationary():
            raise ValueError("unconditional mean undefined: persistence >= 1")
        return self.omega / (1.0 - self.persistence)


@dataclass
class AcdFitResult:
    params: AcdParams
    nll: float
    iterations: int
    converged: bool
    message: str = ""


def _check_inputs(durations, presample_mu):
    dt = np.ascontiguousarray(durations, dtype=np.float64)
    if dt.ndim != 1 or dt.shape[0] == 0:
        raise DataError("durations must be a nonempty 1-d array")
    if np.any(dt <= 0):
        raise DataError("durations must be strictly positive")
    if not presample_mu > 0:
        raise DataError("presample_mu must be positive")
    return dt


def acd_recursion(params: AcdParams, durations, presample_mu: float) -> np.ndarray:
    """Conditional means mu_i for the whole series; pre-sample durations
    and means are both set to ``presample_mu``."""
    dt = _check_inputs(durations, presample_mu)
    mu = K.acd_recursion(params.omega, params.alphas, params.betas, dt, float(presample_mu))
    if not np.all(np.isfinite(mu)):
        raise NumericError("conditional-mean recursion produced non-finite values")
    return mu


def acd_nll(params: AcdParams, durations, presample_mu: float) -> float:
    """Negative log-likelihood sum_i [ln mu_i + dt_i / mu_i]."""
    dt = _check_inputs(durations, presample_mu)
    nll = K.acd_nll(params.omega, params.alphas, params.betas, dt, float(presample_mu))
    if not np.isfinite(nll):
        raise NumericError("likelihood undefined: nonpositive conditional mean")
    return nll


def default_init(durations, p: int, q: int) -> AcdParams:
    """Starting point for the optimizer: total alpha 0.1, total beta 0.8,
    omega at 0.1 times the sample mean."""
    m = float(np.mean(durations))
    return AcdParams(
        omega=0.1 * m,
        alphas=np.full(p, 0.1 / p),
        betas=np.full(q, 0.8 / q),
    )


def acd_fit(durations, p: int = 1, q: int = 1, init: AcdParams | None = None,
            max_iters: int = 5000, tol: float = 1e-6) -> AcdFitResult:
    """Maximum-likelihood fit of ACD(p, q).

    Minimizes the per-observation NLL over u = log(omega, alphas, betas)
    by gradient descent: Barzilai-Borwein step seeding, Armijo
    backtracking, convergence when the gradient max-norm falls below
    ``tol``. The pre-sample level is the sample mean of ``durations``.
    Stationarity is checked after the fact; a violating optimum is
    returned with ``converged=False``.
    """
    dt = _check_inputs(durations, 1.0)
    n = dt.shape[0]
    if n < 10 * (p + q):
        raise DataError(f"need well over p+q={p + q} observations, got {n}")
    presample = float(np.mean(dt))
    if init is None:
        init = default_init(dt, p, q)
    if init.p != p or init.q != q:
        raise ValueError("init orders do not match requested (p, q)")

    # log-reparameterization keeps every coordinate positive
    u = np.log(np.concatenate([[init.omega], np.maximum(init.alphas, 1e-10),
                               np.maximum(init.betas, 1e-10)]))

    def nll_only(uv):
        with np.errstate(over="ignore"):  # the line search rejects inf
            th = np.exp(uv)
        return K.acd_nll(th[0], th[1:1 + p], th[1 + p:], dt, presample) / n

    def nll_grad(uv):
        with np.errstate(over="ignore"):
            th = np.exp(uv)
        nll, dw, da, db = K.acd_nll_grad(th[0], th[1:1 + p], th[1 + p:], dt, presample)
        g = np.concatenate([[dw], da, db]) * th / n
        return nll / n, g

    f, g = nll_grad(u)
    if not np.isfinite(f):
        raise NumericError("non-finite likelihood at the initial point; "
                           "consider rescaling the durations")
    converged = False
    message = ""
    it = 0
    s_prev = y_prev = None
    while it < max_iters:
        it += 1
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        d = -g
        if s_prev is not None:
            sy = float(s_prev @ y_prev)
            t = float(s_prev @ s_prev) / sy if sy > 0 else 1.0
            t = min(max(t, 1e-10), 1e10)
        else:
            t = 1.0 / max(1.0, np.max(np.abs(g)))
        slope = float(g @ d)
        accepted = False
        for _ in range(60):
            u_try = u + t * d
            f_try = nll_only(u_try)
            if np.isfinite(f_try) and f_try <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = "line search failed"
            break
        f_new, g_new = nll_grad(u_try)
        s_prev = u_try - u
        y_prev = g_new - g
        u, f, g = u_try, f_new, g_new

    th = np.exp(u)
    params = AcdParams(omega=th[0], alphas=th[1:1 + p], betas=th[1 + p:])
    if converged and not params.is_stationary():
        converged = False
        message = f"stationarity violated: persistence {params.persistence:.4f} >= 1"
    return AcdFitResult(params=params, nll=f * n, iterations=it,
                        converged=converged, message=message)


def acd_forecast_one(params: AcdParams, durations, mu_history) -> float:
    """One-step-ahead conditional mean from the most recent p durations
    and q fitted means."""
    dt = np.asarray(durations, dtype=np.float64)
    mu = np.asarray(mu_history, dtype=np.float64)
    if dt.shape[0] < params.p or mu.shape[0] < params.q:
        raise DataError(f"need at least {params.p} durations and {params.q} means")
    out = params.omega
    for j in range(params.p):
        out += params.alphas[j] * dt[-1 - j]
    for j in range(params.q):
        out += params.betas[j] * mu[-1 - j]
    return float(out)


def exp_quantile(mu, alpha: float, tail: str = "lower"):
    """alpha-quantile of an exponential with mean mu.

    lower: value exceeded with probability 1 - alpha, -mu*ln(1 - alpha).
    upper: value exceeded with probability alpha, -mu*ln(alpha).
    Vectorized over mu.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    mu_arr = np.asarray(mu, dtype=np.float64)
    if np.any(mu_arr <= 0):
        raise ValueError("mu must be positive")
    if tail == "lower":
        out = -mu_arr * np.log1p(-alpha)
    elif tail == "upper":
        out = -mu_arr * np.log(alpha)
    else:
        raise ValueError("tail must be 'lower' or 'upper'")
    return float(out) if np.isscalar(mu) else out


# ---------------------------------------------------------------------------
# flat key-value serialization


def _fmt_floats(arr) -> str:
    return ",".join(repr(float(v)) for v in np.atleast_1d(arr))


def save_acd_params(path, params: AcdParams, presample_mu: float,
                    extra: dict | None = None) -> None:
    """Write fitted parameters as `key = value` lines."""
    lines = [
        "model = ACD",
        f"p = {params.p}",
        f"q = {params.q}",
        f"omega = {params.omega!r}",
        f"alpha = {_fmt_floats(params.alphas)}",
        f"beta = {_fmt_floats(params.betas)}",
        f"presample_mu = {presample_mu!r}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_acd_params(path):
    """Read a file written by :func:`save_acd_params`.

    Returns (params, presample_mu, extra) where ``extra`` holds any
    additional keys as strings.
    """
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    if fields.get("model") != "ACD":
        raise DataError(f"{path}: not an ACD parameter file")
    try:
        params = AcdParams(
            omega=float(fields["omega"]),
            alphas=np.array([float(v) for v in fields["alpha"].split(",")]),
            betas=np.array([float(v) for v in fields["beta"].split(",")]),
        )
        presample_mu = float(fields["presample_mu"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed ACD parameter file ({exc})") from exc
    known = {"model", "p", "q", "omega", "alpha", "beta", "presample_mu"}
    extra = {k: v for k, v in fields.items() if k not in known}
    return params, presample_mu, extra
