"""Closed-form multi-good models.

* additive logarithmic utility with running consumption,
* additive power utility of terminal wealth with an Ornstein-Uhlenbeck
  market price of risk (exponential-quadratic value function),
* Cobb-Douglas utility of terminal wealth with two correlated factors.

Policies are path functionals: callables taking a ``PathBundle`` and
returning arrays on its grid, so the simulator controls discretisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import RiccatiBlowUp
from .image_duality import GoodsPrices, image_utility
from .sim_engine import Clock, ModelSpec, OUSpec, PathBundle, stochastic_exponential
from .utility_fields import LogUtility, PowerUtility, make_additive, make_cobb_douglas

GAMMA_TOL = 1e-8
ODE_ATOL = 1e-10
ODE_RTOL = 1e-8
BLOWUP = 1e8


def _terminal_array(values, K):
    """Place terminal values ``(N, ...)`` in the last column of a grid array."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((values.shape[0], K + 1) + values.shape[1:])
    out[:, -1] = values
    return out


# ---------------------------------------------------------------------------
# additive logarithmic utility


@dataclass(frozen=True)
class LogModelParams:
    """``dS/S = b dt + sigma dW`` (discounted), clock ``(1 - e^{-nu t})/nu``,
    ``m`` goods with price curves ``goods_s0 * exp(goods_growth t)``."""

    nu: float
    T: float
    b: np.ndarray
    sigma: np.ndarray
    goods_s0: np.ndarray
    goods_growth: np.ndarray | None = None
    corr: np.ndarray | None = None
    s0: np.ndarray | None = None

    def __post_init__(self):
        if not (self.nu > 0 and self.T > 0):
            raise ValueError("nu and T must be positive")
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != b.size:
            sigma = sigma.T
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "goods_s0", np.atleast_1d(np.asarray(self.goods_s0, dtype=float)))

    @property
    def m(self) -> int:
        return self.goods_s0.size

    @property
    def d(self) -> int:
        return self.b.size

    def model_spec(self) -> ModelSpec:
        s0 = np.ones(self.d) if self.s0 is None else self.s0
        return ModelSpec(s0=s0, drift=self.b, vol=self.sigma, corr=self.corr)

    def clock(self) -> Clock:
        return Clock("exponential", self.T, self.nu)

    def prices(self) -> GoodsPrices:
        return GoodsPrices.exponential(self.goods_s0, self.goods_growth)

    def utility(self):
        return make_additive([LogUtility() for _ in range(self.m)])

    def gamma(self) -> np.ndarray:
        """Solve ``sigma corr sigma^T gamma = b``; raise if no solution."""
        C = self.model_spec().covariance
        g, *_ = np.linalg.lstsq(C, self.b, rcond=None)
        res = float(np.max(np.abs(C @ g - self.b), initial=0.0))
        if res > GAMMA_TOL:
            raise ValueError(f"no gamma with sigma sigma^T gamma = b (residual {res:.3e})")
        return g


@dataclass
class LogPolicy:
    """Optimal policy of the logarithmic model at capital ``x``.

    ``gamma_shift``, ``scale`` and ``weights`` produce admissible
    perturbations: a different portfolio, a fraction of the wealth left
    unconsumed, and a different expenditure split across goods.
    """

    params: LogModelParams
    x: float
    gamma_shift: np.ndarray | None = None
    scale: float = 1.0
    weights: np.ndarray | None = None

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError("initial capital must be positive")
        if not 0 < self.scale <= 1:
            raise ValueError("consumption scale must be in (0, 1]")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("expenditure weights must be positive and sum to 1")

    @property
    def gamma(self):
        g = self.params.gamma()
        return g if self.gamma_shift is None else g + np.asarray(self.gamma_shift, dtype=float)

    @property
    def rate(self) -> float:
        nu, T = self.params.nu, self.params.T
        return self.x * nu / -math.expm1(-nu * T)

    def exponential(self, paths: PathBundle) -> np.ndarray:
        return stochastic_exponential(self.gamma, paths)

    def c_star(self, paths: PathBundle) -> np.ndarray:
        """Total expenditure rate ``x nu / (1 - e^{-nu T}) E_t``."""
        return self.scale * self.rate * self.exponential(paths)

    def consumption(self, paths: PathBundle) -> np.ndarray:
        w = np.full(self.params.m, 1.0 / self.params.m) if self.weights is None else np.asarray(self.weights)
        S = self.params.prices()(paths.times[None, :], np.zeros((1, paths.times.size), dtype=int))
        return self.c_star(paths)[..., None] * w / S

    def dual(self, paths: PathBundle, y: float) -> np.ndarray:
        return y / self.exponential(paths)

    def wealth(self, paths: PathBundle) -> np.ndarray:
        """Wealth financing the policy: ``x E_t (e^{-nu t} - e^{-nu T}) / (1 - e^{-nu T})``."""
        nu, T = self.params.nu, self.params.T
        D = np.exp(-nu * paths.times) - math.exp(-nu * T)
        return self.x * self.exponential(paths) * D / -math.expm1(-nu * T)


def log_policy(params: LogModelParams, x: float) -> LogPolicy:
    return LogPolicy(params, x)


def log_perturbations(params: LogModelParams, x: float, n: int, rng) -> list:
    """Random admissible alternatives: portfolio shift, partial consumption
    and a non-uniform expenditure split."""
    g = params.gamma()
    spread = 0.5 * float(np.max(np.abs(g), initial=0.0)) + 0.2
    out = []
    for _ in range(n):
        out.append(LogPolicy(
            params, x,
            gamma_shift=rng.normal(0.0, spread, params.d),
            scale=float(rng.uniform(0.85, 1.0)),
            weights=rng.dirichlet(np.full(params.m, 8.0)),
        ))
    return out


def log_value(params: LogModelParams, x: float) -> float:
    """``u(x)``; uses ``E log E_t = gamma^T b t / 2`` for constant coefficients."""
    g = params.gamma()
    drift = 0.5 * float(g @ params.b)
    nu, m = params.nu, params.m
    rate = x * nu / -math.expm1(-nu * params.T)
    g_growth = np.zeros(m) if params.goods_growth is None else np.asarray(params.goods_growth)
    const = m * math.log(rate / m) - float(np.sum(np.log(params.goods_s0)))
    slope = m * drift - float(np.sum(g_growth))
    integrand = lambda t: (const + slope * t) * math.exp(-nu * t)
    return quad(integrand, 0.0, params.T, epsabs=1e-14, epsrel=1e-13)[0]


def log_marginal(params: LogModelParams, x: float) -> float:
    """``u'(x) = m kappa_T / x``."""
    return params.m * params.clock().total / x


# ---------------------------------------------------------------------------
# Kim-Omberg power utility of terminal wealth


@dataclass(frozen=True)
class KimOmbergParams:
    """Bank at rate ``r``; stock ``dS/S = (r + sigma theta) dt + sigma dW^1``;
    ``d theta = -lam (theta - theta_bar) dt + sig_theta dW^theta`` with
    ``d<W^1, W^theta> = rho dt``; utility ``sum_i c_i^p / p`` at ``T``."""

    r: float
    lam: float
    sig_theta: float
    theta_bar: float
    rho: float
    theta0: float
    p: float
    goods_T: np.ndarray
    T: float
    sigma: float = 0.2
    s0: float = 1.0

    def __post_init__(self):
        if not self.p < 0:
            raise ValueError("power p must be negative")
        if not -1 < self.rho < 1:
            raise ValueError("correlation must lie in (-1, 1)")
        if not (self.lam > 0 and self.T > 0 and self.sigma > 0 and self.sig_theta >= 0):
            raise ValueError("need lam, T, sigma > 0 and sig_theta >= 0")
        if self.r < 0:
            raise ValueError("interest rate must be nonnegative")
        S = np.atleast_1d(np.asarray(self.goods_T, dtype=float))
        if np.any(~(S > 0)):
            raise ValueError("goods prices must be positive")
        object.__setattr__(self, "goods_T", S)

    @property
    def q(self) -> float:
        return self.p / (1 - self.p)

    @property
    def A(self) -> float:
        return float(np.sum(self.goods_T ** (-self.q)))

    @property
    def B(self) -> float:
        return self.A ** (1 - self.p)

    @property
    def k(self) -> float:
        return self.p / (2 * (1 - self.p))

    def utility(self):
        return make_additive([PowerUtility(self.p) for _ in self.goods_T])

    def model_spec(self) -> ModelSpec:
        # factor 0 drives theta, factor 1 the stock
        return ModelSpec(
            s0=[self.s0], drift=[self.r], vol=[[0.0, self.sigma]],
            corr=[[1.0, self.rho], [self.rho, 1.0]], theta_loading=[self.sigma],
            ou=OUSpec(self.theta0, self.theta_bar, self.lam, self.sig_theta),
        )

    def clock(self) -> Clock:
        return Clock("terminal", self.T)


def _ko_rhs(P: KimOmbergParams):
    k, rho, st, lam, tb, r, p = P.k, P.rho, P.sig_theta, P.lam, P.theta_bar, P.r, P.p

    def rhs(tau, z):
        a, b, c = z
        u = 1 + 2 * rho * st * c
        dc = k * u * u - 2 * lam * c + 2 * st * st * c * c
        db = 2 * k * u * rho * st * b - lam * b + 2 * lam * tb * c + 2 * st * st * b * c
        da = p * r + k * rho * rho * st * st * b * b + lam * tb * b + st * st * c + 0.5 * st * st * b * b
        return [da, db, dc]

    return rhs


@dataclass
class KimOmbergSolution:
    """``J(t, x, theta) = (x^p/p) exp(a(t) + b(t) theta + c(t) theta^2)``."""

    params: KimOmbergParams
    ode: object

    def coefficients(self, t):
        t = np.asarray(t, dtype=float)
        z = self.ode.sol(self.params.T - t)
        return z[0], z[1], z[2]

    def f(self, t, theta):
        a, b, c = self.coefficients(t)
        return a + b * theta + c * theta * theta

    def value(self, t, x, theta):
        p = self.params.p
        return np.asarray(x, dtype=float) ** p / p * np.exp(self.f(t, theta))

    def fraction(self, t, theta):
        """Optimal fraction of wealth in the stock."""
        P = self.params
        _, b, c = self.coefficients(t)
        return (theta + P.rho * P.sig_theta * (b + 2 * c * theta)) / (P.sigma * (1 - P.p))

    def shares(self, t, x, theta, S):
        """Number of shares ``H = fraction * X / S``."""
        return self.fraction(t, theta) * np.asarray(x) / np.asarray(S)

    def u(self, x):
        return float(self.value(0.0, x, self.params.theta0))

    def u_prime(self, x):
        P = self.params
        return float(x ** (P.p - 1) * np.exp(self.f(0.0, P.theta0)))

    @property
    def expected_cp(self) -> float:
        """``E[c*_T(1)^p] = exp(f(0, theta_0)) / B``."""
        P = self.params
        return float(np.exp(self.f(0.0, P.theta0)) / P.B)

    def table(self, n=101):
        t = np.linspace(0.0, self.params.T, n)
        a, b, c = self.coefficients(t)
        return np.column_stack([t, a, b, c])

    # -- HJB residual --------------------------------------------------------

    def hjb_residual(self, t, theta, x):
        """Relative HJB residual with every derivative of ``J`` taken by
        central differences of the ansatz (time through the ODE solution)."""
        P = self.params
        J = lambda tt, xx, th: float(self.value(tt, xx, th))
        hx, hth = 1e-4 * x, 1e-4 * max(1.0, abs(theta))
        ht = 1e-5 * P.T
        J0 = J(t, x, theta)
        if t - ht < 0.0:  # second-order one-sided stencils at the ends
            Jt = (-3 * J0 + 4 * J(t + ht, x, theta) - J(t + 2 * ht, x, theta)) / (2 * ht)
        elif t + ht > P.T:
            Jt = (3 * J0 - 4 * J(t - ht, x, theta) + J(t - 2 * ht, x, theta)) / (2 * ht)
        else:
            Jt = (J(t + ht, x, theta) - J(t - ht, x, theta)) / (2 * ht)
        Jx = (J(t, x + hx, theta) - J(t, x - hx, theta)) / (2 * hx)
        Jxx = (J(t, x + hx, theta) - 2 * J0 + J(t, x - hx, theta)) / hx**2
        Jth = (J(t, x, theta + hth) - J(t, x, theta - hth)) / (2 * hth)
        Jthth = (J(t, x, theta + hth) - 2 * J0 + J(t, x, theta - hth)) / hth**2
        Jxth = (J(t, x + hx, theta + hth) - J(t, x + hx, theta - hth)
                - J(t, x - hx, theta + hth) + J(t, x - hx, theta - hth)) / (4 * hx * hth)
        pi = -(theta * Jx + P.rho * P.sig_theta * Jxth) / (P.sigma * x * Jxx)
        terms = [
            Jt,
            x * (P.r + pi * P.sigma * theta) * Jx,
            0.5 * (x * pi * P.sigma) ** 2 * Jxx,
            x * pi * P.sigma * P.rho * P.sig_theta * Jxth,
            P.lam * (P.theta_bar - theta) * Jth,
            0.5 * P.sig_theta**2 * Jthth,
        ]
        return abs(sum(terms)) / max(sum(abs(v) for v in terms), 1e-300)

    def hjb_grid_max(self, ts, thetas, xs) -> float:
        return max(self.hjb_residual(t, th, x) for t in ts for th in thetas for x in xs)

    def split_law_error(self, x=1.0) -> float:
        """Max relative error of consumption ratios against ``(S^i_T)^{-(1+q)}``."""
        P = self.params
        c = self.split(np.array([x]))[0]
        law = P.goods_T ** (-(1 + P.q))
        return float(np.max(np.abs(c / c[0] - law / law[0]) / (law / law[0])))

    # -- path functionals ----------------------------------------------------

    def wealth(self, paths: PathBundle, x: float) -> np.ndarray:
        """Wealth under the optimal fraction, rebalanced at grid points;
        the OU drift enters through its exact step integral."""
        P = self.params
        theta = paths.processes["theta"]
        I = paths.processes["int_theta"]
        dW1 = paths.dW[..., 1]
        h = paths.h
        logX = np.zeros(theta.shape)
        logX[:, 0] = math.log(x)
        for k in range(theta.shape[1] - 1):
            pi = self.fraction(paths.times[k], theta[:, k])
            logX[:, k + 1] = (logX[:, k] + P.r * h + pi * P.sigma * I[:, k]
                              - 0.5 * (pi * P.sigma) ** 2 * h + pi * P.sigma * dW1[:, k])
        return np.exp(logX)

    def c_star_T(self, paths, x):
        return self.wealth(paths, x)[:, -1]

    def split(self, c_star):
        """``c^i = (c*/A) (S^i_T)^{-(1+q)}``."""
        P = self.params
        return np.asarray(c_star)[..., None] / P.A * P.goods_T ** (-(1 + P.q))

    def consumption(self, paths, x):
        return _terminal_array(self.split(self.c_star_T(paths, x)), paths.times.size - 1)

    def dual_T(self, paths, y):
        c1 = self.c_star_T(paths, 1.0)
        return y / self.expected_cp * c1 ** (self.params.p - 1)

    def dual(self, paths, y):
        return _terminal_array(self.dual_T(paths, y), paths.times.size - 1)


def kim_omberg_solve(params: KimOmbergParams, atol=ODE_ATOL, rtol=ODE_RTOL) -> KimOmbergSolution:
    """Integrate the coefficient ODEs backward from ``T`` with an adaptive
    Runge-Kutta 4(5) pair; raise ``RiccatiBlowUp`` if they explode first."""

    def blow(tau, z):
        return BLOWUP - max(abs(z[1]), abs(z[2]))

    blow.terminal = True
    z0 = [math.log(params.B), 0.0, 0.0]
    sol = solve_ivp(_ko_rhs(params), (0.0, params.T), z0, method="RK45", atol=atol, rtol=rtol,
                    dense_output=True, events=blow)
    if sol.status != 0 or sol.t[-1] < params.T:
        where = params.T - sol.t[-1]
        raise RiccatiBlowUp(f"coefficient ODE blew up at t={where:.6g} before reaching 0 "
                            f"({sol.message})")
    return KimOmbergSolution(params, sol)


def merton_coefficients(params: KimOmbergParams, t):
    """Closed-form coefficients for ``sig_theta = 0``."""
    k, lam, tb = params.k, params.lam, params.theta_bar
    tau = params.T - np.asarray(t, dtype=float)
    e1 = -np.expm1(-lam * tau)
    e2 = -np.expm1(-2 * lam * tau)
    c = k / (2 * lam) * e2
    b = k * tb / lam * e1**2
    a = math.log(params.B) + params.p * params.r * tau + k * tb**2 * (tau - 2 * e1 / lam + e2 / (2 * lam))
    return a, b, c


# ---------------------------------------------------------------------------
# Cobb-Douglas utility with correlated factors


@dataclass(frozen=True)
class TehranchiParams:
    """Stock ``dS/S = mu dt + sigma dW^1``, bank at rate ``r``, a second
    factor ``W^2`` with ``d<W^1, W^2> = rho dt``, and utility
    ``-c_1^{p1} c_2^{p2} / (p1 p2)`` of terminal consumption.

    Coefficients are constants (the deterministic-rate case).  A stochastic
    rate needs ``beta``: the volatility of the conditional bond-like
    expectation divided by that expectation, as a callable of the bundle.
    """

    p1: float
    p2: float
    rho: float
    mu: float
    sigma: float
    r: float
    goods_T: np.ndarray
    T: float
    s0: float = 1.0
    stochastic_rate: bool = False
    beta: Callable | None = None

    def __post_init__(self):
        if not (self.p1 < 0 and self.p2 < 0):
            raise ValueError("exponents p1, p2 must be negative")
        if not 0 < abs(self.rho) < 1:
            raise ValueError("need 0 < |rho| < 1")
        if not (self.sigma > 0 and self.T > 0):
            raise ValueError("need sigma > 0 and T > 0")
        S = np.atleast_1d(np.asarray(self.goods_T, dtype=float))
        if S.shape != (2,) or np.any(~(S > 0)):
            raise ValueError("need two positive terminal goods prices")
        object.__setattr__(self, "goods_T", S)
        if self.stochastic_rate and self.beta is None:
            raise ValueError("a stochastic rate requires a user-supplied beta process")

    @property
    def p(self) -> float:
        return self.p1 + self.p2

    @property
    def delta(self) -> float:
        p = self.p
        return (1 - p) / (1 - p + self.rho**2 * p)

    @property
    def lam(self) -> float:
        return (self.mu - self.r) / self.sigma

    @property
    def K(self) -> float:
        """Wealth volatility loading ``lam / (1 - p)`` (deterministic rate)."""
        return self.lam / (1 - self.p)

    @property
    def G(self) -> float:
        p1, p2, p = self.p1, self.p2, self.p
        S1, S2 = self.goods_T
        return ((-p1) ** (p1 - 1) * (-p2) ** (p2 - 1) / (-p) ** (p - 1)) * S1 ** (-p1) * S2 ** (-p2)

    def utility(self):
        return make_cobb_douglas(self.p1, self.p2)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(s0=[self.s0], drift=[self.mu], vol=[[self.sigma, 0.0]],
                         corr=[[1.0, self.rho], [self.rho, 1.0]])

    def clock(self) -> Clock:
        return Clock("terminal", self.T)


@dataclass
class TehranchiPolicy:
    params: TehranchiParams

    def _K_path(self, paths):
        P = self.params
        if P.beta is None:
            return np.full((paths.n_paths, paths.times.size - 1), P.K)
        beta = np.asarray(P.beta(paths), dtype=float)
        return (P.lam + P.rho * P.delta * beta) / (1 - P.p)

    def log_c1(self, paths):
        """``int (r + K lam - K^2/2) ds + int K dW^1`` (left-point sums)."""
        P = self.params
        K = self._K_path(paths)
        h = paths.h
        return np.sum((P.r + K * P.lam - 0.5 * K * K) * h + K * paths.dW[..., 0], axis=1)

    def c_star_T(self, paths, x):
        return x * np.exp(self.log_c1(paths))

    @property
    def expected_cp(self) -> float:
        """``E[c*_T(1)^p]`` for constant coefficients."""
        P = self.params
        K, T, p = P.K, P.T, P.p
        return math.exp(p * (P.r + K * P.lam - 0.5 * K * K) * T + 0.5 * p * p * K * K * T)

    def dual_T(self, paths, y):
        return y / self.expected_cp * np.exp((self.params.p - 1) * self.log_c1(paths))

    def dual(self, paths, y):
        return _terminal_array(self.dual_T(paths, y), paths.times.size - 1)

    def split(self, c_star):
        """``c^i = c* p_i / (p S^i_T)``."""
        P = self.params
        return np.asarray(c_star)[..., None] * np.array([P.p1, P.p2]) / (P.p * P.goods_T)

    def consumption(self, paths, x):
        return _terminal_array(self.split(self.c_star_T(paths, x)), paths.times.size - 1)

    def density(self, paths):
        """``dQ/dP`` of the auxiliary measure."""
        P = self.params
        p, lam, T = P.p, P.lam, P.T
        W2 = np.sum(paths.dW[..., 1], axis=1)
        return np.exp(-(P.rho**2 * p**2) / (2 * (1 - p) ** 2) * lam**2 * T + P.rho * p / (1 - p) * lam * W2)

    def u(self, x):
        P = self.params
        return x**P.p / P.p * P.G * self.expected_cp

    def u_prime(self, x):
        P = self.params
        return x ** (P.p - 1) * P.G * self.expected_cp

    def pathwise_foc(self, paths, x, y=None):
        """Max relative residuals of ``grad U(c) = Y S`` across goods and of
        ``Y = U*'(c*)`` on every path."""
        P = self.params
        y = self.u_prime(x) if y is None else y
        c = self.c_star_T(paths, x)
        ratios = P.utility().gradient(P.T, 0, self.split(c)) / P.goods_T
        Y = self.dual_T(paths, y)
        goods = float(np.max(np.abs(ratios / Y[:, None] - 1.0)))
        image = float(np.max(np.abs(Y - P.G * c ** (P.p - 1)) / Y))
        return goods, image

    def sample_moments(self, paths, x):
        """MC mean of ``c*_T`` and of ``log c*_T`` with standard errors."""
        c = self.c_star_T(paths, x)
        lc = np.log(c)
        n = c.size
        return {
            "mean": (float(np.mean(c)), float(np.std(c, ddof=1) / math.sqrt(n))),
            "log_mean": (float(np.mean(lc)), float(np.std(lc, ddof=1) / math.sqrt(n))),
            "log_var": float(np.var(lc, ddof=1)),
        }

    def lognormal_moments(self, x):
        """Mean and variance of ``log c*_T`` and the mean of ``c*_T``."""
        P = self.params
        K, T = P.K, P.T
        m = math.log(x) + (P.r + K * P.lam - 0.5 * K * K) * T
        return {"log_mean": m, "log_var": K * K * T, "mean": x * math.exp((P.r + K * P.lam) * T)}


def tehranchi_policy(params: TehranchiParams) -> TehranchiPolicy:
    return TehranchiPolicy(params)


def image_G_check(params: TehranchiParams, xs) -> float:
    """Max relative gap between ``(x^p/p) G`` and the image utility computed
    numerically from the Cobb-Douglas field."""
    U = params.utility()
    Ustar = image_utility(U, GoodsPrices.constant(params.goods_T), analytic=False)
    xs = np.asarray(xs, dtype=float)
    closed = xs**params.p / params.p * params.G
    return float(np.max(np.abs(Ustar.eval(params.T, 0, xs) - closed) / np.abs(closed)))
