"""Path simulation and Monte Carlo estimators.

Assets follow geometric Brownian motion, optionally with drift loading on an
Ornstein-Uhlenbeck factor; both are simulated with exact transitions.  The
only discretised object is the stochastic integral inside the stochastic
exponential (left-point rule).

Random numbers come in fixed blocks of ``BLOCK`` paths, block ``j`` seeded by
the ``j``-th child of ``SeedSequence(seed)``, so path ``i`` is the same for
every path count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .image_duality import GoodsPrices, conjugate, image_utility
from .utility_fields import UtilityField

BLOCK = 4096
EXP_CLAMP = 700.0
OVERFLOW_GUARD = 1e300


# ---------------------------------------------------------------------------
# clocks


@dataclass(frozen=True)
class Clock:
    """Deterministic clock ``kappa`` on ``[0, T]``.

    ``terminal``: unit mass at ``T``.  ``exponential``:
    ``kappa_t = (1 - exp(-nu t)) / nu``.  ``linear``: ``kappa_t = t``.
    """

    kind: str
    T: float
    nu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("terminal", "exponential", "linear"):
            raise ValueError(f"unknown clock kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if self.kind == "exponential" and not self.nu > 0:
            raise ValueError("exponential clock needs nu > 0")

    def kappa(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "terminal":
            return (t >= self.T).astype(float)
        if self.kind == "linear":
            return np.minimum(t, self.T)
        return -np.expm1(-self.nu * np.minimum(t, self.T)) / self.nu

    @property
    def total(self) -> float:
        return float(self.kappa(self.T))

    def weights(self, times) -> np.ndarray:
        """Exact clock increments charged at each grid point (none at 0)."""
        times = np.asarray(times, dtype=float)
        w = np.zeros(times.size)
        if self.kind == "terminal":
            w[-1] = 1.0
        else:
            w[1:] = np.diff(self.kappa(times))
        return w


# ---------------------------------------------------------------------------
# models and paths


@dataclass(frozen=True)
class OUSpec:
    """``d theta = speed (mean - theta) dt + vol dW^0``."""

    theta0: float
    mean: float
    speed: float
    vol: float

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError("OU speed must be positive")
        if self.vol < 0:
            raise ValueError("OU vol must be nonnegative")


@dataclass(frozen=True)
class ModelSpec:
    """``dS/S = (drift + theta_loading theta) dt + vol dW`` with ``W`` an
    ``n``-dimensional Brownian motion of correlation ``corr``.

    An OU factor, when present, is driven by ``W^0``.
    """

    s0: np.ndarray
    drift: np.ndarray
    vol: np.ndarray
    corr: np.ndarray | None = None
    theta_loading: np.ndarray | None = None
    ou: OUSpec | None = None

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        drift = np.broadcast_to(np.asarray(self.drift, dtype=float), s0.shape).copy()
        vol = np.atleast_2d(np.asarray(self.vol, dtype=float))
        if vol.shape[0] != s0.size:
            raise ValueError(f"vol must have {s0.size} rows, got shape {vol.shape}")
        n = vol.shape[1]
        corr = np.eye(n) if self.corr is None else np.asarray(self.corr, dtype=float)
        if corr.shape != (n, n) or not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1):
            raise ValueError("correlation must be a symmetric matrix with unit diagonal")
        try:
            np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise ValueError("correlation matrix is not positive definite") from None
        load = np.zeros(s0.size) if self.theta_loading is None else np.broadcast_to(
            np.asarray(self.theta_loading, dtype=float), s0.shape).copy()
        if np.any(~(s0 > 0)):
            raise ValueError("initial prices must be positive")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "vol", vol)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "theta_loading", load)

    @property
    def d(self) -> int:
        return self.s0.size

    @property
    def n(self) -> int:
        return self.vol.shape[1]

    @property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.corr)

    @property
    def covariance(self) -> np.ndarray:
        """Instantaneous return covariance ``vol corr vol^T``."""
        return self.vol @ self.corr @ self.vol.T


@dataclass
class PathBundle:
    """Simulated paths on a uniform grid; ``weights`` is set for exhaustive
    (finite-tree) bundles, in which case estimators carry no sampling error."""

    times: np.ndarray
    h: float
    dW: np.ndarray | None
    processes: dict
    seed: int | None
    model: ModelSpec | None = None
    weights: np.ndarray | None = None
    first_path: int = 0

    @property
    def n_paths(self) -> int:
        for v in self.processes.values():
            return v.shape[0]
        return 0

    @property
    def exhaustive(self) -> bool:
        return self.weights is not None

    def state(self) -> np.ndarray:
        """State ids per (path, time); node ids for tree bundles, else 0."""
        if "node" in self.processes:
            return self.processes["node"]
        return np.zeros((self.n_paths, self.times.size), dtype=int)

    def returns(self) -> np.ndarray:
        """Simple returns ``dS/S`` per step, shape ``(N, K, d)``."""
        S = self.processes["S"]
        return S[:, 1:] / S[:, :-1] - 1.0


def _grid(T, h):
    K = int(round(T / h))
    if K < 1 or abs(K * h - T) > 1e-9 * T:
        raise ValueError(f"horizon {T} is not a multiple of the step {h}")
    return np.linspace(0.0, T, K + 1), T / K


def _block(model: ModelSpec, times, h, rng, size):
    K = times.size - 1
    n = model.n
    xi = rng.standard_normal((size, K, n))
    dB = xi * math.sqrt(h)
    dW = dB @ model.chol.T
    out = {}
    drift_int = np.broadcast_to(model.drift * h, (size, K, model.d)).copy()
    if model.ou is not None:
        ou = model.ou
        eta = rng.standard_normal((size, K))
        lam, vol = ou.speed, ou.vol
        e1 = math.exp(-lam * h)
        phi1 = -math.expm1(-lam * h) / lam
        phi2 = -math.expm1(-2 * lam * h) / (2 * lam)
        # (dW^0, J) with J = int exp(-lam (h - u)) dW^0_u is Gaussian with
        # covariance [[h, phi1], [phi1, phi2]]
        J = (phi1 / math.sqrt(h)) * xi[..., 0] + math.sqrt(max(phi2 - phi1 * phi1 / h, 0.0)) * eta
        theta = np.empty((size, K + 1))
        theta[:, 0] = ou.theta0
        integral = np.empty((size, K))
        for k in range(K):
            dev = theta[:, k] - ou.mean
            theta[:, k + 1] = ou.mean + dev * e1 + vol * J[:, k]
            integral[:, k] = ou.mean * h + dev * phi1 + vol * (dW[:, k, 0] - J[:, k]) / lam
        out["theta"] = theta
        out["int_theta"] = integral
        drift_int += integral[..., None] * model.theta_loading
    var = np.diag(model.covariance)
    dlog = drift_int - 0.5 * var * h + dW @ model.vol.T
    logS = np.concatenate([np.zeros((size, 1, model.d)), np.cumsum(dlog, axis=1)], axis=1)
    out["S"] = model.s0 * np.exp(logS)
    return dW, out


def simulate(model: ModelSpec, T: float, h: float, n_paths: int, seed: int, first_path: int = 0) -> PathBundle:
    """Simulate ``n_paths`` paths starting at global path index ``first_path``."""
    if not h > 0:
        raise ValueError("step must be positive")
    if n_paths < 1:
        raise ValueError("need at least one path")
    times, h = _grid(T, h)
    b0 = first_path // BLOCK
    b1 = (first_path + n_paths - 1) // BLOCK
    children = np.random.SeedSequence(seed).spawn(b1 + 1)
    dWs, procs = [], {}
    for b in range(b0, b1 + 1):
        dW, out = _block(model, times, h, np.random.default_rng(children[b]), BLOCK)
        lo = max(first_path - b * BLOCK, 0)
        hi = min(first_path + n_paths - b * BLOCK, BLOCK)
        dWs.append(dW[lo:hi])
        for k, v in out.items():
            procs.setdefault(k, []).append(v[lo:hi])
    processes = {k: np.concatenate(v) for k, v in procs.items()}
    return PathBundle(times, h, np.concatenate(dWs), processes, seed, model, first_path=first_path)


def simulate_blocks(model, T, h, n_paths, seed, chunk=BLOCK * 4):
    """Yield consecutive bundles covering ``n_paths`` paths (bounded memory)."""
    done = 0
    while done < n_paths:
        n = min(chunk, n_paths - done)
        yield simulate(model, T, h, n, seed, first_path=done)
        done += n


def finite_market_bundle(market) -> PathBundle:
    """Every root-to-leaf path of a tree as a weighted exhaustive bundle."""
    leaves = market.leaves
    nodes = np.array([market.path(l) for l in leaves])
    procs = {"node": nodes, "S": market.s_tilde[nodes]}
    times = np.asarray(market.times, dtype=float)
    h = float(times[1] - times[0]) if times.size > 1 else 0.0
    return PathBundle(times, h, None, procs, None, None, weights=market.path_prob[leaves])


# ---------------------------------------------------------------------------
# stochastic exponential


def stochastic_exponential(gamma, paths: PathBundle) -> np.ndarray:
    """``exp(M - [M]/2)`` for ``M = int gamma^T dS/S`` on the grid.

    ``gamma`` is an array broadcastable to ``(N, K, d)`` or a callable of the
    bundle returning one; it is evaluated at left points.  The quadratic
    variation uses the model covariance.
    """
    g = gamma(paths) if callable(gamma) else gamma
    R = paths.returns()
    g = np.broadcast_to(np.asarray(g, dtype=float), R.shape)
    dM = np.sum(g * R, axis=-1)
    C = paths.model.covariance if paths.model is not None else np.zeros((R.shape[-1],) * 2)
    dQ = np.einsum("nki,ij,nkj->nk", g, C, g) * paths.h
    expo = np.concatenate([np.zeros((R.shape[0], 1)), np.cumsum(dM - 0.5 * dQ, axis=1)], axis=1)
    clamped = np.abs(expo) > EXP_CLAMP
    if np.any(clamped):
        warnings.warn(f"stochastic exponential clamped on {int(clamped.sum())} grid points",
                      RuntimeWarning, stacklevel=2)
        expo = np.clip(expo, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(expo)


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class MCEstimate:
    point: float
    se: float
    n: int
    seed: int | None

    def deviation(self, target: float) -> float:
        """``(point - target) / se``; infinite if ``se`` is zero and they differ."""
        diff = self.point - target
        if self.se > 0:
            return diff / self.se
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)

    def consistent(self, target: float, n_se: float = 3.0, rel_floor: float = 1e-12) -> bool:
        """``|point - target| <= max(n_se * se, rel_floor * |target|)``; the
        floor absorbs rounding when the estimator is exact path by path."""
        return bool(abs(self.point - target) <= max(n_se * self.se, rel_floor * abs(target)))

    def to_dict(self) -> dict:
        return {"point": self.point, "se": self.se, "n": self.n, "seed": self.seed}


def _summarise(values, weights, seed) -> MCEstimate:
    v = np.asarray(values, dtype=float)
    if np.any(v == -np.inf):
        return MCEstimate(-math.inf, 0.0, v.size, seed)
    if weights is not None:
        return MCEstimate(float(np.sum(weights * v)), 0.0, v.size, seed)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return MCEstimate(float(np.mean(v)), se, v.size, seed)


def _bundles(paths):
    return [paths] if isinstance(paths, PathBundle) else paths


def _collect(paths, per_path):
    vals, weights, seed = [], [], None
    exhaustive = False
    for b in _bundles(paths):
        vals.append(per_path(b))
        seed = b.seed
        if b.exhaustive:
            exhaustive = True
            weights.append(b.weights)
    v = np.concatenate(vals)
    return v, (np.concatenate(weights) if exhaustive else None), seed


@dataclass(frozen=True)
class TreeClock:
    """Clock of a finite tree: the increment charged at each node."""

    dkappa: np.ndarray

    @classmethod
    def of(cls, market) -> "TreeClock":
        return cls(np.asarray(market.dkappa, dtype=float))

    def path_weights(self, paths: PathBundle) -> np.ndarray:
        return self.dkappa[paths.state()]


def clock_weights(clock, paths: PathBundle) -> np.ndarray:
    """Clock increments per (path, grid point)."""
    if hasattr(clock, "path_weights"):
        return clock.path_weights(paths)
    w = clock.weights(paths.times)
    return np.broadcast_to(w, (paths.n_paths, w.size))


def _charged_integral(fn, clock, b, *arrays):
    """``sum_k W[k] fn(t_k, state_k, arrays[k])`` over charged entries only;
    ``fn`` never sees uncharged points, where policies may be zero."""
    W = clock_weights(clock, b)
    mask = W > 0
    t = np.broadcast_to(b.times[None, :], W.shape)
    picked = [np.asarray(a)[mask] for a in arrays]
    vals = np.zeros(W.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals[mask] = fn(t[mask], b.state()[mask], *picked) * W[mask]
    return np.sum(vals, axis=1)


def clock_integral(values, clock, paths: PathBundle) -> np.ndarray:
    """Per-path ``int values dkappa``; uncharged points never contribute."""
    return _charged_integral(lambda t, s, v: v, clock, paths, values)


def _goods(prices, paths):
    S = prices(paths.times[None, :], paths.state()) if isinstance(prices, GoodsPrices) else prices(paths)
    return np.asarray(S, dtype=float)


def estimate_budget_identity(policy, dual, prices, clock, paths, x: float, y: float) -> MCEstimate:
    """``E[int sum_i c^i S^i Y / y dkappa]``; equals ``x`` at the optimum.

    ``policy(bundle)`` gives per-good consumption ``(N, K+1, m)`` and
    ``dual(bundle, y)`` the dual process ``(N, K+1)``.
    """

    def per_path(b):
        spend = np.sum(policy(b) * _goods(prices, b), axis=-1)
        return clock_integral(spend * dual(b, y) / y, clock, b)

    return _summarise(*_collect(paths, per_path))


def _utility_integral(U, policy, clock, b):
    return _charged_integral(lambda t, s, c: U.eval(t, s, c), clock, b, policy(b))


def estimate_policy_value(policy, U, clock, paths) -> MCEstimate:
    """``E[int U(c) dkappa]`` with the convention that the expectation is
    ``-inf`` once the negative part diverges.

    ``U`` is a ``UtilityField`` (``policy`` gives ``(N, K+1, m)``) or a
    single-good image utility (``policy`` gives ``(N, K+1)`` spending).
    """
    v, weights, seed = _collect(paths, lambda b: _utility_integral(U, policy, clock, b))
    neg = np.where(v < 0, -v, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        guard = float(np.mean(neg)) if weights is None else float(np.sum(weights * neg))
    if not math.isfinite(guard) or guard > OVERFLOW_GUARD:
        return MCEstimate(-math.inf, 0.0, v.size, seed)
    return _summarise(v, weights, seed)


@dataclass(frozen=True)
class GapEstimate:
    """``E int V*(Y) dkappa + x y - E int U(c) dkappa`` with its parts."""

    gap: MCEstimate
    primal: MCEstimate
    dual: MCEstimate

    def to_dict(self) -> dict:
        return {"gap": self.gap.to_dict(), "primal": self.primal.to_dict(), "dual": self.dual.to_dict()}


def estimate_duality_gap(policy, dual, U: UtilityField, prices, clock, paths, x: float, y: float,
                         analytic=True) -> GapEstimate:
    """Joint estimate of the duality gap on common paths.

    Nonnegative for any admissible pair; zero at the optimum with
    ``y = u'(x)``.
    """
    V = conjugate(image_utility(U, prices, analytic=analytic))

    def per_path(b):
        u = _utility_integral(U, policy, clock, b)
        v = _charged_integral(lambda t, s, Y: V.eval(t, s, Y), clock, b, dual(b, y))
        return np.stack([v + x * y - u, u, v], axis=1)

    vals, weights, seed = [], [], None
    exhaustive = False
    for b in _bundles(paths):
        vals.append(per_path(b))
        seed = b.seed
        if b.exhaustive:
            exhaustive = True
            weights.append(b.weights)
    arr = np.concatenate(vals)
    wts = np.concatenate(weights) if exhaustive else None
    return GapEstimate(*[_summarise(arr[:, j], wts, seed) for j in range(3)])


def estimate_policy_advantage(policy_a, policy_b, U, clock, paths) -> MCEstimate:
    """Paired estimate of ``E[int U(a) dkappa - int U(b) dkappa]`` on common
    paths; positive when ``a`` is better."""

    def per_path(b):
        with np.errstate(invalid="ignore"):
            return _utility_integral(U, policy_a, clock, b) - _utility_integral(U, policy_b, clock, b)

    return _summarise(*_collect(paths, per_path))
