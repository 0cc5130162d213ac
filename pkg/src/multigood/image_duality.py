"""Single-good image utility, its conjugate, and the budget allocation.

The image utility at budget ``x`` is the best utility reachable by bundles
whose cost ``sum_k S^k c_k`` does not exceed ``x``.  Strict monotonicity of
the source field makes the budget bind, so every solver here works on the
equality ``sum_k S^k c_k = x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq

from .errors import AllocationError, BracketError
from .utility_fields import (
    AssumptionReport,
    CheckResult,
    LogUtility,
    PowerUtility,
    Utility1D,
    UtilityField,
)

BUDGET_TOL = 1e-10
FOC_TOL = 1e-8
BRACKET = (1e-12, 1e12)


# ---------------------------------------------------------------------------
# prices


@dataclass(frozen=True)
class GoodsPrices:
    """Strictly positive goods prices ``(t, state) -> (..., m)``."""

    m: int
    fn: Callable

    def __call__(self, t, state):
        S = np.asarray(self.fn(t, state), dtype=float)
        if np.any(~(S > 0)):
            raise ValueError("goods prices must be strictly positive")
        return S

    @classmethod
    def constant(cls, S):
        S = np.asarray(S, dtype=float)
        if S.ndim != 1 or np.any(~(S > 0)):
            raise ValueError(f"constant prices must be a positive vector, got {S}")

        def fn(t, state):
            shape = np.broadcast(np.asarray(t), np.asarray(state)).shape
            return np.broadcast_to(S, shape + S.shape)

        return cls(S.size, fn)

    @classmethod
    def exponential(cls, S0, growth=None):
        """Deterministic curves ``S0 * exp(growth * t)``."""
        S0 = np.asarray(S0, dtype=float)
        g = np.zeros_like(S0) if growth is None else np.asarray(growth, dtype=float)
        if S0.ndim != 1 or np.any(~(S0 > 0)) or g.shape != S0.shape:
            raise ValueError("need a positive S0 vector and a matching growth vector")

        def fn(t, state):
            t = np.asarray(t, dtype=float)
            t = np.broadcast_to(t, np.broadcast(t, np.asarray(state)).shape)
            return S0 * np.exp(g * t[..., None])

        return cls(S0.size, fn)

    @classmethod
    def by_state(cls, table):
        """Prices looked up by integer state id: ``table[state]``."""
        table = np.asarray(table, dtype=float)
        if np.any(~(table > 0)):
            raise ValueError("goods prices must be strictly positive")

        def fn(t, state):
            idx = np.broadcast_to(np.asarray(state), np.broadcast(np.asarray(t), np.asarray(state)).shape)
            return table[idx.astype(int)]

        return cls(table.shape[-1], fn)


# ---------------------------------------------------------------------------
# inverse marginal utility


def inverse_marginal(u: Utility1D, z, t=0.0, state=0):
    """``I(z)`` with ``u'(I(z)) = z``; bisection when no closed form exists."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise ValueError("inverse marginal needs z > 0")
    closed = u.inverse_marginal(z)
    if closed is not None:
        return closed
    flat = z.ravel()
    out = np.empty_like(flat)
    for k, zk in enumerate(flat):
        out[k] = _invert_decreasing(lambda c: float(u.derivative(c)), zk)
    return out.reshape(z.shape)


def _invert_decreasing(f, target, lo=BRACKET[0], hi=BRACKET[1], rtol=1e-13):
    """Solve ``f(c) = target`` for decreasing positive ``f`` in log space."""
    g = lambda lc: math.log(f(math.exp(lc))) - math.log(target)
    a, b = math.log(lo), math.log(hi)
    ga, gb = g(a), g(b)
    if ga < 0 or gb > 0:
        raise BracketError(f"root for target {target!r} outside [{lo:g}, {hi:g}]")
    return math.exp(brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# allocation


@dataclass(frozen=True)
class Allocation:
    c: np.ndarray
    value: float
    multiplier: float
    method: str


def _closed_form_kind(U: UtilityField):
    if U.family == "cobb_douglas":
        return "cobb_douglas"
    if U.family == "additive":
        comps = U.components
        if all(type(u) is LogUtility for u in comps):
            return "log"
        if all(type(u) is PowerUtility for u in comps) and len({u.p for u in comps}) == 1:
            return "power"
    return None


def _closed_form_allocation(kind, U, S, x):
    """Vectorised closed-form bundles; ``S`` is ``(..., m)``, ``x`` is ``(...)``."""
    x = np.asarray(x, dtype=float)[..., None]
    if kind == "log":
        return x / (U.m * S)
    if kind == "power":
        p = U.components[0].p
        q = p / (1.0 - p)
        A = np.sum(S ** (-q), axis=-1, keepdims=True)
        return (x / A) * S ** (-(1.0 + q))
    p1, p2 = U.exponents
    w = np.array([p1, p2]) / (p1 + p2)
    return x * w / S


def allocate(U: UtilityField, prices, x: float, t=0.0, state=0, method: str = "auto") -> Allocation:
    """Maximise ``U(t, state, c)`` over ``c >= 0`` with ``sum S^k c_k = x``.

    ``method`` is ``"auto"`` (closed form where one exists), ``"analytic"`` or
    ``"numeric"``.  The numeric route bisects on the common multiplier for
    additive fields and runs a projected Newton ascent on the budget plane
    otherwise.
    """
    S = np.asarray(prices, dtype=float)
    if S.shape != (U.m,) or np.any(~(S > 0)):
        raise ValueError(f"prices must be a strictly positive vector of length {U.m}")
    if not (x > 0) or not math.isfinite(x):
        raise ValueError(f"budget must be positive and finite, got {x}")
    kind = _closed_form_kind(U)
    if method == "analytic" and kind is None:
        raise ValueError("no closed-form allocation for this field")
    if method in ("auto", "analytic") and kind is not None:
        c = _closed_form_allocation(kind, U, S, x)
        used = "analytic"
    elif U.m == 1:
        c = np.array([x / S[0]])
        used = "numeric"
    elif U.family == "additive":
        c = _allocate_additive(U, S, x, t, state)
        used = "numeric"
    else:
        c = _allocate_projected_newton(U, S, x, t, state)
        used = "numeric"

    c = c * (x / float(S @ c))
    value = float(U.eval(t, state, c))
    if not math.isfinite(value):
        raise AllocationError("utility is not finite at the allocated bundle")
    ratios = U.gradient(t, state, c) / S
    y = float(np.mean(ratios))
    foc = float(np.max(np.abs(ratios - y)) / y)
    if foc > FOC_TOL:
        raise AllocationError(f"common-multiplier residual {foc:.3e} exceeds {FOC_TOL:g}")
    return Allocation(c, value, y, used)


def _allocate_additive(U, S, x, t, state):
    comps = U.components

    def spend(log_y):
        y = math.exp(log_y)
        return sum(S[i] * float(inverse_marginal(u, y * S[i], t, state)) for i, u in enumerate(comps))

    guess = np.mean([float(u.derivative(x / (U.m * S[i]))) / S[i] for i, u in enumerate(comps)])
    lo = hi = math.log(guess)
    step = 1.0
    while spend(lo) < x:
        lo -= step
        step *= 2
        if step > 1e4:
            raise AllocationError("could not bracket the multiplier from below")
    step = 1.0
    while spend(hi) > x:
        hi += step
        step *= 2
        if step > 1e4:
            raise AllocationError("could not bracket the multiplier from above")
    if lo == hi:
        log_y = lo
    else:
        log_y = brentq(lambda ly: math.log(spend(ly)) - math.log(x), lo, hi,
                       xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    y = math.exp(log_y)
    c = np.array([float(inverse_marginal(u, y * S[i], t, state)) for i, u in enumerate(comps)])
    if abs(S @ c - x) > BUDGET_TOL * x:
        raise AllocationError(f"budget residual {abs(S @ c - x) / x:.3e} after multiplier search")
    return c


def _allocate_projected_newton(U, S, x, t, state, max_iter=None):
    m = U.m
    N = null_space(S[None, :])
    c = x / (m * S)
    f = float(U.eval(t, state, c))
    max_iter = max_iter or 200 * m
    for _ in range(max_iter):
        g = U.gradient(t, state, c)
        ratios = g / S
        ybar = float(np.mean(ratios))
        if np.max(np.abs(ratios - ybar)) <= 1e-14 * ybar:
            return c
        gr = N.T @ g
        Hr = N.T @ U.hessian(t, state, c) @ N
        try:
            L = np.linalg.cholesky(-Hr)
            u = np.linalg.solve(L.T, np.linalg.solve(L, gr))
        except np.linalg.LinAlgError:
            u = gr
        d = N @ u
        neg = d < 0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, 0.99 * float(np.min(-c[neg] / d[neg])))
        slope = float(g @ d)
        if slope <= 0:
            return c
        while True:
            cand = c + alpha * d
            fc = float(U.eval(t, state, cand))
            if math.isfinite(fc) and fc >= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-16:
                # flat to machine precision: accept the current point
                return c
        c, f = cand, fc
    raise AllocationError("projected Newton did not converge")


# ---------------------------------------------------------------------------
# image utility


def _cobb_douglas_G(p1, p2, S):
    p = p1 + p2
    const = (-p1) ** (p1 - 1) * (-p2) ** (p2 - 1) / (-p) ** (p - 1)
    return const * S[..., 0] ** (-p1) * S[..., 1] ** (-p2)


@dataclass(frozen=True)
class ImageUtility:
    """``x -> sup {U(c) : S.c <= x}`` with value, slope and curvature access.

    With ``analytic=True`` the log-additive, equal-power-additive and
    Cobb-Douglas families use closed forms; otherwise every point goes
    through :func:`allocate` with ``method="numeric"``.
    """

    source: UtilityField
    prices: GoodsPrices
    analytic: bool = True

    @property
    def kind(self):
        return _closed_form_kind(self.source) if self.analytic else None

    @property
    def exponent(self):
        """Homogeneity exponent ``p`` for the power-type closed forms."""
        kind = self.kind
        if kind == "power":
            return self.source.components[0].p
        if kind == "cobb_douglas":
            return sum(self.source.exponents)
        return None

    def scale(self, t, state):
        """``B`` (additive power) or ``G`` (Cobb-Douglas): ``U* = B x**p / p``."""
        S = self.prices(t, state)
        if self.kind == "power":
            p = self.exponent
            q = p / (1 - p)
            return np.sum(S ** (-q), axis=-1) ** (1 - p)
        if self.kind == "cobb_douglas":
            return _cobb_douglas_G(*self.source.exponents, S)
        raise ValueError("scale is only defined for power-type closed forms")

    def _broadcast(self, t, state, x):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(np.asarray(t), np.asarray(state), x).shape
        t_b = np.broadcast_to(t, shape)
        s_b = np.broadcast_to(state, shape)
        x_b = np.broadcast_to(x, shape)
        if np.any(x_b < 0):
            raise ValueError("image utility is defined for x >= 0")
        return t_b, s_b, x_b, self.prices(t_b, s_b)

    def _numeric(self, t, state, x, what):
        t, state, x, S = self._broadcast(t, state, x)
        out = np.empty(x.shape)
        for idx in np.ndindex(x.shape):
            if x[idx] == 0:
                out[idx] = {"value": self._at_zero(t[idx], state[idx]),
                            "slope": math.inf, "curv": -math.inf}[what]
                continue
            a = allocate(self.source, S[idx], float(x[idx]), t[idx], state[idx], method="numeric")
            if what == "value":
                out[idx] = a.value
            elif what == "slope":
                out[idx] = a.multiplier
            else:
                H = self.source.hessian(t[idx], state[idx], a.c)
                out[idx] = 1.0 / float(S[idx] @ np.linalg.solve(H, S[idx]))
        return out

    def _at_zero(self, t, state):
        return float(self.source.eval(t, state, np.zeros(self.source.m)))

    def eval(self, t, state, x):
        kind = self.kind
        if kind is None:
            return self._numeric(t, state, x, "value")
        t, state, x, S = self._broadcast(t, state, x)
        with np.errstate(divide="ignore"):
            if kind == "log":
                m = self.source.m
                return m * np.log(x / m) - np.sum(np.log(S), axis=-1)
            p = self.exponent
            return np.power(x, p) / p * self.scale(t, state)

    def derivative(self, t, state, x):
        kind = self.kind
        if kind is None:
            return self._numeric(t, state, x, "slope")
        t, state, x, S = self._broadcast(t, state, x)
        with np.errstate(divide="ignore"):
            if kind == "log":
                return self.source.m / x
            p = self.exponent
            return self.scale(t, state) * np.power(x, p - 1)

    def second_derivative(self, t, state, x):
        kind = self.kind
        if kind is None:
            return self._numeric(t, state, x, "curv")
        t, state, x, S = self._broadcast(t, state, x)
        with np.errstate(divide="ignore"):
            if kind == "log":
                return -self.source.m / (x * x)
            p = self.exponent
            return (p - 1) * self.scale(t, state) * np.power(x, p - 2)

    def allocation(self, t, state, x):
        """Optimal bundles, shape ``x.shape + (m,)``."""
        t, state, x, S = self._broadcast(t, state, x)
        kind = self.kind
        if kind is not None:
            return _closed_form_allocation(kind, self.source, S, x)
        out = np.empty(x.shape + (self.source.m,))
        for idx in np.ndindex(x.shape):
            out[idx] = allocate(self.source, S[idx], float(x[idx]), t[idx], state[idx],
                                method="numeric").c
        return out


def image_utility(U: UtilityField, prices, analytic: bool = True) -> ImageUtility:
    if not isinstance(prices, GoodsPrices):
        prices = GoodsPrices.constant(prices)
    if prices.m != U.m:
        raise ValueError(f"prices have {prices.m} goods, utility has {U.m}")
    return ImageUtility(U, prices, analytic)


# ---------------------------------------------------------------------------
# conjugate


@dataclass(frozen=True)
class ConjugateField:
    """``y -> sup_{x > 0} (U*(x) - x y)`` with the maximiser ``x(y)``."""

    image: ImageUtility

    @property
    def _separable(self):
        # additive fields conjugate good by good: V*(y) = sum_i V^i(y S^i)
        img = self.image
        return img.analytic and img.kind is None and img.source.family == "additive"

    def _per_good(self, t, state, y):
        t_b, s_b, y_b, S = self.image._broadcast(t, state, y)
        z = y_b[..., None] * S
        comps = self.image.source.components
        c = np.stack([inverse_marginal(u, z[..., i]) for i, u in enumerate(comps)], axis=-1)
        return z, S, c

    def argmax(self, t, state, y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise ValueError("conjugate is evaluated at y > 0")
        img = self.image
        if self._separable:
            z, S, c = self._per_good(t, state, y)
            return np.sum(S * c, axis=-1)
        kind = img.kind
        if kind is not None:
            t_b, s_b, y_b, S = img._broadcast(t, state, y)
            if kind == "log":
                return img.source.m / y_b
            p = img.exponent
            return np.power(y_b / img.scale(t_b, s_b), 1.0 / (p - 1))
        shape = np.broadcast(np.asarray(t), np.asarray(state), y).shape
        t_b, s_b, y_b = (np.broadcast_to(a, shape) for a in (t, state, y))
        out = np.empty(shape)
        for idx in np.ndindex(shape):
            slope = lambda xx: float(img.derivative(t_b[idx], s_b[idx], xx))
            out[idx] = _invert_decreasing(slope, float(y_b[idx]))
        return out

    def eval(self, t, state, y):
        if self._separable:
            z, S, c = self._per_good(t, state, y)
            comps = self.image.source.components
            vals = [comps[i].value(c[..., i]) - c[..., i] * z[..., i] for i in range(len(comps))]
            return np.sum(vals, axis=0)
        xh = self.argmax(t, state, y)
        return self.image.eval(t, state, xh) - xh * np.asarray(y, dtype=float)

    def derivative(self, t, state, y):
        return -self.argmax(t, state, y)

    def second_derivative(self, t, state, y):
        if self._separable:
            z, S, c = self._per_good(t, state, y)
            comps = self.image.source.components
            terms = [S[..., i] ** 2 / comps[i].second_derivative(c[..., i]) for i in range(len(comps))]
            return -np.sum(terms, axis=0)
        xh = self.argmax(t, state, y)
        return -1.0 / self.image.second_derivative(t, state, xh)


def conjugate(Ustar: ImageUtility) -> ConjugateField:
    return ConjugateField(Ustar)


# ---------------------------------------------------------------------------
# additive identity and Lemma-type diagnostics


def per_good_conjugate(u: Utility1D, z):
    """``sup_c (u(c) - c z)`` for one good."""
    closed = u.conjugate(z)
    if closed is not None:
        return closed
    c = inverse_marginal(u, z)
    return u.value(c) - c * np.asarray(z, dtype=float)


def infimal_convolution_check(U: UtilityField, prices, grid, t=0.0, state=0) -> float:
    """Max relative gap between the numerically conjugated image utility and
    ``sum_i V^i(y S^i)`` over ``grid``."""
    if U.family != "additive":
        raise ValueError("infimal convolution identity applies to additive fields")
    S = np.asarray(prices, dtype=float)
    V = conjugate(image_utility(U, S, analytic=False))
    y = np.asarray(grid, dtype=float)
    lhs = V.eval(t, state, y)
    rhs = sum(per_good_conjugate(u, y * S[i]) for i, u in enumerate(U.components))
    return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))


def check_image_utility(Ustar: ImageUtility, t=0.0, state=0, n=30, seed=0,
                        inada_small=1e3, inada_large=1e-3) -> AssumptionReport:
    """Sampled one-good Inada checks on ``U*`` and the mirrored ones on ``-V*``."""
    rng = np.random.default_rng(seed)
    rep = AssumptionReport()
    a = np.exp(rng.uniform(np.log(0.05), np.log(20.0), n))
    b = np.exp(rng.uniform(np.log(0.05), np.log(20.0), n))
    ua, ub = Ustar.eval(t, state, a), Ustar.eval(t, state, b)
    mid = Ustar.eval(t, state, 0.5 * (a + b))
    margin = (mid - 0.5 * (ua + ub)) / (1 + np.abs(ua) + np.abs(ub))
    keep = np.abs(a - b) > 1e-3 * (a + b)
    worst = float(np.min(margin[keep]))
    rep.checks["strict_concavity"] = CheckResult(worst > 1e-12, worst, "midpoint margin")

    up = Ustar.eval(t, state, a * 1.05)
    worst = float(np.min(up - ua))
    rep.checks["monotonicity"] = CheckResult(worst > 0, worst, "min increment")

    d = Ustar.derivative(t, state, a)
    h = 1e-5 * a
    fd = (Ustar.eval(t, state, a + h) - Ustar.eval(t, state, a - h)) / (2 * h)
    err = float(np.max(np.abs(fd - d) / d))
    rep.checks["derivative"] = CheckResult(bool(np.all(d > 0)) and err <= 1e-6, err,
                                           "positivity and FD agreement")

    grid = 10.0 ** np.arange(-6, 7)
    dg = Ustar.derivative(t, state, grid)
    small_ok = dg[0] > inada_small or dg[0] / dg[1] > 1.01
    large_ok = dg[-1] < inada_large or dg[-2] / dg[-1] > 1.01
    ok = bool(np.all(np.diff(dg) < 0) and small_ok and large_ok)
    rep.checks["inada"] = CheckResult(ok, float(max(inada_small / dg[0], dg[-1] / inada_large)),
                                      "threshold ratio")

    at0 = float(np.asarray(Ustar.eval(t, state, 0.0)))
    z = 10.0 ** -np.arange(1, 13)
    vals = Ustar.eval(t, state, z)
    steps = np.diff(vals)
    if math.isinf(at0):
        ok = bool(at0 < 0 and np.all(steps < 0) and steps[-1] / steps[-2] >= 1 - 1e-6)
        rep.checks["closedness"] = CheckResult(ok, 0.0 if ok else math.inf, "U*(0) = -inf limit")
    else:
        ratio = steps[-1] / steps[-2]
        lim = vals[-1] + steps[-1] * ratio / (1 - ratio)
        err = abs(lim - at0) / (1 + abs(at0))
        rep.checks["closedness"] = CheckResult(bool(err <= 1e-6), err, "U*(0) vs limit")

    V = conjugate(Ustar)
    ys = 10.0 ** np.linspace(-3, 3, 13)
    vy = V.eval(t, state, ys)
    dv = V.derivative(t, state, ys)
    ok = bool(np.all(np.diff(vy) < 0) and np.all(np.diff(dv) > 0) and np.all(dv < 0))
    rep.checks["conjugate_shape"] = CheckResult(ok, float(np.max(np.diff(vy))),
                                                "V* decreasing and convex")
    return rep
