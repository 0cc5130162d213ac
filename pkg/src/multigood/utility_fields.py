"""State-dependent multi-good utility fields and their sampled diagnostics.

A utility field maps ``(t, state, c)`` with ``c`` in the closed positive
orthant of ``R^m`` to ``R U {-inf}``.  Extended reals are plain floats:
``-math.inf`` is the explicit minus-infinity marker, never a large negative
sentinel.  All evaluators are vectorised over leading axes of ``c``; ``t`` and
``state`` broadcast against ``c[..., 0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

FAMILIES = ("additive", "cobb_douglas", "custom")

#: Extended reals are floats; this alias documents intent in signatures.
ExtendedReal = float


def expectation_with_convention(values, weights) -> ExtendedReal:
    """Weighted expectation of extended-real samples.

    The expectation is ``-inf`` as soon as the negative part has infinite
    integral, whatever the positive part does.  Zero-weight samples are
    ignored even when they are infinite.
    """
    v = np.asarray(values, dtype=float)
    w = np.broadcast_to(np.asarray(weights, dtype=float), v.shape)
    live = w > 0
    v, w = v[live], w[live]
    if v.size == 0:
        return 0.0
    neg = np.where(v < 0, -v, 0.0)
    with np.errstate(invalid="ignore", over="ignore"):
        if not np.isfinite(np.sum(w * neg)):
            return -math.inf
        total = float(np.sum(w * v))
    return total


# ---------------------------------------------------------------------------
# one-dimensional building blocks


class Utility1D:
    """A one-good Inada utility ``c -> u(c)`` with marginal-utility access."""

    name = "custom"

    def value(self, c):
        raise NotImplementedError

    def derivative(self, c):
        raise NotImplementedError

    def second_derivative(self, c):
        c = np.asarray(c, dtype=float)
        h = 1e-5 * c
        return (self.derivative(c + h) - self.derivative(c - h)) / (2 * h)

    def inverse_marginal(self, z):
        """Closed-form inverse of ``derivative``; ``None`` when unavailable."""
        return None

    def conjugate(self, z):
        """Closed-form ``sup_c (u(c) - c z)``; ``None`` when unavailable."""
        return None

    def to_dict(self) -> dict:
        return {"type": self.name}


class LogUtility(Utility1D):
    name = "log"

    def value(self, c):
        c = np.asarray(c, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(c)

    def derivative(self, c):
        return 1.0 / np.asarray(c, dtype=float)

    def second_derivative(self, c):
        c = np.asarray(c, dtype=float)
        return -1.0 / (c * c)

    def inverse_marginal(self, z):
        return 1.0 / np.asarray(z, dtype=float)

    def conjugate(self, z):
        return -np.log(np.asarray(z, dtype=float)) - 1.0


class PowerUtility(Utility1D):
    """``c**p / p`` with ``p < 1``, ``p != 0``."""

    name = "power"

    def __init__(self, p: float):
        if not (p < 1 and p != 0):
            raise ValueError(f"power utility needs p < 1 and p != 0, got {p}")
        self.p = float(p)

    def value(self, c):
        c = np.asarray(c, dtype=float)
        with np.errstate(divide="ignore"):
            return np.power(c, self.p) / self.p

    def derivative(self, c):
        return np.power(np.asarray(c, dtype=float), self.p - 1.0)

    def second_derivative(self, c):
        return (self.p - 1.0) * np.power(np.asarray(c, dtype=float), self.p - 2.0)

    def inverse_marginal(self, z):
        return np.power(np.asarray(z, dtype=float), 1.0 / (self.p - 1.0))

    def conjugate(self, z):
        c = self.inverse_marginal(z)
        return np.power(c, self.p) * (1.0 - self.p) / self.p

    def to_dict(self) -> dict:
        return {"type": "power", "p": self.p}

    def __repr__(self):
        return f"PowerUtility(p={self.p})"


class CustomUtility1D(Utility1D):
    """Wrap user callables; inversion and conjugation fall back to numerics."""

    def __init__(self, value, derivative, second_derivative=None, name="custom"):
        self._value = value
        self._derivative = derivative
        self._second = second_derivative
        self.name = name

    def value(self, c):
        return np.asarray(self._value(np.asarray(c, dtype=float)), dtype=float)

    def derivative(self, c):
        return np.asarray(self._derivative(np.asarray(c, dtype=float)), dtype=float)

    def second_derivative(self, c):
        if self._second is None:
            return super().second_derivative(c)
        return np.asarray(self._second(np.asarray(c, dtype=float)), dtype=float)


def utility_1d_from_dict(spec: dict) -> Utility1D:
    kind = spec.get("type")
    if kind == "log":
        return LogUtility()
    if kind == "power":
        return PowerUtility(spec["p"])
    raise ValueError(f"unknown one-good utility type {kind!r}")


# ---------------------------------------------------------------------------
# the field


@dataclass(frozen=True)
class UtilityField:
    """An ``m``-good utility process with gradient (and optional Hessian).

    ``value_fn``, ``grad_fn`` and ``hess_fn`` take ``(t, state, c)`` with
    ``c`` of shape ``(..., m)`` and return arrays of shape ``(...)``,
    ``(..., m)`` and ``(..., m, m)``.  Without ``hess_fn`` the Hessian is a
    central difference of the gradient.
    """

    m: int
    value_fn: Callable
    grad_fn: Callable
    hess_fn: Callable | None = None
    family: str = "custom"
    components: tuple = ()
    exponents: tuple = ()
    label: str = ""

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    def _prep(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.m:
            raise ValueError(f"expected last axis of length {self.m}, got {c.shape}")
        return c

    def eval(self, t, state, c):
        """Utility value; boundary points get their segment limit."""
        c = self._prep(c)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self.value_fn(t, state, c), dtype=float)
        if self.family == "custom":
            bad = np.isnan(out) & np.any(c <= 0, axis=-1)
            if np.any(bad):
                out = np.array(out, copy=True)
                for idx in zip(*np.nonzero(bad)):
                    tt = np.broadcast_to(t, out.shape)[idx]
                    ss = np.broadcast_to(state, out.shape)[idx]
                    out[idx] = segment_limit(self, tt, ss, c[idx])
        return out

    def gradient(self, t, state, c):
        c = self._prep(c)
        return np.asarray(self.grad_fn(t, state, c), dtype=float)

    def hessian(self, t, state, c):
        c = self._prep(c)
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(t, state, c), dtype=float)
        out = np.empty(c.shape + (self.m,))
        for i in range(self.m):
            h = 1e-5 * c[..., i]
            up = c.copy()
            dn = c.copy()
            up[..., i] += h
            dn[..., i] -= h
            out[..., :, i] = (self.gradient(t, state, up) - self.gradient(t, state, dn)) / (
                2 * h[..., None]
            )
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def to_dict(self) -> dict:
        if self.family == "additive":
            return {"family": "additive", "components": [u.to_dict() for u in self.components]}
        if self.family == "cobb_douglas":
            p1, p2 = self.exponents
            return {"family": "cobb_douglas", "p1": p1, "p2": p2}
        return {"family": "custom", "label": self.label}


def segment_limit(U: UtilityField, t, state, c, interior=None) -> ExtendedReal:
    """Limit of ``U`` along the segment from an interior point to ``c``.

    Values are taken at ``s = 10**-k``; when successive decrements stop
    shrinking the limit is ``-inf``, otherwise the geometric tail is summed.
    """
    c = np.asarray(c, dtype=float)
    x1 = np.ones_like(c) if interior is None else np.asarray(interior, dtype=float)
    s = 10.0 ** -np.arange(1, 13)
    pts = c[None, :] + s[:, None] * (x1 - c)[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(U.value_fn(t, state, pts), dtype=float)
    if np.any(np.isneginf(vals)):
        return -math.inf
    steps = np.diff(vals)
    if steps[-1] == 0.0:
        return float(vals[-1])
    ratio = steps[-1] / steps[-2]
    if steps[-1] < 0 and ratio >= 1.0 - 1e-6:
        return -math.inf
    return float(vals[-1] + steps[-1] * ratio / (1.0 - ratio))


def make_additive(per_good_utilities: Sequence[Utility1D]) -> UtilityField:
    """Sum of one-good utilities, ``U(c) = sum_i u_i(c_i)``."""
    comps = tuple(per_good_utilities)
    if not comps:
        raise ValueError("additive utility needs at least one component")
    m = len(comps)

    def value(t, state, c):
        return sum(u.value(c[..., i]) for i, u in enumerate(comps))

    def grad(t, state, c):
        return np.stack([u.derivative(c[..., i]) for i, u in enumerate(comps)], axis=-1)

    def hess(t, state, c):
        diag = np.stack([u.second_derivative(c[..., i]) for i, u in enumerate(comps)], axis=-1)
        out = np.zeros(c.shape + (m,))
        idx = np.arange(m)
        out[..., idx, idx] = diag
        return out

    return UtilityField(m, value, grad, hess, family="additive", components=comps)


def make_cobb_douglas(p1: float, p2: float) -> UtilityField:
    """``U(c1, c2) = -c1**p1 * c2**p2 / (p1 * p2)`` for negative exponents.

    Extended by ``-inf`` on the boundary of the orthant.
    """
    if not (p1 < 0 and p2 < 0):
        raise ValueError(f"Cobb-Douglas exponents must be negative, got {p1}, {p2}")
    p1 = float(p1)
    p2 = float(p2)

    def prod(c):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.power(c[..., 0], p1) * np.power(c[..., 1], p2)

    def value(t, state, c):
        P = prod(c)
        out = -P / (p1 * p2)
        return np.where(np.any(c <= 0, axis=-1), -np.inf, out)

    def grad(t, state, c):
        P = prod(c)
        return np.stack([-P / (c[..., 0] * p2), -P / (c[..., 1] * p1)], axis=-1)

    def hess(t, state, c):
        P = prod(c)
        c1, c2 = c[..., 0], c[..., 1]
        h11 = -(p1 - 1.0) * P / (c1 * c1 * p2)
        h22 = -(p2 - 1.0) * P / (c2 * c2 * p1)
        h12 = -P / (c1 * c2)
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    return UtilityField(2, value, grad, hess, family="cobb_douglas", exponents=(p1, p2))


def make_custom(m: int, value, gradient, hessian=None, label="custom") -> UtilityField:
    """Field from user callables ``(t, state, c) -> ...``."""
    return UtilityField(m, value, gradient, hessian, family="custom", label=label)


def utility_from_dict(spec: dict) -> UtilityField:
    family = spec.get("family")
    if family == "additive":
        return make_additive([utility_1d_from_dict(d) for d in spec["components"]])
    if family == "cobb_douglas":
        return make_cobb_douglas(spec["p1"], spec["p2"])
    raise ValueError(f"utility family {family!r} cannot be built from a config")


# ---------------------------------------------------------------------------
# sampled diagnostics


@dataclass
class SampleSpec:
    """Where to probe a field: time/state grids plus interior consumption draws."""

    times: tuple = (0.0,)
    states: tuple = (0,)
    n_points: int = 40
    low: float = 0.1
    high: float = 10.0
    seed: int = 0
    inada_small: float = 1e3
    inada_large: float = 1e-3
    fd_rel_tol: float = 1e-6


@dataclass
class CheckResult:
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list:
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {k: {"passed": c.passed, "worst": c.worst, "detail": c.detail}
                for k, c in self.checks.items()}


def _sample_points(spec: SampleSpec, m: int, rng, n=None):
    n = spec.n_points if n is None else n
    return np.exp(rng.uniform(np.log(spec.low), np.log(spec.high), size=(n, m)))


def check_assumption_U(U: UtilityField, sample_spec: SampleSpec | None = None) -> AssumptionReport:
    """Sampled checks of strict concavity, monotonicity, gradients, Inada and
    the boundary convention.  Never raises; every check carries its worst
    violation magnitude."""
    spec = sample_spec or SampleSpec()
    rng = np.random.default_rng(spec.seed)
    m = U.m
    report = AssumptionReport()
    conc, mono, gpos, fd, inada, bdry = [], [], [], [], [], []
    inada_ok = True
    bdry_ok = True

    for t in spec.times:
        for s in spec.states:
            a = _sample_points(spec, m, rng)
            b = _sample_points(spec, m, rng)
            ua, ub = U.eval(t, s, a), U.eval(t, s, b)
            umid = U.eval(t, s, 0.5 * (a + b))
            scale = 1.0 + np.abs(ua) + np.abs(ub)
            # strictness margin relative to the local scale
            conc.append(np.min((umid - 0.5 * (ua + ub)) / scale))

            for i in range(m):
                bumped = a.copy()
                bumped[:, i] *= 1.1
                mono.append(np.min(U.eval(t, s, bumped) - ua))

            g = U.gradient(t, s, a)
            gpos.append(np.min(g))
            for i in range(m):
                h = 1e-5 * a[:, i]
                up, dn = a.copy(), a.copy()
                up[:, i] += h
                dn[:, i] -= h
                num = (U.eval(t, s, up) - U.eval(t, s, dn)) / (2 * h)
                fd.append(np.max(np.abs(num - g[:, i]) / np.abs(g[:, i])))

            base = np.ones(m)
            grid = 10.0 ** np.arange(-6, 7)
            for i in range(m):
                pts = np.tile(base, (grid.size, 1))
                pts[:, i] = grid
                gi = U.gradient(t, s, pts)[:, i]
                decreasing = bool(np.all(np.diff(gi) < 0))
                # a threshold, or a slope still falling by a decade-on-decade factor
                small_ok = gi[0] > spec.inada_small or gi[0] / gi[1] > 1.01
                large_ok = gi[-1] < spec.inada_large or gi[-2] / gi[-1] > 1.01
                inada_ok &= decreasing and small_ok and large_ok
                inada.append(max(spec.inada_small / gi[0], gi[-1] / spec.inada_large))

            for i in range(m):
                edge = np.ones(m)
                edge[i] = 0.0
                at_edge = float(U.eval(t, s, edge[None, :])[0])
                limit = segment_limit(U, t, s, edge)
                if math.isinf(at_edge) or math.isinf(limit):
                    same = at_edge == limit
                    bdry.append(0.0 if same else math.inf)
                    bdry_ok &= same
                else:
                    err = abs(at_edge - limit) / (1.0 + abs(limit))
                    bdry.append(err)
                    bdry_ok &= err <= 1e-6

    worst_conc = float(min(conc))
    report.checks["strict_concavity"] = CheckResult(
        worst_conc > 1e-12, worst_conc, "min midpoint margin (relative)")
    worst_mono = float(min(mono))
    report.checks["monotonicity"] = CheckResult(worst_mono > 0, worst_mono, "min increment")
    worst_g = float(min(gpos))
    report.checks["gradient_positive"] = CheckResult(worst_g > 0, worst_g, "min gradient entry")
    worst_fd = float(max(fd))
    report.checks["gradient_fd"] = CheckResult(
        worst_fd <= spec.fd_rel_tol, worst_fd, "max relative gradient/FD mismatch")
    report.checks["inada"] = CheckResult(
        bool(inada_ok), float(max(inada)), "threshold ratio (<1 is inside bounds)")
    report.checks["boundary"] = CheckResult(
        bool(bdry_ok), float(max(bdry)), "boundary value vs segment limit")
    return report
