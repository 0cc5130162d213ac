"""Log-barrier Newton method for small smooth concave programs.

Solves ``max f(v)`` subject to ``G v + h > 0`` for a concave ``f`` with
gradient and Hessian.  Sized for desk-scale trees (a few hundred variables),
so every Newton system is dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SolverError


@dataclass
class BarrierResult:
    v: np.ndarray
    value: float
    slack: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    t: float
    gap_bound: float


def _newton_direction(H, g):
    # -H is positive (semi)definite for a concave barrier objective
    try:
        return scipy.linalg.solve(-H, g, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(-H, g, rcond=None)[0]


def maximize(f, grad, hess, v0, G, h, gap_tol=1e-12, mu=20.0,
             t0=None, max_iter=None) -> BarrierResult:
    """Path-following barrier method.

    ``f`` may return ``-inf`` outside its domain; the line search backs off.
    Stops once the duality-gap bound ``n/t`` is below ``gap_tol`` times the
    objective scale at the start.  The
    stationarity residual ``|grad f + G^T lam|`` is reported, not enforced:
    binding constraints make it noisy near the boundary.
    """
    v = np.array(v0, dtype=float)
    n_con = G.shape[0]
    s = G @ v + h
    if np.any(s <= 0):
        raise SolverError("barrier start is not strictly feasible")
    fv = f(v)
    if not math.isfinite(fv):
        raise SolverError("objective is not finite at the starting point")
    # objective scale; the gap target is relative to it so that rescaling
    # the problem leaves the slack conditioning unchanged
    scale = max(abs(fv), abs(float(grad(v) @ v)))
    if not scale > 0:
        scale = 1.0
    target = gap_tol * scale
    t = t0 if t0 is not None else n_con / scale
    max_iter = max_iter or 200 * v.size
    iters = 0

    while True:
        # centering; the decrement is in t-scaled units, so dec/(2t) bounds
        # the centering error in f
        inner = 0
        while True:
            iters += 1
            inner += 1
            if iters > max_iter:
                raise SolverError(f"barrier method exceeded {max_iter} Newton steps")
            inv = 1.0 / s
            gf = t * grad(v)
            gb = G.T @ inv
            g = gf + gb
            H = t * hess(v) - (G.T * inv**2) @ G
            d = _newton_direction(H, g)
            dec = float(g @ d)
            # decrement at the rounding level of the summed gradient terms
            noise = 1e3 * np.finfo(float).eps * float((np.abs(gf) + np.abs(G.T) @ inv) @ np.abs(d))
            if dec <= max(1e-9, noise) or dec / t <= 1e-2 * target:
                break
            Gd = G @ d
            neg = Gd < 0
            alpha = 1.0
            if np.any(neg):
                alpha = min(1.0, 0.99 * float(np.min(-s[neg] / Gd[neg])))
            if dec < 0.25 and alpha == 1.0:
                v_new = v + d
                f_new = f(v_new)
                if math.isfinite(f_new):
                    v, fv, s = v_new, f_new, G @ v_new + h
                    continue
            while True:
                v_new = v + alpha * d
                s_new = G @ v_new + h
                f_new = f(v_new) if np.all(s_new > 0) else -math.inf
                if math.isfinite(f_new):
                    gain = t * (f_new - fv) + float(np.sum(np.log(s_new / s)))
                    if gain >= 0.25 * alpha * dec:
                        break
                alpha *= 0.5
                if alpha < 1e-14:
                    break
            if alpha < 1e-14:
                # no representable ascent left at this t
                break
            v, fv, s = v_new, f_new, s_new

        lam = 1.0 / (t * s)
        gv = grad(v)
        stat = float(np.max(np.abs(gv + G.T @ lam), initial=0.0))
        if n_con / t <= target:
            # suboptimality is bounded by (n + dec) / t
            return BarrierResult(v, fv, s, lam, stat, iters, t, (n_con + max(dec, 0.0)) / t)
        t *= mu


def polish(f, grad, hess, v, feasible, max_iter=30):
    """Damped Newton steps on the unconstrained problem from an interior
    point; used when no constraint is active at the optimum.  Returns the
    improved point and the final gradient norm."""
    fv = f(v)
    for _ in range(max_iter):
        g = grad(v)
        H = hess(v)
        d = np.linalg.lstsq(-H, g, rcond=None)[0]
        dec = float(g @ d)
        if not dec > 0 or dec < 1e-30 * max(1.0, abs(fv)):
            break
        alpha = 1.0
        while alpha > 1e-10:
            cand = v + alpha * d
            if feasible(cand):
                fc = f(cand)
                if fc >= fv - 1e-15 * max(1.0, abs(fv)):
                    break
            alpha *= 0.5
        else:
            break
        step = alpha * d
        v, fv = cand, fc
        if float(np.max(np.abs(step))) <= 1e-15 * max(1.0, float(np.max(np.abs(v)))):
            break
    return v, float(np.linalg.norm(grad(v), np.inf))
