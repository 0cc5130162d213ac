"""Finite-state tree markets: deflator polytope, primal and dual solves, and
the end-to-end optimality report.

Conventions on a tree with nodes ``n``:

* ``dkappa[n]`` is the clock increment charged at node ``n``; the root must
  carry zero (the clock starts at zero).
* Consumption ``c[n]`` is a rate per unit of clock, so it costs
  ``dkappa[n] * S[n] . c[n]``.
* Wealth after consumption at ``n`` is
  ``x + sum of H[a] . (S~[child] - S~[a]) over strict ancestors a
  - sum of consumption costs on the path to n``, and must stay ``>= 0``.
* A deflator is a nonnegative tree martingale ``z`` with ``z[root] = 1`` that
  makes every traded price a martingale; dual processes are ``Y = y z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq, linprog

from . import barrier
from .errors import SolverError
from .image_duality import GoodsPrices, conjugate, image_utility
from .utility_fields import UtilityField

PROB_TOL = 1e-12


# ---------------------------------------------------------------------------
# market description


@dataclass
class FiniteMarket:
    """A finite tree with traded prices, goods prices and clock weights.

    Nodes are stored parents-first; ``parent[root] == -1`` and ``prob`` is
    conditional on the parent.
    """

    times: np.ndarray
    ids: list
    parent: np.ndarray
    prob: np.ndarray
    s_tilde: np.ndarray
    goods: np.ndarray
    dkappa: np.ndarray
    children: list = field(init=False)
    depth: np.ndarray = field(init=False)
    path_prob: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.parent = np.asarray(self.parent, dtype=int)
        self.prob = np.asarray(self.prob, dtype=float)
        self.s_tilde = np.atleast_2d(np.asarray(self.s_tilde, dtype=float))
        if self.s_tilde.shape[0] != len(self.ids):
            self.s_tilde = self.s_tilde.T
        self.goods = np.atleast_2d(np.asarray(self.goods, dtype=float))
        self.dkappa = np.asarray(self.dkappa, dtype=float)
        n = len(self.ids)
        self.children = [[] for _ in range(n)]
        self.depth = np.zeros(n, dtype=int)
        self.path_prob = np.ones(n)
        for k in range(n):
            p = self.parent[k]
            if p >= 0:
                if p >= k:
                    raise ValueError("nodes must be ordered parents-first")
                self.children[p].append(k)
                self.depth[k] = self.depth[p] + 1
                self.path_prob[k] = self.path_prob[p] * self.prob[k]

    # -- shape helpers -----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.s_tilde.shape[1]

    @property
    def m(self) -> int:
        return self.goods.shape[1]

    @property
    def leaves(self) -> np.ndarray:
        return np.array([k for k in range(self.n_nodes) if not self.children[k]])

    @property
    def internal(self) -> np.ndarray:
        return np.array([k for k in range(self.n_nodes) if self.children[k]], dtype=int)

    @property
    def charged(self) -> np.ndarray:
        return np.nonzero(self.dkappa > 0)[0]

    @property
    def node_times(self) -> np.ndarray:
        return self.times[self.depth]

    def path(self, k) -> list:
        out = [k]
        while self.parent[out[-1]] >= 0:
            out.append(self.parent[out[-1]])
        return out[::-1]

    @property
    def clock_bound(self) -> float:
        """Largest total clock mass along any root-to-leaf path."""
        return max(float(np.sum(self.dkappa[self.path(l)])) for l in self.leaves)

    def conditional_matrix(self) -> np.ndarray:
        """``M[n, l] = P(leaf l | node n)``; maps leaf values to node martingales."""
        L = self.leaves
        M = np.zeros((self.n_nodes, L.size))
        for j, l in enumerate(L):
            for a in self.path(l):
                M[a, j] = self.path_prob[l] / self.path_prob[a]
        return M

    # -- validation and I/O --------------------------------------------------

    def validate(self) -> list:
        """Invariant diagnostics as ``[{"path", "message"}]``; empty when valid."""
        out = []
        n = self.n_nodes
        if self.parent[0] != -1:
            out.append({"path": "tree[0]", "message": "first node must be the root"})
        for k in range(n):
            if self.parent[k] >= 0 and not (0 < self.prob[k] <= 1):
                out.append({"path": f"tree[{self.ids[k]}].prob",
                            "message": f"probability {self.prob[k]} not in (0, 1]"})
        for k in range(n):
            ch = self.children[k]
            if ch:
                total = float(np.sum(self.prob[ch]))
                if abs(total - 1.0) > PROB_TOL * 100:
                    out.append({"path": f"tree[{self.ids[k]}]",
                                "message": f"child probabilities of node {self.ids[k]} sum to {total!r}"})
        if np.any(~(self.goods > 0)):
            bad = [self.ids[k] for k in range(n) if np.any(~(self.goods[k] > 0))]
            out.append({"path": "tree.goods", "message": f"non-positive goods prices at nodes {bad}"})
        if np.any(self.dkappa < 0):
            out.append({"path": "tree.dkappa", "message": "clock increments must be >= 0"})
        if self.dkappa[0] != 0:
            out.append({"path": f"tree[{self.ids[0]}].dkappa",
                        "message": "clock must start at zero: root dkappa must be 0"})
        if not np.any(self.dkappa > 0):
            out.append({"path": "tree.dkappa", "message": "clock has no positive mass"})
        last = len(self.times) - 1
        for l in self.leaves:
            if self.depth[l] != last:
                out.append({"path": f"tree[{self.ids[l]}]",
                            "message": f"leaf at depth {self.depth[l]}, expected {last}"})
        if np.any(np.diff(self.times) <= 0):
            out.append({"path": "times", "message": "times must be strictly increasing"})
        return out

    def check(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(f"{p['path']}: {p['message']}" for p in problems))
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteMarket":
        """Build from ``{times, tree: [{id, parent, prob, s_tilde, goods, dkappa}]}``."""
        nodes = list(doc["tree"])
        by_id = {nd["id"]: nd for nd in nodes}
        if len(by_id) != len(nodes):
            raise ValueError("duplicate node ids")
        roots = [nd for nd in nodes if nd.get("parent") is None]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        order, kids = [], {}
        for nd in nodes:
            if nd.get("parent") is not None:
                if nd["parent"] not in by_id:
                    raise ValueError(f"node {nd['id']!r} has unknown parent {nd['parent']!r}")
                kids.setdefault(nd["parent"], []).append(nd["id"])
        queue = [roots[0]["id"]]
        while queue:
            k = queue.pop(0)
            order.append(k)
            queue.extend(kids.get(k, []))
        index = {k: i for i, k in enumerate(order)}
        parent = [-1 if by_id[k].get("parent") is None else index[by_id[k]["parent"]] for k in order]
        prob = [1.0 if by_id[k].get("parent") is None else float(by_id[k]["prob"]) for k in order]
        return cls(
            times=doc["times"],
            ids=order,
            parent=parent,
            prob=prob,
            s_tilde=[list(np.atleast_1d(by_id[k]["s_tilde"])) for k in order],
            goods=[list(np.atleast_1d(by_id[k]["goods"])) for k in order],
            dkappa=[float(by_id[k].get("dkappa", 0.0)) for k in order],
        )

    def to_dict(self) -> dict:
        tree = []
        for k in range(self.n_nodes):
            p = self.parent[k]
            tree.append({
                "id": self.ids[k],
                "parent": None if p < 0 else self.ids[p],
                "prob": float(self.prob[k]),
                "s_tilde": [float(v) for v in self.s_tilde[k]],
                "goods": [float(v) for v in self.goods[k]],
                "dkappa": float(self.dkappa[k]),
            })
        return {"times": [float(t) for t in self.times], "tree": tree}

    def prices(self) -> GoodsPrices:
        return GoodsPrices.by_state(self.goods)


def build_tree(times, s0, factors, probs, goods_fn, dkappa_fn, d=None) -> FiniteMarket:
    """Non-recombining tree where each node branches with the same
    multiplicative ``factors`` (shape ``(b, d)``) and probabilities.

    ``goods_fn(depth, k)`` and ``dkappa_fn(depth, k)`` give goods prices and
    clock weights for the ``k``-th node created.
    """
    factors = np.atleast_2d(np.asarray(factors, dtype=float))
    if d is not None and factors.shape[1] != d:
        factors = factors.T
    probs = np.asarray(probs, dtype=float)
    ids, parent, prob, st, goods, dk = [0], [-1], [1.0], [np.atleast_1d(np.asarray(s0, float))], [], []
    goods.append(goods_fn(0, 0))
    dk.append(0.0)
    frontier = [0]
    for depth in range(1, len(times)):
        nxt = []
        for node in frontier:
            for j in range(factors.shape[0]):
                k = len(ids)
                ids.append(k)
                parent.append(node)
                prob.append(probs[j])
                st.append(st[node] * factors[j])
                goods.append(goods_fn(depth, k))
                dk.append(dkappa_fn(depth, k))
                nxt.append(k)
        frontier = nxt
    return FiniteMarket(times, ids, parent, prob, np.array(st), np.array(goods), np.array(dk))


def random_market(rng, periods=2, branching=3, d=1, m=2, charge_intermediate=True) -> FiniteMarket:
    """Random arbitrage-free tree for property tests.

    Each node draws its own branch returns so that zero lies strictly inside
    their convex hull, hence an equivalent martingale measure exists.
    """
    if branching < d + 1:
        raise ValueError("need branching >= d + 1 for an arbitrage-free tree")
    times = np.arange(periods + 1, dtype=float)
    ids, parent, prob, st, goods, dk = [0], [-1], [1.0], [np.ones(d)], [], []
    goods.append(np.exp(rng.normal(0, 0.3, m)))
    dk.append(0.0)
    frontier = [0]
    for depth in range(1, periods + 1):
        nxt = []
        for node in frontier:
            while True:
                q = rng.dirichlet(np.full(branching, 2.0))
                R = rng.normal(0.0, 0.25, size=(branching, d))
                R -= (q @ R)[None, :]
                if np.all(1 + R > 0.2) and np.linalg.matrix_rank(R) == min(d, branching - 1):
                    break
            p = rng.dirichlet(np.full(branching, 3.0))
            p = np.maximum(p, 0.05)
            p /= p.sum()
            for j in range(branching):
                k = len(ids)
                ids.append(k)
                parent.append(node)
                prob.append(p[j])
                st.append(st[node] * (1 + R[j]))
                goods.append(np.exp(rng.normal(0, 0.3, m)))
                final = depth == periods
                if final:
                    dk.append(float(rng.uniform(0.5, 1.5)))
                elif charge_intermediate:
                    dk.append(float(rng.choice([0.0, rng.uniform(0.2, 1.0)])))
                else:
                    dk.append(0.0)
                nxt.append(k)
        frontier = nxt
    mk = FiniteMarket(times, ids, parent, prob, np.array(st), np.array(goods), np.array(dk))
    prob_fix = mk.prob.copy()
    for k in range(mk.n_nodes):
        ch = mk.children[k]
        if ch:
            prob_fix[ch] /= prob_fix[ch].sum()
    mk.prob = prob_fix
    mk.__post_init__()
    return mk


# ---------------------------------------------------------------------------
# deflators and NUPBR


def martingale_constraints(market: FiniteMarket):
    """``(A, b)`` on leaf densities: unit mean plus martingale pricing of each
    traded asset at every internal node."""
    M = market.conditional_matrix()
    rows = [market.path_prob[market.leaves]]
    rhs = [1.0]
    for n in market.internal:
        ch = market.children[n]
        for j in range(market.d):
            dS = market.s_tilde[ch, j] - market.s_tilde[n, j]
            if np.all(dS == 0):
                continue
            rows.append((market.prob[ch] * dS) @ M[ch])
            rhs.append(0.0)
    return np.array(rows), np.array(rhs), M


@dataclass
class NUPBRResult:
    holds: bool
    witness: np.ndarray | None
    margin: float
    arbitrage_node: int | None = None
    arbitrage_strategy: np.ndarray | None = None


def check_nupbr(market: FiniteMarket) -> NUPBRResult:
    """Strict-feasibility LP for the deflator polytope.

    Returns a strictly positive deflator (node values) when one exists,
    otherwise a one-period arbitrage ``(node, H)`` with nonnegative gains at
    every child and positive expected gain.
    """
    A, b, M = martingale_constraints(market)
    L = A.shape[1]
    # variables (z_leaf, s): max s s.t. z - s >= 0, A z = b, s <= 1
    c = np.zeros(L + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(L), np.ones((L, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(L), A_eq=np.hstack([A, np.zeros((A.shape[0], 1))]),
                  b_eq=b, bounds=[(0, None)] * L + [(None, 1.0)], method="highs")
    if res.status == 0 and res.x[-1] > 1e-9:
        z = M @ res.x[:L]
        return NUPBRResult(True, z, float(res.x[-1]))

    for n in market.internal:
        ch = market.children[n]
        dS = market.s_tilde[ch] - market.s_tilde[n]
        if not np.any(dS):
            continue
        # max sum_k p_k g_k with g = dS H, 0 <= g <= 1
        obj = -(market.prob[ch] @ dS)
        r = linprog(obj, A_ub=np.vstack([-dS, dS]), b_ub=np.concatenate([np.zeros(len(ch)), np.ones(len(ch))]),
                    bounds=[(None, None)] * market.d, method="highs")
        if r.status == 0 and -r.fun > 1e-12:
            return NUPBRResult(False, None, 0.0, int(n), r.x)
    return NUPBRResult(False, None, 0.0)


# ---------------------------------------------------------------------------
# primal


@dataclass
class PrimalSolution:
    x: float
    value: float
    c: np.ndarray
    H: np.ndarray
    wealth: np.ndarray
    kkt_residual: float
    iterations: int


def _wealth_matrix(market: FiniteMarket, spend_weights: np.ndarray, k: int):
    """``post = x + G v`` with ``v = (c over charged nodes * k, H over internal * d)``."""
    C = market.charged
    I = market.internal
    nC, nI, d = C.size, I.size, market.d
    col_c = {n: i for i, n in enumerate(C)}
    col_h = {n: i for i, n in enumerate(I)}
    G = np.zeros((market.n_nodes, nC * k + nI * d))
    for node in range(market.n_nodes):
        path = market.path(node)
        for a in path:
            if a in col_c:
                i = col_c[a]
                G[node, i * k:(i + 1) * k] -= spend_weights[i]
        for a, nxt in zip(path[:-1], path[1:]):
            j = col_h[a]
            G[node, nC * k + j * d: nC * k + (j + 1) * d] += market.s_tilde[nxt] - market.s_tilde[a]
    return G


def _solve_consumption(market, x, k, spend_weights, node_value, node_grad, node_hess,
                       rng=None, gap_tol=1e-12) -> PrimalSolution:
    C = market.charged
    nC = C.size
    w = market.path_prob[C] * market.dkappa[C]
    G_post = _wealth_matrix(market, spend_weights, k)
    n_var = G_post.shape[1]
    G = np.vstack([G_post, np.hstack([np.eye(nC * k), np.zeros((nC * k, n_var - nC * k))])])
    h = np.concatenate([np.full(market.n_nodes, x), np.zeros(nC * k)])

    # start: spend half the budget along every path, no trading
    c0 = x / (2.0 * market.clock_bound * k) * market.dkappa[C][:, None] / spend_weights
    v0 = np.concatenate([c0.ravel(), np.zeros(n_var - nC * k)])
    if rng is not None:
        v0[: nC * k] *= rng.uniform(0.2, 1.0, nC * k)
        scale = x / (4.0 * max(1.0, np.abs(G_post[:, nC * k:]).sum(axis=1).max()))
        direction = rng.normal(size=n_var - nC * k)
        for _ in range(60):
            trial = v0.copy()
            trial[nC * k:] = scale * direction
            if np.all(G @ trial + h > 0):
                v0 = trial
                break
            scale *= 0.5

    def unpack(v):
        return v[: nC * k].reshape(nC, k)

    def f(v):
        c = unpack(v)
        if np.any(c <= 0):
            return -math.inf
        vals = node_value(c)
        return float(w @ vals) if np.all(np.isfinite(vals)) else -math.inf

    def grad(v):
        out = np.zeros(n_var)
        out[: nC * k] = (w[:, None] * node_grad(unpack(v))).ravel()
        return out

    def hess(v):
        out = np.zeros((n_var, n_var))
        blocks = w[:, None, None] * node_hess(unpack(v))
        for i in range(nC):
            out[i * k:(i + 1) * k, i * k:(i + 1) * k] = blocks[i]
        return out

    res = barrier.maximize(f, grad, hess, v0, G, h, gap_tol=gap_tol)
    c_full = np.zeros((market.n_nodes, k))
    c_full[C] = unpack(res.v)
    H_full = np.zeros((market.n_nodes, market.d))
    H_full[market.internal] = res.v[nC * k:].reshape(-1, market.d)
    wealth = x + G_post @ res.v
    return PrimalSolution(x, res.value, c_full, H_full, wealth, res.kkt_residual, res.iterations)


def solve_primal(market: FiniteMarket, U: UtilityField, x: float, rng=None, gap_tol=1e-12) -> PrimalSolution:
    """Maximise expected clock-integrated utility over consumption and trading
    with nonnegative wealth; direct multi-good formulation."""
    if not x > 0:
        raise ValueError("initial capital must be positive")
    if U.m != market.m:
        raise ValueError(f"utility has {U.m} goods, market has {market.m}")
    C = market.charged
    t = market.node_times[C]
    S = market.goods[C]
    spend = market.dkappa[C][:, None] * S
    return _solve_consumption(
        market, x, U.m, spend,
        lambda c: U.eval(t, C, c),
        lambda c: U.gradient(t, C, c),
        lambda c: U.hessian(t, C, c),
        rng=rng, gap_tol=gap_tol,
    )


def solve_single_good(market: FiniteMarket, U: UtilityField, x: float, analytic=True, rng=None,
                      gap_tol=1e-12):
    """Auxiliary problem with the image utility; returns the solution (with
    one column of total spending) and the per-good split of every node."""
    Ustar = image_utility(U, market.prices(), analytic=analytic)
    C = market.charged
    t = market.node_times[C]
    spend = market.dkappa[C][:, None]
    sol = _solve_consumption(
        market, x, 1, spend,
        lambda c: Ustar.eval(t, C, c[:, 0]),
        lambda c: Ustar.derivative(t, C, c[:, 0])[:, None],
        lambda c: Ustar.second_derivative(t, C, c[:, 0])[:, None, None],
        rng=rng, gap_tol=gap_tol,
    )
    split = np.zeros((market.n_nodes, U.m))
    split[C] = Ustar.allocation(t, C, sol.c[C, 0])
    return sol, split


# ---------------------------------------------------------------------------
# dual


@dataclass
class DualSolution:
    y: float
    value: float
    z: np.ndarray
    Y: np.ndarray
    derivative: float
    kkt_residual: float
    boundary_flag: bool


class DeflatorPolytope:
    """Closed polytope of leaf densities ``z >= 0`` with ``A z = b``.

    Parametrised as ``z = z0 + N w`` around a strictly positive witness.
    """

    def __init__(self, market: FiniteMarket):
        nup = check_nupbr(market)
        if not nup.holds:
            raise ValueError("market admits arbitrage: deflator set is empty")
        self.market = market
        self.A, self.b, self.M = martingale_constraints(market)
        L = market.leaves
        self.z0 = nup.witness[L]
        self.N = null_space(self.A)

    def nodes(self, z_leaf):
        return self.M @ z_leaf

    def random_interior(self, rng, shrink=0.5):
        if self.N.shape[1] == 0:
            return self.z0.copy()
        w = rng.normal(size=self.N.shape[1])
        d = self.N @ w
        neg = d < 0
        step = np.min(-self.z0[neg] / d[neg]) if np.any(neg) else 1.0
        return self.z0 + shrink * rng.uniform(0.1, 1.0) * step * d


def solve_dual(market: FiniteMarket, U: UtilityField, y: float, rng=None, polytope=None,
               analytic=True, gap_tol=1e-12) -> DualSolution:
    """Minimise ``E[sum dkappa V*(y z)]`` over the closed deflator polytope."""
    if not y > 0:
        raise ValueError("dual variable y must be positive")
    poly = polytope or DeflatorPolytope(market)
    V = conjugate(image_utility(U, market.prices(), analytic=analytic))
    C = market.charged
    t = market.node_times[C]
    w = market.path_prob[C] * market.dkappa[C]
    MC = poly.M[C]
    start = poly.z0 if rng is None else poly.random_interior(rng)
    N = poly.N

    def F(zl):
        zc = MC @ zl
        if np.any(zc <= 0):
            return math.inf
        return float(w @ V.eval(t, C, y * zc))

    if N.shape[1] == 0:
        z_leaf = poly.z0
        kkt = 0.0
    else:
        base = start

        def f(wv):
            return -F(base + N @ wv)

        def grad(wv):
            zc = MC @ (base + N @ wv)
            return -(N.T @ (MC.T @ (w * y * V.derivative(t, C, y * zc))))

        def hess(wv):
            zc = MC @ (base + N @ wv)
            D = w * y * y * V.second_derivative(t, C, y * zc)
            B = MC @ N
            return -(B.T * D) @ B

        res = barrier.maximize(f, grad, hess, np.zeros(N.shape[1]), N, base, gap_tol=gap_tol)
        wv, kkt = res.v, res.kkt_residual
        # the flat directions of low-weight nodes are resolved by plain Newton
        # steps when the optimiser is interior
        if np.min(base + N @ wv) > 1e-8 * np.max(base + N @ wv):
            wv, kkt = barrier.polish(f, grad, hess, wv, lambda v: bool(np.all(base + N @ v > 0)))
        z_leaf = base + N @ wv
    z = poly.nodes(z_leaf)
    value = F(z_leaf)
    deriv = float(w @ (z[C] * V.derivative(t, C, y * z[C])))
    flag = bool(np.min(z[C]) < 1e-8)
    return DualSolution(y, value, z, y * z, deriv, kkt, flag)


# ---------------------------------------------------------------------------
# Theorem-level report


@dataclass
class Diagnostic:
    residual: float
    tolerance: float
    node: object = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "tolerance": self.tolerance, "passed": self.passed,
                "node": self.node, "detail": self.detail}


@dataclass
class SolutionReport:
    x: float
    y: float
    c_hat: np.ndarray
    c_star: np.ndarray
    Y_hat: np.ndarray
    u: float
    v: float
    u_star: float
    u_prime: float
    v_prime: float
    diagnostics: dict
    flags: list = field(default_factory=list)
    node_ids: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.diagnostics.values())

    def failures(self) -> dict:
        return {k: d for k, d in self.diagnostics.items() if not d.passed}

    def to_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "u": self.u, "v": self.v, "u_star": self.u_star,
            "u_prime": self.u_prime, "v_prime": self.v_prime,
            "c_hat": {str(i): [float(v) for v in row] for i, row in zip(self.node_ids, self.c_hat)},
            "c_star": {str(i): float(v) for i, v in zip(self.node_ids, self.c_star)},
            "Y_hat": {str(i): float(v) for i, v in zip(self.node_ids, self.Y_hat)},
            "diagnostics": {k: d.to_dict() for k, d in self.diagnostics.items()},
            "flags": list(self.flags),
            "passed": self.passed,
        }


def marginal_utility(market, U, x, h_rel=1e-4, gap_tol=1e-12):
    """Central difference ``(u(x+h) - u(x-h)) / 2h`` with ``h = h_rel x``."""
    h = h_rel * x
    up = solve_primal(market, U, x + h, gap_tol=gap_tol).value
    dn = solve_primal(market, U, x - h, gap_tol=gap_tol).value
    return (up - dn) / (2 * h)


def legendre_infimum(market, U, x, y_guess, polytope=None):
    """``inf_y v(y) + x y`` via the root of ``v'(y) + x`` in ``log y``."""
    poly = polytope or DeflatorPolytope(market)
    g = lambda ly: solve_dual(market, U, math.exp(ly), polytope=poly).derivative + x
    lo = hi = math.log(y_guess)
    step = 0.05
    while g(lo) > 0:
        lo -= step
        step *= 2
    step = 0.05
    while g(hi) < 0:
        hi += step
        step *= 2
    ly = lo if lo == hi else brentq(g, lo, hi, xtol=1e-13, rtol=1e-14)
    y = math.exp(ly)
    return solve_dual(market, U, y, polytope=poly).value + x * y, y


def verify_theorem1(market: FiniteMarket, U: UtilityField, x: float, n_restarts=5, seed=0,
                    tol=1e-6) -> SolutionReport:
    """Solve both problems at ``x`` and ``y = u'(x)`` and measure every
    optimality relation; residuals are returned, never raised."""
    market.check()
    rng = np.random.default_rng(seed)
    poly = DeflatorPolytope(market)
    C = market.charged
    t = market.node_times[C]
    diags = {}
    flags = []

    primal = solve_primal(market, U, x)
    y = marginal_utility(market, U, x)
    dual = solve_dual(market, U, y, polytope=poly)
    scale = max(abs(primal.value), x * y)

    # conjugacy
    inf_val, y_star = legendre_infimum(market, U, x, y, poly)
    diags["conjugacy"] = Diagnostic(abs(primal.value - inf_val) / scale, tol,
                                    detail=f"inf attained at y={y_star!r}")
    # weak duality on a few y
    gaps = [solve_dual(market, U, y * f, polytope=poly).value + x * y * f - primal.value
            for f in (0.25, 0.5, 2.0, 4.0)]
    diags["weak_duality"] = Diagnostic(max(0.0, -min(gaps)) / scale, 1e-9,
                                       detail="min of v(y)+xy-u(x) over sampled y")
    # budget binding
    S = market.goods
    spend = np.sum(primal.c * S, axis=1)
    budget = float(np.sum(market.path_prob[C] * market.dkappa[C] * spend[C] * dual.Y[C] / y))
    diags["budget_binding"] = Diagnostic(abs(budget - x) / x, tol, detail=f"E[...] = {budget!r}")
    # pointwise first-order conditions
    grads = U.gradient(t, C, primal.c[C])
    ratio = grads / S[C]
    foc = np.abs(dual.Y[C][:, None] - ratio) / dual.Y[C][:, None]
    worst = int(np.unravel_index(np.argmax(foc), foc.shape)[0]) if foc.size else None
    diags["foc_goods"] = Diagnostic(float(np.max(foc, initial=0.0)), tol,
                                    node=None if worst is None else market.ids[C[worst]])
    Ustar = image_utility(U, market.prices())
    slope = Ustar.derivative(t, C, spend[C])
    foc2 = np.abs(dual.Y[C] - slope) / dual.Y[C]
    worst = int(np.argmax(foc2)) if foc2.size else None
    diags["foc_image"] = Diagnostic(float(np.max(foc2, initial=0.0)), tol,
                                    node=None if worst is None else market.ids[C[worst]])
    # Inada-type trend of u'
    xs = x * 10.0 ** np.arange(-2, 3)
    ups = np.array([marginal_utility(market, U, xi) for xi in xs])
    decreasing = bool(np.all(np.diff(ups) < 0))
    spread = ups[0] / ups[-1]
    diags["inada_trend"] = Diagnostic(0.0 if (decreasing and spread > 10) else 1.0, 0.0,
                                      detail=f"u' over 4 decades: {ups.tolist()}")
    # uniqueness
    dv, dc = 0.0, 0.0
    cmax = float(np.max(np.abs(primal.c)))
    Ymax = float(np.max(dual.Y[C]))
    dy = 0.0
    for _ in range(n_restarts):
        alt = solve_primal(market, U, x, rng=rng)
        dv = max(dv, abs(alt.value - primal.value) / scale)
        dc = max(dc, float(np.max(np.abs(alt.c - primal.c))) / cmax)
        alt_d = solve_dual(market, U, y, rng=rng, polytope=poly)
        dy = max(dy, float(np.max(np.abs(alt_d.Y[C] - dual.Y[C]))) / Ymax)
    diags["uniqueness_value"] = Diagnostic(dv, 1e-8)
    diags["uniqueness_optimizer"] = Diagnostic(max(dc, dy), tol)
    # auxiliary single-good route
    aux, split = solve_single_good(market, U, x)
    diags["two_stage_value"] = Diagnostic(abs(aux.value - primal.value) / scale, tol)
    diags["two_stage_split"] = Diagnostic(
        float(np.max(np.abs(split[C] - primal.c[C]))) / cmax, tol)
    # admissibility of the primal optimiser
    diags["wealth_nonnegative"] = Diagnostic(max(0.0, -float(np.min(primal.wealth))) / x, 1e-12)
    diags["dual_positive"] = Diagnostic(0.0 if np.all(dual.Y[C] > 0) else 1.0, 0.0)
    if dual.boundary_flag:
        flags.append("dual optimiser touches the polytope boundary on a charged node")

    c_star = np.zeros(market.n_nodes)
    c_star[C] = spend[C]
    return SolutionReport(
        x=float(x), y=float(y), c_hat=primal.c, c_star=c_star, Y_hat=dual.Y,
        u=primal.value, v=dual.value, u_star=aux.value, u_prime=float(y),
        v_prime=dual.derivative, diagnostics=diags, flags=flags, node_ids=list(market.ids),
    )


def value_function_table(market: FiniteMarket, U: UtilityField, xs) -> list:
    """Rows ``(x, u(x), u'(x), y, v(y))`` with ``y = u'(x)``."""
    poly = DeflatorPolytope(market)
    rows = []
    for x in xs:
        u = solve_primal(market, U, x).value
        up = marginal_utility(market, U, x)
        v = solve_dual(market, U, up, polytope=poly).value
        rows.append((float(x), u, up, up, v))
    return rows
