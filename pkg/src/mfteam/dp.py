"""Dynamic programs over mean-fields.

Three solvers live here:

* :func:`solve_decentralized_tree` and :func:`solve_decentralized_grid` solve
  the deterministic lifted problem whose state is the infinite-population
  flow ``z``. The tree solver enumerates every policy sequence; the grid
  solver runs backward induction over ``Q_nu`` with nearest-point projection.
* :func:`solve_sharing` solves the exact mean-field sharing problem of ``n``
  agents by backward induction over ``M_n``.

:func:`evaluate_strategy_exact` computes the exact expected cost of any
homogeneous strategy by propagating the law of the mean-field over ``M_n``.
Every argmin breaks ties toward the lowest policy index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import convolve
from scipy.special import gammaln, xlogy

from .lift import POLICY_CAP, _actions, kernel_rows, lift_all, lift_cost, lift_dynamics, policy_table
from .model import ModelSpec
from .simplex import (
    DEFAULT_CAP,
    CapExceededError,
    EmpiricalIndex,
    compositions,
    enumerate_grid,
    grid_flat_index,
    num_empirical,
    quantize_counts,
)

COMPUTE_CAP = 2 * 10**7


@lru_cache(maxsize=4096)
def _compositions(c: int, d: int) -> np.ndarray:
    return compositions(c, d)


def _check(size: int, cap: int, what: str):
    if size > cap:
        raise CapExceededError(f"{what}: {size} exceeds cap {cap}")


# --------------------------------------------------------------------------
# exact law of the next mean-field


def _multinomial_block(c: int, p: np.ndarray) -> np.ndarray:
    """Multinomial(c, p) pmf on a dense grid over the first ``len(p) - 1`` counts."""
    d = len(p)
    shape = (c + 1,) * (d - 1)
    out = np.zeros(shape)
    ks = _compositions(c, d)
    logp = gammaln(c + 1) - gammaln(ks + 1).sum(axis=1) + xlogy(ks, p).sum(axis=1)
    out[tuple(ks[:, :-1].T)] = np.exp(logp)
    return out


def _count_law(counts: np.ndarray, rows: np.ndarray, index: EmpiricalIndex) -> np.ndarray:
    """Law of the next count vector when ``counts[x]`` agents each draw from ``rows[x]``."""
    rows = np.clip(rows, 0.0, None)
    d = rows.shape[1]
    if d == 1:
        return np.ones(1)
    acc = None
    for c, p in zip(counts, rows):
        if c == 0:
            continue
        block = _multinomial_block(int(c), p)
        if acc is None:
            acc = block
        elif d == 2:
            acc = np.convolve(acc, block)
        else:
            acc = convolve(acc, block, method="direct")
    return acc[tuple(index.counts[:, :-1].T)]


def next_meanfield_distribution(model, n: int, m, t: int, policy,
                                index: EmpiricalIndex | None = None) -> np.ndarray:
    """Exact pmf of ``m_{t+1}`` given ``m_t = m`` and a common local policy.

    The result is indexed like :func:`~mfteam.simplex.enumerate_empirical`.
    """
    if index is None:
        index = EmpiricalIndex(n, model.num_states)
    m = np.asarray(m, dtype=float)
    counts = np.rint(m * n).astype(np.int64)
    if counts.sum() != n or np.any(np.abs(counts - m * n) > 1e-9):
        raise ValueError("m is not an empirical distribution of n agents")
    rows = kernel_rows(model, t, _actions(policy, model), m[None])[0]
    return _count_law(counts, rows, index)


def initial_meanfield_distribution(model, n: int, index: EmpiricalIndex | None = None) -> np.ndarray:
    """Law of ``m_1`` when ``n`` initial states are drawn i.i.d. from the initial distribution."""
    if index is None:
        index = EmpiricalIndex(n, model.num_states)
    return _count_law(np.array([n]), np.asarray(model.initial_dist)[None], index)


@dataclass
class MeanFieldChain:
    """Transition matrices and lifted costs of the mean-field chain over ``M_n``.

    ``transitions[t, g]`` is the ``(K, K)`` matrix under policy ``g``; ``costs[t, g]``
    holds the lifted cost at each of the ``K`` points.
    """

    n: int
    index: EmpiricalIndex
    policies: np.ndarray
    transitions: np.ndarray
    costs: np.ndarray
    initial: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.index.points


def build_chain(model: ModelSpec, n: int, cap: int = COMPUTE_CAP,
                enum_cap: int = DEFAULT_CAP) -> MeanFieldChain:
    K = num_empirical(n, model.num_states)
    if K > enum_cap:
        raise CapExceededError(f"|M_n| = {K} exceeds cap {enum_cap}")
    policies = policy_table(model.num_states, model.num_actions)
    G, T = len(policies), model.horizon
    _check(K * K * G * T, cap, "mean-field chain size")
    index = EmpiricalIndex(n, model.num_states, enum_cap)
    pts = index.points
    trans = np.empty((T, G, K, K))
    costs = np.empty((T, G, K))
    for t in range(T):
        for g, acts in enumerate(policies):
            rows = kernel_rows(model, t, acts, pts)
            for k in range(K):
                trans[t, g, k] = _count_law(index.counts[k], rows[k], index)
            costs[t, g] = lift_cost(model, t, pts, acts)
    return MeanFieldChain(n, index, policies, trans, costs,
                          initial_meanfield_distribution(model, n, index))


# --------------------------------------------------------------------------
# mean-field sharing


@dataclass
class SharingSolution:
    n: int
    points: np.ndarray
    values: np.ndarray          # (T + 1, K), last row zero
    policies: np.ndarray        # (T, K) policy indices
    initial_law: np.ndarray
    J_star: float

    @property
    def strategy(self) -> np.ndarray:
        return self.policies

    def to_dict(self, max_table: int = 10_000) -> dict:
        doc = {"n": self.n, "J_star": self.J_star}
        if self.values.size > max_table:
            doc["tables_elided"] = True
        else:
            doc["tables_elided"] = False
            doc["points"] = self.points.tolist()
            doc["values"] = self.values.tolist()
            doc["policies"] = self.policies.tolist()
        return doc


def solve_sharing(model: ModelSpec, n: int, cap: int = COMPUTE_CAP,
                  chain: MeanFieldChain | None = None) -> SharingSolution:
    """Backward induction over ``M_n``; ``J_star`` averages ``V_1`` over the law of ``m_1``."""
    if chain is None:
        chain = build_chain(model, n, cap)
    T, G, K = chain.costs.shape
    V = np.zeros((T + 1, K))
    pol = np.zeros((T, K), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        q = chain.costs[t] + chain.transitions[t] @ V[t + 1]      # (G, K)
        pol[t] = np.argmin(q, axis=0)
        V[t] = q[pol[t], np.arange(K)]
    J = float(chain.initial @ V[0])
    return SharingSolution(n, chain.points, V, pol, chain.initial, J)


def brute_force_sharing_value(model: ModelSpec, n: int, cap: int = 10**6,
                              chain: MeanFieldChain | None = None,
                              chunk: int = 8192) -> float:
    """Minimum expected cost over every table ``(t, m) -> gamma``, by exhaustive enumeration."""
    if chain is None:
        chain = build_chain(model, n)
    T, G, K = chain.costs.shape
    total = G ** (K * T)
    _check(total, cap, "number of sharing strategy tables")
    digits = G ** np.arange(K * T - 1, -1, -1, dtype=np.int64)
    best = np.inf
    ks = np.arange(K)
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        tables = ((ids[:, None] // digits) % G).reshape(-1, T, K)
        law = np.broadcast_to(chain.initial, (len(ids), K)).copy()
        cost = np.zeros(len(ids))
        for t in range(T):
            g = tables[:, t, :]                                   # (N, K)
            cost += np.einsum("nk,nk->n", law, chain.costs[t][g, ks])
            law = np.einsum("nk,nkj->nj", law, chain.transitions[t][g, ks])
        best = min(best, float(cost.min()))
    return best


def evaluate_strategy_exact(model: ModelSpec, n: int, strategy,
                            chain: MeanFieldChain | None = None, cap: int = COMPUTE_CAP) -> float:
    """Exact expected total cost of a homogeneous strategy with ``n`` agents.

    ``strategy`` is a length-``T`` sequence of policy indices (fully
    decentralized), a ``(T, K)`` table of policy indices over ``M_n``
    (mean-field sharing), or a solution object carrying one of those.
    """
    if chain is None:
        chain = build_chain(model, n, cap)
    T, G, K = chain.costs.shape
    s = np.asarray(getattr(strategy, "strategy", strategy), dtype=np.int64)
    if s.shape == (T,):
        s = np.repeat(s[:, None], K, axis=1)
    if s.shape != (T, K):
        raise ValueError(f"strategy must have shape ({T},) or ({T}, {K}), got {s.shape}")
    if s.min() < 0 or s.max() >= G:
        raise ValueError("policy index out of range")
    ks = np.arange(K)
    law = chain.initial
    total = 0.0
    for t in range(T):
        total += float(law @ chain.costs[t][s[t], ks])
        law = law @ chain.transitions[t][s[t], ks]
    return total


# --------------------------------------------------------------------------
# decentralized (lifted) problem


@dataclass
class DecentralizedSolution:
    mode: str                    # "tree" or "grid"
    value: float
    trajectory: np.ndarray       # (T + 1, X)
    policies: np.ndarray         # (T,) policy indices
    nu: int | None = None
    value_tables: np.ndarray | None = field(default=None, repr=False)   # (T + 1, N) grid mode
    policy_tables: np.ndarray | None = field(default=None, repr=False)

    @property
    def strategy(self) -> np.ndarray:
        return self.policies

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "nu": self.nu,
            "value": self.value,
            "trajectory": self.trajectory.tolist(),
            "policies": [int(g) for g in self.policies],
        }


def tree_values(model: ModelSpec, Z, stage: int = 0, cap: int = COMPUTE_CAP):
    """Exact lifted value ``V_stage(z)`` for each row of ``Z`` by exhaustive search.

    Returns ``(values, best_sequence_index)``; sequences are numbered
    lexicographically with the first stage most significant.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    policies = policy_table(model.num_states, model.num_actions)
    G = len(policies)
    S = model.horizon - stage
    _check(len(Z) * G**S, cap, "policy-sequence enumeration")
    states = Z[:, None, :]                        # (N, seqs, X)
    acc = np.zeros((len(Z), 1))
    for t in range(stage, model.horizon):
        N, L, X = states.shape
        flat = states.reshape(-1, X)
        flow, cost = lift_all(model, t, flat, policies)     # (G, N*L, X), (G, N*L)
        acc = (acc[:, :, None] + cost.T.reshape(N, L, G)).reshape(N, L * G)
        states = np.transpose(flow, (1, 0, 2)).reshape(N, L * G, X)
    best = np.argmin(acc, axis=1)
    return acc[np.arange(len(Z)), best], best


def solve_decentralized_tree(model: ModelSpec, cap: int = COMPUTE_CAP) -> DecentralizedSolution:
    """Minimize the lifted cost along ``z_{t+1} = flow(z_t, gamma_t)`` over all sequences."""
    G = model.num_actions ** model.num_states
    _check(G ** model.horizon, cap, "policy sequences")
    value, best = tree_values(model, model.initial_dist, 0, cap)
    seq = []
    rem = int(best[0])
    for _ in range(model.horizon):
        rem, g = divmod(rem, G)
        seq.append(g)
    seq = np.array(seq[::-1], dtype=np.int64)
    traj = [np.asarray(model.initial_dist, dtype=float)]
    for t, g in enumerate(seq):
        traj.append(lift_dynamics(model, t, traj[-1], int(g)))
    return DecentralizedSolution("tree", float(value[0]), np.array(traj), seq)


def solve_decentralized_grid(model: ModelSpec, nu: int, cap: int = COMPUTE_CAP,
                             enum_cap: int = DEFAULT_CAP) -> DecentralizedSolution:
    """Backward induction over ``Q_nu`` followed by a forward pass from ``quantize(z_1)``."""
    if nu < 1:
        raise ValueError("grid resolution must be >= 1")
    nx, T = model.num_states, model.horizon
    policies = policy_table(model.num_states, model.num_actions, POLICY_CAP)
    G = len(policies)
    N = (nu + 1) ** nx
    _check(N * G * T, cap, "grid dynamic program size")
    grid = enumerate_grid(nu, nx, enum_cap)
    V = np.zeros((T + 1, N))
    psi = np.zeros((T, N), dtype=np.int64)
    succ = np.zeros((T, G, N), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        flow, cost = lift_all(model, t, grid, policies)
        succ[t] = grid_flat_index(quantize_counts(flow, nu), nu)
        q = cost + V[t + 1][succ[t]]
        psi[t] = np.argmin(q, axis=0)
        V[t] = q[psi[t], np.arange(N)]
    i = int(grid_flat_index(quantize_counts(model.initial_dist, nu), nu))
    traj = [grid[i]]
    seq = []
    for t in range(T):
        g = int(psi[t, i])
        seq.append(g)
        i = int(succ[t, g, i])
        traj.append(grid[i])
    start = int(grid_flat_index(quantize_counts(model.initial_dist, nu), nu))
    return DecentralizedSolution("grid", float(V[0, start]), np.array(traj),
                                 np.array(seq, dtype=np.int64), nu, V, psi)


def grid_value_at(solution: DecentralizedSolution, stage: int, z) -> np.ndarray:
    """Look up the grid value table at ``quantize(z)``."""
    nu = solution.nu
    return solution.value_tables[stage][grid_flat_index(quantize_counts(z, nu), nu)]


# --------------------------------------------------------------------------
# optimality gap


@dataclass
class GapResult:
    n: int
    nu: int
    J_g: float
    J_star: float
    gap: float
    policies: np.ndarray


def optimality_gap(model: ModelSpec, n: int, nu: int | None = None,
                   cap: int = COMPUTE_CAP) -> GapResult:
    """Exact gap between the grid-DP decentralized strategy and the sharing optimum."""
    nu = n if nu is None else nu
    dec = solve_decentralized_grid(model, nu, cap)
    chain = build_chain(model, n, cap)
    J_g = evaluate_strategy_exact(model, n, dec.policies, chain)
    J_star = solve_sharing(model, n, chain=chain).J_star
    return GapResult(n, nu, J_g, J_star, J_g - J_star, dec.policies)


__all__ = [
    "DecentralizedSolution", "GapResult", "MeanFieldChain", "SharingSolution",
    "brute_force_sharing_value", "build_chain", "evaluate_strategy_exact", "grid_value_at",
    "initial_meanfield_distribution", "next_meanfield_distribution", "optimality_gap",
    "solve_decentralized_grid", "solve_decentralized_tree", "solve_sharing",
    "tree_values",
]
