"""Monte Carlo simulation of ``n`` interacting agents.

All randomness comes from :mod:`mfteam.rng`, keyed by
``(seed, stream, rep, stage, agent)``, so runs are reproducible and do not
depend on how replications are distributed over worker threads.
"""
from __future__ import annotations

import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom

from . import rng
from .lift import _actions, lift_dynamics, policy_table
from .model import FunctionalModel, ModelSpec
from .simplex import EmpiricalIndex


@dataclass
class Estimate:
    """Monte Carlo sample mean with its standard error."""

    mean: np.ndarray | float
    stderr: np.ndarray | float
    reps: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        reps = len(samples)
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(mean)
        if np.ndim(mean) == 0:
            return cls(float(mean), float(se), reps)
        return cls(mean, se, reps)


@dataclass
class SimRun:
    seed: int
    n: int
    rep: int
    states: np.ndarray        # (T + 1, n)
    mean_fields: np.ndarray   # (T + 1, X)
    actions: np.ndarray       # (T, n)
    stage_costs: np.ndarray   # (T,)

    @property
    def total_cost(self) -> float:
        return float(self.stage_costs.sum())


class SimBatch(Sequence):
    """Replications stored as stacked arrays; indexing yields :class:`SimRun`."""

    def __init__(self, seed, n, states, mean_fields, actions, stage_costs):
        self.seed, self.n = seed, n
        self.states = states
        self.mean_fields = mean_fields
        self.actions = actions
        self.stage_costs = stage_costs

    def __len__(self):
        return len(self.stage_costs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return SimRun(self.seed, self.n, i, self.states[i], self.mean_fields[i],
                      self.actions[i], self.stage_costs[i])

    @property
    def totals(self) -> np.ndarray:
        return self.stage_costs.sum(axis=1)

    def cost_estimate(self) -> Estimate:
        return Estimate.from_samples(self.totals)

    def write_jsonl(self, path) -> None:
        """One JSON record per (rep, stage) with the mean-field and stage cost."""
        with Path(path).open("w") as fh:
            for r in range(len(self)):
                for t, c in enumerate(self.stage_costs[r]):
                    fh.write(json.dumps({
                        "rep": r, "stage": t,
                        "mean_field": self.mean_fields[r, t].tolist(),
                        "stage_cost": float(c),
                    }) + "\n")


def _blocks(reps: int, block: int):
    return [np.arange(s, min(s + block, reps), dtype=np.int64) for s in range(0, reps, block)]


def _run_blocks(fn, reps: int, block: int, workers: int):
    blocks = _blocks(reps, block)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    return parts


def _counts(states: np.ndarray, nx: int) -> np.ndarray:
    """Per-row state counts of an ``(R, n)`` array."""
    return (states[..., None] == np.arange(nx)).sum(axis=-2)


def _step(model, t, states, acts, m, u_trans, seed, reps, agents):
    """Next states and per-agent costs for a block of replications."""
    if isinstance(model, ModelSpec):
        base = model.kernel_base[t][states, acts]                      # (R, n, Y)
        coeff = model.kernel_coeff[t][states, acts]                    # (R, n, X', Y)
        rows = base + np.einsum("rnky,rk->rny", coeff, m)
        cost = model.cost_base[t][states, acts] + np.einsum(
            "rnk,rk->rn", model.cost_coeff[t][states, acts], m)
        return rng.inverse_cdf(u_trans, rows), cost
    # functional model: push sampled noise through the dynamics
    w = rng.inverse_cdf(rng.uniforms(seed, rng.NOISE, reps[:, None], t, agents[None]),
                        model.noise_pmf)
    nxt = np.empty_like(states)
    cost = np.empty(states.shape)
    for r in range(states.shape[0]):
        for i in range(states.shape[1]):
            x, a = int(states[r, i]), int(acts[r, i])
            nxt[r, i] = model.dynamics(t, x, a, int(w[r, i]), m[r])
            cost[r, i] = model.cost(t, x, a, m[r])
    return nxt, cost


def _strategy_array(model, n, strategy):
    s = np.asarray(getattr(strategy, "strategy", strategy), dtype=np.int64)
    T = model.horizon
    if s.ndim == 1 and s.shape == (T,):
        return s, None
    if s.ndim == 2 and s.shape[0] == T:
        index = EmpiricalIndex(n, model.num_states)
        if s.shape[1] != index.size:
            raise ValueError(f"feedback table needs {index.size} columns, got {s.shape[1]}")
        return s, index
    raise ValueError(f"strategy shape {s.shape} is neither ({T},) nor ({T}, |M_n|)")


def simulate_population(model, n: int, strategy, seed: int, reps: int,
                        workers: int = 1, block: int = 512) -> SimBatch:
    """Simulate ``reps`` independent replications of ``n`` agents.

    ``strategy`` is a length-``T`` sequence of policy indices applied by
    every agent, or a ``(T, |M_n|)`` table of policy indices indexed by the
    current mean-field.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    s, index = _strategy_array(model, n, strategy)
    G = policy_table(model.num_states, model.num_actions)
    if s.min() < 0 or s.max() >= len(G):
        raise ValueError("policy index out of range")
    nx, T = model.num_states, model.horizon
    agents = np.arange(n, dtype=np.int64)
    z1 = np.asarray(model.initial_dist)

    def run(rep_ids):
        R = len(rep_ids)
        r_col = rep_ids[:, None]
        states = np.empty((R, T + 1, n), dtype=np.int64)
        means = np.empty((R, T + 1, nx))
        actions = np.empty((R, T, n), dtype=np.int64)
        costs = np.empty((R, T))
        states[:, 0] = rng.inverse_cdf(rng.uniforms(seed, rng.INITIAL, r_col, 0, agents[None]), z1)
        for t in range(T + 1):
            counts = _counts(states[:, t], nx)
            means[:, t] = counts / n
            if t == T:
                break
            g = s[t] if index is None else s[t][index.index(counts)]
            acts = np.broadcast_to(G[g], (R, nx)) if index is None else G[g]
            actions[:, t] = np.take_along_axis(acts, states[:, t], axis=1)
            u = rng.uniforms(seed, rng.TRANSITION, r_col, t, agents[None])
            states[:, t + 1], per_agent = _step(model, t, states[:, t], actions[:, t],
                                                means[:, t], u, seed, rep_ids, agents)
            costs[:, t] = per_agent.mean(axis=1)
        return states, means, actions, costs

    parts = _run_blocks(run, reps, block, workers)
    return SimBatch(seed, n, *(np.concatenate([p[k] for p in parts]) for k in range(4)))


def one_step_samples(model, n: int, m, t: int, policy, seed: int, reps: int,
                     workers: int = 1, block: int = 1024) -> np.ndarray:
    """Realized next mean-fields, one row per replication, starting from ``m``."""
    m = np.asarray(m, dtype=float)
    counts = np.rint(m * n).astype(np.int64)
    if counts.sum() != n:
        raise ValueError("m is not an empirical distribution of n agents")
    start = np.repeat(np.arange(model.num_states), counts)
    acts = _actions(policy, model)[start]
    agents = np.arange(n, dtype=np.int64)
    nx = model.num_states

    def run(rep_ids):
        R = len(rep_ids)
        st = np.broadcast_to(start, (R, n))
        ac = np.broadcast_to(acts, (R, n))
        mm = np.broadcast_to(m, (R, nx))
        u = rng.uniforms(seed, rng.TRANSITION, rep_ids[:, None], t, agents[None])
        nxt, _ = _step(model, t, st, ac, mm, u, seed, rep_ids, agents)
        return _counts(nxt, nx) / n

    return np.concatenate(_run_blocks(run, reps, block, workers))


def one_step_deviation(model, n: int, m, t: int, policy, seed: int, reps: int,
                       workers: int = 1) -> Estimate:
    """Estimate ``E || m_{t+1} - flow(m, gamma) ||_inf`` under agent-wise transitions."""
    target = lift_dynamics(model, t, m, policy)
    samples = one_step_samples(model, n, m, t, policy, seed, reps, workers)
    return Estimate.from_samples(np.abs(samples - target).max(axis=1))


def noise_empirical_samples(fm: FunctionalModel, n: int, t: int, seed: int, reps: int) -> np.ndarray:
    """Empirical pmf of ``n`` i.i.d. noise draws, one row per replication."""
    agents = np.arange(n, dtype=np.int64)
    reps_ids = np.arange(reps, dtype=np.int64)[:, None]
    w = rng.inverse_cdf(rng.uniforms(seed, rng.NOISE, reps_ids, t, agents[None]), fm.noise_pmf)
    return _counts(w, fm.num_noise) / n


def iid_deviation(p, n: int, seed: int, reps: int, workers: int = 1,
                  block_elems: int = 2**21) -> Estimate:
    """Estimate ``E | (1/n) sum_i 1(W_i = w) - p(w) |`` for every symbol ``w``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("p must be a pmf")
    agents = np.arange(n, dtype=np.int64)
    k = len(p)

    def run(rep_ids):
        u = rng.uniforms(seed, rng.IID, rep_ids[:, None], agents[None])
        w = rng.inverse_cdf(u, p)
        freq = np.stack([(w == j).sum(axis=1) for j in range(k)], axis=1) / n
        return np.abs(freq - p)

    block = max(1, block_elems // n)
    return Estimate.from_samples(np.concatenate(_run_blocks(run, reps, block, workers)))


def exact_binomial_deviation(p: float, n: int) -> float:
    """``sum_k C(n, k) p^k (1 - p)^(n - k) |k/n - p|`` by direct summation."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if n > 1000:
        raise ValueError("exact summation supports n <= 1000")
    k = np.arange(n + 1)
    return float(np.sum(binom.pmf(k, n, p) * np.abs(k / n - p)))
