"""Local policies and the lifted (infinite-population) mean-field maps.

A local policy ``gamma`` maps each state to an action and is applied by every
agent at a stage. Policies are numbered base-``|U|`` with state 0 as the most
significant digit; this order is the tie-breaking order used by every argmin
in the package.

The lifted flow and lifted cost are::

    flow(z, gamma)(y) = sum_x z[x] * P_t(y | x, gamma[x], z)
    lifted_cost(z, gamma) = sum_x z[x] * l_t(x, gamma[x], z)

Both accept a single point or a batch of points (one per row) and are defined
on the whole unit box, not only on the simplex.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import FunctionalModel, ModelSpec
from .simplex import CapExceededError

POLICY_CAP = 10**6


@dataclass(frozen=True)
class LocalPolicy:
    action_of: tuple
    index: int

    @classmethod
    def from_index(cls, index: int, num_states: int, num_actions: int) -> "LocalPolicy":
        if not 0 <= index < num_actions**num_states:
            raise ValueError(f"policy index {index} out of range")
        digits = []
        rem = index
        for _ in range(num_states):
            rem, d = divmod(rem, num_actions)
            digits.append(d)
        return cls(tuple(reversed(digits)), index)

    @classmethod
    def from_actions(cls, actions, num_actions: int) -> "LocalPolicy":
        actions = tuple(int(a) for a in actions)
        if any(not 0 <= a < num_actions for a in actions):
            raise ValueError("action out of range")
        index = 0
        for a in actions:
            index = index * num_actions + a
        return cls(actions, index)

    def __call__(self, x: int) -> int:
        return self.action_of[x]


def num_policies(num_states: int, num_actions: int) -> int:
    return num_actions**num_states


def enumerate_policies(num_states: int, num_actions: int, cap: int = POLICY_CAP) -> list[LocalPolicy]:
    if num_states < 1 or num_actions < 1:
        raise ValueError("need at least one state and one action")
    size = num_policies(num_states, num_actions)
    if size > cap:
        raise CapExceededError(f"{size} local policies exceed cap {cap}")
    return [
        LocalPolicy(acts, i)
        for i, acts in enumerate(itertools.product(range(num_actions), repeat=num_states))
    ]


def policy_table(num_states: int, num_actions: int, cap: int = POLICY_CAP) -> np.ndarray:
    """``(|G|, |X|)`` array; row ``g`` holds the actions of policy index ``g``."""
    return np.array([p.action_of for p in enumerate_policies(num_states, num_actions, cap)],
                    dtype=np.int64).reshape(-1, num_states)


def _actions(policy, model) -> np.ndarray:
    if isinstance(policy, LocalPolicy):
        return np.asarray(policy.action_of, dtype=np.int64)
    policy = np.asarray(policy)
    if policy.ndim == 0:
        return np.asarray(LocalPolicy.from_index(int(policy), model.num_states,
                                                 model.num_actions).action_of)
    return policy.astype(np.int64)


def kernel_rows(model, t: int, actions: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Rows ``P_t(. | x, actions[x], z)`` for a batch ``Z`` of shape ``(N, X)``.

    Returns an ``(N, X, X)`` array indexed ``[point, x, y]``.
    """
    nx = model.num_states
    if isinstance(model, ModelSpec):
        xs = np.arange(nx)
        base = model.kernel_base[t, xs, actions]           # (x, y)
        coeff = model.kernel_coeff[t, xs, actions]         # (x, x', y)
        return base[None] + np.einsum("nk,xky->nxy", Z, coeff)
    return np.stack([
        np.stack([model.kernel(t, x, int(actions[x]), z) for x in range(nx)]) for z in Z
    ])


def cost_rows(model, t: int, actions: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Costs ``l_t(x, actions[x], z)`` as an ``(N, X)`` array."""
    nx = model.num_states
    if isinstance(model, ModelSpec):
        xs = np.arange(nx)
        base = model.cost_base[t, xs, actions]             # (x,)
        coeff = model.cost_coeff[t, xs, actions]           # (x, x')
        return base[None] + Z @ coeff.T
    return np.array([[model.cost(t, x, int(actions[x]), z) for x in range(nx)] for z in Z])


def lift_dynamics(model, t: int, z, policy) -> np.ndarray:
    """Lifted flow ``sum_x z[x] P_t(. | x, gamma(x), z)``; mass of ``z`` is preserved."""
    z = np.asarray(z, dtype=float)
    Z = np.atleast_2d(z)
    P = kernel_rows(model, t, _actions(policy, model), Z)
    out = np.einsum("nx,nxy->ny", Z, P)
    return out if z.ndim == 2 else out[0]


def lift_cost(model, t: int, z, policy):
    """Lifted cost ``sum_x z[x] l_t(x, gamma(x), z)``."""
    z = np.asarray(z, dtype=float)
    Z = np.atleast_2d(z)
    out = np.einsum("nx,nx->n", Z, cost_rows(model, t, _actions(policy, model), Z))
    return out if z.ndim == 2 else float(out[0])


def lift_all(model: ModelSpec, t: int, Z: np.ndarray, policies: np.ndarray):
    """Lifted flow and cost for every policy at every point.

    Returns ``flow`` of shape ``(G, N, X)`` and ``cost`` of shape ``(G, N)``.
    """
    G = len(policies)
    flow = np.empty((G, len(Z), model.num_states))
    cost = np.empty((G, len(Z)))
    for g, acts in enumerate(policies):
        flow[g] = lift_dynamics(model, t, Z, acts)
        cost[g] = lift_cost(model, t, Z, acts)
    return flow, cost


def factorized_update(fm: FunctionalModel, t: int, m, policy, noise_emp) -> np.ndarray:
    """One-step mean-field update written through the empirical noise distribution.

    ``out[y] = sum_x sum_w 1(f_t(x, gamma(x), w, m) = y) * m[x] * noise_emp[w]``.
    Substituting the true noise pmf for ``noise_emp`` gives the lifted flow.
    """
    m = np.asarray(m, dtype=float)
    noise_emp = np.asarray(noise_emp, dtype=float)
    if (noise_emp.shape != (fm.num_noise,) or np.any(noise_emp < 0)
            or abs(noise_emp.sum() - 1) > 1e-12):
        raise ValueError("noise_emp must be a pmf over the noise alphabet")
    acts = _actions(policy, fm)
    out = np.zeros(fm.num_states)
    for x in range(fm.num_states):
        if m[x] == 0:
            continue
        for w, pw in enumerate(noise_emp):
            out[fm.dynamics(t, x, int(acts[x]), w, m)] += m[x] * pw
    return out
