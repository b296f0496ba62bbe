"""Ready-made models: random admissible instances and fixed benchmarks."""
from __future__ import annotations

import numpy as np

from .model import ModelSpec


def random_model(num_states: int = 2, num_actions: int = 2, horizon: int = 2,
                 seed: int = 0, coupling: float = 1.0, cost_coupling: float = 1.0) -> ModelSpec:
    """Draw an admissible affine model.

    Each kernel row at the simplex vertex ``e_k`` is the mixture
    ``(1 - s) * A0 + s * R_k`` of the base row and a random row ``R_k``, so
    ``B = s * (R_k - A0)`` has zero row sums and vertex nonnegativity holds by
    construction. Cost coefficients are drawn in ``[-c0, 1]``.
    """
    rng = np.random.default_rng(seed)
    T, X, U = horizon, num_states, num_actions
    A0 = rng.dirichlet(np.ones(X), size=(T, X, U))
    R = rng.dirichlet(np.ones(X), size=(T, X, U, X))
    s = coupling * rng.uniform(0, 1, size=(T, X, U, X, 1))
    B = s * (R - A0[:, :, :, None, :])
    c0 = rng.uniform(0, 1, size=(T, X, U))
    c1 = cost_coupling * rng.uniform(-c0[..., None], 1.0, size=(T, X, U, X))
    z1 = rng.dirichlet(np.ones(X))
    return ModelSpec(z1, A0, B, c0, c1)


def identity_model(num_states: int = 2, horizon: int = 2, initial_dist=None) -> ModelSpec:
    """Agents never move; cost 1 whenever the action differs from the state."""
    X = num_states
    T = horizon
    z1 = np.full(X, 1.0 / X) if initial_dist is None else initial_dist
    A0 = np.broadcast_to(np.eye(X)[:, None, :], (T, X, X, X)).copy()
    B = np.zeros((T, X, X, X, X))
    c0 = np.broadcast_to(1.0 - np.eye(X), (T, X, X)).copy()
    c1 = np.zeros((T, X, X, X))
    return ModelSpec(z1, A0, B, c0, c1)


def zero_cost(model: ModelSpec) -> ModelSpec:
    return ModelSpec(model.initial_dist, model.kernel_base, model.kernel_coeff,
                     np.zeros_like(model.cost_base), np.zeros_like(model.cost_coeff))


def benchmark_two_state(idle_cost: float = 1.2, crowding: float = 1.0, accuracy: float = 0.8,
                        horizon: int = 2) -> ModelSpec:
    """Two-state, two-action congestion benchmark with mean-field coupled cost.

    State 1 is a shared resource whose per-agent cost grows with its
    occupancy (``crowding * z[1]``); state 0 costs ``idle_cost``. Action ``u``
    sends an agent to state ``u`` with probability ``accuracy``. The lifted
    cost is ``idle_cost * (1 - w) + crowding * w**2`` with ``w = z[1]``.

    From ``z_1 = (1/2, 1/2)`` the policies "swap" and "stay" reach the same
    next occupancy, but their lifted values move in opposite directions as
    the mean-field is perturbed. A controller that sees ``m_1`` can pick the
    better one; a decentralized one cannot, which makes the optimality gap
    decay like ``1/sqrt(n)`` rather than faster.
    """
    T = horizon
    A0 = np.zeros((T, 2, 2, 2))
    A0[:, :, 0, :] = [accuracy, 1 - accuracy]
    A0[:, :, 1, :] = [1 - accuracy, accuracy]
    B = np.zeros((T, 2, 2, 2, 2))
    c0 = np.zeros((T, 2, 2))
    c0[:, 0, :] = idle_cost
    c1 = np.zeros((T, 2, 2, 2))
    c1[:, 1, :, 1] = crowding
    return ModelSpec([0.5, 0.5], A0, B, c0, c1)
