import itertools

import numpy as np
import pytest

from mfteam import dp
from mfteam.lift import lift_cost, lift_dynamics, policy_table
from mfteam.model import ModelSpec, cost_eval, kernel_eval, lipschitz_constants
from mfteam.simplex import CapExceededError, EmpiricalIndex, enumerate_empirical
from mfteam.zoo import benchmark_two_state, identity_model, random_model, zero_cost

from conftest import affine_model


def _joint_law(model, n, m, t, acts):
    """Law of the next mean-field by enumerating all |X|^n joint moves."""
    nx = model.num_states
    counts = np.rint(np.asarray(m) * n).astype(int)
    states = np.repeat(np.arange(nx), counts)
    rows = [kernel_eval(model, t, int(x), int(acts[x]), m) for x in states]
    index = EmpiricalIndex(n, nx)
    out = np.zeros(index.size)
    for ys in itertools.product(range(nx), repeat=n):
        p = np.prod([rows[i][y] for i, y in enumerate(ys)])
        out[index.index(np.bincount(ys, minlength=nx))] += p
    return out


def test_next_law_deterministic_kernel():
    m = identity_model(3, 1)
    law = dp.next_meanfield_distribution(m, 4, [0.5, 0.25, 0.25], 0, 0)
    pts = enumerate_empirical(4, 3)
    assert law.max() == 1.0
    assert np.array_equal(pts[np.argmax(law)], [0.5, 0.25, 0.25])


@pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 1.0])
def test_next_law_binomial(p):
    m = affine_model([1 - p, p], np.zeros((2, 2)))
    law = dp.next_meanfield_distribution(m, 2, [1.0, 0.0], 0, 0)
    # points in order (0,1), (1/2,1/2), (1,0)
    assert np.allclose(law, [p**2, 2 * p * (1 - p), (1 - p) ** 2], atol=1e-15)


@pytest.mark.parametrize("seed,nx,n", [(0, 2, 3), (1, 3, 3), (2, 3, 4), (3, 4, 3), (4, 2, 6)])
def test_next_law_matches_joint_enumeration(seed, nx, n):
    model = random_model(nx, 2, 1, seed=seed)
    rng = np.random.default_rng(seed)
    m = rng.multinomial(n, np.ones(nx) / nx) / n
    for g in range(2**nx):
        law = dp.next_meanfield_distribution(model, n, m, 0, g)
        assert np.allclose(law, _joint_law(model, n, m, 0, policy_table(nx, 2)[g]), atol=1e-14)


def test_next_law_monte_carlo():
    model = random_model(3, 2, 1, seed=5)
    n, m, g = 3, np.array([1, 1, 1]) / 3, 5
    acts = policy_table(3, 2)[g]
    law = dp.next_meanfield_distribution(model, n, m, 0, g)
    reps = 10**6
    rng = np.random.default_rng(123)
    rows = np.array([kernel_eval(model, 0, x, int(acts[x]), m) for x in range(3)])
    u = rng.random((reps, 3))
    nxt = (np.cumsum(rows, axis=1)[None, :, :-1] <= u[..., None]).sum(axis=-1)
    counts = np.stack([(nxt == y).sum(axis=1) for y in range(3)], axis=1)
    freq = np.bincount(EmpiricalIndex(n, 3).index(counts), minlength=len(law)) / reps
    sigma = np.sqrt(law * (1 - law) / reps)
    assert np.all(np.abs(freq - law) <= 4 * sigma + 1e-12)


def test_next_law_rejects_non_empirical():
    with pytest.raises(ValueError):
        dp.next_meanfield_distribution(identity_model(), 3, [0.5, 0.5], 0, 0)


def test_initial_law_multinomial():
    model = affine_model([0.5, 0.5], np.zeros((2, 2)), z1=np.array([0.25, 0.75]))
    law = dp.initial_meanfield_distribution(model, 2)
    assert np.allclose(law, [0.75**2, 2 * 0.25 * 0.75, 0.25**2])


@pytest.mark.parametrize("seed", range(4))
def test_sharing_single_stage(seed):
    model = random_model(2, 3, 1, seed=seed)
    sol = dp.solve_sharing(model, 5)
    for k, m in enumerate(sol.points):
        costs = [lift_cost(model, 0, m, g) for g in range(9)]
        assert sol.values[0, k] == pytest.approx(min(costs), abs=1e-14)
        assert sol.policies[0, k] == int(np.argmin(costs))
    assert dp.brute_force_sharing_value(model, 5) == pytest.approx(sol.J_star, abs=1e-12)


def test_sharing_zero_cost():
    model = zero_cost(random_model(2, 2, 3, seed=1))
    sol = dp.solve_sharing(model, 4)
    assert np.all(sol.values == 0) and sol.J_star == 0
    assert np.all(sol.policies == 0)          # ties go to the lowest index
    assert dp.brute_force_sharing_value(model, 2) == 0


@pytest.mark.parametrize("seed,n,T", [(0, 3, 2), (1, 3, 2), (2, 3, 2), (3, 2, 3), (4, 1, 3)])
def test_sharing_equals_brute_force(seed, n, T):
    model = random_model(2, 2, T, seed=seed)
    J = dp.solve_sharing(model, n).J_star
    assert abs(dp.brute_force_sharing_value(model, n) - J) <= 1e-12


def test_brute_force_cap():
    with pytest.raises(CapExceededError):
        dp.brute_force_sharing_value(random_model(2, 2, 2, seed=0), 6)


def test_chain_cap():
    with pytest.raises(CapExceededError):
        dp.build_chain(random_model(2, 2, 2, seed=0), 200, cap=10**5)


def _single_agent_open_loop(model, seq):
    p = np.asarray(model.initial_dist, float)
    total = 0.0
    tab = policy_table(model.num_states, model.num_actions)
    for t, g in enumerate(seq):
        nxt = np.zeros_like(p)
        for x in range(model.num_states):
            e = np.eye(model.num_states)[x]
            u = int(tab[g][x])
            total += p[x] * cost_eval(model, t, x, u, e)
            nxt += p[x] * kernel_eval(model, t, x, u, e)
        p = nxt
    return total


def _single_agent_closed_loop(model):
    nx, T = model.num_states, model.horizon
    V = np.zeros(nx)
    for t in range(T - 1, -1, -1):
        V = np.array([min(cost_eval(model, t, x, u, np.eye(nx)[x])
                          + kernel_eval(model, t, x, u, np.eye(nx)[x]) @ V
                          for u in range(model.num_actions)) for x in range(nx)])
    return float(model.initial_dist @ V)


@pytest.mark.parametrize("seed", range(4))
def test_evaluate_single_agent(seed):
    model = random_model(3, 2, 3, seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        seq = rng.integers(8, size=3)
        assert dp.evaluate_strategy_exact(model, 1, seq) == pytest.approx(
            _single_agent_open_loop(model, seq), abs=1e-13)
    assert dp.solve_sharing(model, 1).J_star == pytest.approx(
        _single_agent_closed_loop(model), abs=1e-13)


def test_evaluate_zero_cost():
    model = zero_cost(random_model(2, 2, 2, seed=3))
    assert dp.evaluate_strategy_exact(model, 5, [1, 2]) == 0


@pytest.mark.parametrize("seed,n", [(0, 4), (1, 7), (2, 10)])
def test_evaluate_sharing_table_gives_J_star(seed, n):
    model = random_model(2, 2, 3, seed=seed)
    sol = dp.solve_sharing(model, n)
    assert abs(dp.evaluate_strategy_exact(model, n, sol) - sol.J_star) <= 1e-12


def test_evaluate_shape_errors():
    model = random_model(2, 2, 2, seed=0)
    with pytest.raises(ValueError):
        dp.evaluate_strategy_exact(model, 3, [0, 1, 2])
    with pytest.raises(ValueError):
        dp.evaluate_strategy_exact(model, 3, [0, 9])


def _sequence_oracle(model):
    G = model.num_actions ** model.num_states
    best = None
    for seq in itertools.product(range(G), repeat=model.horizon):
        z = np.asarray(model.initial_dist, float)
        total = 0.0
        for t, g in enumerate(seq):
            total += lift_cost(model, t, z, g)
            z = lift_dynamics(model, t, z, g)
        if best is None or total < best[0] - 1e-15:
            best = (total, seq)
    return best


@pytest.mark.parametrize("seed,nx,T", [(0, 2, 1), (1, 2, 2), (2, 2, 3), (3, 3, 2)])
def test_tree_matches_sequence_oracle(seed, nx, T):
    model = random_model(nx, 2, T, seed=seed)
    value, seq = _sequence_oracle(model)
    sol = dp.solve_decentralized_tree(model)
    assert sol.value == pytest.approx(value, abs=1e-14)
    assert tuple(sol.policies) == seq
    assert np.allclose(sol.trajectory[0], model.initial_dist)


def test_tree_single_stage():
    model = random_model(2, 3, 1, seed=8)
    sol = dp.solve_decentralized_tree(model)
    assert sol.value == pytest.approx(min(lift_cost(model, 0, model.initial_dist, g)
                                          for g in range(9)), abs=1e-15)


def test_identity_model_decentralized():
    model = identity_model(2, 3, initial_dist=np.array([0.3, 0.7]))
    tree = dp.solve_decentralized_tree(model)
    assert tree.value == 0 and list(tree.policies) == [1, 1, 1]   # policy (0, 1)
    grid = dp.solve_decentralized_grid(model, 10)
    assert grid.value == 0 and list(grid.policies) == [1, 1, 1]
    assert np.allclose(grid.trajectory, [[0.3, 0.7]] * 4)


@pytest.mark.parametrize("nu", [1, 5, 32])
def test_grid_zero_cost(nu):
    sol = dp.solve_decentralized_grid(zero_cost(random_model(3, 2, 2, seed=1)), nu)
    assert sol.value == 0


def test_grid_rejects_zero_resolution():
    with pytest.raises(ValueError):
        dp.solve_decentralized_grid(identity_model(), 0)


def test_grid_value_lookup():
    model = random_model(2, 2, 2, seed=2)
    sol = dp.solve_decentralized_grid(model, 16)
    assert dp.grid_value_at(sol, 0, model.initial_dist) == sol.value


def test_grid_error_ensemble():
    """Across random models: errors stay under the certificate and shrink on average."""
    errs, bounds = [], []
    for seed in range(30):
        model = random_model(2, 2, 2, seed=seed)
        tree = dp.solve_decentralized_tree(model).value
        K = lipschitz_constants(model).value.sum()
        errs.append([abs(dp.solve_decentralized_grid(model, nu).value - tree)
                     for nu in (8, 16, 32, 64)])
        bounds.append([K / (2 * nu) for nu in (8, 16, 32, 64)])
    errs, bounds = np.array(errs), np.array(bounds)
    assert np.all(errs <= bounds)
    mean = errs.mean(axis=0)
    assert np.all(np.diff(mean) < 0)
    assert mean[-1] <= mean[0] / 4


@pytest.mark.parametrize("seed", range(5))
def test_tree_value_bounds_on_simplex(seed):
    model = random_model(3, 2, 3, seed=seed)
    L = lipschitz_constants(model)
    upper = np.cumsum(L.max_vertex_cost[::-1])[::-1]
    Z = np.random.default_rng(seed).dirichlet(np.ones(3), 300)
    for t in range(3):
        v, _ = dp.tree_values(model, Z, t)
        assert np.all(v >= -1e-12) and np.all(v <= upper[t] + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_grid_value_bounds_on_box(seed):
    model = random_model(2, 2, 3, seed=seed)
    L = lipschitz_constants(model)
    box = np.cumsum((model.num_states * L.cost_bound)[::-1])[::-1]
    sol = dp.solve_decentralized_grid(model, 12)
    for t in range(3):
        assert np.abs(sol.value_tables[t]).max() <= box[t] + 1e-12
    assert np.all(sol.value_tables[3] == 0)


def test_grid_values_can_leave_vertex_bounds_off_simplex():
    # off-simplex grid points have total mass up to |X|, so the simplex bounds do not carry over
    model = random_model(2, 2, 2, seed=2)
    L = lipschitz_constants(model)
    V = dp.solve_decentralized_grid(model, 16).value_tables
    upper = np.cumsum(L.max_vertex_cost[::-1])[::-1]
    assert V[:2].min() < 0 or np.any(V[:2].max(axis=1) > upper)


@pytest.mark.parametrize("seed", range(6))
def test_gap_nonnegative(seed):
    model = random_model(2, 2, 2, seed=seed)
    for n in (1, 2, 5, 9):
        res = dp.optimality_gap(model, n, nu=8)
        assert res.gap >= -1e-10
        assert res.gap == res.J_g - res.J_star


def test_gap_identity_zero():
    res = dp.optimality_gap(identity_model(2, 2), 6)
    assert res.gap == 0 and res.J_g == 0 and res.J_star == 0


def test_gap_single_agent_open_vs_closed_loop():
    model = random_model(2, 2, 2, seed=3)
    res = dp.optimality_gap(model, 1, nu=256)
    assert res.J_star == pytest.approx(_single_agent_closed_loop(model), abs=1e-13)
    assert res.J_g == pytest.approx(_single_agent_open_loop(model, res.policies), abs=1e-13)
    assert res.gap >= -1e-10


def test_benchmark_gap_scaling():
    model = benchmark_two_state()
    scaled = [dp.optimality_gap(model, n).gap * np.sqrt(n) for n in (4, 16, 64)]
    assert min(scaled) > 0
    assert max(scaled) <= 1.25 * scaled[0]


def test_solution_documents():
    model = random_model(2, 2, 2, seed=0)
    doc = dp.solve_decentralized_grid(model, 8).to_dict()
    assert set(doc) == {"mode", "nu", "value", "trajectory", "policies"}
    assert doc["mode"] == "grid" and doc["nu"] == 8 and len(doc["trajectory"]) == 3
    sol = dp.solve_sharing(model, 4)
    full = sol.to_dict()
    assert full["tables_elided"] is False and len(full["values"]) == 3
    short = sol.to_dict(max_table=5)
    assert short == {"n": 4, "J_star": sol.J_star, "tables_elided": True}
