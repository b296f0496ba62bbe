"""Acceptance checks with pinned tolerances.

Each ``criterion_*`` function returns a :class:`CriterionResult`;
:func:`run_all` runs them in order. ``python -m mfteam check`` and
``tests/test_acceptance.py`` are thin wrappers around this module.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dp, sim
from .convergence import ConvergenceTable, fit_rate, run_convergence
from .lift import lift_cost, lift_dynamics, policy_table
from .model import ModelSpec, lipschitz_constants, save_model
from .simplex import EmpiricalIndex
from .zoo import benchmark_two_state, random_model

# fixed instance for criteria 1, 2 and 5
FIXTURE_SEED = 2
EQUIVALENCE_TOL = 1e-12
GRID_RESOLUTIONS = (8, 16, 32, 64)
RATE_AGENTS = (4, 8, 16, 32, 64, 128, 256)
RATE_SLACK = 1.25
RATE_SLOPE_MAX = -0.4
GAP_FLOOR = -1e-10
IID_REPS = 10**6
IID_LADDER = (4, 16, 64, 256, 1024)
IID_LADDER_REPS = 20_000
SE_MULTIPLE = 4.0
DEVIATION_AGENTS = (16, 64, 256)
DEVIATION_REPS = 10**4
DEVIATION_RATIO = (1.5, 2.5)
MOMENT_TOL = 1e-10
MOMENT_INSTANCES = 100
LIPSCHITZ_PAIRS = 10**4
LIPSCHITZ_SLACK = 1e-12


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f"/{self.budget:.0f}s" if self.budget else ""
        return f"[{status}] criterion {self.number}: {self.name} ({self.seconds:.1f}s{budget}) {self.detail}"


def fixture_model() -> ModelSpec:
    return random_model(2, 2, 2, seed=FIXTURE_SEED)


def _timed(number, name, budget, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    dt = time.perf_counter() - t0
    if budget is not None and dt > budget:
        passed = False
        detail += f"; runtime {dt:.1f}s over budget"
    return CriterionResult(number, name, bool(passed), detail, dt, budget)


def criterion_1(model: ModelSpec | None = None) -> CriterionResult:
    model = fixture_model() if model is None else model

    def run():
        chain = dp.build_chain(model, 3)
        dp_value = dp.solve_sharing(model, 3, chain=chain).J_star
        brute = dp.brute_force_sharing_value(model, 3, chain=chain)
        diff = abs(dp_value - brute)
        return diff <= EQUIVALENCE_TOL, f"DP={dp_value:.15f} brute={brute:.15f} |diff|={diff:.1e}"

    return _timed(1, "sharing DP equals exhaustive search", 60, run)


def grid_errors(model: ModelSpec, resolutions=GRID_RESOLUTIONS):
    tree = dp.solve_decentralized_tree(model)
    errs = [abs(dp.solve_decentralized_grid(model, nu).value - tree.value) for nu in resolutions]
    K = lipschitz_constants(model).value
    bounds = [K.sum() / (2 * nu) for nu in resolutions]
    return np.array(errs), np.array(bounds)


def criterion_2(model: ModelSpec | None = None) -> CriterionResult:
    model = fixture_model() if model is None else model

    def run():
        errs, bounds = grid_errors(model)
        mono = bool(np.all(np.diff(errs) <= 0))
        rate = bool(errs[-1] <= errs[0] / 4)
        within = bool(np.all(errs <= bounds))
        detail = ("|delta|=" + ",".join(f"{e:.2e}" for e in errs)
                  + f" non-increasing={mono} rate={rate} bounded={within}")
        return mono and rate and within, detail

    return _timed(2, "quantized DP converges to tree DP", 30, run)


def gap_ladder(model: ModelSpec, agents=RATE_AGENTS) -> ConvergenceTable:
    return run_convergence(model, agents, nu=None, exact_cap=10**6)


def criterion_3(model: ModelSpec | None = None) -> CriterionResult:
    model = benchmark_two_state() if model is None else model

    def run():
        table = gap_ladder(model)
        gaps = np.array([r.gap for r in table.rows])
        scaled = np.array([r.gap_sqrt_n for r in table.rows])
        a = bool(np.all(gaps >= GAP_FLOOR))
        first = gaps[0] * 2.0
        b = bool(scaled.max() <= RATE_SLACK * first)
        fit = fit_rate(table)
        c = fit.vacuous or fit.slope <= RATE_SLOPE_MAX
        detail = (f"gap*sqrt(n)=" + ",".join(f"{s:.4f}" for s in scaled)
                  + f" (a)={a} (b)={b} (c)={c} [{fit}]")
        return a and b and c, detail

    return _timed(3, "decentralized gap decays as 1/sqrt(n)", 300, run)


def criterion_4() -> CriterionResult:
    def run():
        exact = sim.exact_binomial_deviation(0.5, 4)
        est = sim.iid_deviation([0.5, 0.5], 4, seed=41, reps=IID_REPS)
        z = abs(est.mean[0] - exact) / est.stderr[0]
        ok_exact = z <= SE_MULTIPLE and exact == 0.1875
        scaled = []
        for i, n in enumerate(IID_LADDER):
            e = sim.iid_deviation([0.5, 0.5], n, seed=42 + i, reps=IID_LADDER_REPS)
            scaled.append(math.sqrt(n) * e.mean[0])
        ok_ladder = all(b <= RATE_SLACK * a for a, b in zip(scaled, scaled[1:]))
        detail = (f"n=4 estimate {est.mean[0]:.5f} vs {exact} ({z:.2f} SE); sqrt(n)*dev="
                  + ",".join(f"{s:.4f}" for s in scaled))
        return ok_exact and ok_ladder, detail

    return _timed(4, "i.i.d. empirical deviation is O(1/sqrt(n))", 60, run)


def criterion_5(model: ModelSpec | None = None) -> CriterionResult:
    model = fixture_model() if model is None else model

    def run():
        m, policy = np.array([0.5, 0.5]), 1
        ratios = []
        for i, n in enumerate(DEVIATION_AGENTS):
            a = sim.one_step_deviation(model, n, m, 0, policy, seed=50 + i, reps=DEVIATION_REPS)
            b = sim.one_step_deviation(model, 4 * n, m, 0, policy, seed=60 + i, reps=DEVIATION_REPS)
            ratios.append(a.mean / b.mean)
        lo, hi = DEVIATION_RATIO
        ok = all(lo <= r <= hi for r in ratios)
        return ok, "ratios " + ",".join(f"{r:.3f}" for r in ratios)

    return _timed(5, "one-step mean-field deviation halves when n quadruples", 60, run)


def criterion_6() -> CriterionResult:
    def run():
        rng = np.random.default_rng(6)
        worst = 0.0
        for i in range(MOMENT_INSTANCES):
            nx, nu_ = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            T = int(rng.integers(1, 4))
            model = random_model(nx, nu_, T, seed=1000 + i)
            n = int(rng.integers(1, 9))
            counts = rng.multinomial(n, np.ones(nx) / nx)
            m = counts / n
            t = int(rng.integers(T))
            g = int(rng.integers(nu_**nx))
            index = EmpiricalIndex(n, nx)
            pmf = dp.next_meanfield_distribution(model, n, m, t, g, index)
            mean = pmf @ index.points
            worst = max(worst, float(np.abs(mean - lift_dynamics(model, t, m, g)).max()),
                        abs(pmf.sum() - 1))
        return worst <= MOMENT_TOL, f"max deviation {worst:.2e} over {MOMENT_INSTANCES} instances"

    return _timed(6, "first moment of next mean-field equals lifted flow", 10, run)


def _box_pairs(rng, n, dim):
    return rng.uniform(0, 1, (n, dim)), rng.uniform(0, 1, (n, dim))


def _simplex_pairs(rng, n, dim):
    return rng.dirichlet(np.ones(dim), n), rng.dirichlet(np.ones(dim), n)


def lipschitz_violations(model: ModelSpec, pairs: int = LIPSCHITZ_PAIRS, seed: int = 7,
                         lemma6_agents=(4, 8, 16, 32)) -> dict:
    """Count violations of each Lipschitz certificate over random pairs."""
    rng = np.random.default_rng(seed)
    L = lipschitz_constants(model)
    X, U, T = model.num_states, model.num_actions, model.horizon
    G = policy_table(X, U)
    out = {}

    # primitive kernel and cost on the unit box
    z1, z2 = _box_pairs(rng, pairs, X)
    d = np.abs(z1 - z2).max(axis=1)
    t = rng.integers(T, size=pairs)
    x = rng.integers(X, size=pairs)
    u = rng.integers(U, size=pairs)
    B, c1 = model.kernel_coeff[t, x, u], model.cost_coeff[t, x, u]
    dP = np.abs(np.einsum("nk,nky->ny", z1 - z2, B)).max(axis=1)
    dl = np.abs(np.einsum("nk,nk->n", z1 - z2, c1))
    out["kernel"] = int(np.sum(dP > L.kernel[t] * d + LIPSCHITZ_SLACK))
    out["cost"] = int(np.sum(dl > L.cost[t] * d + LIPSCHITZ_SLACK))

    # lifted flow and cost on the unit box, all policies
    viol_f = viol_c = 0
    for s in range(T):
        z1, z2 = _box_pairs(rng, pairs, X)
        d = np.abs(z1 - z2).max(axis=1)
        for acts in G:
            df = np.abs(lift_dynamics(model, s, z1, acts) - lift_dynamics(model, s, z2, acts)).max(axis=1)
            dc = np.abs(lift_cost(model, s, z1, acts) - lift_cost(model, s, z2, acts))
            viol_f += int(np.sum(df > L.flow[s] * d + LIPSCHITZ_SLACK))
            viol_c += int(np.sum(dc > L.lifted_cost[s] * d + LIPSCHITZ_SLACK))
    out["flow"] = viol_f
    out["lifted_cost"] = viol_c

    # lifted value on the simplex
    viol_v = 0
    for s in range(T):
        z1, z2 = _simplex_pairs(rng, pairs, X)
        v1, _ = dp.tree_values(model, z1, s)
        v2, _ = dp.tree_values(model, z2, s)
        d = np.abs(z1 - z2).max(axis=1)
        viol_v += int(np.sum(np.abs(v1 - v2) > L.value[s] * d + LIPSCHITZ_SLACK))
    out["value"] = viol_v

    # sharing value vs lifted value: slack C/sqrt(n) fitted at the smallest n
    C = None
    viol_6 = 0
    per_n = max(1, pairs // len(lemma6_agents))
    for n in lemma6_agents:
        sol = dp.solve_sharing(model, n)
        K = len(sol.points)
        s = rng.integers(T, size=per_n)
        k = rng.integers(K, size=per_n)
        z = rng.dirichlet(np.ones(X), per_n)
        vhat = np.empty(per_n)
        for st in range(T):
            sel = s == st
            if sel.any():
                vhat[sel] = dp.tree_values(model, z[sel], st)[0]
        vm = sol.values[s, k]
        d = np.abs(sol.points[k] - z).max(axis=1)
        excess = np.abs(vm - vhat) - L.value_gap[s] * d
        if C is None:
            C = max(0.0, float(excess.max())) * math.sqrt(n)
        viol_6 += int(np.sum(excess > C / math.sqrt(n) + LIPSCHITZ_SLACK))
    out["value_gap"] = viol_6
    return out


def criterion_7(models=None) -> CriterionResult:
    if models is None:
        models = [fixture_model(), benchmark_two_state(), random_model(3, 2, 2, seed=11)]

    def run():
        totals = {}
        for model in models:
            for k, v in lipschitz_violations(model).items():
                totals[k] = totals.get(k, 0) + v
        ok = all(v == 0 for v in totals.values())
        return ok, "violations " + " ".join(f"{k}={v}" for k, v in totals.items())

    return _timed(7, "Lipschitz certificates hold on random pairs", 60, run)


def criterion_8(model: ModelSpec | None = None) -> CriterionResult:
    from .cli import main

    model = benchmark_two_state() if model is None else model

    def run():
        with tempfile.TemporaryDirectory() as tmp:
            mpath = Path(tmp) / "model.json"
            save_model(model, mpath)
            outs = []
            for i in range(2):
                out = Path(tmp) / f"run{i}.csv"
                code = main(["convergence", "--model", str(mpath), "--agents", "4,8,16,32",
                             "--grid-follows-n", "--seed", "123", "--exact-cap", "10",
                             "--mc-reps", "2000", "--out", str(out)])
                if code != 0:
                    return False, f"convergence exited with {code}"
                outs.append(out.read_bytes())
        same_csv = outs[0] == outs[1]
        dec = dp.solve_decentralized_grid(model, 8)
        a = sim.simulate_population(model, 16, dec, seed=9, reps=3000, workers=1, block=128)
        b = sim.simulate_population(model, 16, dec, seed=9, reps=3000, workers=4, block=128)
        c = sim.simulate_population(model, 16, dec, seed=9, reps=3000, workers=1, block=1000)
        same_sim = all(np.array_equal(getattr(a, f), getattr(o, f))
                       for o in (b, c) for f in ("states", "actions", "stage_costs"))
        e1 = sim.iid_deviation([0.3, 0.7], 64, seed=3, reps=5000, workers=1)
        e2 = sim.iid_deviation([0.3, 0.7], 64, seed=3, reps=5000, workers=3, block_elems=4096)
        same_iid = np.array_equal(e1.mean, e2.mean) and np.array_equal(e1.stderr, e2.stderr)
        return same_csv and same_sim and same_iid, (
            f"csv identical={same_csv} sim worker-invariant={same_sim} "
            f"iid worker-invariant={same_iid}")

    return _timed(8, "deterministic outputs", None, run)


def run_all(model: ModelSpec | None = None, echo=print) -> list[CriterionResult]:
    """Run every criterion; ``model`` replaces the benchmark used by criteria 3 and 8."""
    checks = [
        criterion_1, criterion_2, lambda: criterion_3(model), criterion_4, criterion_5,
        criterion_6, criterion_7, lambda: criterion_8(model),
    ]
    results = []
    for check in checks:
        res = check()
        if echo:
            echo(res.line())
        results.append(res)
    return results
