"""Mean-field coupled Markov chain models.

A :class:`ModelSpec` stores a finite-horizon model whose transition kernel and
per-step cost are affine in the mean-field ``z``::

    P_t(y | x, u, z) = A0[t, x, u, y] + sum_k z[k] * B[t, x, u, k, y]
    l_t(x, u, z)     = c0[t, x, u]    + sum_k z[k] * c1[t, x, u, k]

Stages are indexed from 0 in code. General mean-field dependent dynamics are
available through :class:`FunctionalModel`, which pushes a finite noise
distribution through a user supplied dynamics callback.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class ModelFileError(ValueError):
    """Raised when a model file cannot be parsed or has inconsistent shapes."""


class ModelValidationError(ValueError):
    """Raised when an inadmissible model is used where admissibility is required."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(str(report))


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Affine-in-mean-field controlled Markov chain.

    Parameters
    ----------
    initial_dist : (X,) array
        Law of every agent's initial state.
    kernel_base : (T, X, U, X) array
        ``A0``; each row over the last axis is a pmf.
    kernel_coeff : (T, X, U, X, X) array
        ``B`` indexed ``[t, x, u, x', y]``.
    cost_base : (T, X, U) array
    cost_coeff : (T, X, U, X) array
    """

    initial_dist: np.ndarray
    kernel_base: np.ndarray
    kernel_coeff: np.ndarray
    cost_base: np.ndarray
    cost_coeff: np.ndarray

    def __post_init__(self):
        for name in ("initial_dist", "kernel_base", "kernel_coeff", "cost_base", "cost_coeff"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        T, X, U = self.cost_base.shape
        expected = {
            "initial_dist": (X,),
            "kernel_base": (T, X, U, X),
            "kernel_coeff": (T, X, U, X, X),
            "cost_coeff": (T, X, U, X),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ModelFileError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def num_states(self) -> int:
        return self.cost_base.shape[1]

    @property
    def num_actions(self) -> int:
        return self.cost_base.shape[2]

    @property
    def horizon(self) -> int:
        return self.cost_base.shape[0]

    def kernel(self, t: int, x: int, u: int, z) -> np.ndarray:
        return kernel_eval(self, t, x, u, z)

    def cost(self, t: int, x: int, u: int, z) -> float:
        return cost_eval(self, t, x, u, z)


@dataclass(frozen=True, eq=False)
class FunctionalModel:
    """Model given by dynamics ``y = dynamics(t, x, u, w, z)`` with finite noise.

    ``noise_pmf[w]`` is the probability of noise symbol ``w``; ``cost(t, x, u, z)``
    must be nonnegative on the simplex.
    """

    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray
    noise_pmf: np.ndarray
    dynamics: Callable[[int, int, int, int, np.ndarray], int]
    cost_fn: Callable[[int, int, int, np.ndarray], float]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "initial_dist", _frozen(self.initial_dist))
        object.__setattr__(self, "noise_pmf", _frozen(self.noise_pmf))
        p = self.noise_pmf
        if p.ndim != 1 or np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1) > ROW_SUM_TOL:
            raise ValueError("noise_pmf must be a probability vector")
        if self.initial_dist.shape != (self.num_states,):
            raise ValueError("initial_dist has the wrong length")

    @property
    def num_noise(self) -> int:
        return len(self.noise_pmf)

    def kernel(self, t: int, x: int, u: int, z) -> np.ndarray:
        return kernel_from_functional(self, t, x, u, z)

    def cost(self, t: int, x: int, u: int, z) -> float:
        return float(self.cost_fn(t, x, u, np.asarray(z, dtype=float)))


def kernel_from_functional(fm: FunctionalModel, t: int, x: int, u: int, z) -> np.ndarray:
    """Transition row obtained by pushing ``noise_pmf`` through the dynamics."""
    z = np.asarray(z, dtype=float)
    out = np.zeros(fm.num_states)
    for w, pw in enumerate(fm.noise_pmf):
        y = fm.dynamics(t, x, u, w, z)
        if not 0 <= y < fm.num_states:
            raise IndexError(f"dynamics returned invalid state {y}")
        out[y] += pw
    return out


def _check_indices(model: ModelSpec, t, x, u):
    if not 0 <= t < model.horizon:
        raise IndexError(f"stage {t} out of range")
    if not 0 <= x < model.num_states:
        raise IndexError(f"state {x} out of range")
    if not 0 <= u < model.num_actions:
        raise IndexError(f"action {u} out of range")


def kernel_eval(model: ModelSpec, t: int, x: int, u: int, z) -> np.ndarray:
    """Return ``P_t(. | x, u, z)``."""
    _check_indices(model, t, x, u)
    z = np.asarray(z, dtype=float)
    return model.kernel_base[t, x, u] + z @ model.kernel_coeff[t, x, u]


def cost_eval(model: ModelSpec, t: int, x: int, u: int, z) -> float:
    """Return ``l_t(x, u, z)``."""
    _check_indices(model, t, x, u)
    z = np.asarray(z, dtype=float)
    return float(model.cost_base[t, x, u] + z @ model.cost_coeff[t, x, u])


# --------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    kind: str
    index: tuple
    value: float

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.value:.6g}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "OK"
        return "\n".join(str(v) for v in self.violations)


def validate_model(spec: ModelSpec, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """List every violated admissibility condition.

    Nonnegativity of the kernel and of the cost is checked at the simplex
    vertices; both are affine in ``z`` so this certifies the whole simplex.
    """
    report = ValidationReport()
    add = report.violations.append

    z1 = spec.initial_dist
    for x in np.flatnonzero((z1 < 0) | (z1 > 1)):
        add(Violation("initial distribution entry outside [0, 1]", (int(x),), float(z1[x])))
    if abs(z1.sum() - 1) > tol:
        add(Violation("initial distribution does not sum to 1", (), float(z1.sum())))

    A0, B = spec.kernel_base, spec.kernel_coeff
    rs = A0.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(rs - 1) > tol)):
        add(Violation("kernel base row-sum not 1", tuple(map(int, idx)), float(rs[idx])))
    bs = B.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(bs) > tol)):
        add(Violation("kernel coefficient row-sum nonzero", tuple(map(int, idx)), float(bs[idx])))
    # vertex e_k gives A0 + B[..., k, :]
    at_vertex = A0[:, :, :, None, :] + B
    for idx in zip(*np.nonzero(at_vertex < -tol)):
        add(Violation("negative kernel at simplex vertex", tuple(map(int, idx)),
                      float(at_vertex[idx])))

    cost_vertex = spec.cost_base[..., None] + spec.cost_coeff
    for idx in zip(*np.nonzero(cost_vertex < -tol)):
        add(Violation("negative cost at simplex vertex", tuple(map(int, idx)),
                      float(cost_vertex[idx])))
    return report


def require_admissible(spec: ModelSpec) -> ModelSpec:
    report = validate_model(spec)
    if not report.ok:
        raise ModelValidationError(report)
    return spec


# --------------------------------------------------------------------------
# Lipschitz ledger


@dataclass(frozen=True)
class LipschitzConstants:
    """Per-stage Lipschitz constants in the sup norm, valid on the unit box.

    ``kernel`` and ``cost`` bound the primitive kernel and cost; ``flow`` and
    ``lifted_cost`` bound the lifted dynamics and lifted cost; ``value_gap``
    and ``value`` come from the backward recursion
    ``K[T-1] = lifted_cost[T-1]``, ``K[t] = lifted_cost[t] + K[t+1] * flow[t]``.
    """

    kernel: np.ndarray
    cost: np.ndarray
    flow: np.ndarray
    lifted_cost: np.ndarray
    value_gap: np.ndarray
    value: np.ndarray
    max_vertex_cost: np.ndarray
    kernel_bound: np.ndarray
    cost_bound: np.ndarray


def _backward(k3, k4):
    out = np.empty_like(k4)
    out[-1] = k4[-1]
    for t in range(len(k4) - 2, -1, -1):
        out[t] = k4[t] + out[t + 1] * k3[t]
    return out


def lipschitz_constants(model: ModelSpec) -> LipschitzConstants:
    nx = model.num_states
    A0, B = model.kernel_base, model.kernel_coeff
    c0, c1 = model.cost_base, model.cost_coeff
    k1 = np.abs(B).sum(axis=3).max(axis=(1, 2, 3))
    k2 = np.abs(c1).sum(axis=3).max(axis=(1, 2))
    lmax = (c0[..., None] + c1).max(axis=(1, 2, 3))
    # sup of |P| and |l| over the unit box, which exceeds the vertex maxima
    pbound = (np.abs(A0) + np.abs(B).sum(axis=3)).max(axis=(1, 2, 3))
    lbound = (np.abs(c0) + np.abs(c1).sum(axis=3)).max(axis=(1, 2))
    k3 = nx * (pbound + k1)
    k4 = nx * (lbound + k2)
    k5 = _backward(k3, k4)
    return LipschitzConstants(
        kernel=k1, cost=k2, flow=k3, lifted_cost=k4, value_gap=k5, value=k5.copy(),
        max_vertex_cost=lmax, kernel_bound=pbound, cost_bound=lbound,
    )


# --------------------------------------------------------------------------
# file format


def _broadcast_stage(blocks: Sequence[dict], key: str, horizon: int, shape: tuple,
                     time_invariant: bool) -> np.ndarray:
    try:
        arrs = [np.array(b[key], dtype=float) for b in blocks]
    except KeyError as exc:
        raise ModelFileError(f"stage block missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"stage key {key!r} is not a numeric array: {exc}") from None
    for i, a in enumerate(arrs):
        if a.shape != shape:
            raise ModelFileError(f"stage {i} {key} has shape {a.shape}, expected {shape}")
    if time_invariant:
        arrs = arrs * horizon
    return np.stack(arrs)


def model_from_dict(doc: dict) -> ModelSpec:
    try:
        nx = int(doc["num_states"])
        nu = int(doc["num_actions"])
        T = int(doc["horizon"])
        z1 = np.array(doc["initial_dist"], dtype=float)
        ti = bool(doc.get("time_invariant", False))
        stages = doc["stages"]
    except KeyError as exc:
        raise ModelFileError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFileError(str(exc)) from None
    if nx < 1 or nu < 1 or T < 1:
        raise ModelFileError("num_states, num_actions and horizon must be >= 1")
    if z1.shape != (nx,):
        raise ModelFileError(f"initial_dist has length {z1.shape}, expected {nx}")
    if not isinstance(stages, list) or len(stages) != (1 if ti else T):
        raise ModelFileError(
            f"expected {1 if ti else T} stage blocks, got "
            f"{len(stages) if isinstance(stages, list) else type(stages).__name__}"
        )
    return ModelSpec(
        initial_dist=z1,
        kernel_base=_broadcast_stage(stages, "kernel_base", T, (nx, nu, nx), ti),
        kernel_coeff=_broadcast_stage(stages, "kernel_coeff", T, (nx, nu, nx, nx), ti),
        cost_base=_broadcast_stage(stages, "cost_base", T, (nx, nu), ti),
        cost_coeff=_broadcast_stage(stages, "cost_coeff", T, (nx, nu, nx), ti),
    )


def load_model(path) -> ModelSpec:
    """Read a model file. Admissibility is checked separately by :func:`validate_model`."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFileError(f"{path}: top level must be an object")
    return model_from_dict(doc)


def model_to_dict(model: ModelSpec) -> dict:
    T = model.horizon
    ti = all(
        np.array_equal(getattr(model, k)[0], getattr(model, k)[t])
        for k in ("kernel_base", "kernel_coeff", "cost_base", "cost_coeff")
        for t in range(T)
    )
    stages = [
        {
            "kernel_base": model.kernel_base[t].tolist(),
            "kernel_coeff": model.kernel_coeff[t].tolist(),
            "cost_base": model.cost_base[t].tolist(),
            "cost_coeff": model.cost_coeff[t].tolist(),
        }
        for t in range(1 if ti else T)
    ]
    return {
        "num_states": model.num_states,
        "num_actions": model.num_actions,
        "horizon": T,
        "initial_dist": model.initial_dist.tolist(),
        "time_invariant": ti,
        "stages": stages,
    }


def save_model(model: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
