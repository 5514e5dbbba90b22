"""Primal-dual damping iteration and the first-order baselines it is
benchmarked against.

The central update couples a primal iterate x with a constructed dual
variable p:

    p+  = (p + sigma*A*grad f(x)) / (1 + sigma*eps*A)
    pt  = p+ + omega*(p+ - p)
    x+  = x - tau * C(x) pt

with stepsizes tau, sigma, dual preconditioner scale A, regularization
eps, extrapolation omega and primal preconditioner C(x). Each step costs
exactly one gradient evaluation. Baselines: plain gradient descent,
Nesterov's accelerated gradient, the heavy-ball iteration, and the
inertial gradient algorithms with Hessian damping (general and strongly
convex variants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .objective import Objective, as_vector

__all__ = [
    "Preconditioner",
    "PddParams",
    "PddState",
    "TrajectoryRecord",
    "Trajectory",
    "pdd_step",
    "gd_step",
    "nag_step",
    "igahd_step",
    "igahd_sc_step",
    "heavy_ball_step",
    "compute_beta2",
    "compute_nag_beta",
    "run_optimizer",
    "METHOD_SCHEMAS",
    "validate_method",
]


class Preconditioner:
    """Primal preconditioner C(x).

    Supported kinds: identity, fixed positive diagonal, fixed symmetric
    positive definite dense matrix, or a callback x -> matrix for
    state-dependent preconditioning.
    """

    def __init__(self, kind: str, payload=None):
        if kind not in ("identity", "diagonal", "dense", "callback"):
            raise ValueError(f"unknown preconditioner kind {kind!r}")
        self.kind = kind
        if kind == "diagonal":
            d = as_vector(payload, name="diagonal")
            if np.any(d <= 0):
                raise ValueError("diagonal preconditioner entries must be positive")
            payload = d
        elif kind == "dense":
            M = np.asarray(payload, dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError("dense preconditioner must be square")
            if np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError("dense preconditioner must be symmetric")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError as exc:
                raise ValueError("dense preconditioner must be positive definite") from exc
            payload = M
        elif kind == "callback" and not callable(payload):
            raise ValueError("callback preconditioner needs a callable")
        self.payload = payload

    @classmethod
    def identity(cls) -> "Preconditioner":
        return cls("identity")

    @classmethod
    def diagonal(cls, d) -> "Preconditioner":
        return cls("diagonal", d)

    @classmethod
    def dense(cls, M) -> "Preconditioner":
        return cls("dense", M)

    @classmethod
    def from_callback(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "Preconditioner":
        return cls("callback", fn)

    @property
    def is_constant(self) -> bool:
        return self.kind != "callback"

    def apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """C(x) v."""
        if self.kind == "identity":
            return v
        if self.kind == "diagonal":
            return self.payload * v
        if self.kind == "dense":
            return self.payload @ v
        return np.asarray(self.payload(x), dtype=float) @ v

    def matrix(self, x: np.ndarray, dim: int) -> np.ndarray:
        """Dense representation of C(x)."""
        if self.kind == "identity":
            return np.eye(dim)
        if self.kind == "diagonal":
            return np.diag(self.payload)
        if self.kind == "dense":
            return np.array(self.payload)
        return np.asarray(self.payload(x), dtype=float)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Preconditioner({self.kind})"


@dataclass(frozen=True)
class PddParams:
    """Scalars of the primal-dual damping step plus the preconditioner."""
    tau: float
    sigma: float
    A: float
    epsilon: float
    omega: float
    C: Preconditioner = field(default_factory=Preconditioner.identity)

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("tau and sigma must be strictly positive")
        if self.A <= 0:
            raise ValueError("A must be strictly positive")
        if self.epsilon < 0 or self.omega < 0:
            raise ValueError("epsilon and omega must be nonnegative")

    @property
    def gamma(self) -> float:
        """sigma*omega, the continuous-time extrapolation weight."""
        return self.sigma * self.omega


@dataclass
class PddState:
    x: np.ndarray
    p: np.ndarray
    iter: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.shape != self.p.shape:
            raise ValueError("x and p must have the same shape")
        if self.iter < 0:
            raise ValueError("iter must be nonnegative")


@dataclass(frozen=True)
class TrajectoryRecord:
    iter: int
    f: float
    grad_norm: float
    lyapunov: float
    dist_to_min: Optional[float] = None


@dataclass
class Trajectory:
    """Per-run record of metrics plus the terminal state."""
    method: str
    records: List[TrajectoryRecord] = field(default_factory=list)
    final_x: Optional[np.ndarray] = None
    final_p: Optional[np.ndarray] = None
    diverged: bool = False

    @property
    def iters(self) -> np.ndarray:
        return np.array([r.iter for r in self.records], dtype=int)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def pdd_step(state: PddState, params: PddParams, obj: Objective,
             grad: Optional[np.ndarray] = None) -> PddState:
    """One primal-dual damping update; evaluates the gradient once unless a
    precomputed ``grad`` at ``state.x`` is supplied."""
    g = obj.gradient(state.x) if grad is None else grad
    denom = 1.0 + params.sigma * params.epsilon * params.A
    p_new = (state.p + (params.sigma * params.A) * g) / denom
    p_tilde = p_new + params.omega * (p_new - state.p)
    x_new = state.x - params.tau * params.C.apply(state.x, p_tilde)
    return PddState(x=x_new, p=p_new, iter=state.iter + 1)


def gd_step(x: np.ndarray, tau: float, obj: Objective,
            grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Plain gradient descent: x+ = x - tau grad f(x)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    g = obj.gradient(x) if grad is None else grad
    return x - tau * g


def nag_step(x: np.ndarray, y_prev: np.ndarray, y_prev2: np.ndarray,
             tau: float, beta: float, obj: Objective,
             grad: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Nesterov accelerated gradient: y+ = x - tau grad f(x),
    x+ = y+ + beta (y_prev - y_prev2). Returns (x+, y+)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    g = obj.gradient(x) if grad is None else grad
    y_new = x - tau * g
    return y_new + beta * (y_prev - y_prev2), y_new


def igahd_step(x: np.ndarray, x_prev: np.ndarray, g_prev: np.ndarray,
               n: int, tau: float, alpha: float, beta1: float, obj: Objective,
               grad: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Inertial gradient step with Hessian-driven damping.

    y = x + (1 - alpha/n)(x - x_prev) - beta1 sqrt(tau) (g - g_prev)
          - (beta1 sqrt(tau) / n) g_prev
    x+ = y - tau grad f(y)

    Two gradient evaluations per call (at x, reused as next g_prev, and at
    y). Returns (x+, g) with g = grad f(x).
    """
    if n < 1:
        raise ValueError("iteration counter n must be >= 1")
    st = math.sqrt(tau)
    if not 0.0 <= beta1 <= 2.0 * st:
        raise ValueError("beta1 must lie in [0, 2 sqrt(tau)]")
    g = obj.gradient(x) if grad is None else grad
    a_n = 1.0 - alpha / n
    y = x + a_n * (x - x_prev) - beta1 * st * (g - g_prev) - (beta1 * st / n) * g_prev
    x_new = y - tau * obj.gradient(y)
    return x_new, g


def igahd_sc_step(x: np.ndarray, x_prev: np.ndarray, g_prev: np.ndarray,
                  m1: float, tau: float, beta2: float, obj: Objective,
                  grad: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Strongly convex variant of the Hessian-damped inertial step.

    With r = (1 - sqrt(m1 tau)) / (1 + sqrt(m1 tau)) and
    s = 1 + sqrt(m1 tau):

    x+ = x + r (x - x_prev) - (beta2 sqrt(tau)/s)(grad f(x) - g_prev)
           - (tau/s) grad f(x)

    One gradient evaluation per call. Returns (x+, g) with g = grad f(x).
    """
    if m1 <= 0 or tau <= 0:
        raise ValueError("m1 and tau must be positive")
    if beta2 > 1.0 / math.sqrt(m1) + 1e-15:
        raise ValueError("beta2 must not exceed 1/sqrt(m1)")
    g = obj.gradient(x) if grad is None else grad
    smt = math.sqrt(m1 * tau)
    r = (1.0 - smt) / (1.0 + smt)
    s = 1.0 + smt
    x_new = (x + r * (x - x_prev)
             - (beta2 * math.sqrt(tau) / s) * (g - g_prev)
             - (tau / s) * g)
    return x_new, g


def heavy_ball_step(x: np.ndarray, x_prev: np.ndarray, tau: float, beta: float,
                    obj: Objective, grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Discrete heavy-ball iteration x+ = x - tau grad f(x) + beta (x - x_prev)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    g = obj.gradient(x) if grad is None else grad
    return x - tau * g + beta * (x - x_prev)


def compute_nag_beta(kappa: float) -> float:
    """Momentum weight (sqrt(3k+1) - 2) / (sqrt(3k+1) + 2) for condition
    number k, slightly below the optimum for a pure quadratic."""
    if kappa <= 1.0:
        raise ValueError("kappa must exceed 1")
    s = math.sqrt(3.0 * kappa + 1.0)
    return (s - 2.0) / (s + 2.0)


def compute_beta2(m1: float, tau: float) -> float:
    """Damping coefficient for the strongly convex inertial method.

    beta2 = (sqrt(tau) + tau sqrt(m1)/2) / (4 + 8 sqrt(m1 tau) - 2 m1 tau),
    the solution of the stepsize balancing equation
    sqrt(m1)/(8 b) = (sqrt(m1)/(2 tau) + m1/sqrt(tau)) /
    (2 b m1 + 1/sqrt(tau) + sqrt(m1)/2).
    """
    if m1 <= 0 or tau <= 0:
        raise ValueError("m1 and tau must be positive")
    denom = 4.0 + 8.0 * math.sqrt(m1 * tau) - 2.0 * m1 * tau
    if denom <= 0:
        raise ValueError("balancing denominator is not positive")
    return (math.sqrt(tau) + tau * math.sqrt(m1) / 2.0) / denom


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

# method name -> required parameter names (all floats unless noted)
METHOD_SCHEMAS = {
    "gd": ("tau",),
    "nag": ("tau", "beta"),
    "heavy_ball": ("tau", "beta"),
    "igahd": ("tau", "alpha", "beta1"),
    "igahd_sc": ("tau", "m1", "beta2"),
    "pdd": ("tau", "sigma", "A", "epsilon", "omega"),
}

# optional keys allowed on top of the schema
_METHOD_OPTIONAL = {"pdd": ("C",)}


def validate_method(method: str, params: dict) -> None:
    """Check a method name and its parameter map against the schema."""
    if method not in METHOD_SCHEMAS:
        raise ValueError(f"unknown optimizer method {method!r}")
    required = METHOD_SCHEMAS[method]
    missing = [k for k in required if k not in params]
    if missing:
        raise ValueError(f"{method}: missing parameters {missing}")
    allowed = set(required) | set(_METHOD_OPTIONAL.get(method, ()))
    extra = [k for k in params if k not in allowed]
    if extra:
        raise ValueError(f"{method}: unknown parameters {extra}")
    for k in required:
        if not isinstance(params[k], (int, float)) or isinstance(params[k], bool):
            raise ValueError(f"{method}: parameter {k!r} must be a number")
    C = params.get("C")
    if C is not None and not isinstance(C, Preconditioner):
        raise ValueError("pdd: C must be a Preconditioner")


def _pdd_params_from(params: dict) -> PddParams:
    return PddParams(
        tau=float(params["tau"]), sigma=float(params["sigma"]),
        A=float(params["A"]), epsilon=float(params["epsilon"]),
        omega=float(params["omega"]),
        C=params.get("C") or Preconditioner.identity(),
    )


def run_optimizer(obj: Objective, method: str, params: dict, x0,
                  max_iter: int, grad_tol: float = 0.0,
                  record_every: int = 1, p0=None,
                  label: Optional[str] = None) -> Trajectory:
    """Iterate one optimizer until the gradient norm drops to ``grad_tol``,
    ``max_iter`` is reached, or the run diverges.

    Metrics are recorded every ``record_every`` iterations plus at the final
    iterate; divergence (any non-finite value, gradient, or iterate) sets a
    flag on the trajectory instead of raising, so a benchmark batch survives
    bad hyperparameters. The dual of the pdd method starts at zero unless
    ``p0`` is given. Identical inputs always produce identical trajectories.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if grad_tol < 0:
        raise ValueError("grad_tol must be nonnegative")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    validate_method(method, params)

    x = as_vector(x0, obj.dim, "x0")
    traj = Trajectory(method=label or method)

    p = np.zeros(obj.dim)
    if method == "pdd":
        if p0 is not None:
            p = as_vector(p0, obj.dim, "p0")
        pdd_params = _pdd_params_from(params)
        state = PddState(x=x, p=p, iter=0)
    elif method == "nag":
        y_prev = x.copy()
        y_prev2 = x.copy()
    elif method in ("igahd", "igahd_sc", "heavy_ball"):
        x_prev = x.copy()
        g_prev: Optional[np.ndarray] = None  # filled from the first gradient
    n_counter = 1  # igahd iteration index, starts at 1 to keep alpha/n finite

    xstar = obj.minimizer
    with np.errstate(all="ignore"):  # divergent runs must not spam warnings
        g = obj.gradient(x)

    def record(it: int, xc: np.ndarray, gc: np.ndarray) -> float:
        fval = obj.value(xc)
        gn = float(np.linalg.norm(gc))
        lyap = 0.5 * (float(p @ p) + gn * gn) if method == "pdd" else 0.5 * gn * gn
        dist = float(np.linalg.norm(xc - xstar)) if xstar is not None else None
        traj.records.append(TrajectoryRecord(it, fval, gn, lyap, dist))
        return fval

    it = 0
    gtol2 = grad_tol * grad_tol
    while True:
        with np.errstate(all="ignore"):
            gn2 = float(g @ g)
        finite = math.isfinite(gn2) and bool(np.all(np.isfinite(x)))
        if not finite:
            traj.diverged = True
            with np.errstate(all="ignore"):
                record(it, x, g)
            break
        if it % record_every == 0 and not math.isfinite(record(it, x, g)):
            traj.diverged = True
            break
        if gn2 <= gtol2 or it >= max_iter:
            if it % record_every != 0:
                record(it, x, g)
            break

        with np.errstate(all="ignore"):
            if method == "pdd":
                state = pdd_step(state, pdd_params, obj, grad=g)
                x, p = state.x, state.p
            elif method == "gd":
                x = gd_step(x, params["tau"], obj, grad=g)
            elif method == "nag":
                x, y_new = nag_step(x, y_prev, y_prev2, params["tau"],
                                    params["beta"], obj, grad=g)
                y_prev2, y_prev = y_prev, y_new
            elif method == "heavy_ball":
                x_new = heavy_ball_step(x, x_prev, params["tau"], params["beta"],
                                        obj, grad=g)
                x_prev, x = x, x_new
            elif method == "igahd":
                gp = g if g_prev is None else g_prev
                x_new, gp_out = igahd_step(x, x_prev, gp, n_counter, params["tau"],
                                           params["alpha"], params["beta1"], obj,
                                           grad=g)
                x_prev, x, g_prev = x, x_new, gp_out
                n_counter += 1
            else:  # igahd_sc
                gp = g if g_prev is None else g_prev
                x_new, gp_out = igahd_sc_step(x, x_prev, gp, params["m1"],
                                              params["tau"], params["beta2"], obj,
                                              grad=g)
                x_prev, x, g_prev = x, x_new, gp_out

            it += 1
            g = obj.gradient(x)

    traj.final_x = x.copy()
    traj.final_p = p.copy() if method == "pdd" else None
    return traj
