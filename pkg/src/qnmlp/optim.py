"""The two trainers: per-example gradient descent and full-batch BFGS.

BFGS is exposed twice: ``bfgs_minimize`` works on any objective that
returns (value, gradient), and ``bfgs_train`` wraps the perceptron's
training loss as such an objective over the flat parameter vector. The
line search brackets then zooms until both strong Wolfe inequalities
hold, which is what keeps every inverse-Hessian update positive
definite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import linalg
from .mlp import Dataset, Network, loss_and_grad, loss_mse, sigmoid, unpack_params

__all__ = [
    "STATUS_CONVERGED_GRAD",
    "STATUS_CONVERGED_FTOL",
    "STATUS_MAX_ITERS",
    "STATUS_LINE_SEARCH_FAILED",
    "CURVATURE_FLOOR",
    "CurvatureError",
    "LineSearchError",
    "Objective",
    "GdConfig",
    "WolfeConfig",
    "StopCriteria",
    "BfgsState",
    "StepRecord",
    "MinimizeResult",
    "wolfe_line_search",
    "bfgs_update_inv_hessian",
    "bfgs_update_hessian",
    "bfgs_minimize",
    "bfgs_train",
    "gd_train",
]

STATUS_CONVERGED_GRAD = "converged_grad"
STATUS_CONVERGED_FTOL = "converged_ftol"
STATUS_MAX_ITERS = "max_iters"
STATUS_LINE_SEARCH_FAILED = "line_search_failed"

# The inverse-Hessian update is skipped when y.s <= floor * |y| * |s|;
# skipping (rather than damping) keeps plain BFGS semantics.
CURVATURE_FLOOR = 1e-10


class CurvatureError(ValueError):
    """An (s, y) pair violates the curvature condition y.s > 0."""


class LineSearchError(RuntimeError):
    """No step satisfied both strong Wolfe conditions within budget.

    Carries the best (lowest-f) trial seen so the caller can decide what
    to salvage.
    """

    def __init__(self, message: str, alpha: float, f: float, g: np.ndarray, evals: int):
        super().__init__(message)
        self.alpha = alpha
        self.f = f
        self.g = g
        self.evals = evals


@dataclass(frozen=True)
class Objective:
    """Deterministic objective: fun(x) -> (value, gradient of length dim)."""

    fun: Callable[[np.ndarray], tuple]
    dim: int

    def eval(self, x: np.ndarray):
        f, g = self.fun(x)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.dim,):
            raise ValueError(f"objective returned gradient of shape {g.shape}, expected ({self.dim},)")
        return float(f), g


@dataclass(frozen=True)
class GdConfig:
    """Gradient-descent settings. ``online`` updates after every training
    example; ``batch`` takes one averaged-gradient step per epoch."""

    eta: float = 0.1
    epochs: int = 500
    mode: str = "online"

    def __post_init__(self):
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.mode not in ("online", "batch"):
            raise ValueError(f"mode must be 'online' or 'batch', got {self.mode!r}")


@dataclass(frozen=True)
class WolfeConfig:
    """Strong-Wolfe line-search constants (textbook quasi-Newton defaults)."""

    c1: float = 1e-4
    c2: float = 0.9
    alpha_init: float = 1.0
    alpha_max: float = 1e3
    max_bracket_steps: int = 20
    max_zoom_steps: int = 30

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if not 0.0 < self.alpha_init <= self.alpha_max:
            raise ValueError(f"need 0 < alpha_init <= alpha_max, got {self.alpha_init}, {self.alpha_max}")
        if self.max_bracket_steps < 1 or self.max_zoom_steps < 1:
            raise ValueError("bracket and zoom budgets must be >= 1")


@dataclass(frozen=True)
class StopCriteria:
    """Termination tests; a tolerance of 0 disables that test."""

    grad_tol: float = 1e-5
    max_iters: int = 500
    f_tol: float = 0.0

    def __post_init__(self):
        if self.grad_tol < 0 or self.f_tol < 0:
            raise ValueError("tolerances must be >= 0")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class BfgsState:
    """Current point, gradient and inverse-Hessian approximation."""

    x: np.ndarray
    f: float
    g: np.ndarray
    h_inv: np.ndarray
    iteration: int = 0
    n_skipped_updates: int = 0

    def __post_init__(self):
        n = self.x.size
        if self.g.shape != (n,) or self.h_inv.shape != (n, n):
            raise ValueError("state dimensions disagree")
        if not linalg.is_symmetric(self.h_inv, 1e-10):
            raise ValueError("inverse-Hessian approximation must be symmetric")


@dataclass(frozen=True)
class StepRecord:
    """One accepted line-search step, emitted for post-hoc verification."""

    iteration: int
    x: np.ndarray  # point before the step
    p: np.ndarray  # search direction
    alpha: float
    f: float  # value at x
    g: np.ndarray  # gradient at x
    f_new: float
    g_new: np.ndarray
    s: np.ndarray  # x_new - x
    y: np.ndarray  # g_new - g
    h_inv_after: np.ndarray
    update_skipped: bool


@dataclass
class MinimizeResult:
    x_final: np.ndarray
    f_final: float
    grad_norm_final: float
    iters: int
    status: str
    history: list  # (iter, f, grad_norm) per recorded iteration, including iteration 0
    n_skipped_updates: int = 0
    test_mse_history: Optional[list] = None  # filled by the MLP trainers, aligned with history


def _quadratic_trial(lo: float, f_lo: float, d_lo: float, hi: float, f_hi: float) -> float:
    """Minimizer of the quadratic through (lo, f_lo, d_lo) and (hi, f_hi).

    Falls back to bisection when the fit is degenerate or the minimizer
    sits within 10% of either end of the (unordered) interval.
    """
    width = hi - lo
    mid = lo + 0.5 * width
    denom = 2.0 * (f_hi - f_lo - d_lo * width)
    if denom == 0.0 or not np.isfinite(denom):
        return mid
    trial = lo - d_lo * width * width / denom
    t = (trial - lo) / width
    if not np.isfinite(t) or not 0.1 <= t <= 0.9:
        return mid
    return trial


def wolfe_line_search(obj: Objective, x: np.ndarray, p: np.ndarray, f0: float,
                      g0: np.ndarray, cfg: WolfeConfig = WolfeConfig()):
    """Bracket-then-zoom search for a strong-Wolfe step along p.

    Returns (alpha, f_new, g_new, evals) with alpha satisfying both the
    sufficient-decrease and the absolute curvature inequality. Raises
    ValueError if p is not a descent direction and LineSearchError when
    the bracket/zoom budget runs out.
    """
    d0 = linalg.dot(g0, p)
    if not d0 < 0:
        raise ValueError(f"p is not a descent direction (g.p = {d0:g})")

    evals = 0
    best = [0.0, f0, g0]

    def trial_eval(alpha: float):
        nonlocal evals
        f, g = obj.eval(x + alpha * p)
        evals += 1
        if np.isfinite(f) and f < best[1]:
            best[:] = [alpha, f, g]
        return f, g, linalg.dot(g, p)

    def sufficient(alpha: float, f: float) -> bool:
        return np.isfinite(f) and f <= f0 + cfg.c1 * alpha * d0

    def curvature(d: float) -> bool:
        return abs(d) <= cfg.c2 * abs(d0)

    def zoom(lo, f_lo, d_lo, hi, f_hi):
        for _ in range(cfg.max_zoom_steps):
            a = _quadratic_trial(lo, f_lo, d_lo, hi, f_hi)
            f_a, g_a, d_a = trial_eval(a)
            if not sufficient(a, f_a) or f_a >= f_lo:
                hi, f_hi = a, f_a
            else:
                if curvature(d_a):
                    return a, f_a, g_a
                if d_a * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, d_lo = a, f_a, d_a
        raise LineSearchError("zoom budget exhausted without a Wolfe step", best[0], best[1], best[2], evals)

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = min(cfg.alpha_init, cfg.alpha_max)
    for i in range(cfg.max_bracket_steps):
        f_a, g_a, d_a = trial_eval(a)
        if not sufficient(a, f_a) or (i > 0 and f_a >= f_prev):
            alpha, f_new, g_new = zoom(a_prev, f_prev, d_prev, a, f_a)
            return alpha, f_new, g_new, evals
        if curvature(d_a):
            return a, f_a, g_a, evals
        if d_a >= 0:
            alpha, f_new, g_new = zoom(a, f_a, d_a, a_prev, f_prev)
            return alpha, f_new, g_new, evals
        if a >= cfg.alpha_max:
            break
        a_prev, f_prev, d_prev = a, f_a, d_a
        a = min(2.0 * a, cfg.alpha_max)
    raise LineSearchError("bracket budget exhausted without a Wolfe step", best[0], best[1], best[2], evals)


def bfgs_update_inv_hessian(h_inv: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rank-two inverse-Hessian update (I - rho s y^T) H (I - rho y s^T) + rho s s^T.

    The result is symmetrized by averaging with its transpose. Requires
    y.s > 0; the new matrix then satisfies the secant relation H' y = s
    and stays positive definite.
    """
    ys = linalg.dot(y, s)
    if not ys > 0:
        raise CurvatureError(f"curvature condition violated: y.s = {ys:g}")
    rho = 1.0 / ys
    n = s.size
    eye = np.eye(n)
    left = eye - rho * linalg.outer(s, y)
    right = eye - rho * linalg.outer(y, s)
    updated = left @ np.asarray(h_inv, dtype=np.float64) @ right + rho * linalg.outer(s, s)
    return 0.5 * (updated + updated.T)


def bfgs_update_hessian(b: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Direct-Hessian rank-two update B + y y^T / y.s - (B s)(B s)^T / s.B.s.

    Provided for cross-validation: applied to matched update sequences,
    this stays the exact inverse of ``bfgs_update_inv_hessian``'s result.
    """
    ys = linalg.dot(y, s)
    if not ys > 0:
        raise CurvatureError(f"curvature condition violated: y.s = {ys:g}")
    b = np.asarray(b, dtype=np.float64)
    bs = linalg.matvec(b, s)
    sbs = linalg.dot(s, bs)
    if not sbs > 0:
        raise CurvatureError(f"s.B.s = {sbs:g} is not positive")
    updated = b + linalg.outer(y, y) / ys - linalg.outer(bs, bs) / sbs
    return 0.5 * (updated + updated.T)


def bfgs_minimize(obj: Objective, x0, stop: StopCriteria = StopCriteria(),
                  wolfe: WolfeConfig = WolfeConfig(), callback=None,
                  step_observer=None) -> MinimizeResult:
    """Full-matrix BFGS with strong-Wolfe steps, starting from H = I.

    ``callback(iter, x, f, grad_norm)`` fires for every recorded history
    entry (including iteration 0); ``step_observer(StepRecord)`` fires
    for every accepted Wolfe step. On a line-search failure the search
    restarts once from steepest descent with H reset to I; a second
    failure ends the run with status ``line_search_failed`` at the best
    point seen.
    """
    x = linalg.vector(x0).copy()
    if x.size != obj.dim:
        raise ValueError(f"x0 has length {x.size}, objective dim is {obj.dim}")
    f, g = obj.eval(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    state = BfgsState(x=x, f=f, g=g, h_inv=np.eye(x.size))
    grad_norm = linalg.norm2(g)
    history = [(0, f, grad_norm)]
    if callback is not None:
        callback(0, state.x, f, grad_norm)

    status = None
    if stop.grad_tol > 0 and grad_norm <= stop.grad_tol:
        status = STATUS_CONVERGED_GRAD

    while status is None:
        if state.iteration >= stop.max_iters:
            status = STATUS_MAX_ITERS
            break

        p = -linalg.matvec(state.h_inv, state.g)
        try:
            if linalg.dot(state.g, p) >= 0:
                # H lost positive definiteness numerically; force a restart.
                raise LineSearchError("search direction is not descent", 0.0, state.f, state.g, 0)
            alpha, f_new, g_new, _ = wolfe_line_search(obj, state.x, p, state.f, state.g, wolfe)
        except LineSearchError:
            state.h_inv = np.eye(x.size)
            p = -state.g
            try:
                if linalg.dot(state.g, p) >= 0:
                    # gradient is exactly zero; only reachable with grad_tol disabled
                    raise LineSearchError("gradient is numerically zero", 0.0, state.f, state.g, 0)
                alpha, f_new, g_new, _ = wolfe_line_search(obj, state.x, p, state.f, state.g, wolfe)
            except LineSearchError as failure:
                if np.isfinite(failure.f) and failure.f < state.f and failure.alpha > 0:
                    # Salvage the best trial the failed search saw.
                    state.x = state.x + failure.alpha * p
                    state.f = failure.f
                    state.g = failure.g
                    state.iteration += 1
                    grad_norm = linalg.norm2(state.g)
                    history.append((state.iteration, state.f, grad_norm))
                    if callback is not None:
                        callback(state.iteration, state.x, state.f, grad_norm)
                status = STATUS_LINE_SEARCH_FAILED
                break

        x_new = state.x + alpha * p
        s = x_new - state.x
        y = g_new - state.g
        skipped = False
        if linalg.dot(y, s) > CURVATURE_FLOOR * linalg.norm2(y) * linalg.norm2(s):
            state.h_inv = bfgs_update_inv_hessian(state.h_inv, s, y)
        else:
            skipped = True
            state.n_skipped_updates += 1

        f_prev = state.f
        record = None
        if step_observer is not None:
            record = StepRecord(state.iteration + 1, state.x, p, alpha, state.f, state.g,
                                f_new, g_new, s, y, state.h_inv, skipped)
        state.x, state.f, state.g = x_new, f_new, g_new
        state.iteration += 1
        grad_norm = linalg.norm2(state.g)
        history.append((state.iteration, state.f, grad_norm))
        if callback is not None:
            callback(state.iteration, state.x, state.f, grad_norm)
        if record is not None:
            step_observer(record)

        if stop.grad_tol > 0 and grad_norm <= stop.grad_tol:
            status = STATUS_CONVERGED_GRAD
        elif stop.f_tol > 0 and abs(f_prev - state.f) <= stop.f_tol * max(1.0, abs(f_prev)):
            status = STATUS_CONVERGED_FTOL

    return MinimizeResult(
        x_final=state.x,
        f_final=state.f,
        grad_norm_final=linalg.norm2(state.g),
        iters=state.iteration,
        status=status,
        history=history,
        n_skipped_updates=state.n_skipped_updates,
    )


def bfgs_train(net: Network, data: Dataset, stop: StopCriteria = StopCriteria(),
               wolfe: WolfeConfig = WolfeConfig(), step_observer=None):
    """Train the network's flat parameters by BFGS on the training MSE.

    Returns (trained network, result); the result's history carries the
    training loss and its ``test_mse_history`` the matching test loss.
    """

    def fun(params):
        return loss_and_grad(net.with_params(params), data, "train")

    obj = Objective(fun, net.topology.n_params)
    test_history: list = []

    def record_test(_iteration, params, _f, _grad_norm):
        test_history.append(loss_mse(net.with_params(params), data, "test"))

    result = bfgs_minimize(obj, net.params, stop, wolfe, callback=record_test,
                           step_observer=step_observer)
    result.test_mse_history = test_history
    return net.with_params(result.x_final), result


def gd_train(net: Network, data: Dataset, cfg: GdConfig = GdConfig()):
    """Gradient-descent baseline trainer.

    ``online`` mode sweeps the training rows in stored order, updating
    after each one with the delta rule (weights by eta*delta*activation,
    biases by eta*delta); ``batch`` mode takes one step along the exact
    averaged gradient per epoch. History records the full-train MSE once
    per epoch. A non-finite loss or parameter ends the run early with
    status ``line_search_failed`` and the last finite parameters.
    """
    params = np.array(net.params)
    w1, b1, w2, b2 = unpack_params(net.topology, params)
    x_train, targets = data.rows("train")
    # Validates topology-vs-data consistency up front.
    f = loss_mse(net, data, "train")
    grad_norm = linalg.norm2(loss_and_grad(net, data, "train")[1])
    history = [(0, f, grad_norm)]
    test_history = [loss_mse(net, data, "test")]

    status = STATUS_MAX_ITERS
    iters = 0
    for epoch in range(1, cfg.epochs + 1):
        previous = params.copy()
        if cfg.mode == "online":
            for i in range(x_train.shape[0]):
                xi = x_train[i]
                hidden = sigmoid(w1 @ xi + b1)
                out = sigmoid(w2 @ hidden + b2)
                delta_out = out * (1.0 - out) * (targets[i] - out)
                delta_hid = hidden * (1.0 - hidden) * (w2.T @ delta_out)
                w2 += cfg.eta * np.outer(delta_out, hidden)
                b2 += cfg.eta * delta_out
                w1 += cfg.eta * np.outer(delta_hid, xi)
                b1 += cfg.eta * delta_hid
        else:
            grad = loss_and_grad(net.with_params(params), data, "train")[1]
            params -= cfg.eta * grad

        if not np.all(np.isfinite(params)):
            params = previous
            status = STATUS_LINE_SEARCH_FAILED
            break
        current = net.with_params(params)
        f, grad = loss_and_grad(current, data, "train")
        if not np.isfinite(f):
            params = previous
            status = STATUS_LINE_SEARCH_FAILED
            break
        iters = epoch
        grad_norm = linalg.norm2(grad)
        history.append((epoch, f, grad_norm))
        test_history.append(loss_mse(current, data, "test"))

    trained = net.with_params(params)
    result = MinimizeResult(
        x_final=trained.params,
        f_final=history[-1][1],
        grad_norm_final=history[-1][2],
        iters=iters,
        status=status,
        history=history,
        test_mse_history=test_history,
    )
    return trained, result
