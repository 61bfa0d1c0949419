"""Gradient-based training: Adam, limited-memory BFGS, two-stage schedule.

Both optimizers consume an evaluator ``f(theta) -> (loss, grad)`` over the
flat parameter vector. Training runs Adam first for global progress, then
refines with L-BFGS (two-loop recursion, strong Wolfe line search). The
best iterate seen anywhere is what comes back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError

__all__ = [
    "AdamState",
    "adam_step",
    "LbfgsOptions",
    "LbfgsResult",
    "lbfgs_run",
    "two_stage_train",
    "TwoStageResult",
]


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for Adam."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(lr=lr, m=np.zeros(n), v=np.zeros(n), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state, theta, grad):
    """One bias-corrected Adam update. Returns (state, new theta).

    The state is mutated in place; the returned state is the same object.
    Non-finite gradients abort with the current iteration index attached.
    """
    if not np.all(np.isfinite(grad)):
        raise NumericsError(
            f"non-finite gradient at Adam step {state.step}", iteration=state.step
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    return state, theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class LbfgsOptions:
    m_hist: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 25
    tol: float = 1e-8


@dataclass
class LbfgsResult:
    theta: np.ndarray
    loss: float
    iterations: int
    status: str  # converged | max-iterations | line-search-failure
    n_evals: int = 0


def _two_loop(grad, s_list, y_list, rho_list):
    """L-BFGS two-loop recursion; empty history gives exactly -grad."""
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _strong_wolfe(evaluator, theta, f0, g0, direction, opts, counter):
    """Bracket/zoom line search for the strong Wolfe conditions.

    Returns (alpha, f, g) at the accepted point, or None on failure.
    Non-finite trial values are treated as overshoot.
    """
    d_dot_g0 = float(np.dot(g0, direction))
    if d_dot_g0 >= 0:
        return None  # not a descent direction

    def phi(alpha):
        counter[0] += 1
        f, g = evaluator(theta + alpha * direction)
        return f, g, float(np.dot(g, direction))

    c1, c2 = opts.c1, opts.c2
    alpha_prev, f_prev, dphi_prev = 0.0, f0, d_dot_g0
    alpha = 1.0
    alpha_max = 1e10
    f_alpha = g_alpha = None

    for i in range(opts.max_line_search):
        f_alpha, g_alpha, dphi = phi(alpha)
        if not np.isfinite(f_alpha):
            # overshoot into bad territory: zoom between last good and here
            result = _zoom(
                phi, alpha_prev, f_prev, dphi_prev, alpha, f0, d_dot_g0, opts,
            )
            return result
        if f_alpha > f0 + c1 * alpha * d_dot_g0 or (i > 0 and f_alpha >= f_prev):
            return _zoom(
                phi, alpha_prev, f_prev, dphi_prev, alpha, f0, d_dot_g0, opts,
            )
        if abs(dphi) <= -c2 * d_dot_g0:
            return alpha, f_alpha, g_alpha
        if dphi >= 0:
            return _zoom(phi, alpha, f_alpha, dphi, alpha_prev, f0, d_dot_g0, opts)
        alpha_prev, f_prev, dphi_prev = alpha, f_alpha, dphi
        alpha = min(2.0 * alpha, alpha_max)
    return None


def _zoom(phi, lo, f_lo, dphi_lo, hi, f0, d_dot_g0, opts):
    """Shrink [lo, hi] until the strong Wolfe conditions hold at a point."""
    c1, c2 = opts.c1, opts.c2
    for _ in range(opts.max_line_search):
        alpha = 0.5 * (lo + hi)
        if alpha == lo or alpha == hi:
            return None
        f_alpha, g_alpha, dphi = phi(alpha)
        if not np.isfinite(f_alpha) or f_alpha > f0 + c1 * alpha * d_dot_g0 or f_alpha >= f_lo:
            hi = alpha
            continue
        if abs(dphi) <= -c2 * d_dot_g0:
            return alpha, f_alpha, g_alpha
        if dphi * (hi - lo) >= 0:
            hi = lo
        lo, f_lo, dphi_lo = alpha, f_alpha, dphi
    return None


def lbfgs_run(evaluator, theta0, max_iters, tol=1e-8, options=None, callback=None):
    """Minimize with L-BFGS until the gradient max-norm is below ``tol``.

    Stops on convergence, the iteration cap, or a failed line search; in
    every case the best iterate seen is returned (line-search failure is a
    status, not an exception).
    """
    opts = options or LbfgsOptions()
    gtol = tol if tol is not None else opts.tol
    theta = np.asarray(theta0, dtype=np.float64).copy()
    counter = [1]
    f, g = evaluator(theta)
    best_f, best_theta = f, theta.copy()

    s_list, y_list, rho_list = [], [], []
    status = "max-iterations"
    iterations = 0
    for _ in range(max_iters):
        if np.max(np.abs(g)) <= gtol:
            status = "converged"
            break
        direction = _two_loop(g, s_list, y_list, rho_list)
        hit = _strong_wolfe(evaluator, theta, f, g, direction, opts, counter)
        if hit is None:
            status = "line-search-failure"
            break
        alpha, f_new, g_new = hit
        step_vec = alpha * direction
        y_vec = g_new - g
        sy = float(np.dot(step_vec, y_vec))
        if sy > 1e-12 * (np.linalg.norm(step_vec) * np.linalg.norm(y_vec) + 1e-300):
            s_list.append(step_vec)
            y_list.append(y_vec)
            rho_list.append(1.0 / sy)
            if len(s_list) > opts.m_hist:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        theta = theta + step_vec
        f, g = f_new, g_new
        iterations += 1
        if f < best_f:
            best_f, best_theta = f, theta.copy()
        if callback is not None:
            callback(iterations, f, theta)
    else:
        if max_iters > 0 and np.max(np.abs(g)) <= gtol:
            status = "converged"
    if max_iters == 0 and np.max(np.abs(g)) <= gtol:
        status = "converged"
    return LbfgsResult(best_theta, best_f, iterations, status, counter[0])


@dataclass
class TwoStageResult:
    theta: np.ndarray
    loss: float
    adam_loss: float
    lbfgs: LbfgsResult | None
    diverged: bool = False


def two_stage_train(
    evaluator,
    theta0,
    adam_iters,
    lr,
    lbfgs_cap,
    callback=None,
    lbfgs_options=None,
    divergence_limit=1e12,
):
    """Adam for ``adam_iters`` updates, then L-BFGS refinement.

    ``callback(stage, iteration, loss, theta)`` fires once per accepted
    iterate. The final loss never exceeds the best loss seen in either
    stage. Divergence (non-finite or huge loss) stops training and flags
    the result instead of raising.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    state = AdamState.fresh(theta.size, lr)
    best_f = np.inf
    best_theta = theta.copy()
    diverged = False

    f = None
    for it in range(adam_iters):
        f, g = evaluator(theta)
        if callback is not None:
            callback("adam", it, f, theta)
        if not np.isfinite(f) or f > divergence_limit:
            diverged = True
            break
        if f < best_f:
            best_f, best_theta = f, theta.copy()
        try:
            state, theta = adam_step(state, theta, g)
        except NumericsError:
            diverged = True
            break

    if not diverged:
        f, g = evaluator(theta)
        if callback is not None:
            callback("adam", adam_iters, f, theta)
        if np.isfinite(f) and f < best_f:
            best_f, best_theta = f, theta.copy()
        elif not np.isfinite(f):
            diverged = True

    adam_loss = best_f
    lbfgs_result = None
    if not diverged and lbfgs_cap > 0:
        def lbfgs_cb(it, loss, th):
            if callback is not None:
                callback("lbfgs", it, loss, th)

        lbfgs_result = lbfgs_run(
            evaluator, theta, lbfgs_cap, options=lbfgs_options, callback=lbfgs_cb
        )
        if lbfgs_result.loss < best_f:
            best_f, best_theta = lbfgs_result.loss, lbfgs_result.theta.copy()

    return TwoStageResult(best_theta, best_f, adam_loss, lbfgs_result, diverged)
