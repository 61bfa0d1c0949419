"""Reference trajectory generation and synthetic noisy observations.

A classical fixed-step RK4 and an adaptive Dormand-Prince 5(4) pair with
dense output supply the ground truth the networks are measured against.
Noise uses a counter-based generator (SplitMix64 feeding Box-Muller) so
realizations are bit-identical across platforms for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericsError

__all__ = [
    "Trajectory",
    "ObservationSet",
    "rk4_integrate",
    "adaptive_rk45_integrate",
    "counter_normals",
    "add_gaussian_noise",
    "NOISE_LEVELS",
]

NOISE_LEVELS = {"low": 0.2, "medium": 1.0, "high": 3.0}


@dataclass
class Trajectory:
    """Times (strictly increasing), states (n x s), and solver metadata."""

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, header=None):
        n, s = self.states.shape
        cols = header or (["t"] + [f"u{j}" for j in range(s)])
        data = np.column_stack([self.times, self.states])
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class ObservationSet:
    """Measured (or synthesized) state samples used by the data-misfit loss."""

    times: np.ndarray
    values: np.ndarray  # (n, m) one column per observed component
    sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.times.shape[0] != self.values.shape[0]:
            raise ConfigError("observation times and values disagree in length")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("observations contain non-finite values")

    @classmethod
    def empty(cls, n_components=1):
        return cls(np.empty(0), np.empty((0, n_components)))

    @property
    def n(self):
        return self.times.shape[0]

    def check_domain(self, domain):
        a, b = domain
        if self.n and (self.times.min() < a - 1e-12 or self.times.max() > b + 1e-12):
            raise ConfigError(
                f"observation times fall outside the problem domain [{a}, {b}]"
            )


def rk4_integrate(problem, h, n_steps, t0=None):
    """Classical fourth-order Runge-Kutta on a fixed grid."""
    if h <= 0:
        raise ConfigError("step size h must be positive")
    t = problem.domain[0] if t0 is None else float(t0)
    y = problem.reduced_y0()
    f = problem.rhs
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, y.size))
    times[0] = t
    states[0] = y
    for i in range(n_steps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(y)):
            raise NumericsError(f"solution blew up at t={t:g}", t=times[i])
        times[i + 1] = t
        states[i + 1] = y
    return Trajectory(times, states, {"method": "rk4", "h": h, "n_steps": n_steps})


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# dense-output polynomial coefficients (quartic in the step fraction)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


def _initial_step(f, t0, y0, f0, b, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / np.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / np.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / np.sqrt(y0.size) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, b - t0)


def adaptive_rk45_integrate(
    problem, rtol=1e-9, atol=1e-9, t_eval=None, t_span=None, max_steps=10_000_000
):
    """Dormand-Prince 5(4) with error control and dense output.

    Returns states at ``t_eval`` (via the pair's quartic interpolant) when
    given, otherwise at the accepted step points. Counts accepted and
    rejected steps in the trajectory metadata.
    """
    if rtol <= 0 or atol <= 0:
        raise ConfigError("rtol and atol must be positive")
    a, b = t_span if t_span is not None else problem.domain
    if b <= a:
        raise ConfigError(f"integration span must run forward, got [{a}, {b}]")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=np.float64)
        if t_eval.size and (t_eval.min() < a - 1e-12 or t_eval.max() > b + 1e-12):
            raise ConfigError("t_eval points fall outside the integration span")

    f = problem.rhs
    t = a
    y = problem.reduced_y0().astype(np.float64)
    k1 = f(t, y)
    h = _initial_step(f, t, y, k1, b, rtol, atol)
    n_accept = n_reject = 0

    out_times = [t]
    out_states = [y.copy()]
    eval_idx = 0
    eval_times = []
    eval_states = []
    if t_eval is not None:
        while eval_idx < t_eval.size and t_eval[eval_idx] <= a + 1e-15:
            eval_times.append(t_eval[eval_idx])
            eval_states.append(y.copy())
            eval_idx += 1

    K = np.empty((7, y.size))
    for _ in range(max_steps):
        if t >= b:
            break
        h = min(h, b - t)
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise NumericsError(
                f"step size underflow at t={t:g} (problem too stiff for this pair)", t=t
            )
        K[0] = k1
        for i in range(1, 7):
            yi = y + h * (K[:i].T @ _A[i])
            K[i] = f(t + _C[i] * h, yi)
        y_new = y + h * (K.T @ _B5)
        err_vec = h * (K.T @ _E)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.linalg.norm(err_vec / scale) / np.sqrt(y.size)
        if not np.isfinite(err):
            err = 2.0  # force rejection and a smaller step
        if err <= 1.0:
            t_new = t + h
            if t_eval is not None:
                # dense output over this accepted segment
                while eval_idx < t_eval.size and t_eval[eval_idx] <= t_new + 1e-15:
                    theta = (t_eval[eval_idx] - t) / h
                    powers = np.array([theta, theta**2, theta**3, theta**4])
                    y_dense = y + h * (K.T @ (_P @ powers))
                    eval_times.append(t_eval[eval_idx])
                    eval_states.append(y_dense)
                    eval_idx += 1
            t, y = t_new, y_new
            k1 = f(t, y)  # FSAL: reuse as the next first stage
            if not np.all(np.isfinite(y)):
                raise NumericsError(f"solution blew up at t={t:g}", t=t)
            out_times.append(t)
            out_states.append(y.copy())
            n_accept += 1
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= factor
        else:
            n_reject += 1
            h *= max(0.2, 0.9 * err ** -0.2)
    else:
        raise NumericsError(f"exceeded {max_steps} steps before reaching t={b:g}")

    meta = {
        "method": "dopri5",
        "rtol": rtol,
        "atol": atol,
        "accepted": n_accept,
        "rejected": n_reject,
    }
    if t_eval is not None:
        return Trajectory(np.array(eval_times), np.array(eval_states), meta)
    return Trajectory(np.array(out_times), np.array(out_states), meta)


# -- reproducible noise ------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x):
    # uint64 wraparound is the algorithm; silence numpy's overflow warning
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def counter_normals(count, seed):
    """``count`` standard normals from a counter-based SplitMix64 + Box-Muller.

    Platform-independent and stateless: draw i depends only on (seed, i).
    """
    idx = np.arange(count, dtype=np.uint64)
    base = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    with np.errstate(over="ignore"):
        c1 = base + (np.uint64(2) * idx) * _GOLDEN
        c2 = base + (np.uint64(2) * idx + np.uint64(1)) * _GOLDEN
    z1 = _splitmix64(c1)
    z2 = _splitmix64(c2)
    u1 = ((z1 >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u2 = ((z2 >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def add_gaussian_noise(traj, sigma, seed, columns=None):
    """Observation set from a trajectory plus sigma-scaled standard normal noise.

    ``columns`` selects which state columns are observed (default: all).
    Independent draws per component per time; deterministic per seed.
    """
    if sigma < 0:
        raise ConfigError("noise level sigma must be nonnegative")
    values = traj.states if columns is None else traj.states[:, columns]
    values = np.array(values, dtype=np.float64)
    if sigma > 0:
        noise = counter_normals(values.size, seed).reshape(values.shape)
        values = values + sigma * noise
    return ObservationSet(traj.times.copy(), values, sigma=sigma, seed=seed)
