"""The four benchmark systems: Lorenz, Lotka-Volterra, coupled mass-spring, RLC.

Each problem carries its parameter preset, time domain, initial
conditions, an optional closed-form solution, a plain-numpy right-hand
side in first-order form (for the reference integrators), and residual
expressions in Taylor form (for collocation training). Second-order
problems expose both the raw residual and the order-reduced system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "OdeProblem",
    "LorenzProblem",
    "LotkaVolterraProblem",
    "MassSpringProblem",
    "RlcProblem",
    "PROBLEMS",
    "get_problem",
    "lorenz_rhs",
    "lorenz_energy",
    "lotka_volterra_rhs",
    "mass_spring_matrix",
    "mass_spring_residual",
    "mass_spring_reduction",
    "mass_spring_analytic",
    "rlc_residual",
    "DampingClass",
    "damping_classify",
]


# -- plain functions for each system ----------------------------------------


def lorenz_rhs(state, delta=10.0, rho=15.0, beta=8.0 / 3.0):
    """(dx, dy, dz) for the Lorenz convection system."""
    x, y, z = state
    return (delta * (y - x), x * (rho - z) - y, x * y - beta * z)


def lorenz_energy(state, rho):
    """Energy-like quadratic x^2 + y^2 + (z - rho)^2 used for boundedness."""
    x, y, z = state
    return x * x + y * y + (z - rho) ** 2


def lotka_volterra_rhs(state, alpha=15.0, beta=95.0, gamma=10.5, delta=57.0):
    """(dx, dy) for predator-prey dynamics dx = ax - bxy, dy = -cy + dxy.

    Defaults encode dx/dt = 10x(1.5 - 9.5y), dy/dt = 10y(5.7x - 1.05).
    """
    x, y = state
    return (alpha * x - beta * x * y, -gamma * y + delta * x * y)


def mass_spring_matrix():
    """First-order reduction matrix A of the coupled mass-spring system."""
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-3.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [2.0, 0.0, -2.0, 0.0],
        ]
    )


def mass_spring_residual(t, x, xpp, y, ypp):
    """Second-order residuals (x'' + 3x - y, y'' + 2y - 2x)."""
    return (xpp + 3.0 * x - y, ypp + 2.0 * y - 2.0 * x)


def mass_spring_reduction(u):
    """A @ u for the order-reduced state (x, x', y, y')."""
    return mass_spring_matrix() @ np.asarray(u, dtype=np.float64)


def mass_spring_analytic(t):
    """Closed-form solution x = 2cos t + cos 2t, y = 4cos t - cos 2t."""
    t = np.asarray(t, dtype=np.float64)
    return 2.0 * np.cos(t) + np.cos(2.0 * t), 4.0 * np.cos(t) - np.cos(2.0 * t)


def rlc_residual(t, v, vp, vpp, R=20000.0, L=8.0, C=0.125e-6, forcing=None):
    """C v'' + v'/R + v/L - f(t) for the parallel RLC free/forced response."""
    if R == 0 or L == 0:
        raise ConfigError("RLC residual needs R != 0 and L != 0")
    f = 0.0 if forcing is None else forcing(t)
    return C * vpp + vp * (1.0 / R) + v * (1.0 / L) - f


@dataclass(frozen=True)
class DampingClass:
    kind: str  # underdamped | overdamped | critically-damped
    threshold: float


def damping_classify(R, L, C):
    """Free-oscillation regime of the parallel RLC circuit.

    Threshold sqrt(L/(4C)); underdamped for R above it, overdamped below,
    critical at equality (to 1e-12 relative).
    """
    if L <= 0 or C <= 0:
        raise ConfigError("damping classification needs L > 0 and C > 0")
    threshold = float(np.sqrt(L / (4.0 * C)))
    if abs(R - threshold) <= 1e-12 * max(abs(R), threshold):
        kind = "critically-damped"
    elif R > threshold:
        kind = "underdamped"
    else:
        kind = "overdamped"
    return DampingClass(kind, threshold)


# -- problem objects ---------------------------------------------------------


class OdeProblem:
    """Base: dimension components of order 1 or 2 on a fixed time domain."""

    name = "ode"
    dimension = 1
    order = 1

    def __init__(self, domain, u0, v0=None, params=None):
        a, b = float(domain[0]), float(domain[1])
        self.domain = (a, b)
        self.u0 = tuple(float(u) for u in u0)
        self.v0 = None if v0 is None else tuple(float(v) for v in v0)
        self.params = dict(params or {})
        if len(self.u0) != self.dimension:
            raise ConfigError(f"{self.name}: expected {self.dimension} initial values")
        if self.order == 2 and (self.v0 is None or len(self.v0) != self.dimension):
            raise ConfigError(f"{self.name}: order-2 problem needs velocity ICs")

    # reduced first-order view (used by the integrators)

    @property
    def reduced_dimension(self):
        return self.dimension * self.order

    def reduced_y0(self):
        if self.order == 1:
            return np.array(self.u0, dtype=np.float64)
        out = np.empty(2 * self.dimension)
        out[0::2] = self.u0
        out[1::2] = self.v0
        return out

    def output_columns(self):
        """Columns of the reduced state holding the s output components."""
        if self.order == 1:
            return list(range(self.dimension))
        return [2 * j for j in range(self.dimension)]

    def initial_conditions(self):
        """(component, derivative order, value) triples for the IC loss."""
        conds = [(j, 0, u) for j, u in enumerate(self.u0)]
        if self.order == 2:
            conds += [(j, 1, v) for j, v in enumerate(self.v0)]
            conds.sort(key=lambda c: (c[0], c[1]))
        return conds

    def rhs(self, t, state):
        raise NotImplementedError

    def residuals(self, t, outputs):
        """Residual expressions from Taylor-2 network outputs at times t."""
        raise NotImplementedError

    def analytic(self, t):
        """Closed-form solution values (n, dimension) or None."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}(domain={self.domain}, params={self.params})"


class LorenzProblem(OdeProblem):
    name = "lorenz"
    dimension = 3
    order = 1

    def __init__(self, delta=10.0, rho=15.0, beta=8.0 / 3.0,
                 domain=(0.0, 3.0), u0=(-8.0, 7.0, 27.0)):
        super().__init__(domain, u0, params={"delta": delta, "rho": rho, "beta": beta})

    def rhs(self, t, state):
        return np.array(lorenz_rhs(state, **self.params))

    def residuals(self, t, outputs):
        d, r, b = self.params["delta"], self.params["rho"], self.params["beta"]
        x, y, z = outputs
        return [
            x.d1 - d * (y.value - x.value),
            y.d1 - (x.value * (r - z.value) - y.value),
            z.d1 - (x.value * y.value - b * z.value),
        ]

    def energy(self, state):
        return lorenz_energy(state, self.params["rho"])


class LotkaVolterraProblem(OdeProblem):
    name = "lotka-volterra"
    dimension = 2
    order = 1

    def __init__(self, alpha=15.0, beta=95.0, gamma=10.5, delta=57.0,
                 domain=(0.0, 1.0), u0=(0.5, 0.075)):
        super().__init__(
            domain, u0,
            params={"alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta},
        )

    def rhs(self, t, state):
        return np.array(lotka_volterra_rhs(state, **self.params))

    def residuals(self, t, outputs):
        a, b = self.params["alpha"], self.params["beta"]
        g, d = self.params["gamma"], self.params["delta"]
        x, y = outputs
        xy = x.value * y.value
        return [
            x.d1 - (a * x.value - b * xy),
            y.d1 - (d * xy - g * y.value),
        ]


class MassSpringProblem(OdeProblem):
    name = "mass-spring"
    dimension = 2
    order = 2

    def __init__(self, domain=(0.0, 4.0 * np.pi),
                 u0=(3.0, 3.0), v0=(0.0, 0.0)):
        super().__init__(domain, u0, v0, params={})

    def rhs(self, t, state):
        return mass_spring_matrix() @ np.asarray(state, dtype=np.float64)

    def residuals(self, t, outputs):
        x, y = outputs
        r1, r2 = mass_spring_residual(t, x.value, x.d2, y.value, y.d2)
        return [r1, r2]

    def analytic(self, t):
        x, y = mass_spring_analytic(t)
        return np.stack([x, y], axis=1)


class RlcProblem(OdeProblem):
    name = "rlc"
    dimension = 1
    order = 2

    def __init__(self, R=20000.0, L=8.0, C=0.125e-6, forcing=None,
                 domain=(0.0, 0.05), u0=(1.0,), v0=(0.0,)):
        super().__init__(domain, u0, v0, params={"R": R, "L": L, "C": C})
        if R == 0 or L == 0:
            raise ConfigError("RLC circuit needs R != 0 and L != 0")
        self.forcing = forcing

    def rhs(self, t, state):
        R, L, C = self.params["R"], self.params["L"], self.params["C"]
        v, w = state
        f = 0.0 if self.forcing is None else self.forcing(t)
        return np.array([w, (f - w / R - v / L) / C])

    def residuals(self, t, outputs):
        (v,) = outputs
        R, L, C = self.params["R"], self.params["L"], self.params["C"]
        return [rlc_residual(t, v.value, v.d1, v.d2, R=R, L=L, C=C, forcing=self.forcing)]

    def damping(self):
        return damping_classify(self.params["R"], self.params["L"], self.params["C"])

    def analytic(self, t):
        """Underdamped free response for the preset ICs; None when forced."""
        if self.forcing is not None:
            return None
        R, L, C = self.params["R"], self.params["L"], self.params["C"]
        if damping_classify(R, L, C).kind != "underdamped":
            return None
        t = np.asarray(t, dtype=np.float64)
        alpha = 1.0 / (2.0 * R * C)
        omega_d = np.sqrt(1.0 / (L * C) - alpha * alpha)
        v0, vp0 = self.u0[0], self.v0[0]
        b = (vp0 + alpha * v0) / omega_d
        v = np.exp(-alpha * t) * (v0 * np.cos(omega_d * t) + b * np.sin(omega_d * t))
        return v[:, None]


PROBLEMS = {
    "lorenz": LorenzProblem,
    "lotka-volterra": LotkaVolterraProblem,
    "mass-spring": MassSpringProblem,
    "rlc": RlcProblem,
}


def get_problem(name, **overrides):
    """Build a preset by name with optional parameter/domain/IC overrides."""
    if name not in PROBLEMS:
        raise ConfigError(
            f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}"
        )
    return PROBLEMS[name](**overrides)
