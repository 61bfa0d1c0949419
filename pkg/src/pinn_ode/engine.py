"""Composite loss assembly, training loop, and error metrics.

The loss is the weighted sum of data misfit, ODE residuals at collocation
points, and initial-condition misfit, exactly as the training objective
requires; one reverse sweep per iteration yields the parameter gradient.
Training runs the two-stage schedule and produces a ``TrainReport`` with
full loss histories, periodic relative-L2 samples, and the final
trajectory against the reference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Tape
from .errors import ConfigError, NumericsError
from .integrators import ObservationSet, Trajectory, adaptive_rk45_integrate, add_gaussian_noise
from .optimizers import LbfgsOptions, two_stage_train

__all__ = [
    "CollocationSet",
    "LossWeights",
    "ObservationSet",
    "TrainConfig",
    "TrainReport",
    "LossEvaluator",
    "ode_residual_loss",
    "data_loss",
    "ic_loss",
    "total_loss",
    "train",
    "l2_relative_error",
    "l2_relative_error_per_component",
    "make_synthetic_observations",
    "reference_trajectory",
    "save_report",
]


@dataclass(frozen=True)
class CollocationSet:
    """Times where the ODE residual is penalized."""

    points: np.ndarray
    strategy: str = "uniform-grid"
    seed: int = 0

    @classmethod
    def build(cls, domain, n, strategy="uniform-grid", seed=0):
        a, b = domain
        if n < 1:
            raise ConfigError("collocation set needs at least one point")
        if strategy == "uniform-grid":
            points = np.linspace(a, b, n)
        elif strategy == "uniform-random":
            rng = np.random.default_rng(seed)
            points = np.sort(rng.uniform(a, b, n))
        else:
            raise ConfigError(f"unknown collocation strategy: {strategy!r}")
        return cls(points, strategy, seed)

    @property
    def n(self):
        return self.points.size


def _per_component(values, dim, label):
    if values is None:
        return np.ones(dim)
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (dim,):
        raise ConfigError(f"{label} per-component weights need length {dim}")
    if np.any(arr < 0):
        raise ConfigError(f"{label} weights must be nonnegative")
    return arr


@dataclass(frozen=True)
class LossWeights:
    """Global and per-component weights for the three loss terms."""

    data: float = 1.0
    ode: float = 1.0
    ic: float = 1.0
    data_per: tuple | None = None
    ode_per: tuple | None = None
    ic_per: tuple | None = None

    def __post_init__(self):
        for w, label in ((self.data, "data"), (self.ode, "ode"), (self.ic, "ic")):
            if w < 0:
                raise ConfigError(f"global {label} weight must be nonnegative")


def _forward(problem, spec, theta, t, tape, want_derivatives=True):
    outs = net.forward(spec, theta, t, tape=tape, want_derivatives=want_derivatives)
    if len(outs) != problem.dimension:
        raise ValueError(
            f"network emits {len(outs)} components, problem needs {problem.dimension}"
        )
    return outs


def _check_finite_outputs(outs, t):
    for out in outs:
        v = ad.value_of(out.value)
        finite = np.isfinite(v)
        if not np.all(finite):
            bad = np.asarray(t)[~np.asarray(finite)][:1]
            raise NumericsError(
                f"network output is non-finite at t={float(bad[0]):g}", t=float(bad[0])
            )


def ode_residual_loss(problem, spec, theta, colloc, weights, tape=None, outputs=None):
    """Weighted mean-square ODE residual over the collocation points."""
    if colloc.n == 0:
        raise ConfigError("collocation set is empty")
    t = colloc.points
    outs = outputs if outputs is not None else _forward(problem, spec, theta, t, tape)
    _check_finite_outputs(outs, t)
    w = _per_component(weights.ode_per, problem.dimension, "ode")
    loss = None
    for wj, r in zip(w, problem.residuals(t, outs)):
        term = ad.mean(r * r)
        term = term if wj == 1.0 else term * wj
        loss = term if loss is None else loss + term
    return loss


def data_loss(observations, spec, theta, weights, tape=None, domain=None, outputs=None):
    """Weighted mean-square misfit against observations; 0 when there are none."""
    if observations is None or observations.n == 0:
        return 0.0
    if domain is not None:
        observations.check_domain(domain)
    m = observations.values.shape[1]
    outs = (
        outputs
        if outputs is not None
        else net.forward(spec, theta, observations.times, tape=tape, want_derivatives=False)
    )
    w = _per_component(weights.data_per, m, "data")
    loss = None
    for j in range(m):
        misfit = outs[j].value - observations.values[:, j]
        term = ad.mean(misfit * misfit)
        term = term if w[j] == 1.0 else term * w[j]
        loss = term if loss is None else loss + term
    return loss


def ic_loss(problem, spec, theta, weights, tape=None, outputs=None):
    """Initial-condition misfit with the per-term 1/s normalization.

    s counts every initial condition of the problem (derivative conditions
    included for second-order systems). Conditions pinned exactly by a
    hard-constraint output transform contribute nothing and are skipped.
    ``outputs``, when given, are Taylor triples already evaluated at t0.
    """
    conditions = problem.initial_conditions()
    s = len(conditions)
    kinds = spec.transform().kinds
    soft = [c for c in conditions if kinds[c[0]] != "hard-ic"]
    w = _per_component(weights.ic_per, s, "ic")
    if not soft:
        return 0.0
    outs = outputs
    if outs is None:
        t0 = problem.domain[0]
        need_derivative = any(order > 0 for _, order, _ in soft)
        outs = net.forward(
            spec, theta, np.array([t0]), tape=tape, want_derivatives=need_derivative
        )
    loss = None
    for idx, (comp, order, value) in enumerate(conditions):
        if kinds[comp] == "hard-ic":
            continue
        pred = outs[comp].value if order == 0 else outs[comp].d1
        misfit = ad.mean(pred) - value  # single-point array -> scalar
        term = (misfit * misfit) * (w[idx] / s)
        loss = term if loss is None else loss + term
    return loss


def _split_taylor(out, start, stop):
    return ad.Taylor2(
        ad.slice1d(out.value, start, stop),
        None if out.d1 is None else ad.slice1d(out.d1, start, stop),
        None if out.d2 is None else ad.slice1d(out.d2, start, stop),
    )


@dataclass
class TotalLoss:
    value: float
    grad: np.ndarray
    components: dict


def total_loss(problem, spec, theta, colloc, observations, weights):
    """Composite weighted loss and its parameter gradient in one sweep.

    The residual and initial-condition terms share a single forward pass:
    t0 is prepended to the collocation points and sliced back out.
    """
    theta = np.asarray(theta, dtype=np.float64)
    tape = Tape()
    comps = {}
    total = None

    l_data = (
        data_loss(observations, spec, theta, weights, tape=tape, domain=problem.domain)
        if weights.data != 0.0
        else 0.0
    )
    comps["data"] = float(ad.value_of(l_data))
    if weights.data != 0.0 and not _is_zero(l_data):
        total = _acc(total, l_data * weights.data if weights.data != 1.0 else l_data)

    kinds = spec.transform().kinds
    soft_ic = weights.ic != 0.0 and any(
        kinds[comp] != "hard-ic" for comp, _, _ in problem.initial_conditions()
    )

    l_ode = 0.0
    l_ic = 0.0
    if weights.ode != 0.0 and soft_ic:
        points = np.concatenate(([problem.domain[0]], colloc.points))
        outs = _forward(problem, spec, theta, points, tape)
        _check_finite_outputs(outs, points)
        colloc_view = [_split_taylor(o, 1, None) for o in outs]
        ic_view = [_split_taylor(o, 0, 1) for o in outs]
        l_ode = ode_residual_loss(
            problem, spec, theta, colloc, weights, tape=tape, outputs=colloc_view
        )
        l_ic = ic_loss(problem, spec, theta, weights, tape=tape, outputs=ic_view)
    elif weights.ode != 0.0:
        l_ode = ode_residual_loss(problem, spec, theta, colloc, weights, tape=tape)
        if weights.ic != 0.0:
            l_ic = ic_loss(problem, spec, theta, weights, tape=tape)
    elif weights.ic != 0.0:
        l_ic = ic_loss(problem, spec, theta, weights, tape=tape)

    comps["ode"] = float(ad.value_of(l_ode))
    if weights.ode != 0.0 and not _is_zero(l_ode):
        total = _acc(total, l_ode * weights.ode if weights.ode != 1.0 else l_ode)
    comps["ic"] = float(ad.value_of(l_ic))
    if weights.ic != 0.0 and not _is_zero(l_ic):
        total = _acc(total, l_ic * weights.ic if weights.ic != 1.0 else l_ic)

    if total is None:
        comps["total"] = 0.0
        return TotalLoss(0.0, np.zeros(theta.size), comps)
    comps["total"] = float(ad.value_of(total))
    grad = ad.backward(tape, total) if isinstance(total, ad.Node) else np.zeros(theta.size)
    return TotalLoss(comps["total"], grad, comps)


def _is_zero(x):
    return not isinstance(x, ad.Node) and np.ndim(x) == 0 and float(x) == 0.0


def _acc(total, term):
    return term if total is None else total + term


class LossEvaluator:
    """Callable (loss, grad) evaluator that remembers the last components.

    Non-finite evaluations return an infinite loss instead of raising, so
    line searches can back off gracefully; the training loop treats a
    persisting infinite loss as divergence.
    """

    def __init__(self, problem, spec, colloc, observations, weights):
        if observations is not None:
            observations.check_domain(problem.domain)
        self.problem = problem
        self.spec = spec
        self.colloc = colloc
        self.observations = observations
        self.weights = weights
        self.last_components = None
        self.n_evals = 0

    def __call__(self, theta):
        self.n_evals += 1
        try:
            result = total_loss(
                self.problem, self.spec, theta, self.colloc, self.observations, self.weights
            )
        except NumericsError:
            self.last_components = {
                "data": np.inf, "ode": np.inf, "ic": np.inf, "total": np.inf,
            }
            return np.inf, np.zeros(np.size(theta))
        self.last_components = result.components
        return result.value, result.grad


def l2_relative_error(pred, ref):
    """||pred - ref||_2 / ||ref||_2 over all stacked components."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError("prediction and reference have different lengths")
    denom = np.sqrt(np.sum(ref * ref))
    if denom == 0.0:
        raise ValueError("reference trajectory has zero norm; relative error undefined")
    return float(np.sqrt(np.sum((pred - ref) ** 2)) / denom)


def l2_relative_error_per_component(pred, ref):
    """Relative L2 error of each trajectory column."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    return np.array(
        [l2_relative_error(pred[:, j], ref[:, j]) for j in range(ref.shape[1])]
    )


def reference_trajectory(problem, t, rtol=1e-9, atol=1e-9):
    """Component values of the ground-truth solution at times ``t``.

    Uses the closed form when the problem has one, otherwise a tight
    adaptive reference solve with dense output.
    """
    t = np.asarray(t, dtype=np.float64)
    exact = problem.analytic(t)
    if exact is not None:
        return exact
    traj = adaptive_rk45_integrate(problem, rtol=rtol, atol=atol, t_eval=t)
    return traj.states[:, problem.output_columns()]


def make_synthetic_observations(problem, n, sigma, seed, rtol=1e-9, atol=1e-9):
    """Noisy samples of the reference solution at n equally spaced times."""
    a, b = problem.domain
    times = np.linspace(a, b, n)
    values = reference_trajectory(problem, times, rtol=rtol, atol=atol)
    return add_gaussian_noise(Trajectory(times, values), sigma, seed)


@dataclass
class TrainConfig:
    """Optimizer schedule, collocation, observations, and bookkeeping knobs."""

    weights: LossWeights = field(default_factory=LossWeights)
    adam_iters: int = 20000
    learning_rate: float = 1e-3
    lbfgs_cap: int = 15000
    colloc_n: int = 400
    colloc_strategy: str = "uniform-grid"
    observations: ObservationSet | None = None
    seed: int = 0
    eval_points: int = 1000
    error_every: int = 500
    divergence_limit: float = 1e12

    def echo(self):
        d = asdict(self)
        obs = self.observations
        d["observations"] = (
            None if obs is None or obs.n == 0
            else {"n": int(obs.n), "sigma": float(obs.sigma), "seed": obs.seed}
        )
        d["weights"] = asdict(self.weights)
        return d


@dataclass
class TrainReport:
    """Everything a training run produced, losses through final trajectories."""

    problem: str
    seed: int
    config: dict
    adam_history: np.ndarray  # (k, 4): data, ode, ic, total per iteration
    lbfgs_history: np.ndarray
    error_history: list  # (global iteration, total relative L2)
    eval_times: np.ndarray
    prediction: np.ndarray  # (n, s)
    reference: np.ndarray  # (n, s)
    l2_total: float
    l2_per_component: np.ndarray
    final_components: dict
    wall_seconds: float
    diverged: bool
    status: str
    theta: np.ndarray

    @property
    def final_loss(self):
        return self.final_components.get("total", np.nan)

    def loss_rows(self):
        """(stage, iteration, data, ode, ic, total) rows across both stages."""
        rows = []
        for i, rec in enumerate(self.adam_history):
            rows.append(("adam", i, *rec))
        offset = len(self.adam_history)
        for i, rec in enumerate(self.lbfgs_history):
            rows.append(("lbfgs", offset + i, *rec))
        return rows

    def to_json_dict(self):
        return {
            "problem": self.problem,
            "seed": self.seed,
            "config": self.config,
            "status": self.status,
            "diverged": self.diverged,
            "wall_seconds": self.wall_seconds,
            "final_components": {k: float(v) for k, v in self.final_components.items()},
            "l2_total": float(self.l2_total),
            "l2_per_component": [float(v) for v in self.l2_per_component],
            "adam_iterations": int(len(self.adam_history)),
            "lbfgs_iterations": int(len(self.lbfgs_history)),
            "error_history": [[int(i), float(e)] for i, e in self.error_history],
        }


def train(problem, spec, config):
    """Two-stage training run; deterministic for a fixed config and seed.

    Divergence (non-finite or runaway loss) stops the run and flags the
    report instead of raising; everything recorded up to that point is
    preserved.
    """
    start = time.perf_counter()
    colloc = CollocationSet.build(
        problem.domain, config.colloc_n, config.colloc_strategy, config.seed
    )
    theta0 = net.init_params(spec, config.seed)
    evaluator = LossEvaluator(
        problem, spec, colloc, config.observations, config.weights
    )

    eval_times = np.linspace(*problem.domain, config.eval_points)
    reference = reference_trajectory(problem, eval_times)

    adam_rows = []
    lbfgs_rows = []
    error_history = []
    lbfgs_offset = config.adam_iters

    def record_error(global_iter, theta):
        pred = net.predict(spec, theta, eval_times)
        try:
            error_history.append((global_iter, l2_relative_error(pred, reference)))
        except ValueError:
            pass

    def callback(stage, iteration, loss, theta):
        comps = evaluator.last_components
        if comps is None or abs(comps.get("total", np.nan) - loss) > 1e-9 * max(
            1.0, abs(loss)
        ):
            snapshot = total_loss(
                problem, spec, theta, colloc, config.observations, config.weights
            )
            comps = snapshot.components
        rec = (comps["data"], comps["ode"], comps["ic"], comps["total"])
        if stage == "adam":
            # rows 0..adam_iters-1 precede each update; the last row is terminal
            adam_rows.append(rec)
            global_iter = iteration
        else:
            lbfgs_rows.append(rec)
            global_iter = lbfgs_offset + iteration
        if config.error_every > 0 and global_iter % config.error_every == 0:
            record_error(global_iter, theta)

    result = two_stage_train(
        evaluator,
        theta0,
        config.adam_iters,
        config.learning_rate,
        config.lbfgs_cap,
        callback=callback,
        divergence_limit=config.divergence_limit,
    )

    theta_star = result.theta
    prediction = net.predict(spec, theta_star, eval_times)
    try:
        l2_total = l2_relative_error(prediction, reference)
        l2_per = l2_relative_error_per_component(prediction, reference)
    except ValueError:
        l2_total = np.nan
        l2_per = np.full(problem.dimension, np.nan)

    final = total_loss(
        problem, spec, theta_star, colloc, config.observations, config.weights
    )

    status = "diverged" if result.diverged else "completed"
    if result.lbfgs is not None and not result.diverged:
        status = f"completed ({result.lbfgs.status})"

    return TrainReport(
        problem=problem.name,
        seed=config.seed,
        config=config.echo(),
        adam_history=np.array(adam_rows) if adam_rows else np.empty((0, 4)),
        lbfgs_history=np.array(lbfgs_rows) if lbfgs_rows else np.empty((0, 4)),
        error_history=error_history,
        eval_times=eval_times,
        prediction=prediction,
        reference=reference,
        l2_total=l2_total,
        l2_per_component=l2_per,
        final_components=final.components,
        wall_seconds=time.perf_counter() - start,
        diverged=result.diverged,
        status=status,
        theta=theta_star,
    )


def save_report(report, outdir, component_names=None):
    """Write report JSON plus loss/error/solution CSVs; returns the manifest."""
    import json
    import os

    os.makedirs(outdir, exist_ok=True)
    names = component_names or [f"u{j}" for j in range(report.prediction.shape[1])]
    manifest = {}

    loss_path = os.path.join(outdir, "loss_history.csv")
    with open(loss_path, "w") as fh:
        fh.write("stage,iteration,data,ode,ic,total\n")
        for stage, it, d, o, i, tot in report.loss_rows():
            fh.write(f"{stage},{it},{d!r},{o!r},{i!r},{tot!r}\n")
    manifest["loss_history"] = loss_path

    err_path = os.path.join(outdir, "error_history.csv")
    with open(err_path, "w") as fh:
        fh.write("iteration,l2_relative_error\n")
        for it, e in report.error_history:
            fh.write(f"{it},{e!r}\n")
    manifest["error_history"] = err_path

    sol_path = os.path.join(outdir, "solution.csv")
    with open(sol_path, "w") as fh:
        header = ["t"] + [f"{n}_pred" for n in names] + [f"{n}_ref" for n in names]
        fh.write(",".join(header) + "\n")
        for i, t in enumerate(report.eval_times):
            row = [repr(float(t))]
            row += [repr(float(v)) for v in report.prediction[i]]
            row += [repr(float(v)) for v in report.reference[i]]
            fh.write(",".join(row) + "\n")
    manifest["solution"] = sol_path

    report_path = os.path.join(outdir, "report.json")
    payload = report.to_json_dict()
    payload["files"] = manifest
    with open(report_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    manifest["report"] = report_path
    return manifest
