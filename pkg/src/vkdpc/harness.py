"""
Scenario orchestration: data generation, fitting, validation, terminal
synthesis and closed-loop runs of the kernel and analytic controllers.

A scenario is a TOML file; every field has a default, so an empty file
describes the reference pendulum experiment. Outputs are deterministic
for a fixed scenario unless timing is requested explicitly.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .analytic import AnalyticVelocityModel
from .controller import (
    ControllerConfig,
    ControllerError,
    ControllerState,
    control_update,
)
from .kernels import KernelSpec
from .learning import ValidationResult, VelocityKernelModel, fit_from_dataset, validate_open_loop
from .plant import (
    Dataset,
    DisturbanceProfile,
    ExcitationConfig,
    PendulumParams,
    collect_dataset,
    generate_excitation,
    pendulum_step,
)
from .polytope import Polytope
from .terminal import TerminalCache, TerminalError, TerminalIngredients

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

VARIANTS = ("vkdpc", "vnmpc")
TRAJECTORY_HEADER = ["k", "x1", "x2", "u", "du", "y", "yr", "d", "V", "iters", "ms"]


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario configuration."""


class SimulationError(RuntimeError):
    """A controller or terminal-set failure during a closed-loop run."""

    def __init__(self, message, step: int, variant: str):
        super().__init__(f"{variant}: step {step}: {message}")
        self.step = step
        self.variant = variant


@dataclass
class Scenario:
    plant: PendulumParams = field(default_factory=PendulumParams)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    train_length: int = 2000
    test_length: int = 500
    test_seed: int = 1
    validation_N: int = 20
    kernel: KernelSpec = field(default_factory=KernelSpec)
    center_stride: int = 1
    center_count: int | None = None
    ridge: float = 0.0
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    references: tuple[tuple[int, float], ...] = ((0, 0.5), (150, -0.3), (300, 0.0))
    disturbance: DisturbanceProfile = field(default_factory=lambda: DisturbanceProfile(
        ((0, 0.0), (200, 0.03), (350, -0.02))))
    duration: int = 450
    x0: tuple[float, float] = (0.0, 0.0)
    u0: float = 0.0
    seed: int = 0

    def __post_init__(self):
        refs = tuple((int(k), float(v)) for k, v in self.references)
        if not refs or refs[0][0] != 0:
            raise ScenarioError("the first reference segment must start at step 0")
        starts = [k for k, _ in refs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ScenarioError("reference segment starts must be strictly increasing")
        if self.duration < 0:
            raise ScenarioError("duration must be >= 0")
        if self.duration and starts[-1] >= self.duration:
            raise ScenarioError(
                f"reference segment at step {starts[-1]} starts after the run ends ({self.duration})"
            )
        if self.train_length < 3 or self.test_length < self.validation_N + 1:
            raise ScenarioError("datasets are too short for fitting or validation")
        self.references = refs

    def reference(self, k: int) -> float:
        val = self.references[0][1]
        for start, v in self.references:
            if k < start:
                break
            val = v
        return val

    def segments(self) -> list[tuple[int, int, float]]:
        """``(start, stop, y_r)`` for each reference segment, ``stop`` exclusive."""
        out = []
        for i, (start, v) in enumerate(self.references):
            stop = self.references[i + 1][0] if i + 1 < len(self.references) else self.duration
            out.append((start, stop, v))
        return out


# -- TOML loading ----------------------------------------------------------

_SECTIONS = {
    "plant": {"M", "L", "b", "g", "Ts"},
    "excitation": {"levels", "amplitude", "band", "num_sines", "train_length"},
    "validation": {"length", "seed", "N"},
    "kernel": {"family", "sigma2", "stride", "count", "ridge"},
    "controller": {"N", "Q", "R", "eps", "max_sqp_iters", "z_bound", "du_bound",
                   "terminal_slack_weight", "qp_tol"},
    "scenario": {"duration", "references", "disturbance", "x0", "u0", "seed"},
}


def default_scenario_path() -> Path:
    return Path(str(resources.files("vkdpc") / "data" / "default_scenario.toml"))


def _bound_box(bound, dim: int, name: str) -> Polytope:
    b = np.broadcast_to(np.asarray(bound, dtype=float), (dim,))
    if np.any(b <= 0):
        raise ScenarioError(f"{name} must be positive")
    return Polytope.symmetric_box(b, dim)


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a scenario from a nested dict with the TOML layout."""
    for sec, body in cfg.items():
        if sec not in _SECTIONS:
            raise ScenarioError(f"unknown section [{sec}]")
        if not isinstance(body, dict):
            raise ScenarioError(f"[{sec}] must be a table")
        extra = set(body) - _SECTIONS[sec]
        if extra:
            raise ScenarioError(f"unknown keys in [{sec}]: {', '.join(sorted(extra))}")
    get = lambda sec: cfg.get(sec, {})  # noqa: E731
    try:
        plant = PendulumParams(**get("plant"))
        exc = dict(get("excitation"))
        seed = int(get("scenario").get("seed", 0))
        exc_kwargs = {"seed": seed}
        if "levels" in exc:
            exc_kwargs["base_levels"] = tuple(tuple(v) for v in exc["levels"])
        for key in ("amplitude", "band"):
            if key in exc:
                exc_kwargs[key] = tuple(exc[key])
        if "num_sines" in exc:
            exc_kwargs["num_sines"] = exc["num_sines"]
        excitation = ExcitationConfig(**exc_kwargs)

        k = get("kernel")
        kernel = KernelSpec(family=k.get("family", "inverse-multiquadric"),
                            sigma2=float(k.get("sigma2", 200.0)))

        c = get("controller")
        nz = 3
        ctrl = ControllerConfig(
            N=int(c.get("N", 20)),
            Q=np.asarray(c.get("Q", 1000.0 * np.eye(nz)), dtype=float),
            R=np.asarray(c.get("R", [[10.0]]), dtype=float),
            eps=float(c.get("eps", 1e-8)),
            max_sqp_iters=int(c.get("max_sqp_iters", 30)),
            Z=_bound_box(c.get("z_bound", 2.0), nz, "z_bound"),
            dU=_bound_box(c.get("du_bound", 2.0), 1, "du_bound"),
            terminal_slack_weight=float(c.get("terminal_slack_weight", 0.0)),
            qp_tol=float(c.get("qp_tol", 1e-8)),
        )
        if ctrl.Q.shape != (nz, nz) or ctrl.R.shape != (1, 1):
            raise ScenarioError("controller Q must be 3x3 and R must be 1x1")

        v = get("validation")
        s = get("scenario")
        kwargs = dict(
            plant=plant,
            excitation=excitation,
            train_length=int(exc.get("train_length", 2000)),
            test_length=int(v.get("length", 500)),
            test_seed=int(v.get("seed", seed + 1)),
            validation_N=int(v.get("N", 20)),
            kernel=kernel,
            center_stride=int(k.get("stride", 1)),
            center_count=k.get("count"),
            ridge=float(k.get("ridge", 0.0)),
            controller=ctrl,
            seed=seed,
        )
        if "references" in s:
            kwargs["references"] = tuple(tuple(r) for r in s["references"])
        if "disturbance" in s:
            kwargs["disturbance"] = DisturbanceProfile(tuple(tuple(d) for d in s["disturbance"]))
        if "duration" in s:
            kwargs["duration"] = int(s["duration"])
        if "x0" in s:
            kwargs["x0"] = tuple(float(x) for x in s["x0"])
        if "u0" in s:
            kwargs["u0"] = float(s["u0"])
        return Scenario(**kwargs)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment or "." not in assignment.split("=", 1)[0]:
        raise ScenarioError(f"override {assignment!r} is not of the form section.key=value")
    key, raw = assignment.split("=", 1)
    sec, name = key.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    cfg.setdefault(sec, {})[name] = value


def load_scenario(path=None, overrides=()) -> Scenario:
    """Read a TOML scenario; ``overrides`` are ``section.key=value`` strings."""
    path = default_scenario_path() if path is None else Path(path)
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    for item in overrides:
        _apply_override(cfg, item)
    return scenario_from_dict(cfg)


# -- data and models -------------------------------------------------------

def training_data(scenario: Scenario) -> Dataset:
    u = generate_excitation(scenario.excitation, scenario.train_length, seed=scenario.seed)
    return collect_dataset(scenario.plant, u)


def test_data(scenario: Scenario) -> Dataset:
    u = generate_excitation(scenario.excitation, scenario.test_length, seed=scenario.test_seed)
    return collect_dataset(scenario.plant, u)


def fit_model(scenario: Scenario, data: Dataset | None = None) -> VelocityKernelModel:
    data = training_data(scenario) if data is None else data
    return fit_from_dataset(data, scenario.kernel, stride=scenario.center_stride,
                            count=scenario.center_count, ridge=scenario.ridge)


def validate(scenario: Scenario, model, data: Dataset | None = None) -> ValidationResult:
    data = test_data(scenario) if data is None else data
    return validate_open_loop(model, data, N=scenario.validation_N)


def controller_model(scenario: Scenario, variant: str, model=None):
    if variant == "vkdpc":
        if model is None:
            raise ValueError("the vkdpc variant needs a fitted kernel model")
        return model
    if variant == "vnmpc":
        return AnalyticVelocityModel(scenario.plant)
    raise ValueError(f"unknown controller variant {variant!r}, expected one of {VARIANTS}")


def terminal_cache(scenario: Scenario, model) -> TerminalCache:
    c = scenario.controller
    return TerminalCache(model, scenario.plant.equilibrium, c.Q, c.R, c.Z, c.dU)


# -- closed loop -----------------------------------------------------------

@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    u: float
    du: float
    y: float
    y_r: float
    d: float
    V: float
    sqp_iterations: int
    wall_time: float
    converged: bool
    schedule_residual: float
    stage_cost: float
    terminal_active: bool
    z0: np.ndarray
    report: dict


@dataclass
class SimulationLog:
    variant: str
    records: list[StepRecord] = field(default_factory=list)
    x_final: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.records]).reshape(-1, 2)


def _terminal_active(report, ti: TerminalIngredients, tol: float = 1e-7) -> bool:
    zN = report.z_pred[-1] - ti.r
    return bool(ti.Z_T.violation(zN) > -tol)


def run_closed_loop(scenario: Scenario, variant: str, model=None, cache=None) -> SimulationLog:
    """Simulate ``scenario.duration`` steps of plant and controller.

    The controller sees the measured state, the previous output and the
    active reference. Terminal ingredients are computed once per distinct
    reference value and reused.
    """
    mdl = controller_model(scenario, variant, model)
    cache = terminal_cache(scenario, mdl) if cache is None else cache
    cfg = scenario.controller
    log = SimulationLog(variant)
    x = np.asarray(scenario.x0, dtype=float)
    y_prev = x[1:].copy()
    state = ControllerState.initial(1, scenario.u0)
    for k in range(scenario.duration):
        y_r = scenario.reference(k)
        d = scenario.disturbance.value(k)
        u_before = float(state.u_prev[0])
        try:
            u, report, state = control_update(state, x, y_prev, y_r, cfg, mdl, cache)
        except (ControllerError, TerminalError) as exc:
            raise SimulationError(str(exc), k, variant) from exc
        ti = cache(y_r)
        e0 = report.z0 - ti.r
        log.records.append(StepRecord(
            k=k, x=x.copy(), u=float(u[0]), du=float(u[0]) - u_before, y=float(x[1]),
            y_r=y_r, d=d, V=report.cost, sqp_iterations=report.sqp_iterations,
            wall_time=report.wall_time, converged=report.converged,
            schedule_residual=report.schedule_residual,
            stage_cost=float(e0 @ cfg.Q @ e0),
            terminal_active=_terminal_active(report, ti),
            z0=report.z0.copy(), report=report.to_json_dict(),
        ))
        y_prev = x[1:].copy()
        x, _ = pendulum_step(scenario.plant, x, u[0], d)
    log.x_final = x
    return log


def replay(scenario: Scenario, log: SimulationLog) -> np.ndarray:
    """Plant states obtained by re-applying the logged inputs and disturbances."""
    x = np.asarray(scenario.x0, dtype=float)
    out = []
    for r in log.records:
        out.append(x)
        x, _ = pendulum_step(scenario.plant, x, r.u, r.d)
    return np.array(out).reshape(-1, 2)


# -- metrics ---------------------------------------------------------------

@dataclass
class Metrics:
    segment_errors: list[dict]
    mean_iterations: float | None
    max_iterations: int | None
    all_converged: bool | None
    mean_step_time: float | None
    max_step_time: float | None
    max_constraint_violation: float | None
    value_violation_fraction: float | None
    value_checked_steps: int
    max_output_deviation: float | None = None

    def to_dict(self, timing: bool = True) -> dict:
        d = dict(self.__dict__)
        if not timing:
            d["mean_step_time"] = None
            d["max_step_time"] = None
        return d


def value_decrease_violations(log: SimulationLog, Q_tol: float = 1e-3):
    """Steps violating ``V(k+1) - V(k) <= -l(z0) + 1e-3 (1 + V(k))``.

    Only pairs inside one disturbance-free constant-reference stretch with
    the terminal constraint inactive are checked.

    Returns
    -------
    violations, checked : int
    """
    recs = log.records
    checked = violations = 0
    for a, b in zip(recs, recs[1:]):
        if a.y_r != b.y_r or a.d != 0.0 or b.d != 0.0 or a.terminal_active:
            continue
        checked += 1
        if b.V - a.V > -a.stage_cost + Q_tol * (1.0 + a.V):
            violations += 1
    return violations, checked


def constraint_violation(log: SimulationLog, scenario: Scenario) -> float:
    """Largest violation of ``Z`` by the measured ``z0`` and of ``dU`` by the applied increments."""
    if not log.records:
        return 0.0
    cfg = scenario.controller
    Z0 = np.array([r.z0 for r in log.records])
    du = log.column("du")[:, None]
    vz = (Z0 @ cfg.Z.A.T - cfg.Z.b).max()
    vu = (du @ cfg.dU.A.T - cfg.dU.b).max()
    return float(max(vz, vu, 0.0))


def compute_metrics(scenario: Scenario, log: SimulationLog,
                    other: SimulationLog | None = None) -> Metrics:
    if other is not None and len(other) != len(log):
        raise ValueError(f"log lengths differ: {len(log)} vs {len(other)}")
    n = len(log)
    segs = []
    for start, stop, y_r in scenario.segments():
        if stop <= start or stop > n:
            continue
        y_end = log.records[stop - 1].y
        segs.append({"start": start, "stop": stop, "y_r": y_r, "y_end": y_end,
                     "error": abs(y_end - y_r)})
    if n == 0:
        return Metrics(segs, None, None, None, None, None, None, None, 0,
                       0.0 if other is not None else None)
    iters = log.column("sqp_iterations")
    times = log.column("wall_time")
    bad, checked = value_decrease_violations(log)
    dev = None
    if other is not None:
        dev = float(np.abs(log.column("y") - other.column("y")).max())
    return Metrics(
        segment_errors=segs,
        mean_iterations=float(iters.mean()),
        max_iterations=int(iters.max()),
        all_converged=bool(log.column("converged").all()),
        mean_step_time=float(times.mean()),
        max_step_time=float(times.max()),
        max_constraint_violation=constraint_violation(log, scenario),
        value_violation_fraction=(bad / checked) if checked else None,
        value_checked_steps=checked,
        max_output_deviation=dev,
    )


# -- artifacts -------------------------------------------------------------

def _f(v) -> str:
    return repr(float(v))


def write_trajectory_csv(log: SimulationLog, path, timing: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in log.records:
            w.writerow([r.k, _f(r.x[0]), _f(r.x[1]), _f(r.u), _f(r.du), _f(r.y), _f(r.y_r),
                        _f(r.d), _f(r.V), r.sqp_iterations,
                        f"{1000.0 * r.wall_time:.3f}" if timing else ""])


def write_reports_jsonl(log: SimulationLog, path, timing: bool = False) -> None:
    with open(path, "w") as fh:
        for r in log.records:
            rep = dict(r.report, k=r.k)
            if not timing:
                rep["wall_time"] = None
            fh.write(json.dumps(rep, sort_keys=True) + "\n")


def json_safe(obj):
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pyplot(stamp: bool):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "vkdpc"
    plt.rcParams["svg.fonttype"] = "path"
    return plt, ({} if stamp else {"Date": None})


def plot_validation(result: ValidationResult, path, stamp: bool = False) -> None:
    plt, meta = _pyplot(stamp)
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax1.plot(result.k, result.y, label="y", lw=1.2)
    ax1.plot(result.k, result.y_hat, "--", label=f"{result.N}-step prediction", lw=1.0)
    ax1.set_ylabel("angle [rad]")
    ax1.legend(loc="upper right")
    ax2.plot(result.k, result.error, lw=1.0, color="tab:red")
    ax2.set_ylabel("error [rad]")
    ax2.set_xlabel("k")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def plot_terminal_sets(sets: dict, path, coord: int = 0, value: float = 0.0,
                       stamp: bool = False) -> None:
    """Slices of terminal sets at ``v[coord] == value``, one polygon per entry."""
    plt, meta = _pyplot(stamp)
    fig, ax = plt.subplots(figsize=(5, 5))
    styles = ["-", "--", ":", "-."]
    for i, (label, P) in enumerate(sets.items()):
        poly = P.slice(coord, value).polygon()
        if len(poly):
            closed = np.vstack([poly, poly[:1]])
            ax.plot(closed[:, 0], closed[:, 1], styles[i % len(styles)], label=label)
    ax.set_xlabel("dx1 - r")
    ax.set_ylabel("dx2 - r")
    ax.legend(loc="upper right")
    ax.set_aspect("auto")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def plot_closed_loop(logs: list[SimulationLog], path, stamp: bool = False) -> None:
    plt, meta = _pyplot(stamp)
    fig, (ax1, ax2, ax3) = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    first = logs[0]
    k = first.column("k")
    ax1.step(k, first.column("y_r"), where="post", color="k", lw=0.8, label="reference")
    for log in logs:
        ax1.plot(k, log.column("y"), lw=1.1, label=log.variant)
        ax2.plot(k, log.column("u"), lw=1.0, label=log.variant)
        ax3.plot(k, log.column("du"), lw=1.0, label=log.variant)
    ax1b = ax1.twinx()
    ax1b.step(k, first.column("d"), where="post", color="tab:gray", lw=0.8, ls=":")
    ax1b.set_ylabel("d")
    ax1.set_ylabel("y [rad]")
    ax2.set_ylabel("u [Nm]")
    ax3.set_ylabel("du")
    ax3.set_xlabel("k")
    ax1.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=meta)
    plt.close(fig)


def emit_artifacts(scenario: Scenario, logs: list[SimulationLog], out_dir, *,
                   validation: ValidationResult | None = None,
                   terminal: dict | None = None, timing: bool = False,
                   stamp: bool = False) -> dict:
    """Write trajectories, metrics and plots into ``out_dir``.

    ``terminal`` maps a label to a terminal set; the first entry is written
    to ``terminal_set.csv``. Returns the metrics dictionary that was written.
    """
    if not logs:
        raise ValueError("no simulation logs to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {"variants": {}, "max_output_deviation": None}
    for log in logs:
        write_trajectory_csv(log, out / f"trajectories_{log.variant}.csv", timing)
        write_reports_jsonl(log, out / f"reports_{log.variant}.jsonl", timing)
        metrics["variants"][log.variant] = compute_metrics(scenario, log).to_dict(timing)
    if len(logs) == 2:
        metrics["max_output_deviation"] = compute_metrics(
            scenario, logs[0], logs[1]).max_output_deviation
    if validation is not None:
        validation.to_csv(out / "validation.csv")
        metrics["validation_rmse"] = validation.rmse
        plot_validation(validation, out / "validation.svg", stamp)
    if terminal:
        first = next(iter(terminal.values()))
        first.to_csv(out / "terminal_set.csv")
        first.vertices_to_csv(out / "terminal_vertices.csv")
        plot_terminal_sets(terminal, out / "terminal_set.svg", stamp=stamp)
    if len(logs[0]):
        plot_closed_loop(logs, out / "closed_loop.svg", stamp)
    write_json(metrics, out / "metrics.json")
    return metrics
