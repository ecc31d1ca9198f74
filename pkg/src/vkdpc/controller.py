"""
Offset-free velocity-form predictive control by sequential QP.

At each sample the scheduling sequence ``rho = ((x_0, u_0), ..., (x_{N-1}, u_{N-1}))``
is frozen, the prediction ``z_stack = Psi z0 + Gamma du_stack`` is condensed
into a QP in the input increments, and the model is re-simulated with the
optimal inputs to refresh ``rho``. This repeats until ``rho`` stops moving.
The same loop drives the kernel model and the analytic pendulum model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .learning import ExtendedState, build_prediction_matrices
from .optim import INFEASIBLE, OPTIMAL, QpProblem, solve_qp
from .polytope import Polytope
from .terminal import TerminalIngredients


class ControllerError(RuntimeError):
    pass


@dataclass
class ControllerConfig:
    N: int = 20
    Q: np.ndarray = field(default_factory=lambda: 1000.0 * np.eye(3))
    R: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(1))
    eps: float = 1e-8
    max_sqp_iters: int = 30
    Z: Polytope = field(default_factory=lambda: Polytope.symmetric_box(2.0, 3))
    dU: Polytope = field(default_factory=lambda: Polytope.symmetric_box(2.0, 1))
    terminal_slack_weight: float = 0.0
    qp_tol: float = 1e-8

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for name, M in (("Q", self.Q), ("R", self.R)):
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be symmetric positive definite")
        if self.terminal_slack_weight < 0:
            raise ValueError("terminal_slack_weight must be >= 0")


@dataclass(frozen=True)
class ScheduleSequence:
    """``N`` scheduling points, one ``(x, u)`` row each."""

    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", np.atleast_2d(np.asarray(self.rho, dtype=float)))

    @property
    def N(self) -> int:
        return self.rho.shape[0]


def shift_warm_start(prev: ScheduleSequence) -> ScheduleSequence:
    """Drop the first point, shift left and repeat the last one."""
    rho = prev.rho
    return ScheduleSequence(np.vstack([rho[1:], rho[-1:]]))


@dataclass
class ControllerState:
    u_prev: np.ndarray
    x_prev: np.ndarray | None = None
    y_prev: np.ndarray | None = None
    warm_schedule: ScheduleSequence | None = None
    k: int = 0

    @classmethod
    def initial(cls, m: int = 1, u_init=None) -> "ControllerState":
        u = np.zeros(m) if u_init is None else np.atleast_1d(np.asarray(u_init, dtype=float))
        return cls(u_prev=u)


@dataclass
class SolveReport:
    sqp_iterations: int
    cost: float
    qp_status: list
    schedule_residual: float
    terminal_slack_used: float
    wall_time: float
    converged: bool
    du_stack: np.ndarray
    z0: np.ndarray
    z_pred: np.ndarray
    r: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "sqp_iterations": self.sqp_iterations,
            "cost": self.cost,
            "qp_status": list(self.qp_status),
            "schedule_residual": self.schedule_residual,
            "terminal_slack_used": self.terminal_slack_used,
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


def condense_qp(Psi, Gamma, z0, r, config: ControllerConfig,
                ti: TerminalIngredients) -> QpProblem:
    """Condensed QP in the increment stack (plus one terminal slack if enabled).

    The cost is ``sum_{i<N} |z_i - r|_Q^2 + |du_i|_R^2 + |z_N - r|_P^2`` with
    ``z_0`` fixed; its contribution enters only through ``const``.
    """
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    r = np.asarray(r, dtype=float).reshape(-1)
    nz = len(z0)
    N = Psi.shape[0] // nz
    m = Gamma.shape[1] // N
    if Psi.shape != (N * nz, nz) or Gamma.shape != (N * nz, N * m):
        raise ValueError("Psi/Gamma shapes are inconsistent with z0")
    Q, R, P = config.Q, config.R, ti.P
    if Q.shape != (nz, nz) or P.shape != (nz, nz) or R.shape != (m, m):
        raise ValueError("weight dimensions do not match the model")

    Qbar = np.kron(np.eye(N), Q)
    Qbar[-nz:, -nz:] = P
    Rbar = np.kron(np.eye(N), R)
    rbar = np.tile(r, N)
    free = Psi @ z0 - rbar
    QG = Qbar @ Gamma
    H = 2.0 * (Gamma.T @ QG + Rbar)
    f = 2.0 * QG.T @ free
    e0 = z0 - r
    const = float(free @ Qbar @ free + e0 @ Q @ e0)

    Az, bz = config.Z.A, config.Z.b
    G_rows = [np.kron(np.eye(N), Az) @ Gamma]
    h_rows = [np.tile(bz, N) - np.kron(np.eye(N), Az) @ (Psi @ z0)]
    Ad, bd = config.dU.A, config.dU.b
    G_rows.append(np.kron(np.eye(N), Ad))
    h_rows.append(np.tile(bd, N))
    AT, bT = ti.Z_T.A, ti.Z_T.b
    last = slice((N - 1) * nz, N * nz)
    G_rows.append(AT @ Gamma[last])
    h_rows.append(bT - AT @ (Psi[last] @ z0 - r))
    G = np.vstack(G_rows)
    h = np.concatenate(h_rows)

    if config.terminal_slack_weight > 0:
        nT = AT.shape[0]
        slack_col = np.zeros((G.shape[0], 1))
        slack_col[-nT:] = -1.0
        G = np.vstack([np.hstack([G, slack_col]), np.hstack([np.zeros((1, N * m)), [[-1.0]]])])
        h = np.concatenate([h, [0.0]])
        H = np.block([[H, np.zeros((N * m, 1))], [np.zeros((1, N * m)), np.zeros((1, 1))]])
        f = np.concatenate([f, [config.terminal_slack_weight]])
    return QpProblem(H=H, f=f, A_in=G, b_in=h, const=const)


def cold_schedule(x_k, u_prev, N: int) -> ScheduleSequence:
    return ScheduleSequence(np.tile(np.concatenate([x_k, u_prev]), (N, 1)))


def rollout(model, z0, x_k, u_prev, du_stack):
    """Simulate the velocity model along ``du_stack``.

    States are reconstructed by summing predicted increments from ``x_k``.

    Returns
    -------
    rho : ndarray, shape (N, n + m)
    z_pred : ndarray, shape (N, n + p)
        ``z_1 ... z_N``.
    """
    n, m, p = model.dims
    du = np.asarray(du_stack, dtype=float).reshape(-1, m)
    N = du.shape[0]
    u = u_prev + np.cumsum(du, axis=0)
    rho = np.empty((N, n + m))
    z_pred = np.empty((N, n + p))
    z = np.asarray(z0, dtype=float)
    x = np.asarray(x_k, dtype=float)
    for i in range(N):
        rho[i, :n] = x
        rho[i, n:] = u[i]
        A, B, _ = model.matrices(x, u[i])
        z = A @ z + B @ du[i]
        z_pred[i] = z
        x = x + z[p:]
    return rho, z_pred


def solve_vkdpc(model, state: ControllerState, x_k, y_prev, config: ControllerConfig,
                ti: TerminalIngredients):
    """Run the sequential-QP loop for one sample.

    Returns
    -------
    du_stack : ndarray, shape (N, m)
    schedule : ScheduleSequence
        The schedule re-simulated from the last QP solution.
    report : SolveReport
    """
    t0 = time.perf_counter()
    n, m, p = model.dims
    N = config.N
    x_k = np.asarray(x_k, dtype=float).reshape(n)
    y_prev = np.atleast_1d(np.asarray(y_prev, dtype=float))
    x_prev = x_k if state.x_prev is None else state.x_prev
    z0 = ExtendedState.from_measurements(y_prev, x_k, x_prev).as_vector()
    u_prev = np.atleast_1d(state.u_prev)

    if state.warm_schedule is None:
        rho = cold_schedule(x_k, u_prev, N).rho
    else:
        rho = shift_warm_start(state.warm_schedule).rho
        if rho.shape[0] != N:
            raise ValueError("warm schedule length differs from the horizon")

    statuses = []
    residual = np.inf
    converged = False
    sol = None
    z_pred = None
    for it in range(1, config.max_sqp_iters + 1):
        pm = build_prediction_matrices(model, rho)
        qp = condense_qp(pm.Psi, pm.Gamma, z0, ti.r, config, ti)
        sol = solve_qp(qp, tol=config.qp_tol)
        statuses.append(sol.status)
        if sol.status != OPTIMAL:
            if sol.status == INFEASIBLE:
                raise ControllerError(f"QP infeasible at SQP iteration {it}")
            raise ControllerError(
                f"QP solver stopped with status {sol.status} (KKT residual {sol.kkt_residual:.2e})"
            )
        du = sol.v_star[: N * m].reshape(N, m)
        rho_new, z_pred = rollout(model, z0, x_k, u_prev, du)
        residual = float(np.linalg.norm(rho_new - rho))
        rho = rho_new
        if residual <= config.eps:
            converged = True
            break
    slack = float(sol.v_star[N * m]) if config.terminal_slack_weight > 0 else 0.0
    report = SolveReport(
        sqp_iterations=it,
        cost=qp.objective(sol.v_star),
        qp_status=statuses,
        schedule_residual=residual,
        terminal_slack_used=max(slack, 0.0),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        du_stack=du,
        z0=z0,
        z_pred=z_pred,
        r=ti.r,
    )
    return du, ScheduleSequence(rho), report


def solve_vnmpc(params, state: ControllerState, x_k, y_prev, config: ControllerConfig,
                ti: TerminalIngredients):
    """Same loop with the analytic pendulum velocity model."""
    from .analytic import AnalyticVelocityModel

    return solve_vkdpc(AnalyticVelocityModel(params), state, x_k, y_prev, config, ti)


def control_update(state: ControllerState, x_k, y_prev, y_r, config: ControllerConfig,
                   model, terminal):
    """One closed-loop step: solve, apply ``u_k = u_{k-1} + du_0`` and advance the state.

    ``terminal`` maps a reference value to its ingredients (e.g. a
    ``TerminalCache``).
    """
    ti = terminal(y_r)
    du, schedule, report = solve_vkdpc(model, state, x_k, y_prev, config, ti)
    u_k = np.atleast_1d(state.u_prev) + du[0]
    new_state = replace(
        state,
        u_prev=u_k,
        x_prev=np.asarray(x_k, dtype=float).copy(),
        y_prev=np.atleast_1d(np.asarray(y_prev, dtype=float)),
        warm_schedule=schedule,
        k=state.k + 1,
    )
    return u_k, report, new_state
