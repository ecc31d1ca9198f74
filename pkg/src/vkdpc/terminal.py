"""
Terminal ingredients for a constant output reference.

For ``r = (y_r, 0)`` the terminal weight ``P`` and gain ``K`` come from the
Riccati equation of the velocity model frozen at the steady state
``(x_r, u_r)``; the terminal set is the maximal positively invariant set of
``A_cl = A + B K`` inside the state and increment constraints, expressed in
``v = z - r`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import RiccatiError, solve_dare
from .polytope import Polytope, polytope_pre, polytope_reduce


class TerminalError(RuntimeError):
    pass


class InvariantSetError(TerminalError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass
class TerminalIngredients:
    y_r: float
    r: np.ndarray
    P: np.ndarray
    K: np.ndarray
    Z_T: Polytope
    A_cl: np.ndarray
    A: np.ndarray
    B: np.ndarray
    x_r: np.ndarray
    u_r: np.ndarray
    iterations: int = 0


def reference_vector(y_r, n: int) -> np.ndarray:
    """``r = (y_r, 0_n)``."""
    return np.concatenate([np.atleast_1d(np.asarray(y_r, dtype=float)), np.zeros(n)])


def compute_terminal_cost_gain(A, B, Q, R, y_r=None):
    """Terminal weight and gain satisfying the Lyapunov decrease with equality.

    Raises
    ------
    TerminalError
        If ``(A, B)`` admits no stabilising Riccati solution.
    """
    try:
        return solve_dare(A, B, Q, R)
    except (RiccatiError, np.linalg.LinAlgError) as exc:
        where = "" if y_r is None else f" at reference y_r={y_r!r}"
        raise TerminalError(f"pair (A, B) is not stabilisable{where}: {exc}") from exc


def lyapunov_slack(A_cl, P, Q, R, K) -> float:
    """``lambda_max(A_cl' P A_cl - P + Q + K' R K)``; non-positive means the decrease holds."""
    M = A_cl.T @ P @ A_cl - P + Q + K.T @ R @ K
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).max())


def max_invariant_set(A_cl, K, Z: Polytope, dU: Polytope, max_iters: int = 100,
                      tol: float = 1e-9, return_iterations: bool = False):
    """Maximal positively invariant subset of ``Z`` with ``K v`` in ``dU``.

    Iterates ``O_{i+1} = O_i  intersect  pre(O_i)`` from
    ``O_0 = Z  intersect  {v : K v in dU}`` until two iterates coincide.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    rho = max(abs(np.linalg.eigvals(A_cl)))
    if rho >= 1.0:
        raise ValueError(f"A_cl is not Schur stable (spectral radius {rho:.6g})")
    omega = Z.intersect(dU.linear_preimage(K))
    if omega.is_empty():
        raise InvariantSetError("initial admissible set is empty")
    omega = polytope_reduce(omega, tol)
    for it in range(1, max_iters + 1):
        nxt = polytope_reduce(omega.intersect(polytope_pre(A_cl, omega)), tol)
        if omega.is_subset(nxt, tol):
            return (nxt, it) if return_iterations else nxt
        omega = nxt
    raise InvariantSetError(f"no convergence after {max_iters} iterations", last_iterate=omega)


def compute_terminal_ingredients(model, y_r: float, x_r, u_r, Q, R, Z: Polytope,
                                 dU: Polytope, max_iters: int = 100) -> TerminalIngredients:
    """Terminal weight, gain and set for the reference ``y_r``.

    ``Z`` and ``dU`` are given in absolute ``z`` and ``du`` coordinates; the
    returned set lives in ``v = z - r`` coordinates.
    """
    n = model.dims[0]
    A, B, _ = model.matrices(np.asarray(x_r, dtype=float), np.atleast_1d(u_r))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P, K = compute_terminal_cost_gain(A, B, Q, R, y_r)
    A_cl = A + B @ K
    r = reference_vector(y_r, n)
    Z_v = Z.translate(-r)
    try:
        Z_T, iters = max_invariant_set(A_cl, K, Z_v, dU, max_iters=max_iters,
                                       return_iterations=True)
    except InvariantSetError as exc:
        raise TerminalError(f"terminal set at y_r={y_r!r}: {exc}") from exc
    return TerminalIngredients(
        y_r=float(y_r), r=r, P=P, K=K, Z_T=Z_T, A_cl=A_cl, A=A, B=B,
        x_r=np.asarray(x_r, dtype=float), u_r=np.atleast_1d(np.asarray(u_r, dtype=float)),
        iterations=iters,
    )


@dataclass
class ConditionResult:
    name: str
    worst_slack: float
    passed: bool
    witness: np.ndarray | None = None


@dataclass
class CertificateReport:
    conditions: list[ConditionResult] = field(default_factory=list)
    sampled_lyapunov_slack: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def summary(self) -> str:
        lines = [f"{c.name}: worst slack {c.worst_slack:+.3e} {'ok' if c.passed else 'FAIL'}"
                 for c in self.conditions]
        if self.sampled_lyapunov_slack is not None:
            lines.append(f"lyapunov at sampled schedules: {self.sampled_lyapunov_slack:+.3e}")
        return "\n".join(lines)


def _worst(values, points):
    i = int(np.argmax(values))
    return float(values[i]), points[i]


def check_assumption1(ti: TerminalIngredients, Q, R, Z: Polytope, dU: Polytope,
                      sample_count: int = 200, tol: float = 1e-8, seed: int = 0,
                      Z_T: Polytope | None = None, K=None) -> CertificateReport:
    """Check the four terminal conditions at the frozen reference point.

    The set conditions are checked at every vertex of ``Z_T`` plus
    ``sample_count`` random convex combinations of vertices. ``Z_T`` and
    ``K`` may be overridden to probe deliberately broken ingredients.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Z_T = ti.Z_T if Z_T is None else Z_T
    K = ti.K if K is None else np.atleast_2d(np.asarray(K, dtype=float))
    A_cl = ti.A + ti.B @ K
    V = Z_T.vertices()
    rng = np.random.default_rng(seed)
    if sample_count and len(V):
        w = rng.dirichlet(np.ones(len(V)), size=sample_count)
        pts = np.vstack([V, w @ V])
    else:
        pts = V
    Z_v = Z.translate(-ti.r)
    report = CertificateReport()

    img = pts @ A_cl.T
    s_a = (img @ Z_T.A.T - Z_T.b).max(axis=1)
    worst, wit = _worst(s_a, pts)
    report.conditions.append(ConditionResult("invariance", worst, worst <= tol, wit))

    KV = pts @ K.T
    s_b = (KV @ dU.A.T - dU.b).max(axis=1)
    worst, wit = _worst(s_b, pts)
    report.conditions.append(ConditionResult("input_admissible", worst, worst <= tol, wit))

    s_c = (pts @ Z_v.A.T - Z_v.b).max(axis=1)
    worst, wit = _worst(s_c, pts)
    report.conditions.append(ConditionResult("state_admissible", worst, worst <= tol, wit))

    lyap = lyapunov_slack(A_cl, ti.P, Q, R, K)
    report.conditions.append(ConditionResult("lyapunov", lyap, lyap <= tol, None))
    return report


def sampled_lyapunov_slack(model, ti: TerminalIngredients, Q, R, points) -> float:
    """Worst Lyapunov slack over scheduling points ``(x, u)`` met in closed loop."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = model.dims[0]
    worst = -np.inf
    for rho in np.atleast_2d(points):
        A, B, _ = model.matrices(rho[:n], rho[n:])
        worst = max(worst, lyapunov_slack(A + B @ ti.K, ti.P, Q, R, ti.K))
    return float(worst)


class TerminalCache:
    """Ingredients keyed by reference value, computed on first use."""

    def __init__(self, model, steady_state, Q, R, Z: Polytope, dU: Polytope):
        self.model = model
        self.steady_state = steady_state
        self.Q, self.R, self.Z, self.dU = Q, R, Z, dU
        self._store: dict[float, TerminalIngredients] = {}

    def __call__(self, y_r: float) -> TerminalIngredients:
        key = float(y_r)
        if key not in self._store:
            x_r, u_r = self.steady_state(key)
            self._store[key] = compute_terminal_ingredients(
                self.model, key, x_r, u_r, self.Q, self.R, self.Z, self.dU
            )
        return self._store[key]

    def __len__(self):
        return len(self._store)

    def items(self):
        return self._store.items()
