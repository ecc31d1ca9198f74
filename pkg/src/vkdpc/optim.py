"""
Dense numerical backends: convex QP, LP, discrete Riccati equation and
minimum-norm least squares.

QPs are written as

    minimize    1/2 v' H v + f' v
    subject to  A_in v <= b_in,   A_eq v == b_eq

and solved with a Mehrotra predictor-corrector interior point method
followed by an active-set polish, so that the returned minimiser is exact
up to round-off whenever the active set is identified correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max_iters"
UNBOUNDED = "unbounded"


def _as_rows(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, n)


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    const: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        H = 0.5 * (H + H.T)
        n = H.shape[0]
        f = np.asarray(self.f, dtype=float).reshape(n)
        if n:
            lam_min = np.linalg.eigvalsh(H)[0]
            if lam_min < -1e-8 * max(1.0, np.abs(H).max()):
                raise ValueError(f"H is not positive semidefinite (min eigenvalue {lam_min:.3e})")
        self.H, self.f = H, f
        self.A_in = _as_rows(self.A_in, n)
        self.b_in = np.zeros(0) if self.b_in is None else np.asarray(self.b_in, dtype=float).reshape(-1)
        self.A_eq = _as_rows(self.A_eq, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).reshape(-1)
        if len(self.b_in) != self.A_in.shape[0] or len(self.b_eq) != self.A_eq.shape[0]:
            raise ValueError("constraint matrices and right-hand sides disagree in length")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, v) -> float:
        """Objective value including the constant offset ``const``."""
        return float(0.5 * v @ self.H @ v + self.f @ v + self.const)


@dataclass
class QpSolution:
    v_star: np.ndarray
    status: str
    kkt_residual: float
    iterations: int
    lam_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residual(p: QpProblem, v, lam_in, lam_eq) -> float:
    """Scaled KKT residual: the max of stationarity, primal feasibility,
    dual feasibility and complementarity, each normalised by the size of
    the data it is built from."""
    Hv = p.H @ v
    Gz = p.A_in.T @ lam_in
    Ey = p.A_eq.T @ lam_eq
    stat = np.abs(Hv + p.f + Gz + Ey).max(initial=0.0)
    stat /= 1.0 + max(np.abs(Hv).max(initial=0.0), np.abs(p.f).max(initial=0.0),
                      np.abs(Gz).max(initial=0.0), np.abs(Ey).max(initial=0.0))
    slack = p.b_in - p.A_in @ v
    bscale = 1.0 + max(np.abs(p.b_in).max(initial=0.0), np.abs(p.b_eq).max(initial=0.0))
    prim = max(np.maximum(-slack, 0.0).max(initial=0.0),
               np.abs(p.A_eq @ v - p.b_eq).max(initial=0.0)) / bscale
    dual = np.maximum(-lam_in, 0.0).max(initial=0.0) / (1.0 + np.abs(lam_in).max(initial=0.0))
    comp = np.abs(lam_in * slack).max(initial=0.0) / (1.0 + np.abs(p.f).max(initial=0.0) + bscale)
    return float(max(stat, prim, dual, comp))


def _step_to_boundary(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-x[neg] / dx[neg])))


def _kkt_solve(K, rhs):
    try:
        return scipy.linalg.solve(K, rhs, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(K, rhs, rcond=None)[0]


def _ipm(p: QpProblem, tol: float, max_iters: int):
    n, mi, me = p.n, p.A_in.shape[0], p.A_eq.shape[0]
    G, h, E, e = p.A_in, p.b_in, p.A_eq, p.b_eq
    x = np.zeros(n)
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(mi)
    y = np.zeros(me)
    scale = 1.0 + max(np.abs(p.H).max(initial=0.0), np.abs(p.f).max(initial=0.0),
                      np.abs(h).max(initial=0.0), np.abs(e).max(initial=0.0))
    reg = 1e-13 * scale
    it = 0
    for it in range(1, max_iters + 1):
        r_d = p.H @ x + p.f + G.T @ z + E.T @ y
        r_p = G @ x + s - h
        r_e = E @ x - e
        mu = s @ z / mi if mi else 0.0
        if (np.abs(r_d).max(initial=0.0) <= tol * scale
                and np.abs(r_p).max(initial=0.0) <= tol * scale
                and np.abs(r_e).max(initial=0.0) <= tol * scale
                and mu <= tol * scale):
            return x, s, z, y, it, True
        if mi and (not np.all(np.isfinite(z)) or z.max() > 1e14 * scale):
            break
        w = z / s
        K = np.zeros((n + me, n + me))
        K[:n, :n] = p.H + (G.T * w) @ G + reg * np.eye(n)
        K[:n, n:] = E.T
        K[n:, :n] = E
        K[n:, n:] = -reg * np.eye(me)

        def newton(r_c):
            rhs_x = -r_d - G.T @ ((-r_c + z * r_p) / s)
            sol = _kkt_solve(K, np.concatenate([rhs_x, -r_e]))
            dx, dy = sol[:n], sol[n:]
            ds = -r_p - G @ dx
            dz = (-r_c - z * ds) / s
            return dx, ds, dz, dy

        # predictor
        dx, ds, dz, dy = newton(s * z)
        if mi:
            a_aff = min(_step_to_boundary(s, ds), _step_to_boundary(z, dz))
            mu_aff = (s + a_aff * ds) @ (z + a_aff * dz) / mi
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            # corrector
            dx, ds, dz, dy = newton(s * z + ds * dz - sigma * mu)
            alpha = 0.99 * min(_step_to_boundary(s, ds), _step_to_boundary(z, dz))
            alpha = min(alpha, 1.0)
        else:
            alpha = 1.0
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        y = y + alpha * dy
        if mi:
            s = np.maximum(s, 1e-300)
            z = np.maximum(z, 1e-300)
    return x, s, z, y, it, False


def _polish(p: QpProblem, x, s, z, y):
    """Re-solve the equality-constrained QP on the active set guessed by the IPM."""
    n = p.n
    active = np.flatnonzero(z > s) if len(z) else np.zeros(0, dtype=int)
    Ga = p.A_in[active]
    Aeq = np.vstack([Ga, p.A_eq])
    beq = np.concatenate([p.b_in[active], p.b_eq])
    k = Aeq.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = p.H
    K[:n, n:] = Aeq.T
    K[n:, :n] = Aeq
    rhs = np.concatenate([-p.f, beq])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    xp = sol[:n]
    lam = np.zeros(len(z))
    lam[active] = sol[n:n + len(active)]
    return xp, lam, sol[n + len(active):]


def solve_qp(p: QpProblem, tol: float = 1e-8, max_iters: int = 100) -> QpSolution:
    """Solve a convex QP.

    ``status`` is ``optimal`` only when the scaled KKT residual is at most
    ``tol``; detected infeasibility is reported, never raised.
    """
    x, s, z, y, iters, converged = _ipm(p, min(tol, 1e-10), max_iters)
    best = (x, z, y, kkt_residual(p, x, z, y), False)
    if converged or np.all(np.isfinite(x)):
        xp, zp, yp = _polish(p, x, s, z, y)
        if np.all(np.isfinite(xp)):
            res = kkt_residual(p, xp, zp, yp)
            if res <= best[3]:
                best = (xp, zp, yp, res, True)
    x, z, y, res, polished = best
    if res <= tol:
        return QpSolution(x, OPTIMAL, res, iters, z, y, polished)
    feas = solve_lp(np.zeros(p.n), p.A_in, p.b_in, p.A_eq, p.b_eq)
    status = INFEASIBLE if feas.status == INFEASIBLE else MAX_ITERS
    return QpSolution(x, status, res, iters, z, y, polished)


@dataclass
class LpSolution:
    x: np.ndarray | None
    value: float
    status: str


def solve_lp(c, A_in=None, b_in=None, A_eq=None, b_eq=None, bounds=None) -> LpSolution:
    """Minimise ``c' v`` subject to linear constraints; variables are free by default."""
    c = np.asarray(c, dtype=float).reshape(-1)
    n = len(c)
    A_in = _as_rows(A_in, n)
    A_eq = _as_rows(A_eq, n)
    res = linprog(
        c,
        A_ub=A_in if A_in.shape[0] else None,
        b_ub=np.asarray(b_in, dtype=float) if A_in.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=np.asarray(b_eq, dtype=float) if A_eq.shape[0] else None,
        bounds=bounds if bounds is not None else [(None, None)] * n,
        method="highs",
    )
    if res.status == 0:
        return LpSolution(res.x, float(res.fun), OPTIMAL)
    if res.status == 2:
        return LpSolution(None, np.inf, INFEASIBLE)
    if res.status == 3:
        return LpSolution(None, -np.inf, UNBOUNDED)
    return LpSolution(None, np.nan, MAX_ITERS)


class RiccatiError(RuntimeError):
    pass


def riccati_residual(A, B, Q, R, P) -> np.ndarray:
    BtP = B.T @ P
    return A.T @ P @ A - P + Q - A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)


def lqr_gain(A, B, R, P) -> np.ndarray:
    """``K = -(R + B' P B)^{-1} B' P A`` so that ``A + B K`` is the closed loop."""
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def _riccati_map(A, B, Q, R, P):
    P = A.T @ P @ A + Q + A.T @ P @ B @ lqr_gain(A, B, R, P)
    return 0.5 * (P + P.T)


def solve_dare(A, B, Q, R, max_iters: int = 200, tol: float = 1e-14):
    """Stabilising solution of the discrete algebraic Riccati equation.

    Structure-preserving doubling, falling back to plain Riccati iteration
    if doubling does not converge; finished with two fixed-point sweeps to
    push the residual down to round-off.

    Returns
    -------
    P : ndarray
    K : ndarray
        LQR gain with the ``A + B K`` sign convention.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    I = np.eye(n)

    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = Q.copy()
    P = None
    with np.errstate(all="ignore"):
        for _ in range(max_iters):
            W = I + Gk @ Hk
            try:
                WA = np.linalg.solve(W, Ak)
                WG = np.linalg.solve(W, Gk)
            except np.linalg.LinAlgError:
                break
            H_next = Hk + Ak.T @ Hk @ WA
            Gk = Gk + Ak @ WG @ Ak.T
            Ak = Ak @ WA
            H_next = 0.5 * (H_next + H_next.T)
            if not np.all(np.isfinite(H_next)):
                break
            done = np.abs(H_next - Hk).max() <= tol * max(1.0, np.abs(H_next).max())
            Hk = H_next
            if done:
                P = Hk
                break
    if P is None:
        P = Q.copy()
        with np.errstate(all="ignore"):
            for _ in range(100 * max_iters):
                try:
                    P_next = _riccati_map(A, B, Q, R, P)
                except np.linalg.LinAlgError:
                    P_next = np.full_like(P, np.nan)
                if not np.all(np.isfinite(P_next)):
                    raise RiccatiError("Riccati iteration diverged")
                if np.abs(P_next - P).max() <= tol * max(1.0, np.abs(P_next).max()):
                    P = P_next
                    break
                P = P_next
            else:
                raise RiccatiError("Riccati iteration did not converge")
    for _ in range(2):
        P = _riccati_map(A, B, Q, R, P)
    K = lqr_gain(A, B, R, P)
    rho = max(abs(np.linalg.eigvals(A + B @ K)))
    if not np.isfinite(rho) or rho >= 1.0:
        raise RiccatiError(f"no stabilising solution (closed-loop spectral radius {rho:.6g})")
    return P, K


@dataclass
class LstsqResult:
    X: np.ndarray
    rank: int
    full_rank: bool
    singular_values: np.ndarray


def min_norm_lstsq(M, Y, ridge: float = 0.0) -> LstsqResult:
    """Solve ``X M ~= Y`` in the Frobenius sense with minimum-norm ``X``.

    With ``ridge > 0`` the Tikhonov solution ``Y M'(M M' + ridge I)^{-1}`` is
    returned instead. Singular values below ``max(M.shape) * eps * s_max``
    count as zero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if M.shape[1] != Y.shape[1]:
        raise ValueError(f"M has {M.shape[1]} columns but Y has {Y.shape[1]}")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    rcond = max(M.shape) * np.finfo(float).eps
    if ridge == 0:
        # divide-and-conquer SVD inside LAPACK; same minimiser, about half the time
        Xt, _, rank, sv = scipy.linalg.lstsq(M.T, Y.T, cond=rcond, lapack_driver="gelsd",
                                             check_finite=False)
        return LstsqResult(Xt.T, int(rank), int(rank) == min(M.shape), sv)
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    rank = int((sv > rcond * (sv[0] if sv.size else 0.0)).sum())
    X = ((Y @ Vt.T) * (sv / (sv**2 + ridge))) @ U.T
    return LstsqResult(X, rank, rank == min(M.shape), sv)
