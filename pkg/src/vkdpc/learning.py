"""
Kernelized velocity-form models.

The velocity state is ``z_k = (y_{k-1}, dx_k)`` with ``dx_k = x_k - x_{k-1}``.
Its dynamics are

    z_{k+1} = A(x_k, u_k) z_k + B(x_k, u_k) du_k,     y_k = C(x_k) z_k

with

    A = [[I, C_a (I_n (x) Kx(x))], [0, A_a (I_n (x) Kxu(x, u))]]
    B = [[0], [B_a (I_m (x) Kxu(x, u))]]
    C = [I, C_a (I_n (x) Kx(x))]

where ``Kx`` and ``Kxu`` are kernel-section vectors over recorded data
points. Only the coefficient matrices ``A_a``, ``B_a``, ``C_a`` are learned;
the identity blocks are structural and exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import CenterSet, KernelSpec, kernel_matrix, kernel_vector
from .optim import min_norm_lstsq
from .plant import Dataset


@dataclass(frozen=True)
class ExtendedState:
    y_prev: np.ndarray
    dx: np.ndarray

    @classmethod
    def from_vector(cls, z, p: int) -> "ExtendedState":
        z = np.asarray(z, dtype=float).reshape(-1)
        return cls(z[:p].copy(), z[p:].copy())

    @classmethod
    def from_measurements(cls, y_prev, x, x_prev) -> "ExtendedState":
        return cls(np.atleast_1d(np.asarray(y_prev, dtype=float)),
                   np.asarray(x, dtype=float) - np.asarray(x_prev, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.y_prev), np.atleast_1d(self.dx)])


@dataclass
class FitReport:
    rank_x: int
    rank_y: int
    shape_x: tuple[int, int]
    shape_y: tuple[int, int]
    residual_x: float
    residual_y: float
    wall_time: float = 0.0

    @property
    def status(self) -> str:
        full = self.rank_x == min(self.shape_x) and self.rank_y == min(self.shape_y)
        return "ok" if full else "rank_deficient"


@dataclass
class VelocityKernelModel:
    A_alpha: np.ndarray
    B_alpha: np.ndarray
    C_alpha: np.ndarray
    centers_xu: CenterSet
    centers_x: CenterSet
    kernel: KernelSpec
    dims: tuple[int, int, int]
    report: FitReport | None = field(default=None, compare=False)

    def __post_init__(self):
        n, m, p = self.dims
        sx, sxu = self.centers_x.size, self.centers_xu.size
        if self.centers_xu.dim != n + m or self.centers_x.dim != n:
            raise ValueError("center dimensions do not match (n + m, n)")
        self.A_alpha = np.asarray(self.A_alpha, dtype=float).reshape(n, n * sxu)
        self.B_alpha = np.asarray(self.B_alpha, dtype=float).reshape(n, m * sxu)
        self.C_alpha = np.asarray(self.C_alpha, dtype=float).reshape(p, n * sx)
        # blocks alpha^{i,j} as (row, col, center) tensors
        self._A3 = self.A_alpha.reshape(n, n, sxu)
        self._B3 = self.B_alpha.reshape(n, m, sxu)
        self._C3 = self.C_alpha.reshape(p, n, sx)

    @property
    def nz(self) -> int:
        n, _, p = self.dims
        return n + p

    def gradients(self, x, u):
        """Kernel estimates of ``df/dx``, ``df/du`` and ``dh/dx`` at ``(x, u)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        kxu = kernel_vector(self.kernel, self.centers_xu, np.concatenate([x, u]))
        kx = kernel_vector(self.kernel, self.centers_x, x)
        return self._A3 @ kxu, self._B3 @ kxu, self._C3 @ kx

    def matrices(self, x, u):
        """``(A_hat, B_hat, C_hat)`` at the scheduling point ``(x, u)``."""
        n, m, p = self.dims
        dfdx, dfdu, dhdx = self.gradients(x, u)
        A = np.zeros((p + n, p + n))
        A[:p, :p] = np.eye(p)
        A[:p, p:] = dhdx
        A[p:, p:] = dfdx
        B = np.zeros((p + n, m))
        B[p:] = dfdu
        C = np.hstack([np.eye(p), dhdx])
        return A, B, C

    def to_dict(self) -> dict:
        n, m, p = self.dims
        return {
            "dims": {"n": n, "m": m, "p": p},
            "kernel": self.kernel.to_dict(),
            "centers_xu": self.centers_xu.points.tolist(),
            "centers_x": self.centers_x.points.tolist(),
            "A_alpha": self.A_alpha.tolist(),
            "B_alpha": self.B_alpha.tolist(),
            "C_alpha": self.C_alpha.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VelocityKernelModel":
        dims = (int(d["dims"]["n"]), int(d["dims"]["m"]), int(d["dims"]["p"]))
        return cls(
            A_alpha=np.array(d["A_alpha"], dtype=float),
            B_alpha=np.array(d["B_alpha"], dtype=float),
            C_alpha=np.array(d["C_alpha"], dtype=float),
            centers_xu=CenterSet(d["centers_xu"]),
            centers_x=CenterSet(d["centers_x"]),
            kernel=KernelSpec(d["kernel"]["family"], float(d["kernel"]["sigma2"])),
            dims=dims,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "VelocityKernelModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RegressorBundle:
    """Stacked regressors and targets of the two least-squares problems.

    Column ``j`` corresponds to sample ``k = j + 1`` and pairs ``Kx_stack``
    with ``dx_{k+1}`` and ``Ky_stack`` with ``dy_k``.
    """

    Kx_stack: np.ndarray
    Ky_stack: np.ndarray
    dX_plus: np.ndarray
    dY_plus: np.ndarray
    centers_xu: CenterSet
    centers_x: CenterSet
    kernel: KernelSpec
    dims: tuple[int, int, int]


def centers_from_dataset(data: Dataset, stride: int = 1, count: int | None = None):
    """Centers ``(x_i, u_i)`` and ``x_i`` at ``i = 0, stride, 2 stride, ...`` over the recorded inputs."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(0, data.s, stride)
    if count is not None:
        idx = idx[:count]
    xu = np.hstack([data.x[idx], data.u[idx]])
    return CenterSet(xu), CenterSet(data.x[idx])


def build_regressors(data: Dataset, kernel: KernelSpec, centers_xu: CenterSet,
                     centers_x: CenterSet) -> RegressorBundle:
    n, m, p = data.dims
    s = data.s
    if s < 3:
        raise ValueError(f"dataset too short for identification (s={s}, need >= 3)")
    if centers_xu.dim != n + m or centers_x.dim != n:
        raise ValueError(
            f"center dimensions ({centers_xu.dim}, {centers_x.dim}) do not match ({n + m}, {n})"
        )
    k = np.arange(1, s)
    dx = data.x[k] - data.x[k - 1]
    du = data.u[k] - data.u[k - 1]
    Kxu = kernel_matrix(kernel, centers_xu, np.hstack([data.x[k], data.u[k]]))  # (s_c, s-1)
    Kx = kernel_matrix(kernel, centers_x, data.x[k])
    # (I (x) K) v == kron(v, K): component-major stacking
    Kx_stack = np.vstack(
        [Kxu * dx[:, i] for i in range(n)] + [Kxu * du[:, j] for j in range(m)]
    )
    Ky_stack = np.vstack([Kx * dx[:, i] for i in range(n)])
    dX_plus = (data.x[k + 1] - data.x[k]).T
    dY_plus = (data.y[k] - data.y[k - 1]).T
    return RegressorBundle(Kx_stack, Ky_stack, dX_plus, dY_plus, centers_xu, centers_x,
                           kernel, (n, m, p))


def fit_velocity_model(bundle: RegressorBundle, ridge: float = 0.0) -> VelocityKernelModel:
    """Least-squares coefficients ``[A_a B_a] = dX+ Kx^+`` and ``C_a = dY+ Ky^+``."""
    import time

    t0 = time.perf_counter()
    n, m, p = bundle.dims
    sxu = bundle.centers_xu.size
    fx = min_norm_lstsq(bundle.Kx_stack, bundle.dX_plus, ridge)
    fy = min_norm_lstsq(bundle.Ky_stack, bundle.dY_plus, ridge)
    wall = time.perf_counter() - t0
    AB = fx.X
    report = FitReport(
        rank_x=fx.rank,
        rank_y=fy.rank,
        shape_x=bundle.Kx_stack.shape,
        shape_y=bundle.Ky_stack.shape,
        residual_x=float(np.linalg.norm(AB @ bundle.Kx_stack - bundle.dX_plus)),
        residual_y=float(np.linalg.norm(fy.X @ bundle.Ky_stack - bundle.dY_plus)),
        wall_time=wall,
    )
    return VelocityKernelModel(
        A_alpha=AB[:, : n * sxu],
        B_alpha=AB[:, n * sxu:],
        C_alpha=fy.X,
        centers_xu=bundle.centers_xu,
        centers_x=bundle.centers_x,
        kernel=bundle.kernel,
        dims=(n, m, p),
        report=report,
    )


def fit_from_dataset(data: Dataset, kernel: KernelSpec | None = None, stride: int = 1,
                     count: int | None = None, ridge: float = 0.0) -> VelocityKernelModel:
    kernel = kernel or KernelSpec()
    cxu, cx = centers_from_dataset(data, stride, count)
    return fit_velocity_model(build_regressors(data, kernel, cxu, cx), ridge)


def eval_model_matrices(model, x, u):
    return model.matrices(x, u)


def velocity_step(model, z: ExtendedState, x, u, du):
    """One step of the velocity model; returns ``(z_next, y_hat)`` with ``y_hat = C(x) z``."""
    A, B, C = model.matrices(x, u)
    zv = z.as_vector()
    z_next = A @ zv + B @ np.atleast_1d(np.asarray(du, dtype=float))
    p = model.dims[2]
    return ExtendedState.from_vector(z_next, p), C @ zv


@dataclass
class PredictionMatrices:
    Psi: np.ndarray
    Gamma: np.ndarray
    N: int
    nz: int
    m: int

    def block(self, j: int):
        """Rows of ``z_{j+1}`` in the stacked prediction."""
        return slice(j * self.nz, (j + 1) * self.nz)


def stack_prediction(As, Bs) -> PredictionMatrices:
    """Prediction matrices for ``z_{j+1} = A_j z_j + B_j du_j``, later factors on the left."""
    N = len(As)
    if N < 1:
        raise ValueError("empty schedule")
    nz, m = Bs[0].shape
    Psi = np.zeros((N * nz, nz))
    Gamma = np.zeros((N * nz, N * m))
    prev = np.eye(nz)
    for j in range(N):
        rows = slice(j * nz, (j + 1) * nz)
        prev = As[j] @ prev
        Psi[rows] = prev
        if j:
            up = slice((j - 1) * nz, j * nz)
            Gamma[rows, : j * m] = As[j] @ Gamma[up, : j * m]
        Gamma[rows, j * m:(j + 1) * m] = Bs[j]
    return PredictionMatrices(Psi, Gamma, N, nz, m)


def build_prediction_matrices(model, rho) -> PredictionMatrices:
    """Prediction matrices along the schedule ``rho`` (N rows of ``(x, u)``)."""
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    if rho.shape[0] < 1:
        raise ValueError("empty schedule")
    n = model.dims[0]
    mats = [model.matrices(r[:n], r[n:]) for r in rho]
    return stack_prediction([a for a, _, _ in mats], [b for _, b, _ in mats])


@dataclass
class ValidationResult:
    k: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    error: np.ndarray
    rmse: float
    N: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "y", "y_hat", "e"])
            for k, y, yh, e in zip(self.k, self.y, self.y_hat, self.error):
                w.writerow([int(k), repr(float(y)), repr(float(yh)), repr(float(e))])


def validate_open_loop(model, data: Dataset, N: int = 20) -> ValidationResult:
    """Open-loop ``N``-step output prediction over consecutive windows.

    Each window starts from the measured ``z = (y_{k0-1}, x_{k0} - x_{k0-1})``
    and then runs on the model alone, using the measured inputs and
    scheduling on the model's own reconstructed states.
    """
    n, m, p = model.dims
    s = data.s
    if s + 1 < N + 2:
        raise ValueError(f"dataset too short for N={N} (s={s})")
    ks, ys, yhs = [], [], []
    k0 = 1
    while k0 + N - 1 <= s:
        z = ExtendedState.from_measurements(data.y[k0 - 1], data.x[k0], data.x[k0 - 1])
        x_hat = data.x[k0].copy()
        for j in range(N):
            k = k0 + j
            A, B, C = model.matrices(x_hat, data.u[k] if k < s else data.u[s - 1])
            zv = z.as_vector()
            ks.append(k)
            ys.append(data.y[k, 0] if p == 1 else data.y[k])
            yh = C @ zv
            yhs.append(yh[0] if p == 1 else yh)
            if j < N - 1:
                du = data.u[k] - data.u[k - 1]
                zv = A @ zv + B @ du
                z = ExtendedState.from_vector(zv, p)
                x_hat = x_hat + z.dx
        k0 += N
    y = np.array(ys)
    y_hat = np.array(yhs)
    err = y - y_hat
    rmse = float(np.sqrt(np.mean(err**2)))
    return ValidationResult(np.array(ks), y, y_hat, err, rmse, N)
