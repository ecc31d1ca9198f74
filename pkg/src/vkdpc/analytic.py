"""Exact Jacobians of the pendulum and its velocity-form matrices.

The velocity form is evaluated at the current point ``(x_k, u_k)`` in place
of the unknown mean-value point, which is what the baseline controller uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import PendulumParams


def analytic_gradients(params: PendulumParams, x, u=0.0):
    """Jacobians ``(df/dx, df/du, dh/dx)`` of the pendulum at ``(x, u)``."""
    x2 = float(x[1])
    dfdx = np.array([
        [1.0 - params.b * params.Ts / params.J, -params.gravity_gain * np.cos(x2)],
        [params.Ts, 1.0],
    ])
    dfdu = np.array([[params.input_gain], [0.0]])
    dhdx = np.array([[0.0, 1.0]])
    return dfdx, dfdu, dhdx


def analytic_velocity_matrices(params: PendulumParams, x, u=0.0):
    """``A = [[I, dh/dx], [0, df/dx]]``, ``B = [0; df/du]``, ``C = [I, dh/dx]``."""
    dfdx, dfdu, dhdx = analytic_gradients(params, x, u)
    A = np.zeros((3, 3))
    A[0, 0] = 1.0
    A[0, 1:] = dhdx
    A[1:, 1:] = dfdx
    B = np.zeros((3, 1))
    B[1:] = dfdu
    C = np.hstack([np.eye(1), dhdx])
    return A, B, C


@dataclass(frozen=True)
class AnalyticVelocityModel:
    """Drop-in counterpart of the kernel model built from the true Jacobians."""

    params: PendulumParams
    dims: tuple[int, int, int] = (2, 1, 1)

    @property
    def nz(self) -> int:
        return 3

    def gradients(self, x, u):
        return analytic_gradients(self.params, x, u)

    def matrices(self, x, u):
        return analytic_velocity_matrices(self.params, x, u)
