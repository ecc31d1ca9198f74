"""On a linear plant the kernel and analytic velocity models give the same controller.

With gravity switched off the pendulum is linear. A single kernel center
with a very wide length scale then represents the velocity form exactly,
so both controllers compute the same input increments.
"""

import numpy as np

from vkdpc import (
    AnalyticVelocityModel,
    ControllerConfig,
    ControllerState,
    ExcitationConfig,
    KernelSpec,
    PendulumParams,
    TerminalCache,
    collect_dataset,
    fit_from_dataset,
    generate_excitation,
    solve_vkdpc,
)


def main() -> None:
    p = PendulumParams(g=0.0)
    data = collect_dataset(p, generate_excitation(ExcitationConfig(), 300, seed=0))
    kernel = fit_from_dataset(data, KernelSpec(sigma2=1e12), count=1)
    cfg = ControllerConfig()

    def rest(y):
        return np.array([0.0, y]), 0.0

    for name, model in (("kernel", kernel), ("analytic", AnalyticVelocityModel(p))):
        ti = TerminalCache(model, rest, cfg.Q, cfg.R, cfg.Z, cfg.dU)(0.3)
        du, _, rep = solve_vkdpc(model, ControllerState.initial(), np.zeros(2), [0.0], cfg, ti)
        print(f"{name:>8}: first increments {np.round(du[:3, 0], 6)}, "
              f"{rep.sqp_iterations} SQP iterations")


if __name__ == "__main__":
    main()
