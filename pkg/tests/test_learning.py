import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vkdpc.kernels import CenterSet, KernelSpec, kernel_eval
from vkdpc.learning import (
    ExtendedState,
    VelocityKernelModel,
    build_prediction_matrices,
    build_regressors,
    centers_from_dataset,
    fit_from_dataset,
    fit_velocity_model,
    stack_prediction,
    validate_open_loop,
    velocity_step,
)
from vkdpc.optim import min_norm_lstsq
from vkdpc.plant import Dataset, ExcitationConfig, collect_dataset, generate_excitation

IMQ = KernelSpec()


def lti_dataset(s=5, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=s)
    x = [0.3]
    for k in range(s):
        x.append(0.9 * x[-1] + 0.5 * u[k])
    x = np.array(x)
    return Dataset(x=x, u=u, y=x, d=np.zeros(s))


def zero_model(n=2, m=1, p=1, sc=3):
    rng = np.random.default_rng(0)
    return VelocityKernelModel(
        A_alpha=np.zeros((n, n * sc)), B_alpha=np.zeros((n, m * sc)), C_alpha=np.zeros((p, n * sc)),
        centers_xu=CenterSet(rng.normal(size=(sc, n + m))), centers_x=CenterSet(rng.normal(size=(sc, n))),
        kernel=IMQ, dims=(n, m, p),
    )


def test_extended_state_roundtrip():
    z = ExtendedState.from_measurements([0.4], [1.0, 2.0], [0.5, 1.0])
    np.testing.assert_array_equal(z.as_vector(), [0.4, 0.5, 1.0])
    back = ExtendedState.from_vector(z.as_vector(), 1)
    np.testing.assert_array_equal(back.dx, [0.5, 1.0])


def test_constant_run_gives_zero_regressors(params):
    data = collect_dataset(params, np.zeros(10))
    cxu, cx = centers_from_dataset(collect_dataset(params, np.linspace(0.1, 1, 10)))
    b = build_regressors(data, IMQ, cxu, cx)
    assert not b.Kx_stack.any() and not b.dX_plus.any() and not b.dY_plus.any()


def test_one_center_toy_columns():
    data = Dataset(x=[0.0, 0.5, 0.7, 1.2], u=[1.0, 0.2, -0.4], y=[0.0, 0.5, 0.7, 1.2], d=np.zeros(3))
    cxu, cx = CenterSet([[0.1, 0.3]]), CenterSet([[0.2]])
    b = build_regressors(data, IMQ, cxu, cx)
    assert b.Kx_stack.shape == (2, 2)
    for j, k in enumerate((1, 2)):
        kb = kernel_eval(IMQ, cxu.points[0], np.array([data.x[k, 0], data.u[k, 0]]))
        np.testing.assert_allclose(b.Kx_stack[:, j], [kb * (data.x[k, 0] - data.x[k - 1, 0]),
                                                      kb * (data.u[k, 0] - data.u[k - 1, 0])])
        assert b.dX_plus[0, j] == data.x[k + 1, 0] - data.x[k, 0]
        assert b.dY_plus[0, j] == data.y[k, 0] - data.y[k - 1, 0]


def test_regressor_shape_pendulum(params):
    data = collect_dataset(params, generate_excitation(ExcitationConfig(), 200, seed=0))
    cxu, cx = centers_from_dataset(data, stride=4)
    b = build_regressors(data, IMQ, cxu, cx)
    assert b.Kx_stack.shape == (3 * cxu.size, 199)
    assert b.Ky_stack.shape == (2 * cx.size, 199)
    assert b.dX_plus.shape == (2, 199) and b.dY_plus.shape == (1, 199)


def test_regressor_errors(params):
    short = collect_dataset(params, np.zeros(2))
    with pytest.raises(ValueError):
        build_regressors(short, IMQ, *centers_from_dataset(short))
    data = collect_dataset(params, np.ones(5))
    with pytest.raises(ValueError):
        build_regressors(data, IMQ, CenterSet([[0.0, 1.0]]), CenterSet([[0.0, 1.0]]))


def test_zero_targets_give_zero_coefficients(params):
    data = collect_dataset(params, np.zeros(8))
    cxu, cx = centers_from_dataset(collect_dataset(params, np.linspace(0.1, 1, 8)))
    m = fit_velocity_model(build_regressors(data, IMQ, cxu, cx))
    assert not m.A_alpha.any() and not m.B_alpha.any() and not m.C_alpha.any()


def test_scalar_lti_interpolation():
    data = lti_dataset()
    m = fit_from_dataset(data)
    assert m.report.residual_x <= 1e-8 and m.report.residual_y <= 1e-8
    res = validate_open_loop(m, data, N=3)
    assert res.rmse <= 1e-8


def test_eval_zero_model():
    A, B, C = zero_model().matrices(np.ones(2), np.ones(1))
    np.testing.assert_array_equal(A, np.diag([1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(B, 0.0)
    np.testing.assert_array_equal(C, [[1.0, 0.0, 0.0]])


def test_one_center_scalar_block():
    a = 0.73
    c = np.array([[0.2, -0.1]])
    m = VelocityKernelModel([[a]], [[0.4]], [[1.0]], CenterSet(c), CenterSet(c[:, :1]), IMQ, (1, 1, 1))
    A, B, C = m.matrices(c[0, :1], c[0, 1:])  # at the center K = 1
    assert A[1, 1] == pytest.approx(a) and B[1, 0] == pytest.approx(0.4)
    np.testing.assert_array_equal(C, A[:1])


def test_c_hat_is_first_block_row(model500, rng):
    for _ in range(5):
        A, _, C = model500.matrices(rng.normal(size=2), rng.normal(size=1))
        np.testing.assert_array_equal(C, A[:1])
        assert A[0, 0] == 1.0 and not A[1:, 0].any()


def test_velocity_step_trivial_cases(model500):
    x, u = np.array([0.1, 0.3]), np.array([0.5])
    z0 = ExtendedState(np.zeros(1), np.zeros(2))
    zn, _ = velocity_step(model500, z0, x, u, np.zeros(1))
    assert not zn.as_vector().any()
    z = ExtendedState(np.array([0.7]), np.zeros(2))
    zn, yh = velocity_step(model500, z, x, u, np.zeros(1))
    np.testing.assert_array_equal(zn.as_vector(), z.as_vector())
    assert yh[0] == 0.7


def test_velocity_step_exact_lti():
    data = lti_dataset(s=6)
    m = fit_from_dataset(data)
    # on the training samples the fitted dynamics reproduce the LTI increments
    for k in range(1, data.s - 1):
        z = ExtendedState.from_measurements(data.y[k - 1], data.x[k], data.x[k - 1])
        du = data.u[k] - data.u[k - 1]
        zn, yh = velocity_step(m, z, data.x[k], data.u[k], du)
        assert zn.dx[0] == pytest.approx(0.9 * z.dx[0] + 0.5 * du[0], abs=1e-10)
        assert yh[0] == pytest.approx(data.y[k, 0], abs=1e-10)


def test_structural_exactness(model500, rng):
    for _ in range(10):
        x, u = rng.normal(size=2), rng.normal(size=1)
        z = ExtendedState(rng.normal(size=1), rng.normal(size=2))
        zn, _ = velocity_step(model500, z, x, u, rng.normal(size=1))
        _, _, dhdx = model500.gradients(x, u)
        assert zn.y_prev[0] == pytest.approx(z.y_prev[0] + (dhdx @ z.dx)[0], abs=1e-14)


def test_prediction_lti_n2():
    A = np.array([[1.0, 0.2], [0.0, 0.5]])
    B = np.array([[0.0], [1.0]])
    pm = stack_prediction([A, A], [B, B])
    np.testing.assert_allclose(pm.Psi, np.vstack([A, A @ A]))
    np.testing.assert_allclose(pm.Gamma, np.block([[B, np.zeros((2, 1))], [A @ B, B]]))


def test_prediction_n1_and_ordering():
    A0, B0 = np.eye(2) * 0.5, np.ones((2, 1))
    pm = stack_prediction([A0], [B0])
    np.testing.assert_array_equal(pm.Psi, A0)
    np.testing.assert_array_equal(pm.Gamma, B0)
    a = [np.array([[2.0]]), np.array([[3.0]]), np.array([[5.0]])]
    b = [np.array([[1.0]])] * 3
    pm = stack_prediction(a, b)
    np.testing.assert_array_equal(pm.Psi.ravel(), [2.0, 6.0, 30.0])
    np.testing.assert_array_equal(pm.Gamma, [[1, 0, 0], [3, 1, 0], [15, 5, 1]])
    with pytest.raises(ValueError):
        stack_prediction([], [])


def test_gamma_block_lower_triangular(model500, rng):
    rho = np.column_stack([rng.normal(size=(6, 2)), rng.normal(size=(6, 1))])
    pm = build_prediction_matrices(model500, rho)
    for j in range(6):
        for i in range(j + 1, 6):
            assert not pm.Gamma[pm.block(j), i].any()


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_prediction_consistency(N, seed):
    rng = np.random.default_rng(seed)
    from vkdpc.analytic import AnalyticVelocityModel
    from vkdpc.plant import PendulumParams

    model = AnalyticVelocityModel(PendulumParams())
    rho = np.column_stack([rng.uniform(-2, 2, size=(N, 2)), rng.normal(size=(N, 1))])
    z0 = rng.normal(size=3)
    du = rng.normal(size=(N, 1))
    pm = build_prediction_matrices(model, rho)
    stacked = pm.Psi @ z0 + pm.Gamma @ du.ravel()
    z = ExtendedState.from_vector(z0, 1)
    for j in range(N):
        z, _ = velocity_step(model, z, rho[j, :2], rho[j, 2:], du[j])
        np.testing.assert_allclose(z.as_vector(), stacked[pm.block(j)], atol=1e-12)


def test_interpolation_regime_30_samples(params):
    data = collect_dataset(params, generate_excitation(ExcitationConfig(), 30, seed=3))
    m = fit_from_dataset(data)
    assert m.report.residual_x <= 1e-8 and m.report.residual_y <= 1e-8
    assert validate_open_loop(m, data, N=20).rmse <= 1e-6


def test_zero_model_on_constant_output():
    data = Dataset(x=np.tile([0.0, 0.4], (30, 1)), u=np.zeros(29), y=np.full(30, 0.4), d=np.zeros(29))
    res = validate_open_loop(zero_model(), data, N=5)
    np.testing.assert_array_equal(res.y_hat, 0.4)
    assert res.rmse == 0.0


def test_validate_too_short(model500, params):
    with pytest.raises(ValueError):
        validate_open_loop(model500, collect_dataset(params, np.zeros(10)), N=20)


def test_validation_windows_and_csv(model500, test500, tmp_path):
    res = validate_open_loop(model500, test500, N=20)
    assert len(res.k) == 20 * (test500.s // 20)
    assert res.k[0] == 1 and np.all(np.diff(res.k) == 1)
    path = tmp_path / "v.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,y,y_hat,e" and len(lines) == len(res.k) + 1


def test_fit_pinv_optimality(params, rng):
    data = collect_dataset(params, generate_excitation(ExcitationConfig(), 40, seed=5))
    cxu, cx = centers_from_dataset(data, stride=3)
    b = build_regressors(data, IMQ, cxu, cx)
    m = fit_velocity_model(b)
    AB = np.hstack([m.A_alpha, m.B_alpha])
    base = np.linalg.norm(AB @ b.Kx_stack - b.dX_plus)
    for _ in range(30):
        assert np.linalg.norm((AB + 1e-4 * rng.normal(size=AB.shape)) @ b.Kx_stack - b.dX_plus) >= base


def test_joint_and_separate_fits_agree(params):
    # few centers keep both problems full column rank, so the minimiser is unique
    data = collect_dataset(params, generate_excitation(ExcitationConfig(), 40, seed=6))
    cxu, cx = centers_from_dataset(data, stride=8)
    b = build_regressors(data, IMQ, cxu, cx)
    m = fit_velocity_model(b)
    # joint problem: one block-diagonal design over the stacked unknowns
    n, p = 2, 1
    rx, ry = b.Kx_stack.shape[0], b.Ky_stack.shape[0]
    design = np.zeros((n * rx + p * ry, (n + p) * b.Kx_stack.shape[1]))
    cols = b.Kx_stack.shape[1]
    for i in range(n):
        design[i * rx:(i + 1) * rx, i * cols:(i + 1) * cols] = b.Kx_stack
    design[n * rx:, n * cols:] = b.Ky_stack
    target = np.concatenate([b.dX_plus.ravel(), b.dY_plus.ravel()])[None, :]
    theta = min_norm_lstsq(design, target).X.ravel()
    AB = theta[: n * rx].reshape(n, rx)
    C = theta[n * rx:].reshape(p, ry)
    assert m.report.rank_x == rx and m.report.rank_y == ry
    np.testing.assert_allclose(AB, np.hstack([m.A_alpha, m.B_alpha]), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(C, m.C_alpha, rtol=1e-5, atol=1e-8)


def test_rank_report(model500):
    r = model500.report
    assert r.shape_x == (3 * 500, 499)
    assert r.status in ("ok", "rank_deficient")
    assert (r.status == "ok") == (r.rank_x == 499 and r.rank_y == 499)


def test_model_json_roundtrip(model500, tmp_path, rng):
    path = tmp_path / "m.json"
    model500.save(path)
    back = VelocityKernelModel.load(path)
    for name in ("A_alpha", "B_alpha", "C_alpha"):
        assert np.array_equal(getattr(back, name), getattr(model500, name))
    x, u = rng.normal(size=2), rng.normal(size=1)
    for a, b in zip(back.matrices(x, u), model500.matrices(x, u)):
        assert np.array_equal(a, b)
    import json

    d = json.loads(path.read_text())
    assert set(d) == {"dims", "kernel", "centers_xu", "centers_x", "A_alpha", "B_alpha", "C_alpha"}


def test_centers_stride_and_count(train500):
    cxu, cx = centers_from_dataset(train500, stride=10, count=7)
    assert cxu.size == cx.size == 7
    np.testing.assert_array_equal(cx.points[1], train500.x[10])
    with pytest.raises(ValueError):
        centers_from_dataset(train500, stride=0)


def test_validation_regression_level(model500, test500):
    # first passing run gave 1.23e-6; guard two orders of magnitude above it
    assert validate_open_loop(model500, test500, N=20).rmse <= 1e-4
