import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from encobs.plant import (
    STUDY_PARAMS,
    DcMotorParams,
    LtiPlant,
    dc_motor,
    mrms,
    plant_step,
    run_closed_loop,
)
from encobs.stability.bounds import eta_bound, quantized_matrices, realized_uncertainty, uncertainty_bounds
from encobs.stability.lmi import LmiProblem


def test_integrator_step():
    p = LtiPlant([[0.0]], [[1.0]], [[1.0]], [0.0])
    assert plant_step(p, [1.0], 0.1)[0] == pytest.approx(0.1, abs=1e-15)


def test_hurwitz_free_response_decays():
    cr = dc_motor(STUDY_PARAMS)
    A = cr.A.copy()
    A[2, 2] = -1.0   # make the angle state decay as well
    p = LtiPlant(A, cr.B, cr.C, [1.0, 1.0, 1.0])
    n0 = np.linalg.norm(p.x)
    slowest = np.max(np.linalg.eigvals(A).real)
    assert slowest < 0
    for _ in range(1000):
        p.step([0.0], 0.1)
    # 100 s is many time constants of the slowest mode
    assert np.linalg.norm(p.x) < 1e3 * np.exp(slowest * 100.0) * n0 < 1e-6 * n0


@given(st.floats(1e-3, 0.1), st.floats(-5, 5))
def test_semigroup(delta, u):
    cr = dc_motor()
    a = LtiPlant.from_realization(cr, [0.2, -0.1, 1.0])
    b = LtiPlant.from_realization(cr, [0.2, -0.1, 1.0])
    for _ in range(10):
        a.step([u], delta)
    b.step([u], 10 * delta)
    assert np.allclose(a.x, b.x, rtol=1e-10, atol=1e-12)
    assert a.t == pytest.approx(b.t)


def test_propagation_against_finer_grid():
    cr = dc_motor(STUDY_PARAMS)
    coarse = LtiPlant.from_realization(cr, [0.0, 0.0, 1.0])
    fine = LtiPlant.from_realization(cr, [0.0, 0.0, 1.0])
    for _ in range(50):
        coarse.step([0.7], 1e-3)
    for _ in range(5000):
        fine.step([0.7], 1e-5)
    assert np.linalg.norm(coarse.x - fine.x) / np.linalg.norm(fine.x) < 1e-10


def test_non_positive_substep_rejected():
    with pytest.raises(ValueError):
        plant_step(LtiPlant([[0.0]], [[1.0]], [[1.0]], [0.0]), [1.0], 0.0)


def test_inconsistent_dimensions_rejected():
    with pytest.raises(ValueError):
        LtiPlant(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), [0, 0])


def test_dc_motor_values():
    cr = dc_motor()
    assert cr.A[0, 0] == pytest.approx(-78.517, abs=1e-3)
    assert cr.A[1, 0] == pytest.approx(0.1236 / 0.0007046)
    assert cr.B[0, 0] == pytest.approx(1 / 0.0917)
    assert np.array_equal(cr.K, [[1.65, -6.26, -43.08]])
    assert np.array_equal(cr.L.ravel(), [69.11, 71.91, 24.13])
    assert np.array_equal(cr.C, [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("params", [DcMotorParams(), STUDY_PARAMS])
def test_pole_placement_is_stabilizing(params):
    cr = dc_motor(params)
    assert np.max(np.linalg.eigvals(cr.A + cr.B @ cr.K).real) < 0
    assert np.max(np.linalg.eigvals(cr.A - cr.L @ cr.C).real) < 0


def test_motor_parameters_must_be_positive():
    with pytest.raises(ValueError):
        DcMotorParams(J=0.0)


def test_mrms_constant():
    t = np.linspace(0, 10, 1001)
    assert mrms(np.full_like(t, -0.3), t, 5.0, 10.0) == pytest.approx(0.3, rel=1e-12)


def test_mrms_sine():
    t = np.linspace(0, 20, 200_001)
    w = 2 * np.pi
    assert abs(mrms(2 * np.sin(w * t), t, 10.0, 20.0) - 2 / np.sqrt(2)) < 1e-6


def test_mrms_needs_history():
    t = np.linspace(0, 10, 101)
    with pytest.raises(ValueError):
        mrms(t, t, 5.0, 4.0)
    with pytest.raises(ValueError):
        mrms(t, t[50:], 8.0, 10.0)


def test_ideal_loop_converges(motor):
    trace = run_closed_loop(motor, 0.01, None, "k", "ideal", horizon=50.0, substeps=2)
    assert trace.norm_z[-1] < 1e-6
    assert abs(trace.y[-1, 0]) < 1e-6


def test_horizon_must_be_multiple_of_h(motor):
    with pytest.raises(ValueError):
        run_closed_loop(motor, 0.05, 1e4, "k", "quantized", horizon=0.123)
    with pytest.raises(ValueError):
        run_closed_loop(motor, 0.05, None, "k", "quantized", horizon=1.0)


def test_sampling_instants_exact(motor):
    trace = run_closed_loop(motor, 0.05, 9.88e3, "k^2", "quantized", horizon=1.0, substeps=10)
    assert np.array_equal(trace.t_k, np.arange(20) * 0.05)
    assert np.array_equal(trace.t[::10][:20], trace.t_k)
    assert np.all(np.diff(trace.t) > 0)


def test_zdot_decomposition(motor):
    """zdot = (A_cl + dA_cl) z + (A_c + dA_c) z(t_k) + eta_k inside every interval."""
    h, lam = 0.05, 9.88e3
    trace = run_closed_loop(motor, h, lam, "k^2", "quantized", horizon=1.0, substeps=20)
    q = quantized_matrices(motor, h, lam)
    ru = realized_uncertainty(motor, h, q["A_d"], q["B_d"], q["L_d"], q["C"], q["K"])
    prob = LmiProblem.from_realization(motor)
    Acl, Ac = prob.A_cl + ru.dAcl, prob.A_c + ru.dAc
    z, zk, eta = trace.z, trace.z_k, trace.eta
    last = len(trace.t_k) * trace.substeps
    pred = z[:last] @ Acl.T + zk[:last] @ Ac.T + eta[:last]
    scale = np.max(np.abs(trace.zdot[:last]))
    assert np.max(np.abs(pred - trace.zdot[:last])) < 1e-9 * scale


def test_eta_within_bound(motor):
    h, lam = 0.05, 9.88e3
    trace = run_closed_loop(motor, h, lam, "k^2", "quantized", horizon=5.0)
    M_U = uncertainty_bounds(motor, h, lam).M_U
    for k, eta in enumerate(trace.eta_k):
        lam_k = 1.0 if k == 0 else k**2
        assert np.linalg.norm(eta) <= eta_bound(M_U, 3, 1, lam, lam_k) * (1 + 1e-12)


def test_power_schedule_drives_z_to_zero(motor):
    trace = run_closed_loop(motor, 0.05, 9.88e3, "k^2", "quantized", horizon=20.0, substeps=5)
    assert trace.norm_z[-1] < 1e-3 * trace.norm_z[0]


def test_csv_header(tmp_path, motor):
    trace = run_closed_loop(motor, 0.05, 9.88e3, "k", "quantized", horizon=0.5, substeps=5)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "u1", "y1", "norm_z", "eta_norm"]
    assert len(rows) == 1 + trace.t.size
    assert float(rows[-1][0]) == pytest.approx(0.5)


def test_quantized_and_encrypted_inputs_agree(motor):
    kw = dict(horizon=2.0, seed=9, substeps=5)
    a = run_closed_loop(motor, 0.05, 9.88e3, "k^1.5", "encrypted", **kw)
    b = run_closed_loop(motor, 0.05, 9.88e3, "k^1.5", "quantized", **kw)
    assert np.array_equal(a.u_k, b.u_k)
    assert np.array_equal(a.x, b.x)
