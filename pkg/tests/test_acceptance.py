"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts, so a failing criterion also fails the test.
"""
import math
import time

import numpy as np
import pytest

from encobs import crypto
from encobs.controller import IntegerRealization
from encobs.crypto import CryptoParams
from encobs.experiments.config import load_config
from encobs.experiments.runner import run
from encobs.matrix_time import (
    ContinuousRealization,
    discretize_zoh,
    expm,
    logm,
    virtual_realization,
)
from encobs.plant import run_closed_loop
from encobs.quantizer import GainSchedule, quantize
from encobs.stability.audit import first_entry, lyapunov_audit, residual_set
from encobs.stability.bounds import (
    Inadmissible,
    disturbance_energy_bound,
    eta_bound,
    fro,
    quantized_matrices,
    realized_uncertainty,
    uncertainty_bounds,
)
from encobs.stability.certificate import check_certificate, min_quantization_gain, solve_feasibility

H_STUDY = 0.05
LAM_STUDY = 9.88e3
REPORTED_LAMBDA_MIN = {0.01: 4.16e3, 0.03: 6.01e3, 0.05: 9.88e3, 0.07: 2.15e4, 0.083: 1.92e5}


# -- 1. crypto correctness ------------------------------------------------------------

def test_criterion_01_crypto_round_trips(acceptance):
    t0 = time.perf_counter()
    params = CryptoParams.with_bits(64, 4, e_max=1, seed=0)
    rng = np.random.default_rng(2024)
    key = crypto.keygen(params, rng)
    G = 1 << 16
    trials, chunk = 100_000, 10_000
    failures = 0
    counts = dict.fromkeys(("encrypt", "add", "scalar_mul", "external_product"), 0)
    for _ in range(trials // chunk):
        m1 = rng.integers(-2**20, 2**20, chunk)
        m2 = rng.integers(-2**20, 2**20, chunk)
        c1 = crypto.encrypt(m1, G, key, rng)
        c2 = crypto.encrypt(m2, G, key, rng)
        failures += int(np.sum(crypto.decrypt_scaled(c1, G, key) != m1))
        counts["encrypt"] += chunk
        failures += int(np.sum(crypto.decrypt_scaled(crypto.add(c1, c2), G, key) != m1 + m2))
        counts["add"] += chunk
        for block in range(0, chunk, 100):
            k = int(rng.integers(-2**8, 2**8))
            part = c1[block:block + 100]
            got = crypto.decrypt_scaled(crypto.scalar_mul(k, part), G, key)
            failures += int(np.sum(got != k * m1[block:block + 100]))
        counts["scalar_mul"] += chunk
        mult = rng.integers(-2**8, 2**8, chunk)
        gsw = crypto.encrypt_gsw(mult, key, rng)
        prod = crypto.external_product(gsw, c2)
        failures += int(np.sum(crypto.decrypt_scaled(prod, G, key) != mult * m2))
        counts["external_product"] += chunk
    small = CryptoParams(q=16, n_key=1, omega=2, d=4, e_max=0)
    c = crypto.LweCiphertext(np.array([13, 0], dtype=small.dtype), small,
                             crypto.NoiseBudget(0, 1))
    digits = [int(v) for v in crypto.decompose(c).digits[0::2][:4]]
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and digits == [1, 0, 1, 1] and elapsed < 30
    acceptance(1, ok, f"{sum(counts.values())} trials ({trials} per operation), {failures} "
                      f"failures, D(13)={digits}, {elapsed:.1f} s")
    assert ok


# -- 2. ciphertext/plaintext equivalence --------------------------------------------

def test_criterion_02_equivalence(acceptance, motor):
    t0 = time.perf_counter()
    kw = dict(horizon=1000 * H_STUDY, seed=7)
    enc = run_closed_loop(motor, H_STUDY, LAM_STUDY, GainSchedule.power(2), "encrypted", **kw)
    ref = run_closed_loop(motor, H_STUDY, LAM_STUDY, GainSchedule.power(2), "quantized", **kw)
    mismatches = 0
    for a, b in zip(enc.codes, ref.codes):
        for key in ("X", "Y", "U", "P"):
            if [int(v) for v in a[key]] != [int(v) for v in b[key]]:
                mismatches += 1
    same_signals = np.array_equal(enc.u_k, ref.u_k) and np.array_equal(enc.chi_d, ref.chi_d)
    elapsed = time.perf_counter() - t0
    ok = len(enc.codes) == 1000 and mismatches == 0 and same_signals and elapsed < 120
    acceptance(2, ok, f"{len(enc.codes)} samples, {mismatches} integer mismatches, "
                      f"u/chi identical={same_signals}, {elapsed:.1f} s")
    assert ok


# -- 3. discretization fidelity ----------------------------------------------------------

def _rk4_zoh(A, B, h, substeps=10_000):
    n = A.shape[0]
    X = np.hstack([np.eye(n), np.zeros_like(B)])

    def f(X):
        return np.hstack([A @ X[:, :n], A @ X[:, n:] + B])

    dt = h / substeps
    for _ in range(substeps):
        k1 = f(X)
        k2 = f(X + 0.5 * dt * k1)
        k3 = f(X + 0.5 * dt * k2)
        k4 = f(X + dt * k3)
        X = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return X[:, :n], X[:, n:]


def test_criterion_03_discretization(acceptance, motor):
    worst_zoh = worst_log = worst_virtual = 0.0
    for h in (0.01, 0.03, 0.05, 0.07):
        d = discretize_zoh(motor, h)
        Phi, Gam = _rk4_zoh(motor.A, np.hstack([motor.B, motor.L]), h)
        for got, ref in ((d.A_d, Phi), (d.B_d, Gam[:, :1]), (d.L_d, Gam[:, 1:])):
            worst_zoh = max(worst_zoh, np.linalg.norm(got - ref) / np.linalg.norm(ref))
        E = expm(motor.A * h)
        worst_log = max(worst_log, np.linalg.norm(expm(logm(E)) - E) / np.linalg.norm(E),
                        np.linalg.norm(logm(E) - motor.A * h) / np.linalg.norm(motor.A * h))
        R = IntegerRealization.quantize(motor, h, LAM_STUDY).as_real()
        v = virtual_realization(R["A_d"], R["B_d"], R["L_d"], h)
        back = discretize_zoh(ContinuousRealization(A=v.A_v, B=v.B_v, C=motor.C, L=v.L_v,
                                                    K=motor.K), h)
        for got, ref in ((back.A_d, R["A_d"]), (back.B_d, R["B_d"]), (back.L_d, R["L_d"])):
            worst_virtual = max(worst_virtual, float(np.max(np.abs(got - ref))))
    rng = np.random.default_rng(0)
    for _ in range(200):
        M = 0.5 * rng.uniform(-1, 1, (4, 4))
        E = expm(M)
        worst_log = max(worst_log, np.linalg.norm(expm(logm(E)) - E) / np.linalg.norm(E),
                        np.linalg.norm(logm(E) - M) / max(1.0, np.linalg.norm(M)))
    ok = worst_zoh <= 1e-8 and worst_log <= 1e-10 and worst_virtual <= 1e-8
    acceptance(3, ok, f"zoh vs 1e4-step RK4 {worst_zoh:.1e}, expm/logm {worst_log:.1e}, "
                      f"virtual round trip {worst_virtual:.1e}")
    assert ok


# -- 4. uncertainty bound soundness ----------------------------------------------------

def test_criterion_04_uncertainty_bounds(acceptance, motor):
    rng = np.random.default_rng(4)
    violations = cells = draws = 0
    worst = 0.0
    skipped = []
    for h in (0.01, 0.03, 0.05, 0.07):
        d = discretize_zoh(motor, h)
        for lam in (1e3, 1e4, 1e5):
            try:
                b = uncertainty_bounds(motor, h, lam, realized=False)
            except Inadmissible:
                skipped.append((h, lam))
                continue
            cells += 1
            for _ in range(100):
                def pert(M, theta):
                    return M + rng.uniform(-0.5, 0.5, M.shape) / theta
                ru = realized_uncertainty(motor, h, pert(d.A_d, lam * lam), pert(d.B_d, lam),
                                          pert(d.L_d, lam), pert(motor.C, lam),
                                          pert(motor.K, lam))
                ratios = (fro(ru.dA) / b.delta_A, fro(ru.dB) / b.delta_B,
                          fro(ru.dL) / b.delta_L, fro(ru.dAc) / b.phi)
                worst = max(worst, *ratios)
                violations += sum(r > 1 for r in ratios)
                draws += 1
    ok = violations == 0 and cells > 0
    acceptance(4, ok, f"{cells} cells x 100 draws, {violations} violations, worst "
                      f"measured/bound {worst:.2f}, inadmissible cells {skipped}")
    assert ok


# -- 5. feasibility frontier ----------------------------------------------------------

def test_criterion_05_frontier(acceptance, certs, motor_problem):
    required = {h: certs.plain(h) is not None for h in (0.01, 0.03, 0.05, 0.07)}
    scan = {}
    for h in (0.08, 0.083, 0.09, 0.1, 0.12, 0.15):
        scan[h] = certs.plain(h) is not None
    feasible = [h for h, f in {**required, **scan}.items() if f]
    frontier = max(feasible) if feasible else None
    ok = all(required.values()) and not scan[0.15] and frontier is not None \
        and 0.07 <= frontier <= 0.15
    acceptance(5, ok, f"feasible at {sorted(feasible)}; largest feasible h on the grid "
                      f"{frontier} (reported 0.083)")
    assert ok


# -- 6. Table-1 trend -----------------------------------------------------------------

def test_criterion_06_lambda_min(acceptance, certs, motor):
    lams = {}
    for h in (0.01, 0.03, 0.05, 0.07):
        cert = certs.best_gamma(h)
        lams[h] = min_quantization_gain(cert, motor, h) if cert is not None else math.inf
    endpoint = certs.best_gamma(0.083)
    end = min_quantization_gain(endpoint, motor, 0.083) if endpoint is not None else None
    hs = sorted(lams)
    monotone = all(lams[a] <= lams[b] for a, b in zip(hs, hs[1:]))
    within = {h: 0.1 <= lams[h] / REPORTED_LAMBDA_MIN[h] <= 10 for h in hs}
    ok = monotone and all(within.values())
    detail = ", ".join(f"h={h}: {lams[h]:.3g} (reported {REPORTED_LAMBDA_MIN[h]:.3g})" for h in hs)
    acceptance(6, ok, f"{detail}; nondecreasing={monotone}; h=0.083: "
                      f"{'infeasible' if end is None else f'{end:.3g}'} (reported 1.92e5)")
    assert ok


# -- shared runs for 7-10 ---------------------------------------------------------------

@pytest.fixture(scope="module")
def admissible(certs, motor, motor_problem):
    """Largest-gamma certificate at h=0.05, its minimal gain and the realized uncertainty."""
    cert = certs.best_gamma(H_STUDY)
    lam = min_quantization_gain(cert, motor, H_STUDY)
    q = quantized_matrices(motor, H_STUDY, lam)
    ru = realized_uncertainty(motor, H_STUDY, q["A_d"], q["B_d"], q["L_d"], q["C"], q["K"])
    delta0 = np.hstack([ru.dAcl, ru.dAc, np.zeros_like(ru.dAcl)])
    return cert, lam, delta0, uncertainty_bounds(motor, H_STUDY, lam)


@pytest.fixture(scope="module")
def k2_run(admissible, motor):
    _, lam, _, _ = admissible
    return run_closed_loop(motor, H_STUDY, lam, GainSchedule.power(2), "encrypted",
                           horizon=53.0, seed=0)


@pytest.fixture(scope="module")
def table2_runs(tmp_path_factory):
    cfg = load_config(preset="table2")
    out = []
    for tag in ("a", "b"):
        d = tmp_path_factory.mktemp(f"table2_{tag}")
        t0 = time.perf_counter()
        report = run(cfg, d)
        out.append((d, report, time.perf_counter() - t0))
    return out


PRESET_ORDER = ("frontier", "table1", "table2", "table3", "fig3", "fig4", "fig5")


@pytest.fixture(scope="module")
def preset_suite(table2_runs, tmp_path_factory):
    """Every shipped preset once, single process; table2 is the first determinism run."""
    root = tmp_path_factory.mktemp("suite")
    done = {}
    for name in PRESET_ORDER:
        if name == "table2":
            _, report, secs = table2_runs[0]
        else:
            t0 = time.perf_counter()
            report = run(load_config(preset=name), root / name)
            secs = time.perf_counter() - t0
        done[name] = (report, secs)
    return done


def _strictly_decreasing(values):
    return all(a > b for a, b in zip(values, values[1:]))


# -- 7. asymptotic stability and MRMS trends ---------------------------------------------

def test_criterion_07_stability_and_mrms(acceptance, admissible, k2_run, table2_runs,
                                         preset_suite):
    from encobs.plant import mrms
    _, lam, _, _ = admissible
    decay = k2_run.norm_z[-1] / k2_run.norm_z[0]
    m_adm = mrms(k2_run.y[:, 0], k2_run.t, 50.0, 53.0)
    rows2 = {r["schedule"]: r["mrms"] for r in table2_runs[0][1].rows}
    order2 = [rows2[GainSchedule.from_dict(s).label()]
              for s in ("k^0.4", "k", "k^1.5", "k^2", "k^3")]
    report3 = preset_suite["table3"][0]
    order3 = [r["mrms"] for r in report3.rows]
    ratio = rows2["k^0.4"] / rows2["k^2"]
    ok = (decay <= 1e-3 and m_adm <= 1e-3 and ratio >= 100
          and _strictly_decreasing(order2) and _strictly_decreasing(order3))
    acceptance(7, ok, f"Lambda={lam:.3g}: |z(53)|/|z(0)|={decay:.1e}, MRMS={m_adm:.2e}; "
                      f"table2 MRMS {[f'{v:.2e}' for v in order2]} (k^0.4/k^2={ratio:.0f}); "
                      f"table3 MRMS {[f'{v:.2e}' for v in order3]}")
    assert ok


# -- 8. Lyapunov audit ---------------------------------------------------------------

def test_criterion_08_lyapunov_audit(acceptance, certs, motor, motor_problem, admissible,
                                     k2_run):
    plain = certs.plain(H_STUDY)
    ideal = run_closed_loop(motor, H_STUDY, None, GainSchedule.power(2), "ideal", horizon=20.0)
    ideal_audit = lyapunov_audit(ideal, plain, motor_problem)
    cert, lam, delta0, bounds = admissible
    audit = lyapunov_audit(k2_run, cert, motor_problem, delta0=delta0)
    energy = disturbance_energy_bound(motor, bounds, H_STUDY, GainSchedule.power(2), 53.0).energy
    lhs, rhs = audit.cumulative_bound(energy)
    ok = ideal_audit.fraction_ok == 1.0 and ideal_audit.passed and lhs <= 1.01 * rhs
    acceptance(8, ok, f"ideal run: {100 * ideal_audit.fraction_ok:.0f}% of intervals dissipate; "
                      f"encrypted k^2 run: int|z|^2={lhs:.3g} <= {rhs:.3g} "
                      f"(mu3={audit.constants.mu3:.2e}, mu4={audit.constants.mu4:.2e}); "
                      f"per-interval dissipation {100 * audit.fraction_ok:.0f}%")
    assert ok


# -- 9. residual set --------------------------------------------------------------------

def test_criterion_09_residual_set(acceptance, motor, motor_problem, admissible):
    cert, lam, delta0, bounds = admissible
    from encobs.stability.audit import audit_constants
    c = audit_constants(cert, motor_problem, H_STUDY, delta0)
    eta_bar = eta_bound(bounds.M_U, motor.n, motor.r, lam, 30.0)
    sigma = c.mu4 * eta_bar**2
    region = residual_set(cert, c, eta_bar, sigma)
    # start well outside the set: V(z0) = 10 V_bar
    unit = np.array([0.0, 0.0, 1.0])
    v_unit = np.concatenate([unit, np.zeros(3)]) @ cert.vars.P @ np.concatenate([unit, np.zeros(3)])
    x0 = unit * math.sqrt(10 * region.V_bar / v_unit)
    trace = run_closed_loop(motor, H_STUDY, lam, GainSchedule.fixed(30), "encrypted",
                            horizon=20.0, x0=x0, seed=0)
    V0 = float(trace.z[0] @ cert.vars.P @ trace.z[0])
    bound = region.entry_time_bound(V0)
    entry = first_entry(trace, cert, region)
    eta_ok = bool(np.all(np.linalg.norm(trace.eta_k, axis=1) <= eta_bar))
    ok = entry is not None and entry <= bound and eta_ok and V0 > region.V_bar
    acceptance(9, ok, f"rho={region.rho:.3g}, V_bar={region.V_bar:.3g}, V(z0)={V0:.3g}: "
                      f"entered at t={entry} s, bound {bound:.3g} s; |eta|<=eta_bar: {eta_ok}")
    assert ok


# -- 10. determinism ------------------------------------------------------------------

def test_criterion_10_determinism(acceptance, table2_runs, preset_suite):
    (a, _, ta), (b, _, tb) = table2_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    differing = [str(rel) for rel in files if (a / rel).read_bytes() != (b / rel).read_bytes()]
    missing = [str(rel) for rel in files if not (b / rel).exists()]
    total = sum(secs for _, secs in preset_suite.values())
    per = ", ".join(f"{name} {secs:.0f}" for name, (_, secs) in preset_suite.items())
    ok = not differing and not missing and len(files) > 2 and total < 15 * 60
    acceptance(10, ok, f"table2 twice: {len(files)} files, {len(differing)} differ "
                       f"({ta:.0f} s, {tb:.0f} s); full preset suite {total:.0f} s "
                       f"(limit 900 s; {per})")
    assert ok
