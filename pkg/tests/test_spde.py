import numpy as np
import pytest

from nucleartight.hermite import (
    BasisSpec,
    DualElement,
    TestFunction,
    heat_matrix,
    pairing,
)
from nucleartight.martingales import simulate_particles
from nucleartight.paths import DualPath, TimeGrid
from nucleartight.spde import (
    heat_convergence_report,
    mild_solution,
    mn_dual_path,
    sample_initial,
    tightness_report,
    weak_form_residual,
)
from nucleartight.martingales import mn_scalar_path

from conftest import unit_function


@pytest.fixture(scope="module")
def basis():
    return BasisSpec(16, 32)


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 200)


def zero_driver(grid, basis):
    return DualPath(grid, basis, np.zeros((grid.steps + 1, basis.size)))


# ---------------------------------------------------------------------------
# driver coordinates
# ---------------------------------------------------------------------------


def test_dual_path_matches_scalar_sums(basis, grid):
    particles = simulate_particles(30, grid, 1)
    dual = mn_dual_path(particles, basis)
    rng = np.random.default_rng(2)
    for _ in range(5):
        phi = TestFunction(basis, rng.standard_normal(basis.size))
        scalar = mn_scalar_path(phi, particles).values
        projected = dual.project(phi).values
        assert np.abs(scalar - projected).max() < 1e-10


def test_dual_path_starts_at_zero(basis, grid):
    dual = mn_dual_path(simulate_particles(10, grid, 3), basis)
    assert np.all(dual.states[0] == 0.0)


# ---------------------------------------------------------------------------
# initial states
# ---------------------------------------------------------------------------


def test_initial_zero(basis):
    eta = sample_initial("zero", basis, 4)
    assert np.all(eta.coeffs == 0.0)


def test_initial_gaussian_requires_summable_index(basis):
    with pytest.raises(ValueError):
        sample_initial("gaussian", basis, 4, r=0.5)
    with pytest.raises(ValueError):
        sample_initial("gaussian", basis, 4)
    with pytest.raises(ValueError):
        sample_initial("bogus", basis, 4)


def test_initial_gaussian_dual_norm_moment(basis):
    # E[p'_1(eta)^2] = sum_k (2k+1)^(-4), approx pi^4/96 in the size limit
    k = np.arange(basis.size)
    target = np.sum((2.0 * k + 1.0) ** -4.0)
    draws = np.array(
        [
            np.sum((sample_initial("gaussian", basis, 5, r=1.0, stream_id=i).coeffs
                    * (2.0 * k + 1.0) ** -1.0) ** 2)
            for i in range(5000)
        ]
    )
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - target) < 3 * se
    # the finite-size partial sum sits just below the classical limit
    assert 0.0 < np.pi**4 / 96.0 - target < 1e-4


def test_initial_fixed_coeffs_roundtrip(basis, tmp_path):
    rng = np.random.default_rng(6)
    coeffs = rng.standard_normal(basis.size)
    eta = sample_initial("fixed-coeffs", basis, 0, coeffs=coeffs)
    text = ",".join(repr(float(c)) for c in eta.coeffs)
    back = np.array([float(tok) for tok in text.split(",")])
    assert np.array_equal(back, eta.coeffs)


def test_initial_stream_separated_from_particles(basis, grid):
    before = simulate_particles(50, grid, 7, stream_id=0).increments
    sample_initial("gaussian", basis, 7, r=1.0, stream_id=0)
    after = simulate_particles(50, grid, 7, stream_id=0).increments
    assert np.array_equal(before, after)
    a = sample_initial("gaussian", basis, 7, r=1.0, stream_id=0).coeffs
    b = sample_initial("gaussian", basis, 7, r=1.0, stream_id=1).coeffs
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# mild solver
# ---------------------------------------------------------------------------


def test_pure_heat_flow(basis, grid):
    eta = DualElement(basis, np.eye(basis.size)[0])
    sol = mild_solution(zero_driver(grid, basis), eta)
    h0 = unit_function(basis, 0)
    # <Y_t, h_0> = <eta, E(t) h_0> has closed form (1+t)^(-1/2) for this eta
    for t in (0.25, 0.5, 1.0):
        value = pairing(sol.at(t), h0)
        assert abs(value - (1.0 + t) ** -0.5) < 1e-4
    expected = heat_matrix(0.5, basis) @ eta.coeffs
    assert np.abs(sol.at(0.5).coeffs - expected).max() < 1e-12


def test_zero_data_zero_solution(basis, grid):
    eta = DualElement(basis, np.zeros(basis.size))
    sol = mild_solution(zero_driver(grid, basis), eta)
    assert np.all(sol.states == 0.0)
    assert weak_form_residual(sol, zero_driver(grid, basis), eta, unit_function(basis, 0)) == 0.0


def test_mild_solution_additive(basis, grid):
    rng = np.random.default_rng(8)
    particles = simulate_particles(20, grid, 9)
    driver = mn_dual_path(particles, basis)
    eta1 = DualElement(basis, rng.standard_normal(basis.size))
    eta2 = DualElement(basis, rng.standard_normal(basis.size))
    sol1 = mild_solution(driver, eta1)
    sol2 = mild_solution(zero_driver(grid, basis), eta2)
    combined = mild_solution(driver, DualElement(basis, eta1.coeffs + eta2.coeffs))
    assert np.allclose(combined.states, sol1.states + sol2.states, rtol=1e-12, atol=1e-12)


def test_semigroup_consistency_without_driver(basis, grid):
    rng = np.random.default_rng(10)
    eta = DualElement(basis, rng.standard_normal(basis.size))
    sol = mild_solution(zero_driver(grid, basis), eta)
    e_half = heat_matrix(0.5, basis)
    lhs = sol.at(0.75).coeffs
    rhs = e_half @ sol.at(0.25).coeffs
    assert np.abs(lhs - rhs).max() < 1e-10


def test_mild_rejects_basis_mismatch(basis, grid):
    other = BasisSpec(8, 16)
    eta = DualElement(other, np.zeros(8))
    with pytest.raises(ValueError):
        mild_solution(zero_driver(grid, basis), eta)


def test_residual_small_and_first_order(basis):
    h0 = unit_function(basis, 0)
    means = []
    step_counts = [200, 400, 800]
    for steps in step_counts:
        g = TimeGrid(1.0, steps)
        vals = []
        for rep in range(12):
            particles = simulate_particles(20, g, 11, rep)
            driver = mn_dual_path(particles, basis)
            eta = sample_initial("gaussian", basis, 11, r=1.0, stream_id=rep)
            sol = mild_solution(driver, eta)
            vals.append(weak_form_residual(sol, driver, eta, h0))
        means.append(np.mean(vals))
        assert max(vals) < 10.0 * g.dt
    slope = np.polyfit(np.log([1.0 / s for s in step_counts]), np.log(means), 1)[0]
    assert 0.7 <= slope <= 1.3


# ---------------------------------------------------------------------------
# convergence and tightness drivers
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def heat_smoke(basis, grid):
    h0 = unit_function(basis, 0)
    return heat_convergence_report(
        [5, 20],
        {"kind": "zero"},
        [h0],
        [0.5, 1.0],
        60,
        12,
        grid,
        limit_modes=6,
        calibration_reps=4,
        calibration_size=80,
        tightness_deltas=(0.1, 0.2),
    )


def test_heat_report_cells(heat_smoke):
    cells, extras = heat_smoke
    assert len(cells) == 2 * 2
    for cell in cells:
        assert {"n", "phi", "t", "ks", "ks_critical", "energy"} <= set(cell)
        assert 0.0 <= cell["ks"] <= 1.0
    assert set(extras["per_n"]) == {5, 20}
    assert extras["limit"]["modes"] == 6


def test_heat_report_residual_gates(heat_smoke):
    _, extras = heat_smoke
    assert extras["limit"]["residual_pass"]
    for info in extras["per_n"].values():
        assert info["residual_pass"]


def test_heat_report_calibration(heat_smoke):
    _, extras = heat_smoke
    cal = extras["calibration"]
    assert cal["reps"] == 4
    assert len(cal["pvalues"]) == 4
    assert 0.0 <= cal["fraction_below_5"] <= 1.0


def test_heat_report_eta_per_n_validation(basis, grid):
    h0 = unit_function(basis, 0)
    with pytest.raises(ValueError):
        heat_convergence_report(
            [5, 20], [{"kind": "zero"}], [h0], [1.0], 10, 1, grid, calibration_reps=0
        )


def test_brownian_ensemble_modulus_median_monotone(basis, grid):
    from nucleartight.paths import DualPathEnsemble, compact_containment_report

    states = np.array(
        [mn_dual_path(simulate_particles(10, grid, 15, r), basis).states for r in range(30)]
    )
    ens = DualPathEnsemble(grid, basis, states, {"seed": 15})
    deltas = [0.02, 0.05, 0.1, 0.2, 0.5]
    report = compact_containment_report(ens, 1.0, [1.0], deltas)
    medians = report["modulus_quantiles"]["0.5"]
    assert all(a <= b + 1e-14 for a, b in zip(medians, medians[1:]))


def test_tightness_report_gate(basis, grid):
    cells, extras = tightness_report(
        [5, 20],
        {"kind": "zero"},
        40,
        13,
        grid,
        basis,
        quantile=0.9,
        tightness_deltas=(0.1, 0.2),
    )
    assert len(cells) == 2
    for cell in cells:
        assert {"n", "driver", "solution"} <= set(cell)
        assert cell["driver"]["paths"] == 40
    gate = extras["gate"]
    assert gate["ratio"] >= 1.0
    assert isinstance(gate["pass"], bool)


def test_heat_report_thread_invariance(basis):
    h0 = unit_function(basis, 0)
    small = TimeGrid(1.0, 50)
    kwargs = dict(limit_modes=4, calibration_reps=2, calibration_size=40,
                  tightness_deltas=(0.2,))
    a_cells, a_extras = heat_convergence_report(
        [5], {"kind": "zero"}, [h0], [1.0], 16, 14, small, threads=1, **kwargs
    )
    b_cells, b_extras = heat_convergence_report(
        [5], {"kind": "zero"}, [h0], [1.0], 16, 14, small, threads=4, **kwargs
    )
    assert a_cells == b_cells
    assert a_extras["calibration"]["pvalues"] == b_extras["calibration"]["pvalues"]
