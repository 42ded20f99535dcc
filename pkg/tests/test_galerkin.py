import math
import warnings

import numpy as np
import pytest
from conftest import make_spec

from thermistor_lab.errors import ConfigError
from thermistor_lab.galerkin import SineBasis, SpectralState, galerkin_rhs, galerkin_run, project_initial
from thermistor_lab.problem import InitialCondition, SourceFunction
from thermistor_lab.stepping import StepperConfig


def test_basis_is_orthonormal():
    b = SineBasis(12, length=2.0)
    gram = b.wvalues @ b.values
    np.testing.assert_allclose(gram, np.eye(12), atol=1e-13)


def test_coarse_quadrature_rejected():
    with pytest.raises(ConfigError):
        SineBasis(16, panels=8)
    with pytest.raises(ConfigError):
        SineBasis(4, order=2)
    with pytest.raises(ConfigError):
        SineBasis(0)


def test_single_mode_constant_source():
    spec = make_spec(lam=2.5)
    rhs = galerkin_rhs(SpectralState([0.0]), spec)
    # oracle: int_0^1 sqrt(2) sin(pi x) dx = 2 sqrt(2) / pi
    assert rhs[0] == pytest.approx(2.5 * 2 * math.sqrt(2) / math.pi, rel=1e-13)


def test_zero_state_without_source():
    spec = make_spec(lam=0.0, p=3)
    assert not np.any(galerkin_rhs(SpectralState(np.zeros(7)), spec))


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_p2_eigen_identity(L):
    m = 16
    spec = make_spec(lam=0.0, extent=L)
    g = np.random.default_rng(0).normal(size=m)
    rhs = galerkin_rhs(SpectralState(g, L), spec, SineBasis(m, L))
    exact = -(np.arange(1, m + 1) * np.pi / L) ** 2 * g
    assert np.max(np.abs(rhs - exact)) <= 1e-10


def test_basis_size_mismatch():
    with pytest.raises(ConfigError):
        galerkin_rhs(SpectralState(np.zeros(3)), make_spec(), SineBasis(4))
    with pytest.raises(ConfigError):
        galerkin_rhs(SpectralState(np.zeros(3)), make_spec(dim=2))


def test_projection_of_first_mode():
    spec = make_spec(u0=InitialCondition("sine", 0.7))
    g = project_initial(spec, SineBasis(5)).coefficients
    # sin(pi x) = w_1 / sqrt(2)
    np.testing.assert_allclose(g, [0.7 / math.sqrt(2), 0, 0, 0, 0], atol=1e-14)


def test_single_mode_heat_decay():
    a = 0.9
    spec = make_spec(lam=0.0, T=0.1, u0=InitialCondition("sine", a * math.sqrt(2)))
    rec = galerkin_run(spec, 1, StepperConfig(scheme="rk4-spectral", dt_initial=1e-4), [0.0, 0.1],
                       snapshots=True)
    g = rec.extra["coefficients"][1][0]
    assert g == pytest.approx(a * math.exp(-math.pi**2 * 0.1), abs=1e-6)


def test_even_modes_stay_zero_for_constant_source():
    spec = make_spec(lam=1.0, T=0.2, u0=InitialCondition("zero"))
    rec = galerkin_run(spec, 10, StepperConfig(scheme="rk4-spectral", dt_initial=1e-4),
                       np.linspace(0, 0.2, 5), snapshots=True)
    for coeffs in rec.extra["coefficients"].values():
        assert np.max(np.abs(coeffs[1::2])) < 1e-14
    assert rec.extra["coefficients"][4][0] > 0


def test_rk4_order():
    spec = make_spec(p=3, lam=1.0, source=SourceFunction.power_growth(), T=0.1,
                     u0=InitialCondition("sine", 0.6))
    finals = []
    for dt in (4e-4, 2e-4, 1e-4):
        rec = galerkin_run(spec, 8, StepperConfig(scheme="rk4-spectral", dt_initial=dt), [0.0, 0.1],
                           snapshots=True)
        finals.append(rec.extra["coefficients"][1])
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert e1 / e2 > 10  # ideal ratio 16


def test_snapshot_grid_and_stability_warning():
    from thermistor_lab.discretization import Grid
    spec = make_spec(lam=0.0, T=0.01)
    grid = Grid(1, (9,), (1.0,))
    rec = galerkin_run(spec, 4, StepperConfig(scheme="rk4-spectral", dt_initial=1e-3), [0.0, 0.01],
                       snapshots=True, snapshot_grid=grid)
    assert rec.snapshots[0].shape == (9,)
    np.testing.assert_allclose(rec.snapshots[0], 0.1 * np.sin(np.pi * grid.axes[0]), atol=1e-14)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        galerkin_run(spec, 40, StepperConfig(scheme="rk4-spectral", dt_initial=1e-2), [0.0])
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_galerkin_blowup_is_recorded():
    spec = make_spec(lam=100.0, source=SourceFunction.power_growth(), T=1.0, u0=InitialCondition("sine", 0.5))
    rec = galerkin_run(spec, 8, StepperConfig(scheme="rk4-spectral", dt_initial=1e-3, blowup_cap=2.0),
                       np.linspace(0, 1, 11))
    assert rec.status == "blew-up" and rec.blowup_time is not None


def test_sup_norms_are_uniform_in_the_number_of_modes():
    spec = make_spec(p=2.5, lam=2.0, source=SourceFunction.power_growth(), T=0.2, u0=InitialCondition("bump", 1.0))
    sups = []
    for m in (8, 16, 32):
        rec = galerkin_run(spec, m, StepperConfig(scheme="rk4-spectral", dt_initial=4e-5), np.linspace(0, 0.2, 11))
        assert rec.completed
        mask = rec.window(0.05)
        sups.append((rec.norm(2)[mask].max(), rec.norm(math.inf)[mask].max()))
    sups = np.array(sups)
    assert np.ptp(sups[:, 0]) / sups[:, 0].max() < 0.02
    assert np.ptp(sups[:, 1]) / sups[:, 1].max() < 0.05
