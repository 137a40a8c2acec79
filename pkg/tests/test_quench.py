import numpy as np
import pytest

from lbtransport.catalog import aharonov_bohm_model, friedrichs_model
from lbtransport.model import ReservoirState
from lbtransport.quench import (
    WindowError,
    build_finite,
    current_series,
    echo_bound,
    steady_compare,
    transient_current,
)

BIAS = [ReservoirState(5.0, 0.2), ReservoirState(5.0, -0.2)]


@pytest.fixture(scope="module")
def small_friedrichs():
    return build_finite(friedrichs_model(), 120, BIAS)


@pytest.fixture(scope="module")
def small_phase_model():
    states = [ReservoirState(5, 0.3), ReservoirState(3, -0.2), ReservoirState(4, 0.0)]
    return build_finite(aharonov_bohm_model(), 80, states)


def test_finite_system_structure(small_friedrichs):
    fin = small_friedrichs
    assert fin.dim == 1 + 2 * 120
    np.testing.assert_allclose(fin.h0, fin.h0.conj().T, atol=1e-12)
    np.testing.assert_allclose(fin.v, fin.v.conj().T, atol=1e-12)
    U = fin.eigvecs
    assert np.max(np.abs(U.conj().T @ U - np.eye(fin.dim))) <= 1e-10 * fin.dim


def test_zero_temperature_lead_occupations_are_projectors():
    fin = build_finite(friedrichs_model(), 60, [ReservoirState(1e9, 0.3), ReservoirState(1e9, -0.5)])
    for lid, mu in ((1, 0.3), (2, -0.5)):
        sl = fin.lead_slice(lid)
        occ = np.linalg.eigvalsh(fin.f0[sl, sl])
        np.testing.assert_allclose(occ[np.abs(occ) > 0.5], 1.0, atol=1e-10)
        np.testing.assert_allclose(occ[np.abs(occ) <= 0.5], 0.0, atol=1e-10)
        lead_levels = np.linalg.eigvalsh(fin.h0[sl, sl])
        assert round(occ.sum()) == np.count_nonzero(lead_levels < mu)


def test_current_vanishes_at_t0(small_friedrichs, small_phase_model):
    for fin in (small_friedrichs, small_phase_model):
        s = current_series(fin, [0.0])
        for lid in fin.model.lead_ids:
            assert abs(s.charge[lid][0]) < 1e-12
            assert abs(s.energy[lid][0]) < 1e-12


def test_decoupled_model_has_no_current():
    fin = build_finite(friedrichs_model(0.1, 0.0, 0.0), 50, BIAS)
    s = current_series(fin, np.linspace(0, 15, 7))
    for lid in (1, 2):
        assert np.max(np.abs(s.charge[lid])) == 0.0
        assert np.max(np.abs(s.energy[lid])) == 0.0


def test_currents_real_and_balanced(small_friedrichs, small_phase_model):
    for fin in (small_friedrichs, small_phase_model):
        s = current_series(fin, np.linspace(0, echo_bound(fin), 41))
        assert s.max_imag <= 1e-12
        assert s.balance_residual <= 1e-10


def test_transient_current_matches_series(small_friedrichs):
    s = current_series(small_friedrichs, [7.5])
    j, phi = transient_current(small_friedrichs, 2, 7.5)
    assert j == s.charge[2][0] and phi == s.energy[2][0]


def test_window_past_echo_rejected(small_friedrichs):
    bound = echo_bound(small_friedrichs)
    assert bound == pytest.approx(0.8 * 120 / 2)
    with pytest.raises(WindowError, match="echo bound"):
        steady_compare(small_friedrichs, (10.0, bound + 1.0))


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_finite(friedrichs_model(), 3, BIAS)
    with pytest.raises(ValueError):
        build_finite(friedrichs_model(), 50, BIAS, scatterer_occupation=1.5)


def test_steady_state_forgets_scatterer_filling():
    m = friedrichs_model()
    window = (40.0, 80.0)
    a = steady_compare(build_finite(m, 200, BIAS, 0.0), window, 121)
    b = steady_compare(build_finite(m, 200, BIAS, 1.0), window, 121)
    assert not a.bound_states
    for lid in (1, 2):
        band = max(a.band_charge[lid], b.band_charge[lid])
        assert abs(a.mean_charge[lid] - b.mean_charge[lid]) <= band


def test_steady_means_track_landauer_buttiker():
    rep = steady_compare(build_finite(friedrichs_model(), 200, BIAS), (40.0, 80.0), 121)
    assert rep.rel_dev_charge[1] < 1e-3
    assert rep.rel_dev_energy[1] < 1e-2
    assert set(rep.summary()) >= {"mean_charge_current", "landauer_buttiker_charge", "bound_states"}


def test_bound_state_produces_warning(caplog):
    m = friedrichs_model(3.0, 2.0, 2.0)
    with caplog.at_level("WARNING"):
        rep = steady_compare(build_finite(m, 150, BIAS), (30.0, 60.0), 81)
    assert len(rep.bound_states) == 2
    assert any("bound_states" in w for w in rep.warnings)
    assert "bound_states" in caplog.text
