import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idashaper.cases import (G_EARTH, PendubotParams, SpiderParams, VtolParams, pendubot_model,
                             spider_model, vtol_model)
from idashaper.errors import MissingIndexError, ModelError, SingularMassError
from idashaper.model import State, SystemModel, derived_kinetics, finite_diff_audit, hamiltonian

from oracles import pendubot_bbM, pendubot_det

PEND, VTOL, SPIDER = pendubot_model(), vtol_model(), spider_model()


def test_state_validation():
    s = State([1, 2], [3, 4])
    assert np.array_equal(State.from_vector(s.as_vector()).q, s.q)
    with pytest.raises(ValueError):
        State([1.0, np.nan], [0.0, 0.0])
    with pytest.raises(ValueError):
        State([1.0], [0.0, 0.0])


def test_rejects_wrong_underactuation():
    with pytest.raises(ModelError):
        SystemModel("bad", 3, 1, lambda q: np.eye(3), lambda q: 0.0, lambda q: np.zeros((3, 1)), k=3)
    with pytest.raises(ModelError):
        SystemModel("bad", 2, 1, lambda q: np.eye(2), lambda q: 0.0, lambda q: np.zeros((2, 1)))


def test_hamiltonian_examples():
    assert hamiltonian(VTOL, State([0, 1, 0], [1, 0, 0])) == pytest.approx(0.5 + 9.81, abs=1e-14)
    p = PendubotParams()
    assert hamiltonian(PEND, State([0, 0], [0, 0])) == pytest.approx((p.c4 + p.c5) * p.g, abs=1e-12)
    q = np.array([0.4, -0.3])
    assert hamiltonian(PEND, State(q, [0, 0])) == PEND.V(q)


def test_pendubot_mass_at_zero():
    # c1 + c2 + 2 c3 = 8 with c = (4, 1, 1.5)
    assert np.allclose(PEND.M([0, 0]), [[8.0, 2.5], [2.5, 1.0]])
    assert derived_kinetics(PEND, [0.0, 0.0]).detM == pytest.approx(1.75, abs=1e-14)


def test_pendubot_bbM_hand_derivation():
    for q2 in np.linspace(-3, 3, 41):
        dk = derived_kinetics(PEND, [0.2, q2])
        assert dk.detM == pytest.approx(pendubot_det(q2), abs=1e-13)
        assert np.allclose(dk.bbM, pendubot_bbM(q2), atol=1e-12)
    assert derived_kinetics(PEND, [0.0, np.pi / 2]).bbM[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_vtol_constant_mass_and_missing_k():
    assert np.array_equal(VTOL.dMinv([1, 2, 0.3]), np.zeros((3, 3, 3)))
    with pytest.raises(MissingIndexError):
        derived_kinetics(VTOL, [0, 0, 0])
    with pytest.raises(MissingIndexError):
        VTOL.kidx


def test_vtol_annihilator():
    q = np.array([0.0, 0.0, 0.7])
    assert np.abs(VTOL.Gperp(q) @ VTOL.G(q)).max() <= 1e-15
    VTOL.validate_at(q)


def test_spider_det_constant():
    p = SpiderParams()
    expected = p.total * p.Mring * p.m * p.l3**2
    for th in np.linspace(-3, 3, 13):
        assert derived_kinetics(SPIDER, [0.1, 0.5, th]).detM == pytest.approx(expected, rel=1e-13)


def test_kidx_annihilator_is_unit_row():
    assert np.array_equal(PEND.Gperp([0.3, 0.1]), [[0.0, 1.0]])
    assert np.array_equal(SPIDER.Gperp([0, 0, 1.0]) @ SPIDER.G([0, 0, 1.0]), np.zeros((1, 2)))


def test_singular_mass_rejected():
    sysm = SystemModel("sing", 2, 1, lambda q: np.array([[1.0, 1.0], [1.0, 1.0]]), lambda q: 0.0,
                       lambda q: np.array([[1.0], [0.0]]), k=2)
    with pytest.raises(SingularMassError):
        sysm.Minv([0.0, 0.0])


coords = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(coords, coords, coords)
def test_structural_invariants(a, b, c):
    for sysm, q in ((PEND, [a, b]), (VTOL, [a, b, c]), (SPIDER, [a, b, c])):
        sysm.validate_at(np.array(q))
        if sysm.has_k:
            dk = derived_kinetics(sysm, q)
            M = sysm.M(q)
            assert np.abs(dk.adjM @ M - dk.detM * np.eye(sysm.n)).max() <= 1e-10 * max(1, abs(dk.detM))
            assert np.abs(dk.bbM - dk.bbM.T).max() <= 1e-9 * max(np.abs(dk.bbM).max(), 1e-300)


@settings(max_examples=30, deadline=None)
@given(coords, coords, coords)
def test_fd_audit_all_cases(a, b, c):
    assert finite_diff_audit(PEND, [a, b]).max_dev <= 1e-5
    assert finite_diff_audit(VTOL, [a, b, c]).max_dev <= 1e-6
    assert finite_diff_audit(SPIDER, [a, b, c]).max_dev <= 1e-5


def test_fd_audit_named_points():
    assert finite_diff_audit(PEND, [0.3, 0.7]).max_dev <= 1e-5
    assert finite_diff_audit(SPIDER, [0.0, 1.0, 0.2]).max_dev <= 1e-5
    assert np.array_equal(VTOL.grad_V([1, 2, 3]), [0.0, G_EARTH, 0.0])


def test_fd_fallback_when_no_analytic_derivatives():
    bare = SystemModel("bare", 2, 1, PEND.mass_matrix, PEND.potential, PEND.input_map, k=2)
    q = np.array([0.3, 0.7])
    assert np.allclose(bare.grad_V(q), PEND.grad_V(q), atol=1e-7)
    assert np.allclose(derived_kinetics(bare, q).bbM, derived_kinetics(PEND, q).bbM, atol=1e-7)
    assert np.allclose(bare.unactuated_force_jacobian(q), PEND.unactuated_force_jacobian(q), atol=1e-5)
