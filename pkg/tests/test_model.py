"""Parameter validation, Fermi factors and jump-operator assembly."""

import math

import numpy as np
import pytest

from shuttlesim.basis import Basis
from shuttlesim.master import evolve
from shuttlesim.model import (ELECTRON_ANNIHILATE, EngineParams, build_operator_set,
                              compose, fermi)


def test_fermi_midpoint():
    assert fermi(1.0, 1.0, 0.7) == 0.5
    assert fermi(1.0, 1.0, 0.0) == 0.5


def test_fermi_zero_temperature_step():
    assert fermi(2.0, 1.0, 0.0) == 0.0
    assert fermi(0.5, 1.0, 0.0) == 1.0


def test_fermi_unit_gap():
    # independent evaluation of 1/(e + 1)
    assert fermi(2.0, 1.0, 1.0) == pytest.approx(1.0 / (math.e + 1.0), rel=1e-14)
    assert fermi(2.0, 1.0, 1.0) == pytest.approx(0.2689414213699951, rel=1e-12)


def test_fermi_extreme_args_no_overflow():
    assert fermi(1e4, 0.0, 1.0) == pytest.approx(0.0, abs=1e-300)
    assert fermi(-1e4, 0.0, 1.0) == 1.0


def test_params_validation():
    with pytest.raises(ValueError):
        EngineParams(gamma=-0.1)
    with pytest.raises(ValueError):
        EngineParams(f_s=1.2)
    with pytest.raises(ValueError):
        EngineParams(dim=1)
    with pytest.raises(ValueError):
        EngineParams(model="bogus")
    with pytest.raises(ValueError):
        EngineParams(model="reduced", f_d=0.1)     # reduced needs f_d = 0
    with pytest.raises(ValueError):
        EngineParams(model="reduced", nbar_p=0.5)  # ... and nbar_p = 0
    EngineParams(model="full", f_d=0.1, nbar_p=0.5)


def test_lead_spec_constructor():
    p = EngineParams.from_lead_spec(omega_I=1.1, mu=1.0, T_s=0.5, T_d=1e-9,
                                    model="full")
    assert p.f_s == pytest.approx(fermi(1.1, 1.0, 0.5))
    assert p.f_d == pytest.approx(0.0, abs=1e-12)


def test_alpha_product_independent_of_x0():
    for x0 in (0.0, 0.3, 1.7):
        p = EngineParams(x0=x0, A=0.8, eta=1.3)
        assert p.alpha_s * p.alpha_d == pytest.approx(p.A ** 2, rel=1e-14)


def test_compose_conventions():
    d = 6
    eye_osc = np.eye(d)
    c = ELECTRON_ANNIHILATE
    n_e = c.conj().T @ c
    assert np.trace(compose(eye_osc, n_e)).real == pytest.approx(d)
    x = np.diag(np.arange(d, dtype=float))
    lhs = compose(x, np.eye(2)) @ compose(eye_osc, n_e)
    rhs = compose(eye_osc, n_e) @ compose(x, np.eye(2))
    assert np.abs(lhs - rhs).max() == 0.0
    a = np.diag(np.sqrt(np.arange(1, d)), 1)
    prod = compose(a, np.eye(2)) @ compose(eye_osc, c)
    assert np.allclose(compose(a, c), prod, atol=1e-15)


def test_compose_rejects_bad_shapes():
    with pytest.raises(ValueError):
        compose(np.eye(4), np.eye(3))
    with pytest.raises(ValueError):
        compose(np.ones((2, 3)), np.eye(2))


def test_reduced_jump_list():
    p = EngineParams(dim=8)
    ops = build_operator_set(p)
    labels = [j.label for j in ops.jumps]
    assert labels == ["noise", "damping", "source_in", "source_out", "drain_out"]
    by = {j.label: j for j in ops.jumps}
    assert by["noise"].rate == p.gamma
    assert by["damping"].rate == p.kappa
    assert by["source_in"].rate == pytest.approx(p.Gamma_s * p.f_s * p.alpha_s ** 2)
    assert by["source_out"].rate == pytest.approx(p.Gamma_s * (1 - p.f_s) * p.alpha_s ** 2)
    assert by["drain_out"].rate == pytest.approx(p.Gamma_d * p.alpha_d ** 2)
    noise_op = by["noise"].op
    assert np.abs(noise_op - noise_op.conj().T).max() < 1e-14


def test_full_model_extra_channels():
    p = EngineParams(dim=6, model="full", f_d=0.2, nbar_p=0.3)
    ops = build_operator_set(p)
    by = {j.label: j for j in ops.jumps}
    assert by["drain_in"].rate == pytest.approx(p.Gamma_d * p.f_d * p.alpha_d ** 2)
    assert by["thermal"].rate == pytest.approx(p.kappa * p.nbar_p)
    assert by["damping"].rate == pytest.approx(p.kappa * (p.nbar_p + 1))


def test_rates_nonnegative_random_params(rng):
    for _ in range(50):
        p = EngineParams(
            gamma=float(rng.uniform(0, 5)), kappa=float(rng.uniform(0, 1)),
            Gamma_s=float(rng.uniform(0, 3)), Gamma_d=float(rng.uniform(0, 3)),
            eta=float(rng.uniform(0, 1)), x0=float(rng.uniform(-1, 1)),
            A=float(rng.uniform(0, 2)), f_s=float(rng.uniform(0, 1)),
            dim=8)
        assert all(j.rate >= 0 for j in build_operator_set(p).jumps)


def test_eta_zero_makes_tunnelling_position_independent():
    p = EngineParams(dim=8, eta=0.0)
    ops = build_operator_set(p)
    d = p.dim
    c = ELECTRON_ANNIHILATE
    expected_in = compose(np.eye(d), c.conj().T)
    assert np.abs(ops.jump("source_in").op - expected_in).max() < 1e-12
    assert np.abs(ops.jump("drain_out").op - compose(np.eye(d), c)).max() < 1e-12


def test_fixed_charge_zero_has_silent_noise():
    p = EngineParams(dim=8, model="fixed_charge", n_e=0)
    ops = build_operator_set(p)
    assert ops.space == "oscillator"
    assert ops.jump("noise").rate == 0.0
    assert ops.jump("damping").rate == p.kappa


def test_reduced_with_frozen_charge_matches_fixed_charge():
    # no tunnelling + electron pinned in |1> must reproduce fixed_charge(1)
    dim = 10
    p_red = EngineParams(dim=dim, gamma=0.6, Gamma_s=0.0, Gamma_d=0.0)
    p_fix = EngineParams(dim=dim, gamma=0.6, model="fixed_charge", n_e=1)
    ops_red = build_operator_set(p_red)
    ops_fix = build_operator_set(p_fix)
    rho0 = np.zeros((2 * dim, 2 * dim), dtype=complex)
    rho0[dim, dim] = 1.0                      # ground state x occupied shuttle
    res_red = evolve(ops_red, rho0, t_max=10.0, dt=0.005, record_stride=20)
    res_fix = evolve(ops_fix, None, t_max=10.0, dt=0.005, record_stride=20)
    assert np.abs(res_red.n_phonon - res_fix.n_phonon).max() < 1e-8
    assert np.abs(res_red.n_electron - 1.0).max() < 1e-12
