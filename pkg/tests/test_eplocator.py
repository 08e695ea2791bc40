from dataclasses import replace

import numpy as np
import pytest

from epcircuits import eplocator
from epcircuits.dynamics import resonances, system_matrix
from epcircuits.errors import DiabolicPointError, DomainError, IterationLimitError, SeedFailureError
from epcircuits.model import OscillatorParams, SweepSpec, default_table1, fig2_sweep

REFERENCE_S1 = 92000 - 11500j

# frozen from the converged search at the default values
EP_OMEGA = 91891.92309440291 - 8187.246449484316j
EP_RP = 552.6426414300139
EP_CP = 64.897957390259577e-9


def test_residual_vanishes_at_resonance(table1_matrix):
    for w in resonances(table1_matrix).omega:
        D, _ = eplocator.ep_residual(w, table1_matrix)
        assert abs(D) <= 1e-9


def test_residual_large_far_away(table1_matrix):
    w = 10 * np.max(np.abs(resonances(table1_matrix).omega))
    D, _ = eplocator.ep_residual(w, table1_matrix)
    assert abs(D) > 1e3


def test_residual_derivative_finite_difference(rng, table1_matrix):
    for _ in range(200):
        w = complex(rng.uniform(5e4, 1.5e5), rng.uniform(-3e4, 3e4))
        _, Dp = eplocator.ep_residual(w, table1_matrix)
        h = 1e-4 * abs(w)
        fd = (eplocator.ep_residual(w + h, table1_matrix)[0] - eplocator.ep_residual(w - h, table1_matrix)[0]) / (2 * h)
        # analytic derivative is per unit of omega / omega_ref
        assert abs(Dp / 1e5 - fd) <= 1e-6 * abs(fd)


def test_discriminant_diabolic_zero():
    assert eplocator.discriminant(OscillatorParams(1.0, 1.0)) == pytest.approx(0.0, abs=1e-14)


def test_discriminant_nonzero_for_distinct():
    assert abs(eplocator.discriminant(OscillatorParams(1.0, 2.0))) > 1e-3


def test_discriminant_along_line_through_ep(circuit_ep):
    p = circuit_ep.params
    step = 0.002 * p.Cp
    values = [eplocator.discriminant(p.with_values(Cp=p.Cp + k * step)) for k in range(-5, 6)]
    at_ep = abs(values[5])
    scale = max(abs(v) for v in values)
    sign_change = any(a * b <= 0 for a, b in zip(values[4:6], values[5:7]))
    tangential = at_ep <= 1e-6 * scale
    assert sign_change or tangential


def test_seed_from_fig2_sweep():
    seed = eplocator.seed_from_sweep(fig2_sweep())
    assert abs(seed.omega - REFERENCE_S1) <= 0.10 * abs(REFERENCE_S1)
    # interior closest approach on the grid
    idx = seed.point.index
    assert 0 < idx[1] < 68


def test_seed_single_point(table1):
    spec = SweepSpec(("Rp", "Cp"), (520.0, 65e-9), (520.0, 65e-9), (1.0, 1e-9), table1)
    seed = eplocator.seed_from_sweep(spec)
    right = resonances(system_matrix(table1)).right_half()
    assert seed.values == {"Rp": 520.0, "Cp": 65e-9}
    assert seed.omega == pytest.approx(0.5 * (right[0] + right[1]))


def test_seed_matches_brute_force(table1):
    spec = fig2_sweep(table1)
    loci = eplocator.sweep_loci(spec)
    best = min(range(len(loci)), key=lambda k: (loci[k].distance, k))
    seed = eplocator.seed_from_sweep(spec, loci)
    assert seed.point is loci[best]


def test_seed_tie_goes_to_lowest_index(table1):
    lp = eplocator.locus_point(table1, (0, 0), (1.0, 2.0))
    twins = [
        eplocator.LocusPoint((1.0, 2.0), (0, 1), lp.resonances, lp.distance),
        eplocator.LocusPoint((1.0, 3.0), (0, 2), lp.resonances, lp.distance),
    ]
    spec = fig2_sweep(table1)
    assert eplocator.seed_from_sweep(spec, twins).point.index == (0, 1)


def test_seed_failure(table1):
    with pytest.raises(SeedFailureError):
        eplocator.seed_from_sweep(fig2_sweep(table1), [])


def test_circuit_ep_location(circuit_ep):
    assert abs(circuit_ep.omega_ep.real - 92000) <= 0.10 * 92000
    assert abs(circuit_ep.omega_ep.imag + 11500) <= 0.40 * 11500
    assert circuit_ep.residual_det <= 1e-9 and circuit_ep.residual_ddet <= 1e-9
    assert circuit_ep.omega_ep.imag < 0


def test_circuit_ep_frozen(circuit_ep):
    assert circuit_ep.omega_ep == pytest.approx(EP_OMEGA, rel=1e-9)
    assert circuit_ep.param_values["Rp"] == pytest.approx(EP_RP, rel=1e-8)
    assert circuit_ep.param_values["Cp"] == pytest.approx(EP_CP, rel=1e-8)


def test_mechanical_ep(mech_ep):
    assert mech_ep.residual_det <= 1e-9 and mech_ep.residual_ddet <= 1e-9
    assert abs(eplocator.discriminant(mech_ep.params)) <= 1e-8


def test_mechanical_ep_against_discriminant_scan(mech_ep):
    """The discriminant over an (f, g) grid is smallest in the cell holding the EP."""
    f0, g0 = mech_ep.param_values["f"], mech_ep.param_values["g"]
    fs = np.linspace(0.9 * f0, 1.1 * f0, 21)
    gs = np.linspace(0.5 * g0, 1.5 * g0, 21)
    base = mech_ep.params
    disc = np.array([[abs(eplocator.discriminant(replace(base, f=f, g=g))) for g in gs] for f in fs])
    i, j = np.unravel_index(np.argmin(disc), disc.shape)
    assert abs(fs[i] - f0) <= fs[1] - fs[0] and abs(gs[j] - g0) <= gs[1] - gs[0]


def test_basin_stability(circuit_ep, table1):
    r = eplocator.find_ep(
        circuit_ep.omega_ep * (1.01 + 0.01j),
        {"Rp": EP_RP * 1.01, "Cp": EP_CP * 0.99},
        table1,
    )
    assert r.omega_ep == pytest.approx(circuit_ep.omega_ep, rel=1e-6)
    assert r.param_values["Rp"] == pytest.approx(circuit_ep.param_values["Rp"], rel=1e-6)
    assert r.param_values["Cp"] == pytest.approx(circuit_ep.param_values["Cp"], rel=1e-6)


@pytest.mark.parametrize("fixture", ["circuit_ep", "mech_ep"])
def test_coalescence_invariant(fixture, request):
    ep = request.getfixturevalue(fixture)
    rs = resonances(ep.matrix())
    close = np.abs(rs.omega - ep.omega_ep) <= 1e-6 * abs(ep.omega_ep)
    assert np.count_nonzero(close) == 2
    others = rs.omega[~close]
    np.testing.assert_allclose(np.sort_complex(others), np.sort_complex([-np.conj(ep.omega_ep)] * 2), rtol=1e-6)


def test_mirror_ep_satisfies_residuals(circuit_ep):
    D, Dp = eplocator.ep_residual(-np.conj(circuit_ep.omega_ep), circuit_ep.matrix())
    assert abs(D) <= 1e-9 and abs(Dp) <= 1e-9


def test_quadratic_convergence_recorded(circuit_ep):
    h = [r for r in circuit_ep.history if r > 1e-14]
    # last three iterates before convergence: r_{k+1} / r_k^2 stays bounded
    ratios = [b / a**2 for a, b in zip(h[-4:-1], h[-3:])]
    assert max(ratios) < 1e3


def test_monodromy(circuit_ep, mech_ep):
    assert eplocator.monodromy_swaps(circuit_ep)
    assert eplocator.monodromy_swaps(mech_ep)


def test_no_swap_away_from_ep(circuit_ep):
    far = eplocator.EPResult(
        circuit_ep.omega_ep, {"Rp": 470.0, "Cp": 60e-9}, 0, 0, 0, params=default_table1().with_values(Rp=470.0, Cp=60e-9)
    )
    assert not eplocator.monodromy_swaps(far)


def test_diabolic_point_rejected():
    with pytest.raises(DiabolicPointError):
        eplocator.find_ep(1.0 + 0j, {"f": 0.0, "omega2": 1.0}, OscillatorParams(1.0, 1.0))


def test_iteration_limit_reports_residuals():
    with pytest.raises(IterationLimitError) as err:
        eplocator.find_ep(1.2 - 0.3j, {"f": 0.3, "g": 0.2}, OscillatorParams(1.0, 1.0, k1=0.1), max_iter=2)
    assert len(err.value.residuals) == 2


def test_domain_errors(table1):
    with pytest.raises(DomainError):
        eplocator.find_ep(9e4 - 1e4j, {"Rp": -5.0, "Cp": 65e-9}, table1)
    with pytest.raises(DomainError):
        eplocator.find_ep(9e4 - 1e4j, {"Rq": 5.0, "Cp": 65e-9}, table1)
    with pytest.raises(DomainError):
        eplocator.find_ep(9e4 - 1e4j, {"Rp": 500.0}, table1)


def test_ep_json_keys(circuit_ep):
    d = circuit_ep.to_json()
    assert set(d) == {"omega_ep_re", "omega_ep_im", "params", "residual_det", "residual_ddet", "iterations"}
    assert set(d["params"]) == {"Rp", "Cp"}
