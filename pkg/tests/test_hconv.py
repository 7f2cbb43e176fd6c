import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot_hconv.discretization import Grid, ScalarField
from carnot_hconv.groups import make_euclidean, make_heisenberg
from carnot_hconv.hconv import (
    CutoffSpec,
    EffectiveEstimate,
    SequenceConfig,
    divcurl_check,
    effective_membership,
    estimate_effective,
    nodes_per_period,
    richardson,
    run_hconv,
)
from carnot_hconv.operators import ConstantCoefficient, Laminate, SmoothCoefficient, scalar_p_laplacian
from carnot_hconv.solver import WeakProblem, solve

E2, HEIS = make_euclidean(2), make_heisenberg()
G33 = Grid.unit(2, 33)


def cfg(base, scales=(1, 2, 4), grid=G33, group=E2, **kw):
    kw.setdefault("membership_samples", 200)
    kw.setdefault("reference", "none")
    return SequenceConfig(group, grid, base, scales, **kw)


# ------------------------------------------------------------------ cutoff

CUT = CutoffSpec.default(G33)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_cutoff_range_and_support(x):
    v = CUT(np.array([x]))[0]
    assert 0.0 <= v <= 1.0
    inside = all(a <= c <= b for c, (a, b) in zip(x, CUT.inner))
    outside = any(c <= a or c >= b for c, (a, b) in zip(x, CUT.support))
    if inside:
        assert v == 1.0
    if outside:
        assert v == 0.0


def test_cutoff_geometry():
    assert CUT.support == ((0.125, 0.875), (0.125, 0.875))
    assert CUT.inner == ((0.25, 0.75), (0.25, 0.75))
    assert CUT.field(G33).is_dirichlet
    w = CUT.omega_weights(G33)
    assert w.sum() == pytest.approx(0.25, abs=1e-14)
    with pytest.raises(ValueError):
        CutoffSpec(((0.2, 0.8),), ((0.3, 0.9),))
    with pytest.raises(ValueError):
        CutoffSpec.default(G33, width=0.3)
    with pytest.raises(ValueError):
        CutoffSpec(((0.1, 0.9), (0.1, 0.9)), ((0.0, 1.0), (0.0, 1.0))).field(G33)


def test_short_ramp_rejected():
    narrow = CutoffSpec(((0.3, 0.7), (0.3, 0.7)), ((0.25, 0.75), (0.25, 0.75)))
    with pytest.raises(ValueError, match="cells"):
        narrow.check_resolution(G33)
    c = cfg(scalar_p_laplacian(2.0), cutoff=narrow)
    with pytest.raises(ValueError, match="cells"):
        estimate_effective(c, [(1.0, 0.0)])


# ------------------------------------------------------------------ configuration

def test_sequence_config_validation():
    base = scalar_p_laplacian(2.0, Laminate(1.0, 4.0))
    for bad in [(2, 1), (1, 1), (0, 1), ()]:
        with pytest.raises(ValueError):
            cfg(base, scales=bad)
    with pytest.raises(ValueError, match="boundary"):
        cfg(base, test_functions=[lambda x: np.ones(len(x))])
    with pytest.raises(ValueError):
        cfg(base, reference="exact")
    with pytest.raises(ValueError):
        cfg(base, group=HEIS)


def test_nodes_per_period_uses_dilation_weights():
    g = Grid.unit(3, 33)
    horiz = scalar_p_laplacian(2.0, SmoothCoefficient(0.5, (0, 1)))
    vert = scalar_p_laplacian(2.0, SmoothCoefficient(0.5, (2,)))
    assert nodes_per_period(horiz, HEIS, g, 4) == pytest.approx(8.0)
    assert nodes_per_period(vert, HEIS, g, 4) == pytest.approx(2.0)
    assert nodes_per_period(scalar_p_laplacian(2.0), HEIS, g, 4) == math.inf


def test_resolution_warning_and_error(caplog):
    base = scalar_p_laplacian(2.0, Laminate(1.0, 4.0))
    with caplog.at_level(logging.WARNING):
        rep = run_hconv(cfg(base, scales=(1, 8)))
    assert any("per oscillation period" in w for w in rep.warnings)
    assert any("per oscillation period" in r.message for r in caplog.records)
    with pytest.raises(ValueError, match="unresolved"):
        run_hconv(cfg(base, scales=(1, 64)))


# ------------------------------------------------------------------ run_hconv

def test_single_scale_matches_plain_solve():
    base = scalar_p_laplacian(3.0, Laminate(1.0, 4.0))
    fields: dict = {}
    rep = run_hconv(cfg(base, scales=(1,)), fields_out=fields)
    f = ScalarField(G33, np.ones(G33.size))
    u, _ = solve(WeakProblem(E2, G33, base, f))
    assert np.array_equal(fields[1].values, u.values)
    assert rep.tail_max == [] and math.isnan(rep.tail_ratio)


def test_constant_coefficient_is_scale_independent():
    rep = run_hconv(cfg(scalar_p_laplacian(4.0, ConstantCoefficient(2.0))))
    first = rep.scales[0]
    for r in rep.scales[1:]:
        assert r.pairings == first.pairings
        assert r.momenta == first.momenta
    assert rep.tail_max == [0.0, 0.0]


def test_laminate_run_bounds_and_series():
    rep = run_hconv(cfg(scalar_p_laplacian(2.0, Laminate(1.0, 4.0)), scales=(1, 2, 4), reference="homogenized",
                        reference_refine=2))
    assert rep.bounds_hold
    assert [r.scale for r in rep.scales] == [1, 2, 4]
    assert all(len(r.pairings) == 3 and len(r.momenta) == 2 for r in rep.scales)
    assert np.asarray(rep.reference["effective_tensor"]) == pytest.approx(np.diag([1.6, 2.5]), abs=1e-12)
    assert set(rep.to_dict()) >= {"scales", "tail_deltas", "reference_gaps"}


# ------------------------------------------------------------------ div-curl

def test_divcurl_constant_coefficient_and_phi_checks():
    c = cfg(scalar_p_laplacian(2.0, ConstantCoefficient(1.5)))
    rep = divcurl_check(c)
    assert rep.values[0] == rep.values[1] == rep.values[2] > 0
    assert rep.reference is None
    with pytest.raises(ValueError, match="interior"):
        divcurl_check(c, phi=lambda x: np.ones(len(x)))


def test_divcurl_laminate_gap_shrinks():
    c = cfg(scalar_p_laplacian(2.0, Laminate(1.0, 4.0)), scales=(1, 2, 4), reference="homogenized",
            reference_refine=2)
    rep = divcurl_check(c)
    assert rep.gaps[-1] < rep.gaps[0]
    assert rep.final_gap_ratio < 0.05


# ------------------------------------------------------------------ effective operator

def test_richardson_recovers_power_law():
    s = [1, 2, 4, 8]
    y = [3.0 + 2.0 * v**-1.5 for v in s]
    lim, exps, res = richardson(s, y)
    assert lim == pytest.approx(3.0, abs=1e-12)
    assert exps[0] == pytest.approx(1.5, abs=1e-10)
    assert res == pytest.approx(0.0, abs=1e-12)
    s = [1, 2, 3]
    y = np.array([[1.0 - v**-2.0, 5.0] for v in s])
    lim, exps, _ = richardson(s, y)
    assert lim == pytest.approx([1.0, 5.0], abs=1e-10)
    assert exps[1] is None


def test_richardson_keeps_last_value_without_contraction():
    lim, exps, _ = richardson([1, 2, 4], [1.0, 2.0, 4.0])
    assert lim == 4.0 and exps == [None]
    lim, _, _ = richardson([1, 2], [1.0, 2.0])
    assert lim == 2.0


def test_effective_zero_probe_and_constant_operator():
    c = cfg(scalar_p_laplacian(2.0, ConstantCoefficient(3.0)), scales=(1, 2, 4))
    ests = estimate_effective(c, [(0.0, 0.0), (1.0, -2.0)])
    assert ests[0].extrapolated == [0.0, 0.0]
    assert ests[1].extrapolated == pytest.approx([3.0, -6.0], abs=1e-10)


def test_effective_duplicates():
    c = cfg(scalar_p_laplacian(2.0), scales=(1, 2))
    with pytest.raises(ValueError, match="distinct"):
        estimate_effective(c, [(1.0, 0.0), (1.0, 0.0)])
    a, b = estimate_effective(c, [(1.0, 0.0), (1.0, 0.0)], allow_duplicates=True)
    assert a.extrapolated == b.extrapolated
    with pytest.raises(ValueError):
        estimate_effective(c, [(1.0, 0.0, 0.0)])


def _est(xi, value, unc=0.0):
    return EffectiveEstimate(xi=list(xi), scales=[1], momenta=[list(value)], converged=[True],
                             extrapolated=list(value), exponents=[None], fit_residual=[0.0], uncertainty=unc)


def test_effective_membership_identity_slack():
    rng = np.random.default_rng(5)
    xs = rng.standard_normal((4, 2))
    ests = [_est(x, x) for x in xs]
    rep = effective_membership(ests, alpha=0.5, beta=1.0, p=2.0)
    assert rep.ok
    for pair in rep.pairs:
        dx = xs[pair["j"]] - xs[pair["i"]]
        assert pair["slack_a"] == pytest.approx(0.5 * dx @ dx, abs=1e-12)
        assert pair["slack_lipschitz"] == pytest.approx(0.0, abs=1e-12)


def test_effective_membership_flags_violation():
    ests = [_est((0.0, 0.0), (0.0, 0.0)), _est((1.0, 0.0), (-1.0, 0.0))]
    rep = effective_membership(ests, alpha=0.5, beta=1.0, p=2.0)
    assert rep.violations["a"] == 1 and not rep.ok
    # within the extrapolation uncertainty it is not counted
    ests = [_est((0.0, 0.0), (0.0, 0.0), 0.5), _est((1.0, 0.0), (0.2, 0.0), 0.5)]
    assert effective_membership(ests, alpha=0.5, beta=1.0, p=2.0).violations["a"] == 0
    with pytest.raises(ValueError):
        effective_membership(ests[:1], 0.5, 1.0, 2.0)
