"""Curvature, parallelism, isometry, and geodesic checks on the chart metric.

The analytic skeleton is small enough to hand-verify: the only Christoffel
symbols are Gamma^s_tt = d_t kappa, Gamma^s_{t v_i} = d_{v_i} kappa, and
Gamma^{v}_tt = -(1/2) h grad_v kappa, so the Ricci tensor collapses onto
-m f(t) dt**2 and the Weyl tensor onto the rank-one shift block.  Those
closed forms are the oracles here; the finite-difference engine has to
reproduce them without being told.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecsforge.exact import QFieldContext
from ecsforge.funcspace import ct_eigenbasis
from ecsforge.geometry import (
    ConstantProfile,
    MetricPatch,
    curvature_at,
    geodesic_trace,
    isometry_residual,
    nabla_riemann_norm,
    nabla_weyl_residual,
    olszak_dim,
)
from ecsforge.model import build_model, kappa
from ecsforge.quotient import (
    HElement,
    act,
    act_jacobian,
    build_lagrangian,
    build_lattice,
    lattice_element,
    make_gamma_hat,
    pi_map,
)
from ecsforge.spectral import standard_family

MODEL = build_model(standard_family(3), p=3)
PATCH = MetricPatch(MODEL)
Q = float(QFieldContext(3).q)
POINT = (1.3, 0.7, np.array([0.4, -0.2, 0.9]))

MODEL7 = build_model(standard_family(4), p=3)
PATCH7 = MetricPatch(MODEL7)
POINT7 = (1.1, 0.3, np.array([0.2, -0.5, 0.7, 0.1, -0.3]))


def zero_rows(model):
    return tuple(tuple(0 for _ in range(model.m)) for _ in range(model.m))


def flat_patch(model):
    return MetricPatch(model, profile=ConstantProfile(0.0), shift_rows=zero_rows(model))


def perturbed_patch(model, slope):
    return MetricPatch(
        model,
        kappa_factor=(lambda t, s=slope: 1.0 + s * t, lambda t, s=slope: s),
    )


# -- metric and Christoffel structure ----------------------------------------


def test_metric_layout():
    t, s, v = POINT
    g = PATCH.metric(np.concatenate([[t, s], v]))
    assert g[0, 0] == pytest.approx(kappa(MODEL, t, v), rel=1e-15)
    assert g[0, 1] == 0.5 and g[1, 0] == 0.5
    assert np.array_equal(g[2:, 2:], np.array(MODEL.h_rows(), dtype=float))
    assert g[1, 1] == 0.0
    assert np.all(g[1, 2:] == 0.0) and np.all(g[0, 2:] == 0.0)


def test_metric_inverse_exact():
    x = np.concatenate([[0.8, -0.3], [1.0, 2.0, -0.5]])
    g = PATCH.metric(x)
    inv = PATCH.metric_inverse(x)
    assert np.max(np.abs(g @ inv - np.eye(5))) < 1e-14


@given(
    t=st.floats(0.2, 4.0),
    coords=st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
)
@settings(max_examples=25, deadline=None)
def test_kappa_matches_model(t, coords):
    v = np.array(coords)
    assert PATCH.kappa(t, v) == pytest.approx(kappa(MODEL, t, v), rel=1e-12, abs=1e-12)


def test_christoffel_closed_form():
    t, _, v = POINT
    x = np.concatenate([[t, 0.0], v])
    gamma = PATCH.christoffel(x)
    h = np.array(MODEL.h_rows(), dtype=float)
    shift = np.array(MODEL.shift_rows(), dtype=float)
    sigma = v @ h @ v
    grad = 2.0 * MODEL.f.value(t) * (h @ v) + 2.0 * MODEL.eps * v[-1] * np.eye(3)[-1]
    assert gamma[1, 0, 0] == pytest.approx(MODEL.f.deriv(t) * sigma, rel=1e-14)
    assert np.allclose(gamma[1, 0, 2:], grad, rtol=1e-14)
    assert np.allclose(gamma[1, 2:, 0], grad, rtol=1e-14)
    assert np.allclose(
        gamma[2:, 0, 0], -(MODEL.f.value(t) * v + shift @ v), rtol=1e-14
    )
    # nothing else is populated
    mask = np.ones_like(gamma, dtype=bool)
    mask[1, 0, :] = mask[1, :, 0] = mask[2:, 0, 0] = False
    assert np.all(gamma[mask] == 0.0)


def test_christoffel_rejects_bad_t():
    with pytest.raises(ValueError):
        PATCH.christoffel(np.array([-1.0, 0.0, 0.1, 0.2, 0.3]))


# -- curvature tensors ---------------------------------------------------------


def test_ricci_is_rank_one_in_dt():
    rep = curvature_at(PATCH, POINT)
    expected = -MODEL.m * MODEL.f.value(POINT[0])
    assert rep.ricci[0, 0] == pytest.approx(expected, rel=1e-9)
    off = rep.ricci.copy()
    off[0, 0] = 0.0
    assert np.max(np.abs(off)) < 1e-11
    assert abs(rep.scalar) < 1e-12


def test_riemann_frozen_entries():
    rep = curvature_at(PATCH, POINT)
    n = MODEL.n
    f_val = MODEL.f.value(POINT[0])
    assert rep.riemann[2, 0, n - 1, 0] == pytest.approx(-MODEL.eps * f_val, rel=1e-9)
    assert rep.riemann[n - 1, 0, n - 1, 0] == pytest.approx(-MODEL.eps, rel=1e-9)


def test_weyl_is_shift_block():
    rep = curvature_at(PATCH, POINT)
    n = MODEL.n
    assert rep.weyl[n - 1, 0, n - 1, 0] == pytest.approx(-MODEL.eps, rel=1e-9)
    # the four index placements of the single block entry
    assert rep.norm_weyl == pytest.approx(2.0, rel=1e-9)
    assert rep.norm_weyl > 0


def test_symmetry_residuals():
    rep = curvature_at(PATCH, POINT)
    for name, value in rep.symmetry_residuals.items():
        assert value < 1e-10, name


def test_symmetry_residuals_larger_model():
    rep = curvature_at(PATCH7, POINT7)
    for name, value in rep.symmetry_residuals.items():
        assert value < 1e-10, name
    assert rep.scalar == pytest.approx(0.0, abs=1e-11)


def test_flat_control_kills_curvature():
    rep = curvature_at(flat_patch(MODEL), POINT)
    assert rep.norm_riemann < 1e-9
    assert rep.norm_weyl < 1e-9


# -- parallelism ----------------------------------------------------------------


def test_weyl_parallel_on_family():
    rng = np.random.default_rng(11)
    for _ in range(5):
        t = float(np.exp(rng.uniform(-np.log(Q), np.log(Q))))
        v = rng.uniform(-1.0, 1.0, MODEL.m)
        assert nabla_weyl_residual(PATCH, (t, 0.0, v)) < 1e-5


def test_weyl_parallel_larger_model():
    assert nabla_weyl_residual(PATCH7, POINT7) < 1e-5


def test_riemann_not_parallel():
    assert nabla_riemann_norm(PATCH, POINT) > 1e-3
    assert nabla_riemann_norm(PATCH7, POINT7) > 1e-3


def test_residual_stable_under_step_halving():
    a = nabla_weyl_residual(PATCH, POINT, derivative_step=1e-3)
    b = nabla_weyl_residual(PATCH, POINT, derivative_step=5e-4)
    assert a < 1e-5 and b < 1e-5


def test_symmetric_control():
    patch = MetricPatch(MODEL, profile=ConstantProfile(2.0), shift_rows=zero_rows(MODEL))
    rep = curvature_at(patch, POINT)
    assert rep.norm_riemann > 1.0
    assert rep.norm_weyl < 1e-12          # pure-trace curvature: conformally flat
    assert rep.norm_nabla_riemann < 1e-9  # locally symmetric
    with pytest.raises(ValueError):
        nabla_weyl_residual(patch, POINT)


def test_flat_control_raises_on_ratios():
    patch = flat_patch(MODEL)
    with pytest.raises(ValueError):
        nabla_riemann_norm(patch, POINT)


def test_perturbed_metric_is_flagged():
    # kappa -> kappa * (1 + s t) rescales the Weyl block by the factor, so
    # |nabla W|/|W| must equal s/(1 + s t); the engine has to land on that
    # law, which also pins it strictly below s itself.
    t = POINT[0]
    for slope in (0.01, 0.02):
        res = nabla_weyl_residual(perturbed_patch(MODEL, slope), POINT)
        assert res == pytest.approx(slope / (1.0 + slope * t), rel=1e-3)
        assert res > 5e-3
    assert nabla_weyl_residual(perturbed_patch(MODEL, 0.02), POINT) > 1e-2


# -- the null parallel distribution ---------------------------------------------


def test_olszak_dimension_is_two():
    assert olszak_dim(PATCH, POINT) == 2
    assert olszak_dim(PATCH7, POINT7) == 2


def test_olszak_gap_is_clean():
    rep = curvature_at(PATCH, POINT)
    s = rep.olszak_singulars
    assert s[2] > 0.5          # three solid directions in the constraint rows
    assert s[3] < 1e-10 * s[0]  # then nothing
    assert rep.olszak_dimension == 2


def test_rank_two_shift_shrinks_distribution():
    m = MODEL7.m
    rows = [[0] * m for _ in range(m)]
    rows[0][m - 1] = 1
    rows[1][m - 2] = 1
    patch = MetricPatch(MODEL7, shift_rows=tuple(tuple(r) for r in rows))
    assert olszak_dim(patch, POINT7) == 1


def test_degenerate_weyl_flags_full_dimension():
    assert olszak_dim(flat_patch(MODEL), POINT) == MODEL.n


# -- isometries -------------------------------------------------------------------


def test_scaling_generator_is_isometry():
    gh = make_gamma_hat(MODEL)
    rng = np.random.default_rng(5)
    for _ in range(4):
        pt = (rng.uniform(0.5, 2.0), rng.uniform(-1, 1), rng.uniform(-1, 1, MODEL.m))
        assert isometry_residual(PATCH, lambda x: act(gh, x), pt) < 1e-6


def test_function_space_element_is_isometry():
    basis = ct_eigenbasis(MODEL)
    element = HElement(MODEL, 0.0, basis[0])
    assert isometry_residual(PATCH, lambda x: act(element, x), POINT) < 1e-6


def test_supplied_jacobian_beats_differencing_at_scale():
    # coefficients ~2 q**9 put the s-image near 1e8: differencing loses
    # eps * |s| / step there, the closed-form Jacobian does not
    basis = ct_eigenbasis(MODEL)
    lagrangian = build_lagrangian(MODEL, basis)
    gh = make_gamma_hat(MODEL)
    sigma = build_lattice(MODEL, pi_map(MODEL, gh, lagrangian))
    element = lattice_element(sigma, (2, -1, 0, 2), lagrangian)
    pt = (0.9, 0.2, np.array([0.3, -0.6, 0.8]))
    exact = isometry_residual(
        PATCH,
        lambda x: act(element, x),
        pt,
        jacobian=lambda x: act_jacobian(element, x),
    )
    differenced = isometry_residual(PATCH, lambda x: act(element, x), pt)
    assert exact < 1e-7
    assert differenced > 1e-5


def test_jacobian_shape_is_checked():
    with pytest.raises(ValueError):
        isometry_residual(
            PATCH, lambda x: x, POINT, jacobian=lambda x: np.eye(2)
        )


def test_broken_map_is_flagged():
    gh = make_gamma_hat(MODEL)

    def broken(pt):
        t, s, v = act(gh, pt)
        return (t, 1.01 * s, v)

    assert isometry_residual(PATCH, broken, POINT) > 1e-3


def test_isometry_rejects_chart_exit():
    def escape(pt):
        return (pt[0] - 2.0, pt[1], pt[2])

    with pytest.raises(ValueError):
        isometry_residual(PATCH, escape, (1.0, 0.0, np.zeros(MODEL.m)))


# -- geodesics ----------------------------------------------------------------------


def test_incompleteness_witness():
    start = (1.0, 0.0, np.zeros(MODEL.m))
    velocity = np.concatenate([[-1.0, 0.3], np.zeros(MODEL.m)])
    rep = geodesic_trace(PATCH, start, velocity, affine_span=1.5)
    assert rep.reached_cutoff
    assert rep.witness_tau == pytest.approx(1.0 - 1e-3, abs=1e-9)
    assert rep.affinity_deviation < 1e-6
    assert rep.final_point[0] == pytest.approx(1e-3, rel=1e-6)


def test_vertical_geodesic_stays_level():
    velocity = np.concatenate([[0.0, 1.0], np.zeros(MODEL.m)])
    rep = geodesic_trace(PATCH, POINT, velocity, affine_span=1.0)
    assert rep.affinity_deviation == 0.0
    assert rep.final_point[0] == POINT[0]
    assert rep.witness_tau is None


def test_generic_geodesic_t_affine():
    velocity = np.concatenate([[1.0, -0.2], [0.1, 0.0, -0.3]])
    rep = geodesic_trace(PATCH, POINT, velocity, affine_span=1.0)
    assert rep.affinity_deviation < 1e-6
    assert rep.final_point[0] == pytest.approx(POINT[0] + 1.0, rel=1e-9)
    assert not rep.reached_cutoff


def test_geodesic_rejects_bad_start():
    with pytest.raises(ValueError):
        geodesic_trace(PATCH, (-1.0, 0.0, np.zeros(MODEL.m)), np.ones(MODEL.n))


# -- report serialization --------------------------------------------------------------


def test_report_serializes():
    rep = curvature_at(PATCH, POINT)
    data = rep.to_json_dict()
    encoded = json.loads(json.dumps(data))
    assert encoded["olszak_dimension"] == 2
    assert encoded["norm_weyl"] == pytest.approx(2.0, rel=1e-9)
    assert set(encoded["symmetry_residuals"]) == {
        "antisymmetry_first_pair",
        "antisymmetry_second_pair",
        "pair_interchange",
        "first_bianchi",
        "weyl_trace_free",
    }
    assert encoded["point"]["v"] == [0.4, -0.2, 0.9]
    assert encoded["step"] == pytest.approx(1e-4)
