import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shearlab.errors import ConfigurationError, DataError, DegenerateFlowError
from shearlab.grid import build_grid
from shearlab.shear import (FlowValidationParams, ShearFlow, builtin_flow, consistency_check,
                            critical_points, equivalence_constant, load_tabulated_flow,
                            track_critical_points, validate_monotone, validate_nondegenerate,
                            validate_taylor)

TORUS = build_grid("torus", 256)
CHANNEL = build_grid("channel", 129)
LINE = build_grid("truncated_line", 257, half_width=8)


def cubic():
    return ShearFlow(eval=lambda t, y: np.asarray(y) ** 3, d_y=lambda t, y: 3 * np.asarray(y) ** 2,
                     d_yy=lambda t, y: 6 * np.asarray(y), name="cubic")


@pytest.mark.parametrize("family,params,grid", [
    ("couette", {}, LINE),
    ("perturbed_monotone", {"a": 0.3, "omega": 2.0}, LINE),
    ("decaying_sine", {"nu": 0.05, "amplitude": 1.5}, TORUS),
    ("static_sine", {"phase": 0.3}, TORUS),
    ("parabola", {}, CHANNEL),
    ("zero", {}, CHANNEL),
])
def test_builtin_derivatives_consistent(family, params, grid):
    flow = builtin_flow(family, **params)
    err = consistency_check(flow, np.linspace(0, 3, 7), grid.points)
    assert max(err.values()) < flow.consistency_tol


def test_couette_closures():
    flow = builtin_flow("couette")
    y = np.linspace(-3, 3, 11)
    assert np.all(flow.d_y(1.0, y) == 1) and np.all(flow.d_yy(1.0, y) == 0)
    assert np.all(flow.d_ty(1.0, y) == 0)


def test_decaying_sine_time_derivative():
    nu = 1e-3
    flow = builtin_flow("decaying_sine", nu=nu)
    y = TORUS.points
    for t in (0.0, 10.0, 500.0):
        np.testing.assert_allclose(flow.d_ty(t, y), -nu * math.exp(-nu * t) * np.cos(y), atol=1e-18)
        assert np.max(np.abs(flow.d_ty(t, y))) <= nu <= nu**0.75


def test_builtin_flow_errors():
    with pytest.raises(ConfigurationError):
        builtin_flow("vortex")
    with pytest.raises(ConfigurationError):
        builtin_flow("decaying_sine")


def test_critical_point_examples():
    assert critical_points(builtin_flow("static_sine"), 3.0, TORUS) == pytest.approx(
        [-np.pi / 2, np.pi / 2], abs=1e-12)
    assert critical_points(builtin_flow("couette"), 0.0, LINE) == []
    assert critical_points(builtin_flow("parabola"), 0.0, CHANNEL) == pytest.approx([0.0], abs=1e-14)


@pytest.mark.parametrize("phase", [0.0, 0.4, 1.3, 2.9, -2.2])
def test_critical_points_residual_and_modulo(phase):
    flow = builtin_flow("static_sine", phase=phase)
    pts = critical_points(flow, 0.0, TORUS)
    assert len(pts) == 2
    assert all(-np.pi <= p < np.pi for p in pts)
    assert np.max(np.abs(flow.d_y(0.0, np.array(pts)))) <= 1e-10


def test_touching_root_is_found():
    # d_yV = 3y^2 has no sign change at 0
    g = build_grid("channel", 128)   # even n: 0 is not a grid point
    pts = critical_points(cubic(), 0.0, g)
    assert len(pts) == 1 and abs(pts[0]) < 1e-5
    assert abs(cubic().d_y(0.0, np.array(pts))[0]) <= 1e-10


def test_too_many_critical_points():
    wiggly = builtin_flow("static_sine")
    fast = ShearFlow(eval=lambda t, y: np.sin(40 * y), d_y=lambda t, y: 40 * np.cos(40 * y),
                     d_yy=lambda t, y: -1600 * np.sin(40 * y), name="fast")
    assert len(critical_points(wiggly, 0.0, TORUS)) == 2
    with pytest.raises(DegenerateFlowError):
        critical_points(fast, 0.0, build_grid("torus", 1024))
    with pytest.raises(DegenerateFlowError):
        critical_points(builtin_flow("zero"), 0.0, TORUS)


def test_track_is_continuous_for_slow_flow():
    flow = builtin_flow("static_sine")
    moving = ShearFlow(eval=lambda t, y: np.sin(y + 0.01 * t), d_y=lambda t, y: np.cos(y + 0.01 * t),
                       d_yy=lambda t, y: -np.sin(y + 0.01 * t), name="moving")
    tr = track_critical_points(moving, TORUS, np.linspace(0, 10, 21))
    assert tr.continuous and tr.count_per_time == [2] * 21
    assert tr.max_jump < 0.2
    jumpy = ShearFlow(eval=lambda t, y: np.sin(y + t), d_y=lambda t, y: np.cos(y + t),
                      d_yy=lambda t, y: -np.sin(y + t), name="jumpy")
    assert not track_critical_points(jumpy, TORUS, [0.0, 1.0]).continuous
    assert track_critical_points(flow, TORUS, [0.0]).continuous


# -- monotone ----------------------------------------------------------------

def test_validate_monotone_examples():
    rep = validate_monotone(builtin_flow("couette"), FlowValidationParams(c=1.0), LINE)
    assert rep.passed and rep.measured["inf_abs_dyV"] == 1.0
    rep = validate_monotone(builtin_flow("perturbed_monotone", a=0.1),
                            FlowValidationParams(T=10, c=0.9), LINE)
    assert rep.passed and rep.measured["inf_abs_dyV"] >= 0.9
    rep = validate_monotone(builtin_flow("static_sine"), FlowValidationParams(c=0.1), TORUS)
    assert not rep.passed and rep.failures


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 2.0))
def test_validate_monotone_couette_threshold(c):
    rep = validate_monotone(builtin_flow("couette"), FlowValidationParams(c=c, time_samples=3), LINE)
    assert rep.passed == (c <= 1.0)


def test_report_serialisation():
    rep = validate_monotone(builtin_flow("couette"), FlowValidationParams(c=1.0), LINE)
    d = rep.to_dict()
    assert d["passed"] is True and "lattice" in d
    assert "201 time samples" in rep.to_text()


def test_validation_params_checks():
    with pytest.raises(ConfigurationError):
        FlowValidationParams(g0=0)
    with pytest.raises(ConfigurationError):
        FlowValidationParams(m0=1.5)
    with pytest.raises(ConfigurationError):
        FlowValidationParams(r0=-1)


# -- nondegenerate --------------------------------------------------------------

def test_nondegenerate_static_pair_passes():
    p = FlowValidationParams(T=10, r=1, g0=4, g1=4, N=2)
    s = builtin_flow("static_sine")
    rep = validate_nondegenerate(s, s, p, TORUS, nu=1e-3)
    assert rep.passed, rep.failures
    assert rep.measured["sup_abs_dtyU"] == 0.0


def test_nondegenerate_decaying_sine_passes():
    nu = 1e-3
    rep = validate_nondegenerate(builtin_flow("decaying_sine", nu=nu), builtin_flow("static_sine"),
                                 FlowValidationParams(T=100, r=1, g0=4, g1=4), TORUS, nu=nu)
    assert rep.passed, rep.failures


def test_nondegenerate_shifted_critical_points_fail():
    rep = validate_nondegenerate(builtin_flow("static_sine"), builtin_flow("static_sine", phase=0.5),
                                 FlowValidationParams(T=1), TORUS, nu=1e-3)
    assert not rep.passed
    assert not rep.checks["critical_points_shared"]
    assert not rep.checks["sign_agreement"]


def test_nondegenerate_fast_reference_fails():
    nu = 1e-4
    fast = builtin_flow("decaying_sine", nu=1e-2)
    rep = validate_nondegenerate(fast, fast, FlowValidationParams(T=1), TORUS, nu=nu)
    assert not rep.checks["slow_reference"]


def test_nondegenerate_requires_torus():
    s = builtin_flow("static_sine")
    with pytest.raises(ConfigurationError):
        validate_nondegenerate(s, s, FlowValidationParams(), CHANNEL, nu=1e-3)


# -- Taylor ------------------------------------------------------------------------

def test_taylor_examples():
    p = FlowValidationParams(m0=1, g3=0.5, r0=0.5, g2=1)
    assert validate_taylor(builtin_flow("parabola"), p, CHANNEL, nu=1e-2).passed
    assert not validate_taylor(cubic(), FlowValidationParams(m0=1, g3=1, r0=0.5), CHANNEL, nu=1e-2).passed
    assert validate_taylor(cubic(), FlowValidationParams(m0=2, g3=1 / 3, r0=0.5), CHANNEL, nu=1e-2).passed
    rep = validate_taylor(builtin_flow("couette"), FlowValidationParams(), CHANNEL, nu=1e-2)
    assert rep.passed and rep.measured["max_critical_points"] == 0


def test_taylor_time_dependence_bound():
    flow = builtin_flow("perturbed_monotone", a=0.1, omega=1.0)
    rep = validate_taylor(flow, FlowValidationParams(T=5, g2=1), CHANNEL, nu=1e-2)
    assert not rep.checks["slow_time_dependence"]


# -- equivalence constant -------------------------------------------------------------

def test_equivalence_constant_examples():
    s = builtin_flow("static_sine")
    times = np.linspace(0, 1, 3)
    eq = equivalence_constant(s, s, TORUS, times, g0_floor=4.0)
    assert eq.sampled == 1.0 and eq.value == 4.0
    two = builtin_flow("static_sine", amplitude=2.0)
    assert equivalence_constant(two, s, TORUS, times).value == pytest.approx(2.0, rel=1e-14)
    nu = 1e-3
    eq = equivalence_constant(builtin_flow("decaying_sine", nu=nu), s, TORUS, np.linspace(0, 100, 201))
    assert eq.value <= math.exp(0.1) * (1 + 1e-14)
    assert eq.value == pytest.approx(math.exp(0.1), rel=1e-12)


def test_equivalence_constant_symmetric_and_pointwise():
    s = builtin_flow("static_sine")
    v = builtin_flow("decaying_sine", nu=1e-3, amplitude=0.7)
    times = np.linspace(0, 200, 11)
    a = equivalence_constant(v, s, TORUS, times).value
    b = equivalence_constant(s, v, TORUS, times).value
    assert a == b
    y = TORUS.points
    for t in times:
        crit = critical_points(s, t, TORUS)
        keep = np.min([TORUS.distance(y, c) for c in crit], axis=0) >= 1e-3
        dv, du = np.abs(v.d_y(t, y))[keep], np.abs(s.d_y(t, y))[keep]
        assert np.all(du / a <= dv * (1 + 1e-14)) and np.all(dv <= a * du * (1 + 1e-14))


# -- tabulated flows ---------------------------------------------------------------------

def test_tabulated_flow_from_csv(tmp_path):
    ts = np.linspace(0, 2, 21)
    ys = np.linspace(-1, 1, 81)
    path = tmp_path / "flow.csv"
    with open(path, "w") as fh:
        fh.write("t,y,V\n")
        for t in ts:
            for y in ys:
                fh.write(f"{float(t)!r},{float(y)!r},{float(1 - y**2 + 0.01 * t * y)!r}\n")
    flow = load_tabulated_flow(path)
    assert flow.tabulated and flow.consistency_tol == 1e-4
    yq = np.linspace(-0.9, 0.9, 13)
    err = consistency_check(flow, [0.5, 1.0, 1.5], yq)
    assert max(err.values()) < 1e-4
    np.testing.assert_allclose(flow.d_y(1.0, yq), -2 * yq + 0.01, atol=1e-4)
    np.testing.assert_allclose(flow.d_ty(1.0, yq), 0.01, atol=1e-4)


def test_tabulated_flow_rejects_irregular(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,y,V\n0,0,1\n0,1,2\n1,0,3\n")
    with pytest.raises(DataError):
        load_tabulated_flow(path)
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        load_tabulated_flow(path)
