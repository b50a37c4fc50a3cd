"""Tests for the edge expansion fit and the smooth-part decomposition."""

import numpy as np
import pytest

from polyma import (
    MAProblem,
    ScalarField,
    op_solve,
    plt_forward,
    smooth_part,
    trace_from_function,
)
from polyma.expansion import (
    ExpansionError,
    edge_weight_field,
    fit_expansion,
    verify_log_coefficients,
)
from polyma.legendre import PLTGrid


def ylogy(v):
    v = np.asarray(v, dtype=float)
    return np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)


def square_dual(p, y):
    """Closed-form transform of sum l log l on the unit square.

    x(p) is the logistic map inverting p = log(x/(1-x)).
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    x = 1.0 / (1.0 + np.exp(-p))
    base = p * x - ylogy(x) - ylogy(1.0 - x)
    return base - ylogy(y) - ylogy(1.0 - y)


def make_grid(p, y, colfun):
    vals = colfun(p[None, :], y[:, None]) * np.ones((len(y), len(p)))
    return PLTGrid(p=p, y=y, values=vals)


# ---------------------------------------------------------------------------
# exact recovery of basis members


def test_fit_recovers_linear_log_profile():
    p = np.linspace(-1.0, 1.0, 17)
    y = np.linspace(0.0, 0.4, 25)
    g = make_grid(p, y, lambda pp, yy: 7.0 - ylogy(yy) + 3.0 * yy)
    fit = fit_expansion(g, order=3, window=(0.01, 0.4))
    assert np.all(fit.residual <= 1e-12)
    assert np.abs(fit.uhat[0] + 1.0).max() < 1e-9
    assert np.abs(fit.upoly[0] - 3.0).max() < 1e-8
    assert np.abs(fit.u0 - 7.0).max() < 1e-9
    assert np.abs(fit.uhat[1]).max() < 1e-7
    assert np.abs(fit.uhat[2]).max() < 1e-6


def test_fit_recovers_quadratic_coefficient():
    # stored coefficients carry the i! normalization: y^2/2 stores u2 = 1
    p = np.linspace(-1.0, 1.0, 17)
    y = np.linspace(0.0, 0.4, 25)
    g = make_grid(p, y, lambda pp, yy: 0.5 * pp**2 - ylogy(yy) + 0.5 * yy**2)
    fit = fit_expansion(g, order=3, window=(0.01, 0.4))
    assert np.all(fit.residual <= 1e-12)
    assert np.abs(fit.uhat[0] + 1.0).max() < 1e-9
    assert np.abs(fit.upoly[0]).max() < 1e-8
    assert np.abs(fit.upoly[1] - 1.0).max() < 1e-7
    assert np.abs(fit.u0 - 0.5 * fit.p**2).max() < 1e-9


def test_fit_chain_between_log_coefficients():
    # for u0 = p^4/12 the equation forces uhat1 = -p^2 and uhat2 = -uhat1''
    p = np.linspace(-1.0, 1.0, 41)
    y = np.linspace(0.0, 0.4, 33)
    g = make_grid(
        p, y,
        lambda pp, yy: pp**4 / 12.0 - pp**2 * ylogy(yy) + ylogy(yy) * yy)
    fit = fit_expansion(g, order=3, window=(0.01, 0.4))
    assert np.abs(fit.uhat[0] + fit.p**2).max() < 1e-7
    assert np.abs(fit.uhat[1] - 2.0).max() < 1e-6
    h = p[1] - p[0]
    d2 = (fit.uhat[0][2:] - 2 * fit.uhat[0][1:-1] + fit.uhat[0][:-2]) / h**2
    assert np.abs(d2 + fit.uhat[1][1:-1]).max() < 1e-4


def test_fit_randomized_basis_members():
    rng = np.random.default_rng(20240817)
    p = np.linspace(-0.8, 0.8, 23)
    y = np.linspace(0.0, 0.5, 41)
    for _ in range(5):
        cs = rng.uniform(-2.0, 2.0, size=7)
        def u(pp, yy, cs=cs):
            L = ylogy(yy)
            return (cs[0] * pp**2 + cs[1]
                    + cs[2] * L + cs[3] * yy
                    + 0.5 * cs[4] * yy * L + 0.5 * cs[5] * yy**2
                    + cs[6] / 6.0 * yy**2 * L)
        g = make_grid(p, y, u)
        fit = fit_expansion(g, order=3, window=(0.02, 0.5))
        assert np.all(fit.residual <= 1e-11)
        assert np.abs(fit.uhat[0] - cs[2]).max() < 1e-7
        assert np.abs(fit.upoly[0] - cs[3]).max() < 1e-7
        assert np.abs(fit.uhat[1] - cs[4]).max() < 1e-6
        assert np.abs(fit.upoly[1] - cs[5]).max() < 1e-6
        assert np.abs(fit.uhat[2] - cs[6]).max() < 1e-5


def test_fit_rows_layout():
    p = np.linspace(-1.0, 1.0, 9)
    y = np.linspace(0.0, 0.4, 25)
    g = make_grid(p, y, lambda pp, yy: 1.0 - ylogy(yy))
    fit = fit_expansion(g, order=2, window=(0.01, 0.4))
    rows = fit.to_rows()
    assert rows.shape == (9, 2 + 2 * 2)
    assert np.array_equal(rows[:, 0], fit.p)
    assert np.array_equal(rows[:, 1], fit.uhat[0])
    assert np.array_equal(rows[:, 2], fit.upoly[0])


# ---------------------------------------------------------------------------
# validation


def test_fit_rejects_bad_order_and_thin_windows():
    p = np.linspace(-1.0, 1.0, 9)
    y = np.linspace(0.0, 0.4, 25)
    g = make_grid(p, y, lambda pp, yy: 1.0 - ylogy(yy))
    with pytest.raises(ExpansionError, match="order"):
        fit_expansion(g, order=0)
    with pytest.raises(ExpansionError, match="order"):
        fit_expansion(g, order=6)
    with pytest.raises(ExpansionError, match="rows inside the fit window"):
        fit_expansion(g, order=3, window=(0.3, 0.35))


def test_fit_flags_degenerate_window():
    # rows packed into a 0.1% band cannot separate the basis columns
    p = np.linspace(-1.0, 1.0, 9)
    y = np.concatenate([[0.0], np.linspace(0.0999, 0.1, 14)])
    g = make_grid(p, y, lambda pp, yy: 1.0 - ylogy(yy))
    with pytest.raises(ExpansionError, match="ill-conditioned"):
        fit_expansion(g, order=3, window=(0.0998, 0.1001))


# ---------------------------------------------------------------------------
# coefficient identities


def test_verify_model_pair_weight_one():
    p = np.linspace(-0.5, 0.5, 33)
    y = np.linspace(0.0, 0.3, 61)
    g = make_grid(p, y, lambda pp, yy: 0.5 * pp**2 - ylogy(yy))
    fit = fit_expansion(g, order=3, window=(0.005, 0.3))
    rep = verify_log_coefficients(fit, lambda x, y: np.ones_like(np.asarray(x)))
    assert rep.uhat1_dev < 1e-7
    assert rep.uhat2_sup < 1e-6
    assert rep.uhat3_sup < 1e-5
    assert rep.identity_rel < 1e-6


def test_verify_compatible_square_closed_form(square):
    # all log coefficients beyond the first vanish for compatible data;
    # a deep window keeps the y^4 tail of the dual potential out of the fit
    h = ScalarField.constant(1.0)
    w = edge_weight_field(square, h, 1)
    p = np.linspace(-1.0, 1.0, 41)
    y = np.concatenate([[0.0], np.geomspace(1e-4, 0.012, 18)])
    g = PLTGrid(p=p, y=y, values=square_dual(p[None, :], y[:, None]))
    fit = fit_expansion(g, order=3, window=(8e-5, 0.014))
    rep = verify_log_coefficients(fit, w)
    assert rep.uhat1_dev <= 0.05
    assert rep.uhat2_sup <= 0.05
    assert rep.uhat3_sup <= 0.05
    assert rep.identity_rel <= 1e-3


def test_edge_weight_field_square_values(square):
    h = ScalarField.constant(1.0)
    w = edge_weight_field(square, h, 1)
    assert abs(w(0.5, 0.0) - 0.25) < 1e-14
    assert abs(w(0.25, 0.0) - 0.1875) < 1e-14
    assert abs(w(0.5, 0.5) - 0.125) < 1e-14


# ---------------------------------------------------------------------------
# discrete pipeline


def test_pipeline_uhat1_near_minus_one(square, square_solve):
    fn, _ = square_solve(128)
    g = plt_forward(fn, (0.25, 0.75, 0.0, 0.2))
    fit = fit_expansion(g, order=3)
    h = ScalarField.constant(1.0)
    rep = verify_log_coefficients(fit, edge_weight_field(square, h, 1))
    n = len(fit.p)
    central = fit.uhat[0][n // 4:n - n // 4]
    assert central.max() <= -0.95
    assert central.min() >= -1.05
    assert rep.identity_rel <= 0.05


def test_pipeline_window_stability(square_solve):
    # the y log y column is well separated; halving the window top moves
    # the extracted coefficient by far less than its tolerance band
    fn, _ = square_solve(128)
    g = plt_forward(fn, (0.25, 0.75, 0.0, 0.2))
    f1 = fit_expansion(g, order=3)
    f2 = fit_expansion(g, order=3, window=(0.005, 0.06))
    n = len(f1.p)
    c = slice(n // 4, n - n // 4)
    assert np.abs(f1.uhat[0][c] - f2.uhat[0][c]).max() < 0.01


def test_generic_dirichlet_identity(square):
    # boundary data x^2/2 + y^2/2 does not come from the edge equation, so
    # uhat1 tracks -u0''/w = -1/(x(1-x)) instead of -1
    h = ScalarField.constant(1.0)
    data = lambda x, y: 0.5 * x * x + 0.5 * y * y
    traces = [trace_from_function(square, i, data) for i in range(4)]
    prob = MAProblem(square, h, alphas=[0, 0, 0, 0], mode="guillemin",
                     resolution=128, gamma=0.4)
    fn = op_solve(prob, traces)
    g = plt_forward(fn, (0.25, 0.75, 0.0, 0.2))
    fit = fit_expansion(g, order=4, window=(0.001, 0.04))
    rep = verify_log_coefficients(fit, edge_weight_field(square, h, 1))
    assert rep.identity_rel <= 0.05
    assert rep.uhat1_dev >= 2.0
    n = len(fit.p)
    c = slice(n // 4, n - n // 4)
    pm = fit.p[c]
    target = -1.0 / (pm * (1.0 - pm))
    assert (np.abs(fit.uhat[0][c] - target) / np.abs(target)).max() <= 0.05


# ---------------------------------------------------------------------------
# smooth part


def test_smooth_part_bounded_seminorms(square_solve):
    fn, _ = square_solve(64)
    rep = smooth_part(fn, 1.0)
    assert len(rep.y_tops) == 3
    # seminorms of f = u - y log y stay put as the window shrinks to the edge
    assert rep.sup_fy.max() <= 2.0
    assert rep.sup_fy.max() / rep.sup_fy.min() < 1.5
    assert rep.sup_fyy.max() / rep.sup_fyy.min() < 2.0
    # the unsubtracted potential grows like |log y| with unit coefficient
    assert np.all(rep.logy_ratio >= 0.8)
    assert np.all(rep.logy_ratio <= 1.2)


def test_smooth_part_wrong_coefficient_blows_up(square_solve):
    fn, _ = square_solve(64)
    good = smooth_part(fn, 1.0)
    bad = smooth_part(fn, 2.0)
    assert bad.sup_fy.max() > 4.0 * good.sup_fy.max()


def test_smooth_part_rejects_vertex_window(square_solve):
    fn, _ = square_solve(64)
    with pytest.raises(ExpansionError, match="vertex"):
        smooth_part(fn, 1.0, window=(0.0, 0.4, 0.1))
