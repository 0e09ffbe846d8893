"""Determinants, winding counts, eigenvalue location, weight numbers."""

import numpy as np
import pytest
from scipy.optimize import brentq

from quasispec.errors import ConfigurationError, ContourError, ValidationError
from quasispec.piecewise import PiecewisePoly as P
from quasispec.regularization import ExpressionSpec, zero_expression
from quasispec.asymptotics import asymptotic_model
from quasispec.spectrum import (
    BoundaryForm,
    BoundarySpec,
    DeterminantEvaluator,
    ProblemSpec,
    SpectrumSettings,
    boundary_form,
    char_delta,
    char_delta_bullet,
    count_zeros,
    delta_derivative,
    disk_contour,
    locate_eigenvalues,
    rect_contour,
    weight_numbers,
)


def dirichlet2(weight_p=None):
    forms = (BoundaryForm(0, 0), BoundaryForm(1, 0))
    w = BoundaryForm(0, weight_p) if weight_p is not None else None
    return ProblemSpec(boundary=BoundarySpec(1, forms, w),
                       expression=zero_expression(2))


def clamped4():
    forms = (BoundaryForm(0, 0), BoundaryForm(0, 1),
             BoundaryForm(1, 0), BoundaryForm(1, 1))
    return ProblemSpec(boundary=BoundarySpec(2, forms),
                       expression=zero_expression(4))


def third_order(c1=0.0):
    forms = (BoundaryForm(0, 0), BoundaryForm(1, 0), BoundaryForm(1, 1))
    coeffs = (P.zero(), P.constant(c1)) if c1 else (P.zero(), P.zero())
    return ProblemSpec(boundary=BoundarySpec(1, forms),
                       expression=ExpressionSpec(3, (1, 0), coeffs))


def beam_roots(count):
    roots = []
    g = lambda r: np.cos(r) * np.cosh(r) - 1.0
    x = 3.0
    while len(roots) < count:
        if g(x) * g(x + 0.25) < 0:
            roots.append(brentq(g, x, x + 0.25, xtol=1e-13))
        x += 0.25
    return roots


class TestBoundaryData:
    def test_form_validation(self):
        with pytest.raises(ValidationError):
            BoundaryForm(2, 0)
        with pytest.raises(ValidationError):
            BoundaryForm(0, 1, u=(1.0, 2.0))

    def test_spec_side_order(self):
        with pytest.raises(ValidationError):
            BoundarySpec(1, (BoundaryForm(1, 0), BoundaryForm(0, 0)))

    def test_duplicate_orders(self):
        with pytest.raises(ValidationError):
            BoundarySpec(1, (BoundaryForm(0, 0), BoundaryForm(1, 1),
                             BoundaryForm(1, 1)))

    def test_weight_p_clash(self):
        with pytest.raises(ValidationError, match="p0"):
            BoundarySpec(1, (BoundaryForm(0, 0), BoundaryForm(1, 0)),
                         weight=BoundaryForm(0, 0))

    def test_boundary_form_values(self):
        col = np.array([2.0, 3.0, 5.0])
        assert boundary_form(BoundaryForm(0, 0), col) == 2.0
        assert boundary_form(BoundaryForm(0, 2), col) == 5.0
        assert boundary_form(BoundaryForm(0, 2, u=(10.0, 100.0)), col) == \
            pytest.approx(5.0 + 20.0 + 300.0)

    def test_problem_requires_one_operator(self):
        forms = (BoundaryForm(0, 0), BoundaryForm(1, 0))
        with pytest.raises(ValidationError):
            ProblemSpec(boundary=BoundarySpec(1, forms))


class TestCharDelta:
    def test_dirichlet_values(self):
        prob = dirichlet2()
        assert char_delta(prob, -np.pi ** 2) == pytest.approx(0.0, abs=1e-10)
        assert char_delta(prob, 0.0) == pytest.approx(1.0, rel=1e-10)

    def test_beam_root(self):
        prob = clamped4()
        r1 = beam_roots(1)[0]
        assert abs(char_delta(prob, r1 ** 4)) < 1e-6 * abs(char_delta(
            prob, (r1 + 0.3) ** 4))

    def test_bullet_closed_forms(self):
        # rows (U_0, U_2): determinant equals -C_1(1, lam) = -cosh(sqrt lam)
        prob = dirichlet2(weight_p=1)
        assert char_delta_bullet(prob, -np.pi ** 2) == pytest.approx(1.0, rel=1e-10)
        assert char_delta_bullet(prob, 0.0) == pytest.approx(-1.0, rel=1e-10)

    def test_bullet_requires_weight(self):
        with pytest.raises(ConfigurationError):
            char_delta_bullet(dirichlet2(), 1.0)

    def test_factored_route_matches_direct(self):
        # exact identity: Delta * det Y(0) = rho^P exp(rho w*) d_norm,
        # with Y(0) = diag(rho^j) Omega z(0) from the factored solution
        prob = third_order(c1=1.0)
        model = asymptotic_model(3, 1, (0, 0, 1))
        ev = DeterminantEvaluator(prob, model)
        om = model.frame.omegas
        wstar = np.sum(om[model.r:])
        for rc in (8.0 + 0.1j, 11.0 - 0.3j):
            rho = rc * model.e_dir
            direct = ev.delta(model.sign * rc ** 3)
            z0, _ = ev._z_pair(rho)
            detY0 = (np.prod([rho ** j for j in range(3)])
                     * np.linalg.det(model.frame.Omega) * np.linalg.det(z0))
            lhs = direct * detY0
            rhs = (rho ** sum(model.p_list) * np.exp(rho * wstar)
                   * ev.d_norm(rc))
            assert abs(lhs - rhs) < 1e-7 * max(abs(lhs), abs(rhs))

    def test_factored_laplace_identity_zero_coeff(self):
        # for zero coefficients both routes are exact: compare absolutely
        prob = third_order()
        model = asymptotic_model(3, 1, (0, 0, 1))
        ev = DeterminantEvaluator(prob, model)
        for rc in (3.0, 5.0 + 0.4j, 9.0 - 0.2j):
            lam = model.sign * rc ** 3
            direct = ev.delta(lam)
            om = model.frame.omegas
            rho = rc * model.e_dir
            wstar = np.sum(om[model.r:])
            # conversion factor: det A = 1/det Y(0); Y(0) = diag(rho^j) Omega
            detY0 = np.prod([rho ** j for j in range(3)]) * np.linalg.det(model.frame.Omega)
            lhs = direct * detY0
            rhs = rho ** sum(model.p_list) * np.exp(rho * wstar) * ev.d_norm(rc)
            assert abs(lhs - rhs) < 1e-9 * max(abs(lhs), abs(rhs))


class TestContours:
    def test_disk_counts(self):
        prob = dirichlet2()
        f = lambda lam: char_delta(prob, lam)
        c1, _ = count_zeros(f, disk_contour(-np.pi ** 2, 1.0))
        assert c1 == 1
        c0, _ = count_zeros(f, disk_contour(0.0, 1.0))
        assert c0 == 0

    def test_strip_box_two_roots(self):
        r1, r2 = beam_roots(2)
        prob = clamped4()
        model = asymptotic_model(4, 2, (0, 1, 0, 1))
        ev = DeterminantEvaluator(prob, model)
        f = ev.box_function(outer_radius=r2 + 2.0)
        pts = rect_contour(r1 - 0.5, r2 + 0.5, -1.0, 1.0, m=12)
        cnt, _ = count_zeros(f, pts)
        assert cnt == 2

    def test_polynomial_winding(self):
        f = lambda z: (z - 0.3) ** 2 * (z + 0.2 - 0.1j)
        cnt, _ = count_zeros(f, disk_contour(0.0, 1.0))
        assert cnt == 3

    def test_contour_touching_zero_retries(self):
        f = lambda z: z - 1.0
        # zero exactly on the contour: dilation must rescue the count
        cnt, _ = count_zeros(f, disk_contour(0.0, 1.0))
        assert cnt in (0, 1)


class TestDeltaDerivative:
    def test_linear(self):
        assert delta_derivative(lambda z: z, 0.0, 0.5) == pytest.approx(1.0)

    def test_dirichlet_analytic(self):
        # d/dlam [sinh(sqrt lam)/sqrt lam] at lam_1 = -pi^2 equals
        # -cos(pi)/(2 pi^2) in modulus
        prob = dirichlet2()
        f = lambda lam: char_delta(prob, lam)
        der = delta_derivative(f, -np.pi ** 2, 2.0)
        assert abs(der) == pytest.approx(1.0 / (2 * np.pi ** 2), rel=1e-8)

    def test_matches_finite_difference(self):
        prob = third_order(c1=1.0)
        f = lambda lam: char_delta(prob, lam)
        lam0 = 40.0 + 3.0j
        der = delta_derivative(f, lam0, 1.5)
        h = 1e-5 * abs(lam0)
        fd = (f(lam0 + h) - f(lam0 - h)) / (2 * h)
        assert abs(der - fd) < 1e-6 * abs(der)


class TestLocate:
    def test_dirichlet_classical(self):
        res = locate_eigenvalues(dirichlet2(), l_max=20)
        assert res.chi_cal == pytest.approx(0.0, abs=1e-12)
        for d in res.data:
            want = -(np.pi * d.l) ** 2
            assert abs(d.lam - want) < 1e-8 * abs(want)
            assert d.multiplicity == 1

    def test_beam(self):
        res = locate_eigenvalues(clamped4(), l_max=5)
        for d, want in zip(res.data, beam_roots(5)):
            assert abs(d.rho - want) < 1e-6

    def test_third_order_prediction_track(self):
        res = locate_eigenvalues(third_order(), l_max=12)
        growth = res.model.growth
        for d in res.data:
            if d.l >= 4:
                assert abs(d.rho - growth * (d.l + 1.0 / 6.0)) < 1e-6

    def test_l_min_filter(self):
        res = locate_eigenvalues(dirichlet2(), l_max=6, l_min=4)
        assert [d.l for d in res.data] == [4, 5, 6]

    def test_residual_contract(self):
        # every refined root satisfies |f| << boundary scale
        prob = clamped4()
        res = locate_eigenvalues(prob, l_max=5)
        model = res.model
        ev = DeterminantEvaluator(prob, model)
        for d in res.data:
            if d.l <= 2:
                continue
            f = ev.box_function(abs(d.rho) + 1.0)
            pts = rect_contour(d.rho.real - 0.5 * model.growth,
                               d.rho.real + 0.5 * model.growth,
                               d.rho.imag - 1.0, d.rho.imag + 1.0, m=8)
            boundary = max(abs(f(z)) for z in pts)
            assert abs(f(d.rho)) < 1e-9 * max(1.0, boundary)

    def test_count_equals_refined(self):
        # argument-principle count over the union of boxes equals the
        # number of refined roots: no loss, no duplication
        prob = third_order()
        res = locate_eigenvalues(prob, l_max=8)
        model = res.model
        ev = DeterminantEvaluator(prob, model)
        lo, hi = 4, 8
        f = ev.box_function(model.growth * (hi + 1.0))
        x0 = model.growth * (lo - 0.5 + float(np.real(res.chi_cal)))
        x1 = model.growth * (hi + 0.5 + float(np.real(res.chi_cal)))
        cnt, _ = count_zeros(f, rect_contour(x0, x1, -2.0, 2.0, m=24))
        got = sum(1 for d in res.data if lo <= d.l <= hi)
        assert cnt == got


class TestWeights:
    def test_dirichlet_weights(self):
        prob = dirichlet2(weight_p=1)
        res = weight_numbers(prob, locate_eigenvalues(prob, l_max=15))
        for d in res.data:
            want = -2.0 * (np.pi * d.l) ** 2
            assert abs(d.beta - want) < 1e-6 * abs(want)

    def test_requires_weight_form(self):
        prob = dirichlet2()
        res = locate_eigenvalues(prob, l_max=3)
        with pytest.raises(ConfigurationError):
            weight_numbers(prob, res)

    def test_direct_and_strip_routes_agree(self):
        # n=4 fixture where both routes are usable at moderate index
        forms = (BoundaryForm(0, 0), BoundaryForm(1, 0),
                 BoundaryForm(1, 1), BoundaryForm(1, 2))
        bnd = BoundarySpec(1, forms, weight=BoundaryForm(0, 2))
        coeffs = (P.constant(0.8), P.constant(1.0), P.constant(-0.6))
        prob = ProblemSpec(boundary=bnd,
                           expression=ExpressionSpec(4, (0, 0, 0), coeffs))
        res = locate_eigenvalues(prob, l_max=4)
        model = res.model
        from quasispec.spectrum import _beta_direct, _beta_strip
        ev = DeterminantEvaluator(prob, model)
        d = res.data[1]
        assert abs(d.rho) < ev.direct_limit
        b1, r1 = _beta_direct(ev, model, d, 0.1 * model.growth)
        b2, r2 = _beta_strip(ev, model, d, 0.1 * model.growth,
                             p0=2, p_r=model.p_r)
        assert abs(b1 - b2) < 1e-7 * abs(b1)
        assert abs(r1 - b1) < 1e-8 * abs(b1)
        assert abs(r2 - b2) < 1e-8 * abs(b2)


class TestClusterHandling:
    def test_double_zero_reported_with_multiplicity(self):
        from quasispec.spectrum import _find_disk_zeros
        f = lambda z: (z - 0.4 - 0.1j) ** 2 * (z + 1.2)
        out = _find_disk_zeros(f, 2.0, expected=3,
                               settings=SpectrumSettings())
        out.sort(key=lambda t: t[0].real)
        assert out[0][1] == 1 and abs(out[0][0] + 1.2) < 1e-8
        assert out[1][1] == 2 and abs(out[1][0] - (0.4 + 0.1j)) < 1e-5

    def test_simple_zeros_all_refined(self):
        from quasispec.spectrum import _find_disk_zeros
        roots = [0.3, -0.5 + 0.4j, 0.9j]
        f = lambda z: np.prod([z - r for r in roots])
        out = _find_disk_zeros(f, 1.5, expected=3,
                               settings=SpectrumSettings())
        assert len(out) == 3
        for r, m in out:
            assert m == 1
            assert min(abs(r - rr) for rr in roots) < 1e-9
