import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy import integrate

from experiments.services.exceptions import InvalidArgumentError
from experiments.services.legendre_gauss import (
    gauss_rule,
    legendre_eval,
    legendre_integral,
    legendre_integral_table,
    legendre_table,
    xi_coefficients,
)


class GaussRuleTests(SimpleTestCase):
    def test_one_point_rule_is_midpoint(self):
        rule = gauss_rule(1)
        assert_allclose(rule.nodes, [0.5], atol=1e-15)
        assert_allclose(rule.weights, [1.0], atol=1e-15)

    def test_two_point_rule(self):
        rule = gauss_rule(2)
        r3 = math.sqrt(3.0)
        assert_allclose(rule.nodes, [(3 - r3) / 6, (3 + r3) / 6], atol=1e-15)
        assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)

    def test_five_point_rule_integrates_degree_nine(self):
        rule = gauss_rule(5)
        self.assertAlmostEqual(rule.integrate(rule.nodes ** 9), 0.1, delta=1e-14)

    def test_exactness_up_to_degree_2k_minus_1(self):
        for k in range(1, 11):
            rule = gauss_rule(k)
            for j in range(2 * k):
                self.assertLess(abs(rule.integrate(rule.nodes ** j) - 1.0 / (j + 1)), 1e-12, (k, j))

    def test_rule_invariants(self):
        for k in (1, 2, 3, 7, 15, 18, 30):
            rule = gauss_rule(k)
            self.assertEqual(rule.k, k)
            self.assertTrue(np.all(rule.nodes > 0.0) and np.all(rule.nodes < 1.0))
            self.assertTrue(np.all(np.diff(rule.nodes) > 0.0))
            self.assertLess(abs(rule.weights.sum() - 1.0), 1e-14)
            assert_allclose(rule.nodes + rule.nodes[::-1], 1.0, atol=1e-14)

    def test_nodes_are_roots_of_pk(self):
        for k in (2, 5, 12):
            rule = gauss_rule(k)
            assert_allclose(legendre_eval(k, rule.nodes), 0.0, atol=1e-12)

    def test_invalid_order(self):
        with self.assertRaises(InvalidArgumentError):
            gauss_rule(0)

    def test_rule_arrays_are_read_only(self):
        with self.assertRaises(ValueError):
            gauss_rule(3).nodes[0] = 0.0


class LegendreTests(SimpleTestCase):
    def test_low_degrees(self):
        self.assertEqual(legendre_eval(0, 0.3), 1.0)
        self.assertAlmostEqual(legendre_eval(1, 1.0), math.sqrt(3.0), delta=1e-15)
        self.assertAlmostEqual(legendre_eval(1, 0.5), 0.0, delta=1e-15)

    def test_orthonormality(self):
        rule = gauss_rule(64)
        table = legendre_table(11, rule.nodes)
        gram = (table * rule.weights) @ table.T
        assert_allclose(gram, np.eye(11), atol=1e-12)

    def test_p2_p3_orthogonal_under_twenty_point_rule(self):
        rule = gauss_rule(20)
        value = rule.integrate(legendre_eval(2, rule.nodes) * legendre_eval(3, rule.nodes))
        self.assertLess(abs(value), 1e-14)

    def test_domain_checked(self):
        with self.assertRaises(InvalidArgumentError):
            legendre_eval(2, 1.5)
        with self.assertRaises(InvalidArgumentError):
            legendre_integral(2, -0.1)
        with self.assertRaises(InvalidArgumentError):
            legendre_eval(-1, 0.5)

    def test_integral_closed_forms(self):
        self.assertAlmostEqual(legendre_integral(0, 1.0), 1.0, delta=1e-15)
        self.assertAlmostEqual(legendre_integral(1, 1.0), 0.0, delta=1e-15)
        self.assertAlmostEqual(legendre_integral(0, 0.37), 0.37, delta=1e-15)

    def test_integral_matches_adaptive_quadrature(self):
        for j in range(8):
            expected, _ = integrate.quad(lambda x: legendre_eval(j, x), 0.0, 0.37, epsabs=1e-15)
            self.assertAlmostEqual(legendre_integral(j, 0.37), expected, delta=1e-13)

    def test_integral_differentiates_back(self):
        step = 1e-5
        for j in range(6):
            for c in (0.2, 0.5, 0.81):
                fd = (legendre_integral(j, c + step) - legendre_integral(j, c - step)) / (2 * step)
                self.assertAlmostEqual(fd, legendre_eval(j, c), delta=1e-6)

    def test_integral_table_shape(self):
        table = legendre_integral_table(4, np.array([0.1, 0.9]))
        self.assertEqual(table.shape, (4, 2))

    def test_xi_coefficients(self):
        xi = xi_coefficients(3)
        assert_allclose(xi, [0.5, 1 / (2 * math.sqrt(3)), 1 / (2 * math.sqrt(15))], rtol=1e-15)
