import tempfile
import unittest
from pathlib import Path

import numpy as np

from ppf_lab.core.errors import BundleError, ContractViolation, UnderdeterminedError
from ppf_lab.models.estimators import Standardizer
from ppf_lab.services.regression_service import fit_ols, load_linear, save_linear


class TestFitOls(unittest.TestCase):

    def test_recovers_affine_map(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((500, 20))
        h_true = rng.standard_normal((5, 21))
        y = x @ h_true[:, 1:].T + h_true[:, 0]

        model = fit_ols(x, y)
        self.assertEqual((model.d_in, model.d_out), (20, 5))
        np.testing.assert_allclose(model.h, h_true, atol=1e-8)

    def test_three_points_on_a_line(self):
        model = fit_ols(np.array([[0.0], [1.0], [2.0]]), np.array([1.0, 3.0, 5.0]))
        np.testing.assert_allclose(model.h, [[1.0, 2.0]], atol=1e-12)
        np.testing.assert_allclose(model.predict(np.array([[10.0]])), [[21.0]])

    def test_constant_target(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((50, 3))
        model = fit_ols(x, np.full((50, 1), 1.02))
        np.testing.assert_allclose(model.h[0, 0], 1.02, atol=1e-12)
        np.testing.assert_allclose(model.h[0, 1:], 0.0, atol=1e-12)

    def test_underdetermined(self):
        with self.assertRaises(UnderdeterminedError):
            fit_ols(np.zeros((3, 2)), np.zeros((3, 1)))

    def test_row_mismatch(self):
        with self.assertRaises(ContractViolation):
            fit_ols(np.zeros((10, 2)), np.zeros((9, 1)))

    def test_rank_deficient_design(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((40, 1))
        x = np.hstack([a, a, rng.standard_normal((40, 1))])
        y = 3.0 * a + 0.5
        with self.assertLogs("ppf_lab.services.regression_service", level="WARNING"):
            model = fit_ols(x, y)
        np.testing.assert_allclose(model.predict(x), y, atol=1e-10)
        # Minimum-norm solution splits the weight between the duplicated columns
        np.testing.assert_allclose(model.h[0, 1:3], [1.5, 1.5], atol=1e-10)

    def test_standardized_targets_give_same_predictions(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((80, 4))
        y = rng.standard_normal((80, 2)) * [0.01, 30.0] + [1.0, -5.0]
        scaler = Standardizer.fit(y)
        direct = fit_ols(x, y).predict(x)
        via_scaled = scaler.invert(fit_ols(x, scaler.apply(y)).predict(x))
        np.testing.assert_allclose(via_scaled, direct, rtol=1e-10, atol=1e-12)

    def test_predict_width_checked(self):
        model = fit_ols(np.arange(10.0).reshape(5, 2) ** 2, np.arange(5.0))
        with self.assertRaises(ContractViolation):
            model.predict(np.zeros((2, 3)))


class TestLinearPersistence(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        model = fit_ols(rng.standard_normal((30, 4)), rng.standard_normal((30, 2)))
        path = save_linear(model, self.dir / "linear.npz")
        loaded = load_linear(path)
        np.testing.assert_array_equal(loaded.h, model.h)

    def test_unreadable_file(self):
        path = self.dir / "broken.npz"
        path.write_bytes(b"not an archive")
        with self.assertRaises(BundleError):
            load_linear(path)

    def test_missing_file(self):
        with self.assertRaises(BundleError):
            load_linear(self.dir / "absent.npz")


if __name__ == "__main__":
    unittest.main()
