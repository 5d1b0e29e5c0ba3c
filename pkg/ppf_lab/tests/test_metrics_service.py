import tempfile
import unittest
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from ppf_lab.core.errors import ContractViolation, InputFileNotFound
from ppf_lab.models.reports import EvalReport, ResponseMatrixPair
from ppf_lab.services.metrics_service import (
    angle_differences,
    average_rmse,
    awd,
    evaluate,
    moment_maes,
    read_report_csv,
    render_report_table,
    wasserstein1,
    write_distance_profile,
    write_report_csv,
)
from ppf_lab.tests.helpers import triangle


def brute_force_w1(a, b):
    """Integrate |F_a - F_b| on a fine grid."""
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    grid = np.linspace(lo, hi, 200001)
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.sum(np.abs(fa - fb)[:-1] * np.diff(grid)))


class TestAverageRmse(unittest.TestCase):

    def test_perfect_estimate(self):
        truth = np.random.default_rng(0).standard_normal((20, 3))
        self.assertEqual(average_rmse(ResponseMatrixPair(truth.copy(), truth)), 0.0)

    def test_single_column(self):
        pair = ResponseMatrixPair(np.array([3.0, 4.0]), np.zeros(2))
        self.assertAlmostEqual(average_rmse(pair), np.sqrt(12.5), places=12)

    def test_constant_offset(self):
        truth = np.random.default_rng(1).standard_normal((30, 4))
        self.assertAlmostEqual(average_rmse(ResponseMatrixPair(truth - 0.3, truth)), 0.3, places=12)

    def test_no_responses(self):
        pair = ResponseMatrixPair(np.zeros((5, 0)), np.zeros((5, 0)))
        self.assertEqual(average_rmse(pair), 0.0)
        res = evaluate(np.zeros((5, 0)), np.zeros((5, 0)))
        self.assertEqual((res.avg_rmse, res.awd, res.e1, res.e2), (0.0, 0.0, 0.0, 0.0))
        self.assertEqual(res.per_response_wd.shape, (0,))

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            ResponseMatrixPair(np.zeros((3, 2)), np.zeros((3, 1)))

    def test_non_finite_rejected(self):
        with self.assertRaises(ContractViolation):
            ResponseMatrixPair(np.array([np.nan]), np.array([0.0]))


class TestWasserstein(unittest.TestCase):

    def test_known_values(self):
        self.assertAlmostEqual(wasserstein1(np.array([0.0, 2.0]), np.array([1.0, 3.0])), 1.0, places=12)
        self.assertAlmostEqual(
            wasserstein1(np.array([0.0, 0.0, 0.0, 4.0]), np.array([1.0, 1.0, 1.0, 1.0])), 1.5, places=12
        )

    def test_identical_samples(self):
        a = np.random.default_rng(2).standard_normal(50)
        self.assertEqual(wasserstein1(a, a[::-1]), 0.0)

    def test_empty_samples(self):
        with self.assertRaises(ContractViolation):
            wasserstein1(np.array([]), np.array([1.0]))

    def test_unequal_sizes_match_scipy(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal(37), rng.normal(0.5, 2.0, 91)
        self.assertAlmostEqual(wasserstein1(a, b), wasserstein_distance(a, b), places=12)

    def test_against_cdf_integration(self):
        rng = np.random.default_rng(4)
        a, b = rng.uniform(0, 1, 40), rng.uniform(0.2, 1.5, 40)
        self.assertAlmostEqual(wasserstein1(a, b), brute_force_w1(a, b), delta=1e-4)

    def test_metric_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b, c = rng.standard_normal((3, 25))
            ab, ba = wasserstein1(a, b), wasserstein1(b, a)
            self.assertAlmostEqual(ab, ba, places=12)
            self.assertGreaterEqual(ab, 0.0)
            self.assertLessEqual(ab, wasserstein1(a, c) + wasserstein1(c, b) + 1e-10)

    def test_translation(self):
        a = np.random.default_rng(6).standard_normal(100)
        self.assertAlmostEqual(wasserstein1(a + 0.7, a), 0.7, places=12)


class TestAwdAndMoments(unittest.TestCase):

    def setUp(self):
        self.truth = np.random.default_rng(7).standard_normal((60, 3)) * [1.0, 0.1, 5.0]

    def test_awd_translation(self):
        mean_wd, per_column = awd(ResponseMatrixPair(self.truth + 0.25, self.truth))
        self.assertAlmostEqual(mean_wd, 0.25, places=12)
        np.testing.assert_allclose(per_column, 0.25, atol=1e-12)

    def test_awd_per_column_offsets(self):
        offsets = np.array([0.1, -0.2, 0.3])
        mean_wd, per_column = awd(ResponseMatrixPair(self.truth + offsets, self.truth))
        np.testing.assert_allclose(per_column, np.abs(offsets), atol=1e-12)
        self.assertAlmostEqual(mean_wd, 0.2, places=12)

    def test_moments_perfect(self):
        self.assertEqual(moment_maes(ResponseMatrixPair(self.truth.copy(), self.truth)), (0.0, 0.0))

    def test_moments_shift(self):
        e1, e2 = moment_maes(ResponseMatrixPair(self.truth - 0.4, self.truth))
        self.assertAlmostEqual(e1, 0.4, places=12)
        self.assertAlmostEqual(e2, 0.0, places=12)

    def test_moments_scaling(self):
        mu = self.truth.mean(axis=0)
        e1, e2 = moment_maes(ResponseMatrixPair(2.0 * (self.truth - mu) + mu, self.truth))
        self.assertAlmostEqual(e1, 0.0, places=10)
        self.assertAlmostEqual(e2, float(np.mean(self.truth.std(axis=0, ddof=1))), places=10)

    def test_moments_need_two_samples(self):
        with self.assertRaises(ContractViolation):
            moment_maes(ResponseMatrixPair(np.zeros((1, 2)), np.zeros((1, 2))))

    def test_rmse_bounds_mean_error(self):
        est = self.truth + np.random.default_rng(8).normal(0.1, 0.5, self.truth.shape)
        for i in range(3):
            pair = ResponseMatrixPair(est[:, i], self.truth[:, i])
            self.assertGreaterEqual(average_rmse(pair) + 1e-15, moment_maes(pair)[0])

    def test_evaluate_collects_families(self):
        res = evaluate(self.truth + 0.5, self.truth)
        self.assertAlmostEqual(res.avg_rmse, 0.5, places=12)
        self.assertAlmostEqual(res.awd, 0.5, places=12)
        self.assertAlmostEqual(res.e1, 0.5, places=12)
        self.assertEqual(res.per_response_wd.shape, (3,))


class TestAngleDifferences(unittest.TestCase):

    def test_cycle_sums_vanish(self):
        case = triangle()
        angles = np.random.default_rng(9).normal(0, 0.1, (10, 2))
        diff = angle_differences(case, angles)
        self.assertEqual(diff.shape, (10, 3))
        # Branches (1,2), (2,3), (1,3): around the loop 1->2->3->1
        np.testing.assert_allclose(diff[:, 0] + diff[:, 1] - diff[:, 2], 0.0, atol=1e-15)
        np.testing.assert_allclose(diff[:, 0], -angles[:, 0])


class TestReportEmission(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        truth = np.random.default_rng(10).standard_normal((20, 2))
        self.report = EvalReport()
        for method, shift in (("M1", 0.1), ("M4", 0.01)):
            self.report.results[method] = {
                "angle": evaluate(truth + shift, truth),
                "p_flow": evaluate(truth * (1 + shift), truth),
            }

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_round_trip(self):
        path = write_report_csv(self.report, self.dir / "report.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "method,quantity,rmse,awd,e1,e2")
        self.assertEqual(len(lines), 5)
        self.assertTrue(lines[1].startswith("M1,angle,"))

        loaded = read_report_csv(path)
        self.assertEqual(loaded.methods(), ["M1", "M4"])
        for method in ("M1", "M4"):
            for quantity in ("angle", "p_flow"):
                self.assertEqual(
                    loaded.results[method][quantity].as_row(), self.report.results[method][quantity].as_row()
                )

    def test_read_missing(self):
        with self.assertRaises(InputFileNotFound):
            read_report_csv(self.dir / "absent.csv")

    def test_table_layout(self):
        text = render_report_table(self.report)
        self.assertIn("angle [rad]", text)
        self.assertIn("p_flow [pu]", text)
        self.assertNotIn("magnitude [pu]", text)
        header = next(line for line in text.splitlines() if line.startswith("method"))
        for name in ("RMSE", "AWD", "E1", "E2"):
            self.assertIn(name, header)

    def test_distance_profile_sorted(self):
        path = write_distance_profile(
            {"M4": np.array([0.1, 0.3, 0.2]), "M1": np.array([1.0, 2.0, 3.0])},
            ["1-2", "2-3", "1-3"],
            self.dir / "w1.csv",
        )
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "method,rank,response,w1")
        self.assertEqual(lines[1], "M1,1,1-3,3")
        self.assertEqual(lines[4], "M4,1,2-3,0.29999999999999999")
        self.assertEqual([line.split(",")[2] for line in lines[4:]], ["2-3", "1-3", "1-2"])

    def test_distance_profile_label_count(self):
        with self.assertRaises(ContractViolation):
            write_distance_profile({"M1": np.zeros(2)}, ["a", "b", "c"], self.dir / "w1.csv")


if __name__ == "__main__":
    unittest.main()
