import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from ppf_lab.core.errors import BundleError, ConfigurationError, ContractViolation
from ppf_lab.models.states import InjectionSample, StateEstimate
from ppf_lab.services.case_service import build_ybus
from ppf_lab.services.pipeline_service import (
    assemble_states,
    branch_labels,
    estimate_branch_flows,
    evaluate_methods,
    load_bundle,
    predict_components,
    predict_states,
    response_labels,
    save_bundle,
    split_buses,
    state_layout,
    train_method,
    tune_alpha,
    tune_gamma,
)
from ppf_lab.services.powerflow_service import branch_flows_batch, solve_pf
from ppf_lab.services.scenario_service import state_sample
from ppf_lab.tests.helpers import case14, linear_dataset, tiny_training, triangle

PIPELINE_LOGGER = "ppf_lab.services.pipeline_service"


def assert_same_network(test, a, b):
    test.assertEqual(a.layer_dims, b.layer_dims)
    for wa, wb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(wa, wb)
    for sa, sb in ((a.input_standardizer, b.input_standardizer), (a.output_standardizer, b.output_standardizer)):
        np.testing.assert_array_equal(sa.mean, sb.mean)
        np.testing.assert_array_equal(sa.std, sb.std)


class TestSplitBuses(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        # Sample stds close to 1e-4, 5e-3 and 2e-3
        z = rng.standard_normal((400, 3))
        z = (z - z.mean(axis=0)) / z.std(axis=0, ddof=1)
        self.mags = 1.0 + z * [1e-4, 5e-3, 2e-3]

    def test_threshold(self):
        split = split_buses(self.mags, 1e-3)
        self.assertEqual(split.small_std, [0])
        self.assertEqual(split.big_std, [1, 2])
        np.testing.assert_allclose(split.per_bus_std, [1e-4, 5e-3, 2e-3], rtol=1e-10)

    def test_extremes(self):
        self.assertEqual(split_buses(self.mags, 0.0).big_std, [0, 1, 2])
        self.assertEqual(split_buses(self.mags, math.inf).small_std, [0, 1, 2])

    def test_negative_gamma(self):
        with self.assertRaises(ConfigurationError):
            split_buses(self.mags, -1e-3)

    def test_needs_two_rows(self):
        with self.assertRaises(ContractViolation):
            split_buses(self.mags[:1], 1e-3)


class TestTrainMethods(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.case = case14()
        cls.dataset = linear_dataset(cls.case, split=(80, 20, 20), seed=3)
        cls.training = tiny_training(epochs=3)

    def test_linear_method_exact_on_affine_data(self):
        bundle = train_method("M1", self.case, self.dataset, self.training, 0).bundle
        x, a, m = self.dataset.part("test")
        angles, mags = predict_components(bundle, x)
        np.testing.assert_allclose(angles, a, atol=1e-8)
        np.testing.assert_allclose(mags, m, atol=1e-8)
        self.assertEqual(set(bundle.components), {"linear"})

    def test_joint_network_shapes(self):
        result = train_method("M2", self.case, self.dataset, self.training, 0)
        self.assertEqual(set(result.histories), {"joint"})
        angles, mags = predict_components(result.bundle, self.dataset.part("test")[0])
        self.assertEqual(angles.shape, (20, 13))
        self.assertEqual(mags.shape, (20, 9))

    def test_m4_without_split_or_difference_term_matches_m3(self):
        m3 = train_method("M3", self.case, self.dataset, self.training, 7).bundle
        m4 = train_method("M4", self.case, self.dataset, self.training, 7, gamma=0.0, alpha=0.0).bundle
        self.assertEqual(m4.split.big_std, list(range(9)))
        self.assertNotIn("magnitude_linear", m4.components)
        assert_same_network(self, m3.components["angle"], m4.components["angle"])
        assert_same_network(self, m3.components["magnitude"], m4.components["magnitude"])

        x = self.dataset.part("test")[0]
        for got, want in zip(predict_components(m4, x), predict_components(m3, x)):
            np.testing.assert_array_equal(got, want)

    def test_m4_all_linear_magnitudes_match_m1(self):
        m1 = train_method("M1", self.case, self.dataset, self.training, 7).bundle
        m3 = train_method("M3", self.case, self.dataset, self.training, 7).bundle
        with self.assertLogs(PIPELINE_LOGGER, level="WARNING"):
            m4 = train_method("M4", self.case, self.dataset, self.training, 7, gamma=math.inf, alpha=0.0).bundle
        self.assertNotIn("magnitude", m4.components)

        x = self.dataset.part("test")[0]
        angles4, mags4 = predict_components(m4, x)
        _, mags1 = predict_components(m1, x)
        angles3, _ = predict_components(m3, x)
        np.testing.assert_allclose(mags4, mags1, atol=1e-10)
        np.testing.assert_array_equal(angles4, angles3)

    def test_multitask_training_records_alpha(self):
        training = tiny_training(epochs=2)
        result = train_method("M4", self.case, self.dataset, training, 1, gamma=1e-3, alpha=1.0)
        self.assertEqual(result.bundle.alpha, 1.0)
        self.assertEqual(len(result.histories["angle"].records), 2)

    def test_unknown_method(self):
        with self.assertRaises(ConfigurationError):
            train_method("M5", self.case, self.dataset, self.training, 0)

    def test_dataset_for_other_case(self):
        with self.assertRaises(ContractViolation):
            train_method("M1", triangle(), self.dataset, self.training, 0)

    def test_known_quantities_copied(self):
        bundle = train_method("M1", self.case, self.dataset, self.training, 0).bundle
        states = predict_states(bundle, self.dataset.part("test")[0])
        self.assertEqual(states.v_mag.shape, (20, 14))
        held = np.r_[self.case.slack_index, self.case.pv_indices]
        np.testing.assert_array_equal(states.v_mag[:, held], np.tile(self.case.v_setpoint[held], (20, 1)))
        np.testing.assert_array_equal(states.v_ang[:, self.case.slack_index], self.case.slack_angle)


class TestBundlePersistence(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.case = case14()
        self.dataset = linear_dataset(self.case, split=(60, 10, 10), seed=4)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        training = tiny_training(epochs=2)
        x = self.dataset.part("test")[0]
        for method, gamma in (("M1", None), ("M4", 5e-3)):
            bundle = train_method(method, self.case, self.dataset, training, 2, gamma=gamma).bundle
            loaded = load_bundle(save_bundle(bundle, self.dir / method))
            self.assertEqual(loaded.method_id, method)
            self.assertEqual(set(loaded.components), set(bundle.components))
            for got, want in zip(predict_components(loaded, x), predict_components(bundle, x)):
                np.testing.assert_array_equal(got, want)
        self.assertEqual(loaded.split.small_std, bundle.split.small_std)
        self.assertEqual(loaded.provenance["run_seed"], 2)

    def test_retraining_reproduces_manifest_bytes(self):
        training = tiny_training(epochs=2)
        saved = []
        for attempt in ("first", "second"):
            result = train_method("M4", self.case, self.dataset, training, 3, gamma=5e-3)
            self.assertGreaterEqual(result.seconds, 0.0)
            self.assertNotIn("train_seconds", result.bundle.provenance)
            saved.append(save_bundle(result.bundle, self.dir / attempt))
        first, second = saved
        self.assertEqual((first / "manifest.yaml").read_bytes(), (second / "manifest.yaml").read_bytes())
        for component in sorted(p.name for p in first.glob("*.npz")):
            with np.load(first / component) as a, np.load(second / component) as b:
                self.assertEqual(sorted(a.files), sorted(b.files))
                for key in a.files:
                    np.testing.assert_array_equal(a[key], b[key])

    def test_missing_bundle(self):
        with self.assertRaises(BundleError) as ctx:
            load_bundle(self.dir / "M3")
        self.assertIn("M3", str(ctx.exception))


class TestSweeps(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.training = tiny_training(epochs=2)

    def test_single_gamma_candidate(self):
        ds = linear_dataset(case14(), seed=5)
        best, points = tune_gamma([2e-3], ds, self.training.M4, 0, epochs=1)
        self.assertEqual(best, 2e-3)
        self.assertEqual(len(points), 1)

    def test_constant_magnitudes_tie_to_largest_gamma(self):
        ds = linear_dataset(case14(), seed=6, constant_magnitudes=True)
        with self.assertLogs(PIPELINE_LOGGER, level="WARNING") as logs:
            best, points = tune_gamma([1e-6, 1e-3, 1e-2], ds, self.training.M4, 0)
        self.assertEqual(best, 1e-2)
        for point in points:
            self.assertEqual(point.detail["n_network"], 0)
            self.assertLess(point.score, 1e-10)
        self.assertTrue(any("purely linear" in line for line in logs.output))

    def test_gamma_candidates_required(self):
        ds = linear_dataset(case14(), seed=5)
        with self.assertRaises(ConfigurationError):
            tune_gamma([], ds, self.training.M4, 0)
        with self.assertRaises(ConfigurationError):
            tune_gamma([-1.0], ds, self.training.M4, 0)

    def test_alpha_sweep(self):
        case = triangle()
        ds = linear_dataset(case, split=(40, 10, 10), seed=8)
        best, points = tune_alpha([0.0, 1.0], case, ds, self.training.M4, 0)
        self.assertIn(best, (0.0, 1.0))
        self.assertEqual([p.value for p in points], [0.0, 1.0])
        for point in points:
            self.assertEqual(set(point.detail), {"p_flow_rmse", "q_flow_rmse"})
            self.assertAlmostEqual(point.score, 0.5 * (point.detail["p_flow_rmse"] + point.detail["q_flow_rmse"]))
        self.assertEqual(best, min(points, key=lambda p: (p.score, p.value)).value)


class TestFlowsAndEvaluation(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.case = case14()
        cls.y = build_ybus(cls.case)
        cls.layout = state_layout(cls.case)

    def test_exact_states_reproduce_flows(self):
        sol = solve_pf(self.case, self.y, InjectionSample(self.case.base_injection))
        sample = state_sample(self.case, sol.state)
        states = assemble_states(self.layout, sample.y_a[None, :], sample.v_l[None, :])
        np.testing.assert_allclose(states.v_mag[0], sol.state.v_mag, atol=1e-12)
        np.testing.assert_allclose(states.v_ang[0], sol.state.v_ang, atol=1e-12)

        flows = estimate_branch_flows(self.case, states, self.y)
        ref = branch_flows_batch(self.case, sol.state.v_mag, sol.state.v_ang, self.y)
        np.testing.assert_allclose(flows.p_from, ref.p_from, atol=1e-10)
        np.testing.assert_allclose(flows.q_from, ref.q_from, atol=1e-10)

    def test_flow_error_is_local(self):
        rng = np.random.default_rng(1)
        v_mag = 1.0 + 0.02 * rng.standard_normal((1, 14))
        v_ang = 0.05 * rng.standard_normal((1, 14))
        base = estimate_branch_flows(self.case, StateEstimate(v_mag, v_ang), self.y)

        bus = self.case.index_of[9]
        bumped = v_ang.copy()
        bumped[0, bus] += 0.01
        moved = estimate_branch_flows(self.case, StateEstimate(v_mag, bumped), self.y)

        f, t = self.case.branch_endpoints
        incident = (f == bus) | (t == bus)
        changed = np.abs(moved.p_from[0] - base.p_from[0]) > 0
        np.testing.assert_array_equal(changed, incident)
        np.testing.assert_array_equal(moved.q_from[0, ~incident], base.q_from[0, ~incident])

    def test_assemble_checks_widths(self):
        with self.assertRaises(ContractViolation):
            assemble_states(self.layout, np.zeros((2, 12)), np.zeros((2, 9)))

    def test_branch_labels(self):
        labels = branch_labels(self.case)
        self.assertEqual(len(labels), 20)
        self.assertEqual(labels[0], "1-2")
        self.assertEqual(branch_labels(triangle()), ["1-2", "2-3", "1-3"])
        self.assertEqual(response_labels(triangle())["angle"], ["theta:2", "theta:3"])

    def test_report_structure(self):
        ds = linear_dataset(self.case, split=(60, 10, 15), seed=9)
        bundle = train_method("M1", self.case, ds, tiny_training(), 0).bundle
        report = evaluate_methods(self.case, ds, {"M1": bundle})

        self.assertEqual(report.methods(), ["M1"])
        results = report.results["M1"]
        self.assertEqual(set(results), {"angle", "angle_difference", "magnitude", "p_flow", "q_flow"})
        for quantity, res in results.items():
            self.assertLess(res.avg_rmse, 1e-7, quantity)
            self.assertLess(res.awd, 1e-7, quantity)
            self.assertEqual(res.per_response_wd.size, len(report.response_labels[quantity]))
        self.assertEqual(results["p_flow"].per_response_wd.shape, (20,))

    def test_report_rejects_other_layout(self):
        tri = triangle()
        bundle = train_method("M1", tri, linear_dataset(tri, seed=1), tiny_training(), 0).bundle
        with self.assertRaises(ContractViolation):
            evaluate_methods(self.case, linear_dataset(self.case), {"M1": bundle})


if __name__ == "__main__":
    unittest.main()
