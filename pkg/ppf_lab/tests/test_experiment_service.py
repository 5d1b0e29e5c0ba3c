import os
import unittest

import numpy as np

from ppf_lab.cli.shared import load_run_config
from ppf_lab.core.config import REPO_ROOT
from ppf_lab.core.errors import ConfigurationError, ContractViolation
from ppf_lab.models.reports import EvalReport, MetricsReport
from ppf_lab.models.settings import RunConfig
from ppf_lab.services.experiment_service import (
    checks_frame,
    evaluate_seed,
    flow_rmse,
    ranking_checks,
    ranking_frame,
    run_ranking_experiment,
)
from ppf_lab.tests.helpers import CASE14_PATH, case14, tiny_training

# method -> (angle, angle_difference, p_flow, q_flow) average RMSE
ORDERED = {
    "M1": (4.0, 4.0, 4.0, 4.0),
    "M2": (2.0, 2.0, 3.0, 3.0),
    "M3": (1.5, 1.5, 2.0, 2.0),
    "M4": (1.5, 1.0, 1.0, 1.0),
}


def _metrics(value):
    return MetricsReport(avg_rmse=value, awd=0.0, e1=0.0, e2=0.0, per_response_wd=np.zeros(0))


def _report(**overrides):
    values = {**ORDERED, **overrides}
    report = EvalReport()
    for method, (angle, diff, p, q) in values.items():
        report.results[method] = {
            "angle": _metrics(angle),
            "angle_difference": _metrics(diff),
            "magnitude": _metrics(0.0),
            "p_flow": _metrics(p),
            "q_flow": _metrics(q),
        }
    return report


def _by_name(checks):
    return {c.name: c for c in checks}


class TestRankingChecks(unittest.TestCase):

    def test_every_ordering_holds(self):
        checks = _by_name(ranking_checks([_report() for _ in range(5)]))
        self.assertEqual({n: (c.wins, c.required) for n, c in checks.items()},
                         {"flows": (5, 4), "angle_diff": (5, 3), "angles": (5, 5)})
        self.assertTrue(all(c.passed for c in checks.values()))

    def test_flow_ordering_needs_four_of_five(self):
        worse = _report(M4=(1.5, 1.0, 3.0, 3.5))
        self.assertEqual(flow_rmse(worse, "M4"), 3.25)
        checks = _by_name(ranking_checks([_report(), _report(), _report(), worse, worse]))
        self.assertEqual(checks["flows"].wins, 3)
        self.assertFalse(checks["flows"].passed)
        self.assertTrue(checks["angles"].passed)

        checks = _by_name(ranking_checks([_report(), _report(), _report(), _report(), worse]))
        self.assertTrue(checks["flows"].passed)

    def test_angle_difference_tie_counts(self):
        tie = _report(M4=(1.5, 1.5, 1.0, 1.0))
        checks = _by_name(ranking_checks([tie, tie, tie]))
        self.assertEqual(checks["angle_diff"].wins, 3)
        self.assertEqual(checks["angle_diff"].required, 2)

    def test_angle_ordering_needs_every_seed(self):
        slip = _report(M2=(4.0, 2.0, 3.0, 3.0))
        checks = _by_name(ranking_checks([_report(), _report(), _report(), _report(), slip]))
        self.assertEqual(checks["angles"].wins, 4)
        self.assertFalse(checks["angles"].passed)

    def test_missing_method(self):
        report = _report()
        del report.results["M3"]
        with self.assertRaises(ContractViolation):
            ranking_checks([report])

    def test_no_reports(self):
        with self.assertRaises(ContractViolation):
            ranking_checks([])


class TestRankingExperiment(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.case = case14()
        cls.cfg = RunConfig(
            case_path=CASE14_PATH,
            sampling={"profile_bus_count": 3, "load_std_fraction": 0.05, "sample_count": 60, "split": (40, 10, 10)},
            training=tiny_training(epochs=2),
        )

    def test_small_run(self):
        outcome = run_ranking_experiment(self.case, self.cfg, [0, 1], workers=1, epochs=1)
        self.assertEqual(outcome.seeds, [0, 1])
        self.assertEqual(len(outcome.reports), 2)
        self.assertEqual([c.name for c in outcome.checks], ["flows", "angle_diff", "angles"])
        self.assertTrue(all(c.seeds == 2 and c.required == 2 for c in outcome.checks))

        frame = ranking_frame(outcome)
        self.assertEqual(frame.shape, (8, 8))
        self.assertEqual(list(frame["method"].iloc[:4]), ["M1", "M2", "M3", "M4"])
        self.assertEqual(list(checks_frame(outcome)["check"]), ["flows", "angle_diff", "angles"])

        # A seed's report does not depend on the other seeds in the run
        again = evaluate_seed(self.case, self.cfg, 1, workers=1, epochs=1)
        for method in ("M1", "M4"):
            self.assertEqual(again.results[method]["p_flow"].as_row(),
                             outcome.reports[1].results[method]["p_flow"].as_row())

    def test_seeds_validated(self):
        with self.assertRaises(ConfigurationError):
            run_ranking_experiment(self.case, self.cfg, [])
        with self.assertRaises(ConfigurationError):
            run_ranking_experiment(self.case, self.cfg, [3, 3])


@unittest.skipUnless(os.getenv("PPF_LAB_SLOW") == "1", "desk-scale experiment, set PPF_LAB_SLOW=1")
class TestDeskScaleRanking(unittest.TestCase):

    def test_orderings_over_five_seeds(self):
        cfg = load_run_config(REPO_ROOT / "configs" / "ieee14_ranking.yaml")
        outcome = run_ranking_experiment(case14(), cfg)
        self.assertEqual(len(outcome.seeds), 5)
        for check in outcome.checks:
            self.assertTrue(check.passed, f"{check.name}: {check.wins}/{check.seeds} (need {check.required})")


if __name__ == "__main__":
    unittest.main()
