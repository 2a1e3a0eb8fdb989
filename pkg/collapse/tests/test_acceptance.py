import functools
import os
import tempfile
import unittest
from dataclasses import replace

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, tag

from collapse import dynamics, ncmetrics, protocol, runlog, runner, stats
from collapse.models import LossKind, RunStatus

DESK_OUTCOMES = os.environ.get("NCLAB_DESK_TESTS") == "1"


def baseline_manifest():
    return runlog.load_manifest(os.path.join(settings.NCLAB["FIXTURES_DIR"], "blobs_baseline.json"))


@functools.lru_cache(maxsize=None)
def baseline_cohort():
    """The blobs fixture trained once per process: manifest, data and per-seed runs."""
    manifest = baseline_manifest()
    data = runner.load_dataset(manifest)
    runs = {}
    for seed in manifest.seeds:
        saved = []
        record = protocol.run_two_phase(
            manifest.config.with_seed(seed),
            data,
            on_phase_boundary=lambda model: saved.append(model.copy()),
            label=f"seed{seed}",
        )
        runs[seed] = (record, saved[0])
    return manifest, data, runs


@tag("desk")
class BaselineFixtureTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.manifest, cls.data, cls.runs = baseline_cohort()

    def test_layout(self):
        config = self.manifest.config
        for record, _ in self.runs.values():
            self.assertEqual(len(record.snapshots), config.total_epochs)
            self.assertEqual(len(record.phase2_snapshots), config.phase2_epochs)
            self.assertFalse(record.aborted)

    def test_phase1_reaches_the_terminal_phase(self):
        for record, _ in self.runs.values():
            self.assertTrue(record.phase1_reached_terminal, record.label)

    def test_rerun_from_manifest_is_byte_identical(self):
        record, _ = self.runs[0]
        with tempfile.TemporaryDirectory() as tmp:
            expected = os.path.join(tmp, "expected.csv")
            runlog.write_log(expected, record.snapshots)
            run_dir = os.path.join(tmp, "rerun")
            runner.execute_run(self.manifest.for_seed(0), run_dir, data=self.data)
            with open(expected, "rb") as a, open(os.path.join(run_dir, runlog.LOG_FILE), "rb") as b:
                self.assertEqual(a.read(), b.read())
            _, checkpoint = self.runs[0]
            stored, _ = runlog.load_checkpoint(os.path.join(run_dir, runlog.CHECKPOINT_FILE))
            self.assertEqual(stored.digest(), checkpoint.digest())

    def test_control_resumption_is_bitwise(self):
        record, checkpoint = self.runs[0]
        spec = dynamics.InterventionSpec(alphas=(1.0,), seeds=(0,))
        result = dynamics.run_intervention(spec, self.manifest.config, self.data, checkpoint)
        self.assertEqual(result.records[1.0, 0].snapshots, record.phase2_snapshots)

    def test_rescaling_multiplies_fn(self):
        _, checkpoint = self.runs[0]
        batch = self.manifest.config.batch_size
        before = ncmetrics.evaluate(checkpoint, self.data, LossKind.MSE_ONE_HOT, batch).fn
        for alpha in (0.3, 3.0):
            scaled = dynamics.rescale_features(checkpoint, alpha)
            after = ncmetrics.evaluate(scaled, self.data, LossKind.MSE_ONE_HOT, batch).fn
            self.assertAlmostEqual(after / before, alpha, delta=1e-9)


@functools.lru_cache(maxsize=None)
def baseline_intervention():
    manifest, data, runs = baseline_cohort()
    _, checkpoint = runs[0]
    spec = dynamics.InterventionSpec(alphas=(0.3, 3.0), seeds=manifest.seeds)
    return dynamics.run_intervention(spec, manifest.config, data, checkpoint)


@functools.lru_cache(maxsize=None)
def ce_only_control():
    manifest, data, _ = baseline_cohort()
    config = manifest.config
    control = replace(config, phase1_epochs=config.total_epochs)
    return protocol.run_ce_only(control, data, label="ce-only")


@tag("desk")
class CollapseOutcomeTests(SimpleTestCase):
    """Training outcomes on the blobs fixture, checked on every test run."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.manifest, cls.data, cls.runs = baseline_cohort()
        cls.records = [record for record, _ in cls.runs.values()]

    def test_every_seed_collapses(self):
        for record in self.records:
            self.assertEqual(record.status, RunStatus.COLLAPSED, record.label)

    def test_fn_star_is_concentrated(self):
        summary = stats.summarize([record.fn_at_t_nc for record in self.records])
        self.assertLess(summary.cv, 0.2)

    def test_crossing_precedes_collapse(self):
        # fn_at_t_nc < reference for every run, so fn crosses no later than T_NC
        reference = 1.1 * max(record.fn_at_t_nc for record in self.records)
        for record in self.records:
            report = dynamics.detect_crossing(record, reference)
            self.assertTrue(report.ordering_confirmed, record.label)

    def test_ce_only_control_does_not_collapse(self):
        record = ce_only_control()
        self.assertGreaterEqual(record.snapshots[-1].train_acc, 0.99)
        self.assertNotEqual(record.status, RunStatus.COLLAPSED)
        fn_star = np.mean([r.fn_at_t_nc for r in self.records])
        self.assertGreater(record.final_fn, fn_star)

    def test_intervened_runs_reach_an_overlapping_fn_star(self):
        control, down, up = baseline_intervention().rows
        self.assertEqual(control.n_collapsed, control.n)
        for row in (down, up):
            self.assertEqual(row.n_collapsed, row.n, row.condition)
            self.assertTrue(row.ci_overlaps_control, row.condition)


@tag("desk")
@unittest.skipUnless(DESK_OUTCOMES, "set NCLAB_DESK_TESTS=1 for the strict outcome checks")
class StrictOutcomeTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.manifest, cls.data, cls.runs = baseline_cohort()
        cls.records = [record for record, _ in cls.runs.values()]

    def test_fn_decays_late_in_phase2(self):
        for record in self.records:
            tail = np.array([s.fn for s in record.phase2_snapshots[-20:]])
            self.assertTrue(np.all(np.diff(tail) <= 0), record.label)

    def test_crossing_precedes_collapse_against_the_group_mean(self):
        summary = dynamics.predictor_eval(self.records)
        self.assertEqual(summary.n_crossed, len(self.records))
        self.assertEqual(summary.n_confirmed_ordering, len(self.records))

    def test_ce_only_fn_grows_well_past_fn_star(self):
        fn_star = np.mean([r.fn_at_t_nc for r in self.records])
        self.assertGreaterEqual(ce_only_control().final_fn, 3.0 * fn_star)

    def test_scale_down_rebounds(self):
        _, down, _ = baseline_intervention().rows
        self.assertGreater(down.rebounds, 0)
