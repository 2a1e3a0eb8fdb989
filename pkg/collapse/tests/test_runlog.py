import io
import json
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from collapse import mlp, numcore, runlog
from collapse.exceptions import CheckpointError, DataFormatError, ManifestError
from collapse.tests.utils import record_from, snapshot, tiny_config

HEADER = ",".join(runlog.LOG_COLUMNS)


class LogTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = os.path.join(self.tmp.name, runlog.LOG_FILE)

    def test_round_trip_keeps_every_bit(self):
        rows = [
            snapshot(1, phase=1, nc1=0.1 + 0.2, fn=1 / 3, lr=1e-3 / 7),
            snapshot(2, nc1=None, nc2=None, nc3=None, fn=2.5e-17),
        ]
        runlog.write_log(self.path, rows)
        self.assertEqual(runlog.read_log(self.path), rows)

    def test_degenerate_token(self):
        runlog.write_log(self.path, [snapshot(1, nc1=None)])
        with open(self.path) as f:
            self.assertIn(",degenerate,", f.read())

    def test_unknown_column(self):
        lines = io.StringIO(HEADER + ",accuracy\n")
        with self.assertRaisesMessage(DataFormatError, ":1: unknown columns ['accuracy']"):
            runlog.parse_log(lines, path="log.csv")

    def test_bad_value_reports_its_line(self):
        lines = io.StringIO(f"{HEADER}\n1,1,0.1,0.1,1.0,0.5,0.1,0.1,1.0\n2,2,0.1,oops,1.0,0.5,0.1,0.1,1.0\n")
        with self.assertRaises(DataFormatError) as cm:
            runlog.parse_log(lines, path="log.csv")
        self.assertEqual(cm.exception.line, 3)
        self.assertIn("oops", str(cm.exception))

    def test_degenerate_fn_is_rejected(self):
        lines = io.StringIO(f"{HEADER}\n1,1,0.1,0.1,1.0,0.5,0.1,0.1,degenerate\n")
        with self.assertRaises(DataFormatError):
            runlog.parse_log(lines)

    def test_short_row(self):
        lines = io.StringIO(f"{HEADER}\n1,1,0.1\n")
        with self.assertRaisesMessage(DataFormatError, "expected 9 fields, got 3"):
            runlog.parse_log(lines)

    def test_missing_file(self):
        with self.assertRaises(DataFormatError):
            runlog.read_log(self.path)


class ManifestTests(SimpleTestCase):
    def setUp(self):
        self.manifest = runlog.ExperimentManifest(
            name="unit",
            config=tiny_config(),
            dataset={"kind": "blobs", "seed": 0},
            seeds=(0, 1),
        )

    def test_round_trip(self):
        data = json.loads(self.manifest.dumps())
        self.assertEqual(runlog.ExperimentManifest.from_dict(data), self.manifest)

    def test_hash_ignores_creation_time(self):
        self.assertEqual(self.manifest.content_hash(), self.manifest.stamped().content_hash())
        other = self.manifest.for_seed(1)
        self.assertNotEqual(self.manifest.content_hash(), other.content_hash())
        self.assertEqual(other.config.seed, 1)

    def test_schema_version(self):
        data = self.manifest.to_dict()
        data["schema_version"] = 99
        with self.assertRaises(ManifestError):
            runlog.ExperimentManifest.from_dict(data)

    def test_invalid_content(self):
        data = self.manifest.to_dict()
        del data["dataset"]
        with self.assertRaises(ManifestError):
            runlog.ExperimentManifest.from_dict(data)
        data = self.manifest.to_dict()
        data["config"]["activation"] = "swish"
        with self.assertRaises(ManifestError):
            runlog.ExperimentManifest.from_dict(data)

    def test_baseline_fixture_loads(self):
        path = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures", "blobs_baseline.json")
        manifest = runlog.load_manifest(path)
        self.assertEqual(manifest.seeds, (0, 1, 2))
        self.assertEqual(manifest.config.threshold, 0.05)

    def test_malformed_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "manifest.json")
            with open(path, "w") as f:
                f.write('{\n  "name": \n}')
            with self.assertRaises(DataFormatError) as cm:
                runlog.load_manifest(path)
        self.assertEqual(cm.exception.line, 3)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = os.path.join(self.tmp.name, runlog.CHECKPOINT_FILE)
        config = mlp.MlpConfig(input_dim=4, depth=2, width=5, num_classes=3, activation="tanh")
        self.model = mlp.build(config, numcore.run_rng(8))

    def test_round_trip(self):
        runlog.save_checkpoint(self.path, self.model, seed=8, epoch=30)
        model, meta = runlog.load_checkpoint(self.path)
        self.assertEqual(model.digest(), self.model.digest())
        self.assertEqual(model.config, self.model.config)
        self.assertEqual((meta["seed"], meta["epoch"]), (8, 30))

    def test_tampered_parameters(self):
        runlog.save_checkpoint(self.path, self.model, seed=8, epoch=30)
        with np.load(self.path) as archive:
            arrays = dict(archive)
        arrays["layer0_weight"] = arrays["layer0_weight"] + 1e-12
        with open(self.path, "wb") as f:
            np.savez(f, **arrays)
        with self.assertRaisesMessage(CheckpointError, "digest"):
            runlog.load_checkpoint(self.path)

    def test_not_a_checkpoint(self):
        with open(self.path, "wb") as f:
            f.write(b"not an archive")
        with self.assertRaises(CheckpointError):
            runlog.load_checkpoint(self.path)


class RunDirTests(SimpleTestCase):
    def test_load_run_rebuilds_the_record(self):
        config = tiny_config(phase1_epochs=1, phase2_epochs=2)
        rows = [snapshot(1, phase=1, nc1=0.9), snapshot(2, nc1=0.2), snapshot(3, nc1=0.01, fn=0.7)]
        record = record_from(config, rows, label="seed0")
        manifest = runlog.ExperimentManifest(name="unit", config=config, dataset={"kind": "blobs"})
        with tempfile.TemporaryDirectory() as tmp:
            runlog.save_manifest(os.path.join(tmp, runlog.MANIFEST_FILE), manifest)
            runlog.write_log(os.path.join(tmp, runlog.LOG_FILE), rows)
            runlog.write_summary(os.path.join(tmp, runlog.SUMMARY_FILE), record)
            self.assertTrue(runlog.is_run_dir(tmp))
            loaded_manifest, loaded = runlog.load_run(tmp)
        self.assertEqual(loaded_manifest, manifest)
        self.assertEqual(loaded.t_nc, 3)
        self.assertEqual(loaded.fn_at_t_nc, 0.7)
        self.assertEqual(loaded.label, "seed0")
        self.assertEqual(loaded.snapshots, rows)
