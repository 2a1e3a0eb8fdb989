import gzip
import os
import struct
import tempfile

import numpy as np
from django.test import SimpleTestCase

from collapse import dataio, numcore
from collapse.exceptions import ArgumentError, DataFormatError


def write_idx(directory, images, labels, gz=False, image_magic=dataio.IDX_IMAGE_MAGIC):
    n, rows, cols = images.shape
    image_bytes = struct.pack(">IIII", image_magic, n, rows, cols) + images.astype(np.uint8).tobytes()
    label_bytes = struct.pack(">II", dataio.IDX_LABEL_MAGIC, n) + labels.astype(np.uint8).tobytes()
    stems = dataio.MNIST_FILES["train"]
    opener = gzip.open if gz else open
    suffix = ".gz" if gz else ""
    for stem, payload in zip(stems, (image_bytes, label_bytes)):
        with opener(os.path.join(directory, stem + suffix), "wb") as f:
            f.write(payload)


class IdxTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.images = np.arange(4 * 2 * 3).reshape(4, 2, 3) * 10
        self.labels = np.array([0, 1, 2, 1])

    def test_load_scales_and_flattens(self):
        write_idx(self.tmp.name, self.images, self.labels)
        data = dataio.load_mnist(self.tmp.name)
        self.assertEqual(data.x.shape, (4, 6))
        self.assertEqual(data.num_classes, 3)
        np.testing.assert_allclose(data.x[1], self.images[1].ravel() / 255.0)
        np.testing.assert_array_equal(data.y, self.labels)

    def test_gzip_files(self):
        write_idx(self.tmp.name, self.images, self.labels, gz=True)
        self.assertTrue(dataio.mnist_available(self.tmp.name))
        self.assertEqual(len(dataio.load_mnist(self.tmp.name)), 4)

    def test_limit_keeps_file_order(self):
        images = np.zeros((6, 1, 1))
        labels = np.array([0, 1, 0, 1, 0, 1])
        write_idx(self.tmp.name, images, labels)
        data = dataio.load_mnist(self.tmp.name, limit=4)
        np.testing.assert_array_equal(data.y, [0, 1, 0, 1])

    def test_wrong_magic(self):
        write_idx(self.tmp.name, self.images, self.labels, image_magic=1234)
        with self.assertRaisesMessage(DataFormatError, "wrong magic number"):
            dataio.load_mnist(self.tmp.name)

    def test_truncated_body(self):
        write_idx(self.tmp.name, self.images, self.labels)
        path = os.path.join(self.tmp.name, dataio.MNIST_FILES["train"][0])
        with open(path, "rb") as f:
            payload = f.read()
        with open(path, "wb") as f:
            f.write(payload[:-5])
        with self.assertRaisesMessage(DataFormatError, "header promises"):
            dataio.load_mnist(self.tmp.name)

    def test_missing_files(self):
        self.assertFalse(dataio.mnist_available(self.tmp.name))
        with self.assertRaises(DataFormatError):
            dataio.load_mnist(self.tmp.name)


class BlobsTests(SimpleTestCase):
    def test_layout(self):
        data = dataio.make_blobs(numcore.run_rng(0), 3, 5, 4, separation=4.0, noise_sigma=0.1)
        self.assertEqual(data.x.shape, (15, 4))
        np.testing.assert_array_equal(data.y, np.repeat([0, 1, 2], 5))
        np.testing.assert_allclose(data.x[data.y == 1].mean(axis=0), [0, 4, 0, 0], atol=0.2)

    def test_dim_must_cover_classes(self):
        with self.assertRaises(ArgumentError):
            dataio.make_blobs(numcore.run_rng(0), 5, 2, 3, separation=1.0, noise_sigma=0.1)

    def test_descriptor_is_reproducible(self):
        descriptor = {
            "kind": "blobs",
            "seed": 4,
            "num_classes": 3,
            "per_class": 10,
            "dim": 5,
            "separation": 4.0,
            "noise_sigma": 0.5,
        }
        a = dataio.dataset_from_descriptor(descriptor)
        b = dataio.dataset_from_descriptor(descriptor)
        self.assertEqual(a.content_hash(), b.content_hash())

    def test_unknown_descriptor(self):
        with self.assertRaises(DataFormatError):
            dataio.dataset_from_descriptor({"kind": "cifar"})

    def test_dataset_is_read_only(self):
        x = np.zeros((4, 2))
        data = dataio.Dataset(x=x, y=[0, 1, 0, 1], num_classes=2, name="t")
        with self.assertRaises(ValueError):
            data.x[0, 0] = 1.0
        x[0, 0] = 2.0  # the caller's array stays writable

    def test_every_class_needs_samples(self):
        with self.assertRaises(ArgumentError):
            dataio.Dataset(x=np.zeros((3, 2)), y=[0, 0, 1], num_classes=3, name="t")


class BatchTests(SimpleTestCase):
    def setUp(self):
        self.data = dataio.make_blobs(numcore.run_rng(0), 2, 11, 2, 4.0, 0.5)

    def test_batches_partition_the_dataset(self):
        plan = dataio.BatchPlan(batch_size=5, seed=3)
        seen = np.concatenate([y for _, y in dataio.batches(self.data, plan, epoch=1)])
        self.assertEqual(len(seen), 22)
        np.testing.assert_array_equal(np.sort(plan.permutation(22, 1)), np.arange(22))

    def test_shuffle_depends_on_seed_and_epoch_only(self):
        plan = dataio.BatchPlan(batch_size=5, seed=3)
        np.testing.assert_array_equal(plan.permutation(22, 4), plan.permutation(22, 4))
        self.assertFalse(np.array_equal(plan.permutation(22, 4), plan.permutation(22, 5)))

    def test_oversized_batch(self):
        with self.assertRaises(ArgumentError):
            list(dataio.batches(self.data, dataio.BatchPlan(batch_size=23, seed=0), epoch=1))

    def test_ordered_batches(self):
        chunks = list(dataio.ordered_batches(self.data, 8))
        self.assertEqual([len(y) for _, y in chunks], [8, 8, 6])
        np.testing.assert_array_equal(np.concatenate([y for _, y in chunks]), self.data.y)
