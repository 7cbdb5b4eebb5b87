import logging
import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from speech import featio
from speech.errors import InvalidInput
from speech.seeds import derive_seed, numpy_rng

logging.disable(logging.INFO)


class MatrixFiles(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'x.sftf')

    def tearDown(self):
        self.tmp.cleanup()

    def test_header_and_values(self):
        matrix = np.arange(6, dtype=np.float32).reshape(2, 3)
        featio.write_matrix(self.path, matrix)
        with open(self.path, 'rb') as f:
            raw = f.read()
        self.assertEqual(raw[:4], b'SFTF')
        self.assertEqual(len(raw), 16 + 6 * 4)
        np.testing.assert_array_equal(featio.read_matrix(self.path), matrix)

    def test_vector_is_a_column(self):
        featio.write_matrix(self.path, np.array([1.0, 2.0, 3.0]))
        self.assertEqual(featio.read_matrix(self.path).shape, (3, 1))

    def test_rejects_3d(self):
        with self.assertRaises(InvalidInput):
            featio.write_matrix(self.path, np.zeros((2, 2, 2)))

    def test_rejects_bad_magic(self):
        with open(self.path, 'wb') as f:
            f.write(b'NOPE' + bytes(12))
        with self.assertRaises(InvalidInput):
            featio.read_matrix(self.path)

    def test_rejects_truncated_data(self):
        featio.write_matrix(self.path, np.ones((4, 4)))
        with open(self.path, 'rb') as f:
            raw = f.read()
        with open(self.path, 'wb') as f:
            f.write(raw[:-4])
        with self.assertRaises(InvalidInput):
            featio.read_matrix(self.path)

    def test_module_checkpoint(self):
        torch.manual_seed(0)
        module = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
        stem = os.path.join(self.tmp.name, 'model')
        featio.save_module(module, stem, {'kind': 'test'})
        header = featio.read_header(stem)
        self.assertEqual(header['kind'], 'test')
        self.assertEqual([p['shape'] for p in header['parameters']], [[4, 3], [4], [2, 4], [2]])
        self.assertEqual(featio.read_matrix(stem + '.sftf').shape, (1, 12 + 4 + 8 + 2))
        restored = torch.nn.Sequential(torch.nn.Linear(3, 4), torch.nn.Linear(4, 2))
        restored.load_state_dict(featio.load_state(stem))
        x = torch.randn(5, 3)
        self.assertTrue(torch.equal(module(x), restored(x)))


class Seeds(SimpleTestCase):
    def test_documented_formula(self):
        import hashlib
        expected = int(hashlib.sha256(b'1234/corpus/spk01').hexdigest()[:8], 16)
        self.assertEqual(derive_seed(1234, 'corpus', 'spk01'), expected)

    def test_names_matter(self):
        self.assertNotEqual(derive_seed(1, 'vc'), derive_seed(1, 'tts'))
        self.assertNotEqual(derive_seed(1, 'vc'), derive_seed(2, 'vc'))

    def test_streams_repeat(self):
        np.testing.assert_array_equal(numpy_rng(5, 'a').random(4), numpy_rng(5, 'a').random(4))
