import json
import logging
import os
import tempfile

from django.test import SimpleTestCase

from speech.context import ArtifactContext

logging.disable(logging.INFO)


class Caching(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.ctx = ArtifactContext(self.tmp.name)
        os.makedirs(self.ctx.path('baseline'))
        self.write_index([{'stem': 'a'}])

    def tearDown(self):
        self.tmp.cleanup()

    def write_index(self, entries):
        with open(self.ctx.path('baseline', 'index.json'), 'w') as f:
            json.dump(entries, f)

    def test_loaded_once(self):
        first = self.ctx.baseline_index
        self.write_index([{'stem': 'b'}])
        self.assertIs(self.ctx.baseline_index, first)
        self.assertEqual(first[0]['stem'], 'a')

    def test_invalidate_reloads(self):
        self.assertEqual(self.ctx.baseline_index[0]['stem'], 'a')
        self.write_index([{'stem': 'b'}])
        self.ctx.invalidate('baseline_index')
        self.assertEqual(self.ctx.baseline_index[0]['stem'], 'b')

    def test_assignment_seeds_cache(self):
        self.ctx.synthesis_index = [{'stem': 'c'}]
        # synthesis/index.json does not exist; the assigned value is served.
        self.assertEqual(self.ctx.synthesis_index, [{'stem': 'c'}])

    def test_methods_with_arguments_stay_methods(self):
        self.assertEqual(self.ctx.path('x'), os.path.join(self.ctx.root, 'x'))
