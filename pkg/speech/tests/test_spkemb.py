import logging
import math
import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from speech import spkemb
from speech.errors import InvalidBatch, InvalidInput, NormZero
from speech.experiment import SpkembConfig
from speech.tests.helpers import fake_manifest, fake_mels

logging.disable(logging.INFO)

TINY = SpkembConfig(steps=3, speakers_per_batch=3, utterances_per_speaker=2, segment_frames=16, log_interval=1)


def reference_ge2e(embeddings, w, b):
    '''Loop-by-loop softmax GE2E loss.'''
    n_speakers, n_utterances, _ = embeddings.shape
    unit = lambda v: v / np.linalg.norm(v)
    total = 0.0
    for j in range(n_speakers):
        for i in range(n_utterances):
            e = unit(embeddings[j, i])
            scores = []
            for k in range(n_speakers):
                if k == j:
                    centroid = unit(embeddings[k].sum(axis=0) - embeddings[j, i])
                else:
                    centroid = unit(embeddings[k].mean(axis=0))
                scores.append(w * float(e @ centroid) + b)
            total += math.log(sum(math.exp(s) for s in scores)) - scores[j]
    return total


class Ge2eLoss(SimpleTestCase):
    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        embeddings = rng.standard_normal((3, 4, 5))
        loss = spkemb.ge2e_loss(torch.tensor(embeddings), torch.tensor(7.0, dtype=torch.float64),
                                torch.tensor(-2.0, dtype=torch.float64))
        self.assertAlmostEqual(float(loss), reference_ge2e(embeddings, 7.0, -2.0), places=8)

    def test_gradients(self):
        generator = torch.Generator().manual_seed(0)
        embeddings = torch.randn(3, 2, 4, dtype=torch.float64, generator=generator, requires_grad=True)
        w = torch.tensor(5.0, dtype=torch.float64, requires_grad=True)
        b = torch.tensor(-1.0, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(spkemb.ge2e_loss, (embeddings, w, b)))

    def test_batch_shape(self):
        w, b = torch.tensor(10.0), torch.tensor(-5.0)
        with self.assertRaises(InvalidBatch):
            spkemb.ge2e_loss(torch.randn(1, 4, 8), w, b)
        with self.assertRaises(InvalidBatch):
            spkemb.ge2e_loss(torch.randn(3, 1, 8), w, b)
        with self.assertRaises(InvalidBatch):
            spkemb.ge2e_loss(torch.randn(6, 8), w, b)


class Centroids(SimpleTestCase):
    def test_unit_mean(self):
        centroid = spkemb.speaker_centroid([np.array([1.0, 0.0]), np.array([0.0, 1.0])], 'spk00')
        np.testing.assert_allclose(centroid.vector, [math.sqrt(0.5), math.sqrt(0.5)])
        self.assertIsNone(centroid.utterance_id)

    def test_empty(self):
        with self.assertRaises(InvalidInput):
            spkemb.speaker_centroid([], 'spk00')

    def test_cancelling(self):
        with self.assertRaises(NormZero):
            spkemb.speaker_centroid([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])

    def test_cosine(self):
        self.assertAlmostEqual(spkemb.cosine([1.0, 0.0], [3.0, 3.0]), math.sqrt(0.5))


class Encoder(SimpleTestCase):
    def test_unit_vectors(self):
        torch.manual_seed(0)
        encoder = spkemb.SpeakerEncoder()
        with torch.no_grad():
            norms = encoder(torch.randn(3, 20, 80)).norm(dim=1)
        np.testing.assert_allclose(norms.numpy(), 1.0, atol=1e-5)

    def test_save_and_load(self):
        torch.manual_seed(1)
        encoder = spkemb.SpeakerEncoder()
        mel = next(iter(fake_mels(fake_manifest(speakers=1, per_speaker=1)).values()))
        with tempfile.TemporaryDirectory() as tmp:
            stem = os.path.join(tmp, 'encoder')
            spkemb.save_encoder(encoder, stem, note='x')
            loaded = spkemb.load_encoder(stem)
        np.testing.assert_allclose(spkemb.embed_utterance(loaded, mel).vector,
                                   spkemb.embed_utterance(encoder, mel).vector, atol=1e-6)


class Training(SimpleTestCase):
    def test_needs_two_speakers(self):
        manifest = fake_manifest(speakers=1, per_speaker=4)
        with self.assertRaises(InvalidBatch):
            spkemb.train_speaker_encoder(manifest, fake_mels(manifest), TINY, seed=1)

    def test_tiny_run_is_reproducible(self):
        manifest = fake_manifest(speakers=3, per_speaker=4)
        mels = fake_mels(manifest)
        first = spkemb.train_speaker_encoder(manifest, mels, TINY, seed=4)
        second = spkemb.train_speaker_encoder(manifest, mels, TINY, seed=4)
        self.assertEqual(len(first.monitor_losses), 2)
        self.assertTrue(all(math.isfinite(v) for v in first.monitor_losses))
        self.assertEqual(first.monitor_losses, second.monitor_losses)
        self.assertGreater(float(first.w), 0.0)
        mel = mels['spk01_0000']
        embedding = spkemb.embed_utterance(first, mel, 'spk01')
        self.assertAlmostEqual(float(np.linalg.norm(embedding.vector)), 1.0, places=6)
        self.assertEqual(embedding.utterance_id, 'spk01_0000')
