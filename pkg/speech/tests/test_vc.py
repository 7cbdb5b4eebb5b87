import logging
import math
import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from speech import vc
from speech.align import StateSequence
from speech.dsp import F0Track, MelSpectrogram
from speech.errors import DataError, InvalidInput
from speech.experiment import VcConfig
from speech.tests.helpers import fake_manifest, fake_mels

logging.disable(logging.INFO)

N_STATES = 9
TINY = VcConfig(stage1_steps=2, stage2_steps=1, batch_size=2, segment_frames=16, log_interval=1)


def unit(rng, dim=vc.SPEAKER_DIM):
    vector = rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)


def features_for(mels, seed=0):
    '''States, f0 tracks and embeddings matching each mel's length.'''
    rng = np.random.default_rng(seed)
    states, f0s, embeddings = {}, {}, {}
    for uid, mel in mels.items():
        n = mel.num_frames
        states[uid] = StateSequence(state_ids=np.sort(rng.integers(0, N_STATES, n)), utterance_id=uid)
        f0s[uid] = F0Track(log_f0=np.log(150.0) + 0.1 * rng.standard_normal(n),
                           voiced=np.ones(n, dtype=bool), utterance_id=uid)
        embeddings[uid] = unit(rng)
    return states, f0s, embeddings


def utterance(n_frames, seed=0):
    rng = np.random.default_rng(seed)
    mel = MelSpectrogram(frames=rng.standard_normal((n_frames, 80)).astype(np.float32) - 3.0, utterance_id='u')
    states, f0s, embeddings = features_for({'u': mel}, seed)
    return vc.UtteranceFeatures('u', 'spk01', mel, states['u'], f0s['u'], embeddings['u'])


class Losses(SimpleTestCase):
    def test_kl_of_prior_is_zero(self):
        self.assertEqual(float(vc.gaussian_kl(torch.zeros(2, 5, 4), torch.zeros(2, 5, 4))), 0.0)

    def test_kl_value(self):
        # One latent with mu 1 and sigma 1 in a single dimension.
        self.assertAlmostEqual(float(vc.gaussian_kl(torch.ones(1, 1), torch.zeros(1, 1))), 0.5)

    def test_kl_weight_warmup(self):
        self.assertEqual(vc.kl_weight(0, 100, 1e-3, 0.1), 0.0)
        self.assertAlmostEqual(vc.kl_weight(5, 100, 1e-3, 0.1), 5e-4)
        self.assertEqual(vc.kl_weight(50, 100, 1e-3, 0.1), 1e-3)
        self.assertEqual(vc.kl_weight(0, 100, 1e-3, 0.0), 1e-3)

    def test_gradients(self):
        generator = torch.Generator().manual_seed(0)
        tensors = [torch.randn(shape, dtype=torch.float64, generator=generator, requires_grad=True)
                   for shape in ((2, 6, 3), (2, 2, 4), (2, 2, 4))]
        target = torch.randn(2, 6, 3, dtype=torch.float64, generator=generator)
        self.assertTrue(torch.autograd.gradcheck(
            lambda pred, mu, log_sigma: vc.vc_loss(pred, target, mu, log_sigma, 0.1)[0], tensors))

    def test_shape_mismatch(self):
        with self.assertRaises(InvalidInput):
            vc.vc_loss(torch.zeros(1, 5, 80), torch.zeros(1, 6, 80), torch.zeros(1, 1, 4), torch.zeros(1, 1, 4), 1.0)


class Model(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.model = vc.VcModel(N_STATES)
        self.model.eval()

    def test_length_preserved(self):
        for n_frames in (8, 37, 41):
            source = utterance(n_frames, seed=n_frames)
            target = vc.ConversionTarget('spk00', unit(np.random.default_rng(9)), math.log(220.0))
            mel = vc.convert_utterance(self.model, source, math.log(150.0), target, utterance_id='u_as_spk00')
            self.assertEqual(mel.num_frames, n_frames)
            self.assertEqual(mel.frames.shape[1], 80)
            self.assertEqual(mel.utterance_id, 'u_as_spk00')

    def test_target_pitch_reaches_decoder(self):
        source = utterance(24)
        centroid = unit(np.random.default_rng(3))
        low = vc.convert_utterance(self.model, source, math.log(150.0), vc.ConversionTarget('t', centroid, 4.0))
        high = vc.convert_utterance(self.model, source, math.log(150.0), vc.ConversionTarget('t', centroid, 6.0))
        again = vc.convert_utterance(self.model, source, math.log(150.0), vc.ConversionTarget('t', centroid, 6.0))
        self.assertFalse(np.allclose(low.frames, high.frames))
        np.testing.assert_array_equal(high.frames, again.frames)

    def test_decoder_lengths_must_agree(self):
        with self.assertRaises(InvalidInput):
            self.model.decode(torch.zeros(1, 10, 16), torch.zeros(1, 9, 128), torch.zeros(1, 10),
                              torch.zeros(1, vc.SPEAKER_DIM))

    def test_state_ids_in_range(self):
        source = utterance(16)
        source.states.state_ids[3] = N_STATES
        with self.assertRaises(InvalidInput):
            vc.encode_phonetic(self.model, source.states, source.embedding)

    def test_save_and_load(self):
        source = utterance(20)
        with tempfile.TemporaryDirectory() as tmp:
            stem = os.path.join(tmp, 'model')
            vc.save_model(self.model, stem)
            loaded = vc.load_model(stem)
        self.assertAlmostEqual(vc.reconstruction_l1(loaded, source), vc.reconstruction_l1(self.model, source),
                               places=5)


class Training(SimpleTestCase):
    def setUp(self):
        self.manifest = fake_manifest(speakers=2, per_speaker=4)
        self.mels = fake_mels(self.manifest)
        self.states, self.f0s, self.embeddings = features_for(self.mels)

    def test_missing_features(self):
        del self.f0s['spk01_0002']
        with self.assertRaises(DataError) as cm:
            vc.collect_features(self.manifest, self.mels, self.f0s, self.states, self.embeddings)
        self.assertEqual(cm.exception.utterance_ids, ('spk01_0002',))

    def test_tiny_run(self):
        model = vc.train_vc(self.manifest, self.mels, self.f0s, self.states, self.embeddings, N_STATES, 'spk00',
                            TINY, seed=2)
        summary = model.training_summary
        for key in ('monitor_l1_initial', 'monitor_l1_stage1', 'monitor_l1_final', 'mean_frame_l1'):
            self.assertTrue(math.isfinite(summary[key]), key)
        self.assertFalse(model.training)

    def test_needs_target_utterances(self):
        with self.assertRaises(DataError):
            vc.train_vc(self.manifest, self.mels, self.f0s, self.states, self.embeddings, N_STATES, 'spk05',
                        TINY, seed=2)
