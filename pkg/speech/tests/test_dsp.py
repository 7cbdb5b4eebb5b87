import logging
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from speech import dsp
from speech.audio_config import F0_MIN, HOP_LENGTH, LOG_FLOOR, N_MELS
from speech.errors import InvalidInput, UndefinedSpeakerMean
from speech.tests.helpers import sine

logging.disable(logging.INFO)


class Frontend(SimpleTestCase):
    def test_frame_count_rounds_up(self):
        self.assertEqual(dsp.num_frames(HOP_LENGTH), 1)
        self.assertEqual(dsp.num_frames(HOP_LENGTH + 1), 2)

    def test_mel_shape_and_floor(self):
        clip = dsp.AudioClip(samples=np.random.default_rng(0).uniform(-0.1, 0.1, 16000))
        mel = dsp.mel_spectrogram(clip)
        self.assertEqual(mel.frames.shape, (80, N_MELS))
        self.assertEqual(mel.frames.dtype, np.float32)
        self.assertGreaterEqual(float(mel.frames.min()), math.log(LOG_FLOOR) - 1e-5)

    def test_silence_sits_on_the_floor(self):
        mel = dsp.mel_spectrogram(dsp.AudioClip(samples=np.zeros(4000)))
        np.testing.assert_allclose(mel.frames, math.log(LOG_FLOOR), rtol=1e-6)

    def test_sine_energy_lands_in_its_band(self):
        mel = dsp.mel_spectrogram(sine(1000.0))
        band = int(np.argmax(mel.frames[10]))
        centers = dsp.mel_band_centers()
        self.assertLess(abs(centers[band] - 1000.0), 150.0)

    def test_mfcc_zeroth_coefficient(self):
        mel = dsp.mel_spectrogram(sine(300.0))
        mfcc = dsp.mfcc_from_mel(mel)
        self.assertEqual(mfcc.frames.shape, (mel.num_frames, 13))
        # Orthonormal DCT-II: c0 is the band sum over sqrt(N).
        np.testing.assert_allclose(mfcc.frames[:, 0], mel.frames.astype(np.float64).sum(axis=1) / math.sqrt(N_MELS),
                                   rtol=1e-4, atol=1e-3)

    def test_wrong_sample_rate(self):
        with self.assertRaises(InvalidInput):
            dsp.mel_spectrogram(dsp.AudioClip(samples=np.zeros(100), sample_rate=22050))

    def test_empty_clip(self):
        with self.assertRaises(InvalidInput):
            dsp.estimate_f0(dsp.AudioClip(samples=np.zeros(0)))


class Pitch(SimpleTestCase):
    def test_sine_pitch(self):
        track = dsp.estimate_f0(sine(200.0))
        self.assertEqual(track.num_frames, dsp.num_frames(8000))
        middle = slice(5, track.num_frames - 5)
        self.assertTrue(track.voiced[middle].all())
        self.assertLess(abs(float(np.median(np.exp(track.log_f0[middle]))) - 200.0), 2.0)

    def test_gap_between_two_pitches_is_bridged(self):
        low, high = sine(150.0), sine(300.0)
        samples = np.concatenate([low.samples, np.zeros(4000), high.samples])
        track = dsp.estimate_f0(dsp.AudioClip(samples=samples))
        hz = np.exp(track.log_f0)
        low_frames = slice(5, dsp.num_frames(len(low)) - 5)
        high_frames = slice(dsp.num_frames(len(low) + 4000) + 5, track.num_frames - 5)
        self.assertTrue(track.voiced[low_frames].all())
        self.assertTrue(track.voiced[high_frames].all())
        self.assertLess(abs(float(np.median(hz[low_frames])) - 150.0), 5.0)
        self.assertLess(abs(float(np.median(hz[high_frames])) - 300.0), 5.0)

        middle = dsp.num_frames(len(low) + 2000)
        self.assertFalse(track.voiced[middle])
        last_low = int(np.flatnonzero(track.voiced[:middle])[-1])
        first_high = middle + int(np.flatnonzero(track.voiced[middle:])[0])
        bridge = track.log_f0[last_low:first_high + 1]
        self.assertTrue((np.diff(bridge) > 0).all())
        self.assertLess(math.exp(bridge[0]), 225.0)
        self.assertGreater(math.exp(bridge[-1]), 225.0)

    def test_silence_is_unvoiced(self):
        track = dsp.estimate_f0(dsp.AudioClip(samples=np.zeros(4000)))
        self.assertFalse(track.voiced.any())
        np.testing.assert_allclose(track.log_f0, math.log(F0_MIN))

    def test_interpolation_is_linear_in_log(self):
        log_f0 = dsp.interpolate_unvoiced(np.array([100.0, 0.0, 0.0, 400.0]),
                                          np.array([True, False, False, True]))
        np.testing.assert_allclose(np.exp(log_f0), [100.0, 100.0 * 4 ** (1 / 3), 100.0 * 4 ** (2 / 3), 400.0])

    def test_interpolation_holds_edges(self):
        log_f0 = dsp.interpolate_unvoiced(np.array([0.0, 150.0, 0.0]), np.array([False, True, False]))
        np.testing.assert_allclose(np.exp(log_f0), [150.0, 150.0, 150.0])

    def test_speaker_mean(self):
        tracks = [
            dsp.F0Track(log_f0=np.log([100.0, 200.0, 999.0]), voiced=np.array([True, True, False])),
            dsp.F0Track(log_f0=np.log([400.0]), voiced=np.array([True])),
        ]
        expected = np.mean(np.log([100.0, 200.0, 400.0]))
        self.assertAlmostEqual(dsp.speaker_log_f0_mean(tracks), expected)

    def test_speaker_mean_needs_voiced_frames(self):
        unvoiced = dsp.F0Track(log_f0=np.zeros(5), voiced=np.zeros(5, dtype=bool))
        with self.assertRaises(UndefinedSpeakerMean):
            dsp.speaker_log_f0_mean([unvoiced])
        with self.assertRaises(UndefinedSpeakerMean):
            dsp.speaker_log_f0_mean([])

    def test_normalization_shifts_the_contour(self):
        src = dsp.F0Track(log_f0=np.log([100.0, 120.0, 90.0]), voiced=np.array([True, False, True]))
        out = dsp.normalize_log_f0(src, math.log(100.0), math.log(200.0))
        np.testing.assert_allclose(np.exp(out.log_f0), [200.0, 240.0, 180.0])
        np.testing.assert_array_equal(out.voiced, src.voiced)

    def test_normalization_needs_both_means(self):
        src = dsp.F0Track(log_f0=np.zeros(2), voiced=np.ones(2, dtype=bool))
        with self.assertRaises(UndefinedSpeakerMean):
            dsp.normalize_log_f0(src, None, 1.0)
        with self.assertRaises(UndefinedSpeakerMean):
            dsp.normalize_log_f0(src, 1.0, float('nan'))

    def test_normalization_is_undone_by_swapping_means(self):
        rng = np.random.default_rng(4)
        src = dsp.F0Track(log_f0=np.log(rng.uniform(80.0, 300.0, 50)), voiced=rng.random(50) > 0.3)
        there = dsp.normalize_log_f0(src, math.log(120.0), math.log(210.0))
        back = dsp.normalize_log_f0(there, math.log(210.0), math.log(120.0))
        np.testing.assert_allclose(back.log_f0, src.log_f0, rtol=0, atol=1e-12)
        self.assertAlmostEqual(float(there.log_f0.var()), float(src.log_f0.var()))
        np.testing.assert_allclose(np.diff(there.log_f0), np.diff(src.log_f0), atol=1e-12)


class Inversion(SimpleTestCase):
    def test_length_matches_frames(self):
        mel = dsp.mel_spectrogram(sine(220.0, seconds=0.25))
        audio = dsp.griffin_lim_invert(mel, iterations=2)
        self.assertEqual(len(audio), mel.num_frames * HOP_LENGTH)
        self.assertLessEqual(float(np.abs(audio.samples).max()), 1.0)

    def test_same_seed_same_audio(self):
        mel = dsp.mel_spectrogram(sine(220.0, seconds=0.25))
        a = dsp.griffin_lim_invert(mel, iterations=2, seed=3)
        b = dsp.griffin_lim_invert(mel, iterations=2, seed=3)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_needs_an_iteration(self):
        mel = dsp.mel_spectrogram(sine(220.0, seconds=0.1))
        with self.assertRaises(InvalidInput):
            dsp.griffin_lim_invert(mel, iterations=0)

    def test_silence_stays_silent(self):
        mel = dsp.mel_spectrogram(dsp.AudioClip(samples=np.zeros(4000)))
        audio = dsp.griffin_lim_invert(mel, iterations=8)
        self.assertEqual(len(audio), mel.num_frames * HOP_LENGTH)
        self.assertLess(float(np.abs(audio.samples).max()), 1e-3)

    def test_round_trip_keeps_the_loudest_band(self):
        hz = float(dsp.mel_band_centers()[20])
        mel = dsp.mel_spectrogram(sine(hz))
        again = dsp.mel_spectrogram(dsp.griffin_lim_invert(mel, iterations=32))
        self.assertEqual(again.num_frames, mel.num_frames)
        np.testing.assert_array_equal(np.argmax(again.frames, axis=1), np.argmax(mel.frames, axis=1))

    def test_wav_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'a.wav')
            clip = sine(330.0, seconds=0.1)
            dsp.write_wav(path, clip)
            back = dsp.read_wav(path, 'a')
        self.assertEqual(back.sample_rate, 16000)
        self.assertEqual(back.utterance_id, 'a')
        np.testing.assert_allclose(back.samples, clip.samples, atol=2.0 / 32768)
