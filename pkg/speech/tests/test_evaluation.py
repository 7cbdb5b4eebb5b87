import logging
import math
import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from speech import evaluation
from speech.dsp import F0Track, MelSpectrogram
from speech.errors import DegenerateGap, DegenerateInput, InsufficientData, InvalidInput, MalformedScreen
from speech.spkemb import SpeakerEncoder

logging.disable(logging.INFO)


def ratings(screens, name='test'):
    '''{screen_id: {system: score}} -> RatingSet with one listener per screen.'''
    rows = [(screen_id, 'l' + screen_id, system, score)
            for screen_id, scores in screens.items() for system, score in scores.items()]
    return evaluation.RatingSet.from_rows(rows, name=name)


class PublishedTables(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tables = evaluation.reproduce_published_tables()

    def test_first_row(self):
        row = self.tables['per_speaker']['rows'][0]
        self.assertEqual((row['locale'], row['gender']), ('pt-PT', 'F'))
        self.assertAlmostEqual(row['speaker']['computed'], 69.30, delta=0.005)
        self.assertAlmostEqual(row['style']['computed'], 83.35, delta=0.005)

    def test_means(self):
        per_speaker = self.tables['per_speaker']
        self.assertAlmostEqual(per_speaker['speaker_rel_mean'], 91.42, delta=0.05)
        self.assertAlmostEqual(per_speaker['style_rel_mean'], 57.6, delta=0.05)
        self.assertAlmostEqual(per_speaker['style_reference_gain_mean'], 18.5, delta=0.1)
        self.assertAlmostEqual(self.tables['supporting_speaker_count']['mean_rel'], 83.6, delta=0.1)
        self.assertAlmostEqual(self.tables['supporting_data_amount']['mean_rel'], 93.3, delta=0.1)

    def test_rows_match_printed_values(self):
        for row in self.tables['per_speaker']['rows']:
            for part in ('speaker', 'style'):
                values = row[part]
                # A few printed speaker values carry fewer significant digits.
                self.assertLess(abs(values['computed'] - values['rel']), 0.2, (row['locale'], part))
                low, high = values['bounds']
                self.assertLessEqual(low, values['computed'])
                self.assertGreaterEqual(high, values['computed'])
            low, high = row['style']['bounds']
            self.assertTrue(low - 0.005 <= row['style']['rel'] <= high + 0.005, row['locale'])

    def test_perceived_style(self):
        perceived = self.tables['perceived_style']
        self.assertEqual(len(perceived['centroids']), 5)
        for total in perceived['column_totals']:
            self.assertAlmostEqual(total, 100.0, delta=0.1)


class GapClosure(SimpleTestCase):
    def test_value(self):
        self.assertAlmostEqual(evaluation.relative_gap_closure(20.0, 70.0, 60.0), 80.0)
        self.assertAlmostEqual(evaluation.relative_gap_closure(20.0, 70.0, 75.0), 110.0)

    def test_degenerate(self):
        with self.assertRaises(DegenerateGap):
            evaluation.relative_gap_closure(50.0, 50.0, 60.0)
        with self.assertRaises(DegenerateGap):
            evaluation.reference_anchored_gain(100.0, 90.0)

    def test_reference_anchor(self):
        self.assertAlmostEqual(evaluation.reference_anchored_gain(40.0, 55.0), 25.0)

    def test_rounding_bounds(self):
        low, high = evaluation.rel_rounding_bounds(20.0, 70.0, 60.0)
        self.assertLess(low, 80.0)
        self.assertGreater(high, 80.0)
        self.assertLess(high - low, 0.1)

    def test_empty_aggregate(self):
        with self.assertRaises(InvalidInput):
            evaluation.aggregate_gap_closures([])

    def test_run_scores_skip_unusable_rows(self):
        self.assertAlmostEqual(evaluation._closure(0.2, 0.7, 0.6), 80.0)
        self.assertIsNone(evaluation._closure(0.5, 0.5, 0.6))
        self.assertIsNone(evaluation._closure(None, 0.7, 0.6))
        self.assertAlmostEqual(evaluation._anchored(0.1, 0.2, 0.5), 25.0)
        self.assertIsNone(evaluation._anchored(0.5, 0.2, 0.3))

    def test_log_f0_spread(self):
        voiced = np.array([True, True, False, True])
        track = F0Track(log_f0=np.log([100.0, 200.0, 150.0, 100.0]), voiced=voiced)
        expected = np.log([100.0, 200.0, 100.0]).std()
        self.assertAlmostEqual(evaluation.log_f0_spread(track), expected)
        flat = F0Track(log_f0=np.zeros(4), voiced=np.array([False, False, True, False]))
        self.assertIsNone(evaluation.log_f0_spread(flat))


class Mushra(SimpleTestCase):
    def test_mean_and_interval(self):
        rs = ratings({'1': {'A': 60}, '2': {'A': 70}, '3': {'A': 80}})
        mean, ci = evaluation.mushra_mean_ci(rs, 'A')
        self.assertEqual(mean, 70.0)
        self.assertAlmostEqual(ci, 11.316, places=3)

    def test_needs_two_ratings(self):
        with self.assertRaises(InsufficientData):
            evaluation.mushra_mean_ci(ratings({'1': {'A': 60}}), 'A')

    def test_screen_rules(self):
        with self.assertRaises(InvalidInput):
            evaluation.RatingSet.from_rows([('1', 'l', 'A', 101)])
        with self.assertRaises(MalformedScreen) as cm:
            evaluation.RatingSet.from_rows([('1', 'l', 'A', 50), ('1', 'l', 'A', 60)])
        self.assertEqual(cm.exception.screen_id, '1')

    def test_summary_with_anchors(self):
        rs = ratings({
            '1': {'low': 20, 'mid': 50, 'high': 80},
            '2': {'low': 30, 'mid': 55, 'high': 80},
        })
        report = evaluation.summarize_listening_test(rs, lower='low', upper='high')
        self.assertEqual(list(report.systems), ['low', 'mid', 'high'])
        self.assertAlmostEqual(report.rel_closure['mid'], 100 * (52.5 - 25) / (80 - 25))
        self.assertNotIn('low', report.rel_closure)

    def test_from_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'style.csv')
            with open(path, 'w') as f:
                f.write('screen_id,listener_id,system,score\n1,a,A,40\n1,a,B,60\n2,b,A,50\n2,b,B,70\n')
            rs = evaluation.RatingSet.from_csv(path)
            self.assertEqual(rs.name, 'style.csv')
            self.assertEqual(rs.scores('B'), [60.0, 70.0])
            with open(path, 'w') as f:
                f.write('screen_id,system,score\n1,A,40\n')
            with self.assertRaises(InvalidInput):
                evaluation.RatingSet.from_csv(path)


class Significance(SimpleTestCase):
    def test_holm(self):
        adjusted, reject = evaluation.holm_bonferroni(np.array([0.01, 0.04, 0.03]), 0.05)
        np.testing.assert_allclose(adjusted, [0.03, 0.06, 0.06])
        self.assertEqual(list(reject), [True, False, False])

    def test_paired(self):
        rng = np.random.default_rng(0)
        screens = {}
        for i in range(30):
            base = rng.uniform(30, 60)
            screens[str(i)] = {'A': base, 'B': min(100.0, base + 15 + rng.normal(0, 3)), 'C': base + rng.normal(0, 3)}
        tests = {(t.a, t.b): t for t in evaluation.significance_test(ratings(screens), alpha=0.01)}
        self.assertEqual(set(tests), {('A', 'B'), ('A', 'C'), ('B', 'C')})
        self.assertTrue(tests['A', 'B'].reject)
        self.assertTrue(tests['B', 'C'].reject)
        for test in tests.values():
            self.assertGreaterEqual(test.p_adjusted, test.p_value)

    def test_constant_difference(self):
        tests = evaluation.significance_test(ratings({'1': {'A': 40, 'B': 50}, '2': {'A': 60, 'B': 70}}))
        self.assertEqual(tests[0].p_value, 0.0)
        self.assertEqual(tests[0].statistic, -math.inf)

    def test_needs_shared_screens(self):
        with self.assertRaises(InsufficientData):
            evaluation.significance_test(ratings({'1': {'A': 40, 'B': 50}}))


class Confusion(SimpleTestCase):
    def test_ties_split_the_screen(self):
        matrix = evaluation.confusion_from_ratings({
            'r': ratings({'s1': {'A': 80, 'B': 80}, 's2': {'A': 90, 'B': 10}}),
            'q': ratings({'s3': {'A': 10, 'B': 90}}),
        })
        self.assertEqual(matrix.references, ['r', 'q'])
        self.assertEqual(matrix.column('r'), {'A': 75.0, 'B': 25.0})
        self.assertEqual(matrix.column('q'), {'A': 0.0, 'B': 100.0})
        self.assertEqual(matrix.ambiguous, ['s1'])
        np.testing.assert_allclose(matrix.percent.sum(axis=0), 100.0)

    def test_missing_system(self):
        with self.assertRaises(MalformedScreen):
            evaluation.confusion_from_ratings({'r': ratings({'s1': {'A': 80}})}, systems=['A', 'B'])

    def test_no_screens(self):
        with self.assertRaises(InsufficientData):
            evaluation.confusion_from_ratings({'r': evaluation.RatingSet()}, systems=['A'])


class Distances(SimpleTestCase):
    def test_mcd_ignores_c0(self):
        a = np.zeros((4, 13))
        b = np.zeros((4, 13))
        b[:, 0] = 5.0
        b[:, 1] = 1.0
        self.assertAlmostEqual(evaluation.cepstral_distance(a, b), 10.0 / math.log(10.0) * math.sqrt(2.0))

    def test_mcd_of_identical_mels(self):
        mel = MelSpectrogram(frames=np.random.default_rng(0).normal(-4, 1, (6, 80)).astype(np.float32))
        self.assertEqual(evaluation.mel_cepstral_distortion(mel, mel), 0.0)
        with self.assertRaises(InvalidInput):
            evaluation.mel_cepstral_distortion(mel, MelSpectrogram(frames=mel.frames[:5]))

    def test_contour_correlation(self):
        log_f0 = np.log(np.linspace(100, 200, 10))
        voiced = np.ones(10, dtype=bool)
        source = F0Track(log_f0=log_f0, voiced=voiced)
        shifted = F0Track(log_f0=log_f0 + 0.5, voiced=voiced)
        self.assertAlmostEqual(evaluation.contour_correlation(source, shifted), 1.0)
        sparse = F0Track(log_f0=log_f0, voiced=np.arange(10) < 2)
        self.assertIsNone(evaluation.contour_correlation(source, sparse))

    def test_speaker_similarity(self):
        torch.manual_seed(0)
        encoder = SpeakerEncoder()
        rng = np.random.default_rng(1)
        shapes = {'low': np.linspace(-1.0, -6.0, 80), 'high': np.linspace(-6.0, -1.0, 80)}
        mels = {speaker: [MelSpectrogram(frames=(shape + 0.1 * rng.standard_normal((30, 80))).astype(np.float32))
                          for _ in range(3)]
                for speaker, shape in shapes.items()}
        a, b = mels['low'][0], mels['high'][0]
        self.assertAlmostEqual(evaluation.speaker_similarity(encoder, a, a), 1.0, places=6)
        self.assertAlmostEqual(evaluation.speaker_similarity(encoder, a, b),
                               evaluation.speaker_similarity(encoder, b, a), places=12)
        intra = [evaluation.speaker_similarity(encoder, x, y)
                 for group in mels.values() for i, x in enumerate(group) for y in group[i + 1:]]
        inter = [evaluation.speaker_similarity(encoder, x, y) for x in mels['low'] for y in mels['high']]
        self.assertGreater(np.mean(intra), np.mean(inter))


class LatentSpace(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.vectors = np.concatenate([rng.normal(0, 0.1, (10, 4)), rng.normal(3, 0.1, (10, 4))])
        self.labels = ['neutral'] * 10 + ['spk01'] * 10

    def test_purity(self):
        self.assertEqual(evaluation.cluster_purity(self.vectors, self.labels, seed=1), 1.0)
        self.assertEqual(evaluation.cluster_purity(self.vectors, ['neutral'] * 20), 1.0)
        with self.assertRaises(InvalidInput):
            evaluation.cluster_purity(self.vectors[:1], ['a'], k=2)

    def test_projection(self):
        projection = evaluation.latent_projection_2d(self.vectors, self.labels)
        self.assertEqual(projection.coordinates.shape, (20, 2))
        self.assertEqual(list(projection.centroids), ['neutral', 'spk01'])
        with self.assertRaises(DegenerateInput):
            evaluation.latent_projection_2d(np.ones((5, 4)), ['a'] * 5)
        with self.assertRaises(InvalidInput):
            evaluation.latent_projection_2d(self.vectors, self.labels, method='umap')

    def test_tsne(self):
        projection = evaluation.latent_projection_2d(self.vectors, self.labels, method='tsne', seed=2)
        self.assertEqual(projection.coordinates.shape, (20, 2))
        self.assertEqual(len(projection.centroids), 2)

    def test_svg_is_deterministic(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = [os.path.join(tmp, name) for name in ('a.svg', 'b.svg')]
            for path in paths:
                evaluation.latent_projection_2d(self.vectors, self.labels, path=path)
            with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
                content = a.read()
                self.assertEqual(content, b.read())
        self.assertIn(b'<svg', content)
