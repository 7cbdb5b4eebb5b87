import itertools
import logging

import numpy as np
from django.test import SimpleTestCase

from speech import align
from speech.errors import AlignmentInfeasible, InvalidInput, MissingPhone
from speech.tests.helpers import fake_manifest

logging.disable(logging.INFO)


def random_model(rng, phones, dim=2):
    n = len(phones)
    return align.MonophoneHmm(
        phones,
        rng.normal(scale=2.0, size=(n, align.STATES_PER_PHONE, dim)),
        rng.uniform(0.3, 2.0, size=(n, align.STATES_PER_PHONE, dim)),
        rng.uniform(0.05, 0.95, size=(n, align.STATES_PER_PHONE)),
    )


def compositions(total, parts):
    '''Every way of writing `total` as `parts` positive durations.'''
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield [b - a for a, b in zip(bounds, bounds[1:])]


def sampled_mfccs(manifest, model, rng):
    '''Frames drawn from `model` along random durations of each utterance's chain.'''
    mfccs = {}
    means = model.means.reshape(-1, model.dim)
    for utterance in manifest.utterances:
        chain = model.chain(utterance.alignment_phones)
        states = np.repeat(chain, rng.integers(2, 6, size=len(chain)))
        mfccs[utterance.utterance_id] = means[states] + 0.3 * rng.standard_normal((len(states), model.dim))
    return mfccs


class ForceAlign(SimpleTestCase):
    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(0)
        inventory = ['a', 'm', '#']
        checked = 0
        while checked < 200:
            phones = list(rng.choice(inventory, size=int(rng.integers(1, 4)), replace=False))
            model = random_model(rng, inventory)
            chain = model.chain(phones)
            n_frames = int(rng.integers(len(chain), 11))
            frames = rng.normal(scale=2.0, size=(n_frames, 2))

            result = align.force_align(model, phones, frames)
            best = max(model.path_log_likelihood(frames, np.repeat(chain, durations))
                       for durations in compositions(n_frames, len(chain)))
            self.assertAlmostEqual(result.log_likelihood, best, places=6)
            self.assertTrue(align.is_valid_path(result.state_ids, chain))
            self.assertEqual(len(result), n_frames)
            self.assertAlmostEqual(model.path_log_likelihood(frames, result.state_ids), best, places=6)
            checked += 1

    def test_one_frame_per_state(self):
        model = random_model(np.random.default_rng(1), ['a', 'm'])
        result = align.force_align(model, ['a', 'm'], np.zeros((6, 2)))
        self.assertEqual(list(result.state_ids), list(model.chain(['a', 'm'])))

    def test_too_few_frames(self):
        model = random_model(np.random.default_rng(2), ['a', 'm'])
        with self.assertRaises(AlignmentInfeasible) as cm:
            align.force_align(model, ['a', 'm'], np.zeros((5, 2)), utterance_id='u1')
        self.assertEqual(cm.exception.utterance_id, 'u1')

    def test_unknown_phone(self):
        model = random_model(np.random.default_rng(3), ['a'])
        with self.assertRaises(MissingPhone):
            align.force_align(model, ['a', 'sh'], np.zeros((9, 2)))


class Paths(SimpleTestCase):
    def test_is_valid_path(self):
        chain = [3, 4, 5]
        self.assertTrue(align.is_valid_path([3, 3, 4, 5, 5], chain))
        self.assertFalse(align.is_valid_path([3, 5, 5], chain))
        self.assertFalse(align.is_valid_path([3, 4, 4], chain))
        self.assertFalse(align.is_valid_path([4, 5], chain))
        self.assertFalse(align.is_valid_path([], chain))

    def test_upsample(self):
        seq = align.StateSequence(state_ids=np.array([0, 1, 2]), utterance_id='u')
        self.assertEqual(list(align.upsample_states(seq, 7).state_ids), [0, 0, 0, 1, 1, 2, 2])
        self.assertEqual(list(align.upsample_states(seq, 3).state_ids), [0, 1, 2])
        with self.assertRaises(InvalidInput):
            align.upsample_states(seq, 2)


class Training(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        self.inventory = ['#', 'm', 'a']
        self.manifest = fake_manifest(speakers=2, per_speaker=6)
        self.mfccs = sampled_mfccs(self.manifest, random_model(rng, self.inventory, dim=3), rng)

    def test_flat_start_needs_every_phone(self):
        with self.assertRaises(MissingPhone):
            align.flat_start_init(self.manifest, self.mfccs, inventory=self.inventory + ['sh'])

    def test_likelihood_never_decreases(self):
        model = align.flat_start_init(self.manifest, self.mfccs, inventory=self.inventory)
        trained = align.viterbi_train(model, self.manifest, self.mfccs, 4)
        self.assertEqual(len(trained.log_likelihoods), 5)
        for before, after in zip(trained.log_likelihoods, trained.log_likelihoods[1:]):
            self.assertGreaterEqual(after, before - 1e-6 * abs(before))
        self.assertEqual(trained.skipped, [])

    def test_zero_iterations(self):
        model = align.flat_start_init(self.manifest, self.mfccs, inventory=self.inventory)
        same = align.viterbi_train(model, self.manifest, self.mfccs, 0)
        self.assertIsNot(same, model)
        np.testing.assert_array_equal(same.means, model.means)
        self.assertEqual(same.log_likelihoods, [])

    def test_short_utterances_are_skipped(self):
        model = align.flat_start_init(self.manifest, self.mfccs, inventory=self.inventory)
        mfccs = dict(self.mfccs, spk01_0002=np.zeros((4, 3)))
        alignments, skipped = align.align_all(model, self.manifest, mfccs)
        self.assertEqual(skipped, ['spk01_0002'])
        self.assertNotIn('spk01_0002', alignments)

    def test_recovers_known_means(self):
        rng = np.random.default_rng(8)
        truth = np.array([[[0.0, 0.0], [3.0, 0.0], [6.0, 0.0]],
                          [[0.0, 6.0], [3.0, 6.0], [6.0, 6.0]]])
        inventory = ['a', 'm']
        manifest = fake_manifest(speakers=1, per_speaker=12)
        for n, utterance in enumerate(manifest.utterances):
            utterance.phones = [['a', 'm'], ['m', 'a'], ['a', 'm', 'a']][n % 3]
        generator = align.MonophoneHmm(inventory, truth, np.full(truth.shape, 0.09), np.full((2, 3), 0.7))
        mfccs = {}
        for utterance in manifest.utterances:
            chain = generator.chain(utterance.alignment_phones)
            states = np.repeat(chain, rng.integers(3, 9, size=len(chain)))
            mfccs[utterance.utterance_id] = truth.reshape(-1, 2)[states] + 0.3 * rng.standard_normal((len(states), 2))

        model = align.flat_start_init(manifest, mfccs, inventory=inventory)
        trained = align.viterbi_train(model, manifest, mfccs, 5)
        np.testing.assert_allclose(trained.means, truth, atol=0.2)
