'''
Monophone HMM forced alignment.

Each phone gets three emitting states in a left-to-right chain without skips.
Every state emits MFCC frames through one diagonal Gaussian and has a single
self-loop probability (advancing takes the rest). An utterance's states are
the concatenation of its phones' chains; the path must start in the first
state and end in the last one.

State IDs are global: phone_index * 3 + k for k in 0..2.
'''
import copy
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from speech import featio
from speech.corpus import ALIGNMENT_PHONES
from speech.errors import AlignmentInfeasible, InvalidInput, MissingPhone

logger = logging.getLogger('speech.align')

STATES_PER_PHONE = 3
VARIANCE_FLOOR = 1e-4
MIN_SELF_LOOP = 0.01
MAX_SELF_LOOP = 0.99
LOG_2PI = math.log(2 * math.pi)


@dataclass
class StateSequence:
    state_ids: np.ndarray
    utterance_id: str = ''
    log_likelihood: float = None

    def __len__(self):
        return len(self.state_ids)

    def save(self, path):
        featio.write_matrix(path, np.asarray(self.state_ids, dtype=np.float32))

    @classmethod
    def load(cls, path, utterance_id=''):
        return cls(state_ids=featio.read_matrix(path)[:, 0].round().astype(np.int64), utterance_id=utterance_id)


class MonophoneHmm:
    def __init__(self, phones, means, variances, self_loop):
        self.phones = list(phones)
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.maximum(np.asarray(variances, dtype=np.float64), VARIANCE_FLOOR)
        self.self_loop = np.clip(np.asarray(self_loop, dtype=np.float64), MIN_SELF_LOOP, MAX_SELF_LOOP)
        self.phone_index = {phone: i for i, phone in enumerate(self.phones)}
        # Total Viterbi log-likelihood after each training pass.
        self.log_likelihoods = []
        self.skipped = []

    @property
    def n_states(self):
        return len(self.phones) * STATES_PER_PHONE

    @property
    def dim(self):
        return self.means.shape[-1]

    def copy(self):
        return copy.deepcopy(self)

    def chain(self, phones):
        '''Global state IDs of the concatenated left-to-right chain.'''
        try:
            indices = [self.phone_index[phone] for phone in phones]
        except KeyError as e:
            raise MissingPhone('phone {} is not in the model'.format(e.args[0]))
        return np.array([i * STATES_PER_PHONE + k for i in indices for k in range(STATES_PER_PHONE)])

    def state_phone(self, state_id):
        return self.phones[state_id // STATES_PER_PHONE]

    def emission_log_probs(self, frames, states):
        '''(T, len(states)) diagonal-Gaussian log densities.'''
        means = self.means.reshape(-1, self.dim)[states]
        variances = self.variances.reshape(-1, self.dim)[states]
        diff = frames[:, None, :] - means[None, :, :]
        return -0.5 * (LOG_2PI * self.dim + np.log(variances).sum(axis=1)[None, :] +
                       (diff ** 2 / variances[None, :, :]).sum(axis=2))

    def path_log_likelihood(self, frames, state_ids):
        '''Score of an explicit path: emissions plus transitions.'''
        state_ids = np.asarray(state_ids)
        loop = self.self_loop.reshape(-1)
        frames = np.asarray(frames, dtype=np.float64)
        score = float(sum(self.emission_log_probs(frames[t:t + 1], state_ids[t:t + 1])[0, 0]
                          for t in range(len(state_ids))))
        for previous, current in zip(state_ids[:-1], state_ids[1:]):
            score += math.log(loop[previous]) if previous == current else math.log(1 - loop[previous])
        return score

    def to_json(self):
        return {
            'phones': self.phones,
            'states_per_phone': STATES_PER_PHONE,
            'means': self.means.tolist(),
            'variances': self.variances.tolist(),
            'self_loop': self.self_loop.tolist(),
            'log_likelihoods': self.log_likelihoods,
            'skipped': self.skipped,
        }

    @classmethod
    def from_json(cls, data):
        model = cls(data['phones'], data['means'], data['variances'], data['self_loop'])
        model.log_likelihoods = list(data.get('log_likelihoods', []))
        model.skipped = list(data.get('skipped', []))
        return model

    def save(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(json.load(f))


def _frames(mfcc):
    return np.asarray(getattr(mfcc, 'frames', mfcc), dtype=np.float64)


def force_align(model, phones, mfcc, utterance_id=''):
    frames = _frames(mfcc)
    chain = model.chain(phones)
    n_frames, n_states = len(frames), len(chain)
    if n_frames < n_states:
        raise AlignmentInfeasible(
            '{}: {} frames cannot cover {} states'.format(utterance_id, n_frames, n_states),
            utterance_id=utterance_id)
    emit = model.emission_log_probs(frames, chain)
    loop = model.self_loop.reshape(-1)[chain]
    stay_cost, move_cost = np.log(loop), np.log1p(-loop)

    delta = np.full(n_states, -np.inf)
    delta[0] = emit[0, 0]
    advanced = np.zeros((n_frames, n_states), dtype=bool)
    for t in range(1, n_frames):
        stay = delta + stay_cost
        move = np.full(n_states, -np.inf)
        move[1:] = delta[:-1] + move_cost[:-1]
        # Ties go to the self-loop.
        advanced[t] = move > stay
        delta = np.where(advanced[t], move, stay) + emit[t]
    if not np.isfinite(delta[-1]):
        raise AlignmentInfeasible('{}: no complete path'.format(utterance_id), utterance_id=utterance_id)

    path = np.empty(n_frames, dtype=np.int64)
    s = n_states - 1
    for t in range(n_frames - 1, -1, -1):
        path[t] = s
        if t > 0 and advanced[t, s]:
            s -= 1
    return StateSequence(state_ids=chain[path], utterance_id=utterance_id, log_likelihood=float(delta[-1]))


class _Statistics:
    '''Per-state sufficient statistics from segmented utterances.'''

    def __init__(self, n_states, dim):
        self.count = np.zeros(n_states)
        self.total = np.zeros((n_states, dim))
        self.squares = np.zeros((n_states, dim))
        self.stays = np.zeros(n_states)
        self.moves = np.zeros(n_states)

    def add(self, frames, state_ids):
        np.add.at(self.count, state_ids, 1)
        np.add.at(self.total, state_ids, frames)
        np.add.at(self.squares, state_ids, frames ** 2)
        same = state_ids[1:] == state_ids[:-1]
        np.add.at(self.stays, state_ids[:-1][same], 1)
        np.add.at(self.moves, state_ids[:-1][~same], 1)

    def estimate(self, model):
        seen = self.count > 0
        means = model.means.reshape(-1, model.dim).copy()
        variances = model.variances.reshape(-1, model.dim).copy()
        means[seen] = self.total[seen] / self.count[seen, None]
        variances[seen] = self.squares[seen] / self.count[seen, None] - means[seen] ** 2
        loop = model.self_loop.reshape(-1).copy()
        transitions = self.stays + self.moves
        counted = transitions > 0
        loop[counted] = self.stays[counted] / transitions[counted]
        n_phones = len(model.phones)
        out = MonophoneHmm(
            model.phones,
            means.reshape(n_phones, STATES_PER_PHONE, model.dim),
            variances.reshape(n_phones, STATES_PER_PHONE, model.dim),
            loop.reshape(n_phones, STATES_PER_PHONE),
        )
        out.log_likelihoods = list(model.log_likelihoods)
        out.skipped = list(model.skipped)
        return out


def uniform_segmentation(n_frames, chain):
    '''Frame t goes to chain position floor(t * len(chain) / n_frames).'''
    return chain[(np.arange(n_frames) * len(chain)) // n_frames]


def flat_start_init(manifest, mfccs, inventory=ALIGNMENT_PHONES):
    inventory = list(inventory)
    dim = None
    for utterance in manifest.utterances:
        if utterance.utterance_id in mfccs:
            dim = _frames(mfccs[utterance.utterance_id]).shape[1]
            break
    if dim is None:
        raise MissingPhone('no MFCC data for any utterance')
    n_phones = len(inventory)
    model = MonophoneHmm(
        inventory,
        np.zeros((n_phones, STATES_PER_PHONE, dim)),
        np.ones((n_phones, STATES_PER_PHONE, dim)),
        np.full((n_phones, STATES_PER_PHONE), 0.5),
    )
    statistics = _Statistics(model.n_states, dim)
    for utterance in manifest.utterances:
        frames = _frames(mfccs[utterance.utterance_id])
        chain = model.chain(utterance.alignment_phones)
        if len(frames) < len(chain):
            model.skipped.append(utterance.utterance_id)
            continue
        statistics.add(frames, uniform_segmentation(len(frames), chain))
    missing = [phone for i, phone in enumerate(inventory)
               if statistics.count[i * STATES_PER_PHONE] == 0]
    if missing:
        raise MissingPhone('phones absent from training data: {}'.format(' '.join(missing)))
    return statistics.estimate(model)


def align_all(model, manifest, mfccs):
    '''Force-align every utterance; infeasible ones are skipped and listed.'''
    alignments, skipped = {}, []
    for utterance in manifest.utterances:
        try:
            alignments[utterance.utterance_id] = force_align(
                model, utterance.alignment_phones, mfccs[utterance.utterance_id], utterance.utterance_id)
        except AlignmentInfeasible as e:
            logger.warning('Skipping %s: %s', utterance.utterance_id, e)
            skipped.append(utterance.utterance_id)
    return alignments, skipped


def viterbi_train(model, manifest, mfccs, n_iters):
    '''Segmental Viterbi training; returns a new model.'''
    model = model.copy()
    if n_iters <= 0:
        return model
    alignments, skipped = align_all(model, manifest, mfccs)
    model.skipped = skipped
    model.log_likelihoods.append(sum(a.log_likelihood for a in alignments.values()))
    for iteration in range(n_iters):
        statistics = _Statistics(model.n_states, model.dim)
        for utterance_id, alignment in alignments.items():
            statistics.add(_frames(mfccs[utterance_id]), alignment.state_ids)
        model = statistics.estimate(model)
        alignments, _ = align_all(model, manifest, mfccs)
        total = sum(a.log_likelihood for a in alignments.values())
        model.log_likelihoods.append(total)
        logger.info('Viterbi iteration %d: total log-likelihood %.2f over %d utterances',
                    iteration + 1, total, len(alignments))
    return model


def upsample_states(seq, target_T):
    length = len(seq.state_ids)
    if target_T < length:
        raise InvalidInput('cannot upsample {} states to {} frames'.format(length, target_T))
    index = (np.arange(target_T) * length) // target_T
    return StateSequence(
        state_ids=np.asarray(seq.state_ids)[index],
        utterance_id=seq.utterance_id,
        log_likelihood=seq.log_likelihood,
    )


def is_valid_path(state_ids, chain):
    '''Starts at chain[0], ends at chain[-1], only stays or steps by one.'''
    index = 0
    state_ids = list(state_ids)
    chain = list(chain)
    if not state_ids or state_ids[0] != chain[0]:
        return False
    for previous, current in zip(state_ids, state_ids[1:]):
        if current == previous:
            continue
        index += 1
        if index >= len(chain) or chain[index] != current:
            return False
    return index == len(chain) - 1
