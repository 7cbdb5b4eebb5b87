'''
Speaker embeddings trained with the generalized end-to-end (GE2E) softmax loss.

The encoder runs a two-layer LSTM over log-mel frames, projects the final
hidden state to 64 dimensions and L2-normalizes it. Speaker centroids are the
renormalized mean of a speaker's training-split embeddings; the conversion
target is the target speaker's centroid.
'''
import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from speech import featio
from speech.audio_config import N_MELS
from speech.errors import InvalidBatch, InvalidInput, NormZero
from speech.experiment import SpkembConfig
from speech.seeds import derive_seed, numpy_rng

logger = logging.getLogger('speech.spkemb')
training_logger = logging.getLogger('speech.training')

EMBEDDING_DIM = 64
HIDDEN_DIM = 128
MIN_SCALE = 1e-6
GRAD_CLIP = 3.0


@dataclass
class SpeakerEmbedding:
    vector: np.ndarray
    speaker_id: str = ''
    # None for centroids
    utterance_id: str = None


class SpeakerEncoder(nn.Module):
    def __init__(self, n_mels=N_MELS, hidden_dim=HIDDEN_DIM, embedding_dim=EMBEDDING_DIM, layers=2):
        super().__init__()
        self.n_mels = n_mels
        self.hidden_dim = hidden_dim
        self.embedding_dim = embedding_dim
        self.layers = layers
        self.lstm = nn.LSTM(n_mels, hidden_dim, layers, batch_first=True)
        self.projection = nn.Linear(hidden_dim, embedding_dim)
        # GE2E similarity scale and bias.
        self.w = nn.Parameter(torch.tensor(10.0))
        self.b = nn.Parameter(torch.tensor(-5.0))

    def forward(self, mels, lengths=None):
        '''(B, T, n_mels) -> (B, embedding_dim) unit vectors.'''
        if lengths is not None:
            mels = nn.utils.rnn.pack_padded_sequence(
                mels, torch.as_tensor(lengths).cpu(), batch_first=True, enforce_sorted=False)
        _, (hidden, _) = self.lstm(mels)
        return F.normalize(self.projection(hidden[-1]), dim=1)

    def clamp_scale(self):
        with torch.no_grad():
            self.w.clamp_(min=MIN_SCALE)

    def header(self):
        return {
            'kind': 'speaker_encoder',
            'n_mels': self.n_mels,
            'hidden_dim': self.hidden_dim,
            'embedding_dim': self.embedding_dim,
            'layers': self.layers,
            'w': float(self.w),
            'b': float(self.b),
        }


def save_encoder(encoder, stem, **extra):
    featio.save_module(encoder, stem, {**encoder.header(), **extra})


def load_encoder(stem):
    header = featio.read_header(stem)
    encoder = SpeakerEncoder(header['n_mels'], header['hidden_dim'], header['embedding_dim'], header['layers'])
    encoder.load_state_dict(featio.load_state(stem, header))
    encoder.eval()
    return encoder


def _unit(vector):
    vector = np.asarray(vector, dtype=np.float64)
    return vector / np.linalg.norm(vector)


def embed_utterance(encoder, mel, speaker_id=''):
    frames = torch.as_tensor(np.asarray(mel.frames, dtype=np.float32))[None]
    encoder.eval()
    with torch.no_grad():
        vector = encoder(frames)[0].double().numpy()
    return SpeakerEmbedding(vector=_unit(vector), speaker_id=speaker_id, utterance_id=mel.utterance_id)


def ge2e_loss(embeddings, w, b):
    '''
    Softmax GE2E loss, summed over every utterance in an (N, M, D) batch of
    N speakers by M utterances. An utterance is compared with its own
    speaker's centroid computed without it.
    '''
    if embeddings.dim() != 3:
        raise InvalidBatch('expected a (speakers, utterances, dim) batch')
    n_speakers, n_utterances, _ = embeddings.shape
    if n_speakers < 2 or n_utterances < 2:
        raise InvalidBatch('GE2E needs at least 2 speakers with 2 utterances each, got {}x{}'.format(
            n_speakers, n_utterances))
    unit = F.normalize(embeddings, dim=2)
    sums = embeddings.sum(dim=1)
    centroids = F.normalize(sums, dim=1)
    # Leave-one-out centroids of each utterance's own speaker.
    exclusive = F.normalize(sums[:, None, :] - embeddings, dim=2)

    cos_all = torch.einsum('nmd,kd->nmk', unit, centroids)
    cos_own = (unit * exclusive).sum(dim=2)
    own = torch.eye(n_speakers, dtype=torch.bool, device=embeddings.device)[:, None, :]
    cos = torch.where(own, cos_own[:, :, None], cos_all)
    similarity = w * cos + b
    positive = similarity[own.expand_as(similarity)].view(n_speakers, n_utterances)
    return (torch.logsumexp(similarity, dim=2) - positive).sum()


def speaker_centroid(embeddings, speaker_id=''):
    vectors = [np.asarray(getattr(e, 'vector', e), dtype=np.float64) for e in embeddings]
    if not vectors:
        raise InvalidInput('no embeddings for speaker {}'.format(speaker_id))
    mean = np.mean(vectors, axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-8:
        raise NormZero('embeddings of speaker {} average to zero'.format(speaker_id))
    return SpeakerEmbedding(vector=mean / norm, speaker_id=speaker_id)


def cosine(a, b):
    a = np.asarray(getattr(a, 'vector', a), dtype=np.float64)
    b = np.asarray(getattr(b, 'vector', b), dtype=np.float64)
    return float(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1.0, 1.0))


class BatchSampler:
    '''Draws N speakers x M utterances, each cropped to a shared length.'''

    def __init__(self, utterances_by_speaker, mels, n_speakers, n_utterances, segment_frames, rng):
        self.speakers = sorted(s for s, utts in utterances_by_speaker.items() if len(utts) >= n_utterances)
        if len(self.speakers) < 2:
            raise InvalidBatch('need at least 2 speakers with {} training utterances'.format(n_utterances))
        self.utterances = {s: sorted(utterances_by_speaker[s]) for s in self.speakers}
        self.mels = mels
        self.n_speakers = min(n_speakers, len(self.speakers))
        self.n_utterances = n_utterances
        self.segment_frames = segment_frames
        self.rng = rng

    def sample(self):
        speakers = self.rng.choice(self.speakers, size=self.n_speakers, replace=False)
        chosen = [self.rng.choice(self.utterances[s], size=self.n_utterances, replace=False) for s in speakers]
        frames = [self.mels[u].frames for row in chosen for u in row]
        length = min(self.segment_frames, min(len(f) for f in frames))
        crops = []
        for f in frames:
            start = int(self.rng.integers(0, len(f) - length + 1))
            crops.append(f[start:start + length])
        return torch.as_tensor(np.stack(crops).astype(np.float32))


def monitor_loss(encoder, batch, n_speakers, n_utterances):
    encoder.eval()
    with torch.no_grad():
        embeddings = encoder(batch).view(n_speakers, n_utterances, -1)
        return float(ge2e_loss(embeddings, encoder.w, encoder.b))


def train_speaker_encoder(manifest, mels, config=None, seed=0):
    '''
    Train on the training split of every speaker in `manifest`. `mels` maps
    utterance IDs to MelSpectrograms. The returned encoder carries
    `monitor_losses` (before, after) measured on one fixed batch.
    '''
    config = config or SpkembConfig()
    torch.manual_seed(derive_seed(seed, 'spkemb', 'init'))
    encoder = SpeakerEncoder()
    by_speaker = {}
    for utterance in manifest.filter(split='train').utterances:
        by_speaker.setdefault(utterance.speaker_id, []).append(utterance.utterance_id)
    if len(by_speaker) < 2:
        raise InvalidBatch('speaker encoder training needs at least 2 speakers')

    sampler = BatchSampler(by_speaker, mels, config.speakers_per_batch, config.utterances_per_speaker,
                           config.segment_frames, numpy_rng(seed, 'spkemb', 'batches'))
    monitor_sampler = BatchSampler(by_speaker, mels, config.speakers_per_batch, config.utterances_per_speaker,
                                   config.segment_frames, numpy_rng(seed, 'spkemb', 'monitor'))
    monitor = monitor_sampler.sample()
    shape = (sampler.n_speakers, sampler.n_utterances)
    initial = monitor_loss(encoder, monitor, *shape)

    optimizer = torch.optim.Adam(encoder.parameters(), lr=config.learning_rate)
    for step in range(1, config.steps + 1):
        encoder.train()
        batch = sampler.sample()
        loss = ge2e_loss(encoder(batch).view(*shape, -1), encoder.w, encoder.b)
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(encoder.parameters(), GRAD_CLIP)
        optimizer.step()
        encoder.clamp_scale()
        if step % config.log_interval == 0:
            training_logger.info('spkemb\tstep %d\tloss %.4f\tw %.3f\tb %.3f', step, float(loss),
                                 float(encoder.w), float(encoder.b))

    encoder.monitor_losses = (initial, monitor_loss(encoder, monitor, *shape))
    logger.info('Speaker encoder monitor loss %.4f -> %.4f', *encoder.monitor_losses)
    encoder.eval()
    return encoder
