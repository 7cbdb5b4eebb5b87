'''
Voice conversion conditioned on log-f0.

A reference encoder squeezes the source mel through a temporal bottleneck
into a low-rate VAE latent; a phonetic encoder reads frame-level HMM states;
the decoder regenerates mel frames one for one from both, the log-f0 track
and a speaker embedding. There is no attention, so a conversion always keeps
the source duration.

Training reconstructs each utterance from its own features and its own
per-utterance embedding. Conversion keeps the source's reference and
phonetic inputs but gives the decoder the target speaker's centroid and the
source f0 shifted to the target speaker's mean.
'''
import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from speech import featio
from speech.audio_config import N_MELS
from speech.dsp import LOG_FLOOR_VALUE, MelSpectrogram, normalize_log_f0
from speech.errors import DataError, InvalidInput
from speech.experiment import VcConfig
from speech.seeds import derive_seed, numpy_rng, torch_generator

logger = logging.getLogger('speech.vc')
training_logger = logging.getLogger('speech.training')

SPEAKER_DIM = 64
GRAD_CLIP = 1.0


@dataclass
class VcLatent:
    z: torch.Tensor
    mu: torch.Tensor
    log_sigma: torch.Tensor

    def kl(self):
        return gaussian_kl(self.mu, self.log_sigma)


def gaussian_kl(mu, log_sigma):
    '''KL to a standard normal: summed over latent dims, averaged over latents.'''
    per_latent = -0.5 * (1 + 2 * log_sigma - mu ** 2 - torch.exp(2 * log_sigma))
    return per_latent.sum(dim=-1).mean()


def kl_weight(step, total_steps, beta, warmup_fraction):
    '''beta, ramped linearly from 0 over the first warmup_fraction of steps.'''
    warmup = warmup_fraction * total_steps
    if warmup <= 0:
        return beta
    return beta * min(1.0, step / warmup)


def _conv_stack(in_channels, channels, layers, kernel_size=5):
    modules = []
    for i in range(layers):
        modules += [
            nn.Conv1d(in_channels if i == 0 else channels, channels, kernel_size, padding=kernel_size // 2),
            nn.ReLU(),
        ]
    return nn.Sequential(*modules)


class ReferenceEncoder(nn.Module):
    def __init__(self, n_mels=N_MELS, speaker_dim=SPEAKER_DIM, channels=128, latent_dim=16, bottleneck=8):
        super().__init__()
        self.bottleneck = bottleneck
        self.convs = _conv_stack(n_mels + speaker_dim, channels, 3)
        self.pool = nn.AvgPool1d(bottleneck)
        self.mu = nn.Conv1d(channels, latent_dim, 1)
        self.log_sigma = nn.Conv1d(channels, latent_dim, 1)

    def forward(self, mels, speaker, sample=False, generator=None):
        '''
        mels (B, T, n_mels), speaker (B, speaker_dim) -> upsampled (B, T,
        latent_dim) plus the VcLatent at T / bottleneck resolution.
        '''
        length = mels.shape[1]
        padded = -(-length // self.bottleneck) * self.bottleneck
        if padded != length:
            # Repeat the last frame up to a multiple of the bottleneck.
            mels = torch.cat([mels, mels[:, -1:, :].expand(-1, padded - length, -1)], dim=1)
        x = torch.cat([mels, speaker[:, None, :].expand(-1, padded, -1)], dim=2)
        hidden = self.pool(self.convs(x.transpose(1, 2)))
        mu = self.mu(hidden).transpose(1, 2)
        log_sigma = self.log_sigma(hidden).transpose(1, 2)
        if sample:
            noise = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
            z = mu + torch.exp(log_sigma) * noise
        else:
            z = mu
        upsampled = z.repeat_interleave(self.bottleneck, dim=1)[:, :length]
        return upsampled, VcLatent(z=z, mu=mu, log_sigma=log_sigma)


class PhoneticEncoder(nn.Module):
    def __init__(self, n_states, speaker_dim=SPEAKER_DIM, embedding_dim=64, channels=128, output_dim=128):
        super().__init__()
        self.n_states = n_states
        self.embedding = nn.Embedding(n_states, embedding_dim)
        self.convs = _conv_stack(embedding_dim + speaker_dim, channels, 3)
        self.lstm = nn.LSTM(channels, output_dim // 2, batch_first=True, bidirectional=True)

    def forward(self, states, speaker):
        '''states (B, T) int -> (B, T, output_dim).'''
        if states.numel() and (int(states.min()) < 0 or int(states.max()) >= self.n_states):
            raise InvalidInput('state IDs must lie in [0, {})'.format(self.n_states))
        x = self.embedding(states)
        x = torch.cat([x, speaker[:, None, :].expand(-1, x.shape[1], -1)], dim=2)
        x = self.convs(x.transpose(1, 2)).transpose(1, 2)
        return self.lstm(x)[0]


class FrameDecoder(nn.Module):
    def __init__(self, input_dim, n_mels=N_MELS, hidden_dim=256, layers=2):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden_dim, layers, batch_first=True)
        self.projection = nn.Linear(hidden_dim, n_mels)

    def forward(self, x):
        return self.projection(self.lstm(x)[0])


class VcModel(nn.Module):
    def __init__(self, n_states, n_mels=N_MELS, speaker_dim=SPEAKER_DIM, latent_dim=16, bottleneck=8):
        super().__init__()
        self.n_states = n_states
        self.n_mels = n_mels
        self.speaker_dim = speaker_dim
        self.latent_dim = latent_dim
        self.bottleneck = bottleneck
        self.reference_encoder = ReferenceEncoder(n_mels, speaker_dim, latent_dim=latent_dim, bottleneck=bottleneck)
        self.phonetic_encoder = PhoneticEncoder(n_states, speaker_dim)
        self.decoder = FrameDecoder(latent_dim + 128 + 1 + speaker_dim, n_mels)

    def decode(self, reference, phonetic, log_f0, speaker):
        length = reference.shape[1]
        if phonetic.shape[1] != length or log_f0.shape[1] != length:
            raise InvalidInput('decoder inputs disagree on length: {}, {}, {}'.format(
                length, phonetic.shape[1], log_f0.shape[1]))
        x = torch.cat([reference, phonetic, log_f0[:, :, None],
                       speaker[:, None, :].expand(-1, length, -1)], dim=2)
        return self.decoder(x)

    def forward(self, mels, states, log_f0, speaker, sample=False, generator=None, decoder_speaker=None):
        reference, latent = self.reference_encoder(mels, speaker, sample=sample, generator=generator)
        phonetic = self.phonetic_encoder(states, speaker)
        decoder_speaker = speaker if decoder_speaker is None else decoder_speaker
        return self.decode(reference, phonetic, log_f0, decoder_speaker), latent

    def header(self):
        return {
            'kind': 'vc',
            'n_states': self.n_states,
            'n_mels': self.n_mels,
            'speaker_dim': self.speaker_dim,
            'latent_dim': self.latent_dim,
            'bottleneck': self.bottleneck,
        }


def save_model(model, stem, **extra):
    featio.save_module(model, stem, {**model.header(), **extra})


def load_model(stem):
    header = featio.read_header(stem)
    model = VcModel(header['n_states'], header['n_mels'], header['speaker_dim'],
                    header['latent_dim'], header['bottleneck'])
    model.load_state_dict(featio.load_state(stem, header))
    model.eval()
    return model


def _tensor(array, dtype=torch.float32):
    return torch.as_tensor(np.asarray(array), dtype=dtype)[None]


def _speaker(embedding):
    return _tensor(getattr(embedding, 'vector', embedding))


def encode_reference(model, mel, speaker_emb, sample=False, generator=None):
    model.eval()
    with torch.no_grad():
        upsampled, latent = model.reference_encoder(_tensor(mel.frames), _speaker(speaker_emb),
                                                    sample=sample, generator=generator)
    return upsampled[0], latent


def encode_phonetic(model, states, speaker_emb):
    model.eval()
    with torch.no_grad():
        return model.phonetic_encoder(_tensor(states.state_ids, torch.long), _speaker(speaker_emb))[0]


def decode_frames(model, ref_latent, phon_seq, log_f0, speaker_emb, utterance_id=''):
    model.eval()
    with torch.no_grad():
        frames = model.decode(ref_latent[None], phon_seq[None],
                              _tensor(log_f0.log_f0), _speaker(speaker_emb))[0]
    frames = np.maximum(frames.numpy(), LOG_FLOOR_VALUE)
    return MelSpectrogram(frames=frames.astype(np.float32), utterance_id=utterance_id or log_f0.utterance_id)


def vc_loss(pred_mel, target_mel, mu, log_sigma, beta):
    if pred_mel.shape != target_mel.shape:
        raise InvalidInput('prediction {} and target {} differ in shape'.format(
            tuple(pred_mel.shape), tuple(target_mel.shape)))
    l1 = (pred_mel - target_mel).abs().mean()
    kl = gaussian_kl(mu, log_sigma)
    return l1 + beta * kl, {'l1': l1, 'kl': kl}


@dataclass
class UtteranceFeatures:
    utterance_id: str
    speaker_id: str
    mel: MelSpectrogram
    states: object
    f0: object
    embedding: np.ndarray


def collect_features(manifest, mels, f0s, states, embeddings):
    '''Join per-utterance features; lists every utterance missing any of them.'''
    items, missing = [], []
    for utterance in manifest.utterances:
        uid = utterance.utterance_id
        if uid not in mels or uid not in f0s or uid not in states or uid not in embeddings:
            missing.append(uid)
            continue
        items.append(UtteranceFeatures(uid, utterance.speaker_id, mels[uid], states[uid], f0s[uid],
                                       np.asarray(getattr(embeddings[uid], 'vector', embeddings[uid]))))
    if missing:
        raise DataError('missing features for {} utterances: {}'.format(len(missing), ' '.join(missing[:10])),
                        utterance_ids=missing)
    return items


class SegmentSampler:
    def __init__(self, items, batch_size, segment_frames, rng):
        self.items = items
        self.batch_size = batch_size
        self.segment_frames = segment_frames
        self.rng = rng

    def sample(self):
        chosen = [self.items[i] for i in self.rng.integers(0, len(self.items), self.batch_size)]
        length = min(self.segment_frames, min(item.mel.num_frames for item in chosen))
        mels, states, f0s = [], [], []
        for item in chosen:
            start = int(self.rng.integers(0, item.mel.num_frames - length + 1))
            mels.append(item.mel.frames[start:start + length])
            states.append(item.states.state_ids[start:start + length])
            f0s.append(item.f0.log_f0[start:start + length])
        return (
            torch.as_tensor(np.stack(mels), dtype=torch.float32),
            torch.as_tensor(np.stack(states), dtype=torch.long),
            torch.as_tensor(np.stack(f0s), dtype=torch.float32),
            torch.as_tensor(np.stack([item.embedding for item in chosen]), dtype=torch.float32),
        )


def _monitor_l1(model, batch):
    mels, states, f0s, speakers = batch
    model.eval()
    with torch.no_grad():
        pred, _ = model(mels, states, f0s, speakers)
    return float((pred - mels).abs().mean())


def _mean_frame_l1(items, batch):
    mean_frame = np.concatenate([item.mel.frames for item in items]).mean(axis=0)
    return float((batch[0] - torch.as_tensor(mean_frame, dtype=torch.float32)).abs().mean())


def _run_stage(name, model, sampler, steps, learning_rate, config, generator):
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    for step in range(1, steps + 1):
        model.train()
        mels, states, f0s, speakers = sampler.sample()
        pred, latent = model(mels, states, f0s, speakers, sample=True, generator=generator)
        beta = kl_weight(step, steps, config.beta, config.warmup_fraction) if name == 'stage1' else config.beta
        loss, parts = vc_loss(pred, mels, latent.mu, latent.log_sigma, beta)
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP)
        optimizer.step()
        if step % config.log_interval == 0:
            training_logger.info('vc %s\tstep %d\tloss %.4f\tl1 %.4f\tkl %.4f\tbeta %.2e', name, step,
                                 float(loss), float(parts['l1']), float(parts['kl']), beta)


def train_vc(manifest, mels, f0s, states, embeddings, n_states, target_speaker, config=None, seed=0):
    '''
    Stage 1 trains on every speaker's training split; stage 2 fine-tunes on
    the target speaker alone with a fresh optimizer at the fine-tuning rate.
    The returned model carries a `training_summary` of monitor-batch L1 values
    and the mean-frame baseline on the same monitor batch.
    '''
    config = config or VcConfig()
    train = manifest.filter(split='train')
    items = collect_features(train, mels, f0s, states, embeddings)
    target_items = [item for item in items if item.speaker_id == target_speaker]
    if not items or not target_items:
        raise DataError('no training utterances for voice conversion', utterance_ids=[])

    torch.manual_seed(derive_seed(seed, 'vc', 'init'))
    model = VcModel(n_states, latent_dim=config.latent_dim, bottleneck=config.bottleneck)
    generator = torch_generator(seed, 'vc', 'noise')
    monitor = SegmentSampler(items, config.batch_size, config.segment_frames, numpy_rng(seed, 'vc', 'monitor')).sample()
    summary = {'monitor_l1_initial': _monitor_l1(model, monitor), 'mean_frame_l1': _mean_frame_l1(items, monitor)}

    _run_stage('stage1', model,
               SegmentSampler(items, config.batch_size, config.segment_frames, numpy_rng(seed, 'vc', 'stage1')),
               config.stage1_steps, config.learning_rate, config, generator)
    summary['monitor_l1_stage1'] = _monitor_l1(model, monitor)
    _run_stage('stage2', model,
               SegmentSampler(target_items, config.batch_size, config.segment_frames,
                              numpy_rng(seed, 'vc', 'stage2')),
               config.stage2_steps, config.finetune_learning_rate, config, generator)
    summary['monitor_l1_final'] = _monitor_l1(model, monitor)
    model.training_summary = summary
    logger.info('VC monitor L1 %.4f -> %.4f (mean-frame baseline %.4f)', summary['monitor_l1_initial'],
                summary['monitor_l1_final'], summary['mean_frame_l1'])
    model.eval()
    return model


def reconstruction_l1(model, item):
    '''L1 of the model re-synthesizing an utterance from its own inputs.'''
    model.eval()
    with torch.no_grad():
        pred, _ = model(_tensor(item.mel.frames), _tensor(item.states.state_ids, torch.long),
                        _tensor(item.f0.log_f0), _tensor(item.embedding))
    return float((pred[0] - torch.as_tensor(item.mel.frames)).abs().mean())


@dataclass
class ConversionTarget:
    speaker_id: str
    centroid: np.ndarray
    log_f0_mean: float


def convert_utterance(model, source, source_log_f0_mean, target, utterance_id=''):
    '''
    Convert one source utterance (an UtteranceFeatures) to the target
    speaker. The output has exactly as many frames as the source mel.
    '''
    f0 = normalize_log_f0(source.f0, source_log_f0_mean, target.log_f0_mean)
    reference, _ = encode_reference(model, source.mel, source.embedding, sample=False)
    phonetic = encode_phonetic(model, source.states, source.embedding)
    mel = decode_frames(model, reference, phonetic, f0, target.centroid,
                        utterance_id=utterance_id or source.utterance_id)
    return mel
