'''
Single-speaker, multi-style sequence-to-sequence TTS.

The network follows the Tacotron 2 layout at desk scale: a convolutional +
bidirectional LSTM text encoder, an autoregressive decoder with a prenet, an
attention LSTM, location-sensitive attention and a decoder LSTM, emitting
`reduction` mel frames and as many stop logits per step. A variational
reference encoder summarizes a mel into an utterance-level z, which is
concatenated to every encoder output before attention.

At synthesis time z is the centroid of the training-set posterior means of
one style label (neutral, or the supporting speaker the converted data came
from).
'''
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from speech import featio
from speech.audio_config import N_MELS
from speech.corpus import TOKENS, alignment_phones
from speech.dsp import LOG_FLOOR_VALUE, MelSpectrogram, griffin_lim_invert
from speech.errors import DataError, InvalidInput, SynthesisRunaway
from speech.experiment import TtsConfig
from speech.seeds import derive_seed, numpy_rng, torch_generator
from speech.vc import gaussian_kl, kl_weight

logger = logging.getLogger('speech.tts')
training_logger = logging.getLogger('speech.training')

PAD = 0
# Token IDs start at 1; 0 pads batches.
TOKEN_IDS = {token: i + 1 for i, token in enumerate(TOKENS)}
REFERENCE_MIN_FRAMES = 64
GRAD_CLIP = 1.0


@dataclass
class PhoneticInput:
    token_ids: list

    def __len__(self):
        return len(self.token_ids)


@dataclass
class StyleVector:
    z: np.ndarray
    label: str = ''


def encode_phones(phones):
    if not phones or not alignment_phones(phones):
        raise InvalidInput('empty phonetic input')
    unknown = [p for p in phones if p not in TOKEN_IDS]
    if unknown:
        raise InvalidInput('unknown tokens {}'.format(unknown))
    return PhoneticInput(token_ids=[TOKEN_IDS[p] for p in phones])


class TextEncoder(nn.Module):
    def __init__(self, n_tokens, embedding_dim=256, kernel_size=5, dropout=0.5):
        super().__init__()
        self.dropout = dropout
        self.embedding = nn.Embedding(n_tokens + 1, embedding_dim, padding_idx=PAD)
        self.convolutions = nn.ModuleList([
            nn.Sequential(
                nn.Conv1d(embedding_dim, embedding_dim, kernel_size, padding=kernel_size // 2),
                nn.BatchNorm1d(embedding_dim),
            )
            for _ in range(3)
        ])
        self.lstm = nn.LSTM(embedding_dim, embedding_dim // 2, batch_first=True, bidirectional=True)

    def forward(self, tokens, lengths):
        x = self.embedding(tokens).transpose(1, 2)
        for conv in self.convolutions:
            x = F.dropout(F.relu(conv(x)), self.dropout, self.training)
        x = nn.utils.rnn.pack_padded_sequence(
            x.transpose(1, 2), lengths.cpu(), batch_first=True, enforce_sorted=False)
        outputs, _ = self.lstm(x)
        outputs, _ = nn.utils.rnn.pad_packed_sequence(outputs, batch_first=True, total_length=tokens.shape[1])
        return outputs


class ReferenceEncoder(nn.Module):
    '''Six stride-2 2-D convolutions, a GRU summary, and VAE heads.'''

    CHANNELS = (32, 32, 64, 64, 128, 128)

    def __init__(self, n_mels=N_MELS, gru_dim=128, latent_dim=16):
        super().__init__()
        layers = []
        in_channels = 1
        for channels in self.CHANNELS:
            layers += [
                nn.Conv2d(in_channels, channels, 3, stride=2, padding=1),
                nn.BatchNorm2d(channels),
                nn.ReLU(),
            ]
            in_channels = channels
        self.convs = nn.Sequential(*layers)
        freq = n_mels
        for _ in self.CHANNELS:
            freq = (freq - 1) // 2 + 1
        self.gru = nn.GRU(self.CHANNELS[-1] * freq, gru_dim, batch_first=True)
        self.mu = nn.Linear(gru_dim, latent_dim)
        self.log_sigma = nn.Linear(gru_dim, latent_dim)

    @staticmethod
    def output_lengths(lengths):
        for _ in ReferenceEncoder.CHANNELS:
            lengths = (lengths - 1) // 2 + 1
        return lengths

    def forward(self, mels, lengths=None):
        '''mels (B, T, n_mels) -> mu, log_sigma, each (B, latent_dim).'''
        batch, length, _ = mels.shape
        if lengths is None:
            lengths = torch.full((batch,), length, dtype=torch.long)
        if length < REFERENCE_MIN_FRAMES:
            pad = mels.new_full((batch, REFERENCE_MIN_FRAMES - length, mels.shape[2]), LOG_FLOOR_VALUE)
            mels = torch.cat([mels, pad], dim=1)
        lengths = torch.clamp(torch.as_tensor(lengths), min=REFERENCE_MIN_FRAMES)
        x = self.convs(mels[:, None])
        x = x.permute(0, 2, 1, 3).reshape(batch, x.shape[2], -1)
        out_lengths = torch.clamp(self.output_lengths(lengths), max=x.shape[1])
        packed = nn.utils.rnn.pack_padded_sequence(x, out_lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, hidden = self.gru(packed)
        return self.mu(hidden[-1]), self.log_sigma(hidden[-1])


class Prenet(nn.Module):
    '''Two ReLU layers with dropout kept on at inference.'''

    def __init__(self, n_input, sizes=(64, 64), dropout=0.5):
        super().__init__()
        self.dropout = dropout
        in_sizes = [n_input] + list(sizes[:-1])
        self.layers = nn.ModuleList([nn.Linear(i, o, bias=False) for i, o in zip(in_sizes, sizes)])

    def forward(self, x, generator=None):
        for linear in self.layers:
            x = F.relu(linear(x))
            keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= self.dropout
            x = x * keep / (1 - self.dropout)
        return x


class LocationSensitiveAttention(nn.Module):
    def __init__(self, query_dim, memory_dim, attention_dim=128, n_filters=32, kernel_size=31):
        super().__init__()
        self.query_layer = nn.Linear(query_dim, attention_dim, bias=False)
        self.memory_layer = nn.Linear(memory_dim, attention_dim, bias=False)
        self.v = nn.Linear(attention_dim, 1, bias=False)
        self.location_conv = nn.Conv1d(2, n_filters, kernel_size, padding=kernel_size // 2, bias=False)
        self.location_dense = nn.Linear(n_filters, attention_dim, bias=False)

    def forward(self, query, memory, processed_memory, weights_cat, mask):
        location = self.location_dense(self.location_conv(weights_cat).transpose(1, 2))
        energies = self.v(torch.tanh(self.query_layer(query)[:, None] + location + processed_memory))[:, :, 0]
        energies = energies.masked_fill(mask, -float('inf'))
        weights = F.softmax(energies, dim=1)
        context = torch.bmm(weights[:, None], memory)[:, 0]
        return context, weights


class Decoder(nn.Module):
    def __init__(self, memory_dim, n_mels=N_MELS, reduction=2, prenet_dim=64, rnn_dim=512):
        super().__init__()
        self.n_mels = n_mels
        self.reduction = reduction
        self.rnn_dim = rnn_dim
        self.memory_dim = memory_dim
        self.prenet = Prenet(n_mels, (prenet_dim, prenet_dim))
        self.attention_rnn = nn.LSTMCell(prenet_dim + memory_dim, rnn_dim)
        self.attention = LocationSensitiveAttention(rnn_dim, memory_dim)
        self.decoder_rnn = nn.LSTMCell(rnn_dim + memory_dim, rnn_dim)
        self.frame_projection = nn.Linear(rnn_dim + memory_dim, n_mels * reduction)
        self.stop_projection = nn.Linear(rnn_dim + memory_dim, reduction)

    def initial_state(self, memory):
        batch, length, _ = memory.shape
        zeros = lambda *shape: memory.new_zeros(*shape)
        return {
            'attention_hidden': zeros(batch, self.rnn_dim),
            'attention_cell': zeros(batch, self.rnn_dim),
            'decoder_hidden': zeros(batch, self.rnn_dim),
            'decoder_cell': zeros(batch, self.rnn_dim),
            'weights': zeros(batch, length),
            'cumulative': zeros(batch, length),
            'context': zeros(batch, self.memory_dim),
        }

    def step(self, frame, state, memory, processed_memory, mask, generator=None):
        x = self.prenet(frame, generator)
        attention_hidden, attention_cell = self.attention_rnn(
            torch.cat([x, state['context']], dim=1), (state['attention_hidden'], state['attention_cell']))
        weights_cat = torch.stack([state['weights'], state['cumulative']], dim=1)
        context, weights = self.attention(attention_hidden, memory, processed_memory, weights_cat, mask)
        decoder_hidden, decoder_cell = self.decoder_rnn(
            torch.cat([attention_hidden, context], dim=1), (state['decoder_hidden'], state['decoder_cell']))
        out = torch.cat([decoder_hidden, context], dim=1)
        frames = self.frame_projection(out).view(-1, self.reduction, self.n_mels)
        stop = self.stop_projection(out)
        state = {
            'attention_hidden': attention_hidden,
            'attention_cell': attention_cell,
            'decoder_hidden': decoder_hidden,
            'decoder_cell': decoder_cell,
            'weights': weights,
            'cumulative': state['cumulative'] + weights,
            'context': context,
        }
        return frames, stop, weights, state


class TtsModel(nn.Module):
    def __init__(self, n_tokens=len(TOKENS), n_mels=N_MELS, latent_dim=16, reduction=2, max_decoder_ratio=10):
        super().__init__()
        self.n_tokens = n_tokens
        self.n_mels = n_mels
        self.latent_dim = latent_dim
        self.reduction = reduction
        self.max_decoder_ratio = max_decoder_ratio
        self.text_encoder = TextEncoder(n_tokens)
        self.reference_encoder = ReferenceEncoder(n_mels, latent_dim=latent_dim)
        self.decoder = Decoder(256 + latent_dim, n_mels, reduction)

    def header(self):
        return {
            'kind': 'tts',
            'n_tokens': self.n_tokens,
            'n_mels': self.n_mels,
            'latent_dim': self.latent_dim,
            'reduction': self.reduction,
            'max_decoder_ratio': self.max_decoder_ratio,
        }

    def memory(self, tokens, lengths, z):
        encoded = self.text_encoder(tokens, lengths)
        return torch.cat([encoded, z[:, None, :].expand(-1, encoded.shape[1], -1)], dim=2)

    def forward(self, tokens, lengths, z, teacher=None, generator=None):
        '''
        Teacher-forced when `teacher` (B, T, n_mels) is given, otherwise free
        running for a single sentence. Returns mel (B, T', n_mels), stop
        logits (B, T'), attention (B, steps, N) and whether decoding hit the
        length cap without stopping.
        '''
        memory = self.memory(tokens, lengths, z)
        processed_memory = self.decoder.attention.memory_layer(memory)
        mask = torch.arange(tokens.shape[1])[None, :] >= lengths[:, None]
        state = self.decoder.initial_state(memory)
        frame = memory.new_zeros(memory.shape[0], self.n_mels)
        r = self.reduction
        mels, stops, alignments = [], [], []

        if teacher is not None:
            steps = -(-teacher.shape[1] // r)
            padded = teacher
            if steps * r != teacher.shape[1]:
                pad = teacher.new_full((teacher.shape[0], steps * r - teacher.shape[1], self.n_mels), LOG_FLOOR_VALUE)
                padded = torch.cat([teacher, pad], dim=1)
            for step in range(steps):
                frames, stop, weights, state = self.decoder.step(
                    frame, state, memory, processed_memory, mask, generator)
                mels.append(frames)
                stops.append(stop)
                alignments.append(weights)
                frame = padded[:, step * r + r - 1]
            return torch.cat(mels, dim=1), torch.cat(stops, dim=1), torch.stack(alignments, dim=1), False

        max_steps = -(-self.max_decoder_ratio * int(lengths.max()) // r)
        runaway = True
        for step in range(max_steps):
            frames, stop, weights, state = self.decoder.step(frame, state, memory, processed_memory, mask, generator)
            done = torch.sigmoid(stop[0]) > 0.5
            if bool(done.any()):
                keep = int(torch.nonzero(done)[0]) + 1
                mels.append(frames[:, :keep])
                stops.append(stop[:, :keep])
                alignments.append(weights)
                runaway = False
                break
            mels.append(frames)
            stops.append(stop)
            alignments.append(weights)
            frame = frames[:, -1]
        return torch.cat(mels, dim=1), torch.cat(stops, dim=1), torch.stack(alignments, dim=1), runaway


def save_model(model, stem, **extra):
    featio.save_module(model, stem, {**model.header(), **extra})


def load_model(stem):
    header = featio.read_header(stem)
    model = TtsModel(header['n_tokens'], header['n_mels'], header['latent_dim'],
                     header['reduction'], header['max_decoder_ratio'])
    model.load_state_dict(featio.load_state(stem, header))
    model.eval()
    return model


def reference_to_z(model, mel, sample=False, generator=None, label=''):
    '''Utterance-level z of one mel; returns (StyleVector, mu, log_sigma).'''
    model.eval()
    frames = torch.as_tensor(np.asarray(getattr(mel, 'frames', mel), dtype=np.float32))[None]
    with torch.no_grad():
        mu, log_sigma = model.reference_encoder(frames)
    z = mu
    if sample:
        z = mu + torch.exp(log_sigma) * torch.randn(mu.shape, generator=generator)
    return StyleVector(z=z[0].double().numpy(), label=label), mu[0], log_sigma[0]


def tts_forward(model, phonetic, z, teacher_mel=None, generator=None):
    if not len(phonetic.token_ids):
        raise InvalidInput('empty phonetic input')
    tokens = torch.as_tensor([phonetic.token_ids], dtype=torch.long)
    lengths = torch.as_tensor([len(phonetic.token_ids)])
    z = torch.as_tensor(np.asarray(getattr(z, 'z', z)), dtype=torch.float32)[None]
    teacher = None
    if teacher_mel is not None:
        teacher = torch.as_tensor(np.asarray(getattr(teacher_mel, 'frames', teacher_mel)), dtype=torch.float32)[None]
    return model(tokens, lengths, z, teacher=teacher, generator=generator)


def stop_targets_for(lengths, total):
    '''0 before each item's final frame, 1 from it onward.'''
    return (torch.arange(total)[None, :] >= (torch.as_tensor(lengths)[:, None] - 1)).float()


def tts_loss(pred, target, stop_logits, stop_targets, mu, log_sigma, beta, pos_weight=5.0, mask=None):
    '''
    L1 on mel frames, beta-weighted KL of the reference posterior, and stop
    cross-entropy with the positive class up-weighted. `mask` (B, T) marks
    real frames; padded frames are ignored.
    '''
    if pred.shape != target.shape or stop_logits.shape != stop_targets.shape or \
            stop_logits.shape != pred.shape[:2]:
        raise InvalidInput('inconsistent shapes: mel {} vs {}, stop {} vs {}'.format(
            tuple(pred.shape), tuple(target.shape), tuple(stop_logits.shape), tuple(stop_targets.shape)))
    if mask is None:
        mask = torch.ones(stop_logits.shape, dtype=pred.dtype)
    mask = mask.to(pred.dtype)
    frames = mask.sum()
    l1 = ((pred - target).abs().mean(dim=2) * mask).sum() / frames
    ce = F.binary_cross_entropy_with_logits(
        stop_logits, stop_targets, pos_weight=torch.as_tensor(pos_weight, dtype=pred.dtype), reduction='none')
    ce = (ce * mask).sum() / frames
    kl = gaussian_kl(mu, log_sigma)
    return l1 + beta * kl + ce, {'l1': l1, 'kl': kl, 'stop': ce}


class ItemBatcher:
    def __init__(self, items, mels, batch_size, rng):
        self.items = items
        self.mels = mels
        self.batch_size = batch_size
        self.rng = rng

    def collate(self, chosen):
        tokens = [encode_phones(item.phones).token_ids for item in chosen]
        frames = [np.asarray(self.mels[item.item_id], dtype=np.float32) for item in chosen]
        token_lengths = torch.as_tensor([len(t) for t in tokens])
        mel_lengths = torch.as_tensor([len(f) for f in frames])
        token_batch = torch.zeros(len(chosen), int(token_lengths.max()), dtype=torch.long)
        mel_batch = torch.full((len(chosen), int(mel_lengths.max()), frames[0].shape[1]), LOG_FLOOR_VALUE)
        for i, (t, f) in enumerate(zip(tokens, frames)):
            token_batch[i, :len(t)] = torch.as_tensor(t)
            mel_batch[i, :len(f)] = torch.as_tensor(f)
        return token_batch, token_lengths, mel_batch, mel_lengths

    def sample(self):
        indices = self.rng.integers(0, len(self.items), self.batch_size)
        return self.collate([self.items[i] for i in indices])


def batch_loss(model, batch, beta, pos_weight, generator=None, sample=True):
    tokens, token_lengths, mels, mel_lengths = batch
    mu, log_sigma = model.reference_encoder(mels, mel_lengths)
    z = mu
    if sample:
        z = mu + torch.exp(log_sigma) * torch.randn(mu.shape, generator=generator)
    pred, stop_logits, _, _ = model(tokens, token_lengths, z, teacher=mels, generator=generator)
    total = pred.shape[1]
    target = mels
    if total != mels.shape[1]:
        pad = mels.new_full((mels.shape[0], total - mels.shape[1], mels.shape[2]), LOG_FLOOR_VALUE)
        target = torch.cat([mels, pad], dim=1)
    mask = torch.arange(total)[None, :] < mel_lengths[:, None]
    return tts_loss(pred, target, stop_logits, stop_targets_for(mel_lengths, total), mu, log_sigma,
                    beta, pos_weight, mask)


def _monitor_l1(model, batch, generator):
    model.eval()
    with torch.no_grad():
        _, parts = batch_loss(model, batch, 0.0, 5.0, generator=generator, sample=False)
    return float(parts['l1'])


def _mean_frame_l1(items, mels, batch):
    mean_frame = np.concatenate([np.asarray(mels[item.item_id]) for item in items]).mean(axis=0)
    _, _, target, lengths = batch
    mask = (torch.arange(target.shape[1])[None, :] < lengths[:, None]).float()
    diff = (target - torch.as_tensor(mean_frame, dtype=torch.float32)).abs().mean(dim=2)
    return float((diff * mask).sum() / mask.sum())


def train_tts(pooled, mels, config=None, seed=0):
    '''
    Train on a pooled TrainingSet. `mels` maps item IDs to (T, n_mels)
    arrays. The returned model carries `item_latents` (item ID -> posterior
    mean z) and a `training_summary`.
    '''
    config = config or TtsConfig()
    missing = [item.item_id for item in pooled.items if item.item_id not in mels]
    if missing:
        raise DataError('missing mels for {} pooled items'.format(len(missing)), utterance_ids=missing)
    if not pooled.items:
        raise DataError('empty training set', utterance_ids=[])

    torch.manual_seed(derive_seed(seed, 'tts', 'init'))
    model = TtsModel(latent_dim=config.latent_dim, reduction=config.reduction,
                     max_decoder_ratio=config.max_decoder_ratio)
    generator = torch_generator(seed, 'tts', 'noise')
    items = list(pooled.items)
    batcher = ItemBatcher(items, mels, config.batch_size, numpy_rng(seed, 'tts', 'batches'))
    monitor = ItemBatcher(items, mels, config.batch_size, numpy_rng(seed, 'tts', 'monitor')).sample()
    summary = {
        'monitor_l1_initial': _monitor_l1(model, monitor, torch_generator(seed, 'tts', 'monitor')),
        'mean_frame_l1': _mean_frame_l1(items, mels, monitor),
    }

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    for step in range(1, config.steps + 1):
        model.train()
        beta = kl_weight(step, config.steps, config.beta, config.warmup_fraction)
        loss, parts = batch_loss(model, batcher.sample(), beta, config.stop_pos_weight, generator)
        optimizer.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP)
        optimizer.step()
        if step % config.log_interval == 0:
            training_logger.info('tts\tstep %d\tloss %.4f\tl1 %.4f\tkl %.4f\tstop %.4f\tbeta %.2e', step,
                                 float(loss), float(parts['l1']), float(parts['kl']), float(parts['stop']), beta)

    summary['monitor_l1_final'] = _monitor_l1(model, monitor, torch_generator(seed, 'tts', 'monitor'))
    model.training_summary = summary
    model.item_latents = item_latents(model, items, mels)
    logger.info('TTS monitor L1 %.4f -> %.4f (mean-frame baseline %.4f)', summary['monitor_l1_initial'],
                summary['monitor_l1_final'], summary['mean_frame_l1'])
    model.eval()
    return model


def item_latents(model, items, mels):
    '''Posterior mean z of every item, in item order.'''
    latents = {}
    for item in items:
        _, mu, _ = reference_to_z(model, mels[item.item_id])
        latents[item.item_id] = mu.double().numpy()
    return latents


def compute_style_centroid(model, items, label=''):
    '''
    Mean posterior z of one style's items. Items may be mels (encoded with
    `model`) or precomputed mean vectors.
    '''
    if not items:
        raise InvalidInput('no items for style {!r}'.format(label))
    vectors = []
    for item in items:
        if hasattr(item, 'frames'):
            vectors.append(reference_to_z(model, item)[1].double().numpy())
        else:
            vectors.append(np.asarray(getattr(item, 'z', item), dtype=np.float64))
    return StyleVector(z=np.mean(vectors, axis=0), label=label)


@dataclass
class SynthesisResult:
    audio: object
    mel: MelSpectrogram
    style: StyleVector
    stop_step: int
    runaway: bool
    alignment: np.ndarray = field(repr=False, default=None)

    def sidecar(self):
        return {
            'style_label': self.style.label,
            'z': [round(float(v), 6) for v in self.style.z],
            'stop_step': self.stop_step,
            'frames': self.mel.num_frames,
            'runaway': self.runaway,
        }


def synthesize(model, phonetic, style, vocoder=griffin_lim_invert, seed=0, strict=False,
               utterance_id='', **vocoder_options):
    '''
    Free-running synthesis conditioned on a style centroid, vocoded to audio.
    A sentence that never emits a stop token is returned with runaway=True,
    or raises SynthesisRunaway (carrying that result) when strict.
    '''
    model.eval()
    generator = torch_generator(seed, 'synthesize', utterance_id, style.label)
    with torch.no_grad():
        pred, _, alignment, runaway = tts_forward(model, phonetic, style, generator=generator)
    frames = np.maximum(pred[0].numpy(), LOG_FLOOR_VALUE).astype(np.float32)
    mel = MelSpectrogram(frames=frames, utterance_id=utterance_id)
    audio = vocoder(mel, seed=derive_seed(seed, 'vocoder', utterance_id, style.label) % (2 ** 32),
                    **vocoder_options)
    result = SynthesisResult(
        audio=audio,
        mel=mel,
        style=style,
        stop_step=int(math.ceil(mel.num_frames / model.reduction)),
        runaway=runaway,
        alignment=alignment[0].numpy(),
    )
    if runaway:
        logger.warning('Synthesis of %r with style %s hit the length cap', utterance_id, style.label)
        if strict:
            raise SynthesisRunaway('decoder did not stop within {} frames'.format(mel.num_frames), result=result)
    return result
