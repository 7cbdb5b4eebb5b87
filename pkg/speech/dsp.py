'''
Deterministic signal processing: spectral features, f0 extraction and
normalization, and waveform reconstruction.

Every function here is pure. Framing is shared: for a clip of n samples,
mel_spectrogram, mfcc and estimate_f0 all return ceil(n / HOP_LENGTH) frames,
frame t being centered on sample t * HOP_LENGTH.
'''
import functools
import logging
import math
from dataclasses import dataclass, field

import librosa
import numpy as np
import scipy.fft
import soundfile

from speech.audio_config import (
    SAMPLE_RATE,
    HOP_LENGTH,
    WIN_LENGTH,
    N_FFT,
    N_MELS,
    N_MFCC,
    MEL_FMIN,
    MEL_FMAX,
    LOG_FLOOR,
    F0_MIN,
    F0_MAX,
    VOICING_THRESHOLD,
    GRIFFIN_LIM_ITERATIONS,
)
from speech.errors import InvalidInput, UndefinedSpeakerMean

logger = logging.getLogger('speech.dsp')

LOG_FLOOR_VALUE = math.log(LOG_FLOOR)

# Among autocorrelation peaks, the shortest lag reaching this fraction of the
# best peak is taken as the period (guards against picking a multiple).
PERIOD_PEAK_FRACTION = 0.95


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    utterance_id: str = ''

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    # T x N_MELS natural-log magnitudes
    frames: np.ndarray
    utterance_id: str = ''
    hop_length: int = HOP_LENGTH

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class MfccSequence:
    frames: np.ndarray
    utterance_id: str = ''
    hop_length: int = HOP_LENGTH

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class F0Track:
    log_f0: np.ndarray
    voiced: np.ndarray
    utterance_id: str = ''

    @property
    def num_frames(self):
        return len(self.log_f0)

    def voiced_hz(self):
        return np.exp(self.log_f0[self.voiced])

    def to_matrix(self):
        return np.stack([self.log_f0, self.voiced.astype(np.float64)], axis=1)

    @classmethod
    def from_matrix(cls, matrix, utterance_id=''):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(log_f0=matrix[:, 0], voiced=matrix[:, 1] > 0.5, utterance_id=utterance_id)


def num_frames(num_samples):
    return -(-num_samples // HOP_LENGTH)


def _check_clip(clip):
    if clip.sample_rate != SAMPLE_RATE:
        raise InvalidInput('{}: sample rate {} != {}'.format(
            clip.utterance_id, clip.sample_rate, SAMPLE_RATE))
    if len(clip.samples) == 0:
        raise InvalidInput('{}: empty clip'.format(clip.utterance_id))
    return np.asarray(clip.samples, dtype=np.float64)


@functools.lru_cache(maxsize=None)
def mel_filterbank():
    basis = librosa.filters.mel(
        sr=SAMPLE_RATE, n_fft=N_FFT, n_mels=N_MELS, fmin=MEL_FMIN, fmax=MEL_FMAX)
    basis.flags.writeable = False
    return basis


def mel_band_centers():
    '''Center frequency in Hz of each mel band, in band order.'''
    return librosa.mel_frequencies(n_mels=N_MELS + 2, fmin=MEL_FMIN, fmax=MEL_FMAX)[1:-1]


def _magnitude(samples):
    stft = librosa.stft(
        samples, n_fft=N_FFT, hop_length=HOP_LENGTH, win_length=WIN_LENGTH,
        window='hann', center=True, pad_mode='constant')
    # librosa yields 1 + n // hop frames; keep ceil(n / hop).
    return np.abs(stft[:, :num_frames(len(samples))])


def mel_spectrogram(clip):
    samples = _check_clip(clip)
    mel = mel_filterbank() @ _magnitude(samples)
    frames = np.log(np.maximum(mel, LOG_FLOOR)).T
    return MelSpectrogram(frames=frames.astype(np.float32), utterance_id=clip.utterance_id)


def cepstrum(log_mel_frames, n_coefficients=N_MFCC):
    '''DCT-II (orthonormal) of log-mel frames, first n_coefficients kept.'''
    coefficients = scipy.fft.dct(np.asarray(log_mel_frames, dtype=np.float64), type=2, norm='ortho', axis=1)
    return coefficients[:, :n_coefficients]


def mfcc_from_mel(mel):
    return MfccSequence(frames=cepstrum(mel.frames).astype(np.float32), utterance_id=mel.utterance_id)


def mfcc(clip):
    return mfcc_from_mel(mel_spectrogram(clip))


def _analysis_frames(samples):
    padded = np.pad(samples, (WIN_LENGTH // 2, WIN_LENGTH // 2 + HOP_LENGTH))
    windows = np.lib.stride_tricks.sliding_window_view(padded, WIN_LENGTH)[::HOP_LENGTH]
    return windows[:num_frames(len(samples))]


def normalized_autocorrelation(frames, min_lag, max_lag):
    '''
    r[lag] = sum x[n] x[n + lag] / sqrt(sum x[n]^2 * sum x[n + lag]^2), both
    energies taken over the overlapping part only, for lag in
    [min_lag, max_lag]. Silent frames give 0.
    '''
    n = frames.shape[1]
    spectrum = np.fft.rfft(frames, 2 * n, axis=1)
    raw = np.fft.irfft(np.abs(spectrum) ** 2, axis=1)[:, :n]
    energy = np.cumsum(frames ** 2, axis=1)
    lags = np.arange(min_lag, max_lag + 1)
    head = energy[:, n - 1 - lags]
    tail = energy[:, n - 1:n] - energy[:, lags - 1]
    denominator = np.sqrt(np.maximum(head * tail, 0.0))
    out = np.zeros((frames.shape[0], len(lags)))
    ok = denominator > 1e-12
    out[ok] = raw[:, lags][ok] / denominator[ok]
    return lags, out


def _pick_period(lags, values):
    best = values.max()
    if best < VOICING_THRESHOLD:
        return None
    for i in range(1, len(values) - 1):
        if values[i] >= values[i - 1] and values[i] >= values[i + 1] and \
                values[i] >= PERIOD_PEAK_FRACTION * best:
            left, center, right = values[i - 1], values[i], values[i + 1]
            curvature = left - 2 * center + right
            offset = 0.5 * (left - right) / curvature if curvature < 0 else 0.0
            return lags[i] + offset
    return None


def estimate_f0(clip):
    samples = _check_clip(clip)
    frames = _analysis_frames(samples)
    min_lag = int(math.floor(SAMPLE_RATE / F0_MAX))
    max_lag = int(math.ceil(SAMPLE_RATE / F0_MIN))
    lags, nac = normalized_autocorrelation(frames, min_lag, max_lag)

    count = frames.shape[0]
    hz = np.zeros(count)
    voiced = np.zeros(count, dtype=bool)
    for t in range(count):
        period = _pick_period(lags, nac[t])
        if period is None:
            continue
        hz[t] = np.clip(SAMPLE_RATE / period, F0_MIN, F0_MAX)
        voiced[t] = True
    return F0Track(log_f0=interpolate_unvoiced(hz, voiced), voiced=voiced, utterance_id=clip.utterance_id)


def interpolate_unvoiced(hz, voiced):
    '''Log f0 with unvoiced frames linearly interpolated; edges are held.'''
    if not voiced.any():
        return np.full(len(hz), math.log(F0_MIN))
    index = np.arange(len(hz))
    return np.interp(index, index[voiced], np.log(hz[voiced]))


def speaker_log_f0_mean(tracks):
    '''Mean voiced log f0 over a speaker's tracks (training split only).'''
    voiced = [track.log_f0[track.voiced] for track in tracks]
    voiced = np.concatenate(voiced) if voiced else np.zeros(0)
    if voiced.size == 0:
        raise UndefinedSpeakerMean('no voiced frames in {} tracks'.format(len(tracks)))
    return float(voiced.mean())


def normalize_log_f0(src, src_speaker_mean, tgt_speaker_mean):
    '''Shift a log-f0 contour from one speaker's mean to another's.'''
    if src_speaker_mean is None or tgt_speaker_mean is None or \
            not (math.isfinite(src_speaker_mean) and math.isfinite(tgt_speaker_mean)):
        raise UndefinedSpeakerMean('speaker log-f0 mean is undefined')
    shift = tgt_speaker_mean - src_speaker_mean
    return F0Track(log_f0=src.log_f0 + shift, voiced=src.voiced.copy(), utterance_id=src.utterance_id)


def griffin_lim_invert(mel, iterations=GRIFFIN_LIM_ITERATIONS, seed=0):
    if iterations < 1:
        raise InvalidInput('griffin-lim needs at least one iteration')
    magnitude_mel = np.exp(np.asarray(mel.frames, dtype=np.float64)).T
    linear = librosa.feature.inverse.mel_to_stft(
        magnitude_mel, sr=SAMPLE_RATE, n_fft=N_FFT, power=1.0, fmin=MEL_FMIN, fmax=MEL_FMAX)
    # A centered STFT of T * HOP_LENGTH samples has T + 1 frames; griffinlim
    # re-analyses at that length, so the last frame is repeated.
    linear = np.pad(linear, ((0, 0), (0, 1)), mode='edge')
    samples = librosa.griffinlim(
        linear, n_iter=iterations, hop_length=HOP_LENGTH, win_length=WIN_LENGTH,
        n_fft=N_FFT, window='hann', center=True, length=mel.num_frames * HOP_LENGTH,
        random_state=seed)
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), utterance_id=mel.utterance_id)


def read_wav(path, utterance_id=''):
    samples, sample_rate = soundfile.read(path, dtype='float64')
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    return AudioClip(samples=samples, sample_rate=sample_rate, utterance_id=utterance_id)


def write_wav(path, clip):
    soundfile.write(path, np.clip(clip.samples, -1.0, 1.0), clip.sample_rate, subtype='PCM_16')
