import os

import numpy as np

from speech.corpus import Manifest, Speaker, SUPPORTING, TARGET, Utterance
from speech.dsp import AudioClip, MelSpectrogram

SMOKE_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
                            'config', 'smoke.yaml')


def sine(hz, seconds=0.5, amplitude=0.5, sample_rate=16000):
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    return AudioClip(samples=amplitude * np.sin(2 * np.pi * hz * t))


def fake_manifest(speakers=2, per_speaker=4, split='train'):
    '''A manifest without audio: speaker 0 is the target.'''
    manifest = Manifest(root='/nonexistent')
    for s in range(speakers):
        speaker_id = 'spk{:02d}'.format(s)
        manifest.speakers[speaker_id] = Speaker(speaker_id, 'female', TARGET if s == 0 else SUPPORTING, {})
        for n in range(per_speaker):
            manifest.utterances.append(Utterance(
                utterance_id='{}_{:04d}'.format(speaker_id, n),
                speaker_id=speaker_id,
                style='neutral' if s == 0 else 'conversational',
                phones=['#', 'm', 'a', '#'],
                audio_path='{}/{}_{:04d}.wav'.format(speaker_id, speaker_id, n),
                split=split,
            ))
    return manifest


def fake_mels(manifest, frames=40, seed=0):
    '''Random log-mels whose level depends on the speaker, so speakers differ.'''
    rng = np.random.default_rng(seed)
    mels = {}
    for index, utterance in enumerate(manifest.utterances):
        offset = -3.0 + list(manifest.speakers).index(utterance.speaker_id)
        values = offset + 0.5 * rng.standard_normal((frames + index % 3, 80))
        mels[utterance.utterance_id] = MelSpectrogram(frames=values.astype(np.float32),
                                                      utterance_id=utterance.utterance_id)
    return mels
