'''
The synthetic micro-corpus: a formant synthesizer that renders phone strings
with per-speaker identity knobs, the JSON Lines manifest that lists every
utterance, and pooling of natural and converted data into one training set.

One speaker is the target (neutral style); every other speaker is a
supporting speaker talking in the conversational style. Utterance audio is
seeded per utterance from the master seed, so any single file can be
regenerated on its own.
'''
import json
import logging
import os
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.signal

from speech import dsp
from speech.audio_config import SAMPLE_RATE
from speech.errors import InvalidConfig, InvalidInput, ManifestError, PoolError
from speech.seeds import numpy_rng

logger = logging.getLogger('speech.corpus')

NEUTRAL = 'neutral'
CONVERSATIONAL = 'conversational'
STYLES = (NEUTRAL, CONVERSATIONAL)
SPLITS = ('train', 'dev', 'test')
TARGET = 'target'
SUPPORTING = 'supporting'

WORD_BOUNDARY = '#'
PRIMARY_STRESS = "'"
SECONDARY_STRESS = ','
STRESS_MARKERS = (PRIMARY_STRESS, SECONDARY_STRESS)

VOWELS = ('a', 'e', 'i', 'o', 'u', 'ae', 'ao', 'ix', 'er', 'ax')
CONSONANTS = ('m', 'n', 'l', 'r', 'w', 'y', 's', 'f', 'sh', 'h')
PHONES = VOWELS + CONSONANTS
# Symbols that occupy time in the audio and therefore get HMM states.
ALIGNMENT_PHONES = PHONES + (WORD_BOUNDARY,)
# Symbols the TTS front-end sees.
TOKENS = ALIGNMENT_PHONES + STRESS_MARKERS


@dataclass(frozen=True)
class PhoneShape:
    kind: str
    formants: tuple = ()
    bandwidths: tuple = (80.0, 100.0, 150.0)
    noise_band: tuple = ()
    gain: float = 1.0

    @property
    def voiced(self):
        return self.kind in ('vowel', 'nasal', 'liquid', 'glide')


PHONE_SHAPES = {
    'a': PhoneShape('vowel', (730, 1090, 2440)),
    'e': PhoneShape('vowel', (530, 1840, 2480)),
    'i': PhoneShape('vowel', (270, 2290, 3010)),
    'o': PhoneShape('vowel', (570, 840, 2410)),
    'u': PhoneShape('vowel', (300, 870, 2240)),
    'ae': PhoneShape('vowel', (660, 1720, 2410)),
    'ao': PhoneShape('vowel', (590, 880, 2540)),
    'ix': PhoneShape('vowel', (400, 1900, 2550)),
    'er': PhoneShape('vowel', (490, 1350, 1690)),
    'ax': PhoneShape('vowel', (500, 1500, 2500)),
    'm': PhoneShape('nasal', (250, 1100, 2300), (60.0, 200.0, 300.0), gain=0.4),
    'n': PhoneShape('nasal', (250, 1600, 2600), (60.0, 200.0, 300.0), gain=0.4),
    'l': PhoneShape('liquid', (360, 1300, 2800), gain=0.6),
    'r': PhoneShape('liquid', (420, 1300, 1600), gain=0.6),
    'w': PhoneShape('glide', (300, 700, 2200), gain=0.6),
    'y': PhoneShape('glide', (280, 2200, 2900), gain=0.6),
    's': PhoneShape('fricative', noise_band=(4000, 7500), gain=0.25),
    'f': PhoneShape('fricative', noise_band=(1200, 7000), gain=0.12),
    'sh': PhoneShape('fricative', noise_band=(2000, 5000), gain=0.25),
    'h': PhoneShape('fricative', noise_band=(500, 4000), gain=0.1),
    WORD_BOUNDARY: PhoneShape('silence'),
}

# Every corpus speaker reads these first, so the full inventory is always
# present in training data.
COVERAGE_SENTENCES = (
    "# m 'a n # s e l # f 'i sh # h o r #",
    "# w 'u y # 'ae m ao # n ix l # r 'er s ax #",
)

NEUTRAL_F0_DEPTH = 0.04
CONVERSATIONAL_F0_DEPTH = 0.3
STRESS_F0_BOOST = 0.1
STRESS_LENGTHENING = 1.3
PHONE_DURATION = 0.09
BOUNDARY_DURATION = 0.06
EDGE_DURATION = 0.12
FADE = 0.004
PEAK_LEVEL = 0.5
DITHER = 1e-4


@dataclass(frozen=True)
class SpeakerProfile:
    f0_mean: float
    f0_range: float
    spectral_tilt: float
    formant_shift: float
    excursion_rate: float = 1.5
    tempo: float = 1.0

    def __post_init__(self):
        if not 80.0 <= self.f0_mean <= 300.0:
            raise InvalidInput('f0_mean {} Hz outside [80, 300]'.format(self.f0_mean))
        if not 0.8 <= self.formant_shift <= 1.25:
            raise InvalidInput('formant_shift {} outside [0.8, 1.25]'.format(self.formant_shift))


@dataclass
class Speaker:
    speaker_id: str
    gender: str
    role: str
    profile: dict = field(default_factory=dict)


@dataclass
class Utterance:
    utterance_id: str
    speaker_id: str
    style: str
    phones: list
    audio_path: str
    split: str = 'train'

    @property
    def alignment_phones(self):
        return alignment_phones(self.phones)


@dataclass
class Manifest:
    utterances: list = field(default_factory=list)
    speakers: dict = field(default_factory=OrderedDict)
    # Directory audio paths are relative to.
    root: str = ''

    def __eq__(self, other):
        return isinstance(other, Manifest) and \
            self.utterances == other.utterances and dict(self.speakers) == dict(other.speakers)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def target_speaker(self):
        targets = [s.speaker_id for s in self.speakers.values() if s.role == TARGET]
        return targets[0] if targets else None

    @property
    def supporting_speakers(self):
        return [s.speaker_id for s in self.speakers.values() if s.role == SUPPORTING]

    def audio_file(self, utterance):
        return os.path.join(self.root, utterance.audio_path)

    def filter(self, speaker_id=None, split=None, style=None):
        return Manifest(
            utterances=[
                u for u in self.utterances
                if (speaker_id is None or u.speaker_id == speaker_id) and
                (split is None or u.split == split) and
                (style is None or u.style == style)
            ],
            speakers=self.speakers,
            root=self.root,
        )

    def by_speaker(self):
        grouped = OrderedDict((speaker_id, []) for speaker_id in self.speakers)
        for utterance in self.utterances:
            grouped.setdefault(utterance.speaker_id, []).append(utterance)
        return grouped

    def get(self, utterance_id):
        for utterance in self.utterances:
            if utterance.utterance_id == utterance_id:
                return utterance
        raise KeyError(utterance_id)

    def validate(self, check_audio=True):
        targets = [s for s in self.speakers.values() if s.role == TARGET]
        if self.speakers and len(targets) != 1:
            raise ManifestError(
                'expected exactly one target speaker, found {}'.format(len(targets)),
                record=[asdict(s) for s in targets])
        for speaker in self.speakers.values():
            if speaker.role not in (TARGET, SUPPORTING):
                raise ManifestError('unknown speaker role {!r}'.format(speaker.role), record=asdict(speaker))
        seen = set()
        for utterance in self.utterances:
            record = asdict(utterance)
            if utterance.utterance_id in seen:
                raise ManifestError('duplicate utterance_id {}'.format(utterance.utterance_id), record=record)
            seen.add(utterance.utterance_id)
            if utterance.speaker_id not in self.speakers:
                raise ManifestError('unknown speaker {}'.format(utterance.speaker_id), record=record)
            if not utterance.alignment_phones:
                raise ManifestError('empty phone sequence', record=record)
            unknown = [p for p in utterance.phones if p not in TOKENS]
            if unknown:
                raise ManifestError('unknown phones {}'.format(unknown), record=record)
            if utterance.style not in STYLES:
                raise ManifestError('unknown style {!r}'.format(utterance.style), record=record)
            if utterance.split not in SPLITS:
                raise ManifestError('unknown split {!r}'.format(utterance.split), record=record)
            if check_audio and not os.path.exists(self.audio_file(utterance)):
                raise ManifestError('missing audio file {}'.format(utterance.audio_path), record=record)


def alignment_phones(phones):
    return [p for p in phones if p not in STRESS_MARKERS]


def parse_phones(text):
    '''Split a whitespace-separated phone string, e.g. "# m 'a n #".'''
    phones = []
    for token in text.split():
        # Stress markers may be written glued to their vowel.
        while token and token[0] in STRESS_MARKERS:
            phones.append(token[0])
            token = token[1:]
        if token:
            phones.append(token)
    unknown = [p for p in phones if p not in TOKENS]
    if unknown:
        raise InvalidInput('unknown phones {}'.format(unknown))
    if not alignment_phones(phones):
        raise InvalidInput('empty phone string')
    return phones


def speakers_path(manifest_path):
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), 'speakers.json')


def write_manifest(manifest, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        for utterance in manifest.utterances:
            f.write(json.dumps(asdict(utterance), sort_keys=True) + '\n')
    with open(speakers_path(path), 'w') as f:
        json.dump([asdict(s) for s in manifest.speakers.values()], f, indent=2, sort_keys=True)


def load_manifest(path, check_audio=True):
    speakers = OrderedDict()
    if os.path.exists(speakers_path(path)):
        with open(speakers_path(path)) as f:
            for record in json.load(f):
                speakers[record['speaker_id']] = Speaker(**record)
    utterances = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                utterances.append(Utterance(**record))
            except TypeError as e:
                raise ManifestError(str(e), record=record)
    manifest = Manifest(utterances=utterances, speakers=speakers, root=os.path.dirname(os.path.abspath(path)))
    manifest.validate(check_audio=check_audio)
    return manifest


def speaker_profile(rng, gender, style):
    if gender == 'female':
        f0_mean = rng.uniform(180.0, 240.0)
        formant_shift = rng.uniform(1.08, 1.2)
    else:
        f0_mean = rng.uniform(95.0, 140.0)
        formant_shift = rng.uniform(0.85, 0.97)
    depth = CONVERSATIONAL_F0_DEPTH if style == CONVERSATIONAL else NEUTRAL_F0_DEPTH
    return SpeakerProfile(
        f0_mean=round(f0_mean, 2),
        f0_range=round(depth * f0_mean, 2),
        spectral_tilt=round(rng.uniform(-12.0, -6.0), 2),
        formant_shift=round(formant_shift, 3),
        excursion_rate=round(rng.uniform(1.0, 2.5), 2),
        tempo=round(rng.uniform(0.9, 1.1), 3),
    )


def random_sentence(rng, n_words=None):
    n_words = n_words or int(rng.integers(3, 6))
    phones = [WORD_BOUNDARY]
    for w in range(n_words):
        for s in range(int(rng.integers(1, 3))):
            phones.append(CONSONANTS[rng.integers(len(CONSONANTS))])
            if s == 0 and rng.random() < 0.5:
                phones.append(PRIMARY_STRESS)
            elif rng.random() < 0.15:
                phones.append(SECONDARY_STRESS)
            phones.append(VOWELS[rng.integers(len(VOWELS))])
            if rng.random() < 0.4:
                phones.append(CONSONANTS[rng.integers(len(CONSONANTS))])
        phones.append(WORD_BOUNDARY)
    return phones


def _segments(phones, style, profile, rng):
    '''(phone, stressed, seconds) per alignment phone.'''
    segments = []
    stressed = False
    last = len(alignment_phones(phones)) - 1
    index = 0
    for phone in phones:
        if phone in STRESS_MARKERS:
            stressed = True
            continue
        if phone == WORD_BOUNDARY:
            seconds = EDGE_DURATION if index in (0, last) else BOUNDARY_DURATION
        else:
            seconds = PHONE_DURATION * profile.tempo
            if style == CONVERSATIONAL:
                seconds *= rng.uniform(0.6, 1.4)
                if stressed and phone in VOWELS:
                    seconds *= STRESS_LENGTHENING
        segments.append((phone, stressed and phone in VOWELS, seconds))
        if phone in VOWELS:
            stressed = False
        index += 1
    return segments


def _f0_contour(n_samples, bounds, segments, style, profile, rng):
    t = np.arange(n_samples) / SAMPLE_RATE
    phase = rng.uniform(0, 2 * np.pi)
    if style == NEUTRAL:
        factor = 1.0 + NEUTRAL_F0_DEPTH * np.sin(2 * np.pi * 0.7 * t + phase)
        return profile.f0_mean * factor
    depth = min(profile.f0_range / profile.f0_mean, CONVERSATIONAL_F0_DEPTH)
    knots = np.arange(0, t[-1] + 0.2, 0.1)
    wander = np.interp(t, knots, rng.uniform(-1, 1, len(knots)))
    shape = np.clip(0.7 * np.sin(2 * np.pi * profile.excursion_rate * t + phase) + 0.3 * wander, -1, 1)
    factor = 1.0 + depth * shape
    for (phone, stressed, _), (start, end) in zip(segments, bounds):
        if stressed:
            factor[start:end] += STRESS_F0_BOOST
    factor = np.clip(factor, 1.0 - CONVERSATIONAL_F0_DEPTH, 1.0 + CONVERSATIONAL_F0_DEPTH)
    return profile.f0_mean * factor


def _harmonic_source(f0, spectral_tilt):
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    ceiling = 0.45 * SAMPLE_RATE
    n_harmonics = int(ceiling // f0.min())
    source = np.zeros_like(f0)
    for k in range(1, n_harmonics + 1):
        amplitude = k ** (spectral_tilt / 6.02)
        source += np.where(k * f0 < ceiling, amplitude * np.sin(k * phase), 0.0)
    return source


def _resonate(signal, formants, bandwidths, shift):
    for frequency, bandwidth in zip(formants, bandwidths):
        frequency = min(frequency * shift, 0.45 * SAMPLE_RATE)
        r = np.exp(-np.pi * bandwidth / SAMPLE_RATE)
        theta = 2 * np.pi * frequency / SAMPLE_RATE
        a = [1.0, -2 * r * np.cos(theta), r * r]
        signal = scipy.signal.lfilter([sum(a)], a, signal)
    return signal


def _envelope(length, fade):
    envelope = np.ones(length)
    fade = min(fade, length // 2)
    if fade:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, fade))
        envelope[:fade] = ramp
        envelope[-fade:] = ramp[::-1]
    return envelope


def render_utterance(phones, profile, style, rng):
    '''Formant-synthesize a phone string; returns float samples in [-1, 1].'''
    segments = _segments(phones, style, profile, rng)
    lengths = [max(int(round(seconds * SAMPLE_RATE)), 1) for _, _, seconds in segments]
    edges = np.concatenate([[0], np.cumsum(lengths)])
    bounds = list(zip(edges[:-1], edges[1:]))
    n_samples = int(edges[-1])

    f0 = _f0_contour(n_samples, bounds, segments, style, profile, rng)
    source = _harmonic_source(f0, profile.spectral_tilt)
    noise = rng.standard_normal(n_samples)
    out = np.zeros(n_samples)
    fade = int(FADE * SAMPLE_RATE)
    margin = int(0.02 * SAMPLE_RATE)
    for (phone, stressed, _), (start, end) in zip(segments, bounds):
        shape = PHONE_SHAPES[phone]
        if shape.kind == 'silence':
            continue
        lo, hi = max(start - margin, 0), min(end + margin, n_samples)
        if shape.voiced:
            piece = _resonate(source[lo:hi], shape.formants, shape.bandwidths, profile.formant_shift)
        else:
            low, high = (min(f * profile.formant_shift, 0.45 * SAMPLE_RATE) for f in shape.noise_band)
            sos = scipy.signal.butter(4, [low, high], btype='bandpass', fs=SAMPLE_RATE, output='sos')
            piece = scipy.signal.sosfilt(sos, noise[lo:hi])
        piece = piece[start - lo:start - lo + (end - start)]
        scale = np.abs(piece).max() or 1.0
        out[start:end] += shape.gain * piece / scale * _envelope(end - start, fade)
    out = out / (np.abs(out).max() or 1.0) * PEAK_LEVEL
    out += DITHER * noise[::-1]
    return np.clip(out, -1.0, 1.0)


def split_for_index(index):
    if index % 10 == 9:
        return 'test'
    if index % 10 == 8:
        return 'dev'
    return 'train'


def speaker_ids(n_speakers):
    return ['spk{:02d}'.format(i) for i in range(n_speakers)]


def generate_synthetic_corpus(seed, n_speakers, utterances_per_speaker, styles, output_dir):
    '''
    Render a corpus into `output_dir` and write its manifest there.

    `utterances_per_speaker` is a count for every speaker or a list with one
    count per speaker (target first). Speaker 0 is the target and reads in
    the neutral style; the others are supporting speakers reading in the
    conversational style (or the only requested style).
    '''
    styles = list(styles or [])
    if not styles:
        raise InvalidConfig('at least one style is required', errors={'corpus': {'styles': ['empty']}})
    if any(style not in STYLES for style in styles):
        raise InvalidConfig('unknown styles {}'.format(styles), errors={'corpus': {'styles': styles}})
    if n_speakers < 2:
        raise InvalidConfig('need at least 2 speakers', errors={'corpus': {'speakers': [n_speakers]}})
    if isinstance(utterances_per_speaker, int):
        counts = [utterances_per_speaker] * n_speakers
    else:
        counts = list(utterances_per_speaker)
    if len(counts) != n_speakers:
        raise InvalidConfig('one utterance count per speaker is required')
    target_style = NEUTRAL if NEUTRAL in styles else styles[0]
    supporting_style = CONVERSATIONAL if CONVERSATIONAL in styles else styles[0]

    manifest = Manifest(root=os.path.abspath(output_dir))
    for index, speaker_id in enumerate(speaker_ids(n_speakers)):
        role = TARGET if index == 0 else SUPPORTING
        style = target_style if role == TARGET else supporting_style
        gender = 'female' if index % 2 == 0 else 'male'
        profile = speaker_profile(numpy_rng(seed, 'corpus', speaker_id, 'profile'), gender, style)
        manifest.speakers[speaker_id] = Speaker(speaker_id, gender, role, asdict(profile))

        for n in range(counts[index]):
            utterance_id = '{}_{:04d}'.format(speaker_id, n)
            rng = numpy_rng(seed, 'corpus', speaker_id, utterance_id)
            if n < len(COVERAGE_SENTENCES):
                phones = parse_phones(COVERAGE_SENTENCES[n])
            else:
                phones = random_sentence(rng)
            samples = render_utterance(phones, profile, style, rng)
            audio_path = os.path.join(speaker_id, utterance_id + '.wav')
            full_path = os.path.join(manifest.root, audio_path)
            os.makedirs(os.path.dirname(full_path), exist_ok=True)
            dsp.write_wav(full_path, dsp.AudioClip(samples=samples, utterance_id=utterance_id))
            manifest.utterances.append(Utterance(
                utterance_id=utterance_id,
                speaker_id=speaker_id,
                style=style,
                phones=phones,
                audio_path=audio_path,
                split=split_for_index(n),
            ))
        logger.info('Rendered %d utterances for %s (%s, %s)', counts[index], speaker_id, role, style)

    write_manifest(manifest, os.path.join(manifest.root, 'manifest.jsonl'))
    return manifest


@dataclass
class ConvertedItem:
    '''A converted utterance: the target's voice, a supporting speaker's style.'''
    utterance_id: str
    speaker_id: str
    style_label: str
    source_utterance_id: str
    phones: list
    mel_path: str
    split: str = 'train'


def write_converted(items, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        for item in items:
            f.write(json.dumps(asdict(item), sort_keys=True) + '\n')


def load_converted(path):
    with open(path) as f:
        return [ConvertedItem(**json.loads(line)) for line in f if line.strip()]


@dataclass
class TrainingItem:
    item_id: str
    speaker_id: str
    style_label: str
    phones: list
    mel_path: str
    origin: str


@dataclass
class TrainingSet:
    items: list = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def group_by_style(self):
        grouped = OrderedDict()
        for item in sorted(self.items, key=lambda item: item.style_label):
            grouped.setdefault(item.style_label, []).append(item)
        return grouped

    def style_counts(self):
        return dict(Counter(item.style_label for item in self.items))

    @property
    def style_labels(self):
        return list(self.group_by_style())

    def to_json(self):
        return {'items': [asdict(item) for item in self.items]}

    @classmethod
    def from_json(cls, data):
        return cls(items=[TrainingItem(**item) for item in data['items']])


def pool_datasets(natural, converted, mel_dir, target_speaker=None):
    '''
    Pool the target's natural utterances with converted supporting data.

    Natural items keep their own style ("neutral"); converted items are
    labelled with the supporting speaker they came from.
    '''
    target_speaker = target_speaker or natural.target_speaker
    items = []
    for utterance in natural.utterances:
        if utterance.speaker_id != target_speaker:
            raise PoolError('natural item {} is not from the target speaker {}'.format(
                utterance.utterance_id, target_speaker))
        items.append(TrainingItem(
            item_id=utterance.utterance_id,
            speaker_id=utterance.speaker_id,
            style_label=utterance.style,
            phones=list(utterance.phones),
            mel_path=os.path.join(mel_dir, utterance.utterance_id + '.sftf'),
            origin='natural',
        ))
    for item in converted:
        if item.speaker_id != target_speaker:
            raise PoolError('converted item {} carries speaker {} instead of the target {}'.format(
                item.utterance_id, item.speaker_id, target_speaker))
        items.append(TrainingItem(
            item_id=item.utterance_id,
            speaker_id=item.speaker_id,
            style_label=item.style_label,
            phones=list(item.phones),
            mel_path=item.mel_path,
            origin='converted',
        ))
    logger.info('Pooled %d natural + %d converted items', len(natural.utterances), len(converted))
    return TrainingSet(items=items)
