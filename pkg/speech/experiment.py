'''
Experiment configuration: one YAML file, one dataclass per section.

Section values are validated by the Django forms in speech.forms before any
dataclass is built, so a bad config fails with every field error at once and
before anything is computed.
'''
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import yaml
from django.conf import settings

from speech import forms
from speech.errors import InvalidConfig


@dataclass
class CorpusConfig:
    target_utterances: int = 200
    styles: list = field(default_factory=lambda: ['neutral', 'conversational'])


@dataclass
class SupportingConfig:
    # Desk-scale stand-in for hours of supporting data, split equally.
    speakers: int = 2
    total_utterances: int = 80

    @property
    def per_speaker(self):
        return self.total_utterances // self.speakers


@dataclass
class AlignConfig:
    iterations: int = 5


@dataclass
class SpkembConfig:
    steps: int = 3000
    speakers_per_batch: int = 4
    utterances_per_speaker: int = 4
    segment_frames: int = 80
    learning_rate: float = 1e-3
    log_interval: int = 100


@dataclass
class VcConfig:
    stage1_steps: int = 4000
    stage2_steps: int = 1000
    batch_size: int = 8
    segment_frames: int = 128
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-4
    beta: float = 1e-3
    warmup_fraction: float = 0.1
    bottleneck: int = 8
    latent_dim: int = 16
    log_interval: int = 100


@dataclass
class TtsConfig:
    steps: int = 5000
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta: float = 1e-3
    warmup_fraction: float = 0.1
    stop_pos_weight: float = 5.0
    reduction: int = 2
    max_decoder_ratio: int = 10
    latent_dim: int = 16
    log_interval: int = 100


@dataclass
class SynthesisConfig:
    griffin_lim_iterations: int = 60
    # 0 synthesizes every test sentence.
    max_sentences: int = 0
    strict: bool = False


@dataclass
class EvaluationConfig:
    projection: str = 'pca'
    significance_alpha: float = 0.01
    # 0 evaluates every held-out conversion.
    max_conversions: int = 0


SECTIONS = {
    'corpus': CorpusConfig,
    'supporting': SupportingConfig,
    'align': AlignConfig,
    'spkemb': SpkembConfig,
    'vc': VcConfig,
    'tts': TtsConfig,
    'synthesis': SynthesisConfig,
    'evaluation': EvaluationConfig,
}


@dataclass
class ExperimentConfig:
    seed: int = 1234
    output_dir: str = ''
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    supporting: SupportingConfig = field(default_factory=SupportingConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    spkemb: SpkembConfig = field(default_factory=SpkembConfig)
    vc: VcConfig = field(default_factory=VcConfig)
    tts: TtsConfig = field(default_factory=TtsConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @property
    def artifact_dir(self):
        if not self.output_dir:
            return os.path.abspath(settings.ARTIFACTS_DIR)
        return os.path.abspath(os.path.join(settings.ARTIFACTS_DIR, self.output_dir))

    @property
    def n_speakers(self):
        return 1 + self.supporting.speakers

    @property
    def utterance_counts(self):
        return [self.corpus.target_utterances] + [self.supporting.per_speaker] * self.supporting.speakers

    def to_dict(self):
        return asdict(self)

    def fingerprint(self, *sections):
        '''Hash of the seed plus the named sections.'''
        data = {'seed': self.seed}
        for name in sections:
            data[name] = asdict(getattr(self, name))
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode('utf8')).hexdigest()


def build_config(data):
    '''Validate a parsed YAML mapping and build an ExperimentConfig.'''
    data = dict(data or {})
    errors = {}
    unknown = sorted(set(data) - set(SECTIONS) - {'seed', 'output_dir'})
    if unknown:
        errors['__all__'] = {'sections': ['unknown section {!r}'.format(name) for name in unknown]}

    top = forms.ExperimentForm({
        'seed': data.get('seed', ExperimentConfig.seed),
        'output_dir': data.get('output_dir', ExperimentConfig.output_dir) or '',
    })
    if not top.is_valid():
        errors['experiment'] = dict(top.errors)

    built = {}
    for name, section_class in SECTIONS.items():
        values = data.get(name) or {}
        if not isinstance(values, dict):
            errors[name] = {'__all__': ['expected a mapping']}
            continue
        defaults = asdict(section_class())
        extra = sorted(set(values) - set(defaults))
        form = forms.SECTION_FORMS[name]({**defaults, **values})
        if not form.is_valid() or extra:
            errors[name] = dict(form.errors)
            if extra:
                errors[name]['__all__'] = ['unknown key {!r}'.format(key) for key in extra]
            continue
        built[name] = section_class(**{f.name: form.cleaned_data[f.name] for f in fields(section_class)})

    if errors:
        raise InvalidConfig(
            'invalid experiment config: ' + '; '.join(
                '{}.{}: {}'.format(section, key, ' '.join(str(m) for m in messages))
                for section, section_errors in sorted(errors.items())
                for key, messages in sorted(section_errors.items())),
            errors={section: {key: [str(m) for m in messages] for key, messages in section_errors.items()}
                    for section, section_errors in errors.items()})

    seed = top.cleaned_data['seed']
    if settings.STYLEFORGE_SEED is not None:
        try:
            seed = int(settings.STYLEFORGE_SEED)
        except ValueError:
            raise InvalidConfig('STYLEFORGE_SEED must be an integer',
                                errors={'experiment': {'seed': [settings.STYLEFORGE_SEED]}})
    return ExperimentConfig(seed=seed, output_dir=top.cleaned_data['output_dir'], **built)


def load_config(path=None):
    path = path or settings.DEFAULT_EXPERIMENT_CONFIG
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise InvalidConfig('cannot read config {}: {}'.format(path, e))
    except yaml.YAMLError as e:
        raise InvalidConfig('config {} is not valid YAML: {}'.format(path, e))
    if data is not None and not isinstance(data, dict):
        raise InvalidConfig('config {} must be a mapping'.format(path))
    return build_config(data)
