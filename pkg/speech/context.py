# Lazy, cached access to everything a pipeline run has written to its artifact
# directory. Stages and the report read earlier stages' outputs through an
# ArtifactContext instead of re-parsing files; each property loads on first
# access and is cached for the lifetime of the context object.
import inspect
import json
import os
import types
from collections import OrderedDict

import numpy as np

from speech import align, corpus, spkemb, tts, vc
from speech.dsp import F0Track, MelSpectrogram, MfccSequence
from speech.errors import DataError
from speech.featio import read_header, read_matrix

FEATURE_KINDS = ('mel', 'mfcc', 'f0')


def _artifact_cache(ctx):
    return ctx.__dict__.setdefault('_cache', {})


def loaded_artifact(name, loader):
    '''
    Property that runs loader(ctx) once per context and keeps the result
    under `name`. Assigning to it seeds the cache, which is how a stage hands
    a freshly trained model to the stages after it without a reload.
    '''
    def fget(ctx):
        cache = _artifact_cache(ctx)
        if name not in cache:
            cache[name] = loader(ctx)
        return cache[name]

    def fset(ctx, value):
        _artifact_cache(ctx)[name] = value

    return property(fget, fset, doc=loader.__doc__)


def context_cache(cls):
    '''
    Class decorator: every public method of cls that takes only self becomes
    a loaded_artifact.
    '''
    for name, fn in list(vars(cls).items()):
        if not name.startswith('_') and isinstance(fn, types.FunctionType) and \
                inspect.getfullargspec(fn).args == ['self']:
            setattr(cls, name, loaded_artifact(name, fn))
    return cls


def _read_json(path):
    with open(path) as f:
        return json.load(f, object_pairs_hook=OrderedDict)


@context_cache
class ArtifactContext:
    def __init__(self, root):
        self.root = os.path.abspath(root)

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def invalidate(self, *names):
        cache = getattr(self, '_cache', {})
        for name in names or list(cache):
            cache.pop(name, None)

    def _feature_path(self, kind, utterance_id):
        return self.path('features', kind, utterance_id + '.sftf')

    def _load_features(self, kind, build):
        out = OrderedDict()
        for utterance in self.manifest.utterances:
            path = self._feature_path(kind, utterance.utterance_id)
            if os.path.exists(path):
                out[utterance.utterance_id] = build(read_matrix(path), utterance.utterance_id)
        return out

    def manifest(self):
        return corpus.load_manifest(self.path('corpus', 'manifest.jsonl'))

    def mels(self):
        return self._load_features('mel', lambda m, uid: MelSpectrogram(frames=m, utterance_id=uid))

    def mfccs(self):
        return self._load_features('mfcc', lambda m, uid: MfccSequence(frames=m, utterance_id=uid))

    def f0_tracks(self):
        return self._load_features('f0', F0Track.from_matrix)

    def f0_means(self):
        '''Speaker ID -> mean voiced log f0 over the training split.'''
        return _read_json(self.path('features', 'f0_means.json'))

    def align_model(self):
        return align.MonophoneHmm.load(self.path('align', 'model.json'))

    def state_sequences(self):
        out = OrderedDict()
        for utterance in self.manifest.utterances:
            path = self.path('align', 'states', utterance.utterance_id + '.sftf')
            if os.path.exists(path):
                out[utterance.utterance_id] = align.StateSequence.load(path, utterance.utterance_id)
        return out

    def aligned_manifest(self):
        '''The manifest without the utterances alignment had to skip.'''
        aligned = self.state_sequences
        return corpus.Manifest(
            utterances=[u for u in self.manifest.utterances if u.utterance_id in aligned],
            speakers=self.manifest.speakers,
            root=self.manifest.root,
        )

    def speaker_encoder(self):
        return spkemb.load_encoder(self.path('spkemb', 'encoder'))

    def embeddings(self):
        '''Utterance ID -> SpeakerEmbedding.'''
        ids = _read_json(self.path('spkemb', 'embeddings.json'))['utterance_ids']
        vectors = read_matrix(self.path('spkemb', 'embeddings.sftf')).astype(np.float64)
        speakers = {u.utterance_id: u.speaker_id for u in self.manifest.utterances}
        return OrderedDict(
            (uid, spkemb.SpeakerEmbedding(vector=vector, speaker_id=speakers.get(uid, ''), utterance_id=uid))
            for uid, vector in zip(ids, vectors))

    def speaker_centroids(self):
        data = _read_json(self.path('spkemb', 'centroids.json'))
        return OrderedDict(
            (speaker_id, spkemb.SpeakerEmbedding(vector=np.asarray(vector), speaker_id=speaker_id))
            for speaker_id, vector in data.items())

    def vc_model(self):
        return vc.load_model(self.path('vc', 'model'))

    def vc_header(self):
        return read_header(self.path('vc', 'model'))

    def converted(self):
        return corpus.load_converted(self.path('converted', 'manifest.jsonl'))

    def pool(self):
        return corpus.TrainingSet.from_json(_read_json(self.path('pool.json')))

    def pooled_mels(self):
        '''Item ID -> (T, n_mels) array for every pooled item.'''
        out = OrderedDict()
        for item in self.pool.items:
            path = self.path(item.mel_path)
            if not os.path.exists(path):
                raise DataError('pooled item {} has no mel at {}'.format(item.item_id, item.mel_path),
                                utterance_ids=[item.item_id])
            out[item.item_id] = read_matrix(path)
        return out

    def tts_model(self):
        return tts.load_model(self.path('tts', 'model'))

    def tts_header(self):
        return read_header(self.path('tts', 'model'))

    def item_latents(self):
        header = self.tts_header
        vectors = read_matrix(self.path('tts', header['latent_table'])).astype(np.float64)
        return OrderedDict(zip(header['latent_ids'], vectors))

    def style_centroids(self):
        data = _read_json(self.path('centroids.json'))
        return OrderedDict((label, tts.StyleVector(z=np.asarray(z), label=label)) for label, z in data.items())

    def synthesis_index(self):
        return _read_json(self.path('synthesis', 'index.json'))

    def baseline_index(self):
        return _read_json(self.path('baseline', 'index.json'))

    def evaluation(self):
        return _read_json(self.path('evaluation.json'))
