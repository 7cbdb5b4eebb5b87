'''
The experiment pipeline: generate -> features -> align -> spkemb -> vc ->
convert -> pool -> baseline -> tts -> centroids -> synthesize -> evaluate.

Every stage writes into the artifact directory and leaves a completion
marker in `.stages/<stage>.json` holding the fingerprint of the config
sections it depends on and the SHA-256 of every file it produced. A stage is
skipped when its marker matches; it runs again when the marker is missing,
its config changed, one of its outputs was modified or deleted, the marker
of the stage before it changed, or an earlier stage ran in the same
invocation. Only one pipeline may work in an artifact directory at a time (`.lock`).
'''
import hashlib
import json
import logging
import os
import shutil
from collections import OrderedDict, defaultdict
from dataclasses import dataclass

import numpy as np

from speech import align, corpus, dsp, evaluation, spkemb, tts, vc
from speech.context import ArtifactContext
from speech.errors import PipelineLocked, StageError, StyleForgeError
from speech.featio import write_matrix
from speech.seeds import derive_seed

logger = logging.getLogger('speech.pipeline')
stage_logger = logging.getLogger('speech.stage')

MARKER_DIR = '.stages'
LOCK_FILE = '.lock'
ARTIFACT_MANIFEST = 'artifacts.json'
BASELINE_DIR = 'baseline'
GRID_DIR = 'grid'
# Not part of any stage's outputs.
UNTRACKED = (MARKER_DIR, LOCK_FILE, ARTIFACT_MANIFEST, 'report', 'adhoc', 'listening_tests.json', GRID_DIR)


def _write_json(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=False)
        f.write('\n')


def _reset(*paths):
    for path in paths:
        if os.path.isdir(path):
            shutil.rmtree(path)
        elif os.path.exists(path):
            os.remove(path)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def hash_outputs(root, outputs):
    '''Relative path -> SHA-256 for every file under the given outputs.'''
    hashes = {}
    for output in outputs:
        path = os.path.join(root, output)
        if os.path.isfile(path):
            hashes[output] = file_sha256(path)
        elif os.path.isdir(path):
            for directory, _, files in os.walk(path):
                for name in files:
                    full = os.path.join(directory, name)
                    hashes[os.path.relpath(full, root)] = file_sha256(full)
    return OrderedDict(sorted(hashes.items()))


def generate(ctx, config, seed):
    _reset(ctx.path('corpus'))
    corpus.generate_synthetic_corpus(seed, config.n_speakers, config.utterance_counts, config.corpus.styles,
                                     ctx.path('corpus'))


def features(ctx, config, seed):
    _reset(*(ctx.path('features', kind) for kind in ('mel', 'mfcc', 'f0')))
    manifest = ctx.manifest
    tracks = defaultdict(list)
    for utterance in manifest.utterances:
        uid = utterance.utterance_id
        clip = dsp.read_wav(manifest.audio_file(utterance), uid)
        mel = dsp.mel_spectrogram(clip)
        track = dsp.estimate_f0(clip)
        write_matrix(ctx.path('features', 'mel', uid + '.sftf'), mel.frames)
        write_matrix(ctx.path('features', 'mfcc', uid + '.sftf'), dsp.mfcc_from_mel(mel).frames)
        write_matrix(ctx.path('features', 'f0', uid + '.sftf'), track.to_matrix())
        if utterance.split == 'train':
            tracks[utterance.speaker_id].append(track)
    means = OrderedDict((speaker_id, dsp.speaker_log_f0_mean(tracks[speaker_id]))
                        for speaker_id in manifest.speakers)
    _write_json(ctx.path('features', 'f0_means.json'), means)
    logger.info('Extracted features for %d utterances', len(manifest.utterances))


def align_stage(ctx, config, seed):
    _reset(ctx.path('align'))
    manifest, mfccs = ctx.manifest, ctx.mfccs
    train = manifest.filter(split='train')
    model = align.flat_start_init(train, mfccs)
    model = align.viterbi_train(model, train, mfccs, config.align.iterations)
    alignments, skipped = align.align_all(model, manifest, mfccs)
    model.skipped = skipped
    model.save(ctx.path('align', 'model.json'))
    mels = ctx.mels
    for uid, sequence in alignments.items():
        align.upsample_states(sequence, mels[uid].num_frames).save(ctx.path('align', 'states', uid + '.sftf'))
    logger.info('Aligned %d utterances (%d skipped)', len(alignments), len(skipped))


def spkemb_stage(ctx, config, seed):
    _reset(ctx.path('spkemb'))
    manifest, mels = ctx.manifest, ctx.mels
    encoder = spkemb.train_speaker_encoder(manifest, mels, config.spkemb, seed)
    spkemb.save_encoder(encoder, ctx.path('spkemb', 'encoder'), monitor_losses=list(encoder.monitor_losses))
    embeddings = OrderedDict(
        (u.utterance_id, spkemb.embed_utterance(encoder, mels[u.utterance_id], u.speaker_id))
        for u in manifest.utterances)
    write_matrix(ctx.path('spkemb', 'embeddings.sftf'), np.stack([e.vector for e in embeddings.values()]))
    _write_json(ctx.path('spkemb', 'embeddings.json'), {'utterance_ids': list(embeddings)})
    centroids = OrderedDict()
    for speaker_id in manifest.speakers:
        train = manifest.filter(speaker_id=speaker_id, split='train').utterances
        centroid = spkemb.speaker_centroid([embeddings[u.utterance_id] for u in train], speaker_id)
        centroids[speaker_id] = centroid.vector.tolist()
    _write_json(ctx.path('spkemb', 'centroids.json'), centroids)


def vc_stage(ctx, config, seed):
    _reset(ctx.path('vc'))
    manifest = ctx.aligned_manifest
    model = vc.train_vc(manifest, ctx.mels, ctx.f0_tracks, ctx.state_sequences, ctx.embeddings,
                        ctx.align_model.n_states, manifest.target_speaker, config.vc, seed)
    vc.save_model(model, ctx.path('vc', 'model'), training_summary=model.training_summary)


def convert(ctx, config, seed):
    _reset(ctx.path('converted'))
    manifest = ctx.aligned_manifest
    target_id = manifest.target_speaker
    f0_means = ctx.f0_means
    target = vc.ConversionTarget(target_id, ctx.speaker_centroids[target_id].vector, f0_means[target_id])
    supporting = corpus.Manifest(
        utterances=[u for u in manifest.utterances if u.speaker_id != target_id],
        speakers=manifest.speakers, root=manifest.root)
    sources = vc.collect_features(supporting, ctx.mels, ctx.f0_tracks, ctx.state_sequences, ctx.embeddings)
    model = ctx.vc_model
    items = []
    for source in sources:
        utterance = manifest.get(source.utterance_id)
        uid = '{}_as_{}'.format(source.utterance_id, target_id)
        mel = vc.convert_utterance(model, source, f0_means[source.speaker_id], target, uid)
        mel_path = os.path.join('converted', 'mel', uid + '.sftf')
        write_matrix(ctx.path(mel_path), mel.frames)
        items.append(corpus.ConvertedItem(
            utterance_id=uid,
            speaker_id=target_id,
            style_label=source.speaker_id,
            source_utterance_id=source.utterance_id,
            phones=list(utterance.phones),
            mel_path=mel_path,
            split=utterance.split,
        ))
    corpus.write_converted(items, ctx.path('converted', 'manifest.jsonl'))
    logger.info('Converted %d supporting utterances to %s', len(items), target_id)


def pool(ctx, config, seed):
    manifest = ctx.aligned_manifest
    target_id = manifest.target_speaker
    natural = manifest.filter(speaker_id=target_id, split='train')
    converted = [item for item in ctx.converted if item.split == 'train']
    pooled = corpus.pool_datasets(natural, converted, os.path.join('features', 'mel'), target_id)
    _write_json(ctx.path('pool.json'), pooled.to_json())


def baseline(ctx, config, seed):
    '''The neutral-only system: the same TTS trained on the target's own recordings.'''
    _reset(ctx.path(BASELINE_DIR))
    manifest = ctx.aligned_manifest
    target_id = manifest.target_speaker
    natural = manifest.filter(speaker_id=target_id, split='train')
    pooled = corpus.pool_datasets(natural, [], os.path.join('features', 'mel'), target_id)
    mels = OrderedDict((item.item_id, ctx.mels[item.item_id].frames) for item in pooled.items)
    model = tts.train_tts(pooled, mels, config.tts, seed)
    tts.save_model(model, ctx.path(BASELINE_DIR, 'model'), training_summary=model.training_summary)
    style = tts.compute_style_centroid(model, list(model.item_latents.values()), corpus.NEUTRAL)
    index = synthesize_index(ctx, config, seed, [style], ctx.path(BASELINE_DIR, 'synthesis'), model=model)
    _write_json(ctx.path(BASELINE_DIR, 'index.json'), index)


def tts_stage(ctx, config, seed):
    _reset(ctx.path('tts'))
    model = tts.train_tts(ctx.pool, ctx.pooled_mels, config.tts, seed)
    ids = list(model.item_latents)
    write_matrix(ctx.path('tts', 'latents.sftf'), np.stack([model.item_latents[i] for i in ids]))
    tts.save_model(model, ctx.path('tts', 'model'), latent_table='latents.sftf', latent_ids=ids,
                   training_summary=model.training_summary)


def centroids(ctx, config, seed):
    model, latents = ctx.tts_model, ctx.item_latents
    out = OrderedDict()
    for label, items in ctx.pool.group_by_style().items():
        style = tts.compute_style_centroid(model, [latents[item.item_id] for item in items], label)
        out[label] = style.z.tolist()
    _write_json(ctx.path('centroids.json'), out)


def synthesize_sentence(ctx, config, seed, phones, style, utterance_id, directory, model=None):
    os.makedirs(directory, exist_ok=True)
    result = tts.synthesize(model or ctx.tts_model, tts.encode_phones(phones), style, seed=seed,
                            strict=config.synthesis.strict, utterance_id=utterance_id,
                            iterations=config.synthesis.griffin_lim_iterations)
    stem = '{}__{}'.format(utterance_id, style.label)
    dsp.write_wav(os.path.join(directory, stem + '.wav'), result.audio)
    write_matrix(os.path.join(directory, stem + '.sftf'), result.mel.frames)
    _write_json(os.path.join(directory, stem + '.json'),
                dict(result.sidecar(), utterance_id=utterance_id, phones=list(phones)))
    return stem, result


def held_out_sentences(ctx, config):
    manifest = ctx.manifest
    sentences = manifest.filter(speaker_id=manifest.target_speaker, split='test').utterances
    if config.synthesis.max_sentences:
        sentences = sentences[:config.synthesis.max_sentences]
    return sentences


def synthesize_index(ctx, config, seed, styles, directory, model=None):
    '''Synthesize every test sentence with every style; returns the index entries.'''
    index = []
    for utterance in held_out_sentences(ctx, config):
        for style in styles:
            stem, result = synthesize_sentence(ctx, config, seed, utterance.phones, style,
                                               utterance.utterance_id, directory, model=model)
            index.append(OrderedDict([
                ('utterance_id', utterance.utterance_id),
                ('style_label', style.label),
                ('stem', stem),
                ('frames', result.mel.num_frames),
                ('runaway', result.runaway),
            ]))
    return index


def synthesize(ctx, config, seed):
    _reset(ctx.path('synthesis'))
    index = synthesize_index(ctx, config, seed, ctx.style_centroids.values(), ctx.path('synthesis'))
    _write_json(ctx.path('synthesis', 'index.json'), index)


def evaluate(ctx, config, seed):
    results = evaluation.evaluate_artifacts(ctx, config, seed, svg_path=ctx.path('latent_space.svg'))
    _write_json(ctx.path('evaluation.json'), results)


@dataclass
class Stage:
    name: str
    run: object
    sections: tuple
    outputs: tuple


STAGES = OrderedDict((stage.name, stage) for stage in (
    Stage('generate', generate, ('corpus', 'supporting'), ('corpus',)),
    Stage('features', features, (), ('features',)),
    Stage('align', align_stage, ('align',), ('align',)),
    Stage('spkemb', spkemb_stage, ('spkemb',), ('spkemb',)),
    Stage('vc', vc_stage, ('vc',), ('vc',)),
    Stage('convert', convert, (), ('converted',)),
    Stage('pool', pool, (), ('pool.json',)),
    Stage('baseline', baseline, ('tts', 'synthesis'), (BASELINE_DIR,)),
    Stage('tts', tts_stage, ('tts',), ('tts',)),
    Stage('centroids', centroids, (), ('centroids.json',)),
    Stage('synthesize', synthesize, ('synthesis',), ('synthesis',)),
    Stage('evaluate', evaluate, ('evaluation', 'synthesis'), ('evaluation.json', 'latent_space.svg')),
))


class PipelineLock:
    def __init__(self, root):
        self.path = os.path.join(root, LOCK_FILE)

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineLocked('{} exists; another pipeline is using this directory'.format(self.path))
        with os.fdopen(fd, 'w') as f:
            f.write('{}\n'.format(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


class Pipeline:
    def __init__(self, config, root=None):
        self.config = config
        self.root = os.path.abspath(root or config.artifact_dir)
        self.context = ArtifactContext(self.root)

    def marker_path(self, name):
        return os.path.join(self.root, MARKER_DIR, name + '.json')

    def read_marker(self, name):
        try:
            with open(self.marker_path(name)) as f:
                return json.load(f)
        except (OSError, ValueError):
            return None

    def stage_seed(self, name):
        return derive_seed(self.config.seed, name)

    def upstream_digest(self, name):
        '''Digest of the preceding stage's marker; None for the first stage.'''
        names = list(STAGES)
        index = names.index(name)
        if index == 0:
            return None
        marker = self.read_marker(names[index - 1])
        return hashlib.sha256(json.dumps(marker, sort_keys=True).encode('utf8')).hexdigest()

    def stale_reason(self, stage):
        '''Why a stage must run, or None when its marker is still valid.'''
        marker = self.read_marker(stage.name)
        if marker is None:
            return 'no marker'
        if marker.get('upstream') != self.upstream_digest(stage.name):
            return 'upstream changed'
        if marker.get('fingerprint') != self.config.fingerprint(*stage.sections):
            return 'config changed'
        if marker.get('outputs') != hash_outputs(self.root, stage.outputs):
            return 'outputs changed'
        return None

    def execute(self, stage):
        stage_logger.info('%s\tstart\tseed=%d', stage.name, self.stage_seed(stage.name))
        _reset(self.marker_path(stage.name))
        try:
            stage.run(self.context, self.config, self.stage_seed(stage.name))
        except StyleForgeError as e:
            stage_logger.error('%s\tfailed\t%s', stage.name, e)
            raise StageError(stage.name, e) from e
        except Exception as e:
            stage_logger.exception('%s\tfailed\t%s: %s', stage.name, type(e).__name__, e)
            raise StageError(stage.name, e) from e
        finally:
            # Later stages must see this stage's new outputs.
            self.context.invalidate()
        outputs = hash_outputs(self.root, stage.outputs)
        _write_json(self.marker_path(stage.name), OrderedDict([
            ('stage', stage.name),
            ('fingerprint', self.config.fingerprint(*stage.sections)),
            ('upstream', self.upstream_digest(stage.name)),
            ('outputs', outputs),
        ]))
        stage_logger.info('%s\tdone\t%d files', stage.name, len(outputs))

    def run(self, only=None, force=False):
        '''
        Run every stage in order, or only the named ones. Stages named in
        `only` whose predecessors have never completed fail instead of
        running on missing inputs. Returns the names of executed stages.
        '''
        names = list(STAGES)
        unknown = [name for name in (only or ()) if name not in STAGES]
        if unknown:
            raise StageError(unknown[0], 'unknown stage')
        selected = names if only is None else [name for name in names if name in only]
        executed = []
        with PipelineLock(self.root):
            upstream_ran = False
            for name in names:
                stage = STAGES[name]
                if name not in selected:
                    if self.read_marker(name) is None and any(names.index(s) > names.index(name) for s in selected):
                        raise StageError(selected[0], 'upstream stage {!r} has not completed'.format(name))
                    continue
                reason = 'forced' if force else ('upstream re-executed' if upstream_ran else self.stale_reason(stage))
                if reason is None:
                    stage_logger.info('%s\tskip\tup to date', name)
                    continue
                logger.info('Running stage %s (%s)', name, reason)
                self.execute(stage)
                executed.append(name)
                upstream_ran = True
            self.write_artifact_manifest()
        return executed

    def write_artifact_manifest(self):
        outputs = [entry for entry in sorted(os.listdir(self.root)) if entry not in UNTRACKED]
        _write_json(os.path.join(self.root, ARTIFACT_MANIFEST), OrderedDict([
            ('seed', self.config.seed),
            ('stages', OrderedDict((name, (self.read_marker(name) or {}).get('fingerprint'))
                                   for name in STAGES)),
            ('files', hash_outputs(self.root, outputs)),
        ]))


def run_pipeline(config, only=None, force=False, root=None):
    '''Run (or resume) the pipeline; returns the artifact directory.'''
    pipeline = Pipeline(config, root)
    executed = pipeline.run(only=only, force=force)
    logger.info('Pipeline finished in %s; executed: %s', pipeline.root, ', '.join(executed) or 'nothing')
    return pipeline.root


def synthesize_text(config, text, style_label=None, root=None):
    '''Ad-hoc synthesis of a phone string with one or every style centroid.'''
    ctx = ArtifactContext(root or config.artifact_dir)
    phones = corpus.parse_phones(text)
    styles = ctx.style_centroids
    if style_label is not None:
        if style_label not in styles:
            raise StageError('synthesize', 'unknown style {!r}; known: {}'.format(
                style_label, ', '.join(styles)))
        styles = OrderedDict([(style_label, styles[style_label])])
    utterance_id = 'adhoc_' + hashlib.sha256(' '.join(phones).encode('utf8')).hexdigest()[:8]
    paths = []
    for style in styles.values():
        stem, _ = synthesize_sentence(ctx, config, derive_seed(config.seed, 'synthesize'), phones, style,
                                      utterance_id, ctx.path('adhoc'))
        paths.append(ctx.path('adhoc', stem + '.wav'))
    return paths
