'''
Objective metrics, latent-space analysis and listening-test statistics.

Listening tests are MUSHRA-like: on each screen a listener scores every
competing system once on a 0-100 scale. Gap closure ("Rel") places a system
between a lower and an upper anchor system, in percent.
'''
import csv
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import scipy.stats
import yaml
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA
from sklearn.manifold import TSNE

from speech.corpus import NEUTRAL
from speech.dsp import MelSpectrogram, cepstrum, estimate_f0, griffin_lim_invert, read_wav
from speech.errors import (
    DegenerateGap,
    DegenerateInput,
    InsufficientData,
    InvalidInput,
    MalformedScreen,
)
from speech.featio import read_header, read_matrix
from speech.seeds import derive_seed
from speech.spkemb import cosine, embed_utterance
from speech.vc import ConversionTarget, collect_features, convert_utterance, reconstruction_l1

logger = logging.getLogger('speech.evaluation')

Z_95 = 1.96
MCD_SCALE = 10.0 / math.log(10.0) * math.sqrt(2.0)
# Converted speech counts as on-pitch when its voiced f0 mean is this close to the target.
F0_TOLERANCE_HZ = 15.0
PUBLISHED_RESULTS = os.path.join(os.path.dirname(__file__), 'fixtures', 'listening_tests.yaml')


@dataclass
class Screen:
    screen_id: str
    listener_id: str
    scores: dict = field(default_factory=OrderedDict)


@dataclass
class RatingSet:
    screens: list = field(default_factory=list)
    name: str = ''
    reference: str = ''

    @property
    def systems(self):
        seen = OrderedDict()
        for screen in self.screens:
            for system in screen.scores:
                seen[system] = True
        return list(seen)

    def scores(self, system):
        return [screen.scores[system] for screen in self.screens if system in screen.scores]

    @classmethod
    def from_rows(cls, rows, name='', reference=''):
        '''Rows of (screen_id, listener_id, system, score).'''
        screens = OrderedDict()
        for screen_id, listener_id, system, score in rows:
            screen_id, listener_id, system = str(screen_id), str(listener_id), str(system)
            score = float(score)
            if not 0.0 <= score <= 100.0:
                raise InvalidInput('score {} on screen {} is outside [0, 100]'.format(score, screen_id))
            screen = screens.setdefault(screen_id, Screen(screen_id, listener_id))
            if system in screen.scores:
                raise MalformedScreen('screen {} rates {} twice'.format(screen_id, system), screen_id=screen_id)
            screen.scores[system] = score
        return cls(screens=list(screens.values()), name=name, reference=reference)

    @classmethod
    def from_csv(cls, path, name='', reference=''):
        with open(path, newline='') as f:
            reader = csv.DictReader(f)
            missing = {'screen_id', 'listener_id', 'system', 'score'} - set(reader.fieldnames or ())
            if missing:
                raise InvalidInput('{}: missing columns {}'.format(path, ', '.join(sorted(missing))))
            rows = [(r['screen_id'], r['listener_id'], r['system'], r['score']) for r in reader]
        return cls.from_rows(rows, name=name or os.path.basename(path), reference=reference)

    @classmethod
    def from_queryset(cls, test):
        '''Build from a stored ListeningTest.'''
        rows = test.ratings.order_by('screen_id', 'system').values_list(
            'screen_id', 'listener_id', 'system', 'score')
        return cls.from_rows(rows, name=test.name, reference=test.reference)


def mushra_mean_ci(ratings, system):
    '''Mean and 95% normal-approximation half-width of one system's scores.'''
    scores = np.asarray(ratings.scores(system), dtype=np.float64)
    if len(scores) < 2:
        raise InsufficientData('{} has {} ratings; need at least 2'.format(system, len(scores)))
    return float(scores.mean()), float(Z_95 * scores.std(ddof=1) / math.sqrt(len(scores)))


@dataclass
class GapReport:
    # system -> (mean, ci95)
    systems: dict
    rel_closure: dict = field(default_factory=dict)
    lower: str = ''
    upper: str = ''


def summarize_listening_test(ratings, lower=None, upper=None):
    '''Mean and CI per system; Rel of every other system when anchors are given.'''
    report = GapReport(systems=OrderedDict((s, mushra_mean_ci(ratings, s)) for s in ratings.systems),
                       lower=lower or '', upper=upper or '')
    if lower and upper:
        low, high = report.systems[lower][0], report.systems[upper][0]
        for system, (mean, _) in report.systems.items():
            if system not in (lower, upper):
                report.rel_closure[system] = relative_gap_closure(low, high, mean)
    return report


def relative_gap_closure(lower, upper, system):
    if upper == lower:
        raise DegenerateGap('anchors coincide at {}'.format(lower))
    return 100.0 * (system - lower) / (upper - lower)


def _row(row):
    if isinstance(row, dict):
        return row['lower'], row['upper'], row['system']
    return row


def aggregate_gap_closures(rows):
    rows = list(rows)
    if not rows:
        raise InvalidInput('no rows to aggregate')
    return float(np.mean([relative_gap_closure(*_row(row)) for row in rows]))


def reference_anchored_gain(neutral, augmented, reference=100.0):
    '''Gap closure with the neutral system as lower and the reference as upper anchor.'''
    if neutral >= reference:
        raise DegenerateGap('neutral score {} is not below the reference {}'.format(neutral, reference))
    return 100.0 * (augmented - neutral) / (reference - neutral)


def aggregate_reference_anchored_gains(rows, reference=100.0):
    rows = list(rows)
    if not rows:
        raise InvalidInput('no rows to aggregate')
    return float(np.mean([reference_anchored_gain(neutral, augmented, reference) for neutral, augmented in rows]))


def rel_rounding_bounds(lower, upper, system, decimals=2):
    '''Range of Rel over every anchor/system value that rounds to the given ones.'''
    h = 0.5 * 10 ** -decimals
    values = [relative_gap_closure(l, u, s)
              for l in (lower - h, lower + h) for u in (upper - h, upper + h) for s in (system - h, system + h)]
    return min(values), max(values)


@dataclass
class PairTest:
    a: str
    b: str
    statistic: float
    p_value: float
    p_adjusted: float = None
    reject: bool = False


def holm_bonferroni(p_values, alpha):
    '''Holm step-down adjusted p-values and rejection flags, in input order.'''
    m = len(p_values)
    order = np.argsort(p_values, kind='stable')
    adjusted = np.empty(m)
    running = 0.0
    for rank, index in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[index]))
        adjusted[index] = running
    return adjusted, adjusted < alpha


def significance_test(ratings, systems=None, alpha=0.01):
    '''Paired two-sided t-tests over screens for every system pair, Holm corrected.'''
    systems = list(systems or ratings.systems)
    tests = []
    for a, b in combinations(systems, 2):
        pairs = [(s.scores[a], s.scores[b]) for s in ratings.screens if a in s.scores and b in s.scores]
        if len(pairs) < 2:
            raise InsufficientData('{} and {} share {} screens'.format(a, b, len(pairs)))
        x, y = np.asarray(pairs).T
        if np.allclose(x - y, (x - y)[0]):
            # Constant differences: the t statistic is undefined.
            statistic, p_value = (0.0, 1.0) if np.allclose(x, y) else (math.copysign(math.inf, (x - y)[0]), 0.0)
        else:
            result = scipy.stats.ttest_rel(x, y)
            statistic, p_value = float(result.statistic), float(result.pvalue)
        tests.append(PairTest(a, b, statistic, p_value))
    if tests:
        adjusted, reject = holm_bonferroni(np.array([t.p_value for t in tests]), alpha)
        for test, p, r in zip(tests, adjusted, reject):
            test.p_adjusted, test.reject = float(p), bool(r)
    return tests


@dataclass
class ConfusionMatrix:
    systems: list
    references: list
    # percent[i][j]: share of reference j's screens won by system i
    percent: np.ndarray
    ambiguous: list = field(default_factory=list)

    def column(self, reference):
        j = self.references.index(reference)
        return OrderedDict((s, float(self.percent[i, j])) for i, s in enumerate(self.systems))


def confusion_from_ratings(ratings_by_reference, systems=None):
    '''
    For every screen the top-rated system is the perceived style. Ties split
    the screen equally between the tied systems and flag the screen.
    '''
    if systems is None:
        seen = OrderedDict()
        for ratings in ratings_by_reference.values():
            for system in ratings.systems:
                seen[system] = True
        systems = list(seen)
    references = list(ratings_by_reference)
    counts = np.zeros((len(systems), len(references)))
    ambiguous = []
    for j, reference in enumerate(references):
        screens = ratings_by_reference[reference].screens
        if not screens:
            raise InsufficientData('no screens for reference {}'.format(reference))
        for screen in screens:
            missing = [s for s in systems if s not in screen.scores]
            if missing:
                raise MalformedScreen('screen {} has no score for {}'.format(screen.screen_id, ', '.join(missing)),
                                      screen_id=screen.screen_id)
            scores = np.array([screen.scores[s] for s in systems])
            winners = np.flatnonzero(scores == scores.max())
            if len(winners) > 1:
                ambiguous.append(screen.screen_id)
            counts[winners, j] += 1.0 / len(winners)
        counts[:, j] *= 100.0 / len(screens)
    return ConfusionMatrix(systems=list(systems), references=references, percent=counts, ambiguous=ambiguous)


def cepstral_distance(a, b):
    '''Mean MCD in dB between two cepstral sequences, excluding c0.'''
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInput('cepstra differ in shape: {} vs {}'.format(a.shape, b.shape))
    diff = a[:, 1:] - b[:, 1:]
    return float(MCD_SCALE * np.sqrt((diff ** 2).sum(axis=1)).mean())


def mel_cepstral_distortion(a, b):
    if a.num_frames != b.num_frames:
        raise InvalidInput('mel lengths differ: {} vs {}'.format(a.num_frames, b.num_frames))
    return cepstral_distance(cepstrum(a.frames), cepstrum(b.frames))


def speaker_similarity(encoder, a, b):
    return cosine(embed_utterance(encoder, a), embed_utterance(encoder, b))


@dataclass
class Projection:
    coordinates: np.ndarray
    labels: list
    centroids: dict
    method: str


def latent_projection_2d(vectors, labels, method='pca', seed=0, path=None, centroids=None, title=''):
    '''
    Project labelled vectors to 2-D. Per-label centroids (the label means,
    unless given) are projected with them and drawn as X markers when a
    `path` for the SVG is given.
    '''
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = [str(label) for label in labels]
    if len(vectors) < 2 or len(np.unique(vectors, axis=0)) < 2:
        raise DegenerateInput('need at least 2 distinct vectors to project')
    if len(labels) != len(vectors):
        raise InvalidInput('{} labels for {} vectors'.format(len(labels), len(vectors)))
    names = list(OrderedDict.fromkeys(labels))
    if centroids is None:
        centroids = OrderedDict((name, vectors[[l == name for l in labels]].mean(axis=0)) for name in names)
    centroid_matrix = np.asarray([np.asarray(getattr(c, 'z', c)) for c in centroids.values()])

    if method == 'pca':
        pca = PCA(n_components=2, svd_solver='full').fit(vectors)
        points, centres = pca.transform(vectors), pca.transform(centroid_matrix)
    elif method == 'tsne':
        # t-SNE has no transform; centroids are embedded alongside the points.
        both = np.concatenate([vectors, centroid_matrix])
        perplexity = min(30.0, max(1.0, (len(both) - 1) / 3))
        embedded = TSNE(n_components=2, perplexity=perplexity, init='pca', random_state=seed).fit_transform(both)
        points, centres = embedded[:len(vectors)], embedded[len(vectors):]
    else:
        raise InvalidInput('unknown projection {!r}'.format(method))

    projection = Projection(coordinates=points, labels=labels,
                            centroids=OrderedDict(zip(centroids, centres)), method=method)
    if path:
        plot_projection(projection, path, title)
    return projection


def plot_projection(projection, path, title=''):
    matplotlib.rcParams['svg.hashsalt'] = 'styleforge'
    fig, ax = plt.subplots(figsize=(6, 5))
    names = list(OrderedDict.fromkeys(projection.labels))
    colors = plt.get_cmap('tab10')
    for i, name in enumerate(names):
        mask = np.array([l == name for l in projection.labels])
        ax.scatter(projection.coordinates[mask, 0], projection.coordinates[mask, 1], s=12, alpha=0.6,
                   color=colors(i % 10), label=name)
        if name in projection.centroids:
            x, y = projection.centroids[name]
            ax.scatter([x], [y], marker='X', s=160, color=colors(i % 10), edgecolors='black')
    ax.set_title(title or 'z-vectors ({})'.format(projection.method.upper()))
    ax.legend(loc='best', fontsize='small')
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def cluster_purity(vectors, labels, k=None, seed=0):
    '''k-means on the raw vectors; purity = share of points in their cluster's majority label.'''
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = [str(label) for label in labels]
    k = k or len(set(labels))
    if len(vectors) < k:
        raise InvalidInput('{} vectors cannot form {} clusters'.format(len(vectors), k))
    if k == 1:
        return 1.0
    clusters = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(vectors)
    majority = 0
    for cluster in range(k):
        members = [labels[i] for i in np.flatnonzero(clusters == cluster)]
        if members:
            majority += max(members.count(label) for label in set(members))
    return majority / len(vectors)


def load_published_results(path=PUBLISHED_RESULTS):
    with open(path) as f:
        return yaml.safe_load(f)


def reproduce_published_tables(path=PUBLISHED_RESULTS):
    '''
    Recompute every gap-closure figure from the published means. Each Rel
    comes with its printed value and the range the rounding of the printed
    means allows.
    '''
    data = load_published_results(path)
    out = OrderedDict()
    for key in ('supporting_speaker_count', 'supporting_data_amount'):
        table = data[key]
        gap = table['gap']
        scores = table['scores'][gap['metric']]
        lower, upper = scores[gap['lower']][0], scores[gap['upper']][0]
        rows = [(lower, upper, scores[system][0]) for system in gap['systems']]
        out[key] = {
            'description': table['description'],
            'scores': table['scores'],
            'rel': OrderedDict((system, relative_gap_closure(*row)) for system, row in zip(gap['systems'], rows)),
            'mean_rel': aggregate_gap_closures(rows),
            'published': gap['published'],
            'lower': gap['lower'],
            'upper': gap['upper'],
        }

    rows = []
    for row in data['per_speaker']['rows']:
        speaker, style = row['speaker'], row['style']
        speaker_args = (speaker['source'], speaker['neutral'], speaker['augmented'])
        style_args = (style['neutral'], style['vc'], style['augmented'])
        rows.append({
            'locale': row['locale'],
            'gender': row['gender'],
            'speaker': dict(speaker, computed=relative_gap_closure(*speaker_args),
                            bounds=rel_rounding_bounds(*speaker_args)),
            'style': dict(style, computed=relative_gap_closure(*style_args),
                          bounds=rel_rounding_bounds(*style_args),
                          reference_gain=reference_anchored_gain(style['neutral'], style['augmented'])),
        })
    out['per_speaker'] = {
        'rows': rows,
        'speaker_rel_mean': aggregate_gap_closures(
            (r['speaker']['source'], r['speaker']['neutral'], r['speaker']['augmented']) for r in rows),
        'style_rel_mean': aggregate_gap_closures(
            (r['style']['neutral'], r['style']['vc'], r['style']['augmented']) for r in rows),
        'style_reference_gain_mean': aggregate_reference_anchored_gains(
            (r['style']['neutral'], r['style']['augmented']) for r in rows),
        'published': data['per_speaker']['published'],
    }
    perceived = data['perceived_style']
    out['perceived_style'] = {
        'centroids': perceived['centroids'],
        'references': perceived['references'],
        'percent': perceived['percent'],
        'column_totals': [round(sum(col), 2) for col in zip(*perceived['percent'])],
    }
    return out


def summarize_stored_tests(tests, alpha=0.01):
    '''
    Statistics for stored ListeningTests. Perceived-style tests (one per
    reference style) are folded into a single confusion matrix; every other
    test gets per-system mean/CI and pairwise significance.
    '''
    out = OrderedDict()
    perceived = OrderedDict()
    for test in tests:
        ratings = RatingSet.from_queryset(test)
        if test.kind == 'perceived_style':
            perceived[test.reference or test.name] = ratings
            continue
        report = summarize_listening_test(ratings)
        out[test.name] = {
            'kind': test.kind,
            'systems': OrderedDict((s, {'mean': m, 'ci95': ci}) for s, (m, ci) in report.systems.items()),
            'pairs': [{'a': t.a, 'b': t.b, 'statistic': t.statistic, 'p_value': t.p_value,
                       'p_adjusted': t.p_adjusted, 'reject': t.reject}
                      for t in significance_test(ratings, alpha=alpha)],
        }
    if perceived:
        matrix = confusion_from_ratings(perceived)
        out['perceived_style'] = {
            'kind': 'perceived_style',
            'systems': matrix.systems,
            'references': matrix.references,
            'percent': matrix.percent.tolist(),
            'ambiguous': matrix.ambiguous,
        }
    return out


def _vocode(mel, iterations, seed, name):
    return griffin_lim_invert(mel, iterations=iterations, seed=derive_seed(seed, 'evaluate', name))


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _rate(flags):
    flags = list(flags)
    return sum(bool(f) for f in flags) / len(flags) if flags else None


def contour_correlation(source, output):
    '''Pearson correlation of log f0 over frames voiced in both tracks.'''
    both = source.voiced & output.voiced
    if both.sum() < 3:
        return None
    a, b = source.log_f0[both], output.log_f0[both]
    if a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def conversion_metrics(ctx, config, seed):
    '''Held-out conversions of supporting speakers' test utterances.'''
    target = ctx.manifest.target_speaker
    target_hz = math.exp(ctx.f0_means[target])
    centroids = ctx.speaker_centroids
    encoder = ctx.speaker_encoder
    iterations = config.synthesis.griffin_lim_iterations
    held_out = [item for item in ctx.converted if item.split == 'test']
    if config.evaluation.max_conversions:
        held_out = held_out[:config.evaluation.max_conversions]
    if not held_out:
        raise InsufficientData('no held-out conversions to evaluate')

    preserved, errors, within, correlations, wins, to_target, to_source = [], [], [], [], [], [], []
    for item in held_out:
        source_mel = ctx.mels[item.source_utterance_id]
        converted = MelSpectrogram(frames=read_matrix(ctx.path(item.mel_path)), utterance_id=item.utterance_id)
        preserved.append(converted.num_frames == source_mel.num_frames)
        track = estimate_f0(_vocode(converted, iterations, seed, item.utterance_id))
        voiced = track.voiced_hz()
        if voiced.size:
            error = abs(float(voiced.mean()) - target_hz)
            errors.append(error)
            within.append(error <= F0_TOLERANCE_HZ)
        else:
            within.append(False)
        if track.num_frames == ctx.f0_tracks[item.source_utterance_id].num_frames:
            correlations.append(contour_correlation(ctx.f0_tracks[item.source_utterance_id], track))
        embedding = embed_utterance(encoder, converted)
        similarity_target = cosine(embedding, centroids[target])
        similarity_source = cosine(embedding, centroids[item.style_label])
        to_target.append(similarity_target)
        to_source.append(similarity_source)
        wins.append(similarity_target > similarity_source)

    return OrderedDict([
        ('count', len(held_out)),
        ('duration_preserved_rate', _rate(preserved)),
        ('target_f0_mean_hz', target_hz),
        ('f0_mean_abs_error_hz', _mean(errors)),
        ('f0_within_tolerance_rate', _rate(within)),
        ('contour_correlation_mean', _mean(correlations)),
        ('similarity_to_target_mean', _mean(to_target)),
        ('similarity_to_source_mean', _mean(to_source)),
        ('speaker_similarity_win_rate', _rate(wins)),
    ])


def self_conversion_metrics(ctx, config):
    '''Convert the target's test utterances to the target itself.'''
    manifest = ctx.aligned_manifest
    target_id = manifest.target_speaker
    sources = collect_features(manifest.filter(speaker_id=target_id, split='test'), ctx.mels, ctx.f0_tracks,
                               ctx.state_sequences, ctx.embeddings)
    if config.evaluation.max_conversions:
        sources = sources[:config.evaluation.max_conversions]
    if not sources:
        return OrderedDict([('count', 0), ('l1_mean', None), ('mcd_mean_db', None)])
    model = ctx.vc_model
    target = ConversionTarget(target_id, ctx.speaker_centroids[target_id].vector, ctx.f0_means[target_id])
    l1s, mcds, reconstructions = [], [], []
    for source in sources:
        converted = convert_utterance(model, source, ctx.f0_means[target_id], target)
        l1s.append(float(np.abs(converted.frames - source.mel.frames).mean()))
        mcds.append(mel_cepstral_distortion(converted, source.mel))
        reconstructions.append(reconstruction_l1(model, source))
    return OrderedDict([
        ('count', len(sources)),
        ('l1_mean', _mean(l1s)),
        ('reconstruction_l1_mean', _mean(reconstructions)),
        ('mcd_mean_db', _mean(mcds)),
    ])


def synthesis_metrics(ctx):
    '''Stop-token termination and prosodic variation of the synthesized test set.'''
    index = ctx.synthesis_index
    if not index:
        return OrderedDict([('count', 0)])
    variances = OrderedDict()
    by_sentence = OrderedDict()
    for entry in index:
        clip = read_wav(ctx.path('synthesis', entry['stem'] + '.wav'), entry['utterance_id'])
        track = estimate_f0(clip)
        voiced = track.log_f0[track.voiced]
        variance = float(voiced.var()) if voiced.size >= 2 else None
        variances.setdefault(entry['style_label'], []).append(variance)
        by_sentence.setdefault(entry['utterance_id'], {})[entry['style_label']] = variance

    wins = []
    for styles in by_sentence.values():
        neutral = styles.get(NEUTRAL)
        for label, variance in styles.items():
            if label == NEUTRAL or neutral is None or variance is None:
                continue
            wins.append(variance > neutral)
    return OrderedDict([
        ('count', len(index)),
        ('termination_rate', _rate(not entry['runaway'] for entry in index)),
        ('log_f0_variance', OrderedDict((label, _mean(values)) for label, values in variances.items())),
        ('expressive_over_neutral_win_rate', _rate(wins)),
    ])


def latent_metrics(ctx, config, seed, svg_path=None):
    latents = ctx.item_latents
    labels_by_item = {item.item_id: item.style_label for item in ctx.pool.items}
    ids = [item_id for item_id in latents if item_id in labels_by_item]
    vectors = np.asarray([latents[item_id] for item_id in ids])
    labels = [labels_by_item[item_id] for item_id in ids]
    centroids = ctx.style_centroids
    out = OrderedDict([
        ('items', len(ids)),
        ('style_counts', OrderedDict(sorted(ctx.pool.style_counts().items()))),
        ('purity', cluster_purity(vectors, labels, seed=seed)),
        ('centroid_distances', OrderedDict(
            ('{}|{}'.format(a, b), float(np.linalg.norm(centroids[a].z - centroids[b].z)))
            for a, b in combinations(centroids, 2))),
        ('projection', config.evaluation.projection),
    ])
    latent_projection_2d(vectors, labels, method=config.evaluation.projection, seed=seed, path=svg_path,
                         centroids=centroids)
    return out


def log_f0_spread(track):
    '''Standard deviation of voiced log f0; None with fewer than 2 voiced frames.'''
    voiced = track.log_f0[track.voiced]
    return float(voiced.std()) if voiced.size >= 2 else None


def _closure(lower, upper, system):
    if None in (lower, upper, system):
        return None
    try:
        return relative_gap_closure(lower, upper, system)
    except DegenerateGap:
        return None


def _anchored(neutral, augmented, reference):
    if None in (neutral, augmented, reference):
        return None
    try:
        return reference_anchored_gain(neutral, augmented, reference)
    except DegenerateGap:
        return None


def system_comparison(ctx, config, seed):
    '''
    Objective counterpart of the per-speaker listening tests. For every
    supporting style four systems are scored:

      source     natural test recordings of the supporting speaker
      vc         their conversions to the target voice
      neutral    the neutral-only TTS
      augmented  the pooled TTS with that style's centroid

    The speaker score is the cosine to the target's speaker centroid, the
    style score the spread of voiced log f0. Rel places augmented between
    source and neutral (speaker) and between neutral and vc (style); the
    reference-anchored gain uses the natural source recordings as the
    style reference.
    '''
    target = ctx.manifest.target_speaker
    encoder = ctx.speaker_encoder
    centroid = ctx.speaker_centroids[target]
    iterations = config.synthesis.griffin_lim_iterations

    def speaker_score(mel):
        return cosine(embed_utterance(encoder, mel), centroid)

    def synthesized(directory, entries):
        speaker, style = [], []
        for entry in entries:
            path = os.path.join(directory, entry['stem'])
            speaker.append(speaker_score(MelSpectrogram(frames=read_matrix(path + '.sftf'))))
            style.append(log_f0_spread(estimate_f0(read_wav(path + '.wav', entry['utterance_id']))))
        return _mean(speaker), _mean(style)

    neutral_speaker, neutral_style = synthesized(ctx.path('baseline', 'synthesis'), ctx.baseline_index)
    converted = [item for item in ctx.converted if item.split == 'test']
    rows = OrderedDict()
    for style_label in ctx.manifest.supporting_speakers:
        natural = ctx.manifest.filter(speaker_id=style_label, split='test').utterances
        source_speaker = _mean(speaker_score(ctx.mels[u.utterance_id]) for u in natural)
        source_style = _mean(log_f0_spread(ctx.f0_tracks[u.utterance_id]) for u in natural)
        vc_style = _mean(
            log_f0_spread(estimate_f0(_vocode(MelSpectrogram(frames=read_matrix(ctx.path(item.mel_path))),
                                              iterations, seed, item.utterance_id)))
            for item in converted if item.style_label == style_label)
        augmented_speaker, augmented_style = synthesized(
            ctx.path('synthesis'), [e for e in ctx.synthesis_index if e['style_label'] == style_label])
        rows[style_label] = OrderedDict([
            ('speaker', OrderedDict([
                ('source', source_speaker),
                ('neutral', neutral_speaker),
                ('augmented', augmented_speaker),
                ('rel', _closure(source_speaker, neutral_speaker, augmented_speaker)),
            ])),
            ('style', OrderedDict([
                ('vc', vc_style),
                ('neutral', neutral_style),
                ('augmented', augmented_style),
                ('rel', _closure(neutral_style, vc_style, augmented_style)),
                ('reference', source_style),
                ('reference_gain', _anchored(neutral_style, augmented_style, source_style)),
            ])),
        ])

    def closed(kind, lower, upper):
        usable = [{'lower': row[kind][lower], 'upper': row[kind][upper], 'system': row[kind]['augmented']}
                  for row in rows.values() if row[kind]['rel'] is not None]
        return aggregate_gap_closures(usable) if usable else None

    return OrderedDict([
        ('rows', rows),
        ('speaker_rel_mean', closed('speaker', 'source', 'neutral')),
        ('style_rel_mean', closed('style', 'neutral', 'vc')),
        ('style_reference_gain_mean', _mean(row['style']['reference_gain'] for row in rows.values())),
    ])


def _rounded(value, digits=6):
    if isinstance(value, dict):
        return OrderedDict((k, _rounded(v, digits)) for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return [_rounded(v, digits) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round(float(value), digits) if math.isfinite(value) else None
    return value


def evaluate_artifacts(ctx, config, seed, svg_path=None):
    '''
    Objective evaluation of a finished pipeline run. The result holds no
    paths or timestamps, so equal runs give byte-identical JSON.
    '''
    encoder_header = read_header(ctx.path('spkemb', 'encoder'))
    results = OrderedDict([
        ('seed', config.seed),
        ('alignment', OrderedDict([
            ('log_likelihoods', ctx.align_model.log_likelihoods),
            ('skipped', ctx.align_model.skipped),
        ])),
        ('speaker_encoder', OrderedDict([('monitor_losses', encoder_header.get('monitor_losses'))])),
        ('vc_training', ctx.vc_header.get('training_summary')),
        ('tts_training', ctx.tts_header.get('training_summary')),
        ('conversion', conversion_metrics(ctx, config, seed)),
        ('self_conversion', self_conversion_metrics(ctx, config)),
        ('synthesis', synthesis_metrics(ctx)),
        ('latent_space', latent_metrics(ctx, config, seed, svg_path)),
        ('systems', system_comparison(ctx, config, seed)),
    ])
    return _rounded(results)
