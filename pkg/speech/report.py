'''
Markdown/HTML report of a finished run.

Tables are assembled here as plain header/row lists and laid out by
`speech/report.md`; the HTML version is the same Markdown rendered through
the `markdown` template filter. Nothing time- or path-dependent goes into
either file, so a fixed artifact directory always gives the same bytes.
'''
import json
import logging
import os
import shutil
from collections import OrderedDict

from django.template.loader import render_to_string

from speech.corpus import NEUTRAL
from speech.errors import ReportError
from speech.evaluation import reproduce_published_tables
from speech.templatetags.report_tags import fixed, percent, plus_minus

logger = logging.getLogger('speech.report')

SVG_NAME = 'latent_space.svg'


def _table(title, header, rows, description='', note=''):
    return {'title': title, 'header': header, 'rows': rows, 'description': description, 'note': note}


def published_tables():
    published = reproduce_published_tables()
    tables = []
    for key, title in (('supporting_speaker_count', 'Number of supporting speakers'),
                       ('supporting_data_amount', 'Amount of supporting data')):
        table = published[key]
        metrics = list(table['scores'])
        systems = list(OrderedDict.fromkeys(s for metric in metrics for s in table['scores'][metric]))
        rows = []
        for system in systems:
            row = [system]
            for metric in metrics:
                score = table['scores'][metric].get(system)
                row.append(plus_minus(*score) if score else '')
            row.append(fixed(table['rel'][system]) if system in table['rel'] else '')
            rows.append(row)
        tables.append(_table(
            title, ['System'] + [m.capitalize() for m in metrics] + ['Rel (%)'], rows,
            description=table['description'],
            note='Mean Rel {} (printed {}); anchors: {} = 0, {} = 100.'.format(
                fixed(table['mean_rel']), table['published'], table['lower'], table['upper'])))

    per_speaker = published['per_speaker']
    rows = []
    for row in per_speaker['rows']:
        speaker, style = row['speaker'], row['style']
        rows.append([
            row['locale'], row['gender'],
            fixed(speaker['source']), fixed(speaker['neutral']), fixed(speaker['augmented']),
            fixed(speaker['computed']), fixed(speaker['rel']),
            fixed(style['vc']), fixed(style['neutral']), fixed(style['augmented']),
            fixed(style['computed']), fixed(style['rel']),
        ])
    tables.append(_table(
        'Per target speaker',
        ['Locale', 'Gender', 'Spk: source', 'Spk: neutral', 'Spk: augmented', 'Spk Rel', 'printed',
         'Style: VC', 'Style: neutral', 'Style: augmented', 'Style Rel', 'printed'],
        rows,
        note='Mean speaker Rel {}, mean style Rel {}, reference-anchored style gain {} '
             '(printed {}, {}, {}).'.format(
                 fixed(per_speaker['speaker_rel_mean']), fixed(per_speaker['style_rel_mean']),
                 fixed(per_speaker['style_reference_gain_mean']), per_speaker['published']['speaker_rel_mean'],
                 per_speaker['published']['style_rel_mean'], per_speaker['published']['style_reference_gain_mean'])))

    perceived = published['perceived_style']
    tables.append(_table(
        'Perceived style (share of screens, %)',
        ['Centroid \\ Reference'] + perceived['references'],
        [[name] + [fixed(v) for v in values] for name, values in zip(perceived['centroids'], perceived['percent'])],
        note='Column totals: {}.'.format(', '.join(fixed(v) for v in perceived['column_totals']))))
    return tables


def run_tables(evaluation):
    conversion = evaluation['conversion']
    tables = [_table('Voice conversion (held-out supporting utterances)', ['Metric', 'Value'], [
        ['Conversions', conversion['count']],
        ['Duration preserved', percent(conversion['duration_preserved_rate'])],
        ['Target f0 mean (Hz)', fixed(conversion['target_f0_mean_hz'])],
        ['f0 mean abs. error (Hz)', fixed(conversion['f0_mean_abs_error_hz'])],
        ['f0 mean within tolerance', percent(conversion['f0_within_tolerance_rate'])],
        ['Source/output log-f0 correlation', fixed(conversion['contour_correlation_mean'], 3)],
        ['Similarity to target', fixed(conversion['similarity_to_target_mean'], 3)],
        ['Similarity to source', fixed(conversion['similarity_to_source_mean'], 3)],
        ['Closer to target than source', percent(conversion['speaker_similarity_win_rate'])],
    ])]
    self_conversion = evaluation['self_conversion']
    tables.append(_table('Target self-conversion', ['Metric', 'Value'], [
        ['Utterances', self_conversion['count']],
        ['Mel L1', fixed(self_conversion['l1_mean'], 4)],
        ['Reconstruction L1', fixed(self_conversion.get('reconstruction_l1_mean'), 4)],
        ['MCD (dB)', fixed(self_conversion['mcd_mean_db'])],
    ]))
    training = [['Speaker encoder monitor loss', ' -> '.join(
        fixed(v, 4) for v in (evaluation['speaker_encoder']['monitor_losses'] or []))]]
    for key, label in (('vc_training', 'VC'), ('tts_training', 'TTS')):
        summary = evaluation.get(key) or {}
        training.append(['{} monitor L1'.format(label), '{} -> {} (mean-frame baseline {})'.format(
            fixed(summary.get('monitor_l1_initial'), 4), fixed(summary.get('monitor_l1_final'), 4),
            fixed(summary.get('mean_frame_l1'), 4))])
    likelihoods = evaluation['alignment']['log_likelihoods']
    if likelihoods:
        training.append(['Alignment log-likelihood', '{} -> {}'.format(fixed(likelihoods[0]),
                                                                        fixed(likelihoods[-1]))])
    tables.append(_table('Training', ['Quantity', 'Value'], training))
    return tables


def style_tables(evaluation):
    synthesis = evaluation['synthesis']
    latent = evaluation['latent_space']
    variance = synthesis.get('log_f0_variance', {})
    rows = [[label, latent['style_counts'].get(label, 0), fixed(variance.get(label), 4)]
            for label in latent['style_counts']]
    tables = [_table('Style centroids', ['Style', 'Training items', 'Synthesized log-f0 variance'], rows, note=(
        'Synthesized sentences: {}; stopped before the length cap: {}; expressive centroid more varied '
        'than neutral: {}; k-means purity of z-vectors: {}.'.format(
            synthesis['count'], percent(synthesis.get('termination_rate')),
            percent(synthesis.get('expressive_over_neutral_win_rate')), fixed(latent['purity'], 3))))]
    systems = system_table(evaluation)
    return tables + [systems] if systems else tables


def system_table(evaluation):
    systems = evaluation.get('systems')
    if not systems:
        return None
    rows = []
    for label, row in systems['rows'].items():
        speaker, style = row['speaker'], row['style']
        rows.append([
            label,
            fixed(speaker['source'], 3), fixed(speaker['neutral'], 3), fixed(speaker['augmented'], 3),
            fixed(speaker['rel']),
            fixed(style['vc'], 4), fixed(style['neutral'], 4), fixed(style['augmented'], 4),
            fixed(style['rel']), fixed(style['reference'], 4),
        ])
    return _table(
        'Systems per supporting style',
        ['Style', 'Spk: source', 'Spk: neutral', 'Spk: augmented', 'Spk Rel',
         'Style: VC', 'Style: neutral', 'Style: augmented', 'Style Rel', 'Style: source'],
        rows,
        description='Speaker score: cosine to the target centroid. Style score: spread of voiced log f0.',
        note='Mean speaker Rel {}, mean style Rel {}, reference-anchored style gain {}.'.format(
            fixed(systems['speaker_rel_mean']), fixed(systems['style_rel_mean']),
            fixed(systems['style_reference_gain_mean'])))


def listening_tables(listening):
    tables = []
    for name, test in listening.items():
        if test['kind'] == 'perceived_style':
            tables.append(_table(
                'Perceived style (stored)', ['Centroid \\ Reference'] + test['references'],
                [[s] + [fixed(v) for v in values] for s, values in zip(test['systems'], test['percent'])],
                note='Ambiguous screens: {}.'.format(len(test['ambiguous']))))
            continue
        rows = [[system, plus_minus(v['mean'], v['ci95'])] for system, v in test['systems'].items()]
        tables.append(_table('{} ({})'.format(name, test['kind']), ['System', 'MUSHRA'], rows, note='; '.join(
            '{} vs {}: p = {}{}'.format(p['a'], p['b'], fixed(p['p_adjusted'], 4), ' *' if p['reject'] else '')
            for p in test['pairs'])))
    return tables


def write_report(artifact_dir, out_dir=None):
    '''Render report.md, report.html and the latent plot into `out_dir`.'''
    artifact_dir = os.path.abspath(artifact_dir)
    out_dir = out_dir or os.path.join(artifact_dir, 'report')
    try:
        with open(os.path.join(artifact_dir, 'evaluation.json')) as f:
            evaluation = json.load(f, object_pairs_hook=OrderedDict)
    except OSError as e:
        raise ReportError('{} has no evaluation results: {}'.format(artifact_dir, e))
    except ValueError as e:
        raise ReportError('evaluation.json is not valid JSON: {}'.format(e))
    try:
        with open(os.path.join(artifact_dir, 'listening_tests.json')) as f:
            listening = json.load(f, object_pairs_hook=OrderedDict)
    except OSError:
        listening = OrderedDict()

    os.makedirs(out_dir, exist_ok=True)
    svg = os.path.join(artifact_dir, SVG_NAME)
    has_plot = os.path.exists(svg)
    if has_plot:
        shutil.copyfile(svg, os.path.join(out_dir, SVG_NAME))

    styles = list((evaluation.get('latent_space') or {}).get('style_counts') or ())
    try:
        context = {
            'seed': evaluation['seed'],
            'expressive': [s for s in styles if s != NEUTRAL],
            'run_tables': run_tables(evaluation),
            'style_tables': style_tables(evaluation) if styles else [],
            'listening_tables': listening_tables(listening),
            'published_tables': published_tables(),
            'plot': SVG_NAME if has_plot else '',
        }
    except KeyError as e:
        raise ReportError('evaluation.json lacks {}'.format(e))
    markdown_text = render_to_string('speech/report.md', context)
    html = render_to_string('speech/report.html', {'body': markdown_text})
    paths = {'markdown': os.path.join(out_dir, 'report.md'), 'html': os.path.join(out_dir, 'report.html')}
    with open(paths['markdown'], 'w') as f:
        f.write(markdown_text)
    with open(paths['html'], 'w') as f:
        f.write(html)
    logger.info('Report written to %s', out_dir)
    return paths
