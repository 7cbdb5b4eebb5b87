'''
Supporting-data grids. A grid reruns the whole pipeline once per variant of
the `supporting` section and collects the objective system comparison of
every variant into `grid/grid.json` of the base run:

  speakers-N   N supporting speakers sharing the configured total budget
  budget-U     U supporting utterances split across the configured speakers

Each variant is an ordinary run in `grid/<name>/` and resumes like one.
'''
import json
import logging
import os
from collections import OrderedDict

from speech.context import ArtifactContext
from speech.errors import InvalidConfig
from speech.experiment import build_config
from speech.pipeline import GRID_DIR, run_pipeline

logger = logging.getLogger('speech.grid')

GRID_SUMMARY = 'grid.json'
SUMMARY_KEYS = ('speaker_rel_mean', 'style_rel_mean', 'style_reference_gain_mean')


def variant_configs(config, speaker_counts=(), budgets=()):
    '''OrderedDict of variant name -> ExperimentConfig, validated up front.'''
    supporting = OrderedDict()
    for count in speaker_counts:
        supporting['speakers-{}'.format(count)] = {
            'speakers': count, 'total_utterances': config.supporting.total_utterances}
    for total in budgets:
        supporting['budget-{}'.format(total)] = {
            'speakers': config.supporting.speakers, 'total_utterances': total}
    if not supporting:
        raise InvalidConfig('a grid needs at least one speaker count or budget')

    variants = OrderedDict()
    for name, section in supporting.items():
        data = config.to_dict()
        data['supporting'] = section
        data['output_dir'] = os.path.join(config.output_dir, GRID_DIR, name)
        try:
            variants[name] = build_config(data)
        except InvalidConfig as e:
            raise InvalidConfig('grid variant {}: {}'.format(name, e), errors=e.errors)
    return variants


def summarize_variant(root, config):
    systems = ArtifactContext(root).evaluation.get('systems') or {}
    row = OrderedDict([
        ('speakers', config.supporting.speakers),
        ('total_utterances', config.supporting.total_utterances),
        ('per_speaker', config.supporting.per_speaker),
    ])
    for key in SUMMARY_KEYS:
        row[key] = systems.get(key)
    return row


def run_grid(config, speaker_counts=(), budgets=(), force=False):
    '''Run every variant; returns the path of the grid summary.'''
    variants = variant_configs(config, speaker_counts, budgets)
    summary = OrderedDict()
    for name, variant in variants.items():
        logger.info('Grid variant %s: %d speakers x %d utterances', name,
                    variant.supporting.speakers, variant.supporting.per_speaker)
        root = run_pipeline(variant, force=force)
        summary[name] = summarize_variant(root, variant)

    path = os.path.join(config.artifact_dir, GRID_DIR, GRID_SUMMARY)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, 'w') as f:
        json.dump(OrderedDict([('seed', config.seed), ('variants', summary)]), f, indent=2)
    logger.info('Grid summary written to %s', path)
    return path
