import json
import os

from django.core.management.base import CommandError

from speech.evaluation import summarize_stored_tests
from speech.management.base import StageCommand
from speech.models import ListeningTest


class Command(StageCommand):
    help = 'Compute the objective evaluation of a run, plus statistics of stored listening tests'
    stages = ('evaluate',)

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--listening-test', dest='listening_tests', action='append', default=[],
                            metavar='NAME', help='stored listening test to summarize (repeatable)')

    def run(self, config, **options):
        super().run(config, **options)
        names = options['listening_tests']
        if not names:
            return
        tests = list(ListeningTest.objects.filter(name__in=names).order_by('name'))
        missing = sorted(set(names) - {test.name for test in tests})
        if missing:
            raise CommandError('No listening test named %s' % ', '.join(missing))
        summary = summarize_stored_tests(tests, alpha=config.evaluation.significance_alpha)
        path = os.path.join(config.artifact_dir, 'listening_tests.json')
        with open(path, 'w') as f:
            json.dump(summary, f, indent=2)
            f.write('\n')
        self.stdout.write(self.style.SUCCESS('Summarized %d listening tests into %s' % (len(tests), path)))
