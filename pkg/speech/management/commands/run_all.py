from speech.management.base import ConfigCommand
from speech.pipeline import run_pipeline
from speech.report import write_report


class Command(ConfigCommand):
    help = 'Run (or resume) the whole pipeline and write the report'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--force', action='store_true', help='re-run every stage')
        parser.add_argument('--no-report', action='store_true', help='skip the report')

    def run(self, config, **options):
        root = run_pipeline(config, force=options['force'])
        if not options['no_report']:
            write_report(root)
        self.stdout.write(self.style.SUCCESS('Pipeline complete in %s' % root))
