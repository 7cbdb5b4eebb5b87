from speech.management.base import ConfigCommand
from speech.report import write_report


class Command(ConfigCommand):
    help = 'Render the Markdown/HTML report of an evaluated run'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--artifact-dir', type=str, default=None,
                            help='artifact directory (default: the config\'s output_dir)')

    def run(self, config, **options):
        paths = write_report(options['artifact_dir'] or config.artifact_dir)
        self.stdout.write(self.style.SUCCESS('Wrote %s' % paths['markdown']))
