from speech.grid import run_grid
from speech.management.base import ConfigCommand


class Command(ConfigCommand):
    help = 'Run the pipeline once per supporting-data variant and summarize the gap closures'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--speakers', type=int, nargs='*', default=[1, 4, 8],
                            help='supporting speaker counts sharing the configured budget')
        parser.add_argument('--budgets', type=int, nargs='*', default=[],
                            help='total supporting utterances, split across the configured speakers')
        parser.add_argument('--force', action='store_true', help='re-run every stage of every variant')

    def run(self, config, **options):
        path = run_grid(config, options['speakers'], options['budgets'], force=options['force'])
        self.stdout.write(self.style.SUCCESS('Grid complete: %s' % path))
