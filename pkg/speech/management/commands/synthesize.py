from speech.management.base import StageCommand
from speech.pipeline import synthesize_text


class Command(StageCommand):
    help = 'Synthesize the target test sentences with every style centroid, or one ad-hoc sentence'
    stages = ('synthesize',)

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--text', type=str, default=None,
                            help='phone string to synthesize instead of the test set, e.g. "# m \'a n #"')
        parser.add_argument('--style', type=str, default=None,
                            help='style centroid label for --text (default: every centroid)')

    def run(self, config, **options):
        if options['text'] is None:
            return super().run(config, **options)
        for path in synthesize_text(config, options['text'], options['style']):
            self.stdout.write(self.style.SUCCESS('Wrote %s' % path))
