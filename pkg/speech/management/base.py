from django.core.management.base import BaseCommand, CommandError

from speech.errors import StyleForgeError
from speech.experiment import load_config
from speech.pipeline import run_pipeline


class ConfigCommand(BaseCommand):
    '''A command driven by an experiment config; domain errors become CommandErrors.'''

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, default=None,
                            help='experiment YAML (default: settings.DEFAULT_EXPERIMENT_CONFIG)')

    def handle(self, *args, **options):
        try:
            config = load_config(options.pop('config'))
            self.run(config, **options)
        except StyleForgeError as e:
            raise CommandError('[{}] {}'.format(e.code, e))

    def run(self, config, **options):
        raise NotImplementedError


class StageCommand(ConfigCommand):
    '''Runs pipeline stages through the same markers and lock as run_all.'''
    stages = ()

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--force', action='store_true', help='run even if the stage markers are valid')

    def run(self, config, **options):
        run_pipeline(config, only=self.stages, force=options['force'])
        self.stdout.write(self.style.SUCCESS('{} complete in {}'.format(
            ', '.join(self.stages), config.artifact_dir)))
