from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Render the synthetic multi-speaker corpus'
    stages = ('generate',)
