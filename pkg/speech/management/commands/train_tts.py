from speech.management.base import StageCommand


class Command(StageCommand):
    help = 'Train the style-conditioned TTS model and compute style centroids'
    stages = ('tts', 'centroids')
