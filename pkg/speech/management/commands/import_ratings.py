from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from speech.errors import StyleForgeError
from speech.evaluation import RatingSet
from speech.models import ListeningTest, Rating


class Command(BaseCommand):
    help = 'Replace a listening test\'s ratings with the rows of a CSV (screen_id, listener_id, system, score)'

    def add_arguments(self, parser):
        parser.add_argument('name', nargs=1, type=str)
        parser.add_argument('filename', nargs=1, type=str)
        parser.add_argument('--kind', choices=[k for k, _ in ListeningTest.KIND_CHOICES], default=ListeningTest.STYLE)
        parser.add_argument('--reference', type=str, default='',
                            help='reference style/speaker the screens were judged against')
        parser.add_argument('-y', '--yes', action='store_true', help='do not ask before deleting')

    def handle(self, *args, **options):
        name = options['name'][0]
        try:
            ratings = RatingSet.from_csv(options['filename'][0], name=name, reference=options['reference'])
        except (OSError, StyleForgeError) as e:
            raise CommandError(str(e))

        existing = Rating.objects.filter(test__name=name).count()
        if existing:
            self.stdout.write(self.style.ERROR('These will be deleted:'))
            self.stdout.write(self.style.WARNING('%d ratings of %s' % (existing, name)))
            if not options['yes']:
                input(self.style.ERROR('Enter to continue: '))

        with transaction.atomic():
            test, _ = ListeningTest.objects.update_or_create(
                name=name, defaults={'kind': options['kind'], 'reference': options['reference']})
            test.ratings.all().delete()
            Rating.objects.bulk_create(
                Rating(test=test, screen_id=screen.screen_id, listener_id=screen.listener_id,
                       system=system, score=score)
                for screen in ratings.screens for system, score in screen.scores.items())
        self.stdout.write(self.style.SUCCESS('Imported %d screens of %s' % (len(ratings.screens), name)))
