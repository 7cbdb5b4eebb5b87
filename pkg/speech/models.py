from django.core.validators import MaxValueValidator, MinValueValidator
from django.db import models
from django.utils.translation import gettext as _


class ListeningTest(models.Model):
    '''One MUSHRA-like listening test, e.g. speaker similarity against the target.'''

    NATURALNESS = 'naturalness'
    SPEAKER = 'speaker'
    STYLE = 'style'
    PERCEIVED_STYLE = 'perceived_style'
    KIND_CHOICES = (
        (NATURALNESS, _('Naturalness')),
        (SPEAKER, _('Speaker similarity')),
        (STYLE, _('Style similarity')),
        (PERCEIVED_STYLE, _('Perceived style')),
    )

    name = models.CharField(max_length=255, unique=True, verbose_name=_('Name'))
    kind = models.CharField(max_length=32, choices=KIND_CHOICES, default=STYLE, verbose_name=_('Kind'))
    reference = models.CharField(
        max_length=255, blank=True, verbose_name=_('Reference'),
        help_text=_('Speaker or style of the reference sample, if the test has one'))
    created = models.DateTimeField(auto_now_add=True, verbose_name=_('Created'))

    class Meta:
        verbose_name = _('listening test')
        verbose_name_plural = _('listening tests')
        ordering = ['name']

    def __str__(self):
        return self.name


class Rating(models.Model):
    test = models.ForeignKey(ListeningTest, related_name='ratings', on_delete=models.CASCADE)
    screen_id = models.CharField(max_length=255, verbose_name=_('Screen'))
    listener_id = models.CharField(max_length=255, verbose_name=_('Listener'))
    system = models.CharField(max_length=255, verbose_name=_('System'))
    score = models.FloatField(
        validators=[MinValueValidator(0.0), MaxValueValidator(100.0)], verbose_name=_('Score'))

    class Meta:
        verbose_name = _('rating')
        verbose_name_plural = _('ratings')
        constraints = [
            models.UniqueConstraint(fields=['test', 'screen_id', 'system'], name='unique_screen_system'),
        ]

    def __str__(self):
        return '%s %s %s: %s' % (self.test.name, self.screen_id, self.system, self.score)
