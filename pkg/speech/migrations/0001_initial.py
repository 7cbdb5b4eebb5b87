import django.core.validators
from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ListeningTest',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255, unique=True, verbose_name='Name')),
                ('kind', models.CharField(choices=[('naturalness', 'Naturalness'), ('speaker', 'Speaker similarity'), ('style', 'Style similarity'), ('perceived_style', 'Perceived style')], default='style', max_length=32, verbose_name='Kind')),
                ('reference', models.CharField(blank=True, help_text='Speaker or style of the reference sample, if the test has one', max_length=255, verbose_name='Reference')),
                ('created', models.DateTimeField(auto_now_add=True, verbose_name='Created')),
            ],
            options={
                'verbose_name': 'listening test',
                'verbose_name_plural': 'listening tests',
                'ordering': ['name'],
            },
        ),
        migrations.CreateModel(
            name='Rating',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('screen_id', models.CharField(max_length=255, verbose_name='Screen')),
                ('listener_id', models.CharField(max_length=255, verbose_name='Listener')),
                ('system', models.CharField(max_length=255, verbose_name='System')),
                ('score', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(100.0)], verbose_name='Score')),
                ('test', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='ratings', to='speech.listeningtest')),
            ],
            options={
                'verbose_name': 'rating',
                'verbose_name_plural': 'ratings',
            },
        ),
        migrations.AddConstraint(
            model_name='rating',
            constraint=models.UniqueConstraint(fields=('test', 'screen_id', 'system'), name='unique_screen_system'),
        ),
    ]
