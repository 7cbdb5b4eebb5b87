from django import forms

from speech.corpus import STYLES

STYLE_CHOICES = [(style, style) for style in STYLES]
PROJECTION_CHOICES = [('pca', 'PCA'), ('tsne', 't-SNE')]


class ExperimentForm(forms.Form):
    seed = forms.IntegerField(min_value=0)
    output_dir = forms.CharField(required=False, max_length=500)


class CorpusForm(forms.Form):
    target_utterances = forms.IntegerField(min_value=10)
    styles = forms.MultipleChoiceField(choices=STYLE_CHOICES)


class SupportingForm(forms.Form):
    speakers = forms.IntegerField(min_value=1)
    total_utterances = forms.IntegerField(min_value=1)

    def clean(self):
        cleaned_data = super(SupportingForm, self).clean()
        speakers = cleaned_data.get('speakers')
        total = cleaned_data.get('total_utterances')
        if speakers and total and total % speakers:
            raise forms.ValidationError(
                'Supporting data (%(total)d utterances) must split equally '
                'across %(speakers)d speakers.',
                code='indivisible_budget',
                params={'total': total, 'speakers': speakers},
            )
        return cleaned_data


class AlignForm(forms.Form):
    iterations = forms.IntegerField(min_value=0)


class SpkembForm(forms.Form):
    steps = forms.IntegerField(min_value=0)
    speakers_per_batch = forms.IntegerField(min_value=2)
    utterances_per_speaker = forms.IntegerField(min_value=2)
    segment_frames = forms.IntegerField(min_value=8)
    learning_rate = forms.FloatField(min_value=0)
    log_interval = forms.IntegerField(min_value=1)


class VcForm(forms.Form):
    stage1_steps = forms.IntegerField(min_value=0)
    stage2_steps = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1)
    segment_frames = forms.IntegerField(min_value=8)
    learning_rate = forms.FloatField(min_value=0)
    finetune_learning_rate = forms.FloatField(min_value=0)
    beta = forms.FloatField(min_value=0)
    warmup_fraction = forms.FloatField(min_value=0, max_value=1)
    bottleneck = forms.IntegerField(min_value=1)
    latent_dim = forms.IntegerField(min_value=1)
    log_interval = forms.IntegerField(min_value=1)

    def clean(self):
        cleaned_data = super(VcForm, self).clean()
        segment = cleaned_data.get('segment_frames')
        bottleneck = cleaned_data.get('bottleneck')
        if segment and bottleneck and segment % bottleneck:
            raise forms.ValidationError(
                'segment_frames must be a multiple of the bottleneck factor.',
                code='segment_not_divisible',
            )
        return cleaned_data


class TtsForm(forms.Form):
    steps = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1)
    learning_rate = forms.FloatField(min_value=0)
    beta = forms.FloatField(min_value=0)
    warmup_fraction = forms.FloatField(min_value=0, max_value=1)
    stop_pos_weight = forms.FloatField(min_value=0)
    reduction = forms.IntegerField(min_value=1, max_value=8)
    max_decoder_ratio = forms.IntegerField(min_value=1)
    latent_dim = forms.IntegerField(min_value=1)
    log_interval = forms.IntegerField(min_value=1)


class SynthesisForm(forms.Form):
    griffin_lim_iterations = forms.IntegerField(min_value=1)
    max_sentences = forms.IntegerField(min_value=0)
    strict = forms.BooleanField(required=False)


class EvaluationForm(forms.Form):
    projection = forms.ChoiceField(choices=PROJECTION_CHOICES)
    significance_alpha = forms.FloatField(min_value=0, max_value=1)
    max_conversions = forms.IntegerField(min_value=0)


SECTION_FORMS = {
    'corpus': CorpusForm,
    'supporting': SupportingForm,
    'align': AlignForm,
    'spkemb': SpkembForm,
    'vc': VcForm,
    'tts': TtsForm,
    'synthesis': SynthesisForm,
    'evaluation': EvaluationForm,
}
