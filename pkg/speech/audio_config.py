# Front-end constants shared by every module that reads or writes features.
# They come from settings so an environment can override them.
# They are not part of the experiment config: features cached by one run are
# only reusable by another run with identical values.
from django.conf import settings

SAMPLE_RATE = settings.SAMPLE_RATE
# 12.5 ms at 16 kHz
HOP_LENGTH = settings.HOP_LENGTH
WIN_LENGTH = settings.WIN_LENGTH
N_FFT = settings.WIN_LENGTH
N_MELS = settings.N_MELS
N_MFCC = settings.N_MFCC
MEL_FMIN = 0.0
MEL_FMAX = SAMPLE_RATE / 2

# Natural-log magnitudes are clamped at log(LOG_FLOOR).
LOG_FLOOR = settings.LOG_FLOOR

F0_MIN = settings.F0_MIN
F0_MAX = settings.F0_MAX
# Normalized autocorrelation peak needed to call a frame voiced.
VOICING_THRESHOLD = settings.VOICING_THRESHOLD

GRIFFIN_LIM_ITERATIONS = 60
