'''
Exceptions raised by the speech pipeline.

Every error carries a short machine-readable `code`, in the same spirit as
Django's ValidationError(message, code=...), so callers (management commands,
tests, the pipeline runner) can branch on the kind of failure without parsing
messages.
'''


class StyleForgeError(Exception):
    code = 'error'

    def __init__(self, message='', code=None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code


class InvalidInput(StyleForgeError):
    code = 'invalid_input'


class InvalidConfig(StyleForgeError):
    code = 'invalid_config'

    def __init__(self, message='', errors=None):
        super().__init__(message)
        # {section: {field: [messages]}}
        self.errors = errors or {}


class UndefinedSpeakerMean(StyleForgeError):
    code = 'undefined_speaker_mean'


class ManifestError(StyleForgeError):
    code = 'manifest_error'

    def __init__(self, message='', record=None):
        super().__init__(message)
        self.record = record


class PoolError(StyleForgeError):
    code = 'pool_error'


class MissingPhone(StyleForgeError):
    code = 'missing_phone'


class AlignmentInfeasible(StyleForgeError):
    code = 'alignment_infeasible'

    def __init__(self, message='', utterance_id=None):
        super().__init__(message)
        self.utterance_id = utterance_id


class InvalidBatch(StyleForgeError):
    code = 'invalid_batch'


class NormZero(StyleForgeError):
    code = 'norm_zero'


class DataError(StyleForgeError):
    code = 'data_error'

    def __init__(self, message='', utterance_ids=()):
        super().__init__(message)
        self.utterance_ids = tuple(utterance_ids)


class SynthesisRunaway(StyleForgeError):
    code = 'synthesis_runaway'

    def __init__(self, message='', result=None):
        super().__init__(message)
        self.result = result


class InsufficientData(StyleForgeError):
    code = 'insufficient_data'


class DegenerateGap(StyleForgeError):
    code = 'degenerate_gap'


class MalformedScreen(StyleForgeError):
    code = 'malformed_screen'

    def __init__(self, message='', screen_id=None):
        super().__init__(message)
        self.screen_id = screen_id


class DegenerateInput(StyleForgeError):
    code = 'degenerate_input'


class ReportError(StyleForgeError):
    code = 'report_error'


class StageError(StyleForgeError):
    code = 'stage_error'

    def __init__(self, stage, cause):
        super().__init__('stage {!r} failed: {}'.format(stage, cause))
        self.stage = stage
        self.cause = cause


class PipelineLocked(StyleForgeError):
    code = 'pipeline_locked'
