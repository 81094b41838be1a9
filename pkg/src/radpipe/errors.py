"""Exception types shared across the pipeline."""


class RadpipeError(ValueError):
    """Base class for data errors raised by radpipe (CLI exit code 2)."""


class LexiconError(RadpipeError):
    pass


class CorpusError(RadpipeError):
    pass


class ModelFormatError(RadpipeError):
    pass
