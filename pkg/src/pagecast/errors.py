"""Exception types shared across the pipeline."""


class PagecastError(Exception):
    """Base class for all pagecast errors."""


# --- ingest ---------------------------------------------------------------

class DuplicateBookId(PagecastError):
    pass


class InvalidBookId(PagecastError):
    pass


class UndecodableBytes(PagecastError):
    pass


# --- featurizer -----------------------------------------------------------

class EmptyCorpus(PagecastError):
    pass


class DimensionMismatch(PagecastError):
    pass


# --- clusterer ------------------------------------------------------------

class KTooLarge(PagecastError):
    pass


class TooFewPoints(PagecastError):
    pass


# --- normalizer -----------------------------------------------------------

class RuleSetParseError(PagecastError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RulePassLimitExceeded(PagecastError):
    pass


# --- script builder -------------------------------------------------------

class EmptyBook(PagecastError):
    pass


class EmptyVoicePool(PagecastError):
    pass


class UnmappedVoice(PagecastError):
    pass


# --- synthesis ------------------------------------------------------------

class MalformedSsml(PagecastError):
    pass


class MalformedAudio(PagecastError):
    pass


class AudioTooShort(PagecastError):
    pass


class MixedSampleRates(PagecastError):
    pass


class BackendError(PagecastError):
    pass


class AuthFailed(BackendError):
    pass


class BackendRejectedSsml(BackendError):
    pass


class Exhausted(BackendError):
    pass


class Timeout(BackendError):
    pass


# --- orchestrator ---------------------------------------------------------

class ConfigInvalid(PagecastError):
    pass


class CorpusEmpty(PagecastError):
    pass


class FingerprintMismatch(PagecastError):
    pass
