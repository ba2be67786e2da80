"""Exception hierarchy shared across the pipeline."""


class RiskRagError(Exception):
    """Base class for all library errors."""


class DataError(RiskRagError):
    """Bad or inconsistent input data."""


class EmptyCard(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"{message} (line {line})" if line is not None else message)


class DuplicateId(DataError):
    pass


class InconsistentCounts(DataError):
    pass


class InconsistentIndices(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class EmptyIndex(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateText(DataError):
    pass


class ProviderError(RiskRagError):
    """Failures talking to an embedding / chat-completion backend."""


class ProviderUnavailable(ProviderError):
    pass


class AuthError(ProviderError):
    pass


class SchemaViolation(ProviderError):
    """Provider output did not validate against the declared schema, even after repair retries."""
