"""Exception hierarchy shared by every vulloc module."""


class VullocError(Exception):
    """Base class for all domain errors raised by this package."""


# --- front end ---

class LexError(VullocError):
    def __init__(self, message, line, col):
        super().__init__(f"{message} at line {line}, col {col}")
        self.line = line
        self.col = col


class UnterminatedString(LexError):
    pass


class IllegalCharacter(LexError):
    pass


class ParseError(VullocError):
    """Syntax error with the set of token texts that would have been accepted."""

    def __init__(self, message, line, col, expected=()):
        detail = f"{message} at line {line}, col {col}"
        if expected:
            detail += " (expected one of: " + ", ".join(sorted(expected)) + ")"
        super().__init__(detail)
        self.line = line
        self.col = col
        self.expected = frozenset(expected)


class UnsupportedConstruct(ParseError):
    pass


# --- code graph ---

class GraphTooLarge(VullocError):
    pass


class LineNotFound(VullocError):
    pass


class MalformedRecord(VullocError):
    pass


class SchemaVersionMismatch(VullocError):
    pass


# --- vocabulary / embeddings ---

class EmptyCorpus(VullocError):
    pass


# --- tensor math ---

class ShapeMismatch(VullocError):
    pass


class NonFiniteValue(VullocError):
    pass


# --- models ---

class SequenceTooLong(VullocError):
    pass


class EmptyScoreVector(VullocError):
    pass


class CheckpointError(VullocError):
    pass


# --- ensemble ---

class LengthMismatch(VullocError):
    pass


class EmptyEnsemble(VullocError):
    pass


class MemberMismatch(VullocError):
    """Ensemble members disagree on schema version or embedding fingerprint."""


# --- pipeline ---

class TooFewSamples(VullocError):
    pass


class EmptyTrainSet(VullocError):
    pass


class NonFiniteLoss(VullocError):
    pass


class VocabMismatch(VullocError):
    pass


# --- evaluation ---

class EmptyRecordSet(VullocError):
    pass


# --- data generation ---

class InvalidSpec(VullocError):
    pass
