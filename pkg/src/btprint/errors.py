class BtprintError(Exception):
    """Base class for every error raised by this package."""


# capture parsing
class ParseError(BtprintError):
    pass


class BadMagic(ParseError):
    pass


class UnsupportedVersion(ParseError):
    pass


class UnsupportedDatalink(ParseError):
    pass


class TruncatedRecord(ParseError):
    def __init__(self, offset: int, message: str = ""):
        self.offset = offset
        super().__init__(message or f"truncated record at byte offset {offset}")


class SchemaError(ParseError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


# features
class InsufficientData(BtprintError):
    pass


# learners
class DegenerateDataset(BtprintError):
    pass


class DimensionMismatch(BtprintError):
    pass


class FilterMismatch(BtprintError):
    pass


# selection
class TooFewSessions(BtprintError):
    pass


class NoValidCells(BtprintError):
    pass


class EmptyDataset(BtprintError):
    pass


# synth
class InvalidProfile(BtprintError):
    pass
