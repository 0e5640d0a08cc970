"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CpmidecError(Exception):
    """Base class for all package errors."""


# -- corpus ---------------------------------------------------------------


class CorpusError(CpmidecError):
    pass


class EmptyCorpus(CorpusError):
    pass


class UnknownToken(CorpusError):
    def __init__(self, token: str):
        super().__init__(f"token not in vocabulary: {token!r}")
        self.token = token


class ReservedToken(CorpusError):
    def __init__(self, token: str):
        super().__init__(f"reserved marker may not appear in text: {token!r}")
        self.token = token


class InvalidSpan(CorpusError):
    pass


class ParseError(CorpusError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# -- models ---------------------------------------------------------------


class ModelError(CpmidecError):
    pass


class UncoveredPrefix(ModelError):
    pass


class VocabMismatch(CpmidecError):
    pass


class BridgeError(ModelError):
    pass


class BridgeIO(BridgeError):
    pass


class BridgeTimeout(BridgeError):
    pass


class ProtocolViolation(BridgeError):
    pass


# -- scoring / decoding ---------------------------------------------------


class MissingMarginal(CpmidecError):
    pass


class InvalidToken(CpmidecError):
    pass


class InvalidBeam(CpmidecError):
    pass


class InstanceTooLarge(CpmidecError):
    pass


# -- evaluation / tuning --------------------------------------------------


class MissingLabels(CpmidecError):
    pass


class SweepAborted(CpmidecError):
    def __init__(self, lam: float, tau: float, cause: Exception):
        super().__init__(f"trial lambda={lam} tau={tau} failed: {cause}")
        self.lam = lam
        self.tau = tau
        self.cause = cause
