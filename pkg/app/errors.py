"""
Error classes shared by the domain models, the REST service and the CLI.

Every error carries the HTTP status the service answers with and the exit
code the CLI terminates with, so both surfaces report a failure the same way.
"""


class EtrusError(Exception):
    """Base class for all storage-system errors."""

    status_code = 500
    exit_code = 1

    def __init__(self, message=None):
        super().__init__(message or self.__class__.__doc__)
        self.message = message or self.__class__.__doc__

    def to_dict(self):
        return {'error': self.__class__.__name__, 'message': self.message}


# ===================== DNA CODEC =====================

class InvalidSequence(EtrusError):
    """Sequence contains symbols outside A, C, G, T."""
    status_code = 400
    exit_code = 20


class LengthError(EtrusError):
    """Sequence length does not match the expected framing."""
    status_code = 400
    exit_code = 21


class EmptySequence(EtrusError):
    """Sequence is empty."""
    status_code = 400
    exit_code = 22


class InvalidInput(EtrusError):
    """Input is outside the accepted range."""
    status_code = 400
    exit_code = 23


class NotFactorable(EtrusError):
    """No non-trivial factor was found within the retry budget."""
    status_code = 422
    exit_code = 24


class EmptyKey(EtrusError):
    """Encryption key is empty."""
    status_code = 400
    exit_code = 25


# ===================== FOUNTAIN / SYNTHESIS =====================

class EmptyInput(EtrusError):
    """Input data is empty."""
    status_code = 400
    exit_code = 10


class InsufficientDroplets(EtrusError):
    """Peeling stalled before every segment was recovered."""
    status_code = 500
    exit_code = 26

    def __init__(self, recovered, total):
        super().__init__(f'Peeling stalled after recovering {recovered} of {total} segments')
        self.recovered = recovered
        self.total = total


class ChecksumMismatch(EtrusError):
    """Oligo failed its CRC-32 check."""
    status_code = 422
    exit_code = 27


class EmptyBead(EtrusError):
    """Bead holds no oligos."""
    status_code = 500
    exit_code = 29


# ===================== LEDGER =====================

class NoStake(EtrusError):
    """Validator set holds no stake."""
    status_code = 500
    exit_code = 31


class InvalidTransaction(EtrusError):
    """Transaction is not valid in its chain context."""
    status_code = 400
    exit_code = 32

    def __init__(self, index, reason):
        super().__init__(f'Transaction {index} rejected: {reason}')
        self.index = index
        self.reason = reason


class StaleChain(EtrusError):
    """Chain failed verification and cannot be extended."""
    status_code = 500
    exit_code = 33


class ChainInvalid(EtrusError):
    """Persisted chain failed verification."""
    status_code = 500
    exit_code = 30


class BlockNotFound(EtrusError):
    """Block height is out of range."""
    status_code = 404
    exit_code = 34


class UnknownFile(EtrusError):
    """File hash is not recorded on the ledger."""
    status_code = 404
    exit_code = 13


class NotOwner(EtrusError):
    """Caller does not own the file record."""
    status_code = 403
    exit_code = 15


# ===================== NETWORK =====================

class InsufficientNodes(EtrusError):
    """Not enough online nodes for the replication factor."""
    status_code = 503
    exit_code = 12


class BeadUnavailable(EtrusError):
    """No listed replica of the bead is reachable."""
    status_code = 503
    exit_code = 16


class UnknownNode(EtrusError):
    """Node id is not part of the cluster."""
    status_code = 404
    exit_code = 19


# ===================== CONTRACT / SERVICE =====================

class DuplicateFile(EtrusError):
    """File hash is already recorded."""
    status_code = 409
    exit_code = 11


class PermissionDenied(EtrusError):
    """Requester may not read this file."""
    status_code = 403
    exit_code = 14


class UnknownIdentity(EtrusError):
    """Identity is not registered."""
    status_code = 403
    exit_code = 35


class DecodeFailed(EtrusError):
    """Fountain decoding could not recover the file."""
    status_code = 500
    exit_code = 17


class IntegrityMismatch(EtrusError):
    """Decoded bytes do not hash to the recorded file hash."""
    status_code = 500
    exit_code = 18


class PayloadTooLarge(EtrusError):
    """Upload exceeds the configured size limit."""
    status_code = 413
    exit_code = 36


def _collect(cls):
    found = {cls.__name__: cls}
    for sub in cls.__subclasses__():
        found.update(_collect(sub))
    return found


ERRORS_BY_NAME = _collect(EtrusError)


def exit_code_for(name):
    """Exit code for an error class name, 1 when the name is unknown."""
    cls = ERRORS_BY_NAME.get(name)
    return cls.exit_code if cls else 1
