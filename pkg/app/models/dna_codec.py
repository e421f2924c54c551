"""
DNA Codec Module
Binary <-> nucleotide translation, the CGK factorization routine and
DNA-keyed keystream encryption.

Mapping: A=00, C=01, G=10, T=11, most-significant bit pair first.
"""

import hashlib
import re
from dataclasses import dataclass, field
from math import gcd
from typing import List, Tuple

import numpy as np

from ..errors import (
    EmptyKey, EmptySequence, InvalidInput, InvalidSequence, LengthError, NotFactorable
)

# Validated string over {A, C, G, T}; kept as plain str for speed.
NucleotideSequence = str

ALPHABET = 'ACGT'
DEFAULT_MAX_RETRIES = 16

_VALID = re.compile(r'[ACGT]*')
_TO_DIGITS = str.maketrans('ACGT', '0123')
_PAIR_TO_BASE = {'00': 'A', '01': 'C', '10': 'G', '11': 'T'}
_BYTE_TO_BASES = [
    ''.join(ALPHABET[(b >> shift) & 0b11] for shift in (6, 4, 2, 0))
    for b in range(256)
]


def validate_sequence(seq: str) -> NucleotideSequence:
    """Return seq unchanged if every symbol is A, C, G or T."""
    if not isinstance(seq, str) or _VALID.fullmatch(seq) is None:
        raise InvalidSequence(f'Invalid nucleotide sequence: {str(seq)[:32]!r}')
    return seq


def bytes_to_dna(data: bytes) -> NucleotideSequence:
    """Render each byte as four bases."""
    return ''.join(map(_BYTE_TO_BASES.__getitem__, data))


def dna_to_bytes(seq: NucleotideSequence) -> bytes:
    """Inverse of bytes_to_dna; length must be a multiple of 4."""
    validate_sequence(seq)
    if len(seq) % 4:
        raise LengthError(f'Sequence length {len(seq)} is not a multiple of 4')
    if not seq:
        return b''
    return int(seq.translate(_TO_DIGITS), 4).to_bytes(len(seq) // 4, 'big')


def dna_to_number(seq: NucleotideSequence) -> int:
    """Read the 2-bit groups of seq as one big-endian binary integer."""
    validate_sequence(seq)
    if not seq:
        raise EmptySequence('Cannot convert an empty sequence to a number')
    return int(seq.translate(_TO_DIGITS), 4)


def number_to_dna(value: int) -> NucleotideSequence:
    """
    Render a non-negative integer as bases.

    An odd bit-length is left-padded with one zero bit so the binary string
    splits into pairs. Zero encodes as "A".
    """
    if value < 0:
        raise InvalidInput(f'Cannot encode negative value {value}')
    if value == 0:
        return 'A'
    bits = format(value, 'b')
    if len(bits) % 2:
        bits = '0' + bits
    return ''.join(_PAIR_TO_BASE[bits[i:i + 2]] for i in range(0, len(bits), 2))


# ===================== CGK FACTORIZATION =====================

@dataclass(frozen=True)
class CgkProblem:
    n: int
    M: int

    def __post_init__(self):
        if self.n < 2 or self.M < 1:
            raise InvalidInput(f'CGK problem needs n >= 2 and M >= 1, got n={self.n}, M={self.M}')

    def f(self, x: int) -> int:
        return (x * x + self.M) % self.n


@dataclass
class CgkTrace:
    """Loop variables of every iteration; retries counts M increments."""
    iterations: List[Tuple[int, int, int]] = field(default_factory=list)
    retries: int = 0


@dataclass(frozen=True)
class FactorPair:
    p: int
    q: int
    p_dna: NucleotideSequence
    q_dna: NucleotideSequence


def cgk_factorize(s: NucleotideSequence, M: int = 1,
                  max_retries: int = DEFAULT_MAX_RETRIES) -> Tuple[FactorPair, CgkTrace]:
    """Find non-trivial factors p <= q of the number encoded by s.

    Args:
        s: DNA sequence whose decimal value n is factored
        M: offset of the iteration f(x) = (x^2 + M) mod n
        max_retries: how many times M may be incremented after a d = n run

    Returns:
        (FactorPair, CgkTrace)

    Raises:
        InvalidInput: n < 4 or M < 1
        NotFactorable: every attempt ended with d = n
    """
    n = dna_to_number(s)
    if n < 4:
        raise InvalidInput(f'CGK factorization needs n >= 4, got {n}')
    if M < 1 or max_retries < 1:
        raise InvalidInput('M and max_retries must be positive')

    trace = CgkTrace()
    problem = CgkProblem(n, M)
    while True:
        x = y = 2
        d = 1
        while d == 1:
            x = problem.f(x)
            y = problem.f(problem.f(y))
            d = gcd(abs(x - y), n)
            trace.iterations.append((x, y, d))
        if d != n:
            break
        if trace.retries >= max_retries:
            raise NotFactorable(f'No factor of {n} found after {trace.retries} retries')
        trace.retries += 1
        problem = CgkProblem(n, problem.M + 1)

    p, q = sorted((d, n // d))
    return FactorPair(p, q, number_to_dna(p), number_to_dna(q)), trace


# ===================== KEYSTREAM ENCRYPTION =====================

def key_bytes(key: NucleotideSequence) -> bytes:
    """Key material: the key left-padded with 'A' to whole bytes."""
    validate_sequence(key)
    if not key:
        raise EmptyKey('Encryption key must not be empty')
    padded = 'A' * (-len(key) % 4) + key
    return dna_to_bytes(padded)


def keystream(key: NucleotideSequence, length: int) -> bytes:
    """SHA-256(key ‖ 8-byte big-endian counter) blocks, truncated to length."""
    material = key_bytes(key)
    blocks = (length + 31) // 32
    return b''.join(
        hashlib.sha256(material + i.to_bytes(8, 'big')).digest() for i in range(blocks)
    )[:length]


def keystream_encrypt(data: bytes, key: NucleotideSequence) -> bytes:
    """XOR data with the key's keystream; applying it twice restores data."""
    stream = keystream(key, len(data))
    if not data:
        return b''
    mixed = np.bitwise_xor(
        np.frombuffer(data, dtype=np.uint8),
        np.frombuffer(stream, dtype=np.uint8),
    )
    return mixed.tobytes()
