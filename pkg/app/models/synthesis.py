"""
Synthesis Simulation Module
Simulates writing oligos into glass beads, sequencing them back with a
substitution/dropout error model, and recovering oligos by read consensus.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import EmptyBead, InvalidInput
from ..utils import XorShift64, derive_seed
from .dna_codec import ALPHABET, NucleotideSequence
from .fountain import SEED_BYTES, oligo_crc_ok, oligo_length

logger = logging.getLogger(__name__)

_INDEX = {base: i for i, base in enumerate(ALPHABET)}
_CODES = np.frombuffer(ALPHABET.encode('ascii'), dtype=np.uint8)


@dataclass(frozen=True)
class ErrorModel:
    substitution_rate: float = 0.0
    oligo_dropout_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ('substitution_rate', 'oligo_dropout_rate'):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise InvalidInput(f'{name} must be in [0, 1], got {rate}')

    def to_dict(self) -> Dict:
        return {
            'substitution_rate': self.substitution_rate,
            'oligo_dropout_rate': self.oligo_dropout_rate,
            'rng_seed': self.rng_seed,
        }


@dataclass(frozen=True)
class BeadManifest:
    K: int
    segment_size: int
    original_length: int
    oligo_count: int = 0

    def to_dict(self) -> Dict:
        return {
            'K': self.K,
            'segment_size': self.segment_size,
            'original_length': self.original_length,
            'oligo_count': self.oligo_count,
        }


@dataclass(frozen=True)
class Bead:
    bead_id: str
    oligos: Tuple[NucleotideSequence, ...]
    manifest: BeadManifest


@dataclass
class ReadSet:
    reads: List[NucleotideSequence] = field(default_factory=list)
    coverage: int = 1


def substitute(seq: NucleotideSequence, rate: float, rng: XorShift64) -> NucleotideSequence:
    """Independently replace each base with a different one at the given rate.

    Error positions are found by geometric skipping, one draw per error.
    """
    if rate <= 0.0 or not seq:
        return seq
    bases = bytearray(seq, 'ascii')
    if rate >= 1.0:
        positions = range(len(bases))
    else:
        positions = _error_positions(len(bases), rate, rng)
    for pos in positions:
        old = _INDEX[chr(bases[pos])]
        bases[pos] = ord(ALPHABET[(old + 1 + rng.randbelow(3)) % 4])
    return bases.decode('ascii')


def _error_positions(length: int, rate: float, rng: XorShift64) -> List[int]:
    log_keep = math.log1p(-rate)
    positions = []
    pos = -1
    while True:
        u = rng.random()
        pos += 1 + int(math.log1p(-u) / log_keep)
        if pos >= length:
            return positions
        positions.append(pos)


def synthesize(oligos: Sequence[NucleotideSequence], manifest: BeadManifest,
               model: ErrorModel, bead_id: str) -> Bead:
    """Write oligos into a bead, applying dropout and synthesis substitutions."""
    lengths = {len(o) for o in oligos}
    if len(lengths) > 1:
        raise InvalidInput(f'Oligos of one bead must share a length, got {sorted(lengths)}')

    stored = []
    for i, oligo in enumerate(oligos):
        rng = XorShift64(derive_seed(model.rng_seed, bead_id, 'synth', i))
        if model.oligo_dropout_rate > 0 and rng.random() < model.oligo_dropout_rate:
            continue
        stored.append(substitute(oligo, model.substitution_rate, rng))

    if len(stored) < len(oligos):
        logger.debug('Bead %s lost %d of %d oligos in synthesis', bead_id,
                     len(oligos) - len(stored), len(oligos))
    return Bead(
        bead_id=bead_id,
        oligos=tuple(stored),
        manifest=BeadManifest(manifest.K, manifest.segment_size,
                              manifest.original_length, len(stored)),
    )


def sequence_bead(bead: Bead, coverage: int, model: ErrorModel) -> ReadSet:
    """Emit `coverage` noisy reads of every stored oligo.

    Reads are ordered read-index-major, so the stream for a lower coverage
    is a prefix of the stream for a higher one.
    """
    if coverage < 1:
        raise InvalidInput(f'Coverage must be >= 1, got {coverage}')
    if not bead.oligos:
        raise EmptyBead(f'Bead {bead.bead_id} holds no oligos')

    reads = []
    for r in range(coverage):
        for i, oligo in enumerate(bead.oligos):
            if model.substitution_rate <= 0:
                reads.append(oligo)
                continue
            rng = XorShift64(derive_seed(model.rng_seed, bead.bead_id, 'read', i, r))
            reads.append(substitute(oligo, model.substitution_rate, rng))
    return ReadSet(reads=reads, coverage=coverage)


def _majority(reads: Sequence[NucleotideSequence]) -> NucleotideSequence:
    """Per-position majority vote; ties resolve in A < C < G < T order."""
    if len(set(reads)) == 1:
        return reads[0]
    stacked = np.frombuffer(''.join(reads).encode('ascii'), dtype=np.uint8)
    stacked = stacked.reshape(len(reads), -1)
    counts = np.stack([(stacked == code).sum(axis=0) for code in _CODES])
    return _CODES[counts.argmax(axis=0)].tobytes().decode('ascii')


def consensus_reads(rs: ReadSet, segment_size: int) -> List[NucleotideSequence]:
    """Group reads by their seed field and vote one consensus oligo per group.

    A group with at least one CRC-passing read votes over those reads only;
    otherwise all of its reads vote and the result must pass CRC to be kept.
    """
    expected = oligo_length(segment_size)
    seed_bases = 4 * SEED_BYTES
    groups: Dict[str, Tuple[List[str], List[str]]] = {}

    for read in rs.reads:
        if len(read) != expected:
            continue
        passing, failing = groups.setdefault(read[:seed_bases], ([], []))
        (passing if oligo_crc_ok(read, segment_size) else failing).append(read)

    consensus = []
    dropped = 0
    for passing, failing in groups.values():
        if passing:
            consensus.append(_majority(passing))
            continue
        voted = _majority(failing)
        if oligo_crc_ok(voted, segment_size):
            consensus.append(voted)
        else:
            dropped += 1

    if dropped:
        logger.debug('Consensus discarded %d of %d read groups', dropped, len(groups))
    return consensus
