"""
Fountain Coding Module
Fragments files into segments, produces Luby-transform droplets with a robust
soliton degree distribution, frames droplets as DNA oligos and decodes them
with a peeling decoder.
"""

import logging
import math
import re
import struct
import zlib
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import (
    ChecksumMismatch, EmptyInput, InsufficientDroplets, InvalidInput, InvalidSequence, LengthError
)
from ..utils import XorShift64
from .dna_codec import NucleotideSequence, bytes_to_dna, dna_to_bytes

logger = logging.getLogger(__name__)

DEFAULT_SEGMENT_SIZE = 32
DEFAULT_OVERHEAD = 1.7
SEED_BYTES = 4
CRC_BYTES = 4
MAX_SCREEN_REJECTIONS = 16


@dataclass(frozen=True)
class Segment:
    index: int
    payload: bytes


@dataclass(frozen=True)
class Droplet:
    seed: int
    degree: int
    payload: bytes
    checksum: int

    @classmethod
    def build(cls, seed: int, degree: int, payload: bytes) -> 'Droplet':
        return cls(seed, degree, payload, droplet_checksum(seed, payload))

    def verify(self) -> bool:
        return self.checksum == droplet_checksum(self.seed, self.payload)


def droplet_checksum(seed: int, payload: bytes) -> int:
    """CRC-32 (reflected 0xEDB88320) over seed ‖ payload."""
    return zlib.crc32(struct.pack('>I', seed) + payload) & 0xFFFFFFFF


@dataclass(frozen=True)
class DegreeDistribution:
    """Robust soliton distribution over degrees 1..K."""

    K: int
    c: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        if self.K < 1:
            raise InvalidInput(f'Segment count must be positive, got {self.K}')
        if self.c <= 0 or not 0 < self.delta < 1:
            raise InvalidInput(f'Invalid robust soliton parameters c={self.c}, delta={self.delta}')

    @cached_property
    def probabilities(self) -> np.ndarray:
        """Probability of each degree; index 0 is degree 1."""
        K = self.K
        if K == 1:
            return np.ones(1)
        degrees = np.arange(1, K + 1, dtype=float)

        rho = np.empty(K)
        rho[0] = 1.0 / K
        rho[1:] = 1.0 / (degrees[1:] * (degrees[1:] - 1))

        R = self.c * math.log(K / self.delta) * math.sqrt(K)
        spike = min(K, max(1, int(K / R)))
        tau = np.zeros(K)
        if spike > 1:
            tau[:spike - 1] = R / (degrees[:spike - 1] * K)
        tau[spike - 1] = max(0.0, R * math.log(R / self.delta) / K)

        mu = rho + tau
        return mu / mu.sum()

    @cached_property
    def cdf(self) -> List[float]:
        cumulative = np.cumsum(self.probabilities)
        cumulative[-1] = 1.0
        return cumulative.tolist()

    def sample(self, u: float) -> int:
        """Degree for a uniform draw u in [0, 1)."""
        return min(bisect_left(self.cdf, u) + 1, self.K)


@dataclass(frozen=True)
class ScreenParams:
    max_homopolymer: int = 5
    gc_min: float = 0.3
    gc_max: float = 0.7

    def accepts(self, seq: NucleotideSequence) -> bool:
        return screen_oligo(seq, self.max_homopolymer, self.gc_min, self.gc_max)


@dataclass
class FilePackage:
    original_length: int
    segment_size: int
    K: int
    droplets: List[Droplet] = field(default_factory=list)


# ===================== PEELING =====================

class PeelingState:
    """Incremental peeling decoder.

    Droplets are reduced against recovered segments as they arrive; a droplet
    left with one unknown segment recovers it and the ripple continues from
    there. The recovered set does not depend on arrival order.
    """

    def __init__(self, K: int):
        self.K = K
        self.recovered: List[Optional[int]] = [None] * K
        self.found = 0
        self._values: List[int] = []
        self._neighbours: List[set] = []
        self._holders: Dict[int, List[int]] = {}

    @property
    def complete(self) -> bool:
        return self.found == self.K

    @property
    def missing(self) -> int:
        return self.K - self.found

    def unknown_among(self, indices: Iterable[int]) -> int:
        return sum(1 for i in indices if self.recovered[i] is None)

    def add(self, indices: Iterable[int], value: int) -> int:
        """Add one droplet; returns the number of segments it newly recovered."""
        before = self.found
        unknown = set()
        for i in indices:
            if self.recovered[i] is None:
                unknown.add(i)
            else:
                value ^= self.recovered[i]
        if not unknown:
            return 0

        j = len(self._values)
        self._values.append(value)
        self._neighbours.append(unknown)
        for i in unknown:
            self._holders.setdefault(i, []).append(j)
        if len(unknown) == 1:
            self._ripple(j)
        return self.found - before

    def _ripple(self, start: int) -> None:
        ripple = deque([start])
        while ripple:
            j = ripple.popleft()
            neighbours = self._neighbours[j]
            if len(neighbours) != 1:
                continue
            (i,) = neighbours
            neighbours.clear()
            if self.recovered[i] is not None:
                continue
            value = self._values[j]
            self.recovered[i] = value
            self.found += 1
            for other in self._holders.pop(i, ()):
                if i in self._neighbours[other]:
                    self._neighbours[other].discard(i)
                    self._values[other] ^= value
                    if len(self._neighbours[other]) == 1:
                        ripple.append(other)


# ===================== FRAGMENT / ENCODE =====================

def fragment(data: bytes, segment_size: int = DEFAULT_SEGMENT_SIZE) -> Tuple[List[Segment], int]:
    """Split data into zero-padded segments of segment_size bytes."""
    if not data:
        raise EmptyInput('Cannot fragment empty data')
    if segment_size < 1:
        raise InvalidInput(f'Segment size must be positive, got {segment_size}')
    K = -(-len(data) // segment_size)
    padded = bytes(data) + b'\x00' * (K * segment_size - len(data))
    segments = [
        Segment(i, padded[i * segment_size:(i + 1) * segment_size]) for i in range(K)
    ]
    return segments, len(data)


def droplet_indices(seed: int, K: int, dist: DegreeDistribution) -> Tuple[int, Tuple[int, ...]]:
    """Degree and sorted segment indices selected by a droplet seed."""
    rng = XorShift64(seed)
    degree = dist.sample(rng.random())
    if degree >= K:
        return K, tuple(range(K))

    # Rejection-sample the smaller of the chosen set and its complement.
    want = degree if degree <= K // 2 else K - degree
    picked = set()
    while len(picked) < want:
        picked.add(rng.randbelow(K))
    if want != degree:
        picked = set(range(K)) - picked
    return degree, tuple(sorted(picked))


def encode_droplets(segments: Sequence[Segment], count: int, rng_seed: int,
                    dist: Optional[DegreeDistribution] = None,
                    screen: Optional[ScreenParams] = None,
                    complete: bool = True) -> List[Droplet]:
    """Generate `count` droplets from the segments.

    Droplet seeds are drawn as 32-bit values from a generator seeded with
    rng_seed; repeated seeds are skipped.

    With `complete` set and count >= K, the encoder peels its own output as it
    goes. Once the free slots left equal the segments still unknown, only
    droplets that recover a new segment are kept, so the full set always
    decodes. With `complete` off the output is the plain Luby-transform stream.

    With `screen` set, droplets whose oligo fails the screen are discarded and
    the next seed is tried, except:
        - a degree-1 droplet whose payload fails the screen on its own is kept,
          since every seed selecting that segment carries the same payload
        - after MAX_SCREEN_REJECTIONS consecutive rejections the next candidate
          is kept unscreened
    """
    if not segments:
        raise EmptyInput('Cannot encode an empty segment list')
    if count < 1:
        raise InvalidInput(f'Droplet count must be positive, got {count}')
    K = len(segments)
    dist = dist or DegreeDistribution(K)
    if dist.K != K:
        raise InvalidInput(f'Distribution covers {dist.K} segments, file has {K}')

    segment_size = len(segments[0].payload)
    values = [int.from_bytes(s.payload, 'big') for s in segments]
    master = XorShift64(rng_seed)
    peeler = PeelingState(K) if complete and count >= K else None
    used = set()
    droplets = []
    rejected = unscreened = streak = 0

    while len(droplets) < count:
        seed = master.next() & 0xFFFFFFFF
        if seed in used:
            continue
        used.add(seed)

        degree, indices = droplet_indices(seed, K, dist)
        closing = (peeler is not None and not peeler.complete
                   and count - len(droplets) <= peeler.missing)
        if closing and peeler.unknown_among(indices) != 1:
            continue

        value = 0
        for i in indices:
            value ^= values[i]
        droplet = Droplet.build(seed, degree, value.to_bytes(segment_size, 'big'))

        if screen is not None and not screen.accepts(droplet_to_oligo(droplet)):
            if degree == 1 and not screen.accepts(bytes_to_dna(droplet.payload)):
                unscreened += 1
            elif streak < MAX_SCREEN_REJECTIONS:
                streak += 1
                rejected += 1
                continue
            else:
                unscreened += 1
        streak = 0
        droplets.append(droplet)
        if peeler is not None and not peeler.complete:
            peeler.add(indices, value)

    if rejected or unscreened:
        logger.debug('Screen rejected %d droplets and passed %d unscreened while encoding %d',
                     rejected, unscreened, count)
    return droplets


def package_file(data: bytes, segment_size: int = DEFAULT_SEGMENT_SIZE,
                 overhead: float = DEFAULT_OVERHEAD, rng_seed: int = 0,
                 dist: Optional[DegreeDistribution] = None,
                 screen: Optional[ScreenParams] = None,
                 complete: bool = True) -> FilePackage:
    """Fragment and fountain-encode a whole file with ceil(overhead * K) droplets."""
    if overhead < 1:
        raise InvalidInput(f'Overhead factor must be >= 1, got {overhead}')
    segments, original_length = fragment(data, segment_size)
    K = len(segments)
    count = math.ceil(overhead * K)
    droplets = encode_droplets(segments, count, rng_seed, dist, screen, complete)
    return FilePackage(original_length, segment_size, K, droplets)


# ===================== DECODE =====================

def decode(droplets: Sequence[Droplet], K: int, segment_size: int, original_length: int,
           dist: Optional[DegreeDistribution] = None) -> bytes:
    """Peel degree-1 droplets until every segment is recovered."""
    dist = dist or DegreeDistribution(K)
    for droplet in droplets:
        if len(droplet.payload) != segment_size:
            raise LengthError(f'Droplet payload is {len(droplet.payload)} bytes, expected {segment_size}')

    state = PeelingState(K)
    for droplet in droplets:
        _, indices = droplet_indices(droplet.seed, K, dist)
        state.add(indices, int.from_bytes(droplet.payload, 'big'))
        if state.complete:
            break

    if not state.complete:
        raise InsufficientDroplets(state.found, K)
    data = b''.join(v.to_bytes(segment_size, 'big') for v in state.recovered)
    return data[:original_length]


# ===================== OLIGO FRAMING =====================

def oligo_length(segment_size: int) -> int:
    return 4 * (SEED_BYTES + segment_size + CRC_BYTES)


def droplet_to_oligo(d: Droplet) -> NucleotideSequence:
    """seed(4B) ‖ payload ‖ CRC-32(4B), big-endian, as bases."""
    return bytes_to_dna(struct.pack('>I', d.seed) + d.payload + struct.pack('>I', d.checksum))


def _split_frame(seq: NucleotideSequence, segment_size: int) -> Tuple[int, bytes, int]:
    if len(seq) != oligo_length(segment_size):
        raise LengthError(f'Oligo has {len(seq)} bases, expected {oligo_length(segment_size)}')
    raw = dna_to_bytes(seq)
    seed = int.from_bytes(raw[:SEED_BYTES], 'big')
    checksum = int.from_bytes(raw[-CRC_BYTES:], 'big')
    return seed, raw[SEED_BYTES:-CRC_BYTES], checksum


def oligo_crc_ok(seq: NucleotideSequence, segment_size: int) -> bool:
    """True when seq has the framing length and its CRC verifies."""
    try:
        seed, payload, checksum = _split_frame(seq, segment_size)
    except (LengthError, InvalidSequence):
        return False
    return checksum == droplet_checksum(seed, payload)


def oligo_to_droplet(seq: NucleotideSequence, segment_size: int,
                     dist: DegreeDistribution) -> Droplet:
    """Parse and CRC-check an oligo; the degree is re-derived from the seed."""
    seed, payload, checksum = _split_frame(seq, segment_size)
    if checksum != droplet_checksum(seed, payload):
        raise ChecksumMismatch(f'Oligo with seed {seed:#010x} failed its CRC check')
    degree, _ = droplet_indices(seed, dist.K, dist)
    return Droplet(seed, degree, payload, checksum)


_RUNS: Dict[int, 're.Pattern'] = {}


def screen_oligo(seq: NucleotideSequence, max_homopolymer: int,
                 gc_min: float, gc_max: float) -> bool:
    """True iff no homopolymer exceeds max_homopolymer and GC fraction is in range."""
    pattern = _RUNS.get(max_homopolymer)
    if pattern is None:
        pattern = _RUNS[max_homopolymer] = re.compile(r'(.)\1{%d,}' % max(max_homopolymer, 0))
    if seq and pattern.search(seq):
        return False
    gc = (seq.count('G') + seq.count('C')) / len(seq) if seq else 0.0
    return gc_min <= gc <= gc_max


# ===================== OLIGO FILES =====================

def write_oligo_file(path, oligos: Sequence[NucleotideSequence], K: int,
                     segment_size: int, original_length: int) -> None:
    """Write the header line followed by one oligo per line."""
    lines = [f'#K={K} SEG={segment_size} LEN={original_length}']
    lines.extend(oligos)
    Path(path).write_text('\n'.join(lines) + '\n', encoding='ascii')


_HEADER = re.compile(r'#K=(\d+) SEG=(\d+) LEN=(\d+)')


def read_oligo_file(path) -> Tuple[List[NucleotideSequence], Dict[str, int]]:
    """Read an oligo file; returns (oligos, {'K', 'segment_size', 'original_length'})."""
    lines = Path(path).read_text(encoding='ascii').split('\n')
    match = _HEADER.fullmatch(lines[0].strip()) if lines else None
    if match is None:
        raise InvalidInput(f'Oligo file {path} has no valid header line')
    header = {
        'K': int(match.group(1)),
        'segment_size': int(match.group(2)),
        'original_length': int(match.group(3)),
    }
    oligos = [line.strip() for line in lines[1:] if line.strip()]
    return oligos, header
