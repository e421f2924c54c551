"""
Storage Contract Module
Runs the upload/download workflow end to end: encryption, fountain coding,
bead synthesis, replica placement, ledger recording, permission checks,
sequencing, consensus, decoding and integrity verification.
"""

import hashlib
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from ..errors import (
    BeadUnavailable, DecodeFailed, DuplicateFile, EmptyBead, EmptyInput, InsufficientDroplets,
    IntegrityMismatch, InvalidInput, NotOwner, PermissionDenied, UnknownFile, UnknownIdentity
)
from .dna_codec import NucleotideSequence, keystream_encrypt, validate_sequence
from .fountain import (
    DEFAULT_OVERHEAD, DEFAULT_SEGMENT_SIZE, DegreeDistribution, ScreenParams, decode,
    droplet_to_oligo, oligo_to_droplet, package_file
)
from .ledger import (
    TX_GRANT, TX_REVOKE, FileRecord, Ledger, TxReason, permission_tx, record_create_tx
)
from .network import Cluster, PlacementPolicy, discard_beads, place_beads, retrieve_bead
from .synthesis import BeadManifest, ErrorModel, consensus_reads, sequence_bead, synthesize

logger = logging.getLogger(__name__)

DEFAULT_BEADS_PER_FILE = 4
DEFAULT_COVERAGE = 5


@dataclass(frozen=True)
class StoreParams:
    segment_size: int = DEFAULT_SEGMENT_SIZE
    overhead: float = DEFAULT_OVERHEAD
    beads_per_file: int = DEFAULT_BEADS_PER_FILE
    replication_factor: int = 3
    error_model: ErrorModel = field(default_factory=ErrorModel)
    coverage: int = DEFAULT_COVERAGE
    encryption_key: Optional[NucleotideSequence] = None
    droplet_seed: int = 0
    placement_seed: int = 0
    screen: Optional[ScreenParams] = field(default_factory=ScreenParams)
    soliton_c: float = 0.1
    soliton_delta: float = 0.05

    def __post_init__(self):
        for name in ('segment_size', 'beads_per_file', 'replication_factor', 'coverage'):
            if getattr(self, name) < 1:
                raise InvalidInput(f'{name} must be positive, got {getattr(self, name)}')
        if self.overhead < 1:
            raise InvalidInput(f'overhead must be >= 1, got {self.overhead}')
        if self.encryption_key is not None:
            validate_sequence(self.encryption_key)

    def distribution(self, K: int) -> DegreeDistribution:
        return DegreeDistribution(K, self.soliton_c, self.soliton_delta)

    def to_dict(self) -> Dict:
        screen = self.screen
        return {
            'segment_size': self.segment_size,
            'overhead': self.overhead,
            'beads_per_file': self.beads_per_file,
            'replication_factor': self.replication_factor,
            'error_model': self.error_model.to_dict(),
            'coverage': self.coverage,
            'droplet_seed': self.droplet_seed,
            'placement_seed': self.placement_seed,
            'screen': None if screen is None else {
                'max_homopolymer': screen.max_homopolymer,
                'gc_min': screen.gc_min,
                'gc_max': screen.gc_max,
            },
            'soliton_c': self.soliton_c,
            'soliton_delta': self.soliton_delta,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'StoreParams':
        data = dict(data)
        data['error_model'] = ErrorModel(**data.get('error_model', {}))
        screen = data.get('screen', {})
        data['screen'] = None if screen is None else ScreenParams(**screen)
        data.pop('encryption_key', None)
        return cls(**data)


@dataclass
class UploadReceipt:
    file_hash: str
    block_index: int
    bead_ids: List[str]
    placement: List[Tuple[str, str]]

    def to_dict(self) -> Dict:
        return {
            'file_hash': self.file_hash,
            'block_index': self.block_index,
            'bead_ids': list(self.bead_ids),
            'placement': [list(p) for p in self.placement],
        }


@dataclass
class DownloadResult:
    data: bytes
    droplets_used: int
    beads_read: List[str] = field(default_factory=list)
    beads_missing: List[str] = field(default_factory=list)


class StorageContract:
    """
    Smart-contract workflow engine over a ledger and a storage cluster.

    Uploads and permission changes run under one writer lock; downloads are
    read-only and may run concurrently.
    """

    def __init__(self, ledger: Ledger, cluster: Cluster, identities: Iterable[str],
                 params: Optional[StoreParams] = None,
                 clock: Callable[[], float] = time.time,
                 on_beads: Optional[Callable[[List], None]] = None,
                 on_discard: Optional[Callable[[List[str]], None]] = None):
        self.ledger = ledger
        self.cluster = cluster
        self.identities = set(identities)
        self.params = params or StoreParams()
        self.clock = clock
        self.on_beads = on_beads
        self.on_discard = on_discard
        self._writer = threading.Lock()

    def _require_identity(self, identity: str) -> None:
        if identity not in self.identities:
            raise UnknownIdentity(f'Identity {identity!r} is not registered')

    # ===================== UPLOAD =====================

    def upload_file(self, owner: str, data: bytes,
                    params: Optional[StoreParams] = None) -> UploadReceipt:
        """Encode, synthesize, place and record a file.

        Returns:
            UploadReceipt with the file hash, recording block and placements

        Raises:
            EmptyInput, UnknownIdentity, DuplicateFile, InsufficientNodes
        """
        params = params or self.params
        if not data:
            raise EmptyInput('Cannot upload an empty file')
        self._require_identity(owner)
        file_hash = hashlib.sha256(data).hexdigest()

        with self._writer:
            try:
                self.ledger.find_record(file_hash)
            except UnknownFile:
                pass
            else:
                raise DuplicateFile(f'File {file_hash} is already recorded')

            payload = data
            if params.encryption_key:
                payload = keystream_encrypt(data, params.encryption_key)

            K = -(-len(data) // params.segment_size)
            package = package_file(
                payload, params.segment_size, params.overhead, params.droplet_seed,
                params.distribution(K), params.screen,
            )
            oligos = [droplet_to_oligo(d) for d in package.droplets]

            bead_count = min(params.beads_per_file, len(oligos))
            manifest = BeadManifest(package.K, package.segment_size, package.original_length)
            beads = [
                synthesize(oligos[j::bead_count], manifest, params.error_model,
                           f'{file_hash[:16]}-b{j}')
                for j in range(bead_count)
            ]
            placement = place_beads(self.cluster, beads,
                                    PlacementPolicy(params.replication_factor),
                                    params.placement_seed)
            try:
                if self.on_beads is not None:
                    self.on_beads(beads)

                record = FileRecord(
                    file_hash=file_hash,
                    owner=owner,
                    timestamp=int(self.clock()),
                    bead_locations=placement,
                    codec_params={
                        'K': package.K,
                        'segment_size': package.segment_size,
                        'original_length': package.original_length,
                        'droplets': len(package.droplets),
                        'encrypted': bool(params.encryption_key),
                        'coverage': params.coverage,
                        'soliton_c': params.soliton_c,
                        'soliton_delta': params.soliton_delta,
                    },
                )
                block = self.ledger.append([record_create_tx(record)], record.timestamp)
            except Exception:
                # No record references these beads; take them back out.
                discard_beads(self.cluster, placement)
                if self.on_discard is not None:
                    self.on_discard([b.bead_id for b in beads])
                logger.warning('Upload of %s for %s failed; discarded %d beads',
                               file_hash[:12], owner, len(beads))
                raise

        logger.info('Uploaded %s for %s: K=%d, %d droplets in %d beads, block %d',
                    file_hash[:12], owner, package.K, len(package.droplets),
                    bead_count, block.index)
        return UploadReceipt(file_hash, block.index, [b.bead_id for b in beads], placement)

    # ===================== DOWNLOAD =====================

    def find_record(self, file_hash: str) -> FileRecord:
        return self.ledger.find_record(file_hash)

    def retrieve_file(self, requester: str, file_hash: str,
                      key: Optional[NucleotideSequence] = None,
                      params: Optional[StoreParams] = None) -> DownloadResult:
        """Sequence, decode, decrypt and verify a recorded file.

        Beads with no reachable replica are skipped; BeadUnavailable is raised
        only when no bead is reachable or decoding fails while one is missing.
        """
        params = params or self.params
        record = self.ledger.find_record(file_hash)
        if not record.can_read(requester):
            raise PermissionDenied(f'{requester!r} may not read {file_hash}')

        codec = record.codec_params
        K, segment_size = codec['K'], codec['segment_size']
        original_length = codec['original_length']
        if codec.get('encrypted') and not key:
            raise IntegrityMismatch(f'File {file_hash[:12]} is encrypted; a key is required')
        dist = DegreeDistribution(K, codec.get('soliton_c', params.soliton_c),
                                  codec.get('soliton_delta', params.soliton_delta))
        coverage = codec.get('coverage', params.coverage)

        bead_ids = list(dict.fromkeys(bead_id for bead_id, _ in record.bead_locations))
        read, missing, droplets = [], [], []
        for bead_id in bead_ids:
            try:
                bead = retrieve_bead(self.cluster, bead_id, record.bead_locations)
                reads = sequence_bead(bead, coverage, params.error_model)
            except (BeadUnavailable, EmptyBead):
                missing.append(bead_id)
                continue
            read.append(bead_id)
            for oligo in consensus_reads(reads, segment_size):
                droplets.append(oligo_to_droplet(oligo, segment_size, dist))

        if not read:
            raise BeadUnavailable(f'No bead of {file_hash[:12]} is reachable')
        try:
            payload = decode(droplets, K, segment_size, original_length, dist)
        except InsufficientDroplets as exc:
            if missing:
                raise BeadUnavailable(
                    f'Beads {", ".join(missing)} unreachable and the rest cannot decode: {exc.message}'
                ) from exc
            raise DecodeFailed(exc.message) from exc

        data = keystream_encrypt(payload, key) if key else payload
        if hashlib.sha256(data).hexdigest() != file_hash:
            raise IntegrityMismatch(f'Decoded bytes do not hash to {file_hash}')
        logger.info('Downloaded %s for %s using %d droplets from %d beads',
                    file_hash[:12], requester, len(droplets), len(read))
        return DownloadResult(data, len(droplets), read, missing)

    def download_file(self, requester: str, file_hash: str,
                      key: Optional[NucleotideSequence] = None) -> bytes:
        return self.retrieve_file(requester, file_hash, key).data

    # ===================== PERMISSIONS =====================

    def _permission(self, kind: str, owner: str, file_hash: str, grantee: str) -> int:
        tx = permission_tx(kind, file_hash, owner, grantee)
        with self._writer:
            ok, reason = self.ledger.validate(tx)
            if reason is TxReason.UNKNOWN_FILE:
                raise UnknownFile(f'File {file_hash} is not recorded')
            if reason is TxReason.NOT_OWNER:
                raise NotOwner(f'{owner!r} does not own {file_hash}')
            if not ok:
                raise InvalidInput(f'Permission change rejected: {reason.value}')
            block = self.ledger.append([tx], int(self.clock()))
        logger.info('%s on %s: %s -> %s at block %d', kind, file_hash[:12], owner, grantee, block.index)
        return block.index

    def grant_permission(self, owner: str, file_hash: str, grantee: str) -> int:
        return self._permission(TX_GRANT, owner, file_hash, grantee)

    def revoke_permission(self, owner: str, file_hash: str, grantee: str) -> int:
        return self._permission(TX_REVOKE, owner, file_hash, grantee)

    def with_key(self, key: Optional[str]) -> StoreParams:
        """Default params carrying an encryption key."""
        return replace(self.params, encryption_key=key or None)
