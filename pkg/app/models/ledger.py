"""
Ledger Module
Append-only hash-linked chain of file records and permission changes, with
stake-weighted (proof-of-stake) validator selection and full verification.
"""

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..errors import BlockNotFound, InvalidTransaction, NoStake, StaleChain, UnknownFile
from ..utils import canonical_json, sha256_hex

logger = logging.getLogger(__name__)

ZERO_HASH = '0' * 64
GENESIS_VALIDATOR = 'genesis'

TX_CREATE = 'record-create'
TX_GRANT = 'permission-grant'
TX_REVOKE = 'permission-revoke'


class TxReason(str, Enum):
    OK = 'OK'
    DUPLICATE_FILE = 'DuplicateFile'
    UNKNOWN_FILE = 'UnknownFile'
    NOT_OWNER = 'NotOwner'
    MALFORMED = 'Malformed'


@dataclass(frozen=True)
class Validator:
    id: str
    stake: int


@dataclass
class FileRecord:
    file_hash: str
    owner: str
    timestamp: int
    bead_locations: List[Tuple[str, str]]
    permissions: set = field(default_factory=set)
    codec_params: Dict = field(default_factory=dict)

    def can_read(self, identity: str) -> bool:
        return identity == self.owner or identity in self.permissions

    def to_dict(self) -> Dict:
        return {
            'file_hash': self.file_hash,
            'owner': self.owner,
            'timestamp': self.timestamp,
            'bead_locations': [list(pair) for pair in self.bead_locations],
            'permissions': sorted(self.permissions),
            'codec_params': dict(self.codec_params),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> 'FileRecord':
        return cls(
            file_hash=data['file_hash'],
            owner=data['owner'],
            timestamp=int(data['timestamp']),
            bead_locations=[tuple(pair) for pair in data['bead_locations']],
            permissions=set(data.get('permissions', [])),
            codec_params=dict(data.get('codec_params', {})),
        )


def record_create_tx(record: FileRecord) -> Dict:
    return {'type': TX_CREATE, 'record': record.to_dict()}


def permission_tx(kind: str, file_hash: str, issuer: str, grantee: str) -> Dict:
    return {'type': kind, 'file_hash': file_hash, 'issuer': issuer, 'grantee': grantee}


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: str
    timestamp: int
    validator: str
    transactions: Tuple = ()
    block_hash: str = ''

    def header(self) -> Dict:
        return {
            'index': self.index,
            'prev_hash': self.prev_hash,
            'timestamp': self.timestamp,
            'validator': self.validator,
            'transactions': list(self.transactions),
        }

    def compute_hash(self) -> str:
        return sha256_hex(canonical_json(self.header()))

    def to_dict(self) -> Dict:
        data = self.header()
        data['block_hash'] = self.block_hash
        return data

    def serialize(self) -> bytes:
        """Canonical bytes of the whole block, one chain.jsonl line."""
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> 'Block':
        return cls(
            index=data['index'],
            prev_hash=data['prev_hash'],
            timestamp=data['timestamp'],
            validator=data['validator'],
            transactions=tuple(data['transactions']),
            block_hash=data['block_hash'],
        )

    @classmethod
    def seal(cls, index, prev_hash, timestamp, validator, transactions) -> 'Block':
        unsealed = cls(index, prev_hash, timestamp, validator, tuple(transactions))
        return cls(index, prev_hash, timestamp, validator, tuple(transactions),
                   unsealed.compute_hash())


@dataclass(frozen=True)
class ChainVerification:
    valid: bool
    height: Optional[int] = None
    reason: str = ''

    def to_dict(self) -> Dict:
        return {'valid': self.valid, 'height': self.height, 'reason': self.reason}


def genesis() -> Block:
    return Block.seal(0, ZERO_HASH, 0, GENESIS_VALIDATOR, ())


# ===================== VALIDATOR SELECTION =====================

def _as_validators(validators) -> List[Validator]:
    if isinstance(validators, Mapping):
        return [Validator(k, int(v)) for k, v in validators.items()]
    return list(validators)


def select_validator(validators, prev_block_hash: str) -> str:
    """Pick the validator owning stake unit t mod total_stake.

    t is the first 8 bytes of SHA-256 over the previous block hash, read
    big-endian. Stake units are laid out in id order.
    """
    ordered = sorted(_as_validators(validators), key=lambda v: v.id)
    total = sum(v.stake for v in ordered)
    if total <= 0:
        raise NoStake('Validator set holds no stake')
    t = int.from_bytes(hashlib.sha256(prev_block_hash.encode('utf-8')).digest()[:8], 'big')
    unit = t % total
    for v in ordered:
        if unit < v.stake:
            return v.id
        unit -= v.stake
    raise NoStake('Stake walk ended without a validator')


# ===================== TRANSACTIONS =====================

def _fold(transactions: Iterable[Mapping], records: Dict[str, FileRecord]) -> None:
    for tx in transactions:
        kind = tx.get('type')
        if kind == TX_CREATE:
            record = FileRecord.from_dict(tx['record'])
            records[record.file_hash] = record
        elif kind == TX_GRANT:
            records[tx['file_hash']].permissions.add(tx['grantee'])
        elif kind == TX_REVOKE:
            records[tx['file_hash']].permissions.discard(tx['grantee'])


def effective_records(chain: Sequence[Block]) -> Dict[str, FileRecord]:
    """Every record with grants and revokes folded in chain order."""
    records: Dict[str, FileRecord] = {}
    for block in chain:
        _fold(block.transactions, records)
    return records


def _check(records: Mapping[str, FileRecord], tx: Mapping) -> TxReason:
    if not isinstance(tx, Mapping):
        return TxReason.MALFORMED
    kind = tx.get('type')
    if kind == TX_CREATE:
        record = tx.get('record')
        if not isinstance(record, Mapping):
            return TxReason.MALFORMED
        try:
            parsed = FileRecord.from_dict(record)
        except (KeyError, TypeError, ValueError):
            return TxReason.MALFORMED
        if not isinstance(parsed.file_hash, str) or len(parsed.file_hash) != 64:
            return TxReason.MALFORMED
        if parsed.file_hash in records:
            return TxReason.DUPLICATE_FILE
        return TxReason.OK
    if kind in (TX_GRANT, TX_REVOKE):
        if not all(isinstance(tx.get(k), str) for k in ('file_hash', 'issuer', 'grantee')):
            return TxReason.MALFORMED
        record = records.get(tx['file_hash'])
        if record is None:
            return TxReason.UNKNOWN_FILE
        if tx['issuer'] != record.owner:
            return TxReason.NOT_OWNER
        return TxReason.OK
    return TxReason.MALFORMED


def validate_transaction(chain: Sequence[Block], tx: Mapping,
                         pending: Sequence[Mapping] = ()) -> Tuple[bool, TxReason]:
    """Check tx against the chain plus earlier transactions of the same batch."""
    records = effective_records(chain)
    _fold(pending, records)
    reason = _check(records, tx)
    return reason is TxReason.OK, reason


# ===================== CHAIN =====================

def verify_chain(chain: Sequence[Block], validators=None) -> ChainVerification:
    """Recompute hashes, links and transaction validity block by block.

    With a validator set, each block must also name the validator that
    select_validator picks for its predecessor.
    """
    records: Dict[str, FileRecord] = {}
    prev_hash = None
    for height, block in enumerate(chain):
        if block.index != height:
            return ChainVerification(False, height, f'index {block.index} at height {height}')
        if block.compute_hash() != block.block_hash:
            return ChainVerification(False, height, 'block hash does not recompute')
        if height == 0:
            if block != genesis():
                return ChainVerification(False, 0, 'genesis block differs')
        elif block.prev_hash != prev_hash:
            return ChainVerification(False, height, 'prev_hash does not link to predecessor')
        elif validators is not None and block.validator != select_validator(validators, prev_hash):
            return ChainVerification(False, height, 'validator was not selected by stake')
        for i, tx in enumerate(block.transactions):
            reason = _check(records, tx)
            if reason is not TxReason.OK:
                return ChainVerification(False, height, f'transaction {i}: {reason.value}')
            _fold((tx,), records)
        prev_hash = block.block_hash
    if not chain:
        return ChainVerification(False, 0, 'chain is empty')
    return ChainVerification(True)


def verify_chain_lines(lines: Sequence[bytes], validators=None) -> ChainVerification:
    """Verify persisted chain lines, requiring each to be canonical bytes."""
    chain = []
    for height, line in enumerate(lines):
        try:
            block = Block.from_dict(json.loads(line.decode('ascii')))
        except (UnicodeDecodeError, ValueError, KeyError, TypeError, AttributeError):
            return ChainVerification(False, height, 'line does not parse as a block')
        try:
            canonical = block.serialize()
        except (TypeError, ValueError):
            return ChainVerification(False, height, 'block does not serialize')
        if canonical != line:
            return ChainVerification(False, height, 'line is not canonical serialization')
        chain.append(block)
    return verify_chain(chain, validators)


def append_block(chain: List[Block], transactions: Sequence[Mapping], validators,
                 timestamp: int) -> Block:
    """Validate transactions, seal them into a block on the tip and append it."""
    if not verify_chain(chain).valid:
        raise StaleChain('Chain failed verification; refusing to extend it')
    accepted = []
    for i, tx in enumerate(transactions):
        ok, reason = validate_transaction(chain, tx, accepted)
        if not ok:
            raise InvalidTransaction(i, reason.value)
        accepted.append(tx)

    tip = chain[-1]
    block = Block.seal(tip.index + 1, tip.block_hash, int(timestamp),
                       select_validator(validators, tip.block_hash), accepted)
    chain.append(block)
    return block


def find_record(chain: Sequence[Block], file_hash: str) -> FileRecord:
    record = effective_records(chain).get(file_hash)
    if record is None:
        raise UnknownFile(f'File {file_hash} is not recorded')
    return record


class Ledger:
    """
    Single-writer wrapper around a chain.

    Appends are serialized through one lock and reported to `on_append`
    (used to persist chain.jsonl); readers work on snapshots. The record
    index is folded incrementally so lookups do not replay the chain.
    """

    def __init__(self, validators, chain: Optional[List[Block]] = None,
                 on_append: Optional[Callable[[Block], None]] = None):
        self.validators = _as_validators(validators)
        if sum(v.stake for v in self.validators) <= 0:
            raise NoStake('Validator set holds no stake')
        self._chain = list(chain) if chain else [genesis()]
        self._on_append = on_append
        self._lock = threading.RLock()
        self._records = effective_records(self._chain)

    @property
    def height(self) -> int:
        return len(self._chain) - 1

    @property
    def tip(self) -> Block:
        return self._chain[-1]

    def snapshot(self) -> List[Block]:
        with self._lock:
            return list(self._chain)

    def block(self, index: int) -> Block:
        chain = self.snapshot()
        if not 0 <= index < len(chain):
            raise BlockNotFound(f'Block {index} is out of range (height {len(chain) - 1})')
        return chain[index]

    def verify(self) -> ChainVerification:
        return verify_chain(self.snapshot(), self.validators)

    def validate(self, tx: Mapping) -> Tuple[bool, TxReason]:
        with self._lock:
            reason = _check(self._records, tx)
        return reason is TxReason.OK, reason

    def append(self, transactions: Sequence[Mapping], timestamp: int) -> Block:
        with self._lock:
            staged = list(self._chain)
            block = append_block(staged, transactions, self.validators, timestamp)
            if self._on_append is not None:
                self._on_append(block)
            self._chain = staged
            _fold(block.transactions, self._records)
        logger.info('Appended block %d (%d transactions, validator %s)',
                    block.index, len(block.transactions), block.validator)
        return block

    def find_record(self, file_hash: str) -> FileRecord:
        with self._lock:
            record = self._records.get(file_hash)
            if record is None:
                raise UnknownFile(f'File {file_hash} is not recorded')
            return FileRecord.from_dict(record.to_dict())

    def records(self) -> List[FileRecord]:
        with self._lock:
            return [FileRecord.from_dict(r.to_dict()) for r in self._records.values()]
