"""
On-disk state of a service instance.

Layout under the state directory:
    chain.jsonl                  one canonical block per line
    beads/<bead_id>/oligos.txt   oligo file (header + one oligo per line)
    beads/<bead_id>/manifest.json
    config.json                  ServiceConfig
"""

import json
import logging
import os
import shutil
from pathlib import Path
from typing import Dict, List, Optional

from .config import ServiceConfig
from .errors import ChainInvalid
from .models.contract import StorageContract
from .models.ledger import Block, ChainVerification, Ledger, effective_records, verify_chain_lines
from .models.fountain import read_oligo_file, write_oligo_file
from .models.network import Cluster
from .models.synthesis import Bead, BeadManifest

logger = logging.getLogger(__name__)


def chain_path(state_dir) -> Path:
    return Path(state_dir) / 'chain.jsonl'


def beads_dir(state_dir) -> Path:
    return Path(state_dir) / 'beads'


# ===================== CHAIN =====================

def append_block_line(path: Path, block: Block) -> None:
    """Append one block and fsync so an acknowledged block survives a crash."""
    with open(path, 'ab') as fh:
        fh.write(block.serialize() + b'\n')
        fh.flush()
        os.fsync(fh.fileno())


def read_chain_lines(path: Path) -> List[bytes]:
    content = Path(path).read_bytes()
    lines = content.split(b'\n')
    if lines and lines[-1] == b'':
        lines.pop()
    return lines


def verify_chain_file(path: Path, validators=None) -> ChainVerification:
    """Verify a persisted chain byte-for-byte."""
    path = Path(path)
    if not path.exists():
        return ChainVerification(False, 0, f'{path} does not exist')
    return verify_chain_lines(read_chain_lines(path), validators)


def verify_state_dir(state_dir) -> ChainVerification:
    """Verify a state directory's chain, checking validators when config.json exists."""
    config_file = Path(state_dir) / 'config.json'
    validators = None
    if config_file.exists():
        validators = json.loads(config_file.read_text()).get('validators')
    return verify_chain_file(chain_path(state_dir), validators)


def load_chain(path: Path, validators=None) -> List[Block]:
    """Load and verify chain.jsonl; raises ChainInvalid on any tampering."""
    lines = read_chain_lines(path)
    result = verify_chain_lines(lines, validators)
    if not result.valid:
        raise ChainInvalid(f'{path} invalid at height {result.height}: {result.reason}')
    return [Block.from_dict(json.loads(line)) for line in lines]


# ===================== BEADS =====================

def save_bead(root: Path, bead: Bead) -> None:
    folder = Path(root) / bead.bead_id
    folder.mkdir(parents=True, exist_ok=True)
    m = bead.manifest
    write_oligo_file(folder / 'oligos.txt', bead.oligos, m.K, m.segment_size, m.original_length)
    manifest = dict(m.to_dict(), bead_id=bead.bead_id)
    (folder / 'manifest.json').write_text(json.dumps(manifest, sort_keys=True))


def load_bead(root: Path, bead_id: str) -> Bead:
    folder = Path(root) / bead_id
    oligos, _ = read_oligo_file(folder / 'oligos.txt')
    manifest = json.loads((folder / 'manifest.json').read_text())
    return Bead(
        bead_id=bead_id,
        oligos=tuple(oligos),
        manifest=BeadManifest(manifest['K'], manifest['segment_size'],
                              manifest['original_length'], manifest.get('oligo_count', len(oligos))),
    )


def remove_bead(root: Path, bead_id: str) -> None:
    shutil.rmtree(Path(root) / bead_id, ignore_errors=True)


def load_beads(root: Path) -> Dict[str, Bead]:
    root = Path(root)
    if not root.exists():
        return {}
    return {p.name: load_bead(root, p.name) for p in sorted(root.iterdir()) if p.is_dir()}


# ===================== SERVICE STATE =====================

def open_contract(config: ServiceConfig, clock=None) -> StorageContract:
    """Build the contract for a state directory, replaying whatever is on disk.

    Node holdings are rebuilt from the ledger's recorded placements; online
    flags start from the configured topology.
    """
    state_dir = Path(config.state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    if not config.config_path.exists():
        config.save()

    path = chain_path(state_dir)
    chain: Optional[List[Block]] = load_chain(path, config.validators) if path.exists() else None
    ledger = Ledger(config.validators, chain, on_append=lambda block: append_block_line(path, block))
    if chain is None:
        append_block_line(path, ledger.tip)

    cluster = Cluster.from_topology(config.topology)
    stored = load_beads(beads_dir(state_dir))
    for record in effective_records(ledger.snapshot()).values():
        for bead_id, node_id in record.bead_locations:
            bead = stored.get(bead_id)
            if bead is not None and node_id in cluster.nodes:
                cluster.nodes[node_id].beads[bead_id] = bead

    def persist_beads(beads):
        for bead in beads:
            save_bead(beads_dir(state_dir), bead)

    def drop_beads(bead_ids):
        for bead_id in bead_ids:
            remove_bead(beads_dir(state_dir), bead_id)

    kwargs = {'clock': clock} if clock is not None else {}
    logger.info('Opened state %s at height %d with %d beads', state_dir, ledger.height, len(stored))
    return StorageContract(ledger, cluster, config.identities, config.params,
                           on_beads=persist_beads, on_discard=drop_beads, **kwargs)
