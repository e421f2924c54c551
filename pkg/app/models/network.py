"""
Network Simulation Module
Storage-node cluster holding beads with rendezvous-hash replica placement,
fault injection and redundancy auditing.
"""

import hashlib
import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..errors import BeadUnavailable, InsufficientNodes, InvalidInput, UnknownNode
from .ledger import Block, effective_records
from .synthesis import Bead

logger = logging.getLogger(__name__)

DEFAULT_REPLICATION = 3


@dataclass
class NodeState:
    node_id: str
    online: bool = True
    beads: Dict[str, Bead] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {'node_id': self.node_id, 'online': self.online, 'beads': sorted(self.beads)}


@dataclass(frozen=True)
class PlacementPolicy:
    replication_factor: int = DEFAULT_REPLICATION

    def __post_init__(self):
        if self.replication_factor < 1:
            raise InvalidInput(f'Replication factor must be positive, got {self.replication_factor}')


class Cluster:
    """
    Simulated storage nodes.

    Mutations (place, fail, restore) are serialized through one lock; reads
    see the state at the time they take it.
    """

    def __init__(self, nodes: Iterable[NodeState] = ()):
        self.nodes: Dict[str, NodeState] = {}
        self.lock = threading.RLock()
        for node in nodes:
            self.nodes[node.node_id] = node

    @classmethod
    def from_topology(cls, topology: Sequence) -> 'Cluster':
        """Build from a list of node ids or {'node_id', 'online'} entries."""
        nodes = []
        for entry in topology:
            if isinstance(entry, Mapping):
                nodes.append(NodeState(str(entry['node_id']), bool(entry.get('online', True))))
            else:
                nodes.append(NodeState(str(entry)))
        return cls(nodes)

    def node(self, node_id: str) -> NodeState:
        node = self.nodes.get(node_id)
        if node is None:
            raise UnknownNode(f'Node {node_id} is not part of the cluster')
        return node

    def online_ids(self) -> List[str]:
        return [n.node_id for n in self.nodes.values() if n.online]

    def snapshot(self) -> List[Dict]:
        with self.lock:
            return [self.nodes[k].to_dict() for k in sorted(self.nodes)]


def rendezvous_score(bead_id: str, node_id: str, placement_seed: int) -> int:
    material = (bead_id.encode('utf-8') + b'\x00' + node_id.encode('utf-8') + b'\x00'
                + (placement_seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, 'big'))
    return int.from_bytes(hashlib.sha256(material).digest(), 'big')


def rank_nodes(bead_id: str, node_ids: Iterable[str], placement_seed: int) -> List[str]:
    """Node ids ordered by descending rendezvous score, ties by id."""
    return sorted(node_ids, key=lambda n: (-rendezvous_score(bead_id, n, placement_seed), n))


def place_beads(cluster: Cluster, beads: Sequence[Bead], policy: PlacementPolicy,
                placement_seed: int = 0) -> List[Tuple[str, str]]:
    """Store each bead on the top-r online nodes by rendezvous score.

    Placing a bead a node already holds is a no-op, which makes this the
    manual re-place call for under-replicated beads.
    """
    r = policy.replication_factor
    placement = []
    with cluster.lock:
        online = cluster.online_ids()
        if len(online) < r:
            raise InsufficientNodes(f'{len(online)} online nodes, replication factor {r}')
        for bead in beads:
            for node_id in rank_nodes(bead.bead_id, online, placement_seed)[:r]:
                node = cluster.nodes[node_id]
                held = node.beads.get(bead.bead_id)
                if held is not None and held != bead:
                    raise InvalidInput(f'Node {node_id} already holds different content for {bead.bead_id}')
                node.beads[bead.bead_id] = bead
                placement.append((bead.bead_id, node_id))
    logger.info('Placed %d beads with replication %d', len(beads), r)
    return placement


def discard_beads(cluster: Cluster, placement: Iterable[Tuple[str, str]]) -> None:
    """Drop the listed (bead, node) replicas; undoes place_beads."""
    dropped = 0
    with cluster.lock:
        for bead_id, node_id in placement:
            node = cluster.nodes.get(node_id)
            if node is not None and node.beads.pop(bead_id, None) is not None:
                dropped += 1
    logger.info('Discarded %d bead replicas', dropped)


def retrieve_bead(cluster: Cluster, bead_id: str,
                  locations: Iterable[Tuple[str, str]]) -> Bead:
    """Return the bead from the first listed online node that holds it."""
    with cluster.lock:
        for listed_bead, node_id in locations:
            if listed_bead != bead_id:
                continue
            node = cluster.nodes.get(node_id)
            if node is None or not node.online:
                continue
            bead = node.beads.get(bead_id)
            if bead is not None:
                return bead
    raise BeadUnavailable(f'No online replica of bead {bead_id}')


def fail_node(cluster: Cluster, node_id: str) -> Cluster:
    with cluster.lock:
        cluster.node(node_id).online = False
    logger.info('Node %s marked offline', node_id)
    return cluster


def restore_node(cluster: Cluster, node_id: str) -> Cluster:
    with cluster.lock:
        cluster.node(node_id).online = True
    logger.info('Node %s restored', node_id)
    return cluster


@dataclass
class BeadAudit:
    bead_id: str
    file_hash: str
    hosts: List[str]
    live: int
    required: int

    @property
    def flagged(self) -> bool:
        return self.live < self.required

    def to_dict(self) -> Dict:
        return {
            'bead_id': self.bead_id,
            'file_hash': self.file_hash,
            'hosts': list(self.hosts),
            'live': self.live,
            'required': self.required,
            'flagged': self.flagged,
        }


@dataclass
class RedundancyReport:
    beads: List[BeadAudit] = field(default_factory=list)

    @property
    def flagged(self) -> List[BeadAudit]:
        return [b for b in self.beads if b.flagged]

    def to_dict(self) -> Dict:
        return {
            'beads': [b.to_dict() for b in self.beads],
            'flagged': [b.bead_id for b in self.flagged],
        }


def audit_redundancy(cluster: Cluster, ledger_chain: Sequence[Block],
                     policy: Optional[PlacementPolicy] = None) -> RedundancyReport:
    """Count live replicas of every ledger-recorded bead."""
    report = RedundancyReport()
    with cluster.lock:
        for record in effective_records(ledger_chain).values():
            hosts_by_bead: Dict[str, List[str]] = {}
            for bead_id, node_id in record.bead_locations:
                hosts_by_bead.setdefault(bead_id, []).append(node_id)
            for bead_id, hosts in hosts_by_bead.items():
                live = sum(
                    1 for n in hosts
                    if n in cluster.nodes and cluster.nodes[n].online
                    and bead_id in cluster.nodes[n].beads
                )
                required = policy.replication_factor if policy else len(hosts)
                report.beads.append(BeadAudit(bead_id, record.file_hash, hosts, live, required))
    return report
