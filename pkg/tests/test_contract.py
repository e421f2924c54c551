import hashlib
import math
import random
from dataclasses import replace
from unittest.mock import Mock

import pytest

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from app.errors import (
    BeadUnavailable, DuplicateFile, EmptyInput, IntegrityMismatch, NotOwner, PermissionDenied,
    UnknownFile, UnknownIdentity
)
from app.models.contract import StorageContract, StoreParams
from app.models.ledger import TX_CREATE, TX_GRANT
from app.models.network import Cluster, fail_node
from app.models.synthesis import ErrorModel

VALIDATORS = {'validator-a': 1, 'validator-b': 3, 'validator-c': 6}
IDENTITIES = ['alice', 'bob', 'carol']
KEY = 'GATTACAGATTACAGATTACA'


def make_contract(nodes=6, **overrides):
    from app.models.ledger import Ledger
    params = StoreParams(**dict(dict(segment_size=16, overhead=2.5, beads_per_file=4,
                                     replication_factor=3, coverage=3, droplet_seed=1,
                                     placement_seed=2), **overrides))
    cluster = Cluster.from_topology([f'node-{i}' for i in range(nodes)])
    return StorageContract(Ledger(VALIDATORS), cluster, IDENTITIES, params, clock=lambda: 1700000000)


def random_data(n, seed=0):
    rng = random.Random(seed)
    return bytes(rng.getrandbits(8) for _ in range(n))


def make_default_contract(nodes=10):
    from app.models.ledger import Ledger
    cluster = Cluster.from_topology([f'node-{i}' for i in range(nodes)])
    return StorageContract(Ledger(VALIDATORS), cluster, IDENTITIES, StoreParams(),
                           clock=lambda: 1700000000)


def bead_oligos(contract, receipt):
    oligos = set()
    for bead_id, node_id in receipt.placement:
        oligos.update(contract.cluster.nodes[node_id].beads[bead_id].oligos)
    return oligos


class TestDefaultPipeline:
    """Zero-error roundtrips through the default codec settings."""

    @pytest.mark.parametrize('data', [
        b'hi',
        b'hello world\n',
        bytes(4096),
        b'\x03' * 1024,
        b'\xa6' * 1024,
    ])
    def test_low_entropy_files(self, data):
        contract = make_default_contract()
        receipt = contract.upload_file('alice', data)
        assert contract.download_file('alice', receipt.file_hash) == data

    def test_every_size_up_to_two_segments(self):
        contract = make_default_contract()
        for size in range(1, 65):
            data = random_data(size, seed=size)
            receipt = contract.upload_file('alice', data)
            assert contract.download_file('alice', receipt.file_hash) == data

    def test_size_sweep(self):
        contract = make_default_contract()
        for size in range(33, 2530, 32):
            data = random_data(size, seed=1000 + size)
            receipt = contract.upload_file('alice', data)
            record = contract.find_record(receipt.file_hash)
            assert record.codec_params['droplets'] == math.ceil(1.7 * record.codec_params['K'])
            assert contract.download_file('alice', receipt.file_hash) == data


class TestUpload:
    """Tests for the upload workflow."""

    def test_record_matches_receipt(self):
        contract = make_contract()
        data = random_data(500)
        receipt = contract.upload_file('alice', data)
        record = contract.find_record(receipt.file_hash)
        assert receipt.file_hash == hashlib.sha256(data).hexdigest()
        assert record.owner == 'alice'
        assert record.timestamp == 1700000000
        assert record.bead_locations == receipt.placement
        assert record.codec_params['K'] == 32
        assert record.codec_params['original_length'] == 500
        assert record.codec_params['encrypted'] is False

    def test_beads_and_replicas(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(500))
        assert len(receipt.bead_ids) == 4
        assert len(receipt.placement) == 4 * 3
        for bead_id in receipt.bead_ids:
            hosts = [n for b, n in receipt.placement if b == bead_id]
            assert len(set(hosts)) == 3

    def test_record_appended_after_placement(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(300))
        block = contract.ledger.block(receipt.block_index)
        assert receipt.block_index == 1
        assert [tx['type'] for tx in block.transactions] == [TX_CREATE]
        for bead_id, node_id in receipt.placement:
            assert bead_id in contract.cluster.nodes[node_id].beads

    def test_tiny_file_uses_fewer_beads(self):
        contract = make_contract(beads_per_file=8)
        receipt = contract.upload_file('alice', b'hi')
        assert len(receipt.bead_ids) == 3

    def test_duplicate(self):
        contract = make_contract()
        data = random_data(200)
        contract.upload_file('alice', data)
        with pytest.raises(DuplicateFile):
            contract.upload_file('bob', data)
        assert contract.ledger.height == 1

    def test_empty(self):
        with pytest.raises(EmptyInput):
            make_contract().upload_file('alice', b'')

    def test_unknown_identity(self):
        with pytest.raises(UnknownIdentity):
            make_contract().upload_file('mallory', b'data')

    def test_failed_append_discards_beads(self):
        from app.models.ledger import Ledger
        stored, dropped = [], []
        ledger = Ledger(VALIDATORS, on_append=Mock(side_effect=OSError('disk full')))
        cluster = Cluster.from_topology([f'node-{i}' for i in range(6)])
        contract = StorageContract(
            ledger, cluster, IDENTITIES, make_contract().params,
            on_beads=lambda beads: stored.extend(b.bead_id for b in beads),
            on_discard=dropped.extend,
        )

        with pytest.raises(OSError):
            contract.upload_file('alice', random_data(300))

        assert ledger.height == 0
        assert all(not node.beads for node in cluster.nodes.values())
        assert dropped == stored and len(stored) == 4

    def test_logs_upload(self, caplog):
        import logging
        with caplog.at_level(logging.INFO, logger='app.models.contract'):
            make_contract().upload_file('alice', b'logged bytes')
        assert any('Uploaded' in r.getMessage() for r in caplog.records)


class TestDownload:
    """Tests for the download workflow."""

    def test_owner_roundtrip(self):
        contract = make_contract()
        data = random_data(777, seed=3)
        receipt = contract.upload_file('alice', data)
        assert contract.download_file('alice', receipt.file_hash) == data

    def test_not_permitted(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(100))
        with pytest.raises(PermissionDenied):
            contract.download_file('bob', receipt.file_hash)

    def test_unknown_file(self):
        with pytest.raises(UnknownFile):
            make_contract().download_file('alice', 'e' * 64)

    def test_noisy_channel_with_failed_node(self):
        contract = make_contract(nodes=10, error_model=ErrorModel(0.001, 0.0, 7), coverage=5)
        data = random_data(2000, seed=5)
        receipt = contract.upload_file('alice', data)
        fail_node(contract.cluster, receipt.placement[0][1])
        result = contract.retrieve_file('alice', receipt.file_hash)
        assert result.data == data
        assert result.beads_missing == []

    def test_all_hosts_down(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(100))
        for node_id in list(contract.cluster.nodes):
            fail_node(contract.cluster, node_id)
        with pytest.raises(BeadUnavailable):
            contract.download_file('alice', receipt.file_hash)


class TestEncryption:
    """Tests for keyed uploads."""

    def test_transparent_with_key(self):
        contract = make_contract()
        data = random_data(400, seed=8)
        receipt = contract.upload_file('alice', data, contract.with_key(KEY))
        record = contract.find_record(receipt.file_hash)
        assert record.file_hash == hashlib.sha256(data).hexdigest()
        assert record.codec_params['encrypted'] is True
        assert contract.download_file('alice', receipt.file_hash, KEY) == data

    def test_bead_oligos_differ_from_plain_upload(self):
        data = random_data(400, seed=8)
        plain, keyed = make_contract(), make_contract()
        plain_receipt = plain.upload_file('alice', data)
        keyed_receipt = keyed.upload_file('alice', data, keyed.with_key(KEY))

        assert plain_receipt.file_hash == keyed_receipt.file_hash
        assert plain_receipt.bead_ids == keyed_receipt.bead_ids
        plain_oligos = bead_oligos(plain, plain_receipt)
        keyed_oligos = bead_oligos(keyed, keyed_receipt)
        assert plain_oligos and keyed_oligos
        assert plain_oligos.isdisjoint(keyed_oligos)
        assert keyed.download_file('alice', keyed_receipt.file_hash, KEY) == data

    def test_key_required(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(64), contract.with_key(KEY))
        with pytest.raises(IntegrityMismatch):
            contract.download_file('alice', receipt.file_hash)

    def test_wrong_key(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(64), contract.with_key(KEY))
        with pytest.raises(IntegrityMismatch):
            contract.download_file('alice', receipt.file_hash, 'TTTT')

    def test_key_not_persisted_in_params(self):
        params = replace(StoreParams(), encryption_key=KEY)
        assert 'encryption_key' not in params.to_dict()
        assert StoreParams.from_dict(params.to_dict()).encryption_key is None


class TestPermissions:
    """Tests for grant and revoke."""

    def test_grant_then_download(self):
        contract = make_contract()
        data = random_data(150)
        receipt = contract.upload_file('alice', data)
        height = contract.grant_permission('alice', receipt.file_hash, 'bob')
        assert height == 2
        assert contract.ledger.block(2).transactions[0]['type'] == TX_GRANT
        assert contract.download_file('bob', receipt.file_hash) == data

    def test_revoke_then_download(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(150))
        contract.grant_permission('alice', receipt.file_hash, 'bob')
        contract.revoke_permission('alice', receipt.file_hash, 'bob')
        with pytest.raises(PermissionDenied):
            contract.download_file('bob', receipt.file_hash)

    def test_grant_by_non_owner(self):
        contract = make_contract()
        receipt = contract.upload_file('alice', random_data(150))
        with pytest.raises(NotOwner):
            contract.grant_permission('bob', receipt.file_hash, 'carol')
        assert contract.ledger.height == 1

    def test_revoke_unknown_file(self):
        with pytest.raises(UnknownFile):
            make_contract().revoke_permission('alice', 'c' * 64, 'bob')


@pytest.mark.slow
class TestEndToEnd:
    """1 MiB roundtrips with the default codec settings."""

    def run_roundtrip(self, failed_nodes):
        from app.models.ledger import Ledger
        params = StoreParams(segment_size=32, overhead=1.7, beads_per_file=4, replication_factor=3,
                             error_model=ErrorModel(0.001, 0.0, 11), coverage=5)
        cluster = Cluster.from_topology([f'node-{i}' for i in range(10)])
        contract = StorageContract(Ledger(VALIDATORS), cluster, IDENTITIES, params)
        data = os.urandom(1024 * 1024)
        receipt = contract.upload_file('alice', data)
        assert len(receipt.bead_ids) == 4
        assert len(receipt.placement) == 12
        for node_id in failed_nodes:
            fail_node(cluster, node_id)
        assert contract.download_file('alice', receipt.file_hash) == data

    def test_roundtrip(self):
        self.run_roundtrip([])

    def test_roundtrip_with_failed_node(self):
        self.run_roundtrip(['node-4'])
