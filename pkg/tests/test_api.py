import hashlib

import pytest

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from app.config import ServiceConfig
from app.main import create_app
from app.models.contract import StoreParams
from app.models.ledger import genesis

DATA = b'EtrusChain stores this file in simulated DNA.' * 10


def make_config(state_dir):
    return ServiceConfig(
        state_dir=state_dir,
        params=StoreParams(segment_size=16, overhead=2.5, beads_per_file=4, replication_factor=3,
                           coverage=3, droplet_seed=2, placement_seed=2),
        topology=[{'node_id': f'node-{i}', 'online': True} for i in range(6)],
        validators={'validator-a': 1, 'validator-b': 3, 'validator-c': 6},
        identities=['alice', 'bob', 'carol'],
    )


@pytest.fixture
def client(tmp_path):
    app = create_app(make_config(tmp_path))
    app.config['TESTING'] = True
    return app.test_client()


def upload(client, data=DATA, owner='alice', **headers):
    return client.post('/files', data=data, headers=dict({'X-Owner': owner}, **headers),
                       content_type='application/octet-stream')


class TestHealth:

    def test_health(self, client):
        resp = client.get('/health')
        assert resp.status_code == 200
        assert resp.get_json()['status'] == 'healthy'
        assert resp.get_json()['nodes_online'] == 6


class TestFileRoutes:
    """Tests for upload and download."""

    def test_upload(self, client):
        resp = upload(client)
        assert resp.status_code == 201
        body = resp.get_json()
        assert body['file_hash'] == hashlib.sha256(DATA).hexdigest()
        assert body['block_index'] == 1
        assert len(body['bead_ids']) == 4

    def test_reupload(self, client):
        upload(client)
        resp = upload(client)
        assert resp.status_code == 409
        assert resp.get_json()['error'] == 'DuplicateFile'

    def test_empty_body(self, client):
        resp = upload(client, data=b'')
        assert resp.status_code == 400
        assert resp.get_json()['error'] == 'EmptyInput'

    def test_unregistered_owner(self, client):
        assert upload(client, owner='mallory').status_code == 403

    def test_too_large(self, client):
        client.application.config['MAX_CONTENT_LENGTH'] = 10
        resp = upload(client, data=b'x' * 100)
        assert resp.status_code == 413
        assert resp.get_json()['error'] == 'PayloadTooLarge'

    def test_owner_download(self, client):
        file_hash = upload(client).get_json()['file_hash']
        resp = client.get(f'/files/{file_hash}', headers={'X-Requester': 'alice'})
        assert resp.status_code == 200
        assert resp.data == DATA
        assert resp.headers['Content-Length'] == str(len(DATA))
        assert int(resp.headers['X-Droplets-Used']) > 0

    def test_unknown_hash(self, client):
        resp = client.get('/files/' + 'a' * 64, headers={'X-Requester': 'alice'})
        assert resp.status_code == 404

    def test_revoked_requester(self, client):
        file_hash = upload(client).get_json()['file_hash']
        client.post(f'/files/{file_hash}/permissions', json={'action': 'grant', 'grantee': 'bob'},
                    headers={'X-Owner': 'alice'})
        assert client.get(f'/files/{file_hash}', headers={'X-Requester': 'bob'}).status_code == 200
        client.post(f'/files/{file_hash}/permissions', json={'action': 'revoke', 'grantee': 'bob'},
                    headers={'X-Owner': 'alice'})
        assert client.get(f'/files/{file_hash}', headers={'X-Requester': 'bob'}).status_code == 403

    def test_encrypted_roundtrip(self, client):
        file_hash = upload(client, **{'X-Key': 'ACGTTGCA'}).get_json()['file_hash']
        resp = client.get(f'/files/{file_hash}', headers={'X-Requester': 'alice', 'X-Key': 'ACGTTGCA'})
        assert resp.data == DATA
        record = client.get(f'/files/{file_hash}/record').get_json()
        assert record['codec_params']['encrypted'] is True

    def test_record(self, client):
        file_hash = upload(client).get_json()['file_hash']
        record = client.get(f'/files/{file_hash}/record').get_json()
        assert record['owner'] == 'alice'
        assert record['codec_params']['original_length'] == len(DATA)


class TestPermissionRoutes:

    def test_grant(self, client):
        file_hash = upload(client).get_json()['file_hash']
        resp = client.post(f'/files/{file_hash}/permissions', json={'action': 'grant', 'grantee': 'bob'},
                           headers={'X-Owner': 'alice'})
        assert resp.status_code == 200
        assert resp.get_json() == {'block': 2}

    def test_revoke_unknown_file(self, client):
        resp = client.post('/files/' + 'b' * 64 + '/permissions', json={'action': 'revoke', 'grantee': 'bob'},
                           headers={'X-Owner': 'alice'})
        assert resp.status_code == 404

    def test_grant_by_stranger(self, client):
        file_hash = upload(client).get_json()['file_hash']
        resp = client.post(f'/files/{file_hash}/permissions', json={'action': 'grant', 'grantee': 'carol'},
                           headers={'X-Owner': 'bob'})
        assert resp.status_code == 403
        assert resp.get_json()['error'] == 'NotOwner'

    def test_bad_body(self, client):
        file_hash = upload(client).get_json()['file_hash']
        resp = client.post(f'/files/{file_hash}/permissions', json={'action': 'share'},
                           headers={'X-Owner': 'alice'})
        assert resp.status_code == 400


class TestChainRoutes:

    def test_fresh_chain(self, client):
        body = client.get('/chain').get_json()
        assert body['height'] == 0
        assert body['tip_hash'] == genesis().block_hash
        assert body['valid'] is True

    def test_height_after_upload(self, client):
        upload(client)
        assert client.get('/chain').get_json()['height'] == 1

    def test_block(self, client):
        resp = client.get('/chain/blocks/0')
        assert resp.status_code == 200
        assert resp.data == genesis().serialize()

    def test_block_out_of_range(self, client):
        resp = client.get('/chain/blocks/99')
        assert resp.status_code == 404
        assert resp.get_json()['error'] == 'BlockNotFound'

    def test_verify(self, client, tmp_path):
        upload(client)
        assert client.get('/chain/verify').get_json()['valid'] is True
        path = tmp_path / 'chain.jsonl'
        path.write_bytes(path.read_bytes().replace(b'"alice"', b'"alicf"', 1))
        body = client.get('/chain/verify').get_json()
        assert body['valid'] is False
        assert body['height'] == 1


class TestNodeRoutes:

    def test_fail_then_list(self, client):
        assert client.post('/nodes/node-1/fail').status_code == 200
        nodes = {n['node_id']: n for n in client.get('/nodes').get_json()['nodes']}
        assert nodes['node-1']['online'] is False

    def test_fail_flags_hosted_beads(self, client):
        receipt = upload(client).get_json()
        bead_id, node_id = receipt['placement'][0]
        body = client.post(f'/nodes/{node_id}/fail').get_json()
        assert bead_id in body['audit']['flagged']
        body = client.post(f'/nodes/{node_id}/restore').get_json()
        assert body['audit']['flagged'] == []

    def test_restore_unknown(self, client):
        resp = client.post('/nodes/node-99/restore')
        assert resp.status_code == 404
        assert resp.get_json()['error'] == 'UnknownNode'


class TestRestart:
    """Crash consistency of the state directory."""

    def test_restart_serves_previous_upload(self, tmp_path):
        first = create_app(make_config(tmp_path)).test_client()
        file_hash = upload(first).get_json()['file_hash']
        tip = first.get('/chain').get_json()['tip_hash']

        second = create_app(ServiceConfig.load_or_create(tmp_path)).test_client()
        assert second.get('/chain').get_json()['tip_hash'] == tip
        resp = second.get(f'/files/{file_hash}', headers={'X-Requester': 'alice'})
        assert resp.status_code == 200
        assert resp.data == DATA
