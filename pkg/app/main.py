import logging
from datetime import datetime
from typing import Optional

from flask import Flask, Response, current_app, jsonify, request

from .config import Config, ServiceConfig
from .errors import EmptyInput, EtrusError, InvalidInput, PayloadTooLarge
from .models.contract import StorageContract
from .models.network import audit_redundancy, fail_node, restore_node
from .persistence import chain_path, open_contract, verify_chain_file

logger = logging.getLogger(__name__)


def create_app(service_config: Optional[ServiceConfig] = None,
               contract: Optional[StorageContract] = None) -> Flask:
    """Build the REST service for a state directory (default: Config.STATE_DIR)."""
    logging.basicConfig(level=Config.LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    app = Flask(__name__)
    config = service_config or ServiceConfig.load_or_create()
    app.config['SERVICE_CONFIG'] = config
    app.config['CONTRACT'] = contract or open_contract(config)
    app.config['MAX_CONTENT_LENGTH'] = Config.MAX_FILE_SIZE_BYTES
    register_routes(app)
    return app


def _contract() -> StorageContract:
    return current_app.config['CONTRACT']


def _key():
    return request.headers.get('X-Key') or None


def register_routes(app: Flask) -> None:

    # ===================== UTILITY ROUTES =====================

    @app.route('/health')
    def health():
        """Liveness check with chain height and node counts."""
        contract = _contract()
        return jsonify({
            'status': 'healthy',
            'height': contract.ledger.height,
            'nodes_online': len(contract.cluster.online_ids()),
            'nodes_total': len(contract.cluster.nodes),
            'timestamp': datetime.now().isoformat(),
        })

    # ===================== FILE ROUTES =====================

    @app.route('/files', methods=['POST'])
    def upload():
        """Store the raw request body for the X-Owner identity."""
        data = request.get_data(cache=False)
        if not data:
            raise EmptyInput('Request body is empty')
        owner = request.headers.get('X-Owner', '')
        contract = _contract()
        receipt = contract.upload_file(owner, data, contract.with_key(_key()))
        return jsonify(receipt.to_dict()), 201

    @app.route('/files/<file_hash>', methods=['GET'])
    def download(file_hash):
        requester = request.headers.get('X-Requester', '')
        result = _contract().retrieve_file(requester, file_hash, _key())
        response = Response(result.data, status=200, mimetype='application/octet-stream')
        response.headers['X-Droplets-Used'] = str(result.droplets_used)
        response.headers['X-Beads-Missing'] = ','.join(result.beads_missing)
        return response

    @app.route('/files/<file_hash>/record', methods=['GET'])
    def record(file_hash):
        """Effective ledger record of a file."""
        return jsonify(_contract().find_record(file_hash).to_dict())

    @app.route('/files/<file_hash>/permissions', methods=['POST'])
    def permissions(file_hash):
        body = request.get_json(silent=True) or {}
        action = body.get('action')
        grantee = body.get('grantee')
        if action not in ('grant', 'revoke') or not isinstance(grantee, str) or not grantee:
            raise InvalidInput('Body must be {"action": "grant"|"revoke", "grantee": <identity>}')
        owner = request.headers.get('X-Owner', '')
        contract = _contract()
        if action == 'grant':
            height = contract.grant_permission(owner, file_hash, grantee)
        else:
            height = contract.revoke_permission(owner, file_hash, grantee)
        return jsonify({'block': height})

    # ===================== CHAIN ROUTES =====================

    @app.route('/chain', methods=['GET'])
    def chain():
        ledger = _contract().ledger
        return jsonify({
            'height': ledger.height,
            'tip_hash': ledger.tip.block_hash,
            'valid': ledger.verify().valid,
        })

    @app.route('/chain/blocks/<int:index>', methods=['GET'])
    def chain_block(index):
        block = _contract().ledger.block(index)
        return Response(block.serialize(), status=200, mimetype='application/json')

    @app.route('/chain/verify', methods=['GET'])
    def chain_verify():
        """Verify the persisted chain.jsonl byte-for-byte."""
        config = current_app.config['SERVICE_CONFIG']
        result = verify_chain_file(chain_path(config.state_dir), config.validators)
        return jsonify(result.to_dict())

    # ===================== NODE ROUTES =====================

    def _nodes_payload():
        contract = _contract()
        report = audit_redundancy(contract.cluster, contract.ledger.snapshot())
        return {'nodes': contract.cluster.snapshot(), 'audit': report.to_dict()}

    @app.route('/nodes', methods=['GET'])
    def nodes():
        return jsonify(_nodes_payload())

    @app.route('/nodes/<node_id>/fail', methods=['POST'])
    def node_fail(node_id):
        fail_node(_contract().cluster, node_id)
        return jsonify(_nodes_payload())

    @app.route('/nodes/<node_id>/restore', methods=['POST'])
    def node_restore(node_id):
        restore_node(_contract().cluster, node_id)
        return jsonify(_nodes_payload())

    # ===================== ERROR HANDLERS =====================

    @app.errorhandler(EtrusError)
    def storage_error(error):
        if error.status_code >= 500:
            logger.error('%s: %s', type(error).__name__, error.message)
        return jsonify(error.to_dict()), error.status_code

    @app.errorhandler(404)
    def not_found(error):
        return jsonify({'error': 'NotFound', 'message': 'Resource not found'}), 404

    @app.errorhandler(413)
    def too_large(error):
        return jsonify(PayloadTooLarge(
            f'Upload exceeds {Config.MAX_FILE_SIZE_MB} MB').to_dict()), 413

    @app.errorhandler(500)
    def server_error(error):
        return jsonify({'error': 'InternalError', 'message': 'Internal server error'}), 500
