"""
EtrusChain - DNA-backed file storage on a proof-of-stake ledger
Main Entry Point

Every subcommand except `serve` and `bench` is a thin client of the REST
service (see app/api_client.py).

Usage:
    python main.py serve
    python main.py upload <path> --owner alice [--key ACGT...]
    python main.py download <hash> --as bob --out file.bin [--key ACGT...]
    python main.py record <hash>
    python main.py perms grant|revoke <hash> <user> --owner alice
    python main.py chain show|verify [--state-dir DIR]
    python main.py nodes list|fail|restore [<node_id>]
    python main.py bench roundtrip --size 1048576 --error-rate 0.001 --coverage 5 --replication 3
"""

import argparse
import json
import logging
import os
import sys
import time

from app import api_client
from app.api_client import ServiceAPIError
from app.config import Config
from app.errors import ChainInvalid, EtrusError, exit_code_for

EXIT_UNREACHABLE = 3


def _print(payload):
    print(json.dumps(payload, sort_keys=True))


def run_serve(args):
    """Launch the REST service."""
    from app.config import ServiceConfig
    from app.main import create_app

    config = ServiceConfig.load_or_create(args.state_dir)
    app = create_app(config)
    print(f'Serving state {config.state_dir} on http://{config.host}:{config.port}')
    app.run(debug=Config.DEBUG, host=config.host, port=config.port, threaded=True)
    return 0


def run_upload(args):
    with open(args.path, 'rb') as fh:
        data = fh.read()
    _print(api_client.upload_file(data, args.owner, args.key, args.url))
    return 0


def run_download(args):
    data = api_client.download_file(args.file_hash, args.requester, args.key, args.url)
    with open(args.out, 'wb') as fh:
        fh.write(data)
    _print({'file_hash': args.file_hash, 'out': args.out, 'bytes': len(data)})
    return 0


def run_record(args):
    _print(api_client.get_record(args.file_hash, args.url))
    return 0


def run_perms(args):
    _print(api_client.change_permission(args.file_hash, args.owner, args.action, args.user, args.url))
    return 0


def run_chain(args):
    if args.action == 'show':
        summary = api_client.get_chain(args.url)
        if args.blocks:
            summary['blocks'] = [api_client.get_block(i, args.url) for i in range(summary['height'] + 1)]
        _print(summary)
        return 0

    if args.state_dir:
        from app.persistence import verify_state_dir
        result = verify_state_dir(args.state_dir).to_dict()
    else:
        result = api_client.verify_chain(args.url)
    _print(result)
    if not result['valid']:
        print(f"chain invalid at height {result['height']}: {result['reason']}", file=sys.stderr)
        return ChainInvalid.exit_code
    return 0


def run_nodes(args):
    if args.action == 'list':
        _print(api_client.list_nodes(args.url))
        return 0
    if not args.node_id:
        print(f'nodes {args.action} needs a node id', file=sys.stderr)
        return 2
    _print(api_client.set_node_state(args.node_id, args.action, args.url))
    return 0


def run_bench(args):
    """Upload and download one random file against a throwaway deployment."""
    import numpy as np
    from app.models.contract import StorageContract, StoreParams
    from app.models.ledger import Ledger
    from app.models.network import Cluster, fail_node
    from app.models.synthesis import ErrorModel

    rng = np.random.default_rng(args.seed)
    data = rng.integers(0, 256, size=args.size, dtype=np.uint8).tobytes()
    params = StoreParams(
        segment_size=args.segment_size,
        overhead=args.overhead,
        beads_per_file=args.beads,
        replication_factor=args.replication,
        error_model=ErrorModel(args.error_rate, 0.0, args.seed),
        coverage=args.coverage,
        droplet_seed=args.seed,
        placement_seed=args.seed,
    )
    cluster = Cluster.from_topology([f'node-{i}' for i in range(args.nodes)])
    contract = StorageContract(Ledger(Config.VALIDATORS), cluster, ['bench'], params)

    start = time.perf_counter()
    result = {
        'size': args.size,
        'error_rate': args.error_rate,
        'coverage': args.coverage,
        'replication': args.replication,
        'failed_nodes': args.fail_nodes,
    }
    try:
        receipt = contract.upload_file('bench', data)
        for node_id in cluster.online_ids()[:args.fail_nodes]:
            fail_node(cluster, node_id)
        record = contract.find_record(receipt.file_hash)
        download = contract.retrieve_file('bench', receipt.file_hash)
        result.update(success=download.data == data, droplets_used=download.droplets_used,
                      droplets_total=record.codec_params['droplets'])
    except EtrusError as e:
        result.update(success=False, droplets_used=0, error=type(e).__name__)
    result['elapsed_s'] = round(time.perf_counter() - start, 3)
    _print(result)
    return 0 if result['success'] else 1


def build_parser():
    parser = argparse.ArgumentParser(
        description='EtrusChain - DNA-backed file storage on a proof-of-stake ledger'
    )
    parser.add_argument('--url', default=Config.SERVICE_URL, help='Storage service base URL')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL, help='Logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    serve = sub.add_parser('serve', help='Run the REST service')
    serve.add_argument('--state-dir', default=os.getenv('ETRUS_STATE_DIR', Config.STATE_DIR))
    serve.set_defaults(func=run_serve)

    upload = sub.add_parser('upload', help='Upload a file')
    upload.add_argument('path')
    upload.add_argument('--owner', required=True)
    upload.add_argument('--key', help='DNA encryption key')
    upload.set_defaults(func=run_upload)

    download = sub.add_parser('download', help='Download a file')
    download.add_argument('file_hash')
    download.add_argument('--as', dest='requester', required=True)
    download.add_argument('--out', required=True)
    download.add_argument('--key', help='DNA encryption key')
    download.set_defaults(func=run_download)

    record = sub.add_parser('record', help='Show the ledger record of a file')
    record.add_argument('file_hash')
    record.set_defaults(func=run_record)

    perms = sub.add_parser('perms', help='Grant or revoke read access')
    perms.add_argument('action', choices=['grant', 'revoke'])
    perms.add_argument('file_hash')
    perms.add_argument('user')
    perms.add_argument('--owner', required=True)
    perms.set_defaults(func=run_perms)

    chain = sub.add_parser('chain', help='Inspect or verify the ledger')
    chain.add_argument('action', choices=['show', 'verify'])
    chain.add_argument('--blocks', action='store_true', help='Include every block in `show`')
    chain.add_argument('--state-dir', help='Verify a state directory without a running service')
    chain.set_defaults(func=run_chain)

    nodes = sub.add_parser('nodes', help='List nodes or inject faults')
    nodes.add_argument('action', choices=['list', 'fail', 'restore'])
    nodes.add_argument('node_id', nargs='?')
    nodes.set_defaults(func=run_nodes)

    bench = sub.add_parser('bench', help='In-process roundtrip benchmark')
    bench.add_argument('action', choices=['roundtrip'])
    bench.add_argument('--size', type=int, default=1024 * 1024)
    bench.add_argument('--error-rate', type=float, default=0.001)
    bench.add_argument('--coverage', type=int, default=5)
    bench.add_argument('--replication', type=int, default=3)
    bench.add_argument('--nodes', type=int, default=10)
    bench.add_argument('--fail-nodes', type=int, default=0)
    bench.add_argument('--beads', type=int, default=4)
    bench.add_argument('--segment-size', type=int, default=32)
    bench.add_argument('--overhead', type=float, default=1.7)
    bench.add_argument('--seed', type=int, default=7)
    bench.set_defaults(func=run_bench)
    return parser


def main(argv=None):
    """Main entry point."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except ServiceAPIError as e:
        print(f'{e.code}: {e.message}', file=sys.stderr)
        return EXIT_UNREACHABLE if e.status is None else exit_code_for(e.code)
    except EtrusError as e:
        print(f'{type(e).__name__}: {e.message}', file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f'Error: {e}', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
