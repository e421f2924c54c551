import requests
from .config import Config


class ServiceAPIError(Exception):
    """Raised when the storage service returns an error or is unreachable."""

    def __init__(self, message, code='ServiceUnavailable', status=None):
        super().__init__(message)
        self.message = message
        self.code = code
        self.status = status


def _url(path, base_url=None):
    return (base_url or Config.SERVICE_URL).rstrip('/') + path


def _request(method, path, base_url=None, **kwargs):
    """
    Send a request to the storage service.

    Returns:
        requests.Response with a 2xx status

    Raises:
        ServiceAPIError: carrying the service's error class name as `code`
    """
    kwargs.setdefault('timeout', Config.API_TIMEOUT_SECONDS)
    try:
        resp = requests.request(method, _url(path, base_url), **kwargs)
    except requests.Timeout:
        raise ServiceAPIError('Storage service timed out. Please try again.')
    except requests.ConnectionError:
        raise ServiceAPIError('Unable to connect to the storage service. Is it running?')
    except requests.RequestException as e:
        raise ServiceAPIError(f'Request failed: {str(e)}')

    if resp.status_code >= 400:
        try:
            error_data = resp.json()
            code = error_data.get('error', 'ServiceError')
            msg = error_data.get('message', f'Service returned status {resp.status_code}')
        except ValueError:
            code = 'ServiceError'
            msg = f'Service returned status {resp.status_code}'
        raise ServiceAPIError(msg, code=code, status=resp.status_code)
    return resp


def _key_header(headers, key):
    if key:
        headers['X-Key'] = key
    return headers


def check_health(base_url=None):
    """True when the service answers its health check."""
    try:
        return _request('GET', '/health', base_url, timeout=5).status_code == 200
    except ServiceAPIError:
        return False


def upload_file(data, owner, key=None, base_url=None):
    headers = _key_header({'X-Owner': owner, 'Content-Type': 'application/octet-stream'}, key)
    return _request('POST', '/files', base_url, data=data, headers=headers).json()


def download_file(file_hash, requester, key=None, base_url=None):
    headers = _key_header({'X-Requester': requester}, key)
    return _request('GET', f'/files/{file_hash}', base_url, headers=headers).content


def get_record(file_hash, base_url=None):
    return _request('GET', f'/files/{file_hash}/record', base_url).json()


def change_permission(file_hash, owner, action, grantee, base_url=None):
    return _request(
        'POST', f'/files/{file_hash}/permissions', base_url,
        json={'action': action, 'grantee': grantee}, headers={'X-Owner': owner},
    ).json()


def get_chain(base_url=None):
    return _request('GET', '/chain', base_url).json()


def get_block(index, base_url=None):
    return _request('GET', f'/chain/blocks/{index}', base_url).json()


def verify_chain(base_url=None):
    return _request('GET', '/chain/verify', base_url).json()


def list_nodes(base_url=None):
    return _request('GET', '/nodes', base_url).json()


def set_node_state(node_id, action, base_url=None):
    return _request('POST', f'/nodes/{node_id}/{action}', base_url).json()
