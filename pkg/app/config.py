import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

from .models.contract import StoreParams
from .models.fountain import ScreenParams
from .models.synthesis import ErrorModel

# load_dotenv() is called at module level so that environment variables
# are available when the Config class attributes are initialized below.
load_dotenv()


def _csv(value: str) -> List[str]:
    return [item.strip() for item in value.split(',') if item.strip()]


def _stakes(value: str) -> Dict[str, int]:
    stakes = {}
    for item in _csv(value):
        name, _, stake = item.partition(':')
        stakes[name.strip()] = int(stake or '1')
    return stakes


class Config:
    """Application configuration loaded from environment variables."""

    # Service
    STATE_DIR = os.getenv('ETRUS_STATE_DIR', 'state')
    HOST = os.getenv('ETRUS_HOST', '127.0.0.1')
    PORT = int(os.getenv('ETRUS_PORT', '5000'))
    SERVICE_URL = os.getenv('ETRUS_SERVICE_URL', f'http://{HOST}:{PORT}')
    API_TIMEOUT_SECONDS = int(os.getenv('API_TIMEOUT_SECONDS', '300'))
    DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

    # Uploads
    MAX_FILE_SIZE_MB = int(os.getenv('MAX_FILE_SIZE_MB', '16'))
    MAX_FILE_SIZE_BYTES = MAX_FILE_SIZE_MB * 1024 * 1024

    # Codec and storage defaults
    SEGMENT_SIZE = int(os.getenv('ETRUS_SEGMENT_SIZE', '32'))
    OVERHEAD = float(os.getenv('ETRUS_OVERHEAD', '1.7'))
    BEADS_PER_FILE = int(os.getenv('ETRUS_BEADS_PER_FILE', '4'))
    REPLICATION = int(os.getenv('ETRUS_REPLICATION', '3'))
    COVERAGE = int(os.getenv('ETRUS_COVERAGE', '5'))
    SUBSTITUTION_RATE = float(os.getenv('ETRUS_SUBSTITUTION_RATE', '0.0'))
    DROPOUT_RATE = float(os.getenv('ETRUS_DROPOUT_RATE', '0.0'))
    RNG_SEED = int(os.getenv('ETRUS_RNG_SEED', '0'))

    # Deployment
    NODES = _csv(os.getenv('ETRUS_NODES', ','.join(f'node-{i}' for i in range(10))))
    VALIDATORS = _stakes(os.getenv('ETRUS_VALIDATORS', 'validator-a:1,validator-b:3,validator-c:6'))
    IDENTITIES = _csv(os.getenv('ETRUS_IDENTITIES', 'alice,bob,carol'))

    @classmethod
    def validate(cls):
        """Check configured values. Returns list of problems."""
        problems = []
        for name in ('SEGMENT_SIZE', 'BEADS_PER_FILE', 'REPLICATION', 'COVERAGE', 'MAX_FILE_SIZE_MB'):
            if getattr(cls, name) < 1:
                problems.append(f'{name} must be positive')
        if cls.OVERHEAD < 1:
            problems.append('OVERHEAD must be >= 1')
        for name in ('SUBSTITUTION_RATE', 'DROPOUT_RATE'):
            if not 0 <= getattr(cls, name) <= 1:
                problems.append(f'{name} must be in [0, 1]')
        if cls.REPLICATION > len(cls.NODES):
            problems.append('REPLICATION exceeds the number of nodes')
        if sum(cls.VALIDATORS.values()) <= 0:
            problems.append('VALIDATORS hold no stake')
        return problems

    @classmethod
    def store_params(cls) -> StoreParams:
        return StoreParams(
            segment_size=cls.SEGMENT_SIZE,
            overhead=cls.OVERHEAD,
            beads_per_file=cls.BEADS_PER_FILE,
            replication_factor=cls.REPLICATION,
            error_model=ErrorModel(cls.SUBSTITUTION_RATE, cls.DROPOUT_RATE, cls.RNG_SEED),
            coverage=cls.COVERAGE,
            droplet_seed=cls.RNG_SEED,
            placement_seed=cls.RNG_SEED,
            screen=ScreenParams(),
        )


@dataclass
class ServiceConfig:
    """Everything a service instance needs; persisted as <state>/config.json."""

    state_dir: Path
    host: str = '127.0.0.1'
    port: int = 5000
    params: StoreParams = field(default_factory=StoreParams)
    topology: List[Dict] = field(default_factory=list)
    validators: Dict[str, int] = field(default_factory=dict)
    identities: List[str] = field(default_factory=list)

    @classmethod
    def from_env(cls, state_dir: Optional[str] = None) -> 'ServiceConfig':
        return cls(
            state_dir=Path(state_dir or Config.STATE_DIR),
            host=Config.HOST,
            port=Config.PORT,
            params=Config.store_params(),
            topology=[{'node_id': n, 'online': True} for n in Config.NODES],
            validators=dict(Config.VALIDATORS),
            identities=list(Config.IDENTITIES),
        )

    @property
    def config_path(self) -> Path:
        return self.state_dir / 'config.json'

    def to_dict(self) -> Dict:
        return {
            'host': self.host,
            'port': self.port,
            'params': self.params.to_dict(),
            'topology': self.topology,
            'validators': self.validators,
            'identities': self.identities,
        }

    @classmethod
    def from_dict(cls, state_dir, data: Dict) -> 'ServiceConfig':
        return cls(
            state_dir=Path(state_dir),
            host=data.get('host', Config.HOST),
            port=int(data.get('port', Config.PORT)),
            params=StoreParams.from_dict(data['params']),
            topology=list(data['topology']),
            validators={k: int(v) for k, v in data['validators'].items()},
            identities=list(data['identities']),
        )

    def save(self) -> None:
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load_or_create(cls, state_dir: Optional[str] = None) -> 'ServiceConfig':
        """Read <state>/config.json, writing it from the environment first if absent."""
        state_dir = Path(state_dir or Config.STATE_DIR)
        path = state_dir / 'config.json'
        if path.exists():
            return cls.from_dict(state_dir, json.loads(path.read_text()))
        config = cls.from_env(str(state_dir))
        config.save()
        return config
