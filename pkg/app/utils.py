import hashlib
import json

MASK64 = 0xFFFFFFFFFFFFFFFF


def sha256_hex(data: bytes) -> str:
    """Hex SHA-256 digest of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj) -> bytes:
    """
    Deterministic JSON rendering used for every hashed structure.

    Keys are sorted, separators carry no whitespace and output is ASCII, so
    the same value always produces the same bytes.
    """
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=True).encode('ascii')


def derive_seed(*parts) -> int:
    """Derive a 64-bit generator seed from an ordered list of values."""
    material = '|'.join(str(p) for p in parts).encode('utf-8')
    return int.from_bytes(hashlib.sha256(material).digest()[:8], 'big')


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64:
    """
    xorshift64* generator used for all simulated randomness.

    Shifts 12/25/27 and multiplier 0x2545F4914F6CDD1D. The state is seeded
    through splitmix64 so small or correlated seeds still start far apart.
    """

    MULTIPLIER = 0x2545F4914F6CDD1D

    def __init__(self, seed: int):
        state = splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * self.MULTIPLIER) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)

    def randbelow(self, n: int) -> int:
        return self.next() % n
