"""Cryptographic primitives for the one-shot (Phase I) handshakes.

ElGamal over a prime-order subgroup, SHA-256 credentials over a
length-prefixed encoding, a code-offset fuzzy extractor built on a block
repetition code, and timestamp freshness checks.

None of this is constant time. It is a simulation substrate.
"""

from __future__ import annotations

import functools
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import sympy

logger = logging.getLogger(__name__)

HASH_WIDTH = 32  # SHA-256 output bytes
# exponents are drawn below 2**256 in large groups (short-exponent DH/ElGamal);
# small groups use the full range [1, q-1]
EXPONENT_BITS = 256

# RFC 3526 group 14 (2048-bit MODP). p is a safe prime, g = 2 generates the
# subgroup of order q = (p - 1) / 2.
MODP_2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)


class CryptoError(Exception):
    """Base class for crypto_core failures."""


class GroupParameterError(CryptoError):
    """Group parameters violate primality or generator-order requirements."""


class DomainError(CryptoError, ValueError):
    """An argument is outside the domain of the operation."""


@dataclass(frozen=True)
class GroupParams:
    p: int
    g: int
    q: int

    def validate(self) -> None:
        """Raise :class:`GroupParameterError` unless ``g`` has order exactly ``q`` mod prime ``p``."""
        p, g, q = self.p, self.g, self.q
        if p < 5 or not sympy.isprime(p):
            raise GroupParameterError(f"p={p} is not a prime >= 5")
        if not 2 <= g <= p - 2:
            raise GroupParameterError(f"g={g} outside [2, p-2]")
        if q < 2 or (p - 1) % q:
            raise GroupParameterError(f"q={q} does not divide p-1")
        if pow(g, q, p) != 1:
            raise GroupParameterError(f"g^q mod p != 1 for g={g}, q={q}")
        # g has order exactly q iff g^(q/r) != 1 for every prime r | q.
        if q.bit_length() > 64:
            if not sympy.isprime(q):
                raise GroupParameterError("large q must be prime")
            factors: Iterable[int] = (q,)
        else:
            factors = sympy.factorint(q).keys()
        for r in factors:
            if pow(g, q // r, p) == 1:
                raise GroupParameterError(f"g={g} has order dividing q/{r}")

    @property
    def byte_length(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @classmethod
    def toy(cls) -> "GroupParams":
        """p = 23 with primitive root 5, for exhaustive tests."""
        return cls(p=23, g=5, q=22)

    @classmethod
    def modp2048(cls) -> "GroupParams":
        return cls(p=MODP_2048_P, g=2, q=(MODP_2048_P - 1) // 2)


def _parse_int(value) -> int:
    if isinstance(value, int):
        return value
    text = str(value).strip().replace("_", "")
    return int(text, 0)


def load_group_params(path: str | Path) -> GroupParams:
    """Read ``p``, ``g``, ``q`` from a TOML file (decimal, or ``0x``-prefixed hex strings).

    The values may sit at top level or in a ``[group]`` table. ``q`` defaults
    to ``(p - 1) / 2``.
    """
    from atmas.config import load_toml

    data = load_toml(path)
    data = data.get("group", data)
    p = _parse_int(data["p"])
    g = _parse_int(data["g"])
    q = _parse_int(data["q"]) if "q" in data else (p - 1) // 2
    params = GroupParams(p=p, g=g, q=q)
    params.validate()
    return params


@dataclass(frozen=True)
class KeyPair:
    private: int
    public: int

    def __repr__(self) -> str:
        # keep private keys out of logs and reprs
        return f"KeyPair(public={self.public})"


@dataclass(frozen=True)
class Ciphertext:
    c1: int
    c2: int


def keypair_from_private(params: GroupParams, private: int) -> KeyPair:
    if not 1 <= private <= params.q - 1:
        raise DomainError(f"private key must lie in [1, q-1], got {private}")
    return KeyPair(private=private, public=pow(params.g, private, params.p))


def _rand_below(rng: np.random.Generator, upper: int) -> int:
    """Uniform integer in [0, upper) for arbitrarily large ``upper``."""
    if upper <= 2**62:
        return int(rng.integers(0, upper))
    nbytes = (upper.bit_length() + 7) // 8 + 8
    # extra 64 bits make modulo bias negligible
    return int.from_bytes(rng.bytes(nbytes), "big") % upper


def _exponent(params: GroupParams, rng: np.random.Generator) -> int:
    return 1 + _rand_below(rng, min(params.q - 1, 2**EXPONENT_BITS))


def keygen(params: GroupParams, rng: np.random.Generator, *, validate: bool = True) -> KeyPair:
    if validate:
        params.validate()
    private = _exponent(params, rng)
    return keypair_from_private(params, private)


def encrypt(
    params: GroupParams,
    recipient_public: int,
    message: int,
    rng: np.random.Generator | None = None,
    *,
    k: int | None = None,
) -> Ciphertext:
    """ElGamal encryption; ``k`` pins the ephemeral exponent (tests only)."""
    p = params.p
    if not 0 < message < p:
        raise DomainError(f"message must lie in (0, p), got {message}")
    if k is None:
        if rng is None:
            raise DomainError("either rng or k is required")
        k = _exponent(params, rng)
    c1 = pow(params.g, k, p)
    c2 = message * pow(recipient_public, k, p) % p
    return Ciphertext(c1, c2)


def decrypt(params: GroupParams, private: int, ct: Ciphertext) -> int:
    p = params.p
    if not (0 < ct.c1 < p and 0 < ct.c2 < p):
        raise DomainError("ciphertext components must lie in (0, p)")
    shared = pow(ct.c1, private, p)
    return ct.c2 * pow(shared, -1, p) % p


def encrypt_bytes(params: GroupParams, recipient_public: int, data: bytes, rng) -> Ciphertext:
    """Encrypt a short byte block packed as one group element.

    A 0x01 sentinel byte is prepended so leading zero bytes survive and the
    message is never 0.
    """
    m = int.from_bytes(b"\x01" + data, "big")
    if m >= params.p:
        raise DomainError(f"{len(data)}-byte block does not fit in the group")
    return encrypt(params, recipient_public, m, rng)


def decrypt_bytes(params: GroupParams, private: int, ct: Ciphertext) -> bytes | None:
    m = decrypt(params, private, ct)
    raw = m.to_bytes((m.bit_length() + 7) // 8, "big")
    if not raw or raw[0] != 1:
        return None
    return raw[1:]


def dh_shared(params: GroupParams, own_private: int, peer_public: int) -> bytes:
    """Static Diffie-Hellman value over the published group, as fixed-width bytes."""
    return pow(peer_public, own_private, params.p).to_bytes(params.byte_length, "big")


# -- credentials --------------------------------------------------------------


@dataclass(frozen=True)
class Credential:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != HASH_WIDTH:
            raise DomainError(f"credential must be {HASH_WIDTH} bytes")

    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def fromhex(cls, text: str) -> "Credential":
        if text != text.lower():
            raise DomainError("credentials are serialized as lowercase hex")
        return cls(bytes.fromhex(text))


def encode_parts(parts: Sequence[bytes]) -> bytes:
    """Length-prefixed concatenation: 4-byte big-endian length before each part."""
    out = bytearray()
    for part in parts:
        out += len(part).to_bytes(4, "big")
        out += part
    return bytes(out)


def decode_parts(data: bytes) -> list[bytes]:
    """Inverse of :func:`encode_parts`; raises ``ValueError`` on any framing error."""
    parts = []
    i = 0
    n = len(data)
    while i < n:
        if i + 4 > n:
            raise ValueError("truncated length prefix")
        size = int.from_bytes(data[i : i + 4], "big")
        i += 4
        if i + size > n:
            raise ValueError("part overruns buffer")
        parts.append(bytes(data[i : i + size]))
        i += size
    return parts


def hash_credential(parts: Sequence[bytes]) -> Credential:
    if not parts:
        raise DomainError("hash_credential needs at least one part")
    return Credential(hashlib.sha256(encode_parts(parts)).digest())


# -- fuzzy extractor ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiometricTemplate:
    """A fixed-length bit string; ``tolerance`` is the per-block Hamming bound."""

    bits: np.ndarray
    tolerance: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or np.any(bits > 1):
            raise DomainError("template bits must be a 1-D 0/1 array")
        if not 0 <= self.tolerance < len(bits):
            raise DomainError("tolerance must satisfy 0 <= t < n")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    def flipped(self, positions: Iterable[int]) -> "BiometricTemplate":
        idx = np.fromiter(positions, dtype=np.intp)
        n = len(self.bits)
        # a position listed twice toggles twice
        idx = np.where(idx < 0, idx + n, idx)
        if idx.size and idx.min() < 0:
            raise IndexError("flip position out of range")
        counts = np.bincount(idx, minlength=n)
        if len(counts) != n:
            raise IndexError("flip position out of range")
        mask = (counts & 1).astype(np.uint8)
        bits = self.bits ^ mask
        bits.setflags(write=False)
        out = object.__new__(BiometricTemplate)
        object.__setattr__(out, "bits", bits)
        object.__setattr__(out, "tolerance", self.tolerance)
        return out


@dataclass(frozen=True)
class FuzzyExtractor:
    """Code-offset construction over a repetition code.

    Each key bit is repeated ``block`` times, so templates have
    ``key_bits * block`` bits and each block corrects up to
    ``(block - 1) // 2`` flips.
    """

    key_bits: int = 64
    block: int = 7

    def __post_init__(self):
        if self.block < 1 or self.block % 2 == 0:
            raise DomainError("repetition block length must be odd")
        if self.key_bits < 1:
            raise DomainError("key_bits must be positive")

    @property
    def n(self) -> int:
        return self.key_bits * self.block

    @property
    def capacity(self) -> int:
        return (self.block - 1) // 2

    def random_template(self, rng: np.random.Generator) -> BiometricTemplate:
        bits = rng.integers(0, 2, size=self.n, dtype=np.uint8)
        return BiometricTemplate(bits, self.capacity)

    def gen(self, bio: BiometricTemplate, rng: np.random.Generator) -> tuple[bytes, bytes]:
        if len(bio) != self.n:
            raise DomainError(f"template length {len(bio)} != code length {self.n}")
        key = rng.integers(0, 2, size=self.key_bits, dtype=np.uint8)
        codeword = np.repeat(key, self.block)
        helper = bio.bits ^ codeword
        return _pack_key(key), self.n.to_bytes(4, "big") + np.packbits(helper).tobytes()

    def rep(self, reading: BiometricTemplate, helper: bytes) -> bytes | None:
        """Recover the key; ``None`` only for a malformed helper or length mismatch."""
        if len(helper) < 4:
            return None
        n = int.from_bytes(helper[:4], "big")
        if n != self.n or len(reading) != n:
            return None
        offset = _unpack_offset(bytes(helper[4:]), n)
        if offset is None:
            return None
        noisy = (reading.bits ^ offset).reshape(self.key_bits, self.block)
        ones = noisy.sum(axis=1)
        # majority vote per block; a block with more than `capacity` flips
        # decodes to the wrong bit, so the recovered key simply differs
        key = (ones > self.block // 2).astype(np.uint8)
        return _pack_key(key)


@functools.lru_cache(maxsize=64)
def _unpack_offset(packed: bytes, n: int) -> np.ndarray | None:
    offset = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:n]
    if len(offset) != n:
        return None
    offset.setflags(write=False)
    return offset


def _pack_key(key_bits: np.ndarray) -> bytes:
    return len(key_bits).to_bytes(2, "big") + np.packbits(key_bits).tobytes()


def fuzzy_gen(bio: BiometricTemplate, rng: np.random.Generator, extractor: FuzzyExtractor | None = None):
    extractor = extractor or FuzzyExtractor()
    return extractor.gen(bio, rng)


def fuzzy_rep(reading: BiometricTemplate, helper: bytes, extractor: FuzzyExtractor | None = None):
    extractor = extractor or FuzzyExtractor()
    return extractor.rep(reading, helper)


# -- freshness ----------------------------------------------------------------


def check_freshness(sent: int, now: int, threshold_ms: int) -> bool:
    if threshold_ms < 0:
        raise DomainError("threshold_ms must be >= 0")
    if now < sent:
        logger.info("clock regression: now=%d < sent=%d", now, sent)
        return False
    return now - sent <= threshold_ms
