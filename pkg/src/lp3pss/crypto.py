"""Symmetric crypto primitives for the sensing protocol.

Three pieces live here:

* a keyed order-preserving encryption (OPE) over a fixed integer domain,
  built as a strictly increasing keyed prefix sum so that
  ``m1 < m2  =>  enc(m1) < enc(m2)`` under the same key;
* an authenticated channel cipher (AES-GCM) with a deterministic per-key
  nonce counter, so simulation runs are reproducible byte-for-byte;
* pairwise key derivation from a single master seed, standing in for the
  key-establishment handshake of a real deployment.

Wire format for authenticated ciphertexts:
``u32 total_len (big endian) || nonce (12B) || body || tag (16B)``.
OPE ciphertexts serialize as fixed-width big-endian integers.
"""

from __future__ import annotations

import hmac
import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

NONCE_LEN = 12
TAG_LEN = 16
KEY_LEN = 16  # AES-128

FC = "FC"
GW = "GW"


class CryptoError(Exception):
    """Base class for protocol crypto failures."""


class AuthenticationFailure(CryptoError):
    """AEAD tag did not verify: wrong key, tampered bytes, or wrong context."""


class MalformedCiphertext(CryptoError):
    """Ciphertext bytes do not parse as the expected wire framing."""


# ---------------------------------------------------------------------------
# Order-preserving encryption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpeKey:
    """Key for the order-preserving cipher.

    ``domain_bits`` is the plaintext width d (messages are integers in
    [0, 2^d)); ``range_bits`` is the ciphertext width. The codomain needs
    at least 8 bits of headroom so the per-step random increments fit.
    """

    key_bytes: bytes
    domain_bits: int = 16
    range_bits: int = 32

    def __post_init__(self) -> None:
        if len(self.key_bytes) != KEY_LEN:
            raise ValueError(f"OPE key must be {KEY_LEN} bytes, got {len(self.key_bytes)}")
        if self.domain_bits < 1:
            raise ValueError("domain_bits must be >= 1")
        if self.range_bits < self.domain_bits + 8:
            raise ValueError("range_bits must be >= domain_bits + 8")
        if self.range_bits > 63:
            raise ValueError("range_bits must be <= 63")

    @property
    def domain_size(self) -> int:
        return 1 << self.domain_bits


@dataclass(frozen=True, order=True)
class OpeCiphertext:
    """Opaque comparable OPE ciphertext; compares by integer value."""

    value: int

    def to_bytes(self, range_bits: int = 32) -> bytes:
        return self.value.to_bytes((range_bits + 7) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "OpeCiphertext":
        return cls(int.from_bytes(data, "big"))


class _PrefixTable:
    """Lazily grown cumulative sums of keyed pseudorandom increments.

    Increment k is ``1 + (PRF_key(k) mod M)`` where the PRF stream is the
    AES-CTR keystream of the key, read in 8-byte big-endian words, and
    ``M = 2^(range_bits - domain_bits) - 1``. Every increment is >= 1, so
    the cumulative sums are strictly increasing; the worst-case ciphertext
    is 2^domain_bits * M < 2^range_bits.
    """

    CHUNK_WORDS = 8192
    WORD_LEN = 8

    def __init__(self, key: OpeKey) -> None:
        self._modulus = (1 << (key.range_bits - key.domain_bits)) - 1
        self._domain_size = key.domain_size
        cipher = Cipher(algorithms.AES(key.key_bytes), modes.CTR(b"\x00" * 16))
        self._keystream = cipher.encryptor()
        self._sums: list[int] = []
        self._lock = threading.Lock()

    def value_at(self, m: int) -> int:
        if m >= len(self._sums):
            with self._lock:
                self._grow(m)
        return self._sums[m]

    def _grow(self, m: int) -> None:
        while len(self._sums) <= m:
            want = min(self.CHUNK_WORDS, self._domain_size - len(self._sums))
            raw = self._keystream.update(b"\x00" * (want * self.WORD_LEN))
            words = np.frombuffer(raw, dtype=">u8").astype(np.uint64)
            incs = words % np.uint64(self._modulus) + np.uint64(1)
            base = np.uint64(self._sums[-1]) if self._sums else np.uint64(0)
            self._sums.extend((np.cumsum(incs) + base).tolist())


_TABLES: dict[tuple[bytes, int, int], _PrefixTable] = {}
_TABLES_LOCK = threading.Lock()


def _table_for(key: OpeKey) -> _PrefixTable:
    cache_key = (key.key_bytes, key.domain_bits, key.range_bits)
    table = _TABLES.get(cache_key)
    if table is None:
        with _TABLES_LOCK:
            table = _TABLES.setdefault(cache_key, _PrefixTable(key))
    return table


def ope_encrypt(key: OpeKey, m: int) -> OpeCiphertext:
    """Encrypt integer ``m`` preserving strict order.

    Deterministic: the same (key, m) always yields the same ciphertext.
    Raises ValueError if ``m`` lies outside [0, 2^domain_bits).
    """
    if not 0 <= m < key.domain_size:
        raise ValueError(f"plaintext {m} outside OPE domain [0, {key.domain_size})")
    return OpeCiphertext(_table_for(key).value_at(m))


# ---------------------------------------------------------------------------
# Authenticated channel cipher
# ---------------------------------------------------------------------------


@dataclass
class AeadKey:
    """Pairwise channel key with a role label such as ``"FC|U3"``.

    The nonce counter makes encryption deterministic for a fixed call
    sequence; both ends of a pair share the same key object inside one
    simulation, so counters never collide.
    """

    key_bytes: bytes
    label: str
    _nonce_counter: int = field(default=0, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.key_bytes) != KEY_LEN:
            raise ValueError(f"AEAD key must be {KEY_LEN} bytes, got {len(self.key_bytes)}")

    def _next_nonce(self) -> bytes:
        nonce = self._nonce_counter.to_bytes(NONCE_LEN, "big")
        self._nonce_counter += 1
        return nonce


@dataclass(frozen=True)
class AeadCiphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def to_wire(self) -> bytes:
        blob = self.nonce + self.body + self.tag
        return len(blob).to_bytes(4, "big") + blob

    @property
    def wire_size(self) -> int:
        return 4 + len(self.nonce) + len(self.body) + len(self.tag)

    @classmethod
    def from_wire(cls, data: bytes) -> "AeadCiphertext":
        if len(data) < 4:
            raise MalformedCiphertext("missing length prefix")
        total = int.from_bytes(data[:4], "big")
        blob = data[4:]
        if len(blob) != total or total < NONCE_LEN + TAG_LEN:
            raise MalformedCiphertext(
                f"declared {total} bytes, got {len(blob)} (minimum {NONCE_LEN + TAG_LEN})"
            )
        return cls(blob[:NONCE_LEN], blob[NONCE_LEN:-TAG_LEN], blob[-TAG_LEN:])


def aead_encrypt(key: AeadKey, payload: bytes, assoc: bytes = b"") -> AeadCiphertext:
    """Encrypt-and-authenticate ``payload`` binding ``assoc`` as context.

    Each call consumes a fresh nonce, so equal payloads never produce
    equal ciphertexts under the same key.
    """
    if not payload:
        raise ValueError("payload must be non-empty")
    nonce = key._next_nonce()
    out = AESGCM(key.key_bytes).encrypt(nonce, payload, assoc)
    return AeadCiphertext(nonce, out[:-TAG_LEN], out[-TAG_LEN:])


def aead_decrypt(key: AeadKey, ct: AeadCiphertext, assoc: bytes = b"") -> bytes:
    """Recover the payload; fails unless key, nonce, tag and assoc all match."""
    if len(ct.nonce) != NONCE_LEN or len(ct.tag) != TAG_LEN:
        raise MalformedCiphertext("bad nonce or tag length")
    try:
        return AESGCM(key.key_bytes).decrypt(ct.nonce, ct.body + ct.tag, assoc)
    except InvalidTag as exc:
        raise AuthenticationFailure(f"tag verification failed for {key.label}") from exc


# ---------------------------------------------------------------------------
# Pairwise key derivation
# ---------------------------------------------------------------------------


def _kdf(secret: bytes, label: str) -> bytes:
    return hmac.new(secret, label.encode(), hashlib.sha256).digest()


def pair_label(a: str | int, b: str | int) -> str:
    """Canonical ordered label for an entity pair: FC < GW < user ids."""

    def rank(x: str | int) -> tuple[int, int]:
        if x == FC:
            return (0, 0)
        if x == GW:
            return (1, 0)
        if isinstance(x, int):
            return (2, x)
        raise ValueError(f"unknown entity id {x!r}")

    first, second = sorted((a, b), key=rank)
    return f"{first}|{second}"


@dataclass
class KeyTable:
    """All pairwise keys of one deployment: 2n+1 channel keys plus the
    per-user OPE subkeys shared between the fusion center and each user.

    The FC<->user pair secret is expanded into two independent subkeys
    (one for the channel, one for OPE) so the two roles never interact.
    The master seed is retained so joining users can be keyed later.
    """

    master_seed: bytes
    domain_bits: int = 16
    range_bits: int = 32
    fc_gw: AeadKey = field(init=False)
    fc_user: dict[int, AeadKey] = field(default_factory=dict)
    gw_user: dict[int, AeadKey] = field(default_factory=dict)
    ope_user: dict[int, OpeKey] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.master_seed) != 32:
            raise ValueError("master seed must be 32 bytes")
        label = pair_label(FC, GW)
        secret = _kdf(self.master_seed, f"pair|{label}")
        self.fc_gw = AeadKey(_kdf(secret, "aead")[:KEY_LEN], label)

    def add_user(self, uid: int) -> None:
        if not isinstance(uid, int) or uid < 0:
            raise ValueError(f"user id must be a non-negative int, got {uid!r}")
        if uid in self.fc_user:
            raise ValueError(f"user {uid} already keyed")
        fc_secret = _kdf(self.master_seed, f"pair|{pair_label(FC, uid)}")
        gw_secret = _kdf(self.master_seed, f"pair|{pair_label(GW, uid)}")
        self.fc_user[uid] = AeadKey(_kdf(fc_secret, "aead")[:KEY_LEN], pair_label(FC, uid))
        self.gw_user[uid] = AeadKey(_kdf(gw_secret, "aead")[:KEY_LEN], pair_label(GW, uid))
        self.ope_user[uid] = OpeKey(
            _kdf(fc_secret, "ope")[:KEY_LEN], self.domain_bits, self.range_bits
        )

    def remove_user(self, uid: int) -> None:
        if uid not in self.fc_user:
            raise ValueError(f"user {uid} not keyed")
        del self.fc_user[uid]
        del self.gw_user[uid]
        del self.ope_user[uid]

    def user_ids(self) -> list[int]:
        return sorted(self.fc_user)

    @property
    def pair_count(self) -> int:
        return 1 + 2 * len(self.fc_user)


def derive_pairwise_keys(
    master_seed: bytes,
    entity_ids: list[str | int],
    domain_bits: int = 16,
    range_bits: int = 32,
) -> KeyTable:
    """Derive the full pairwise key table from one 32-byte master seed.

    ``entity_ids`` must contain "FC", "GW" and the (distinct, integer)
    user ids. Deterministic: the same seed and ids give a byte-identical
    table.
    """
    if len(entity_ids) != len(set(entity_ids)):
        raise ValueError("duplicate entity id")
    if FC not in entity_ids or GW not in entity_ids:
        raise ValueError("entity ids must include FC and GW")
    users = [e for e in entity_ids if e not in (FC, GW)]
    table = KeyTable(master_seed, domain_bits, range_bits)
    for uid in users:
        table.add_user(uid)  # type: ignore[arg-type]
    return table
