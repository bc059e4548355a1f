"""Multi-user searchable encryption over a Schnorr group.

Every user holds one share ``x1`` of the master exponent ``x`` and the
provider holds the complementary share ``x2`` (``x1 + x2 = x mod q``).
Client ciphertexts become matchable only after the provider completes them
with its share, and trapdoors from any user reduce to ``g^(x*sigma)`` once
combined with that user's server share, so ciphertexts and trapdoors from
different users can be compared without anyone sharing a key.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from typing import Callable, Protocol, Union

import gmpy2

HASHES: dict[str, Callable[[bytes], bytes]] = {
    "sha256": lambda data: hashlib.sha256(data).digest(),
    "sha3-256": lambda data: hashlib.sha3_256(data).digest(),
    "blake2s": lambda data: hashlib.blake2s(data).digest(),
}

PRFS: dict[str, Callable[[bytes, bytes], bytes]] = {
    "hmac-sha256": lambda key, msg: hmac.new(key, msg, hashlib.sha256).digest(),
    "hmac-sha512": lambda key, msg: hmac.new(key, msg, hashlib.sha512).digest(),
}

DEFAULT_HASH = "sha256"
DEFAULT_PRF = "hmac-sha256"
PRF_KEY_BYTES = 32


class RandomSource(Protocol):
    def randrange(self, start: int, stop: int) -> int: ...


class ParameterError(ValueError):
    """Raised for group parameters that fail primality or subgroup checks."""


@dataclass(frozen=True)
class GroupProfile:
    """Bit lengths for freshly generated Schnorr group parameters."""

    p_bits: int
    q_bits: int


@dataclass(frozen=True)
class InjectedGroup:
    """Explicit group parameters, used for exhaustive small-group tests."""

    p: int
    q: int
    g: int


PROFILES = {
    "production": GroupProfile(2048, 256),
    "medium": GroupProfile(1024, 160),
    "toy": GroupProfile(256, 64),
}


class FixedBase:
    """Windowed precomputation for repeated exponentiation of one base."""

    WINDOW = 8

    def __init__(self, base: int, p: int, exponent_bits: int):
        self.p = gmpy2.mpz(p)
        self.mask = (1 << self.WINDOW) - 1
        self.table: list[list] = []
        row_base = gmpy2.mpz(base)
        for _ in range(0, exponent_bits, self.WINDOW):
            row = [gmpy2.mpz(1)]
            for _ in range(self.mask):
                row.append(row[-1] * row_base % self.p)
            self.table.append(row)
            row_base = row[-1] * row_base % self.p

    def pow(self, exponent: int) -> int:
        acc = gmpy2.mpz(1)
        p, mask, w = self.p, self.mask, self.WINDOW
        for row in self.table:
            digit = exponent & mask
            if digit:
                acc = acc * row[digit] % p
            exponent >>= w
        return int(acc)


_FIXED_BASES: dict[tuple[int, int, int], FixedBase] = {}


def _fixed_base(base: int, p: int, q: int) -> FixedBase:
    key = (base, p, q)
    table = _FIXED_BASES.get(key)
    if table is None:
        if len(_FIXED_BASES) > 64:
            _FIXED_BASES.clear()
        table = _FIXED_BASES[key] = FixedBase(base, p, q.bit_length())
    return table


@dataclass(frozen=True)
class SystemParams:
    p: int
    q: int
    g: int
    h: int
    hash_id: str = DEFAULT_HASH
    prf_id: str = DEFAULT_PRF

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    def encode(self, element: int) -> bytes:
        """Fixed-width big-endian encoding of a residue in ``[0, p-1]``."""
        return int(element % self.p).to_bytes(self.element_bytes, "big")

    def hash_element(self, element: int) -> bytes:
        return HASHES[self.hash_id](self.encode(element))

    def in_subgroup(self, element: int) -> bool:
        return 0 < element < self.p and gmpy2.powmod(element, self.q, self.p) == 1

    def exp(self, base: int, exponent: int) -> int:
        return int(gmpy2.powmod(base, exponent % self.q, self.p))

    def exp_g(self, exponent: int) -> int:
        return _fixed_base(self.g, self.p, self.q).pow(exponent % self.q)

    def exp_h(self, exponent: int) -> int:
        return _fixed_base(self.h, self.p, self.q).pow(exponent % self.q)


@dataclass(frozen=True)
class MasterSecret:
    x: int
    prf_key: bytes


@dataclass(frozen=True)
class UserKey:
    user_id: str
    x1: int
    prf_key: bytes


@dataclass(frozen=True)
class ServerKey:
    user_id: str
    x2: int


@dataclass(frozen=True)
class ClientCiphertext:
    c1hat: int
    c2hat: int
    c3hat: bytes


@dataclass(frozen=True)
class ServerCiphertext:
    c1: int
    c2: bytes


@dataclass(frozen=True)
class Trapdoor:
    t1: int
    t2: int


def _system_random() -> RandomSource:
    return secrets.SystemRandom()


def _random_prf_key(rng: RandomSource) -> bytes:
    return bytes(rng.randrange(0, 256) for _ in range(PRF_KEY_BYTES))


def generate_group(profile: GroupProfile, rng: RandomSource | None = None) -> InjectedGroup:
    """Find primes ``p, q`` with ``q | p - 1`` and a generator of the order-q subgroup."""
    rng = rng or _system_random()
    q_bits, p_bits = profile.q_bits, profile.p_bits
    if q_bits < 2 or p_bits <= q_bits:
        raise ParameterError(f"unusable bit lengths p={p_bits} q={q_bits}")
    q = gmpy2.next_prime(rng.randrange(1 << (q_bits - 1), 1 << q_bits))
    while q.bit_length() != q_bits:
        q = gmpy2.next_prime(rng.randrange(1 << (q_bits - 1), 1 << q_bits))
    k_bits = p_bits - q_bits
    while True:
        k = rng.randrange(1 << (k_bits - 1), 1 << k_bits) & ~1
        p = k * q + 1
        if p.bit_length() == p_bits and gmpy2.is_prime(p, 40):
            break
    cofactor = (p - 1) // q
    while True:
        g = gmpy2.powmod(rng.randrange(2, p - 1), cofactor, p)
        if g != 1:
            return InjectedGroup(int(p), int(q), int(g))


def validate_group(group: InjectedGroup) -> None:
    p, q, g = group.p, group.q, group.g
    if not gmpy2.is_prime(p, 40):
        raise ParameterError(f"p={p} is not prime")
    if not gmpy2.is_prime(q, 40):
        raise ParameterError(f"q={q} is not prime")
    if (p - 1) % q:
        raise ParameterError("q does not divide p - 1")
    if not 1 < g < p or gmpy2.powmod(g, q, p) != 1:
        raise ParameterError(f"g={g} does not generate the order-{q} subgroup")


def init(
    profile: Union[str, GroupProfile, InjectedGroup] = "production",
    rng: RandomSource | None = None,
    *,
    prf_key: bytes | None = None,
    hash_id: str = DEFAULT_HASH,
    prf_id: str = DEFAULT_PRF,
) -> tuple[SystemParams, MasterSecret]:
    """Set up public parameters and the master secret ``(x, prf_key)``.

    ``profile`` is a named profile from :data:`PROFILES`, explicit bit lengths,
    or an :class:`InjectedGroup` that is validated rather than generated.
    """
    rng = rng or _system_random()
    if hash_id not in HASHES:
        raise ParameterError(f"unknown hash {hash_id!r}")
    if prf_id not in PRFS:
        raise ParameterError(f"unknown prf {prf_id!r}")
    if isinstance(profile, str):
        try:
            profile = PROFILES[profile]
        except KeyError:
            raise ParameterError(f"unknown profile {profile!r}") from None
    if isinstance(profile, GroupProfile):
        group = generate_group(profile, rng)
    else:
        group = profile
    validate_group(group)

    x = rng.randrange(1, group.q)
    h = int(gmpy2.powmod(group.g, x, group.p))
    params = SystemParams(group.p, group.q, group.g, h, hash_id, prf_id)
    msk = MasterSecret(x, prf_key if prf_key is not None else _random_prf_key(rng))
    return params, msk


def keygen(
    params: SystemParams, msk: MasterSecret, user_id: str, rng: RandomSource | None = None
) -> tuple[UserKey, ServerKey]:
    rng = rng or _system_random()
    x1 = rng.randrange(1, params.q)
    x2 = (msk.x - x1) % params.q
    return UserKey(user_id, x1, msk.prf_key), ServerKey(user_id, x2)


def sigma(params: SystemParams, prf_key: bytes, token: str) -> int:
    """PRF image of ``token`` mapped into ``[1, q-1]``."""
    digest = PRFS[params.prf_id](prf_key, token.encode("utf-8"))
    return int.from_bytes(digest, "big") % (params.q - 1) + 1


def encrypt_sigma(params: SystemParams, x1: int, sigma_a: int, r: int) -> ClientCiphertext:
    c1hat = params.exp_g(r + sigma_a)
    c2hat = params.exp(c1hat, x1)
    c3hat = params.hash_element(params.exp_h(r))
    return ClientCiphertext(c1hat, c2hat, c3hat)


def client_encrypt(
    params: SystemParams, user_key: UserKey, token: str, rng: RandomSource | None = None
) -> ClientCiphertext:
    rng = rng or _system_random()
    r = rng.randrange(1, params.q)
    return encrypt_sigma(params, user_key.x1, sigma(params, user_key.prf_key, token), r)


def server_reencrypt(
    params: SystemParams, server_key: ServerKey, ct: ClientCiphertext
) -> ServerCiphertext:
    c1 = params.exp(ct.c1hat, server_key.x2) * ct.c2hat % params.p
    return ServerCiphertext(c1, ct.c3hat)


def trapdoor_sigma(params: SystemParams, x1: int, sigma_a: int, r: int) -> Trapdoor:
    p = params.p
    t1 = params.exp_g(sigma_a - r)
    # h^r * g^(-x1 r) * g^(x1 sigma): needs only the user share and public h
    t2 = params.exp_h(r) * params.exp_g(-x1 * r) % p
    t2 = t2 * params.exp_g(x1 * sigma_a) % p
    return Trapdoor(t1, t2)


def gen_trapdoor(
    params: SystemParams, user_key: UserKey, token: str, rng: RandomSource | None = None
) -> Trapdoor:
    rng = rng or _system_random()
    r = rng.randrange(1, params.q)
    return trapdoor_sigma(params, user_key.x1, sigma(params, user_key.prf_key, token), r)


def combine(params: SystemParams, server_key: ServerKey, trapdoor: Trapdoor) -> int:
    """Complete a trapdoor into ``g^(x*sigma)`` with the issuer's server share."""
    return params.exp(trapdoor.t1, server_key.x2) * trapdoor.t2 % params.p


def invert(params: SystemParams, element: int) -> int:
    return int(gmpy2.invert(element, params.p))


def matches_inverse(params: SystemParams, ct: ServerCiphertext, t_inverse: int) -> bool:
    """Match test with ``T^-1`` precomputed, for scanning many ciphertexts."""
    candidate = params.hash_element(ct.c1 * t_inverse % params.p)
    return hmac.compare_digest(candidate, ct.c2)


def match_test(params: SystemParams, ct: ServerCiphertext, combined: int) -> bool:
    return matches_inverse(params, ct, invert(params, combined))
