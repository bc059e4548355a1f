"""Trusted-domain actors: key authority, admin users, requesters and the PIP.

Nothing here touches a server key share or the master secret except the
key management authority itself.
"""

from __future__ import annotations

import logging
import os
import secrets
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from . import crypto, records
from .crypto import ClientCiphertext, RandomSource, ServerKey, SystemParams, Trapdoor, UserKey
from .language import PolicyAst
from .policy import (
    AttributeAssignment,
    Node,
    SatTuple,
    compile_condition,
    expand_attributes,
    map_leaves,
    normalize_token,
)

log = logging.getLogger(__name__)


class DuplicateUserError(ValueError):
    pass


@dataclass(frozen=True)
class EncryptedPolicyBundle:
    admin_id: str
    sat_ciphertexts: tuple  # (S, A, T) ClientCiphertexts
    condition_tree: Node  # leaves hold ClientCiphertexts


@dataclass(frozen=True)
class EncryptedRequest:
    requester_id: str
    sat_trapdoors: tuple  # (S, A, T) Trapdoors


@dataclass(frozen=True)
class EncryptedAttributes:
    pip_id: str
    trapdoors: tuple


records.register(
    EncryptedPolicyBundle,
    dict(admin_id=records.STR, sat_ciphertexts=records.LIST, condition_tree=records.NODE),
)
records.register(EncryptedRequest, dict(requester_id=records.STR, sat_trapdoors=records.LIST))
records.register(EncryptedAttributes, dict(pip_id=records.STR, trapdoors=records.LIST))


class KeyReceiver(Protocol):
    def install_key(self, server_key: ServerKey) -> None: ...


class KeyManagementAuthority:
    """Issues split keys. Keeps the master secret and the set of issued ids only.

    With ``state_dir`` set, parameters, master secret and the issued-id list
    are persisted under that directory (``params``, ``msk``, ``issued``).
    """

    def __init__(
        self,
        params: SystemParams,
        msk: crypto.MasterSecret,
        issued=(),
        state_dir: str | os.PathLike | None = None,
        rng: RandomSource | None = None,
    ):
        self.params = params
        self._msk = msk
        self._issued = set(issued)
        self._state_dir = Path(state_dir) if state_dir is not None else None
        self._rng = rng
        self._lock = threading.Lock()

    @classmethod
    def create(cls, profile="production", state_dir=None, rng=None, **init_kwargs):
        params, msk = crypto.init(profile, rng, **init_kwargs)
        kma = cls(params, msk, state_dir=state_dir, rng=rng)
        if kma._state_dir is not None:
            kma._state_dir.mkdir(parents=True, exist_ok=True)
            (kma._state_dir / "params").write_text(records.dumps(params))
            (kma._state_dir / "msk").write_text(records.dumps(msk))
            (kma._state_dir / "issued").write_text("")
        return kma

    @classmethod
    def load(cls, state_dir, rng=None):
        state_dir = Path(state_dir)
        params = records.loads((state_dir / "params").read_text(), crypto.SystemParams)
        msk = records.loads((state_dir / "msk").read_text(), crypto.MasterSecret)
        issued_path = state_dir / "issued"
        issued = issued_path.read_text().split() if issued_path.exists() else []
        return cls(params, msk, [bytes.fromhex(i).decode() for i in issued], state_dir, rng)

    @property
    def issued(self) -> frozenset:
        return frozenset(self._issued)

    def register(
        self, user_id: str, administration_point: KeyReceiver | None = None
    ) -> tuple[UserKey, ServerKey]:
        """Issue a key pair; the server share goes to ``administration_point`` if given."""
        user_id = normalize_token(user_id)
        with self._lock:
            if user_id in self._issued:
                raise DuplicateUserError(f"user {user_id!r} already registered")
            user_key, server_key = crypto.keygen(self.params, self._msk, user_id, self._rng)
            self._issued.add(user_id)
            if self._state_dir is not None:
                with open(self._state_dir / "issued", "a") as fh:
                    fh.write(user_id.encode().hex() + "\n")
        if administration_point is not None:
            administration_point.install_key(server_key)
        log.info("issued keys for %s", user_id)
        return user_key, server_key


def pd_condition_enc(
    params: SystemParams, user_key: UserKey, tree: Node, rng: RandomSource | None = None
) -> Node:
    return map_leaves(tree, lambda token: crypto.client_encrypt(params, user_key, token, rng))


def pd_sat_enc(
    params: SystemParams, user_key: UserKey, sat: SatTuple, rng: RandomSource | None = None
) -> tuple[ClientCiphertext, ClientCiphertext, ClientCiphertext]:
    return tuple(
        crypto.client_encrypt(params, user_key, normalize_token(item), rng) for item in sat
    )


def encrypt_policy(
    params: SystemParams,
    user_key: UserKey,
    policy: PolicyAst | tuple[Node, SatTuple],
    rng: RandomSource | None = None,
) -> EncryptedPolicyBundle:
    """Compile (if needed) and encrypt a policy for deployment by ``user_key``'s owner."""
    if isinstance(policy, PolicyAst):
        tree, sat = compile_condition(policy.condition), policy.sat
    else:
        tree, sat = policy
    return EncryptedPolicyBundle(
        user_key.user_id,
        pd_sat_enc(params, user_key, sat, rng),
        pd_condition_enc(params, user_key, tree, rng),
    )


def pe_sat_enc(
    params: SystemParams, user_key: UserKey, sat: SatTuple, rng: RandomSource | None = None
) -> EncryptedRequest:
    trapdoors = tuple(
        crypto.gen_trapdoor(params, user_key, normalize_token(item), rng) for item in sat
    )
    return EncryptedRequest(user_key.user_id, trapdoors)


def pe_attributes_enc(
    params: SystemParams,
    user_key: UserKey,
    assignment: AttributeAssignment,
    rng: RandomSource | None = None,
) -> EncryptedAttributes:
    rng = rng or secrets.SystemRandom()
    tokens = sorted(expand_attributes(assignment))
    # shuffle so trapdoor order says nothing about token order; sorting first
    # keeps replays under a fixed rng bit-identical
    for i in reversed(range(1, len(tokens))):
        j = rng.randrange(0, i + 1)
        tokens[i], tokens[j] = tokens[j], tokens[i]
    trapdoors: tuple[Trapdoor, ...] = tuple(
        crypto.gen_trapdoor(params, user_key, token, rng) for token in tokens
    )
    return EncryptedAttributes(user_key.user_id, trapdoors)
