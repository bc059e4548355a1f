"""The honest-but-curious provider: stores, administration point, PDP and PEP.

Only server key shares, server ciphertexts and trapdoors pass through here.
"""

from __future__ import annotations

import enum
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import crypto, records
from .clients import EncryptedAttributes, EncryptedPolicyBundle, EncryptedRequest
from .crypto import ServerCiphertext, ServerKey, SystemParams
from .policy import Gate, Leaf, Node, map_leaves

log = logging.getLogger(__name__)


class PrincipalRejected(Exception):
    """The principal has no server key: it was revoked or never registered."""

    def __init__(self, user_id: str, reason: str):
        super().__init__(f"{user_id}: {reason}")
        self.user_id = user_id
        self.reason = reason


@dataclass(frozen=True)
class PolicyRecord:
    policy_id: int
    admin_id: str
    sat_ciphertexts: tuple  # (S, A, T) ServerCiphertexts
    condition_tree: Node  # leaves hold ServerCiphertexts


@dataclass(frozen=True)
class Revocation:
    user_id: str


records.register(
    PolicyRecord,
    dict(
        policy_id=records.DEC,
        admin_id=records.STR,
        sat_ciphertexts=records.LIST,
        condition_tree=records.NODE,
    ),
)
records.register(Revocation, dict(user_id=records.STR))


class Outcome(enum.Enum):
    PERMIT = "Permit"
    DENY = "Deny"


@dataclass(frozen=True)
class Decision:
    outcome: Outcome
    policy_id: Optional[int] = None
    reason: Optional[str] = None  # "revoked" / "unknown" for rejected principals

    @property
    def permitted(self) -> bool:
        return self.outcome is Outcome.PERMIT

    @property
    def rejected(self) -> bool:
        return self.reason is not None


def _append_block(path: Path, obj) -> None:
    with open(path, "a") as fh:
        fh.write(records.dumps(obj) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


class KeyStore:
    """Server key shares by user id, optionally backed by an append log."""

    def __init__(self, path: str | os.PathLike | None = None):
        self._keys: dict[str, ServerKey] = {}
        self._revoked: set[str] = set()
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for block in records.split_blocks(self.path.read_text()):
                self._apply(records.loads(block))

    def _apply(self, entry) -> None:
        if isinstance(entry, ServerKey):
            self._keys[entry.user_id] = entry
            self._revoked.discard(entry.user_id)
        elif isinstance(entry, Revocation):
            self._keys.pop(entry.user_id, None)
            self._revoked.add(entry.user_id)
        else:
            raise records.RecordError(f"unexpected key store entry {type(entry).__name__}")

    def _write(self, entry) -> None:
        with self._lock:
            if self.path is not None:
                _append_block(self.path, entry)
            self._apply(entry)

    def add(self, server_key: ServerKey) -> None:
        if server_key.user_id in self._keys:
            raise ValueError(f"key store already holds a key for {server_key.user_id!r}")
        self._write(server_key)

    def remove(self, user_id: str) -> bool:
        if user_id not in self._keys:
            return False
        self._write(Revocation(user_id))
        return True

    def get(self, user_id: str) -> ServerKey:
        try:
            return self._keys[user_id]
        except KeyError:
            reason = "revoked" if user_id in self._revoked else "unknown"
            raise PrincipalRejected(user_id, reason) from None

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def user_ids(self) -> frozenset:
        return frozenset(self._keys)


class PolicyStore:
    """Deployed policy records in deployment order, optionally backed by an append log."""

    def __init__(self, path: str | os.PathLike | None = None):
        self._records: list[PolicyRecord] = []
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for block in records.split_blocks(self.path.read_text()):
                self._records.append(records.loads(block, PolicyRecord))

    def add(self, admin_id: str, sat_ciphertexts: tuple, tree: Node) -> PolicyRecord:
        with self._lock:
            next_id = self._records[-1].policy_id + 1 if self._records else 1
            record = PolicyRecord(next_id, admin_id, tuple(sat_ciphertexts), tree)
            if self.path is not None:
                _append_block(self.path, record)
            self._records.append(record)
        return record

    def records(self) -> tuple[PolicyRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self.records())


class AdministrationPoint:
    def __init__(self, params: SystemParams, key_store: KeyStore, policy_store: PolicyStore):
        self.params = params
        self.key_store = key_store
        self.policy_store = policy_store

    def install_key(self, server_key: ServerKey) -> None:
        self.key_store.add(server_key)

    def reencrypt_tree(self, server_key: ServerKey, tree: Node) -> Node:
        return map_leaves(tree, lambda ct: crypto.server_reencrypt(self.params, server_key, ct))

    def reencrypt_sat(self, server_key: ServerKey, sat_ciphertexts) -> tuple:
        return tuple(crypto.server_reencrypt(self.params, server_key, ct) for ct in sat_ciphertexts)

    def deploy(self, admin_id: str, bundle: EncryptedPolicyBundle) -> int:
        """Re-encrypt and store a policy; raises :class:`PrincipalRejected` for unknown admins."""
        server_key = self.key_store.get(admin_id)
        if len(bundle.sat_ciphertexts) != 3:
            raise ValueError("a policy needs exactly three tuple ciphertexts")
        sat = self.reencrypt_sat(server_key, bundle.sat_ciphertexts)
        tree = self.reencrypt_tree(server_key, bundle.condition_tree)
        record = self.policy_store.add(admin_id, sat, tree)
        log.info("deployed policy %d for %s", record.policy_id, admin_id)
        return record.policy_id

    def revoke(self, user_id: str) -> bool:
        """Drop a user's server key. Stored policies are left as they are."""
        removed = self.key_store.remove(user_id)
        if not removed:
            log.warning("revoke: no key held for %s", user_id)
        return removed


def _leaf_satisfied(params: SystemParams, ct: ServerCiphertext, inverses: list[int]) -> bool:
    return any(crypto.matches_inverse(params, ct, inv) for inv in inverses)


class PolicyDecisionPoint:
    def __init__(self, params: SystemParams, key_store: KeyStore, policy_store: PolicyStore):
        self.params = params
        self.key_store = key_store
        self.policy_store = policy_store

    def combined_inverses(self, user_id: str, trapdoors) -> list[int]:
        """``T^-1`` for each trapdoor, computed once and reused across leaves and records."""
        server_key = self.key_store.get(user_id)
        return [
            crypto.invert(self.params, crypto.combine(self.params, server_key, td))
            for td in trapdoors
        ]

    def sat_search(self, requester_id: str, request: EncryptedRequest) -> list[PolicyRecord]:
        """Records whose S, A and T items all match the request, in store order."""
        if len(request.sat_trapdoors) != 3:
            raise ValueError("a request needs exactly three tuple trapdoors")
        inverses = self.combined_inverses(requester_id, request.sat_trapdoors)
        return [
            record
            for record in self.policy_store.records()
            if all(
                crypto.matches_inverse(self.params, ct, inv)
                for ct, inv in zip(record.sat_ciphertexts, inverses)
            )
        ]

    def condition_eval(
        self, pip_id: str, attributes: EncryptedAttributes, record: PolicyRecord
    ) -> Decision:
        return self.evaluate_record(record, self.combined_inverses(pip_id, attributes.trapdoors))

    def evaluate_record(self, record: PolicyRecord, inverses: list[int]) -> Decision:
        if self.evaluate_tree(record.condition_tree, inverses):
            return Decision(Outcome.PERMIT, record.policy_id)
        return Decision(Outcome.DENY)

    def evaluate_tree(self, tree: Node, inverses: list[int]) -> bool:
        # every leaf is tried against every attribute trapdoor; gates do not short-circuit
        if isinstance(tree, Leaf):
            return _leaf_satisfied(self.params, tree.value, inverses)
        assert isinstance(tree, Gate)
        satisfied = [self.evaluate_tree(child, inverses) for child in tree.children]
        return sum(satisfied) >= tree.threshold


class PolicyEnforcementPoint:
    """Deny by default; the first matching policy whose condition holds permits."""

    def __init__(self, pdp: PolicyDecisionPoint):
        self.pdp = pdp

    def handle(
        self,
        requester_id: str,
        request: EncryptedRequest,
        attributes: EncryptedAttributes,
    ) -> Decision:
        try:
            self.pdp.key_store.get(requester_id)
            self.pdp.key_store.get(attributes.pip_id)
            matched = self.pdp.sat_search(requester_id, request)
            if matched:
                inverses = self.pdp.combined_inverses(attributes.pip_id, attributes.trapdoors)
                for record in matched:
                    decision = self.pdp.evaluate_record(record, inverses)
                    if decision.permitted:
                        return decision
        except PrincipalRejected as exc:
            log.info("rejected %s: %s", exc.user_id, exc.reason)
            return Decision(Outcome.DENY, reason=exc.reason)
        return Decision(Outcome.DENY)


class Provider:
    """Bundles the stores and service points, optionally persisted under one directory."""

    KEY_STORE_FILE = "keystore.log"
    POLICY_STORE_FILE = "policies.log"

    def __init__(self, params: SystemParams, store_dir: str | os.PathLike | None = None):
        if store_dir is not None:
            store_dir = Path(store_dir)
            store_dir.mkdir(parents=True, exist_ok=True)
            key_store = KeyStore(store_dir / self.KEY_STORE_FILE)
            policy_store = PolicyStore(store_dir / self.POLICY_STORE_FILE)
        else:
            key_store, policy_store = KeyStore(), PolicyStore()
        self.params = params
        self.key_store = key_store
        self.policy_store = policy_store
        self.admin = AdministrationPoint(params, key_store, policy_store)
        self.pdp = PolicyDecisionPoint(params, key_store, policy_store)
        self.pep = PolicyEnforcementPoint(self.pdp)
