"""Encrypted policy enforcement for outsourced environments."""

from .clients import (
    EncryptedAttributes,
    EncryptedPolicyBundle,
    EncryptedRequest,
    KeyManagementAuthority,
    encrypt_policy,
    pd_condition_enc,
    pd_sat_enc,
    pe_attributes_enc,
    pe_sat_enc,
)
from .crypto import init, keygen
from .language import parse_attributes, parse_policy, render_policy
from .policy import Numeric, SatTuple, compile_condition, evaluate_plaintext, expand_attributes
from .service import Decision, Outcome, PolicyRecord, Provider

__version__ = "0.1.0"

__all__ = [
    "Decision",
    "EncryptedAttributes",
    "EncryptedPolicyBundle",
    "EncryptedRequest",
    "KeyManagementAuthority",
    "Numeric",
    "Outcome",
    "PolicyRecord",
    "Provider",
    "SatTuple",
    "compile_condition",
    "encrypt_policy",
    "evaluate_plaintext",
    "expand_attributes",
    "init",
    "keygen",
    "parse_attributes",
    "parse_policy",
    "pd_condition_enc",
    "pd_sat_enc",
    "pe_attributes_enc",
    "pe_sat_enc",
    "render_policy",
]
