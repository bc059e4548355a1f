import random

import pytest

from espoon import crypto, records
from espoon.clients import EncryptedAttributes, EncryptedRequest, encrypt_policy
from espoon.language import parse_policy
from espoon.policy import SatTuple, map_leaves
from espoon.service import PolicyRecord


@pytest.fixture(scope="module")
def objects(toy):
    params, msk = toy
    rng = random.Random(3)
    user_key, server_key = crypto.keygen(params, msk, "admin-1", rng)
    ct = crypto.client_encrypt(params, user_key, "w", rng)
    td = crypto.gen_trapdoor(params, user_key, "w", rng)
    bundle = encrypt_policy(
        params, user_key, parse_policy("IF a=1 OR 2 OF (b<3#2, c=x, d>=1#1) THEN CAN <s, a, t>"), rng
    )
    record = PolicyRecord(
        7,
        "admin-1",
        tuple(crypto.server_reencrypt(params, server_key, c) for c in bundle.sat_ciphertexts),
        map_leaves(bundle.condition_tree, lambda c: crypto.server_reencrypt(params, server_key, c)),
    )
    return [
        params, msk, user_key, server_key, ct, crypto.server_reencrypt(params, server_key, ct), td,
        SatTuple("doctor", "read", "record-42"), bundle, record,
        EncryptedRequest("r", (td, td, td)), EncryptedAttributes("pip", ()),
    ]


def test_round_trip_every_type(objects):
    for obj in objects:
        text = records.dumps(obj)
        assert records.loads(text) == obj
        assert records.loads(text, type(obj)) == obj


def test_format_is_tagged_lowercase_hex():
    key = crypto.ServerKey("Bob", 0xABCDEF)
    assert records.dumps(key) == "ServerKey\n" + "Bob".encode().hex() + "\nabcdef\n"


def test_policy_id_written_in_decimal(objects):
    record = objects[-3]
    assert records.dumps(record).splitlines()[1] == "7"


def test_load_errors():
    with pytest.raises(records.RecordError):
        records.loads("ServerKey\n626f62\n")
    with pytest.raises(records.RecordError):
        records.loads("ServerKey\n626f62\nABC\n")
    with pytest.raises(records.RecordError):
        records.loads("Mystery\n1\n")
    with pytest.raises(records.RecordError):
        records.loads(records.dumps(crypto.Trapdoor(1, 2)), crypto.ServerKey)
    with pytest.raises(records.RecordError):
        records.dumps(object())
