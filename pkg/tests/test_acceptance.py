"""Exit criteria. Each test prints one ``ACCEPTANCE <name>: PASS|FAIL`` line."""

import itertools
import operator
import random
import time

import pytest

from espoon import bench, crypto
from espoon.clients import KeyManagementAuthority, encrypt_policy, pe_attributes_enc, pe_sat_enc
from espoon.language import parse_policy, render_policy, PolicyAst
from espoon.policy import (
    And,
    KOf,
    Numeric,
    NumericCmp,
    Or,
    SatTuple,
    StringEq,
    compile_condition,
    compile_numeric,
    evaluate_expression,
    evaluate_plaintext,
    expand_attributes,
)
from espoon.service import Outcome, Provider
from conftest import TINY, FixedRandom

WARD_POLICY = "IF Location=HR-WARD AND AT>9#5 AND AT<17#5 THEN CAN <doctor, read, record-42>"
WARD_SAT = ("doctor", "read", "record-42")


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        assert ok, f"{name}: {detail}"

    return emit


def test_sde_correctness(production, report):
    params, msk = production
    rng = random.Random(1)
    started = time.perf_counter()
    users = [crypto.keygen(params, msk, f"user{i}", rng) for i in range(3)]
    tokens = [f"token-{rng.getrandbits(64):016x}" for _ in range(1000)]
    assert len(set(tokens)) == 1000
    stored, inverses, pairs = [], [], set()
    false_negatives = 0
    for n, token in enumerate(tokens):
        i, j = n % 3, (n // 3) % 3  # every (encryptor, requester) pair is exercised
        pairs.add((i, j))
        (ui, si), (uj, sj) = users[i], users[j]
        ct = crypto.server_reencrypt(params, si, crypto.client_encrypt(params, ui, token, rng))
        T = crypto.combine(params, sj, crypto.gen_trapdoor(params, uj, token, rng))
        false_negatives += not crypto.match_test(params, ct, T)
        stored.append(ct)
        inverses.append(crypto.invert(params, T))
    false_positives = 0
    for _ in range(10_000):
        a, b = rng.sample(range(1000), 2)
        false_positives += crypto.matches_inverse(params, stored[a], inverses[b])
    elapsed = time.perf_counter() - started
    report(
        "sde-correctness",
        false_negatives == 0 and false_positives == 0 and len(pairs) == 9 and elapsed < 120,
        f"fn={false_negatives} fp={false_positives} pairs={len(pairs)} {elapsed:.1f}s",
    )


def test_tiny_group_trace(report):
    # independent oracle: plain modular arithmetic, no library code
    p, q, g, x, x1, x2, sig, r, r2 = 23, 11, 2, 7, 4, 3, 3, 5, 2
    want = dict(c1hat=pow(g, r + sig, p))
    want["c2hat"] = pow(want["c1hat"], x1, p)
    want["c1"] = pow(want["c1hat"], x2, p) * want["c2hat"] % p
    want["t1"] = pow(g, (sig - r2) % q, p)
    want["t2"] = pow(g, (x2 * r2 + x1 * sig) % q, p)
    want["T"] = pow(want["t1"], x2, p) * want["t2"] % p
    assert want == dict(c1hat=3, c2hat=12, c1=2, t1=2, t2=13, T=12)

    params, msk = crypto.init(TINY, FixedRandom(x), prf_key=b"k")
    user_key, server_key = crypto.keygen(params, msk, "A", FixedRandom(x1))
    ct = crypto.encrypt_sigma(params, user_key.x1, sig, r)
    stored = crypto.server_reencrypt(params, server_key, ct)
    td = crypto.trapdoor_sigma(params, user_key.x1, sig, r2)
    T = crypto.combine(params, server_key, td)
    got = dict(c1hat=ct.c1hat, c2hat=ct.c2hat, c1=stored.c1, t1=td.t1, t2=td.t2, T=T)
    matched = crypto.match_test(params, stored, T)
    report("tiny-group-trace", got == want and server_key.x2 == x2 and matched, str(got))


PREDICATES = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge, "=": operator.eq}


def test_range_compilation_oracle(report):
    started = time.perf_counter()
    checks = failures = 0
    for op, s in itertools.product(PREDICATES, range(1, 7)):
        for k in range(1 << s):
            tree = compile_numeric("v", op, k, s)
            for v in range(1 << s):
                checks += 1
                tokens = expand_attributes({"v": Numeric(v, s)})
                failures += evaluate_plaintext(tree, tokens) != PREDICATES[op](v, k)
    elapsed = time.perf_counter() - started
    report("range-compilation", failures == 0 and elapsed < 10, f"{checks} checks, {failures} failures, {elapsed:.1f}s")


STRING_ATTRS = {"Location": ["HR-WARD", "ICU", "ER"], "Role": ["doctor", "nurse"]}
NUMERIC_ATTRS = ("AT", "Age")
SUBJECTS, ACTIONS, TARGETS = ("doctor", "nurse"), ("read", "write"), ("record-42", "record-7")


def random_comparison(rng, widths):
    if rng.random() < 0.4:
        name = rng.choice(sorted(STRING_ATTRS))
        return StringEq(name, rng.choice(STRING_ATTRS[name]))
    name = rng.choice(NUMERIC_ATTRS)
    bits = widths[name]
    return NumericCmp(name, rng.choice(list(PREDICATES)), rng.randrange(1 << bits), bits)


def random_expression(rng, widths, budget):
    if budget == 1 or rng.random() < 0.25:
        return random_comparison(rng, widths), 1
    used, items = 0, []
    while used < budget and (len(items) < 2 or rng.random() < 0.5):
        item, cost = random_expression(rng, widths, max(1, (budget - used) // 2))
        items.append(item)
        used += cost
        if used >= budget:
            break
    if len(items) == 1:
        return items[0], used
    kind = rng.randrange(3)
    if kind == 0:
        return And(tuple(items)), used
    if kind == 1:
        return Or(tuple(items)), used
    return KOf(rng.randint(1, len(items)), tuple(items)), used


def random_assignment(rng, widths):
    assignment = {}
    for name, values in STRING_ATTRS.items():
        if rng.random() < 0.8:
            assignment[name] = rng.choice(values)
    for name in NUMERIC_ATTRS:
        if rng.random() < 0.85:
            bits = widths[name] if rng.random() < 0.95 else widths[name] % 4 + 1
            assignment[name] = Numeric(rng.randrange(1 << bits), bits)
    return assignment


def plaintext_pipeline(policy_texts, sat, assignment):
    tokens = expand_attributes(assignment)
    for policy_id, text in enumerate(policy_texts, 1):
        ast = parse_policy(text)
        if tuple(ast.sat) != sat:
            continue
        holds = evaluate_plaintext(compile_condition(ast.condition), tokens)
        assert holds == evaluate_expression(ast.condition, assignment)
        if holds:
            return Outcome.PERMIT, policy_id
    return Outcome.DENY, None


@pytest.mark.slow
def test_encrypted_plaintext_equivalence(production, report):
    params, msk = production
    rng = random.Random(2026)
    kma = KeyManagementAuthority(params, msk, rng=rng)
    server_keys, user_keys = [], {}
    for user in ("admin", "admin2", "requester", "pip"):
        user_keys[user], server_key = kma.register(user)
        server_keys.append(server_key)
    trials, agree, permits = 1000, 0, 0
    started = time.perf_counter()
    for _ in range(trials):
        widths = {name: rng.randint(1, 4) for name in NUMERIC_ATTRS}
        texts, sats = [], []
        for _ in range(rng.randint(1, 3)):
            expr, _ = random_expression(rng, widths, rng.randint(1, 6))
            sats.append((rng.choice(SUBJECTS), rng.choice(ACTIONS), rng.choice(TARGETS)))
            texts.append(render_policy(PolicyAst(expr, SatTuple(*sats[-1]))))
        provider = Provider(params)
        for server_key in server_keys:
            provider.admin.install_key(server_key)
        for text in texts:
            admin = rng.choice(("admin", "admin2"))
            provider.admin.deploy(admin, encrypt_policy(params, user_keys[admin], parse_policy(text), rng))
        # mostly ask for a deployed tuple so the condition path is exercised
        if rng.random() < 0.75:
            request_sat = rng.choice(sats)
        else:
            request_sat = (rng.choice(SUBJECTS), rng.choice(ACTIONS), rng.choice(TARGETS))
        assignment = random_assignment(rng, widths)
        decision = provider.pep.handle(
            "requester",
            pe_sat_enc(params, user_keys["requester"], SatTuple(*request_sat), rng),
            pe_attributes_enc(params, user_keys["pip"], assignment, rng),
        )
        expected = plaintext_pipeline(texts, request_sat, assignment)
        agree += (decision.outcome, decision.policy_id) == expected
        permits += expected[0] is Outcome.PERMIT
    elapsed = time.perf_counter() - started
    # guard against a degenerate workload where everything denies
    balanced = 0.1 * trials < permits < 0.9 * trials
    report(
        "encrypted-plaintext-equivalence",
        agree == trials and balanced,
        f"{agree}/{trials} agree, {permits} permits, {elapsed:.1f}s",
    )


@pytest.fixture
def deployed(production):
    params, msk = production
    rng = random.Random(5)
    kma = KeyManagementAuthority(params, msk, rng=rng)
    provider = Provider(params)
    keys = {user: kma.register(user, provider.admin)[0] for user in ("A", "R", "R2", "pip")}
    provider.admin.deploy("A", encrypt_policy(params, keys["A"], parse_policy(WARD_POLICY), rng))

    def ask(requester, attrs):
        return provider.pep.handle(
            requester,
            pe_sat_enc(params, keys[requester], SatTuple(*WARD_SAT), rng),
            pe_attributes_enc(params, keys["pip"], attrs, rng),
        )

    return provider, ask


def test_ward_scenario(deployed, report):
    _, ask = deployed
    permit = ask("R", {"Location": "HR-WARD", "AT": Numeric(10, 5)})
    early = ask("R", {"Location": "HR-WARD", "AT": Numeric(8, 5)})
    elsewhere = ask("R", {"Location": "ICU", "AT": Numeric(10, 5)})
    ok = (
        permit.outcome is Outcome.PERMIT
        and early.outcome is Outcome.DENY and not early.rejected
        and elsewhere.outcome is Outcome.DENY and not elsewhere.rejected
    )
    report("ward-scenario", ok, f"{permit.outcome.value}/{early.outcome.value}/{elsewhere.outcome.value}")


def test_revocation(deployed, report):
    provider, ask = deployed
    attrs = {"Location": "HR-WARD", "AT": Numeric(10, 5)}
    assert ask("R", attrs).permitted
    provider.admin.revoke("R")
    rejected = ask("R", attrs)
    stored_before = provider.policy_store.records()
    provider.admin.revoke("A")
    other = ask("R2", attrs)
    ok = (
        rejected.rejected and rejected.reason == "revoked" and not rejected.permitted
        and other.permitted and not other.rejected
        and provider.policy_store.records() == stored_before
    )
    report("revocation", ok, f"revoked requester -> {rejected.reason}; other principal -> {other.outcome.value}")


@pytest.mark.slow
def test_performance_trends(production, report):
    started = time.perf_counter()
    workbench = bench.Workbench(*production, seed=0)
    samples, fits = [], {}
    for name in bench.SCENARIOS:
        got, got_fits = bench.run_scenario(name, iterations=bench.DEFAULT_ITERATIONS, bench=workbench)
        samples += got
        fits.update(got_fits)
    elapsed = time.perf_counter() - started

    def series(scenario):
        return {s.parameter: s.mean_ms for s in samples if s.scenario == scenario}

    checks = {}
    for scenario in ("pd-condition-enc/string", "pd-condition-re-enc/string",
                     "pd-condition-enc/numeric", "pd-condition-re-enc/numeric"):
        checks[f"{scenario} linear r2={fits[scenario].r2:.4f}"] = fits[scenario].r2 >= 0.95
    for scenario in ("pd-condition-enc/bits", "pd-condition-re-enc/bits"):
        checks[f"{scenario} linear r2={fits[scenario].r2:.4f}"] = fits[scenario].r2 >= 0.95
    search = series("pe-sat-search")
    checks[f"pe-sat-search 50..1000 linear r2={fits['pe-sat-search'].r2:.4f}"] = (
        min(search) == 50 and max(search) == 1000 and fits["pe-sat-search"].r2 >= 0.95
    )
    strings, numerics = series("pe-condition-eval/string"), series("pe-condition-eval/numeric")
    checks["numeric eval above string for n=1..10"] = sorted(strings) == list(range(1, 11)) and all(
        numerics[n] > strings[n] for n in range(1, 11)
    )
    sat = {s.scenario: s.mean_ms for s in samples if s.scenario.startswith("pd-sat")}
    checks[f"pd-sat-enc {sat['pd-sat-enc']:.3f} > pd-sat-re-enc {sat['pd-sat-re-enc']:.3f} ms"] = (
        sat["pd-sat-enc"] > sat["pd-sat-re-enc"]
    )
    checks[f"full bench {elapsed:.0f}s < 600s"] = elapsed < 600
    for label, ok in checks.items():
        report(f"performance: {label}", ok)
