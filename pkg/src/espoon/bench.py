"""Benchmark scenarios for deployment, search and condition evaluation.

Workloads are built from a seeded RNG so repeated runs time identical inputs;
only the measured durations vary. Each sample reports the mean and standard
deviation over ``iterations`` timed calls, after ``WARMUP`` discarded calls.
"""

from __future__ import annotations

import csv
import gc
import random
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from . import crypto
from .clients import encrypt_policy, pd_condition_enc, pd_sat_enc, pe_attributes_enc, pe_sat_enc
from .policy import And, Numeric, NumericCmp, SatTuple, StringEq, compile_condition
from .service import AdministrationPoint, KeyStore, PolicyDecisionPoint, PolicyStore

DEFAULT_ITERATIONS = 100
MIN_ITERATIONS = 30
WARMUP = 10
CSV_COLUMNS = ("scenario", "parameter", "mean_ms", "stddev_ms", "iterations")

# Informational reference timings from older hardware (2.2 GHz Core2 Duo).
REFERENCE_MS = {"pd-sat-enc": 46.44, "pd-sat-re-enc": 11.65, "sat-match-per-policy": 0.5}


@dataclass(frozen=True)
class BenchSample:
    scenario: str
    parameter: int
    mean_ms: float
    stddev_ms: float
    iterations: int


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    r2: float


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> FitReport:
    slope, intercept = statistics.linear_regression(xs, ys)
    mean_y = statistics.fmean(ys)
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitReport(slope, intercept, min(1.0, max(0.0, r2)))


def fit_samples(samples: Iterable[BenchSample], predictor: Callable[[int], float] = float) -> FitReport:
    samples = list(samples)
    return fit_linear([predictor(s.parameter) for s in samples], [s.mean_ms for s in samples])


def measure(
    scenario: str, parameter: int, fn: Callable[[], object], iterations: int = DEFAULT_ITERATIONS
) -> BenchSample:
    return measure_interleaved([(scenario, parameter, fn)], iterations)[0]


def measure_interleaved(
    cases: Sequence[tuple[str, int, Callable[[], object]]],
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
) -> list[BenchSample]:
    """Time several cases round-robin, one call of each per round.

    Rounds visit the cases in a shuffled order, so slow drift in machine
    speed spreads over all cases instead of biasing whichever ran last.
    """
    if iterations < MIN_ITERATIONS:
        raise ValueError(f"at least {MIN_ITERATIONS} iterations are required")
    for _, _, fn in cases:
        for _ in range(WARMUP):
            fn()
    order = list(range(len(cases)))
    shuffler = random.Random(seed)
    times: list[list[float]] = [[] for _ in cases]
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(iterations):
            shuffler.shuffle(order)
            for i in order:
                fn = cases[i][2]
                start = time.perf_counter()
                fn()
                times[i].append((time.perf_counter() - start) * 1000.0)
    finally:
        if gc_was_enabled:
            gc.enable()
    return [
        BenchSample(scenario, parameter, statistics.fmean(t), statistics.stdev(t), iterations)
        for (scenario, parameter, _), t in zip(cases, times)
    ]


def write_csv(samples: Iterable[BenchSample], out) -> None:
    """Write samples to a path or an open text stream."""
    if hasattr(out, "write"):
        _write_rows(samples, out)
    else:
        with open(out, "w", newline="") as fh:
            _write_rows(samples, fh)


def _write_rows(samples, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(CSV_COLUMNS)
    for s in samples:
        writer.writerow([s.scenario, s.parameter, f"{s.mean_ms:.6f}", f"{s.stddev_ms:.6f}", s.iterations])


class Workbench:
    """A key authority, one admin, one requester, one PIP and an in-memory provider."""

    def __init__(self, params=None, msk=None, seed: int = 0):
        self.rng = random.Random(seed)
        if params is None:
            params, msk = crypto.init("production", self.rng)
        self.params, self.msk = params, msk
        self.key_store = KeyStore()
        self.policy_store = PolicyStore()
        self.admin = AdministrationPoint(params, self.key_store, self.policy_store)
        self.pdp = PolicyDecisionPoint(params, self.key_store, self.policy_store)
        self.keys = {}
        for user in ("admin", "requester", "pip"):
            user_key, server_key = crypto.keygen(params, msk, user, self.rng)
            self.key_store.add(server_key)
            self.keys[user] = (user_key, server_key)

    def user_key(self, user: str):
        return self.keys[user][0]

    def server_key(self, user: str):
        return self.keys[user][1]


def deployment_condition(m: int, n: int, bits: int = 4):
    """``m`` string comparisons and ``n`` worst-case numeric ones, ANDed together."""
    if m + n == 0:
        raise ValueError("condition needs at least one comparison")
    items = [StringEq(f"attributeName{i}", f"attributeValue{i}") for i in range(1, m + 1)]
    worst = (1 << bits) - 1  # "< 2^s - 1" compiles to s leaves
    items += [NumericCmp(f"numName{i}", "<", worst, bits) for i in range(1, n + 1)]
    return items[0] if len(items) == 1 else And(tuple(items))


def _series_label(m_values, n_values) -> str:
    if all(n == 0 for n in n_values):
        return "string"
    if all(m == 0 for m in m_values):
        return "numeric"
    return "mixed"


def bench_deploy_condition(
    m_values: Sequence[int],
    n_values: Sequence[int],
    bits: int = 4,
    *,
    iterations: int = DEFAULT_ITERATIONS,
    bench: Workbench | None = None,
) -> list[BenchSample]:
    """Time client encryption and server re-encryption of condition trees.

    ``m_values``/``n_values`` are paired up (a single value is broadcast);
    the sample parameter is the comparison count ``m + n``.
    """
    m_values, n_values = list(m_values), list(n_values)
    if not m_values or not n_values:
        raise ValueError("ranges must be non-empty")
    if len(m_values) == 1:
        m_values = m_values * len(n_values)
    if len(n_values) == 1:
        n_values = n_values * len(m_values)
    if len(m_values) != len(n_values):
        raise ValueError("m and n ranges must have equal length or length one")
    bench = bench or Workbench()
    label = _series_label(m_values, n_values)
    cases = []
    for m, n in zip(m_values, n_values):
        cases += _deploy_cases(bench, label, m + n, compile_condition(deployment_condition(m, n, bits)))
    return measure_interleaved(cases, iterations)


def _deploy_cases(bench: Workbench, label: str, parameter: int, tree) -> list:
    params, user_key, server_key = bench.params, bench.user_key("admin"), bench.server_key("admin")
    encrypted = pd_condition_enc(params, user_key, tree, bench.rng)
    return [
        (f"pd-condition-enc/{label}", parameter,
         lambda: pd_condition_enc(params, user_key, tree, bench.rng)),
        (f"pd-condition-re-enc/{label}", parameter,
         lambda: bench.admin.reencrypt_tree(server_key, encrypted)),
    ]


def bench_deploy_bits(
    bits_values: Sequence[int],
    *,
    iterations: int = DEFAULT_ITERATIONS,
    bench: Workbench | None = None,
) -> list[BenchSample]:
    """One numeric comparison ``attributeName < 2^s - 1`` for each bit width ``s``."""
    if not bits_values:
        raise ValueError("ranges must be non-empty")
    bench = bench or Workbench()
    cases = []
    for bits in bits_values:
        tree = compile_condition(NumericCmp("attributeName", "<", (1 << bits) - 1, bits))
        cases += _deploy_cases(bench, "bits", bits, tree)
    return measure_interleaved(cases, iterations)


def bench_pe_attributes(
    counts: Sequence[int],
    mode: str = "string",
    bits: int = 4,
    *,
    iterations: int = DEFAULT_ITERATIONS,
    bench: Workbench | None = None,
) -> list[BenchSample]:
    """Trapdoor generation by the PIP for ``count`` string or numeric attributes."""
    if not counts:
        raise ValueError("ranges must be non-empty")
    bench = bench or Workbench()
    params, user_key = bench.params, bench.user_key("pip")
    cases = []
    for count in counts:
        assignment = _attributes(count, mode, bits)
        cases.append((
            f"pe-attributes-enc/{mode}", count,
            lambda assignment=assignment: pe_attributes_enc(params, user_key, assignment, bench.rng),
        ))
    return measure_interleaved(cases, iterations)


def bench_sat_table(
    *, iterations: int = DEFAULT_ITERATIONS, bench: Workbench | None = None
) -> list[BenchSample]:
    bench = bench or Workbench()
    params, user_key, server_key = bench.params, bench.user_key("admin"), bench.server_key("admin")
    sat = SatTuple("doctor", "read", "record-42")
    encrypted = pd_sat_enc(params, user_key, sat, bench.rng)
    return measure_interleaved([
        ("pd-sat-enc", 3, lambda: pd_sat_enc(params, user_key, sat, bench.rng)),
        ("pd-sat-re-enc", 3, lambda: bench.admin.reencrypt_sat(server_key, encrypted)),
    ], iterations)


def bench_sat_search(
    policy_counts: Sequence[int],
    *,
    iterations: int = DEFAULT_ITERATIONS,
    bench: Workbench | None = None,
) -> tuple[list[BenchSample], FitReport]:
    """Encrypted tuple search over stores of increasing size.

    Each store holds random non-matching policies plus one matching policy
    in the middle. Stores are prefixes of one workload, so smaller stores
    are subsets of larger ones.
    """
    counts = list(policy_counts)
    if not counts or counts != sorted(counts) or counts[0] < 1:
        raise ValueError("policy counts must be positive and ascending")
    bench = bench or Workbench()
    params, admin_key = bench.params, bench.user_key("admin")
    target = SatTuple("doctor", "read", "record-42")
    leaf = compile_condition(StringEq("Location", "HR-WARD"))
    server_key = bench.server_key("admin")

    def stored(bundle):
        return (
            bench.admin.reencrypt_sat(server_key, bundle.sat_ciphertexts),
            bench.admin.reencrypt_tree(server_key, bundle.condition_tree),
        )

    others = []
    for i in range(counts[-1] - 1):
        sat = SatTuple(f"subject{i}", f"action{bench.rng.randrange(8)}", f"target{i}")
        others.append(stored(encrypt_policy(params, admin_key, (leaf, sat), bench.rng)))
    matching = stored(encrypt_policy(params, admin_key, (leaf, target), bench.rng))
    request = pe_sat_enc(params, bench.user_key("requester"), target, bench.rng)

    cases = []
    for count in counts:
        store = PolicyStore()
        chosen = others[:count - 1]
        chosen.insert(len(chosen) // 2, matching)
        for sat_cts, tree in chosen:
            store.add("admin", sat_cts, tree)
        pdp = PolicyDecisionPoint(params, bench.key_store, store)
        found = pdp.sat_search("requester", request)
        if len(found) != 1:
            raise RuntimeError(f"expected exactly one match in a store of {count}, got {len(found)}")
        cases.append(("pe-sat-search", count, lambda pdp=pdp: pdp.sat_search("requester", request)))
    samples = measure_interleaved(cases, iterations)
    return samples, fit_samples(samples)


def _attributes(count: int, mode: str, bits: int) -> dict:
    if mode == "string":
        return {f"attributeName{i}": f"attributeValue{i}" for i in range(1, count + 1)}
    if mode == "numeric":
        return {f"numName{i}": Numeric((1 << bits) - 2, bits) for i in range(1, count + 1)}
    raise ValueError(f"unknown mode {mode!r}")


def bench_condition_eval(
    n_values: Sequence[int],
    mode: str = "string",
    bits: int = 5,
    *,
    iterations: int = DEFAULT_ITERATIONS,
    bench: Workbench | None = None,
) -> tuple[list[BenchSample], FitReport]:
    """Encrypted condition evaluation with ``n`` attributes against ``n`` comparisons.

    Numeric mode uses worst-case comparisons (``s`` leaves each) and ``s``
    trapdoors per attribute. The fit regresses mean time on ``n * s^2``.
    """
    if not n_values:
        raise ValueError("ranges must be non-empty")
    bench = bench or Workbench()
    params = bench.params
    cases = []
    for n in n_values:
        condition = deployment_condition(n, 0) if mode == "string" else deployment_condition(0, n, bits)
        bundle = encrypt_policy(
            params, bench.user_key("admin"), (compile_condition(condition), SatTuple("s", "a", "t")),
            bench.rng,
        )
        store = PolicyStore()
        AdministrationPoint(params, bench.key_store, store).deploy("admin", bundle)
        record = store.records()[0]
        pdp = PolicyDecisionPoint(params, bench.key_store, store)
        attributes = pe_attributes_enc(params, bench.user_key("pip"), _attributes(n, mode, bits), bench.rng)
        if not pdp.condition_eval("pip", attributes, record).permitted:
            raise RuntimeError(f"{mode} workload with n={n} should be permitted")
        cases.append((
            f"pe-condition-eval/{mode}", n,
            lambda pdp=pdp, attributes=attributes, record=record: pdp.condition_eval("pip", attributes, record),
        ))
    samples = measure_interleaved(cases, iterations)
    scale = bits * bits if mode == "numeric" else 1
    return samples, fit_samples(samples, lambda n: n * scale)


SCENARIOS = (
    "deploy-string",
    "deploy-numeric",
    "deploy-bits",
    "pe-attributes",
    "sat-table",
    "sat-search",
    "condition-eval",
)


def run_scenario(
    name: str, *, iterations: int = DEFAULT_ITERATIONS, seed: int = 0, bench: Workbench | None = None
) -> tuple[list[BenchSample], dict[str, FitReport]]:
    """Run one named scenario with the default parameter sweep."""
    bench = bench or Workbench(seed=seed)
    kw = dict(iterations=iterations, bench=bench)
    fits: dict[str, FitReport] = {}
    if name == "deploy-string":
        samples = bench_deploy_condition(range(1, 11), [0], **kw)
    elif name == "deploy-numeric":
        samples = bench_deploy_condition([0], range(1, 11), 4, **kw)
    elif name == "deploy-bits":
        samples = bench_deploy_bits(range(2, 21), **kw)
    elif name == "pe-attributes":
        samples = bench_pe_attributes(range(1, 11), "string", **kw)
        samples += bench_pe_attributes(range(1, 11), "numeric", 4, **kw)
    elif name == "sat-table":
        samples = bench_sat_table(**kw)
    elif name == "sat-search":
        samples, fits["pe-sat-search"] = bench_sat_search([50] + list(range(100, 1001, 100)), **kw)
    elif name == "condition-eval":
        strings, fits["pe-condition-eval/string"] = bench_condition_eval(range(1, 11), "string", **kw)
        numerics, fits["pe-condition-eval/numeric"] = bench_condition_eval(range(1, 11), "numeric", 5, **kw)
        samples = strings + numerics
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    for scenario in sorted({s.scenario for s in samples}):
        if scenario not in fits:
            series = [s for s in samples if s.scenario == scenario]
            if len(series) > 1:
                fits[scenario] = fit_samples(series)
    return samples, fits
