"""Command-line entry point.

Exit codes: 0 permit/success, 1 deny, 2 rejected principal, 64 usage error,
65 malformed policy or attribute file, 66 missing key/parameter/input file.
"""

from __future__ import annotations

import argparse
import logging
import random
import secrets
import sys
from pathlib import Path

from . import bench, crypto, records
from .clients import (
    DuplicateUserError,
    KeyManagementAuthority,
    encrypt_policy,
    pe_attributes_enc,
    pe_sat_enc,
)
from .language import parse_attributes, parse_policies
from .policy import PolicyError, SatTuple
from .service import PrincipalRejected, Provider

EX_OK, EX_DENY, EX_REJECTED = 0, 1, 2
EX_USAGE, EX_DATAERR, EX_NOINPUT = 64, 65, 66
ROLES = ("admin", "requester", "pip")

log = logging.getLogger("espoon")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _rng(args):
    return random.Random(args.seed) if args.seed is not None else secrets.SystemRandom()


def _read(path: Path, what: str) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise CliError(f"{what} not found: {path}", EX_NOINPUT) from None


def _load_params(args) -> crypto.SystemParams:
    return records.loads(_read(Path(args.params) / "params", "parameter file"), crypto.SystemParams)


def _user_dir(args) -> Path:
    return Path(args.params) / "users"


def _load_user(args, user_id: str, role: str) -> crypto.UserKey:
    key = records.loads(_read(_user_dir(args) / f"{user_id}.key", f"key file for {user_id!r}"), crypto.UserKey)
    role_path = _user_dir(args) / f"{user_id}.role"
    if role_path.exists() and role_path.read_text().strip() != role:
        raise CliError(f"{user_id!r} is registered as {role_path.read_text().strip()}, not {role}", EX_USAGE)
    return key


def _provider(args, params) -> Provider:
    if args.store is None:
        raise CliError("--store is required", EX_USAGE)
    return Provider(params, args.store)


def cmd_kma_init(args) -> int:
    state = Path(args.params)
    if (state / "msk").exists():
        raise CliError(f"{state} already holds a master secret", EX_USAGE)
    kma = KeyManagementAuthority.create(args.profile, state, _rng(args))
    print(f"initialised {args.profile} parameters in {state} (|p|={kma.params.p.bit_length()})")
    return EX_OK


def cmd_register(args) -> int:
    if not (Path(args.params) / "msk").exists():
        raise CliError(f"no key authority state in {args.params}", EX_NOINPUT)
    kma = KeyManagementAuthority.load(args.params, _rng(args))
    provider = _provider(args, kma.params)
    try:
        user_key, _ = kma.register(args.user, provider.admin)
    except DuplicateUserError as exc:
        raise CliError(str(exc), EX_USAGE) from None
    users = _user_dir(args)
    users.mkdir(parents=True, exist_ok=True)
    (users / f"{user_key.user_id}.key").write_text(records.dumps(user_key))
    (users / f"{user_key.user_id}.role").write_text(args.role + "\n")
    print(f"registered {user_key.user_id} as {args.role}")
    return EX_OK


def cmd_deploy(args) -> int:
    params = _load_params(args)
    user_key = _load_user(args, args.user, "admin")
    policies = parse_policies(_read(Path(args.policy), "policy file"))
    if not policies:
        raise CliError(f"no policies in {args.policy}", EX_DATAERR)
    provider = _provider(args, params)
    rng = _rng(args)
    for ast in policies:
        policy_id = provider.admin.deploy(args.user, encrypt_policy(params, user_key, ast, rng))
        print(f"deployed policy {policy_id}")
    return EX_OK


def cmd_revoke(args) -> int:
    provider = _provider(args, _load_params(args))
    if provider.admin.revoke(args.user):
        print(f"revoked {args.user}")
    else:
        print(f"no key held for {args.user}; nothing to revoke", file=sys.stderr)
    return EX_OK


def cmd_request(args) -> int:
    params = _load_params(args)
    provider = _provider(args, params)
    rng = _rng(args)
    requester = _load_user(args, args.user, "requester")
    pip = _load_user(args, args.pip, "pip")
    assignment = parse_attributes(_read(Path(args.attrs), "attribute file")) if args.attrs else {}
    request = pe_sat_enc(params, requester, SatTuple(args.subject, args.action, args.target), rng)
    attributes = pe_attributes_enc(params, pip, assignment, rng)
    decision = provider.pep.handle(requester.user_id, request, attributes)
    if decision.rejected:
        print(f"REJECTED ({decision.reason})")
        return EX_REJECTED
    if decision.permitted:
        print(f"PERMIT (policy {decision.policy_id})")
        return EX_OK
    print("DENY")
    return EX_DENY


def cmd_bench(args) -> int:
    if args.profile == "production" and args.params is None:
        params = msk = None
    else:
        params, msk = crypto.init(args.profile, random.Random(args.seed or 0))
    if args.params is not None:
        params = _load_params(args)
        msk = records.loads(_read(Path(args.params) / "msk", "master secret"), crypto.MasterSecret)
    workbench = bench.Workbench(params, msk, seed=args.seed or 0)
    names = bench.SCENARIOS if args.scenario == "all" else (args.scenario,)
    samples, fits = [], {}
    for name in names:
        got, got_fits = bench.run_scenario(name, iterations=args.iterations, bench=workbench)
        samples += got
        fits.update(got_fits)
    if args.out:
        bench.write_csv(samples, args.out)
    else:
        bench.write_csv(samples, sys.stdout)
    for scenario, fit in fits.items():
        print(
            f"{scenario}: slope={fit.slope:.4f} ms/unit intercept={fit.intercept:.4f} ms r2={fit.r2:.4f}",
            file=sys.stderr,
        )
    return EX_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="espoon", description="Encrypted policy enforcement")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, help="deterministic randomness (testing only)")
        return p

    p = add("kma-init", cmd_kma_init, "create system parameters and the master secret")
    p.add_argument("--params", required=True, metavar="DIR")
    p.add_argument("--profile", default="production", choices=sorted(crypto.PROFILES))

    p = add("register", cmd_register, "issue a split key pair for a user")
    p.add_argument("--params", required=True, metavar="DIR")
    p.add_argument("--store", required=True, metavar="DIR")
    p.add_argument("--user", required=True, metavar="ID")
    p.add_argument("--role", default="requester", choices=ROLES)

    p = add("deploy", cmd_deploy, "encrypt and deploy the policies in a file")
    p.add_argument("--params", required=True, metavar="DIR")
    p.add_argument("--store", required=True, metavar="DIR")
    p.add_argument("--user", required=True, metavar="ID", help="admin user id")
    p.add_argument("--policy", required=True, metavar="FILE")

    p = add("revoke", cmd_revoke, "remove a user's server key")
    p.add_argument("--params", required=True, metavar="DIR")
    p.add_argument("--store", required=True, metavar="DIR")
    p.add_argument("--user", required=True, metavar="ID")

    p = add("request", cmd_request, "evaluate an access request")
    p.add_argument("--params", required=True, metavar="DIR")
    p.add_argument("--store", required=True, metavar="DIR")
    p.add_argument("--user", required=True, metavar="ID", help="requester id")
    p.add_argument("--pip", default="pip", metavar="ID", help="PIP identity (default: pip)")
    p.add_argument("--attrs", metavar="FILE")
    p.add_argument("subject")
    p.add_argument("action")
    p.add_argument("target")

    p = add("bench", cmd_bench, "run a benchmark scenario and write CSV")
    p.add_argument("scenario", choices=bench.SCENARIOS + ("all",))
    p.add_argument("--iterations", type=int, default=bench.DEFAULT_ITERATIONS)
    p.add_argument("--profile", default="production", choices=sorted(crypto.PROFILES))
    p.add_argument("--params", metavar="DIR", help="reuse parameters from a kma-init directory")
    p.add_argument("--out", metavar="FILE")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench" and args.iterations < bench.MIN_ITERATIONS:
        parser.error(f"--iterations must be at least {bench.MIN_ITERATIONS}")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"espoon: {exc}", file=sys.stderr)
        return exc.code
    except PrincipalRejected as exc:
        print(f"REJECTED ({exc.reason}): {exc.user_id}", file=sys.stderr)
        return EX_REJECTED
    except (PolicyError, records.RecordError) as exc:
        print(f"espoon: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())
