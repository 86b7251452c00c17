"""Command-line entry point: ``ntfp <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from . import analytics, chipsim, ingest, keymask
from .attestation import (LoopbackTransport, ProverServer, SimProver, SocketTransport, Verdict, Verifier,
                          VerifierDB, default_firmware)
from .core import Method, TransformParams, bytes_to_bits, enroll
from .errors import FingerprintError, InvalidArgument
from .reference import EFFICIENCY_ROWS, LOWEST_FAILURE_ROWS, MIN_MEMORY_ROWS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3

_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(b|kib|kb|k|mib|mb|m|gib|gb|g)?\s*$", re.I)
_UNITS = {None: 1, "b": 1, "kib": 1024, "kb": 1024, "k": 1024, "mib": 1 << 20, "mb": 1 << 20, "m": 1 << 20,
          "gib": 1 << 30, "gb": 1 << 30, "g": 1 << 30}


class UsageError(Exception):
    pass


def parse_size(text: str) -> int:
    """Byte count from strings like ``65536``, ``64KiB`` or ``1MiB``."""
    mt = _SIZE_RE.match(str(text))
    if not mt:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    value = float(mt.group(1)) * _UNITS[mt.group(2).lower() if mt.group(2) else None]
    if value <= 0 or value != int(value):
        raise argparse.ArgumentTypeError(f"size must be a positive whole number of bytes: {text!r}")
    return int(value)


def parse_count(text: str) -> int:
    """Positive integer, accepting forms like ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad count {text!r}") from None
    if value < 1 or value != int(value):
        raise argparse.ArgumentTypeError(f"count must be a positive integer: {text!r}")
    return int(value)


def parse_prob(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad probability {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1]: {text!r}")
    return value


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Output:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout

    def records(self, rows: list[dict], columns: list[str] | None = None, title: str | None = None):
        if self.as_json:
            for r in rows:
                print(json.dumps(r, default=_json_default), file=self.stream)
            return
        if title:
            print(title, file=self.stream)
        if not rows:
            print("(no rows)", file=self.stream)
            return
        columns = columns or list(rows[0])
        cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
        print("  ".join(c.rjust(w) for c, w in zip(columns, widths)), file=self.stream)
        for row in cells:
            print("  ".join(v.rjust(w) for v, w in zip(row, widths)), file=self.stream)

    def line(self, text: str):
        if not self.as_json:
            print(text, file=self.stream)


def _json_default(o):
    if isinstance(o, (set, tuple)):
        return list(o)
    return str(o)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if v == 0:
            return "0"
        return f"{v:.4g}" if 1e-3 <= abs(v) < 1e5 else f"{v:.4e}"
    return str(v)


def _params_from(args) -> TransformParams:
    if args.method is None or args.n is None:
        raise UsageError("--method and -n are required")
    method = Method.parse(args.method)
    theta = args.theta if args.theta is not None else 0
    try:
        if method is Method.SNORM:
            if args.m not in (None, 1):
                raise UsageError("S-Norm takes no -m")
            return TransformParams.snorm(args.n, theta)
        if args.m is None:
            raise UsageError("D-Norm needs -m")
        return TransformParams.dnorm(args.n, args.m, theta)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None


def _add_params(p, method_default=None, n=None, m=None, theta=None):
    p.add_argument("--method", choices=["snorm", "dnorm"], default=method_default)
    p.add_argument("-n", type=int, default=n, help="bits per group")
    p.add_argument("-m", type=int, default=m, help="groups per block (D-Norm)")
    p.add_argument("--theta", type=int, default=theta, help="noise tolerance")


# predict

def _eff_table(out: Output):
    rows = []
    for r in EFFICIENCY_ROWS:
        eta = (analytics.snorm_efficiency(r.n, r.theta) if r.method == "snorm"
               else analytics.dnorm_efficiency(r.n, r.m, r.theta))
        rows.append({"method": r.method, "n": r.n, "m": r.m if r.method == "dnorm" else None,
                     "theta": r.theta, "eta": eta, "published": r.predicted,
                     "rel_diff": eta / r.predicted - 1, "measured": r.measured})
    out.records(rows, title="Predicted extraction efficiency (bit/KiB) on an unbiased memory")
    return EXIT_OK


def _lowest_pfail_table(out: Output, k: int):
    rows = []
    for r in LOWEST_FAILURE_ROWS:
        res = analytics.param_search(r.ber_f, r.memory_kib, k, "lowest_pfail")
        direct = None
        if r.theta <= r.n:
            direct = analytics.key_failure(analytics.dnorm_ber(r.n, r.theta, r.ber_f), k)
        best = res.best
        rows.append({
            "chip": r.chip, "ber_f": r.ber_f, "kib": r.memory_kib,
            "search": f"({best.params.n},{best.params.m},{best.params.theta})" if best else "infeasible",
            "search_P": best.p_key_fail if best else None,
            "listed": f"({r.n},{r.m},{r.theta})", "listed_P": direct, "published_P": r.p_key_fail,
        })
    out.records(rows, title="Lowest predicted key failure, prediction-based yield")
    return EXIT_OK


def _mmr_table(out: Output, k: int):
    rows = []
    for r in MIN_MEMORY_ROWS:
        b = analytics.dnorm_ber(r.n, r.theta, r.ber_f)
        rows.append({
            "chip": r.chip, "ber_f": r.ber_f, "params": f"({r.n},{r.m},{r.theta})",
            "ber_F": b, "published_ber_F": r.ber_F,
            "P": analytics.key_failure(b, k), "published_P": r.p_key_fail,
            "mmr_kib": analytics.mmr_at(r.n, r.m, r.theta, k), "published_mmr": r.mmr_predicted_kib,
        })
    out.records(rows, title="Reliability and minimum memory at the listed parameters")
    return EXIT_OK


TABLES = {"efficiency": _eff_table, "lowest-pfail": _lowest_pfail_table, "mmr": _mmr_table}


def cmd_predict(args, out: Output) -> int:
    if args.table:
        fn = TABLES[args.table]
        return fn(out) if args.table == "efficiency" else fn(out, args.k)
    if args.theta_sweep:
        tp = _params_from(args)
        reps = analytics.theta_sweep(tp.method, tp.n, tp.m, args.ber, range(0, args.theta_sweep + 1), args.k)
        out.records([r.to_record() for r in reps])
        return EXIT_OK
    rep = analytics.predict(_params_from(args), args.ber, args.k)
    out.records([rep.to_record()])
    return EXIT_OK


# simulate / validate

def cmd_simulate(args, out: Output) -> int:
    tp = _params_from(args)
    size_bits = args.size * 8
    if args.keyfail:
        res = chipsim.monte_carlo_keyfail(tp, args.ber, args.k, args.trials, size_bits, args.seed, args.jobs)
        pred = analytics.key_failure(analytics.ber(tp, args.ber), args.k)
    else:
        res = chipsim.monte_carlo_ber(tp, args.ber, size_bits, args.trials, args.seed, args.jobs)
        pred = analytics.ber(tp, args.ber)
    rec = res.to_record()
    rec["predicted"] = pred
    rec["efficiency"] = res.selected_bits / (args.size / 1024) if not args.keyfail else None
    rec["predicted_efficiency"] = analytics.efficiency(tp)
    out.records([rec])
    return EXIT_OK


UPPER_BOUND_CONFIGS = (
    [TransformParams.snorm(n, t) for n in (15, 31) for t in range(4)]
    + [TransformParams.dnorm(32, m, t) for m in (4, 16) for t in range(7)]
)


def upper_bound_suite(ber_f: float, size_bits: int, evaluations: int, seed: int = 0, jobs: int = 1,
                      configs=UPPER_BOUND_CONFIGS) -> list[dict]:
    """Per configuration: Monte Carlo transformed-bit error rate against the model."""
    rows = []
    for i, tp in enumerate(configs):
        chip = chipsim.new_chip(size_bits, ber_f, seed + i)
        probe = chipsim.monte_carlo_ber(tp, ber_f, size_bits, 1, seed + i, chip=chip)
        if probe.empty:
            rows.append({"params": str(tp), "empty": True, "pass": False})
            continue
        trials = -(-evaluations // probe.selected_bits)
        res = chipsim.monte_carlo_ber(tp, ber_f, size_bits, trials, seed + i, jobs, chip=chip)
        pred = analytics.ber(tp, ber_f)
        eff = res.selected_bits / (size_bits / 8192)
        pred_eff = analytics.efficiency(tp)
        rows.append({
            "params": str(tp), "evaluations": res.bit_evaluations, "errors": res.errors,
            "empirical": res.empirical_rate, "ci_upper_99": res.ci_upper_99, "predicted": pred,
            "pass": res.within_bound(pred), "efficiency": eff, "predicted_efficiency": pred_eff,
            "efficiency_rel_diff": eff / pred_eff - 1,
        })
    return rows


def keyfail_suite(ber_f: float, size_bits: int, trials: int, k: int = 128, thetas=range(1, 7), seed: int = 0,
                  jobs: int = 1, n: int = 32, m: int = 16) -> list[dict]:
    rows = []
    for t in thetas:
        tp = TransformParams.dnorm(n, m, t)
        res = chipsim.monte_carlo_keyfail(tp, ber_f, k, trials, size_bits, seed + t, jobs)
        pred = analytics.key_failure(analytics.dnorm_ber(n, t, ber_f), k)
        rows.append({"params": str(tp), "trials": res.trials, "failures": res.errors,
                     "empirical": res.empirical_rate, "ci_upper_99": res.ci_upper_99,
                     "predicted": pred, "pass": res.within_bound(pred)})
    return rows


def efficiency_suite(size_bits: int, seed: int = 0, tolerance: float = 0.10,
                     configs=UPPER_BOUND_CONFIGS) -> list[dict]:
    rows = []
    for i, tp in enumerate(configs):
        chip = chipsim.new_chip(size_bits, 0.0, seed + i)
        mask, _ = enroll(chip.enrollment, tp)
        eff = len(mask) / (size_bits / 8192)
        pred = analytics.efficiency(tp)
        rows.append({"params": str(tp), "efficiency": eff, "predicted": pred,
                     "rel_diff": eff / pred - 1, "pass": abs(eff / pred - 1) <= tolerance})
    return rows


def cmd_validate(args, out: Output) -> int:
    size_bits = args.size * 8
    if args.suite == "upper-bound":
        rows = upper_bound_suite(args.ber, size_bits, args.trials, args.seed, args.jobs)
    elif args.suite == "keyfail":
        rows = keyfail_suite(args.ber, size_bits, args.trials, args.k, range(1, args.theta_max + 1),
                             args.seed, args.jobs)
    else:
        rows = efficiency_suite(size_bits, args.seed)
    out.records(rows, title=f"suite {args.suite}")
    failed = [r for r in rows if not r["pass"]]
    out.line(f"{len(rows) - len(failed)}/{len(rows)} configurations pass")
    return EXIT_VALIDATION if failed else EXIT_OK


# extract / search

def _source_snapshot(args):
    if args.dataset:
        ds = ingest.load_dataset(args.dataset)
        chip_id = args.chip or next(iter(ds.chips))
        return ds.chip(chip_id).enrollment
    return chipsim.new_chip(args.size * 8, 0.0, args.seed).enrollment


def cmd_extract(args, out: Output) -> int:
    tp = _params_from(args)
    snap = _source_snapshot(args)
    key, mask = keymask.derive_key(snap, tp, args.k)
    blob = keymask.write_mask(mask, key if args.mac else None)
    if args.mask_out:
        Path(args.mask_out).write_bytes(blob)
    if args.key_out:
        Path(args.key_out).write_text(key.to_bytes().hex() + "\n")
    out.records([{"params": str(tp), "k": key.k, "key_hex": key.to_bytes().hex(), "mask_bytes": len(blob),
                  "mask_entries": len(mask), "mac": bool(args.mac), "mask_out": args.mask_out}])
    return EXIT_OK


def cmd_search(args, out: Output) -> int:
    yield_fn = None
    kib = args.size / 1024
    if args.dataset:
        ds = ingest.load_dataset(args.dataset)
        chip_id = args.chip or next(iter(ds.chips))
        kib = ds.chip(chip_id).memory_size_bits / 8192

        def yield_fn(tp):
            return ingest.measured_efficiency(ds, chip_id, tp) * kib

    res = analytics.param_search(args.ber, kib, args.k, args.mode, args.target,
                                 grid_n=args.grid_n, grid_m=args.grid_m, theta_min=args.theta_min,
                                 yield_fn=yield_fn)
    rec = res.to_record()
    if res.feasible:
        rec["mmr_kib"] = args.k / res.best.eta if res.best.eta > 0 else None
        if not out.as_json:
            # ties can run to hundreds of grid points; the table shows how many
            rec["optima"] = len(res.optima)
    out.records([rec])
    return EXIT_OK if res.feasible else EXIT_DATA


# attestation demo

def cmd_attest_demo(args, out: Output) -> int:
    tp = _params_from(args)
    zone = args.size
    firmware = default_firmware()
    db = VerifierDB(args.db) if args.db else VerifierDB()
    verifier = Verifier(db, firmware, zone)
    provers = []
    for i in range(args.provers):
        p = SimProver(f"prover-{i}", firmware, args.ber, args.seed + i, zone_bytes=zone)
        if args.mask or args.key:
            if not (args.mask and args.key):
                raise UsageError("--mask and --key must be given together")
            if i:
                raise UsageError("--mask/--key provision a single prover")
            mask = keymask.read_mask(Path(args.mask).read_bytes())
            key = keymask.RootKey(bytes_to_bits(bytes.fromhex(Path(args.key).read_text().strip())))
            verifier.provision(p, key, mask)
        elif p.prover_id not in db:
            verifier.enroll(p, tp, args.k)
        else:
            raise UsageError(f"{p.prover_id} is already in the database")
        provers.append(p)
    if args.tamper:
        provers[0].tamper(0)

    rows = []
    bad = 0
    for p in provers:
        expect = Verdict.REJECTED if (args.tamper and p is provers[0]) else Verdict.ACCEPTED
        server = ProverServer(p).start() if args.transport == "socket" else None
        try:
            for _ in range(args.rounds):
                tr = SocketTransport(server.address) if server else LoopbackTransport(p)
                with tr:
                    s = verifier.attest(tr, p.prover_id, zone, args.window)
                bad += s.verdict is not expect
                rows.append({"prover": p.prover_id, "verdict": s.verdict.value, "expected": expect.value,
                             "reason": s.reason})
        finally:
            if server:
                server.stop()
    if args.rounds > 1 and not out.as_json:
        summary = {}
        for r in rows:
            key = (r["prover"], r["verdict"], r["expected"])
            summary[key] = summary.get(key, 0) + 1
        rows = [{"prover": k[0], "verdict": k[1], "expected": k[2], "count": v} for k, v in summary.items()]
    out.records(rows)
    return EXIT_VALIDATION if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ntfp", description="Noise-tolerant memory fingerprint toolkit")
    ap.add_argument("--json", action="store_true", help="one JSON record per line")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("predict", help="closed-form reliability and yield")
    _add_params(p)
    p.add_argument("--ber", type=parse_prob, default=0.0, help="raw bit error rate")
    p.add_argument("-k", type=int, default=128, help="key length in bits")
    p.add_argument("--table", choices=sorted(TABLES), help="render a reference table")
    p.add_argument("--theta-sweep", type=int, metavar="MAX", help="report theta = 0..MAX")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("simulate", help="Monte Carlo on a simulated chip")
    _add_params(p, "dnorm", 32, 16, 4)
    p.add_argument("--ber", type=parse_prob, default=0.0609)
    p.add_argument("--size", type=parse_size, default=64 * 1024, help="chip size, e.g. 64KiB")
    p.add_argument("--trials", type=parse_count, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-k", type=int, default=128)
    p.add_argument("--keyfail", action="store_true", help="measure k-bit key failure instead of bit errors")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("validate", help="statistical checks of the models against simulation")
    p.add_argument("--suite", choices=["upper-bound", "keyfail", "efficiency"], required=True)
    p.add_argument("--ber", type=parse_prob, default=0.0609)
    p.add_argument("--size", type=parse_size, default=64 * 1024)
    p.add_argument("--trials", type=parse_count, default=None,
                   help="upper-bound: bit evaluations per configuration (default 1e6); "
                        "keyfail: key regenerations per theta (default 1e5)")
    p.add_argument("--theta-max", type=int, default=6)
    p.add_argument("-k", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("extract", help="derive a root key and mask")
    _add_params(p, "dnorm", 32, 16, 10)
    p.add_argument("-k", type=int, default=128)
    p.add_argument("--dataset", help="manifest path; default is a simulated chip")
    p.add_argument("--chip", help="chip id within the dataset")
    p.add_argument("--size", type=parse_size, default=48 * 1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-out")
    p.add_argument("--key-out")
    p.add_argument("--mac", action="store_true", help="append a CMAC tag to the mask")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("search", help="parameter grid search")
    p.add_argument("--ber", type=parse_prob, required=True)
    p.add_argument("--size", type=parse_size, default=64 * 1024)
    p.add_argument("--mode", choices=["lowest-pfail", "max-yield"], default="lowest-pfail")
    p.add_argument("-k", type=int, default=128)
    p.add_argument("--target", type=float, default=1e-6)
    p.add_argument("--grid-n", type=parse_int_list, default=list(analytics.DEFAULT_GRID))
    p.add_argument("--grid-m", type=parse_int_list, default=list(analytics.DEFAULT_GRID))
    p.add_argument("--theta-min", type=int, default=1)
    p.add_argument("--dataset", help="use measured yields from this manifest")
    p.add_argument("--chip")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("attest-demo", help="enroll and attest simulated provers")
    _add_params(p, "dnorm", 32, 16, 10)
    p.add_argument("--provers", type=int, default=1)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--ber", type=parse_prob, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=parse_size, default=48 * 1024, help="fingerprint zone size")
    p.add_argument("-k", type=int, default=128)
    p.add_argument("--window", type=int, default=4096, help="attested bytes from the start of the app region")
    p.add_argument("--transport", choices=["loopback", "socket"], default="loopback")
    p.add_argument("--tamper", action="store_true", help="modify one firmware byte on the first prover")
    p.add_argument("--mask", help="pre-built mask file for a single prover")
    p.add_argument("--key", help="hex key file matching --mask")
    p.add_argument("--db", help="append-only enrollment database file")
    p.set_defaults(fn=cmd_attest_demo)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    out = Output(args.json)
    if args.cmd == "validate" and args.trials is None:
        args.trials = 10**6 if args.suite == "upper-bound" else 10**5
    try:
        return args.fn(args, out)
    except UsageError as exc:
        print(f"ntfp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FingerprintError, OSError) as exc:
        print(f"ntfp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
