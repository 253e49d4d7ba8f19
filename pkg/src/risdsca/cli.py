"""Command-line driver: single runs, power sweeps and the validation gate.

Exit codes: 0 success, 1 usage or configuration error, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dsca
from .channel import channel_hash, dump_channels, generate_channels
from .experiments import desk_spec, paper_spec, rows_to_csv, run_sweep, summarize, summary_to_csv, validate_all
from .netbus import MessageBus, dump_message_log, overhead_report
from .scenario import ConfigError, apply_overrides, config_from_dict, config_to_dict

log = logging.getLogger("risdsca")

DESK_M = 8
PAPER_M = 50
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_data(args) -> dict:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", args.config) from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object", args.config)
    else:
        data = {"system": {"Q": int(args.preset[1:])}}
    data = apply_overrides(data, args.set or [])
    system = data.setdefault("system", {})
    if not isinstance(system, dict):
        raise ConfigError("expected an object", "system")
    system.setdefault("M", PAPER_M if args.paper_scale else DESK_M)
    return data


def _complex_pairs(arr: np.ndarray) -> list:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def result_to_dict(cfg, channels, res: dsca.DscaResult, bus: MessageBus | None = None) -> dict:
    """JSON-ready dump of a run; RIS fields are omitted for the no-RIS baseline."""
    out = {
        "config": config_to_dict(cfg),
        "ris_enabled": cfg.ris_enabled,
        "channel_hash": channel_hash(channels),
        "converged": res.converged,
        "iterations": res.iterations,
        "sum_rate_bps": res.sum_rate_bps,
        "user_rates_bps": res.user_rates_bps,
        "final": {"p": res.state.p.tolist()},
        "history": [rec.to_dict() for rec in res.history],
    }
    if cfg.ris_enabled:
        out["final"]["phi"] = _complex_pairs(res.state.phi)
        out["final"]["lorentzian_params"] = [par.to_dict() for par in res.params]
    if bus is not None:
        report = overhead_report(bus.log)
        out["overhead"] = {k: report[k] for k in ("rounds", "total_bytes")}
    return out


def cmd_run(args) -> int:
    cfg = config_from_dict(_load_data(args))
    channels = generate_channels(cfg)
    if args.dump_channels:
        dump_channels(channels, args.dump_channels)
    bus = MessageBus(cfg.Q) if args.log_messages else None
    res = dsca.run(cfg, channels, bus=bus)
    if bus is not None:
        dump_message_log(bus.log, args.log_messages)
    text = json.dumps(result_to_dict(cfg, channels, res, bus), sort_keys=True, indent=1) + "\n"
    _emit(text, args.out)
    log.info("sum rate %.4f bps/Hz after %d iterations (converged=%s)", res.sum_rate_bps, res.iterations, res.converged)
    return EXIT_OK


def _parse_list(text: str, cast) -> list:
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse list '{text}'") from exc


def _parse_variants(text: str) -> list:
    out = []
    for item in _parse_list(text, str):
        q, _, kind = item.partition(":")
        if kind not in ("ris", "noris") or not q.isdigit():
            raise UsageError(f"variant '{item}' must look like 2:ris or 3:noris")
        out.append((int(q), kind == "ris"))
    return out


def cmd_sweep(args) -> int:
    data = _load_data(args)
    base = config_from_dict(data)
    kw = {}
    if args.powers:
        kw["power_grid_dbm"] = _parse_list(args.powers, float)
    if args.realizations is not None:
        kw["num_realizations"] = args.realizations
    if args.variants:
        kw["variants"] = _parse_variants(args.variants)
    kw["M"] = int(data["system"]["M"]) or (PAPER_M if args.paper_scale else DESK_M)
    try:
        spec = (paper_spec if args.paper_scale else desk_spec)(output_path=args.out, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    t0 = time.perf_counter()
    rows = run_sweep(spec, base, jobs=args.jobs)
    _emit(rows_to_csv(rows), args.out)
    summary_path = args.summary or (str(Path(args.out).with_suffix("")) + "_summary.csv" if args.out else None)
    if summary_path:
        Path(summary_path).write_text(summary_to_csv(summarize(rows)))
    failed = sum(1 for r in rows if r["error"])
    log.info("%d rows (%d failed) in %.1f s", len(rows), failed, time.perf_counter() - t0)
    return EXIT_OK


def cmd_validate(args) -> int:
    verdict = validate_all(price_sign=-1.0 if args.inject_price_sign_flip else 1.0)
    _emit(json.dumps(verdict, sort_keys=True, indent=1) + "\n", args.out)
    if args.out:
        print(json.dumps({"passed": verdict["passed"]}))
    return EXIT_OK if verdict["passed"] else EXIT_VALIDATION


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="risdsca", description="Distributed power and Lorentzian RIS optimization for wideband interference channels.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(p):
        p.add_argument("--config", help="JSON scenario file (system/geometry/algo/seed)")
        p.add_argument("--preset", choices=("q2", "q3"), default="q2", help="preset used when no --config is given")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. system.M=0 or algo.tau=5")
        p.add_argument("--paper-scale", action="store_true", help="M=50 (and 100 realizations for sweeps)")
        p.add_argument("--out", help="output file (default: stdout)")

    p_run = sub.add_parser("run", help="single scenario, full iteration history as JSON")
    scenario_args(p_run)
    p_run.add_argument("--dump-channels", metavar="PATH", help="write the channel draw as JSON")
    p_run.add_argument("--log-messages", metavar="PATH", help="run over the message bus and write its log (JSON lines)")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="Monte Carlo sweep over transmit power, CSV output")
    scenario_args(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sweep.add_argument("--powers", help="comma-separated P grid in dBm (default 0,5,...,30)")
    p_sweep.add_argument("--realizations", type=int, help="Monte Carlo realizations per point")
    p_sweep.add_argument("--variants", help="comma-separated Q:ris|noris list (default 2:ris,2:noris,3:ris,3:noris)")
    p_sweep.add_argument("--summary", help="summary CSV path (default: <out>_summary.csv)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the oracle suites and print a JSON verdict")
    p_val.add_argument("--out", help="write the full verdict here")
    p_val.add_argument("--inject-price-sign-flip", action="store_true", help=argparse.SUPPRESS)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"risdsca: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"risdsca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
