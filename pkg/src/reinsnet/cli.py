"""Command line: build, solve, diagnose, study.

Exit codes: 0 success, 2 invalid input, 3 divergence or no uniqueness
certificate, 4 file I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, harness, serialize, synthesis
from .liabilities import Status, StructuralFailure, solve
from .network import (InvalidNetworkError, NetworkDimensionError, build_line_graph,
                      liabilities_matrix, net_liabilities, validate_network)

EXIT_OK, EXIT_INVALID, EXIT_STRUCTURAL, EXIT_IO = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _config(args) -> synthesis.SynthesisConfig:
    cfg = synthesis.load_config(args.config) if args.config else synthesis.SynthesisConfig()
    if args.seed is not None:
        cfg = synthesis.SynthesisConfig(**{**cfg.to_dict(), "seed": args.seed})
    return cfg


def _manifest(args, cfg, inputs, **arguments):
    digests = {Path(p).name: serialize.file_digest(p) for p in inputs if p}
    if args.config:
        digests[Path(args.config).name] = serialize.file_digest(args.config)
    return serialize.RunManifest(args.command, cfg.to_dict() if cfg else {},
                                 cfg.seed if cfg else args.seed, digests, arguments, __version__)


def _out(args, name) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _firms(cessions, args):
    ids = [x for x in (args.reinsurers or "").split(",") if x]
    return synthesis.infer_firms(cessions, ids)


def _calibrated_network(cessions, kind, cfg, args):
    firms = synthesis.calibrate_firms(_firms(cessions, args), cessions, cfg)
    if kind == "xl":
        return synthesis.build_xl_network(cessions, firms, cfg)
    return synthesis.build_proportional_network(cessions, firms)


def _check(net):
    errors = [v for v in validate_network(net) if v.severity == "error"]
    if errors:
        raise InvalidNetworkError(errors)


# --- build ---------------------------------------------------------------------


def cmd_build(args) -> int:
    cfg = _config(args)
    cessions = synthesis.read_cessions(args.cessions)
    net = _calibrated_network(cessions, args.kind, cfg, args)
    _check(net)
    out = Path(args.out) if args.out else _out(args, f"network-{args.kind}.json")
    man = _manifest(args, cfg, [args.cessions], kind=args.kind, reinsurers=args.reinsurers)
    serialize.save_network(net, out, man)
    _log(args, f"wrote {out} ({net.n} firms, {len(net.contracts)} contracts)")
    return EXIT_OK


# --- solve ---------------------------------------------------------------------


def _read_shock_file(path, net) -> np.ndarray:
    path = Path(path)
    ids = net.firm_ids
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict):
            data = data.get("shock", data)
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(ids))
            if unknown:
                raise ValueError(f"shock file names unknown firms: {', '.join(unknown)}")
            return np.array([float(data.get(i, 0)) for i in ids])
        return np.array([float(x) for x in data])
    sh = np.zeros(len(ids))
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows or [c.strip() for c in rows[0]] != ["firm", "shock"]:
        raise ValueError(f"{path}: expected header firm,shock")
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 2 or row[0] not in ids:
            raise ValueError(f"{path}: bad row on line {n}")
        sh[ids.index(row[0])] = float(row[1])
    return sh


def _shock(args, net, cfg) -> np.ndarray:
    choice = args.shock
    if choice is None:
        return np.asarray(net.shock, dtype=float)
    families = list(cfg.shock_aggregates)
    if choice in families:
        agg, fam = cfg.shock_aggregates[choice], families.index(choice)
    elif Path(choice).exists():
        return _read_shock_file(choice, net)
    else:
        try:
            agg, fam = float(choice), len(families)
        except ValueError:
            raise ValueError(f"--shock {choice!r} is neither a family, an amount nor a file") from None
    if agg == 0:
        return np.zeros(net.n)
    return synthesis.generate_shock(net.firms, agg,
                                    synthesis.substream(cfg.seed, "shock", fam, args.shock_index))


def cmd_solve(args) -> int:
    cfg = _config(args)
    net = serialize.load_network(args.network)
    sh = _shock(args, net, cfg)
    system = build_line_graph(net, sh)
    ids = net.firm_ids
    man = _manifest(args, cfg, [args.network] + ([args.shock] if args.shock and Path(args.shock).exists() else []),
                    shock=args.shock, shock_index=args.shock_index, algorithm=args.algorithm)
    out = _out(args, "solution.json")
    try:
        sol = solve(system, args.algorithm)
    except StructuralFailure as exc:
        report = diagnostics.omega_certificate(system, args.omega_limit).to_dict()
        serialize.write_json(out, {"status": "structural-failure", "error": str(exc),
                                   "structure": report}, man)
        _log(args, f"structural failure: {exc}")
        return EXIT_STRUCTURAL
    payload = {
        "status": sol.status.value,
        "algorithm": sol.algorithm,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "multiplicity_warning": sol.multiplicity_warning,
        "notes": list(sol.notes),
        "shock": [serialize.decimal(x) for x in sh],
        "contracts": [{"reinsurer": ids[a], "reinsured": ids[b], "layer": int(k),
                       "liability": serialize.decimal(v), "B": int(bb), "C": int(cc)}
                      for a, b, k, v, bb, cc in zip(system.reinsurer, system.reinsured, system.layer,
                                                    sol.ell, sol.activation.B, sol.activation.C)],
    }
    if sol.status is Status.CONVERGED:
        L = liabilities_matrix(system, sol.ell)
        payload["firms"] = ids
        payload["liabilities_matrix"] = [[serialize.decimal(x) for x in row] for row in L]
        payload["net_liabilities"] = [serialize.decimal(x) for x in net_liabilities(L)]
    else:
        payload["structure"] = diagnostics.omega_certificate(system, args.omega_limit).to_dict()
    serialize.write_json(out, payload, man)
    _log(args, f"{sol.status.value} after {sol.iterations} iterations (algorithm {sol.algorithm}); wrote {out}")
    return EXIT_OK if sol.status is Status.CONVERGED else EXIT_STRUCTURAL


# --- diagnose ------------------------------------------------------------------


def cmd_diagnose(args) -> int:
    net = serialize.load_network(args.network)
    system = build_line_graph(net)
    report = diagnostics.omega_certificate(system, args.omega_limit, args.free_shocks)
    man = _manifest(args, None, [args.network], omega_limit=args.omega_limit,
                    free_shocks=args.free_shocks)
    out = _out(args, "diagnosis.json")
    serialize.write_json(out, report.to_dict(), man)
    _log(args, f"certificate: {report.certificate.value}; rho(gamma X) = {report.rho_full:.6g}; wrote {out}")
    return EXIT_STRUCTURAL if report.certificate is diagnostics.Certificate.NONE else EXIT_OK


# --- study ---------------------------------------------------------------------


def _perturbation(args, cfg, cessions, man):
    net = _calibrated_network(cessions, args.kind, cfg, args)
    fam = list(cfg.shock_aggregates).index(args.shock_family)
    agg = cfg.shock_aggregates[args.shock_family]
    sh = (synthesis.generate_shock(net.firms, agg, synthesis.substream(cfg.seed, "shock", fam, args.shock_index))
          if agg > 0 else np.zeros(net.n))
    pc = harness.PerturbationConfig(args.delta, args.samples, cfg.seed, sh)
    report = harness.perturbation_study(net, pc, cfg, workers=args.workers)
    serialize.write_json(_out(args, "perturbation.json"), report, man)
    serialize.write_csv(
        _out(args, "perturbation_firms.csv"),
        ["firm", "role", "base_return", "base_default", "max_return_change", "max_equity_change",
         "default_flipped"],
        [[r["firm"], r["role"], r["base_return"], int(r["base_default"]), r["max_return_change"],
          r["max_equity_change"], int(r["default_flipped"])] for r in report["per_firm"]], man)
    serialize.write_csv(
        _out(args, "perturbation_histogram.csv"), ["bin", "lower", "upper", "count"],
        [[h["bin"], h["lower"], h["upper"], h["count"]] for h in report["return_change_histogram"]], man)
    _log(args, f"delta {args.delta}: {report['default_flips']} default flips, "
               f"max return change {report['max_return_change']:.4g}, "
               f"{len(report['failed_samples'])} failed samples")
    return EXIT_OK


def _compare(args, cfg, cessions, man):
    firms = _firms(cessions, args)
    report = harness.compare_systems(cessions, firms, cfg, args.scenarios, workers=args.workers)
    serialize.write_json(_out(args, "compare.json"), report, man)
    cols = list(report["paired"][0]) if report["paired"] else []
    serialize.write_csv(_out(args, "compare_paired.csv"), cols,
                        [[r[c] for c in cols] for r in report["paired"]], man)
    hist = report["return_histograms"]
    bins = sorted(set(hist["xl"]) | set(hist["proportional"]))
    w = report["return_bin_width"]
    serialize.write_csv(_out(args, "compare_histogram.csv"),
                        ["lower", "upper", "xl_weight", "proportional_weight"],
                        [[round(b * w, 10), round((b + 1) * w, 10), hist["xl"].get(b, 0.0),
                          hist["proportional"].get(b, 0.0)] for b in bins], man)
    _log(args, f"compare: {len(report['paired'])} paired scenarios, "
               f"{len(report['failures'])} failures, P(prop >= xl) = "
               f"{report['fraction_proportional_at_least_xl']}")
    return EXIT_OK


def cmd_study(args) -> int:
    cfg = _config(args)
    cessions = synthesis.read_cessions(args.cessions)
    keys = ["mode", "kind", "reinsurers", "scenarios"] if args.mode == "compare" else \
        ["mode", "kind", "reinsurers", "delta", "samples", "shock_family", "shock_index"]
    man = _manifest(args, cfg, [args.cessions], **{k: getattr(args, k) for k in keys})
    if args.mode == "perturbation":
        return _perturbation(args, cfg, cessions, man)
    return _compare(args, cfg, cessions, man)


# --- parser --------------------------------------------------------------------


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="RNG seed (overrides the config)")
    p.add_argument("--config", default=d(None), help="YAML file with every synthesis setting")
    p.add_argument("--out-dir", default=d("."), help="directory for output files")
    p.add_argument("--quiet", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reinsnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common], help="network from a cession CSV")
    p.add_argument("cessions")
    p.add_argument("--kind", choices=["xl", "proportional"], default="xl")
    p.add_argument("--reinsurers", help="comma-separated ids to treat as reinsurers")
    p.add_argument("--out", help="output path (default OUT_DIR/network-KIND.json)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", parents=[common], help="equilibrium liabilities for one shock")
    p.add_argument("network")
    p.add_argument("--shock", help="shock family (1-in-100, 1-in-250), an aggregate amount, "
                                   "or a .json/.csv file; default is the shock stored in the network")
    p.add_argument("--shock-index", type=int, default=0, help="scenario index for sampled shocks")
    p.add_argument("--algorithm", choices=["1", "2", "3", "auto"], default="auto")
    p.add_argument("--omega-limit", type=int, default=diagnostics.DEFAULT_OMEGA_LIMIT)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("diagnose", parents=[common], help="uniqueness certificates")
    p.add_argument("network")
    p.add_argument("--omega-limit", type=int, default=diagnostics.DEFAULT_OMEGA_LIMIT)
    p.add_argument("--free-shocks", action="store_true",
                   help="build the Ω bound over all shocks rather than the stored one")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("study", parents=[common], help="perturbation or XL-vs-proportional study")
    p.add_argument("cessions")
    p.add_argument("--mode", choices=["perturbation", "compare"], required=True)
    p.add_argument("--kind", choices=["xl", "proportional"], default="xl")
    p.add_argument("--reinsurers", help="comma-separated ids to treat as reinsurers")
    p.add_argument("--delta", type=float, default=0.025)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--scenarios", type=int, default=50, help="shocks per family (compare mode)")
    p.add_argument("--shock-family", choices=["1-in-100", "1-in-250"], default="1-in-100")
    p.add_argument("--shock-index", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidNetworkError, NetworkDimensionError, synthesis.CessionFormatError,
            synthesis.ConfigError, synthesis.SynthesisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
