"""Command-line front end.

Every stage is its own subcommand so it can be scripted separately;
``pipeline`` runs them all. Exit codes: 0 ok, 2 configuration, 3 validation
or format, 4 capacity or budget, 5 simulator non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .core import FitmapError, NetworkValidationError, check_network
from .decompose import NothingToUnroll, recombine, unroll_network
from .ingest import NetworkFormatError, parse_rates, parse_unit_network, prune_weights, read_network, \
    serialize_network, serialize_rates, serialize_unit_network
from .mapper import CapacityError, CrossbarSpec, InstanceTooLarge, map_baseline, pack_proposed, \
    serialize_mapping, verify_mapping
from .metrics import ReportError, crossbar_rows_csv, serialize_report, EnergyModel
from .normalize import NormalizationError, apply_normalization, collect_activation_stats, normalization_factors
from .pipeline import ConfigError, MappingInvalid, PipelineConfig, StageError, compare_network, load_source, \
    run_pipeline
from .ratesim import ConvergenceError, random_batch, simulate_batch

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_CAPACITY, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, (CapacityError, InstanceTooLarge)):
        return EXIT_CAPACITY
    if isinstance(exc, (NetworkValidationError, NetworkFormatError, MappingInvalid, NormalizationError,
                        NothingToUnroll, ReportError)):
        return EXIT_VALIDATION
    return EXIT_CONFIG


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("layer sizes must be positive")
    return vals


def _reservoir(text: str) -> tuple[int, float]:
    try:
        size, p = text.split(",")
        return int(size), float(p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected SIZE,PROB, got {text!r}") from None


def _energy(text: str) -> tuple[str, float]:
    key, _, val = text.partition("=")
    try:
        return key, float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}") from None


def _source_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--network", help="network file (.snn.json)")
    g.add_argument("--layers", type=_int_list, help="generate a feedforward net, e.g. 784,100,10")
    g.add_argument("--reservoir", type=_reservoir, help="generate a reservoir, SIZE,PROB")
    g.add_argument("--example", choices=["shared-inputs"], help="built-in example network")
    p.add_argument("--weights", default="uniform:0:2:fanin", help="weight sampler dist:a:b[:scale]")
    p.add_argument("--seed", type=int, default=0)


def _batch_args(p):
    p.add_argument("--batch", help="calibration/input rates file (.rates.json)")
    p.add_argument("--batch-size", type=int, default=16)


def _mapping_args(p):
    p.add_argument("--crossbar-n", type=int, default=128)
    p.add_argument("--max-fanin", type=int, default=None, help="subunit fanin (default n//2+1)")
    p.add_argument("--budget", type=int, default=None, help="maximum number of crossbars")


def _config(args, **extra) -> PipelineConfig:
    fields = {k: getattr(args, k) for k in ("network", "layers", "reservoir", "example", "weights", "seed",
                                             "batch", "batch_size", "crossbar_n", "max_fanin", "k", "epsilon")
              if getattr(args, k, None) is not None}
    if getattr(args, "budget", None) is not None:
        fields["crossbar_budget"] = args.budget
    if getattr(args, "energy", None):
        fields["energy"] = dict(args.energy)
    if getattr(args, "out", None) is not None:
        fields["out"] = args.out
    fields.update(extra)
    cfg = PipelineConfig(**fields)
    if not any(getattr(cfg, s) is not None for s in ("network", "layers", "reservoir", "example")):
        raise ConfigError("no network given: use --network, --layers, --reservoir or --example")
    return cfg.validate()


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _batch(cfg: PipelineConfig, net):
    if cfg.batch:
        with open(cfg.batch, encoding="utf-8") as fh:
            return parse_rates(fh.read())
    return random_batch(net, cfg.batch_size, cfg.seed)


def cmd_gen(args):
    cfg = _config(args)
    _emit(serialize_network(check_network(load_source(cfg))), args.out)


def cmd_prune(args):
    cfg = _config(args)
    res = prune_weights(check_network(load_source(cfg)), cfg.epsilon)
    _emit(serialize_network(res.network), args.out)
    print(f"removed {res.removed_count} synapses", file=sys.stderr)


def cmd_unroll(args):
    cfg = _config(args)
    _emit(serialize_unit_network(unroll_network(check_network(load_source(cfg)))), args.out)


def cmd_normalize(args):
    cfg = _config(args)
    net = check_network(load_source(cfg))
    stats = collect_activation_stats(net, _batch(cfg, net), cfg.sim_config())
    plan = normalization_factors(stats, cfg.k)
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(serialize_unit_network(apply_normalization(unroll_network(net), plan)), args.out)


def cmd_map(args):
    cfg = _config(args, out=args.out or ".")
    spec = CrossbarSpec(cfg.crossbar_n, cfg.crossbar_budget)
    net = check_network(load_source(cfg))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    todo = {}
    if args.variant in ("baseline", "both"):
        todo["baseline"] = (map_baseline(net, spec), net)
    if args.variant in ("proposed", "both"):
        if args.units:
            with open(args.units, encoding="utf-8") as fh:
                fit = parse_unit_network(fh.read(), net)
        else:
            fit = unroll_network(net)
        sub = recombine(fit, cfg.fanin_limit)
        todo["proposed"] = (pack_proposed(sub, spec), sub)
    for name, (m, src) in todo.items():
        problems = verify_mapping(m, src, spec)
        if problems:
            raise MappingInvalid(f"{name} mapping invalid: {problems[:3]}")
        _emit(serialize_mapping(m), str(out / f"{name}.map.json"))
        print(f"{name}: {m.crossbar_count} crossbars, {len(m.dropped)} dropped synapses", file=sys.stderr)


def cmd_simulate(args):
    cfg = _config(args)
    net = check_network(load_source(cfg))
    batch = _batch(cfg, net)
    res = simulate_batch(net, batch, replace(cfg.sim_config(), saturate=not args.no_saturate))
    if not res.converged:
        raise ConvergenceError(f"no fixed point after {res.iterations} iterations (residual {res.residual:.3g})",
                               res.residual, res.iterations)
    _emit(serialize_rates([res.vector(b) for b in range(len(batch))]), args.out)


def cmd_compare(args):
    cfg = _config(args, out=args.out or ".")
    net = check_network(load_source(cfg))
    report, base, prop = compare_network(net, _batch(cfg, net), cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _emit(serialize_mapping(base), str(out / "baseline.map.json"))
    _emit(serialize_mapping(prop), str(out / "proposed.map.json"))
    _emit(serialize_report(report), str(out / "compare.report.json"))
    _emit(crossbar_rows_csv({"baseline": base, "proposed": prop}, EnergyModel(**cfg.energy)),
          str(out / "compare.crossbars.csv"))
    _summary(report)


def cmd_pipeline(args):
    cfg = _config(args, out=args.out or "out")
    res = run_pipeline(cfg)
    _summary(res.report)
    print(f"report: {res.report_path}", file=sys.stderr)


def _summary(report):
    for name in ("baseline", "proposed"):
        m = report.to_dict()[name]
        print(f"{name}: crossbars={m['crossbar_count']} dropped={m['dropped_synapse_count']} "
              f"synapse_util={m['synapse_utilization']:.2f}% wasted={m['wasted_energy']:.4g}J "
              f"max_rel_err={m['max_rel_rate_error']:.3g}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fitmap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fitmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate or re-emit a network")
    _source_args(p)
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("prune", help="remove synapses with |w| < epsilon")
    _source_args(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("unroll", help="unroll every neuron into fanin-2 units")
    _source_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_unroll)

    p = sub.add_parser("normalize", help="unroll and normalize chain weights on a calibration batch")
    _source_args(p)
    _batch_args(p)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("map", help="map a network onto crossbars")
    _source_args(p)
    _mapping_args(p)
    p.add_argument("--variant", choices=["baseline", "proposed", "both"], default="both")
    p.add_argument("--units", help="unit network from unroll/normalize to pack (proposed only)")
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="simulate steady-state rates")
    _source_args(p)
    _batch_args(p)
    p.add_argument("--no-saturate", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    for name, func, help_ in (("compare", cmd_compare, "map both variants and write a comparison report"),
                              ("pipeline", cmd_pipeline, "prune, unroll, normalize, map, simulate, report")):
        p = sub.add_parser(name, help=help_)
        _source_args(p)
        _batch_args(p)
        _mapping_args(p)
        p.add_argument("--k", type=float, default=1.0)
        p.add_argument("--epsilon", type=float, default=0.0)
        p.add_argument("--energy", type=_energy, action="append", metavar="NAME=VALUE",
                       help="energy model override, e.g. e_route=1.5e-10")
        p.add_argument("--out", help="output directory")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (FitmapError, ValueError, OSError) as exc:
        print(f"fitmap {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
