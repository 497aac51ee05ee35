"""End-to-end flow: prune, unroll, normalize, recombine, map, simulate, report."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import FitmapError, Network, WeightSampler, check_network, generate_feedforward, \
    generate_reservoir, shared_input_example
from .decompose import UnitNetwork, check_units, fit_unit_count, realized_unit_count, recombine, unroll_network
from .ingest import parse_rates, prune_weights, read_network, serialize_network, serialize_rates
from .mapper import CrossbarSpec, Mapping, map_baseline, pack_proposed, serialize_mapping, truncated_network, \
    verify_mapping
from .metrics import CompareReport, EnergyModel, VariantResult, compare_report, crossbar_rows_csv, \
    serialize_report
from .normalize import apply_normalization, collect_activation_stats, normalization_factors
from .ratesim import ConvergenceError, SimConfig, random_batch, simulate_batch


class ConfigError(FitmapError):
    pass


class MappingInvalid(FitmapError):
    pass


class StageError(FitmapError):
    def __init__(self, stage: str, cause: Exception):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage {stage!r} failed: {cause}")


def default_max_fanin(n: int) -> int:
    """Subunit fanin that maximizes units per crossbar.

    Later subunits of different chains share ``f - 1`` external lines but each
    needs its own chain line, so ``k`` of them use ``f - 1 + k`` rows; packing
    density ``(f - 1) * (n - f + 1)`` peaks at ``f = n // 2 + 1``.
    """
    return n // 2 + 1


@dataclass
class PipelineConfig:
    network: str | None = None
    layers: tuple | None = None
    reservoir: tuple | None = None  # (size, connection_prob)
    example: str | None = None
    weights: str = "uniform:0:2:fanin"
    epsilon: float = 0.0
    k: float = 1.0
    crossbar_n: int = 128
    max_fanin: int | None = None
    crossbar_budget: int | None = None
    batch: str | None = None
    batch_size: int = 16
    seed: int = 0
    energy: dict = field(default_factory=dict)
    window: float = 1.0
    damping: float = 0.5
    convergence_tol: float = 1e-9
    max_iterations: int = 10_000
    out: str = "out"

    def validate(self):
        sources = [self.network, self.layers, self.reservoir, self.example]
        if sum(s is not None for s in sources) != 1:
            raise ConfigError("give exactly one of network, layers, reservoir or example")
        if self.network is not None and not os.path.exists(self.network):
            raise ConfigError(f"network file not found: {self.network}")
        if self.batch is not None and not os.path.exists(self.batch):
            raise ConfigError(f"batch file not found: {self.batch}")
        if self.crossbar_n < 2:
            raise ConfigError("crossbar n must be >= 2")
        if not self.k > 0:
            raise ConfigError("k must be > 0")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.max_fanin is not None and not 2 <= self.max_fanin <= self.crossbar_n:
            raise ConfigError("max fanin must be in [2, n]")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.example not in (None, "shared-inputs"):
            raise ConfigError(f"unknown example {self.example!r}")
        try:
            WeightSampler.parse(self.weights)
            EnergyModel(**self.energy)
            self.sim_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    @property
    def fanin_limit(self) -> int:
        return self.max_fanin or default_max_fanin(self.crossbar_n)

    def sim_config(self, saturate=True) -> SimConfig:
        return SimConfig(self.max_iterations, self.damping, self.convergence_tol, saturate)


def load_source(cfg: PipelineConfig) -> Network:
    if cfg.network:
        return read_network(cfg.network)
    if cfg.example:
        return shared_input_example()
    sampler = WeightSampler.parse(cfg.weights)
    if cfg.layers:
        return generate_feedforward(cfg.layers, sampler, cfg.seed)
    size, p = cfg.reservoir
    return generate_reservoir(int(size), float(p), cfg.seed, sampler)


def network_fingerprint(net: Network) -> str:
    return hashlib.sha256(serialize_network(net).encode()).hexdigest()[:16]


def _outputs(res, ids, scale=None) -> np.ndarray:
    rows = res.rows(ids)
    if scale is not None:
        rows = rows * np.array([scale.get(i, 1.0) for i in ids])[:, None]
    return rows.T.copy()


def _run(net: Network, batch, cfg: SimConfig):
    res = simulate_batch(net, batch, cfg)
    if not res.converged:
        raise ConvergenceError(f"simulation did not converge after {res.iterations} iterations "
                               f"(residual {res.residual:.3g})", res.residual, res.iterations)
    return res


@dataclass
class Reference:
    net: Network
    batch: list
    linear: np.ndarray
    saturated: np.ndarray
    fingerprint: str


def reference_run(net: Network, batch, cfg: PipelineConfig) -> Reference:
    outs = net.output_ids
    lin = _outputs(_run(net, batch, cfg.sim_config(False)), outs)
    sat = _outputs(_run(net, batch, cfg.sim_config(True)), outs)
    return Reference(net, batch, lin, sat, network_fingerprint(net))


def baseline_variant(ref: Reference, mapping: Mapping, cfg: PipelineConfig) -> VariantResult:
    net = truncated_network(ref.net, mapping)
    outs = ref.net.output_ids
    lin = _run(net, ref.batch, cfg.sim_config(False))
    sat = _run(net, ref.batch, cfg.sim_config(True))
    mean = dict(zip(sat.ids.tolist(), sat.rates.mean(axis=1).tolist()))
    return VariantResult(mapping, ref.fingerprint, ref.net.num_synapses, 0, ref.linear, _outputs(lin, outs),
                         ref.saturated, _outputs(sat, outs), mean)


def proposed_variant(ref: Reference, unet: UnitNetwork, mapping: Mapping, cfg: PipelineConfig) -> VariantResult:
    net = unet.to_network()
    outs = ref.net.output_ids
    lin = _run(net, ref.batch, cfg.sim_config(False))
    sat = _run(net, ref.batch, cfg.sim_config(True))
    mean = dict(zip(sat.ids.tolist(), sat.rates.mean(axis=1).tolist()))
    return VariantResult(mapping, ref.fingerprint, ref.net.num_synapses, unet.chain_links, ref.linear,
                         _outputs(lin, outs, unet.scale), ref.saturated, _outputs(sat, outs, unet.scale), mean)


def build_proposed(net: Network, batch, cfg: PipelineConfig) -> tuple[UnitNetwork, UnitNetwork]:
    """FIT chains normalized on ``batch`` and recombined; returns (fit, recombined)."""
    fit = unroll_network(net)
    stats = collect_activation_stats(net, batch, cfg.sim_config(True))
    normalized = apply_normalization(fit, normalization_factors(stats, cfg.k))
    return normalized, recombine(normalized, cfg.fanin_limit)


def compare_network(net: Network, batch, cfg: PipelineConfig) -> tuple[CompareReport, Mapping, Mapping]:
    spec = CrossbarSpec(cfg.crossbar_n, cfg.crossbar_budget)
    ref = reference_run(net, batch, cfg)
    _, sub = build_proposed(net, batch, cfg)
    base_map = map_baseline(net, spec)
    prop_map = pack_proposed(sub, spec)
    report = compare_report(baseline_variant(ref, base_map, cfg), proposed_variant(ref, sub, prop_map, cfg),
                            EnergyModel(**cfg.energy), cfg.window)
    return report, base_map, prop_map


@dataclass
class PipelineResult:
    report_path: Path
    mapping_paths: dict
    manifest_path: Path
    report: CompareReport
    exit_status: int = 0


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage, writing maps, report and a run manifest to ``cfg.out``.

    Each stage's product is validated before the next stage uses it. On
    failure the manifest is written with ``status: failed`` and a
    :class:`StageError` naming the stage is raised.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stages: list[dict] = []
    outputs: dict[str, str] = {}
    manifest_path = out / "run.manifest.json"

    def manifest(status, error=None):
        doc = {"tool": "fitmap", "version": __version__, "status": status,
               "config": asdict(cfg), "stages": stages, "outputs": outputs}
        if error is not None:
            doc["failed"] = {"stage": error.stage, "error": str(error.cause)}
        _write(manifest_path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")

    state: dict = {}

    def stage(name, fn):
        try:
            value = fn()
        except FitmapError as exc:
            err = StageError(name, exc)
            stages.append({"name": name, "status": "failed"})
            manifest("failed", err)
            raise err from exc
        except (ValueError, OSError) as exc:
            err = StageError(name, ConfigError(str(exc)))
            stages.append({"name": name, "status": "failed"})
            manifest("failed", err)
            raise err from exc
        stages.append({"name": name, "status": "ok"})
        return value

    spec = CrossbarSpec(cfg.crossbar_n, cfg.crossbar_budget)

    def load():
        return check_network(load_source(cfg))

    def prune():
        res = prune_weights(state["source"], cfg.epsilon)
        net = check_network(res.network)
        _write(out / "network.snn.json", serialize_network(net))
        outputs["network"] = "network.snn.json"
        state["pruned_count"] = res.removed_count
        return net

    def batch():
        net = state["net"]
        if cfg.batch:
            with open(cfg.batch, encoding="utf-8") as fh:
                b = parse_rates(fh.read())
        else:
            b = random_batch(net, cfg.batch_size, cfg.seed)
        _write(out / "batch.rates.json", serialize_rates(b))
        outputs["batch"] = "batch.rates.json"
        return b

    def unroll():
        fit = unroll_network(state["net"])
        _check_units(fit)
        return fit

    def normalize():
        stats = collect_activation_stats(state["net"], state["batch"], cfg.sim_config(True))
        plan = normalization_factors(stats, cfg.k)
        state["norm_warnings"] = len(plan.warnings)
        unet = apply_normalization(state["fit"], plan)
        _check_units(unet)
        return unet

    def recomb():
        sub = recombine(state["normalized"], cfg.fanin_limit)
        _check_units(sub)
        return sub

    def mapped(name, fn, source):
        def run():
            m = fn()
            problems = verify_mapping(m, source, spec)
            if problems:
                raise MappingInvalid(f"{name} mapping invalid: {problems[:3]}")
            fname = f"{name}.map.json"
            _write(out / fname, serialize_mapping(m))
            outputs[f"{name}_map"] = fname
            return m
        return run

    def simulate():
        ref = reference_run(state["net"], state["batch"], cfg)
        return (baseline_variant(ref, state["baseline"], cfg),
                proposed_variant(ref, state["sub"], state["proposed"], cfg))

    def report():
        base, prop = state["variants"]
        em = EnergyModel(**cfg.energy)
        rep = compare_report(base, prop, em, cfg.window)
        rep.proposed["fit_units_formula"] = fit_unit_count(state["net"])
        rep.proposed["fit_units_realized"] = realized_unit_count(state["net"])
        rep.proposed["subunits"] = state["sub"].num_units
        rep.proposed["max_fanin"] = cfg.fanin_limit
        rep.proposed["normalization_warnings"] = state["norm_warnings"]
        rep.baseline["pruned_synapses"] = state["pruned_count"]
        _write(out / "compare.report.json", serialize_report(rep))
        _write(out / "compare.crossbars.csv",
               crossbar_rows_csv({"baseline": state["baseline"], "proposed": state["proposed"]}, em))
        outputs["report"] = "compare.report.json"
        outputs["crossbars_csv"] = "compare.crossbars.csv"
        return rep

    state["source"] = stage("load", load)
    state["net"] = stage("prune", prune)
    state["batch"] = stage("batch", batch)
    state["fit"] = stage("unroll", unroll)
    state["normalized"] = stage("normalize", normalize)
    state["sub"] = stage("recombine", recomb)
    state["baseline"] = stage("map-baseline", mapped("baseline", lambda: map_baseline(state["net"], spec),
                                                     state["net"]))
    state["proposed"] = stage("map-proposed", mapped("proposed", lambda: pack_proposed(state["sub"], spec),
                                                     state["sub"]))
    state["variants"] = stage("simulate", simulate)
    rep = stage("report", report)
    manifest("ok")
    return PipelineResult(out / "compare.report.json",
                          {"baseline": out / "baseline.map.json", "proposed": out / "proposed.map.json"},
                          manifest_path, rep)


def _check_units(unet: UnitNetwork):
    problems = check_units(unet)
    if problems:
        raise MappingInvalid(f"invalid unit network: {problems[:3]}")
    check_network(unet.to_network())
