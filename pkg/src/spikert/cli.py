"""Command-line orchestration: build, map, simulate, analyse, report.

A run consumes a network model file and an optional machine file, builds and
places the network, executes the machine model and/or the reference
simulator, and writes traces, profiles, sync diagnostics, statistics and a
manifest.  The manifest plus the copied resolved spec files are enough to
reproduce every output byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

from . import analysis, network, oracle, runtime
from .clocks import ClockConfig
from .costs import CostModel, load_cost_model
from .machine import MachineSpec, load_machine_spec, serialize_machine_spec
from .mapping import (KeyOverflowError, PlacementError, RoutingTableOverflowError,
                      allocate_keys, build_routing_tables, destination_cores, partition,
                      place_radial)
from .network import SpecError, build_network, load_network_spec, scale_network, \
    serialize_network_spec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SPEC = 3
EXIT_PLACEMENT = 4
EXIT_KEY = 5
EXIT_ROUTING = 6
EXIT_IO = 7


@dataclass
class RunConfig:
    model: str
    out: str
    machine: str | None = None
    scale: float = 1.0
    input: str = "poisson"           # dc | poisson
    mode: str = "both"               # hardware | oracle | both
    duration_ms: float = 1000.0
    slowdown: float = 1.0
    discard_ms: float = 0.0
    seed_network: int = 1
    seed_poisson: int = 2
    seed_drift: int = 3
    drift_bound_ppm: float = 0.0
    costs: str | None = None
    map_only: bool = False
    profile: str = "full"            # full | none
    oracle_quantize: bool = True

    def validate(self) -> None:
        if self.duration_ms <= 0:
            raise SpecError("duration must be positive")
        if self.slowdown < 1.0:
            raise SpecError("slow-down multiplier must be >= 1")
        if self.mode not in ("hardware", "oracle", "both"):
            raise SpecError(f"unknown mode '{self.mode}'")
        if self.input not in ("dc", "poisson"):
            raise SpecError(f"unknown input variant '{self.input}'")
        if not 0.0 < self.scale <= 1.0:
            raise SpecError("scale must be in (0, 1]")
        if self.discard_ms < 0 or self.discard_ms >= self.duration_ms:
            raise SpecError("discard window must fall inside the run")
        if self.profile not in ("full", "none"):
            raise SpecError("profile must be 'full' or 'none'")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spikert",
        description="Simulate spiking networks on a modeled multicast many-core machine.")
    p.add_argument("--model", help="network model spec file")
    p.add_argument("--machine", help="machine spec file (default: smallest fitting)")
    p.add_argument("--scale", type=float, default=1.0, help="population down-scale factor")
    p.add_argument("--input", choices=("dc", "poisson"), default="poisson",
                   help="background input variant")
    p.add_argument("--mode", choices=("hardware", "oracle", "both"), default="both")
    p.add_argument("--duration-ms", type=float, default=1000.0)
    p.add_argument("--slowdown", type=float, default=1.0,
                   help="timer-period multiplier; 1 = real time")
    p.add_argument("--discard-ms", type=float, default=0.0,
                   help="initial transient dropped from statistics")
    p.add_argument("--seed-network", type=int, default=1)
    p.add_argument("--seed-poisson", type=int, default=2)
    p.add_argument("--seed-drift", type=int, default=3)
    p.add_argument("--drift-bound-ppm", type=float, default=0.0,
                   help="uniform board clock drift bound (0 disables drift)")
    p.add_argument("--costs", help="cost model override file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--map-only", action="store_true",
                   help="partition, place and route without simulating")
    p.add_argument("--profile", choices=("full", "none"), default="full")
    p.add_argument("--manifest", help="re-run from a previously written manifest")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.manifest:
            cfg = _config_from_manifest(args.manifest, args.out)
        else:
            if not args.model or not args.out:
                parser.error("--model and --out are required (or use --manifest)")
            cfg = RunConfig(model=args.model, out=args.out, machine=args.machine,
                            scale=args.scale, input=args.input, mode=args.mode,
                            duration_ms=args.duration_ms, slowdown=args.slowdown,
                            discard_ms=args.discard_ms, seed_network=args.seed_network,
                            seed_poisson=args.seed_poisson, seed_drift=args.seed_drift,
                            drift_bound_ppm=args.drift_bound_ppm, costs=args.costs,
                            map_only=args.map_only, profile=args.profile)
        run(cfg)
        return EXIT_OK
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (PlacementError, runtime.SchedulingError) as exc:
        print(f"placement error: {exc}", file=sys.stderr)
        return EXIT_PLACEMENT
    except KeyOverflowError as exc:
        print(f"key allocation error: {exc}", file=sys.stderr)
        return EXIT_KEY
    except RoutingTableOverflowError as exc:
        print(f"routing error: {exc}", file=sys.stderr)
        return EXIT_ROUTING
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def _config_from_manifest(path: str, out_override: str | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    cfg = RunConfig(**data["run_config"])
    if out_override:
        cfg.out = out_override
    cfg.validate()
    return cfg


def run(cfg: RunConfig) -> None:
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)

    spec = load_network_spec(cfg.model, cfg.input)
    if cfg.scale != 1.0:
        spec = scale_network(spec, cfg.scale)
    machine = load_machine_spec(cfg.machine) if cfg.machine else None
    costs = load_cost_model(cfg.costs)

    net = build_network(spec, cfg.seed_network, sample_synapses=not cfg.map_only)

    _write(cfg, "resolved_model.net", serialize_network_spec(spec))

    if cfg.map_only:
        _run_map_only(cfg, net, machine)
        return

    clock_cfg = ClockConfig(drift_bound_ppm=cfg.drift_bound_ppm)
    results = {}
    sim = None
    if cfg.mode in ("hardware", "both"):
        sim = runtime.HardwareSimulation(
            net, machine=machine, costs=costs, clock_cfg=clock_cfg,
            seeds=runtime.Seeds(poisson=cfg.seed_poisson, drift=cfg.seed_drift),
            slowdown=cfg.slowdown)
        res = sim.run(cfg.duration_ms, discard_ms=cfg.discard_ms,
                      with_profile=cfg.profile == "full")
        results["hardware"] = res.trace
        _write(cfg, "trace_hardware.txt", res.trace.serialize())
        if cfg.profile == "full":
            _write(cfg, "profile.tsv", res.profile.serialize())
            _write(cfg, "profile_events.tsv", res.profile.serialize_events())
            rep = analysis.flush_report(res.profile)
            _write(cfg, "flush_report.txt", _flush_text(rep, res))
        _write(cfg, "sync.tsv", res.sync_diagnostics.serialize())
        _write(cfg, "placement.txt", sim.placement.serialize())
        _write(cfg, "routing_tables.txt", sim.tables.serialize())
        _write(cfg, "placement_summary.txt", placement_summary(sim))
        _write(cfg, "machine.mach", serialize_machine_spec(sim.machine))
    if cfg.mode in ("oracle", "both"):
        tr = oracle.oracle_simulate(net, cfg.duration_ms, cfg.seed_poisson,
                                    quantize=cfg.oracle_quantize, discard_ms=cfg.discard_ms)
        results["oracle"] = tr
        _write(cfg, "trace_oracle.txt", tr.serialize())

    for name, tr in results.items():
        if cfg.discard_ms < cfg.duration_ms and len(tr):
            stats = analysis.firing_stats(tr)
            _write(cfg, f"stats_{name}.txt", analysis.stats_document(stats))
        t, total, exc, inh = analysis.per_timestep_counts(tr)
        lines = ["# timestep total excitatory inhibitory"]
        lines += [f"{a} {b} {c} {d}" for a, b, c, d in zip(t, total, exc, inh)]
        _write(cfg, f"counts_{name}.tsv", "\n".join(lines) + "\n")

    if cfg.mode == "both":
        same = results["hardware"].serialize() == results["oracle"].serialize()
        _write(cfg, "equivalence.txt",
               f"identical_traces {same}\n"
               f"hardware_spikes {len(results['hardware'])}\n"
               f"oracle_spikes {len(results['oracle'])}\n")
        print(f"equivalence: identical_traces={same}")

    _write_manifest(cfg, costs, sim)
    print(f"run complete: outputs in {cfg.out}")


def _run_map_only(cfg: RunConfig, net, machine: MachineSpec | None) -> None:
    ensembles = partition(net)
    if machine is None:
        sim_machine, placement = runtime._place(ensembles, None)
    else:
        sim_machine, placement = machine, place_radial(ensembles, machine)
    keys = allocate_keys(placement)
    dests = destination_cores(placement, net.spec.projections)
    tables = build_routing_tables(placement, keys, dests)
    _write(cfg, "placement.txt", placement.serialize())
    _write(cfg, "routing_tables.txt", tables.serialize())
    _write(cfg, "machine.mach", serialize_machine_spec(sim_machine))
    summary = _summary_text(placement, tables, ensembles)
    _write(cfg, "placement_summary.txt", summary)
    _write_manifest(cfg, load_cost_model(cfg.costs), None)
    print(summary)


def placement_summary(sim: runtime.HardwareSimulation) -> str:
    return _summary_text(sim.placement, sim.tables, sim.ensembles)


def _summary_text(placement, tables, ensembles) -> str:
    per_chip = placement.ensembles_per_chip()
    counts = sorted(per_chip.values())
    entry_counts = tables.entry_counts()
    lines = [
        f"ensembles {len(ensembles)}",
        f"cores_used {placement.cores_used()}",
        f"chips_used {len(placement.chips_used())}",
        f"ensembles_per_chip_min {counts[0] if counts else 0}",
        f"ensembles_per_chip_max {counts[-1] if counts else 0}",
        f"routing_entries_total {sum(entry_counts.values())}",
        f"routing_entries_max_per_chip {max(entry_counts.values()) if entry_counts else 0}",
    ]
    return "\n".join(lines) + "\n"


def _flush_text(rep: analysis.FlushReport, res: runtime.RunResult) -> str:
    return ("processed_events {0}\nflushed_events {1}\nloss_fraction {2:.6g}\n"
            "processed_packets {3}\nflushed_packets {4}\nmax_flushed_in_timestep {5}\n"
            "cross_timestep_packets {6}\npoisson_saturations {7}\n").format(
        rep.processed_events, rep.flushed_events, rep.loss_fraction,
        rep.processed_packets, rep.flushed_packets, rep.max_flushed_in_timestep,
        res.late_packets, res.poisson_saturations)


def _write_manifest(cfg: RunConfig, costs: CostModel, sim) -> None:
    # Record the resolved copies so a manifest re-run is reproducible even if
    # the original inputs change: scaling/variant selection happened already.
    cost_lines = ["[costs]"] + [f"{f.name} = {getattr(costs, f.name)}"
                                for f in dataclasses.fields(costs)]
    _write(cfg, "costs_resolved.cfg", "\n".join(cost_lines) + "\n")
    replay = dataclasses.replace(
        cfg,
        model=os.path.abspath(os.path.join(cfg.out, "resolved_model.net")),
        scale=1.0,
        machine=(os.path.abspath(os.path.join(cfg.out, "machine.mach"))
                 if os.path.exists(os.path.join(cfg.out, "machine.mach")) else None),
        costs=os.path.abspath(os.path.join(cfg.out, "costs_resolved.cfg")))
    manifest = {
        "run_config": dataclasses.asdict(replay),
        "cost_model": dataclasses.asdict(costs),
        "defaults": {
            "neurons_per_core": 64,
            "correlation_bin_ms": 2.0,
            "correlation_subsample": 200,
            "correlation_estimator": "pearson-on-binned-counts",
            "weight_bits": 16,
            "min_weight_significant_bits": 14,
            "ring_slots": 255,
            "beacon_interval_s": ClockConfig().beacon_interval_s,
            "warmup_rounds": ClockConfig().warmup_rounds,
        },
    }
    if sim is not None:
        manifest["machine"] = dataclasses.asdict(sim.machine)
    _write(cfg, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write(cfg: RunConfig, name: str, text: str) -> None:
    with open(os.path.join(cfg.out, name), "w", encoding="utf-8") as fh:
        fh.write(text)


if __name__ == "__main__":
    sys.exit(main())
