"""Command-line pipeline: analyze, represent, place, schedule, simulate, synth, compare.

Settings come from an optional YAML/JSON config file (``--config``); any flag
given on the command line overrides the file. Every output carries the hash
of the resolved settings and the package version.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .datasets import make_city
from .evaluation import POLICIES, PolicySpec, baseline_place, evaluate_placement, evaluate_schedule
from .flow import round_mincost
from .io import (
    config_hash, placement_from_json, placement_to_json, read_json, write_csv, write_json,
)
from .placement import (
    SCHEMES, PlacementParams, placement_utilization, pooling_factor, round_heuristic, solve_ro_fractional,
    solve_rp_fractional,
)
from .scheduling import CostParams, plan_day, schedule_cost, switch_count
from .topology import Neighborhood, build_neighborhoods
from .traces import (
    BurstSpec, RepresentativeSet, StationSet, TraceSeries, group_and_represent, load_holidays, parse_trace,
    synth_bursts, variation_ratio, workload_stats,
)

log = logging.getLogger("edgeplan")

LOG_ENV = "EDGEPLAN_LOG_LEVEL"
PLACEMENT_POLICIES = ("Random", "Clustering", "Uniform", "TwithoutLB", "TwithLB", "RO_RP")


class CliError(Exception):
    """User-facing failure: bad settings, missing files, schema violations."""


@dataclass
class RunConfig:
    stations: Optional[str] = None
    trace: Optional[str] = None
    holidays: Optional[str] = None
    out: str = "out"
    neighborhood: Optional[str] = None
    placement: Optional[str] = None
    schedule: Optional[str] = None
    frames: Optional[str] = None
    K: Optional[int] = None
    C: Optional[float] = None
    radius: Optional[float] = None
    k_nearest: Optional[int] = None
    slot_length: str = "1h"
    periods_per_day: int = 6
    mode: str = "average"
    scheme: str = "srpf"
    policy: Optional[str] = None
    k: Optional[int] = None
    zone_size: Optional[float] = None
    seed: int = 0
    E_r: float = 1.0
    E_w: float = 0.0
    E_s: float = 1.0
    epsilon: float = 1e-3
    lags: list = field(default_factory=lambda: [1, 24])
    bursts: int = 240
    scale_factors: list = field(default_factory=lambda: [1.2, 1.5, 1.8, 2.0])
    subset_size: Optional[list] = None
    n_stations: int = 200
    days: int = 14
    method: str = "auto"

    @classmethod
    def load(cls, path: Optional[str], overrides: dict) -> "RunConfig":
        data = {}
        if path:
            p = Path(path)
            if not p.is_file():
                raise CliError(f"config file not found: {p}")
            try:
                data = yaml.safe_load(p.read_text()) or {}
            except yaml.YAMLError as exc:
                raise CliError(f"{p}: cannot parse config ({exc})") from exc
            if not isinstance(data, dict):
                raise CliError(f"{p}: config must be a mapping of settings")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None and k in known})
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise CliError(f"K must be a positive integer, got {self.K}")
        if self.C is not None and not self.C > 0:
            raise CliError(f"C must be positive, got {self.C}")
        if self.scheme not in SCHEMES + ("mincost",):
            raise CliError(f"scheme must be one of {SCHEMES + ('mincost',)}")
        if self.policy is not None and self.policy not in POLICIES:
            raise CliError(f"policy must be one of {POLICIES}")
        if self.mode not in ("average", "component_max"):
            raise CliError("mode must be 'average' or 'component_max'")
        if not 0 <= self.epsilon < 1:
            raise CliError("epsilon must lie in [0, 1)")
        for name in ("E_r", "E_w", "E_s"):
            if getattr(self, name) < 0:
                raise CliError(f"{name} must be nonnegative")
        for name in ("stations", "trace", "holidays", "neighborhood", "placement", "schedule", "frames"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise CliError(f"{name} file not found: {value}")

    @property
    def capacity(self) -> float:
        """Server capacity, 1 unless set."""
        return 1.0 if self.C is None else float(self.C)

    @property
    def hash(self) -> str:
        settings = asdict(self)
        settings.pop("out")
        return config_hash(settings)

    def outdir(self) -> Path:
        d = Path(self.out)
        d.mkdir(parents=True, exist_ok=True)
        return d


# ----------------------------------------------------------------------
# shared loading
# ----------------------------------------------------------------------
def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise CliError(f"missing required setting(s): {', '.join('--' + n.replace('_', '-') for n in missing)}")


def _load_trace(cfg: RunConfig) -> TraceSeries:
    _require(cfg, "stations", "trace")
    holidays = load_holidays(cfg.holidays) if cfg.holidays else None
    return parse_trace(cfg.stations, cfg.trace, slot_length=pd.Timedelta(cfg.slot_length), holidays=holidays,
                       periods_per_day=cfg.periods_per_day)


def _load_nbh(cfg: RunConfig, stations: StationSet) -> Neighborhood:
    if cfg.neighborhood:
        nbh = Neighborhood.from_json(read_json(cfg.neighborhood))
        if len(nbh) != len(stations):
            raise CliError(f"neighborhood covers {len(nbh)} stations, the stations file has {len(stations)}")
        return nbh
    if (cfg.radius is None) == (cfg.k_nearest is None):
        raise CliError("give exactly one of --radius, --k-nearest, or a --neighborhood file")
    return build_neighborhoods(stations, radius=cfg.radius, k_nearest=cfg.k_nearest)


def _load_frames(cfg: RunConfig, trace: TraceSeries) -> np.ndarray:
    """Evaluation frames: a frames file if given, else seeded bursts of the peak frame."""
    if cfg.frames:
        return parse_trace(cfg.stations, cfg.frames, slot_length=pd.Timedelta(cfg.slot_length)).loads
    return _bursts(cfg, trace)


def _bursts(cfg: RunConfig, trace: TraceSeries) -> np.ndarray:
    base = trace.loads[int(np.argmax(trace.loads.sum(axis=1)))]
    M = trace.n_stations
    if cfg.subset_size is not None:
        spec = BurstSpec(tuple(cfg.subset_size), tuple(cfg.scale_factors), cfg.bursts, cfg.seed)
    else:
        spec = BurstSpec.scaled(M, scale_factors=tuple(cfg.scale_factors), count=cfg.bursts, seed=cfg.seed)
    return synth_bursts(base, spec)


def _policy(cfg: RunConfig, kind: str) -> PolicySpec:
    try:
        return PolicySpec(kind, k=cfg.k, zone_size=cfg.zone_size, seed=cfg.seed, mode=cfg.mode, scheme=cfg.scheme)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _place(cfg: RunConfig, trace: TraceSeries, nbh: Neighborhood, kind: str):
    """Integer servers plus the placement JSON body for one policy."""
    _require(cfg, "K")
    params = PlacementParams(cfg.K, cfg.capacity)
    if kind == "RO_RP" and cfg.policy is None:
        reps = group_and_represent(trace, cfg.mode)
        ro = solve_ro_fractional(reps, nbh, params, method=cfg.method, tie_break="none")
        frac = solve_rp_fractional(reps, nbh, params, ro.beta_star, method=cfg.method)
        if cfg.scheme == "mincost":
            s = round_mincost(frac).s
        else:
            s = round_heuristic(frac, cfg.scheme, nbh, cfg.K, seed=cfg.seed).s
        body = placement_to_json(s, trace.stations.station_ids, cfg.K, cfg.capacity, frac.beta_star,
                                 frac.eta_star, cfg.scheme)
        body["fractional_beta_star"] = frac.beta_star
        return s, body
    s = baseline_place(_policy(cfg, kind), trace.stations, trace, nbh, params).s
    reps = group_and_represent(trace, cfg.mode)
    beta = placement_utilization(s, reps, nbh, cfg.capacity, method=cfg.method)
    body = placement_to_json(s, trace.stations.station_ids, cfg.K, cfg.capacity, beta,
                             pooling_factor(s, reps, nbh), cfg.scheme if kind in ("TwithLB", "RO_RP") else "")
    body["policy"] = kind
    return s, body


def _report_json(report, cfg_hash, extra=None):
    out = {"aggregate": report.aggregate, "label": report.label}
    if report.energy is not None:
        out["energy"] = report.energy
    out.update(extra or {})
    return out


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_analyze(cfg: RunConfig) -> None:
    trace = _load_trace(cfg)
    out = cfg.outdir()
    stats = workload_stats(trace, request_times=trace.request_times)
    write_csv(out / "stats.csv", stats.to_frame(), cfg.hash)
    omitted = {}
    for lag in cfg.lags:
        vr = variation_ratio(trace, int(lag))
        write_csv(out / f"variation_lag{int(lag)}.csv",
                  pd.DataFrame({"slot": vr.slot_index, "ratio": vr.ratio}), cfg.hash)
        omitted[str(int(lag))] = [int(s) for s in vr.omitted]
    totals = pd.DataFrame({
        "slot": trace.slot_index, "timestamp": trace.timestamps.strftime("%Y-%m-%dT%H:%M:%S"),
        "day_class": trace.day_class, "period_id": trace.period_id, "total": trace.loads.sum(axis=1),
    })
    write_csv(out / "totals.csv", totals, cfg.hash)
    write_json(out / "analyze.json", {"frames": len(trace), "stations": trace.n_stations,
                                      "omitted_slots": omitted}, cfg.hash)


def cmd_represent(cfg: RunConfig) -> None:
    trace = _load_trace(cfg)
    reps = group_and_represent(trace, cfg.mode)
    write_json(cfg.outdir() / "representatives.json", reps.to_json(), cfg.hash)


def cmd_place(cfg: RunConfig) -> None:
    trace = _load_trace(cfg)
    nbh = _load_nbh(cfg, trace.stations)
    out = cfg.outdir()
    s, body = _place(cfg, trace, nbh, cfg.policy or "RO_RP")
    write_json(out / "placement.json", body, cfg.hash)
    write_json(out / "neighborhood.json", nbh.to_json(), cfg.hash)
    log.info("placed %d servers at %d stations", int(s.sum()), int((s > 0).sum()))


def _placed_servers(cfg: RunConfig, stations: StationSet) -> tuple[np.ndarray, dict]:
    _require(cfg, "placement")
    try:
        return placement_from_json(read_json(cfg.placement), stations.station_ids)
    except (ValueError, KeyError) as exc:
        raise CliError(f"{cfg.placement}: {exc}") from exc


def cmd_schedule(cfg: RunConfig, strategy: str) -> None:
    trace = _load_trace(cfg)
    nbh = _load_nbh(cfg, trace.stations)
    s, body = _placed_servers(cfg, trace.stations)
    costs = CostParams(cfg.E_r, cfg.E_s, cfg.E_w, float(body.get("C", cfg.capacity)))
    plan = plan_day(trace, nbh, s, costs, strategy, cfg.epsilon, method=cfg.method)
    obj = plan.to_json(costs, trace.stations.station_ids)
    obj["strategy"] = strategy
    obj["switches"] = switch_count(plan)
    write_json(cfg.outdir() / "schedule.json", obj, cfg.hash)


def _plan_from_json(obj: dict, stations: StationSet):
    from .scheduling import SchedulePlan, SlotPlan
    from .io import servers_from_json

    slots = []
    for entry in obj["slots"]:
        eta = entry.get("eta_star")
        slots.append(SlotPlan(int(entry["t"]), int(entry["K_star"]), float(entry["beta_star"]),
                              float("inf") if eta is None else float(eta),
                              servers_from_json(entry["servers"], stations.station_ids)))
    initial = servers_from_json(obj.get("initial_state", []), stations.station_ids)
    return SchedulePlan(slots, initial, obj.get("label", ""), pd.Timedelta(hours=24) / len(slots))


def cmd_simulate(cfg: RunConfig) -> None:
    trace = _load_trace(cfg)
    nbh = _load_nbh(cfg, trace.stations)
    out = cfg.outdir()
    if cfg.schedule:
        try:
            plan = _plan_from_json(read_json(cfg.schedule), trace.stations)
        except (ValueError, KeyError) as exc:
            raise CliError(f"{cfg.schedule}: {exc}") from exc
        target = trace if cfg.frames is None else parse_trace(cfg.stations, cfg.frames,
                                                              slot_length=pd.Timedelta(cfg.slot_length))
        costs = CostParams(cfg.E_r, cfg.E_s, cfg.E_w, cfg.capacity)
        report = evaluate_schedule(plan, target, cfg.capacity, nbh, costs, method=cfg.method)
    else:
        s, body = _placed_servers(cfg, trace.stations)
        frames = _load_frames(cfg, trace)
        report = evaluate_placement(s, frames, float(body.get("C", cfg.capacity)), nbh, method=cfg.method)
    write_csv(out / "report.csv", report.per_frame, cfg.hash)
    write_json(out / "report.json", _report_json(report, cfg.hash), cfg.hash)


def cmd_synth(cfg: RunConfig, city: bool) -> None:
    """Write input-format CSVs; their provenance lives in the JSON written beside them."""
    out = cfg.outdir()
    if city:
        extra = {} if cfg.C is None else {"C": cfg.C}
        bench = make_city(n_stations=cfg.n_stations, days=cfg.days, seed=cfg.seed, K=cfg.K,
                          n_bursts=cfg.bursts, **extra)
        bench.stations.to_csv(out / "stations.csv")
        bench.trace.to_csv(out / "trace.csv")
        write_json(out / "neighborhood.json", bench.nbh.to_json(), cfg.hash)
        write_json(out / "benchmark.json", {"K": bench.K, "C": bench.C, "stations": len(bench.stations),
                                            "frames": len(bench.trace)}, cfg.hash)
        # settings that reproduce the benchmark comparison with ``compare --config``
        settings = {"stations": str(out / "stations.csv"), "trace": str(out / "trace.csv"),
                    "neighborhood": str(out / "neighborhood.json"), "K": bench.K, "C": bench.C,
                    "k": bench.k_clusters, "zone_size": bench.zone_size, "bursts": int(bench.bursts.shape[0]),
                    "seed": cfg.seed}
        header = f"# config_hash={cfg.hash} version={__version__}\n"
        (out / "benchmark.yaml").write_text(header + yaml.safe_dump(settings, sort_keys=True))
        return
    trace = _load_trace(cfg)
    bursts = _bursts(cfg, trace)
    ts = pd.Timestamp(trace.timestamps[0]).normalize()
    frames = TraceSeries.from_array(bursts, start=ts, slot_length=trace.slot_length, stations=trace.stations)
    frames.to_csv(out / "bursts.csv")
    write_json(out / "bursts.json", {"count": int(bursts.shape[0]), "seed": cfg.seed,
                                     "scale_factors": list(cfg.scale_factors)}, cfg.hash)


def cmd_compare(cfg: RunConfig, policies) -> None:
    trace = _load_trace(cfg)
    nbh = _load_nbh(cfg, trace.stations)
    frames = _load_frames(cfg, trace)
    out = cfg.outdir()
    manifest = {"policies": {}, "frames": int(frames.shape[0])}
    for kind in policies:
        pcfg = RunConfig(**{**asdict(cfg), "policy": None if kind == "RO_RP" else kind})
        s, body = _place(pcfg, trace, nbh, kind)
        report = evaluate_placement(s, frames, cfg.capacity, nbh, method=cfg.method)
        name = f"report_{kind}.csv"
        write_csv(out / name, report.per_frame, cfg.hash)
        manifest["policies"][kind] = {"report": name, "aggregate": report.aggregate, "placement": body}
    write_json(out / "manifest.json", manifest, cfg.hash)


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON settings file; flags override it")
    p.add_argument("--stations", help="stations CSV (station_id,x,y)")
    p.add_argument("--trace", help="trace CSV (aggregated or request-level)")
    p.add_argument("--holidays", help="file with one ISO date per line")
    p.add_argument("--out", help="output directory")
    p.add_argument("--slot-length", dest="slot_length")
    p.add_argument("--periods-per-day", dest="periods_per_day", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=("auto", "simplex", "highs"))


def _model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--neighborhood", help="neighborhood JSON")
    p.add_argument("--radius", type=float)
    p.add_argument("--k-nearest", dest="k_nearest", type=int)
    p.add_argument("--K", "-K", dest="K", type=int, help="total servers")
    p.add_argument("--C", "-C", dest="C", type=float, help="capacity of one server")
    p.add_argument("--mode", choices=("average", "component_max"))


def _bursts_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", help="evaluation frames CSV (default: seeded bursts of the peak frame)")
    p.add_argument("--bursts", type=int, help="number of burst frames")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="workload statistics and variation ratios")
    _common(p)
    p.add_argument("--lags", type=int, nargs="+")

    p = sub.add_parser("represent", help="representative workload vectors per calendar group")
    _common(p)
    p.add_argument("--mode", choices=("average", "component_max"))

    p = sub.add_parser("place", help="compute an integer server placement")
    _common(p)
    _model(p)
    p.add_argument("--scheme", choices=SCHEMES + ("mincost",))
    p.add_argument("--policy", choices=POLICIES, help="comparison policy instead of RO-RP")
    p.add_argument("--k", type=int, help="cluster count for Clustering/TwithoutLB")
    p.add_argument("--zone-size", dest="zone_size", type=float)

    p = sub.add_parser("schedule", help="day-ahead on/off plan for placed servers")
    _common(p)
    _model(p)
    p.add_argument("--placement", help="placement JSON")
    p.add_argument("--epsilon", type=float, help="rejection threshold for K*(t)")
    p.add_argument("--E-r", dest="E_r", type=float)
    p.add_argument("--E-s", dest="E_s", type=float)
    p.add_argument("--E-w", dest="E_w", type=float)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--no-switching-cost", action="store_true", help="per-slot optima (SSwithoutSC)")
    group.add_argument("--always-on", action="store_true", help="all placed servers on (No-SS)")

    p = sub.add_parser("simulate", help="rejection report for a placement or schedule")
    _common(p)
    _model(p)
    _bursts_flags(p)
    p.add_argument("--placement")
    p.add_argument("--schedule")
    p.add_argument("--E-r", dest="E_r", type=float)
    p.add_argument("--E-s", dest="E_s", type=float)

    p = sub.add_parser("synth", help="burst frames from a trace, or the synthetic city fixture")
    _common(p)
    p.add_argument("--city", action="store_true", help="write the synthetic benchmark fixture")
    p.add_argument("--bursts", type=int)
    p.add_argument("--n-stations", dest="n_stations", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--K", "-K", dest="K", type=int)
    p.add_argument("--C", "-C", dest="C", type=float)

    p = sub.add_parser("compare", help="evaluate the placement policies on the same frames")
    _common(p)
    _model(p)
    _bursts_flags(p)
    p.add_argument("--policies", nargs="+", choices=PLACEMENT_POLICIES)
    p.add_argument("--scheme", choices=SCHEMES + ("mincost",))
    p.add_argument("--k", type=int)
    p.add_argument("--zone-size", dest="zone_size", type=float)
    return parser


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run_command(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "analyze":
            cmd_analyze(cfg)
        elif args.command == "represent":
            cmd_represent(cfg)
        elif args.command == "place":
            cmd_place(cfg)
        elif args.command == "schedule":
            strategy = "per_slot" if args.no_switching_cost else "always_on" if args.always_on else "switching_cost"
            cmd_schedule(cfg, strategy)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "synth":
            cmd_synth(cfg, args.city)
        elif args.command == "compare":
            cmd_compare(cfg, args.policies or PLACEMENT_POLICIES)
    except CliError as exc:
        print(f"edgeplan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"edgeplan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
