"""
Command-line front door of the mesh energy simulator.

Subcommands:
    budget    LoRa link budget, airtime and energy per bit
    compress  ISA temporal compression of a trace CSV
    simulate  run a scenario (or the whole lifetime ladder) and write CSV reports
    sweep     emit a FigureTable CSV

Exit codes: 0 ok, 1 usage error, 2 runtime error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

import config
import trace_io
from config import SimulationRules, setup_logging
from energy_core import (
    LinkParams,
    LoRaParams,
    ReceiverParams,
    battery_bit_budget,
    lora_airtime,
    lora_energy_per_bit,
    lora_energy_per_bit_multihop,
    lora_packet_bytes,
    lora_range,
    multihop_benefit,
    required_spreading_factor,
)
from exceptions import (
    USAGE_ERRORS,
    InvalidParameterError,
    MeshEnergyError,
    ReportGenerationError,
    handle_exception,
    safe_execute,
)
from figure_tables import build_sweep, compression_tradeoff_table, lifetime_ladder_table
from isa_codec import Channel, SensorTrace, compress, detect_anomaly, fidelity_metrics
from mesh_sim import info_retention, run, run_ladder
from report_generator import ReportGenerator, figure_table_to_csv
from scenario import ScenarioConfig, SimMode, ladder_scenarios, load_preset, load_scenario, parse_value
from structured_logger import console_logging, get_logger
from utils import parse_float_range, parse_int_range, seconds_to_days

logger = logging.getLogger(__name__)
cli_logger = get_logger("mesh_cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# Parameter names raised by the library, mapped back to the flag that set them
FLAG_NAMES = {
    "spreading_factor": "--sf",
    "bandwidth": "--bw",
    "code_rate": "--cr",
    "payload_bytes": "--payload",
    "tx_power": "--ptx",
    "tx_power_consumption": "--pcons-tx",
    "rx_power_consumption": "--pcons-rx",
    "n_hops": "--n-hops",
    "sf_before": "--compare-sf",
    "path_loss_exponent": "--exponent",
    "distance": "--distance",
    "compress_y": "--y",
    "threshold_y": "--y",
    "anomaly_x": "--x",
    "threshold_x": "--x",
    "y_sweep": "--y-sweep",
    "figure": "figure",
}


class MeshArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def describe_error(error: MeshEnergyError) -> str:
    key = error.context.get("param_name") or error.context.get("config_key")
    flag = FLAG_NAMES.get(key) if key else None
    if flag:
        return f"{flag}: {error.message}"
    if key:
        return f"{key}: {error.message}"
    return error.message


def _print_table(table: pd.DataFrame, key: str, out: Optional[str]) -> None:
    text = figure_table_to_csv(table, key)
    if out:
        safe_execute(Path(out).write_text, text, encoding="utf-8", error_message=f"cannot write {out}",
                     error_type=ReportGenerationError, context={"report_type": key, "output_file": out})
        logger.info(f"{key} table written to {out}")
    else:
        sys.stdout.write(text)


def _float_list(spec: str, flag: str) -> List[float]:
    """Comma list or start:stop:step range."""
    try:
        if "," in spec:
            return [float(p) for p in spec.split(",") if p.strip()]
        return parse_float_range(spec)
    except ValueError as e:
        raise InvalidParameterError(str(e), param_name=flag.lstrip("-").replace("-", "_"), param_value=spec)


def _int_list(spec: str, flag: str) -> List[int]:
    try:
        return parse_int_range(spec)
    except ValueError as e:
        raise InvalidParameterError(str(e), param_name=flag.lstrip("-").replace("-", "_"), param_value=spec)


# ==============================================================================
# BUDGET
# ==============================================================================

def cmd_budget(args: argparse.Namespace) -> int:
    params = LoRaParams(
        spreading_factor=args.sf,
        bandwidth=args.bw,
        code_rate=args.cr,
        payload_bytes=args.payload,
        tx_power=args.ptx,
        tx_power_consumption=args.pcons_tx,
        rx_power_consumption=args.pcons_rx,
    )
    link = replace(LinkParams.lora_preset(), path_loss_exponent=args.exponent)
    receiver = ReceiverParams.lora_preset()
    if args.n_hops < 1:
        raise InvalidParameterError("n_hops must be at least 1", param_name="n_hops", param_value=args.n_hops)

    single = lora_energy_per_bit(params)
    chain = lora_energy_per_bit_multihop(params, args.n_hops)
    reach = lora_range(params, link, receiver)
    row: Dict[str, Any] = {
        "sf": args.sf,
        "range_m": reach,
        "max_distance_m": reach * args.n_hops,
        "packet_bytes": lora_packet_bytes(params),
        "airtime_s": lora_airtime(params),
        "energy_per_bit_j": single,
        "n_hops": args.n_hops,
        "energy_per_bit_chain_j": chain,
        "battery_bits": battery_bit_budget(chain, args.battery_mah),
    }
    if args.compare_sf is not None:
        row["compare_sf"] = args.compare_sf
        row["multihop_benefit"] = multihop_benefit(args.compare_sf, args.sf, args.n_hops, params)
    if args.distance is not None:
        hop = args.distance / args.n_hops
        row["distance_m"] = args.distance
        row["required_sf"] = required_spreading_factor(params, link, receiver, hop)

    if args.csv:
        sys.stdout.write(pd.DataFrame([row]).to_csv(index=False, float_format=config.CSV_VALUE_FORMAT,
                                                    lineterminator="\n"))
    else:
        for name, value in row.items():
            text = "none" if value is None else (f"{value:.6g}" if isinstance(value, float) else str(value))
            print(f"{name:<24}{text}")
    return EXIT_OK


# ==============================================================================
# COMPRESS
# ==============================================================================

def _select_channels(traces: Dict[Channel, SensorTrace], name: Optional[str]) -> List[Channel]:
    if name is None:
        return [c for c in Channel if c in traces]
    channel = Channel.parse(name)
    if channel not in traces:
        raise InvalidParameterError(f"trace has no {channel.value} channel", param_name="channel",
                                    param_value=name)
    return [channel]


def cmd_compress(args: argparse.Namespace) -> int:
    traces = trace_io.parse(args.trace)
    channels = _select_channels(traces, args.channel)

    if args.y_sweep:
        y_values = _float_list(args.y_sweep, "--y-sweep")
        if not channels:
            raise InvalidParameterError("trace is empty", param_name="trace", param_value=args.trace)
        _print_table(compression_tradeoff_table(traces[channels[0]], y_values), "compression_tradeoff", args.out)
        return EXIT_OK

    kept: Dict[Channel, SensorTrace] = {}
    for channel in channels:
        trace = traces[channel]
        series = compress(trace, args.y)
        kept[channel] = SensorTrace.from_samples(channel, [(s.timestamp, s.value) for s in series.kept])
        if args.metrics:
            metrics = fidelity_metrics(trace, series)
            correlation = ("constant" if metrics.pearson_correlation is None
                           else f"{metrics.pearson_correlation:.4f}")
            print(f"# channel={channel.value} kept={len(series.kept)} of={len(trace)} "
                  f"ratio={metrics.compression_ratio:.2f} correlation={correlation}")
        if args.x is not None:
            for event in detect_anomaly(trace, args.x):
                kind = "onset" if event.is_onset else "recovery"
                print(f"# anomaly channel={channel.value} t={event.anomaly_time:g} "
                      f"before={event.value_before:g} after={event.value_after:g} kind={kind}")

    text = trace_io.serialize(kept, args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


# ==============================================================================
# SIMULATE
# ==============================================================================

def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for item in args.set or []:
        if "=" not in item:
            raise InvalidParameterError(f"expected KEY=VALUE, got '{item}'", param_name="set", param_value=item)
        key, text = (part.strip() for part in item.split("=", 1))
        values[key] = parse_value(key, text)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.nodes is not None:
        values["nodes"] = args.nodes
    if args.mode is not None and not args.ladder:
        values["mode"] = SimMode(args.mode)
    return values


class SimulationManager:
    """Runs a scenario or the ladder and writes its reports."""

    def __init__(self, output_dir: str = ".") -> None:
        self.reports = ReportGenerator(output_dir)

    def resolve(self, args: argparse.Namespace) -> ScenarioConfig:
        overrides = _overrides(args)
        if args.config:
            return load_scenario(Path(args.config), overrides)
        if args.mode:
            return load_preset(args.mode, overrides)
        return ScenarioConfig(**overrides)

    def simulate(self, scenario: ScenarioConfig) -> Dict[str, Any]:
        result = run(scenario)
        files = self.reports.save_all(result)
        summary: Dict[str, Any] = {
            "mode": scenario.mode.value,
            "nodes": scenario.nodes,
            "first_death_days": seconds_to_days(result.first_death) if result.first_death is not None else None,
            "last_death_days": seconds_to_days(result.last_death) if result.last_death is not None else None,
            "end_time_s": result.end_time,
            "uplinks": result.uplinks,
            "failed_uplinks": result.failed_uplinks,
            "handovers": result.handovers,
            "files": files,
        }
        if scenario.trace_path:
            traces = trace_io.parse(scenario.trace_path)
            retention = info_retention(result, {i: traces for i in range(scenario.nodes)})
            summary["retention"] = retention.value
        return summary

    def ladder(self, args: argparse.Namespace) -> pd.DataFrame:
        rows = run_ladder(ladder_scenarios(_overrides(args)), args.workers)
        self.reports.save_ladder_report(rows)
        return lifetime_ladder_table(rows)


def cmd_simulate(args: argparse.Namespace) -> int:
    manager = SimulationManager(args.out)
    if args.ladder:
        if args.config:
            logger.warning("--ladder runs the shipped presets; the config argument is ignored")
        table = manager.ladder(args)
        sys.stdout.write(figure_table_to_csv(table, "lifetime_ladder"))
        return EXIT_OK

    with cli_logger.performance("simulate_command"):
        summary = manager.simulate(manager.resolve(args))
    for name, value in summary.items():
        if isinstance(value, list):
            value = ", ".join(value)
        elif isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{name:<18}{'none' if value is None else value}")
    return EXIT_OK


# ==============================================================================
# SWEEP
# ==============================================================================

def cmd_sweep(args: argparse.Namespace) -> int:
    key = args.figure
    if key == "compression_tradeoff":
        trace = trace_io.parse(args.trace)[Channel.TEMPERATURE] if args.trace else trace_io.load_golden()
        table = compression_tradeoff_table(trace, _float_list(args.y or "0.005:0.05:0.005", "--y"))
    elif key == "lifetime_ladder":
        table = lifetime_ladder_table(run_ladder(ladder_scenarios(), args.workers))
    else:
        options: Dict[str, Any] = {}
        if key == "duty_cycle" and args.N:
            options["periods"] = _float_list(args.N, "--N")
        elif key in ("ci_savings", "lifetime_vs_n") and args.n:
            options["cluster_sizes"] = _int_list(args.n, "--n")
        elif key == "sf_range_bits" and args.sf:
            options["spreading_factors"] = _int_list(args.sf, "--sf")
        table = build_sweep(key, **options)
    _print_table(table, key, args.out)
    return EXIT_OK


# ==============================================================================
# PARSER
# ==============================================================================

def build_parser() -> MeshArgumentParser:
    parser = MeshArgumentParser(prog="mesh-energy", description="Energy and lifetime of ISA/CI/CAS sensor meshes")
    parser.add_argument("-v", "--verbose", action="store_true", help="echo run timings and metrics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    budget = sub.add_parser("budget", help="LoRa link budget and energy per bit")
    budget.add_argument("--sf", type=int, default=config.LORA_SPREADING_FACTOR)
    budget.add_argument("--bw", type=float, default=config.LORA_BANDWIDTH_HZ)
    budget.add_argument("--cr", type=float, default=config.LORA_CODE_RATE)
    budget.add_argument("--payload", type=int, default=config.LORA_PAYLOAD_BYTES)
    budget.add_argument("--ptx", type=float, default=config.LORA_TX_POWER_DBM, help="transmit power (dBm)")
    budget.add_argument("--pcons-tx", type=float, default=config.LORA_TX_CONSUMPTION_W)
    budget.add_argument("--pcons-rx", type=float, default=config.LORA_RX_CONSUMPTION_W)
    budget.add_argument("--n-hops", type=int, default=1)
    budget.add_argument("--compare-sf", type=int, default=None,
                        help="single-hop spreading factor to compare the chain against")
    budget.add_argument("--exponent", type=float, default=config.LORA_PATH_LOSS_EXPONENT)
    budget.add_argument("--distance", type=float, default=None, help="report the SF needed for this distance")
    budget.add_argument("--battery-mah", type=float, default=config.BATTERY_CAPACITY_MAH)
    budget.add_argument("--csv", action="store_true", help="one-row CSV output")
    budget.set_defaults(handler=cmd_budget)

    comp = sub.add_parser("compress", help="temporal compression of a trace CSV")
    comp.add_argument("trace")
    comp.add_argument("--y", type=float, default=config.DEFAULT_COMPRESS_Y)
    comp.add_argument("--x", type=float, default=None, help="also report anomalies at this threshold")
    comp.add_argument("--channel", default=None)
    comp.add_argument("--metrics", action="store_true")
    comp.add_argument("--y-sweep", default=None, help="start:stop:step; emits the compression_tradeoff table")
    comp.add_argument("--out", default=None)
    comp.set_defaults(handler=cmd_compress)

    sim = sub.add_parser("simulate", help="run a scenario")
    sim.add_argument("config", nargs="?", default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=".")
    sim.add_argument("--ladder", action="store_true", help="run every lifetime-ladder preset")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--mode", choices=[m.value for m in SimMode], default=None)
    sim.add_argument("--nodes", type=int, default=None)
    sim.add_argument("--set", action="append", metavar="KEY=VALUE")
    sim.set_defaults(handler=cmd_simulate)

    sweep = sub.add_parser("sweep", help="emit a FigureTable CSV")
    sweep.add_argument("figure")
    sweep.add_argument("--n", default=None, help="cluster sizes, a:b or a,b,c")
    sweep.add_argument("--N", default=None, help="duty-cycle periods, start:stop:step or a,b,c")
    sweep.add_argument("--sf", default=None, help="spreading factors, a:b or a,b,c")
    sweep.add_argument("--y", default=None, help="compression thresholds, start:stop:step")
    sweep.add_argument("--trace", default=None)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None, configure_logging: bool = True) -> int:
    args = build_parser().parse_args(argv)
    if configure_logging:
        setup_logging()
    if args.verbose:
        console_logging()
    try:
        SimulationRules.validate_all()
        return args.handler(args)
    except USAGE_ERRORS as e:
        print(f"error: {describe_error(e)}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except MeshEnergyError as e:
        print(f"error: {describe_error(e)}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        error = handle_exception(e, {"command": args.command}, reraise=False)
        print(f"error: {describe_error(error)}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        error = handle_exception(e, {"command": args.command}, reraise=False)
        print(f"error: {describe_error(error)}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
