"""Command line entry point: ``trafficsafe <subcommand> ...``.

Exit codes: 0 ok / no threat, 1 internal error, 2 infeasible budget,
3 connection failure, 4 validation error, 5 alarm raised (consumer with
``--fail-on-alarm``).
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import budget, sim
from .direction import Heading, object_bearing
from .geo import CartPoint, GeoDomainError, IntersectionSolution, Trajectory, intersect
from .grid import OutOfGridError, cell_name
from .net import (
    ConnectionFailed,
    Consumer,
    ProcessingNode,
    RegistrationRejected,
    measure_hop_latency,
    parse_endpoint,
    run_sensor,
)
from .scenario import PROFILES, STAGES, ScenarioError, default_scenario, load_scenario
from .threat import SensorState, ThreatConfigError, ThreatLevel, UserState, classify

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INFEASIBLE = 2
EXIT_CONNECTION = 3
EXIT_VALIDATION = 4
EXIT_ALARM = 5


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # bad flags are a validation error; argparse's own 2 means "infeasible" here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _emit(args, payload: dict, text: str) -> None:
    out = json.dumps(payload, sort_keys=True) if args.json else text
    if getattr(args, "out", None):
        Path(args.out).write_text(out + "\n")
    else:
        print(out)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _trajectory(text: str) -> Trajectory:
    vals = _floats(text)
    if len(vals) not in (3, 4):
        raise UsageError(f"trajectory is x,y,bearing[,speed], got {text!r}")
    return Trajectory(CartPoint(vals[0], vals[1]), vals[2], vals[3] if len(vals) == 4 else 0.0)


# -- subcommands --------------------------------------------------------

def cmd_intersect(args) -> int:
    u, s = _trajectory(args.user), _trajectory(args.sensor)
    sol = intersect(u, s)
    if isinstance(sol, IntersectionSolution):
        payload = {"intersects": True, "t_u": sol.t_u, "t_s": sol.t_s,
                   "x": sol.point.x, "y": sol.point.y, "eta_u": sol.eta_u, "eta_s": sol.eta_s}
        text = (f"intersection at ({sol.point.x:.3f}, {sol.point.y:.3f}) "
                f"t_u={sol.t_u:.3f} m t_s={sol.t_s:.3f} m")
    else:
        payload = {"intersects": False, "reason": sol.reason.value}
        text = f"no intersection ({sol.reason.value})"
    _emit(args, payload, text)
    return EXIT_OK


def cmd_classify(args) -> int:
    if args.scenario or args.user_id:
        sc = load_scenario(args.scenario or None)
        user = sc.user(args.user_id or sc.users[0].id)
        sensor = sc.sensor(args.sensor_id or sc.sensors[0].id)
        u = UserState.at(user.id, user.trajectory, sc.cell_size)
        s = SensorState.at(sensor.id, Trajectory(sensor.position,
                                                 object_bearing(sensor.camera_bearing, Heading.TOWARD)),
                           not args.no_event, sc.cell_size)
    else:
        if not (args.user and args.sensor):
            raise UsageError("classify needs --user and --sensor, or --scenario")
        u = UserState.at("user", _trajectory(args.user), args.cell_size)
        s = SensorState.at("sensor", _trajectory(args.sensor), not args.no_event, args.cell_size)
    v = classify(u, s)
    payload = {"user_cell": cell_name(u.cell), "sensor_cell": cell_name(s.cell),
               "event": s.event_active, **v.to_dict()}
    _emit(args, payload, f"{v.level.value.upper()}: {v.rationale}")
    return EXIT_OK


def cmd_budget(args) -> int:
    try:
        res = budget.solve_network_budget(args.t_tot, args.t_s, args.t_p, args.t_c, args.eval_share)
    except budget.BudgetInfeasible as exc:
        payload = {"feasible": False, "deficit": exc.deficit, "t_tot": exc.t_tot,
                   "compute_sum": exc.compute_sum}
        _emit(args, payload, f"infeasible: deficit {exc.deficit:.2f} ms")
        return EXIT_INFEASIBLE
    if args.json:
        _emit(args, {"feasible": True, **res.to_dict()}, "")
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_tot", "compute_sum", "network_allowance", "t_eval", "t_exe"])
        w.writerow([f"{x:.3f}" for x in (res.t_tot_target, res.compute_sum,
                                          res.network_allowance_total, res.t_eval_alloc, res.t_exe_alloc)])
        _emit(args, {}, buf.getvalue().rstrip("\n"))
    else:
        rows = [
            ("T_tot", res.t_tot_target),
            ("T_S + T_P + T_C", res.compute_sum),
            ("T_eval + T_exe", res.network_allowance_total),
            ("T_eval", res.t_eval_alloc),
            ("T_exe", res.t_exe_alloc),
        ]
        lines = [f"{name:<18}{val:>10.3f} ms  ({val:.2f})" for name, val in rows]
        _emit(args, {}, "\n".join(lines))
    return EXIT_OK


def cmd_impact(args) -> int:
    rows = []
    for lat in _floats(args.latencies):
        mps, kmh = budget.impact_velocity(lat, args.k)
        rows.append({"latency_ms": lat, "impact_mps": mps, "impact_kmh": kmh})
    if args.json:
        _emit(args, {"k_impact": args.k, "rows": rows}, "")
    elif args.format == "csv":
        lines = ["latency_ms,impact_mps,impact_kmh"]
        lines += [f"{r['latency_ms']:g},{r['impact_mps']:.4f},{r['impact_kmh']:.4f}" for r in rows]
        _emit(args, {}, "\n".join(lines))
    else:
        lines = [f"{'latency (ms)':>12} {'impact (m/s)':>13} {'impact (km/h)':>14}"]
        lines += [f"{r['latency_ms']:>12g} {r['impact_mps']:>13.4f} {r['impact_kmh']:>14.4f}" for r in rows]
        _emit(args, {}, "\n".join(lines))
    return EXIT_OK


def _summary_text(summary: sim.Summary) -> str:
    lines = [f"{'stage':<8}{'mean':>10}{'median':>10}{'std':>10}"]
    for name, st in list(summary.stages.items()) + [("total", summary.total)]:
        lines.append(f"{name:<8}{st.mean:>10.2f}{st.median:>10.2f}{st.std:>10.2f}")
    lines.append(f"records {summary.n_records}, deadline met {summary.deadline_met}, "
                 + ", ".join(f"{k} {v}" for k, v in sorted(summary.verdicts.items())))
    lines.extend(summary.notes)
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario) if args.scenario else default_scenario(args.profile)
    res = sim.run(sc, seed=args.seed, runs=args.runs)
    if args.csv:
        Path(args.csv).write_text(res.csv())
    _emit(args, res.summary.to_dict(), _summary_text(res.summary))
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.action == "init":
        text = default_scenario(args.profile).dump()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if not args.file:
        raise UsageError("scenario validate needs a file")
    sc = load_scenario(args.file)
    _emit(args, {"valid": True, "sensors": len(sc.sensors), "users": len(sc.users)},
          f"ok: {len(sc.sensors)} sensors, {len(sc.users)} users")
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    try:
        with open(args.csv, newline="") as fh:
            for row in csv.DictReader(fh):
                records.append(sim.RunRecord(
                    run=int(row["run"]), event_id=row["event_id"], user=row["user"], sensor="",
                    frame_time_ms=0.0, stages={s: float(row[s]) for s in STAGES},
                    total=float(row["total"]), verdict=ThreatLevel(row["verdict"]),
                    distance_m=None, met_deadline=row["met_deadline"] == "true",
                    impact_mps=float(row["impact_mps"]) if row["impact_mps"] else None))
    except (OSError, KeyError, ValueError) as exc:
        raise ScenarioError(f"cannot read {args.csv}: {exc}") from None
    if not records:
        raise ScenarioError(f"{args.csv} holds no records")
    summary = sim.summarize(records)
    text = _summary_text(summary)
    hist = summary.histograms[args.histogram]
    if hist:
        peak = max(c for _, c in hist)
        text += f"\n\n{args.histogram} histogram ({sim.HIST_BIN_MS} ms bins)\n"
        text += "\n".join(f"{lo:>7.1f} {c:>6} {'#' * max(1, round(40 * c / peak)) if c else ''}"
                          for lo, c in hist)
    _emit(args, summary.to_dict(), text)
    return EXIT_OK


async def _serve(args) -> int:
    host, port = parse_endpoint(args.listen)
    sc = load_scenario(args.scenario) if args.scenario else None
    node = ProcessingNode(sc.cell_size if sc else 1000.0,
                          sc.emergency_classes if sc else ("emergency",))
    port = await node.start(host, port)
    print(f"listening on {host}:{port}", flush=True)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass
    try:
        await asyncio.wait_for(stop.wait(), args.max_seconds)
    except asyncio.TimeoutError:
        pass
    await node.close()
    st = node.stats
    payload = {"frames": st.frames, "events": st.events, "deliveries": st.deliveries,
               "dropped": st.dropped, "t_eval": measure_hop_latency(st.t_eval).to_dict(),
               "t_exe": measure_hop_latency(st.t_exe).to_dict()}
    _emit(args, payload, f"frames {st.frames}, events {st.events}, deliveries {st.deliveries}")
    return EXIT_OK


def cmd_serve(args) -> int:
    return asyncio.run(_serve(args))


def cmd_sensor(args) -> int:
    host, port = parse_endpoint(args.connect)
    sc = load_scenario(args.scenario)
    sid = args.sensor_id or sc.sensors[0].id
    rep = asyncio.run(run_sensor(host, port, sc, sid, args.frames, args.interval_ms, args.delay_ms))
    st = rep.t_eval
    _emit(args, rep.to_dict(),
          f"sent {rep.frames} frames, {rep.events} events; T_eval mean {st.mean:.3f} ms, max {st.max:.3f} ms")
    return EXIT_OK


def cmd_consumer(args) -> int:
    host, port = parse_endpoint(args.connect)
    sc = load_scenario(args.scenario)
    consumer = Consumer(sc, args.user_id or sc.users[0].id, args.time_scale)
    rep = asyncio.run(consumer.run(host, port, args.max_events, args.timeout))
    levels = [v.verdict.level.value for v in rep.verdicts]
    _emit(args, rep.to_dict(), f"{rep.device_id}: {len(levels)} events, verdicts {levels}")
    if args.fail_on_alarm and rep.alarm:
        return EXIT_ALARM
    return EXIT_OK


# -- parser -------------------------------------------------------------

OUT_HELP = "write output here instead of stdout"
SCENARIO_HELP = "scenario YAML (default: built-in reference layout)"

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trafficsafe", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log every wire message")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def add(name, help):
        sp = sub.add_parser(name, help=help, formatter_class=fmt)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        return sp

    sp = add("intersect", "intersect two forward rays")
    sp.add_argument("--user", required=True, help="x,y,bearing[,speed] (m, deg, m/s)")
    sp.add_argument("--sensor", required=True, help="x,y,bearing[,speed]")
    sp.set_defaults(func=cmd_intersect)

    sp = add("classify", "threat level for one user/sensor pair")
    sp.add_argument("--user", help="x,y,bearing[,speed]")
    sp.add_argument("--sensor", help="x,y,bearing (object bearing)")
    sp.add_argument("--no-event", action="store_true", help="sensor has no active detection")
    sp.add_argument("--cell-size", type=float, default=1000.0, help="cell edge length in m")
    sp.add_argument("--scenario", help="take positions from a scenario file")
    sp.add_argument("--user-id", help="scenario user (default: first user)")
    sp.add_argument("--sensor-id", help="scenario sensor (default: first sensor)")
    sp.set_defaults(func=cmd_classify)

    sp = add("budget", "network latency allowance left by computing stages")
    sp.add_argument("--t-tot", type=float, default=budget.T_MAX_MS, help="end-to-end target, ms")
    sp.add_argument("--t-s", type=float, default=budget.T_CMOS_MS + budget.T_ENC_MS,
                    help="sensor acquisition + encoding, ms")
    sp.add_argument("--t-p", type=float,
                    default=round(budget.T_DEC_MS + budget.T_AI_MEDIAN_MS + budget.T_TC_MEDIAN_MS, 2),
                    help="decode + AI + threat classification, ms")
    sp.add_argument("--t-c", type=float, default=budget.T_C_MS, help="consumer validation, ms")
    sp.add_argument("--eval-share", type=float, default=0.5,
                    help="fraction of the allowance for sensor->processing")
    sp.add_argument("--format", choices=("table", "csv"), default="table", help="text layout")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_budget)

    sp = add("impact", "impact velocity per notification latency")
    sp.add_argument("--latencies", default="150,200,250,300,350,400", help="ms, comma separated")
    sp.add_argument("--k", type=float, default=budget.K_IMPACT, help="impact coefficient, m/s^2")
    sp.add_argument("--format", choices=("table", "csv"), default="table", help="text layout")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_impact)

    sp = add("simulate", "run the seeded pipeline simulation")
    sp.add_argument("--scenario", help="scenario YAML (default: built-in reference layout)")
    sp.add_argument("--profile", choices=sorted(PROFILES), default="nominal",
                    help="latency profile for the built-in scenario")
    sp.add_argument("--seed", type=int, help="override scenario seed")
    sp.add_argument("--runs", type=int, help="override scenario run count")
    sp.add_argument("--csv", help="write per-delivery records here")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_simulate)

    sp = add("scenario", "write or check scenario files")
    sp.add_argument("action", choices=("init", "validate"), help="write the reference scenario or check a file")
    sp.add_argument("file", nargs="?", help="scenario YAML to validate")
    sp.add_argument("--profile", choices=sorted(PROFILES), default="nominal",
                    help="latency profile written by init")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_scenario)

    sp = add("report", "summarize a simulation CSV")
    sp.add_argument("csv", help="records written by simulate --csv")
    sp.add_argument("--histogram", choices=("total", "t_p_ai"), default="t_p_ai",
                    help="which latency to plot")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_report)

    sp = add("serve", "run the processing node")
    sp.add_argument("--listen", default="127.0.0.1:0", help="host:port, port 0 picks a free one")
    sp.add_argument("--scenario", help="scenario for grid settings (default: built-in reference layout)")
    sp.add_argument("--max-seconds", type=float, help="stop after this long (default: run until signalled)")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_serve)

    sp = add("sensor", "replay a scenario camera into the processing node")
    sp.add_argument("--connect", required=True, help="processing host:port")
    sp.add_argument("--scenario", help=SCENARIO_HELP)
    sp.add_argument("--sensor-id", help="scenario sensor (default: first sensor)")
    sp.add_argument("--frames", type=int, default=10, help="frames to send")
    sp.add_argument("--interval-ms", type=float, help="wall-clock gap between frames "
                    "(default: scenario frame interval)")
    sp.add_argument("--delay-ms", type=float, default=0.0, help="hold each stamped frame back")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_sensor)

    sp = add("consumer", "user module: receive events and classify locally")
    sp.add_argument("--connect", required=True, help="processing host:port")
    sp.add_argument("--scenario", help=SCENARIO_HELP)
    sp.add_argument("--user-id", help="scenario user (default: first user)")
    sp.add_argument("--max-events", type=int, help="stop after this many events (default: until timeout)")
    sp.add_argument("--timeout", type=float, default=30.0, help="seconds to wait for events")
    sp.add_argument("--time-scale", type=float, default=1.0,
                    help="simulated seconds per wall second for the user's own motion")
    sp.add_argument("--fail-on-alarm", action="store_true", help=f"exit {EXIT_ALARM} if any Alarm")
    sp.add_argument("--out", help=OUT_HELP)
    sp.set_defaults(func=cmd_consumer)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConnectionFailed as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_CONNECTION
    except (UsageError, ScenarioError, GeoDomainError, OutOfGridError, ThreatConfigError,
            budget.BudgetConfigError, RegistrationRejected, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
