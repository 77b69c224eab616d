"""Processing, sensor and consumer roles over persistent TCP streams.

Sensors and consumers connect to the processing node and register; the same
connection then carries frames (sensor -> processing) or events
(processing -> consumer). The consumer keeps its own position and heading to
itself and classifies each event locally.

Everything runs on one asyncio loop per process. Registry updates happen
between awaits, so each message sees and leaves a consistent registry.
"""

from __future__ import annotations

import asyncio
import logging
import math
import statistics
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .direction import DEFAULT_BETA, DetectionFrame, Heading, LaneZone, classify_box, object_bearing
from .geo import GeoPoint, Trajectory, position_at, to_cartesian, to_geodetic
from .grid import CellNameError, OutOfGridError, cell_name, cell_of, in_zone, parse_cell_name
from .protocol import (
    ProtocolError,
    WireMessage,
    decode,
    encode,
    error_message,
    new_event_id,
    now_ms,
)
from .scenario import Scenario, render_frame
from .threat import SensorState, ThreatLevel, ThreatVerdict, UserState, classify

log = logging.getLogger("trafficsafe.net")

EVAL_BUDGET_MS = 25.205


class ConnectionFailed(OSError):
    pass


class RegistrationRejected(RuntimeError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


def log_line(role: str, mtype: str, device: str = "-", zone: str = "-",
             latency_ms: Optional[float] = None) -> None:
    lat = "-" if latency_ms is None else f"{latency_ms:.3f}"
    log.info("%.3f | %s | %s | %s | %s | %s", now_ms(), role, mtype, device, zone, lat)


@dataclass
class HopStats:
    n: int
    mean: float
    median: float
    std: float
    max: float
    negative: int
    clock_suspect: bool

    def within(self, budget_ms: float = EVAL_BUDGET_MS) -> bool:
        return self.n > 0 and self.max <= budget_ms

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "median": self.median, "std": self.std,
                "max": self.max, "negative": self.negative, "clock_suspect": self.clock_suspect}


def measure_hop_latency(samples: Sequence[float]) -> HopStats:
    """Summarize one-way latencies (receive clock minus send stamp)."""
    xs = list(samples)
    if not xs:
        return HopStats(0, math.nan, math.nan, math.nan, math.nan, 0, False)
    neg = sum(1 for x in xs if x < 0)
    return HopStats(
        n=len(xs),
        mean=statistics.fmean(xs),
        median=statistics.median(xs),
        std=statistics.stdev(xs) if len(xs) > 1 else 0.0,
        max=max(xs),
        negative=neg,
        clock_suspect=neg > 0.01 * len(xs),
    )


async def _send(writer: asyncio.StreamWriter, msg: WireMessage) -> None:
    writer.write(encode(msg))
    await writer.drain()


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


# -- processing ---------------------------------------------------------

@dataclass
class _Sensor:
    device_id: str
    zone: str
    cell: object
    camera_bearing: float
    position: GeoPoint
    lane_zones: tuple[LaneZone, ...]
    beta: float
    writer: asyncio.StreamWriter


@dataclass
class _User:
    device_id: str
    zone: str
    cell: object
    writer: asyncio.StreamWriter


@dataclass
class ProcessingStats:
    t_eval: list[float] = field(default_factory=list)
    t_exe: list[float] = field(default_factory=list)
    frames: int = 0
    events: int = 0
    deliveries: int = 0
    dropped: int = 0


class ProcessingNode:
    role = "processing"

    def __init__(self, cell_size: float = 1000.0, emergency_classes: Sequence[str] = ("emergency",)):
        self.cell_size = cell_size
        self.emergency_classes = tuple(emergency_classes)
        self.sensors: dict[str, _Sensor] = {}
        self.users: dict[str, _User] = {}
        self.pending: dict[str, WireMessage] = {}
        self.stats = ProcessingStats()
        self._sent_at: dict[tuple[str, str], float] = {}
        self._server: Optional[asyncio.base_events.Server] = None
        self.inbox_hook: Optional[Callable[[WireMessage], None]] = None

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> int:
        self._server = await asyncio.start_server(self._handle, host, port)
        return self.port

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for entry in list(self.sensors.values()) + list(self.users.values()):
            entry.writer.close()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        owned: list[tuple[str, str]] = []
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                t_in = now_ms()
                try:
                    msg = decode(line)
                except ProtocolError as exc:
                    log_line(self.role, "error", zone="-", latency_ms=None)
                    await _send(writer, error_message("bad_message", str(exc), offset=exc.offset))
                    continue
                if self.inbox_hook:
                    self.inbox_hook(msg)
                await self._dispatch(msg, t_in, writer, owned)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            for kind, dev in owned:
                table = self.sensors if kind == "sensor" else self.users
                if dev in table and table[dev].writer is writer:
                    del table[dev]
            writer.close()

    async def _dispatch(self, msg: WireMessage, t_in: float, writer, owned) -> None:
        b = msg.body
        t = msg.type
        if t == "register_sensor":
            await self._register_sensor(b, writer, owned)
        elif t == "register_user":
            await self._register_user(b, writer, owned)
        elif t == "update_zone":
            await self._update_zone(b, writer)
        elif t == "frame":
            await self._frame(msg, t_in, writer)
        elif t == "ack" and b.get("ref") == "event":
            sent = self._sent_at.pop((b.get("event_id"), b.get("device_id")), None)
            if sent is not None and "t_receive" in b:
                self.stats.t_exe.append(b["t_receive"] - sent)
                log_line(self.role, "ack", b.get("device_id", "-"), "-", b["t_receive"] - sent)
        elif t == "error":
            log.warning("peer error %s: %s", b.get("code"), b.get("message"))
        else:
            await _send(writer, error_message("unexpected_type", f"processing does not accept {t}"))

    def _zone_cell(self, zone: str):
        return parse_cell_name(zone, self.cell_size)

    async def _register_sensor(self, b: dict, writer, owned) -> None:
        dev = str(b["device_id"])
        if not dev:
            await _send(writer, error_message("invalid_registration", "empty device_id"))
            return
        if dev in self.sensors or dev in self.users:
            await _send(writer, error_message("duplicate_device", f"{dev} already registered"))
            return
        try:
            cell = self._zone_cell(b["zone"])
            pos = b["position"]
            zones = tuple(LaneZone.from_dict(z) for z in b.get("lane_zones") or ())
            entry = _Sensor(dev, b["zone"], cell, float(b["trajectory"]) % 360.0,
                            GeoPoint(float(pos["lat"]), float(pos["lon"])), zones,
                            float(b.get("beta", DEFAULT_BETA)), writer)
        except (CellNameError, KeyError, TypeError, ValueError) as exc:
            await _send(writer, error_message("invalid_registration", str(exc)))
            return
        if not zones:
            await _send(writer, error_message("invalid_registration", "sensor needs lane_zones"))
            return
        self.sensors[dev] = entry
        owned.append(("sensor", dev))
        log_line(self.role, "register_sensor", dev, entry.zone)
        await _send(writer, WireMessage("ack", {"ref": "register_sensor", "device_id": dev}))

    async def _register_user(self, b: dict, writer, owned) -> None:
        dev = str(b["device_id"])
        if not dev:
            await _send(writer, error_message("invalid_registration", "empty device_id"))
            return
        if dev in self.sensors or dev in self.users:
            await _send(writer, error_message("duplicate_device", f"{dev} already registered"))
            return
        try:
            cell = self._zone_cell(b["zone"])
        except CellNameError as exc:
            await _send(writer, error_message("invalid_registration", str(exc)))
            return
        self.users[dev] = _User(dev, b["zone"], cell, writer)
        owned.append(("user", dev))
        log_line(self.role, "register_user", dev, b["zone"])
        await _send(writer, WireMessage("ack", {"ref": "register_user", "device_id": dev}))
        queued = self.pending.pop(dev, None)
        if queued is not None:
            await self._deliver(self.users[dev], queued, retry=False)

    async def _update_zone(self, b: dict, writer) -> None:
        dev = str(b["device_id"])
        user = self.users.get(dev)
        if user is None or user.writer is not writer:
            await _send(writer, error_message("unregistered", f"{dev} is not registered here"))
            return
        try:
            user.cell = self._zone_cell(b["zone"])
        except CellNameError as exc:
            await _send(writer, error_message("invalid_zone", str(exc)))
            return
        user.zone = b["zone"]
        log_line(self.role, "update_zone", dev, user.zone)
        await _send(writer, WireMessage("ack", {"ref": "update_zone", "device_id": dev,
                                                "zone": user.zone}))

    async def _frame(self, msg: WireMessage, t_in: float, writer) -> None:
        b = msg.body
        sensor = self.sensors.get(str(b.get("sensor_id")))
        if sensor is None or sensor.writer is not writer:
            await _send(writer, error_message("unregistered", f"frame from unregistered sensor {b.get('sensor_id')}"))
            return
        try:
            frame = DetectionFrame.from_dict(b)
        except (KeyError, TypeError, ValueError) as exc:
            await _send(writer, error_message("bad_frame", str(exc)))
            return
        t_eval = t_in - msg.ts
        self.stats.t_eval.append(t_eval)
        self.stats.frames += 1
        log_line(self.role, "frame", sensor.device_id, sensor.zone, t_eval)

        events = []
        for box in frame.boxes:
            if box.class_label not in self.emergency_classes:
                continue
            heading = classify_box(box, frame.height, sensor.lane_zones, sensor.beta)
            if heading is not Heading.TOWARD:
                continue
            events.append(WireMessage("event", {
                "event_id": new_event_id(),
                "sensor_id": sensor.device_id,
                "sensor_position": {"lat": sensor.position.lat, "lon": sensor.position.lon},
                "object_bearing": object_bearing(sensor.camera_bearing, heading),
                "object_class": box.class_label,
                "heading": heading.value,
                "zone": sensor.zone,
                "t_detect": frame.timestamp,
                "severity_hint": "intersection",
            }))
        await _send(writer, WireMessage("ack", {
            "ref": "frame", "frame_id": frame.frame_id, "t_receive": t_in, "events": len(events),
        }))
        for ev in events:
            self.stats.events += 1
            for user in list(self.users.values()):
                if in_zone(sensor.cell, user.cell):
                    await self._deliver(user, ev)

    async def _deliver(self, user: _User, ev: WireMessage, retry: bool = True) -> None:
        out = WireMessage("event", ev.body)
        try:
            await _send(user.writer, out)
        except (ConnectionError, RuntimeError, OSError):
            if retry and user.device_id not in self.pending:
                self.pending[user.device_id] = ev
                log.warning("user %s unreachable, event %s queued", user.device_id, ev.body["event_id"])
            else:
                self.stats.dropped += 1
                log.warning("user %s unreachable, event %s dropped", user.device_id, ev.body["event_id"])
            return
        self._sent_at[(ev.body["event_id"], user.device_id)] = out.ts
        self.stats.deliveries += 1
        log_line(self.role, "event", user.device_id, user.zone)


# -- clients ------------------------------------------------------------

async def _connect(host: str, port: int, timeout: float = 5.0):
    try:
        return await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    except (OSError, asyncio.TimeoutError) as exc:
        raise ConnectionFailed(f"cannot connect to {host}:{port}: {exc}") from None


async def _expect_ack(reader: asyncio.StreamReader, ref: str, timeout: float = 5.0) -> WireMessage:
    while True:
        line = await asyncio.wait_for(reader.readline(), timeout)
        if not line:
            raise ConnectionFailed("processing node closed the connection")
        msg = decode(line)
        if msg.type == "error":
            raise RegistrationRejected(msg.body["code"], msg.body["message"])
        if msg.type == "ack" and msg.body.get("ref") == ref:
            return msg


def sensor_registration(sc: Scenario, sensor_id: str) -> WireMessage:
    s = sc.sensor(sensor_id)
    pos = to_geodetic(s.position, sc.origin)
    return WireMessage("register_sensor", {
        "device_id": s.id,
        "socket_in": s.socket_in,
        "trajectory": s.camera_bearing,
        "zone": cell_name(sc.cell(s.position)),
        "position": {"lat": pos.lat, "lon": pos.lon},
        "lane_zones": [z.to_dict() for z in s.lane_zones],
        "beta": s.beta,
    })


@dataclass
class SensorReport:
    frames: int
    events: int
    t_eval: HopStats

    def to_dict(self) -> dict:
        return {"frames": self.frames, "events": self.events, "t_eval": self.t_eval.to_dict()}


async def run_sensor(host: str, port: int, sc: Scenario, sensor_id: str, frames: int = 10,
                     interval_ms: Optional[float] = None, delay_ms: float = 0.0) -> SensorReport:
    """Replay the scenario through one camera, one frame every ``interval_ms`` of wall time.

    ``delay_ms`` holds each frame back after stamping it, to check that the
    measured uplink latency picks the delay up.
    """
    sensor = sc.sensor(sensor_id)
    interval = sc.frame_interval_ms if interval_ms is None else interval_ms
    reader, writer = await _connect(host, port)
    samples, n_events = [], 0
    try:
        await _send(writer, sensor_registration(sc, sensor_id))
        await _expect_ack(reader, "register_sensor")
        log_line("sensor", "register_sensor", sensor.id, cell_name(sc.cell(sensor.position)))
        for k in range(frames):
            t_sim = k * sc.frame_interval_ms / 1000.0
            frame = render_frame(sc, sensor, t_sim, k, now_ms())
            msg = WireMessage("frame", frame.to_dict())
            if delay_ms > 0:
                await asyncio.sleep(delay_ms / 1000.0)
            await _send(writer, msg)
            ack = await _expect_ack(reader, "frame")
            samples.append(ack.body["t_receive"] - msg.ts)
            n_events += ack.body.get("events", 0)
            if interval > 0 and k + 1 < frames:
                await asyncio.sleep(interval / 1000.0)
    except (ConnectionError, asyncio.IncompleteReadError) as exc:
        raise ConnectionFailed(str(exc)) from None
    finally:
        writer.close()
    return SensorReport(frames, n_events, measure_hop_latency(samples))


@dataclass
class ConsumerVerdict:
    event_id: str
    sensor_id: str
    verdict: ThreatVerdict
    t_exe: float

    def to_dict(self) -> dict:
        return {"event_id": self.event_id, "sensor_id": self.sensor_id,
                "level": self.verdict.level.value, "rationale": self.verdict.rationale,
                "t_exe": self.t_exe}


@dataclass
class ConsumerReport:
    device_id: str
    verdicts: list[ConsumerVerdict]
    t_exe: HopStats
    errors: int = 0
    sent: list[WireMessage] = field(default_factory=list)

    @property
    def alarm(self) -> bool:
        return any(v.verdict.level is ThreatLevel.ALARM for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"device_id": self.device_id, "alarm": self.alarm,
                "verdicts": [v.to_dict() for v in self.verdicts],
                "t_exe": self.t_exe.to_dict(), "errors": self.errors}


def sensor_state_from_event(body: dict, origin: GeoPoint, cell_size: float) -> SensorState:
    """Rebuild the sensor ray from an event; raises ValueError if the zone does not fit."""
    zone_cell = parse_cell_name(body["zone"], cell_size)
    p = body["sensor_position"]
    pos = to_cartesian(GeoPoint(float(p["lat"]), float(p["lon"])), origin)
    cell = cell_of(pos, cell_size)
    if cell != zone_cell:
        raise ValueError(f"sensor position lies in {cell}, event says {body['zone']}")
    tr = Trajectory(pos, float(body["object_bearing"]))
    return SensorState(body["sensor_id"], tr, cell, event_active=body["heading"] == Heading.TOWARD.value)


class Consumer:
    """User module: holds the private trajectory, reports only its zone."""

    role = "consumer"

    def __init__(self, sc: Scenario, user_id: str, time_scale: float = 1.0):
        self.sc = sc
        self.user = sc.user(user_id)
        self.time_scale = time_scale
        self.sent: list[WireMessage] = []
        self._t0 = 0.0

    def elapsed_s(self) -> float:
        return max(0.0, (now_ms() - self._t0) / 1000.0 * self.time_scale)

    def current_state(self) -> UserState:
        here = position_at(self.user.trajectory, self.elapsed_s())
        tr = Trajectory(here, self.user.trajectory.bearing, self.user.trajectory.speed)
        return UserState(self.user.id, tr, self.sc.cell(here))

    async def _send(self, writer, msg: WireMessage) -> None:
        self.sent.append(msg)
        await _send(writer, msg)

    async def run(self, host: str, port: int, max_events: Optional[int] = None,
                  timeout_s: Optional[float] = None,
                  ready: Optional[asyncio.Event] = None) -> ConsumerReport:
        reader, writer = await _connect(host, port)
        self._t0 = now_ms()
        verdicts: list[ConsumerVerdict] = []
        errors = 0
        zone = cell_name(self.current_state().cell)
        try:
            await self._send(writer, WireMessage("register_user", {
                "device_id": self.user.id, "socket_in": "127.0.0.1:0", "zone": zone}))
            await _expect_ack(reader, "register_user")
            log_line(self.role, "register_user", self.user.id, zone)
            if ready is not None:
                ready.set()
            loop = asyncio.get_running_loop()
            deadline = None if timeout_s is None else loop.time() + timeout_s
            while max_events is None or len(verdicts) + errors < max_events:
                wait = None if deadline is None else deadline - loop.time()
                if wait is not None and wait <= 0:
                    break
                try:
                    line = await asyncio.wait_for(reader.readline(), wait)
                except asyncio.TimeoutError:
                    break
                if not line:
                    break
                t_rx = now_ms()
                msg = decode(line)
                if msg.type != "event":
                    if msg.type == "error":
                        log.warning("processing error %s: %s", msg.body["code"], msg.body["message"])
                    continue
                t_exe = t_rx - msg.ts
                b = msg.body
                try:
                    state = self.current_state()
                except OutOfGridError as exc:
                    errors += 1
                    log.error("event %s ignored, user is off the grid: %s", b.get("event_id"), exc)
                    continue
                new_zone = cell_name(state.cell)
                if new_zone != zone:
                    zone = new_zone
                    await self._send(writer, WireMessage("update_zone",
                                                         {"device_id": self.user.id, "zone": zone}))
                try:
                    s_state = sensor_state_from_event(b, self.sc.origin, self.sc.cell_size)
                except (CellNameError, OutOfGridError, KeyError, ValueError) as exc:
                    errors += 1
                    log.error("event %s rejected: %s", b.get("event_id"), exc)
                    continue
                verdict = classify(state, s_state)
                verdicts.append(ConsumerVerdict(b["event_id"], b["sensor_id"], verdict, t_exe))
                log_line(self.role, f"verdict:{verdict.level.value}", self.user.id, zone, t_exe)
                await self._send(writer, WireMessage("ack", {
                    "ref": "event", "event_id": b["event_id"], "device_id": self.user.id,
                    "t_receive": t_rx}))
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            writer.close()
        return ConsumerReport(self.user.id, verdicts,
                              measure_hop_latency([v.t_exe for v in verdicts]), errors, self.sent)
