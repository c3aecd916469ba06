"""Station report ingestion: parse, enrich with the sun, store one JSON file per report.

Payloads arrive either URL-encoded (the ObserverIP custom-server format) or
as a JSON object. Vendor field names map onto :class:`StationReport` as
follows::

    dateutc        -> last_update        (UTC, "YYYY-MM-DD HH:MM:SS")
    tempf          -> temp_f
    humidity       -> humidity_pct
    dewptf         -> dew_point_f
    windspeedmph   -> wind_speed_mph
    eventrainin    -> rain_in
    baromrelin     -> barometer_inhg
    solarradiation -> solar_radiation_wm2
    uv             -> uv_index           (optional)

Unknown fields are ignored. Records are written to ``<root>/<key>.json`` where
the key is the timestamp with colons replaced by hyphens, so file names sort
chronologically and survive filesystems that reject ``:``.
"""

import json
import logging
import math
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlencode

from solarcast.errors import ConflictError, ValidationError
from solarcast.solar_geometry import GeoLocation, as_utc, solar_altitude_ratio

log = logging.getLogger(__name__)

VENDOR_FIELDS = {
    "dateutc": "last_update",
    "tempf": "temp_f",
    "humidity": "humidity_pct",
    "dewptf": "dew_point_f",
    "windspeedmph": "wind_speed_mph",
    "eventrainin": "rain_in",
    "baromrelin": "barometer_inhg",
    "solarradiation": "solar_radiation_wm2",
    "uv": "uv_index",
}
OPTIONAL_VENDOR_FIELDS = {"uv"}
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
KEY_FORMAT = "%Y-%m-%dT%H-%M-%S"
DEW_POINT_SLACK_F = 0.5


@dataclass(frozen=True)
class StationReport:
    last_update: str
    temp_f: float
    humidity_pct: float
    dew_point_f: float
    wind_speed_mph: float
    rain_in: float
    barometer_inhg: float
    solar_radiation_wm2: float
    uv_index: float | None = None

    def __post_init__(self):
        parse_timestamp(self.last_update)
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "last_update" or v is None:
                continue
            if not math.isfinite(v):
                raise ValidationError(f"{f.name}={v} is not finite")
        _check_range("humidity_pct", self.humidity_pct, 0.0, 100.0)
        _check_range("wind_speed_mph", self.wind_speed_mph, 0.0, math.inf)
        _check_range("rain_in", self.rain_in, 0.0, math.inf)
        _check_range("solar_radiation_wm2", self.solar_radiation_wm2, 0.0, math.inf)
        if self.uv_index is not None:
            _check_range("uv_index", self.uv_index, 0.0, math.inf)
        if self.barometer_inhg <= 0.0:
            raise ValidationError(f"barometer_inhg={self.barometer_inhg} must be > 0")
        if self.dew_point_f > self.temp_f + DEW_POINT_SLACK_F:
            raise ValidationError(
                f"dew_point_f={self.dew_point_f} exceeds temp_f={self.temp_f} + {DEW_POINT_SLACK_F}"
            )

    def to_vendor(self):
        """Inverse of the field mapping, as a vendor-named dict."""
        out = {}
        for vendor, name in VENDOR_FIELDS.items():
            v = getattr(self, name)
            if v is not None:
                out[vendor] = v
        return out


@dataclass(frozen=True)
class EnrichedRecord:
    last_update: str
    temp_f: float
    humidity_pct: float
    dew_point_f: float
    wind_speed_mph: float
    rain_in: float
    barometer_inhg: float
    solar_radiation_wm2: float
    uv_index: float | None
    solar_altitude_pct: float
    station: GeoLocation
    received_at: str

    @property
    def report(self):
        return StationReport(**{f.name: getattr(self, f.name) for f in fields(StationReport)})

    def to_dict(self):
        d = asdict(self)
        d["station"] = self.station.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kwargs = {f.name: d[f.name] for f in fields(cls)}
        except KeyError as exc:
            raise ValidationError(f"record missing field {exc.args[0]!r}") from None
        kwargs["station"] = GeoLocation.from_dict(kwargs["station"])
        rec = cls(**kwargs)
        rec.report  # run StationReport validation
        return rec


def _check_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise ValidationError(f"{name}={value} outside [{lo:g}, {hi:g}]")


def parse_timestamp(text):
    """Parse a station timestamp (naive UTC, whole seconds) into an aware datetime."""
    if not isinstance(text, str):
        raise ValidationError(f"timestamp must be a string, got {type(text).__name__}")
    s = text.strip()
    try:
        dt = datetime.strptime(s, TIMESTAMP_FORMAT)
    except ValueError:
        try:
            dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
        except ValueError:
            raise ValidationError(f"unparseable timestamp {text!r}") from None
    if dt.microsecond:
        raise ValidationError(f"timestamp {text!r} has sub-second precision")
    return as_utc(dt)


def sanitize_key(last_update):
    """Storage key for a timestamp, e.g. ``2024-03-01 17:30:16`` -> ``2024-03-01T17-30-16``."""
    return parse_timestamp(last_update).strftime(KEY_FORMAT)


def _number(vendor, raw):
    if isinstance(raw, bool):
        raise ValidationError(f"field {vendor!r}: expected a number, got {raw!r}")
    if isinstance(raw, (int, float)):
        return float(raw)
    try:
        return float(str(raw).strip())
    except ValueError:
        raise ValidationError(f"field {vendor!r}: expected a number, got {raw!r}") from None


def parse_station_report(body, content_type="application/json"):
    """Parse a POST body (bytes or str) in either payload format."""
    if isinstance(body, bytes):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError:
            raise ValidationError("payload is not valid UTF-8") from None
    if not body or not body.strip():
        raise ValidationError("empty payload")
    media = (content_type or "").split(";")[0].strip().lower()
    if media == "application/json" or (not media and body.lstrip().startswith("{")):
        try:
            raw = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ValidationError("JSON payload must be an object")
    else:
        raw = {k: v[-1] for k, v in parse_qs(body, keep_blank_values=True).items()}

    values = {}
    for vendor, name in VENDOR_FIELDS.items():
        if vendor not in raw or raw[vendor] in ("", None):
            if vendor in OPTIONAL_VENDOR_FIELDS:
                values[name] = None
                continue
            raise ValidationError(f"missing required field {vendor!r}")
        if vendor == "dateutc":
            values[name] = str(raw[vendor]).strip()
        else:
            values[name] = _number(vendor, raw[vendor])
    return StationReport(**values)


def encode_report(report, content_type="application/json"):
    """Serialise a report in the requested payload format (inverse of parsing)."""
    if content_type == "application/json":
        return json.dumps(report.to_vendor())
    return urlencode({k: repr(v) if isinstance(v, float) else v for k, v in report.to_vendor().items()})


def utc_now():
    return datetime.now(timezone.utc)


def enrich(report, station, now=None):
    now = utc_now() if now is None else as_utc(now)
    ratio = solar_altitude_ratio(station, parse_timestamp(report.last_update))
    return EnrichedRecord(
        **asdict(report),
        solar_altitude_pct=ratio,
        station=station,
        received_at=now.isoformat().replace("+00:00", "Z"),
    )


def _same_observation(a, b):
    # received_at differs across retransmissions of the same report
    a = dict(a, received_at=None)
    b = dict(b, received_at=None)
    return a == b


def store_record(record, root):
    """Atomically write ``record`` to ``root/<key>.json`` and return the path.

    Re-storing the same observation is a no-op; a different observation under
    an existing key raises :class:`ConflictError`.
    """
    root = Path(root)
    key = sanitize_key(record.last_update)
    path = root / f"{key}.json"
    payload = json.dumps(record.to_dict(), sort_keys=True, indent=1).encode("utf-8") + b"\n"
    fd, tmp = tempfile.mkstemp(prefix=f".{key}.", suffix=".tmp", dir=root)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        try:
            # link() refuses to overwrite, which makes create-if-absent atomic
            os.link(tmp, path)
        except FileExistsError:
            existing = json.loads(path.read_text(encoding="utf-8"))
            if not _same_observation(existing, record.to_dict()):
                raise ConflictError(f"{path} already holds a different record") from None
    finally:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
    return path


def load_record(path):
    with open(path, encoding="utf-8") as fh:
        return EnrichedRecord.from_dict(json.load(fh))


class _Handler(BaseHTTPRequestHandler):
    server_version = "solarcast-ingest/1"

    def _reply(self, status, obj):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path.split("?")[0] == "/healthz":
            self._reply(HTTPStatus.OK, {"status": "ok"})
        else:
            self._reply(HTTPStatus.NOT_FOUND, {"error": f"no route {self.path}"})

    def do_POST(self):
        if self.path.split("?")[0] != "/report":
            self._reply(HTTPStatus.NOT_FOUND, {"error": f"no route {self.path}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length)
        try:
            report = parse_station_report(body, self.headers.get("Content-Type", ""))
            record = enrich(report, self.server.station)
            path = store_record(record, self.server.data_root)
        except ValidationError as exc:
            self._reply(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
        except ConflictError as exc:
            self._reply(HTTPStatus.CONFLICT, {"error": str(exc)})
        except OSError as exc:
            log.error("storage failure: %s", exc)
            self._reply(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": f"storage failure: {exc}"})
        else:
            self._reply(HTTPStatus.OK, {"key": path.stem, "path": str(path)})

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


class IngestServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128

    def __init__(self, address, station, data_root):
        self.station = station
        self.data_root = Path(data_root)
        self.data_root.mkdir(parents=True, exist_ok=True)
        super().__init__(address, _Handler)

    @property
    def url(self):
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self):
        """Serve from a daemon thread; returns the thread. Stop with ``shutdown()``."""
        t = threading.Thread(target=self.serve_forever, name="ingest", daemon=True)
        t.start()
        return t


def parse_bind(bind):
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValidationError(f"bind address {bind!r} is not host:port")
    return host or "0.0.0.0", int(port)


def serve(bind, station, root):
    server = IngestServer(parse_bind(bind), station, root)
    log.info("ingest listening on %s, storing under %s", server.url, server.data_root)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
