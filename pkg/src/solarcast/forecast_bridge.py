"""Forecast grid point -> model features -> irradiance prediction.

Grid snapshot files are JSON Lines, one grid point per line::

    {"valid_time": "2024-06-20T18:00:00Z", "latitude_deg": 42.56000137,
     "longitude_deg": -83.63999939, "temp_k": 296.4, "dewpoint_k": 285.1,
     "wind_u_ms": 2.1, "wind_v_ms": -0.7, "precip_m": 0.0,
     "surface_pressure_pa": 99120.0}

Field sources in ERA5 / GraphCast terms: ``temp_k`` is 2 m temperature,
``dewpoint_k`` 2 m dewpoint, ``wind_u_ms``/``wind_v_ms`` the 10 m wind
components, ``precip_m`` total precipitation over the step and
``surface_pressure_pa`` surface pressure. Blank lines and lines starting with
``#`` are ignored. A file may hold several ``valid_time`` values; callers then
pick one.
"""

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from solarcast import kernels
from solarcast import neuralnet as nn
from solarcast.dataset import FEATURE_ORDER
from solarcast.errors import FormatError, ValidationError
from solarcast.solar_geometry import (
    GeoLocation,
    as_utc,
    clear_sky_index,
    potential_irradiance,
    solar_altitude_ratio,
    sun_position,
)

MPS_TO_MPH = 2.2369362921
M_TO_IN = 1.0 / 0.0254
PA_PER_INHG = 3386.389
MAGNUS_A = 17.625
MAGNUS_B = 243.04
SUPERSATURATION_SLACK_K = 0.5

POINT_FIELDS = (
    "latitude_deg",
    "longitude_deg",
    "temp_k",
    "dewpoint_k",
    "wind_u_ms",
    "wind_v_ms",
    "precip_m",
    "surface_pressure_pa",
)


@dataclass(frozen=True)
class GridPoint:
    latitude_deg: float
    longitude_deg: float
    temp_k: float
    dewpoint_k: float
    wind_u_ms: float
    wind_v_ms: float
    precip_m: float
    surface_pressure_pa: float

    def __post_init__(self):
        for name in POINT_FIELDS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"grid point field {name}={v!r} is not a finite number")
        GeoLocation(self.latitude_deg, self.longitude_deg)
        if self.temp_k <= 0:
            raise ValidationError(f"temp_k={self.temp_k} must be > 0")
        if self.dewpoint_k <= 0:
            raise ValidationError(f"dewpoint_k={self.dewpoint_k} must be > 0")
        if self.surface_pressure_pa <= 0:
            raise ValidationError(f"surface_pressure_pa={self.surface_pressure_pa} must be > 0")
        if self.precip_m < 0:
            raise ValidationError(f"precip_m={self.precip_m} must be >= 0")

    @property
    def location(self):
        return GeoLocation(self.latitude_deg, self.longitude_deg)


@dataclass(frozen=True)
class GridSnapshot:
    valid_time: object  # aware UTC datetime
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "valid_time", as_utc(self.valid_time))
        object.__setattr__(self, "points", tuple(self.points))


@dataclass
class BridgeOutput:
    features: np.ndarray
    source_point: GridPoint
    distance_m: float


# ---------------------------------------------------------------------------
# Snapshot files
# ---------------------------------------------------------------------------


def _iso(dt):
    return dt.isoformat().replace("+00:00", "Z")


def read_snapshots(path):
    """Parse a JSONL grid file into snapshots keyed by valid time (sorted)."""
    groups = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
                when = as_utc(obj["valid_time"])
                point = GridPoint(**{k: obj[k] for k in POINT_FIELDS})
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            except KeyError as exc:
                raise ValidationError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            groups.setdefault(when, []).append(point)
    return [GridSnapshot(t, pts) for t, pts in sorted(groups.items())]


def write_snapshot(snapshot, path, append=False):
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for p in snapshot.points:
            fh.write(json.dumps({"valid_time": _iso(snapshot.valid_time), **asdict(p)}) + "\n")
    return path


def select_snapshot(snapshots, when=None):
    if not snapshots:
        raise ValidationError("grid file holds no points")
    if when is None:
        if len(snapshots) > 1:
            raise ValidationError(
                f"grid file holds {len(snapshots)} valid times; pass one explicitly "
                f"({', '.join(_iso(s.valid_time) for s in snapshots[:4])}...)"
            )
        return snapshots[0]
    when = as_utc(when)
    for s in snapshots:
        if s.valid_time == when:
            return s
    raise ValidationError(f"no grid points valid at {_iso(when)}")


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def haversine_m(a, b):
    return float(
        kernels.haversine(a.latitude_deg, a.longitude_deg, np.array([b.latitude_deg]), np.array([b.longitude_deg]))[0]
    )


def nearest_grid_point(station, snapshot):
    """Closest point by great-circle distance; ties go to the smaller (lat, lon)."""
    points = snapshot.points if isinstance(snapshot, GridSnapshot) else tuple(snapshot)
    if not points:
        raise ValidationError("snapshot has no grid points")
    lats = np.array([p.latitude_deg for p in points], dtype=np.float64)
    lons = np.array([p.longitude_deg for p in points], dtype=np.float64)
    d = kernels.haversine(station.latitude_deg, station.longitude_deg, lats, lons)
    best = min(range(len(points)), key=lambda i: (d[i], lats[i], lons[i]))
    return points[best], float(d[best])


# ---------------------------------------------------------------------------
# Unit conversions
# ---------------------------------------------------------------------------


def kelvin_to_f(k):
    return (k - 273.15) * 9.0 / 5.0 + 32.0


def f_to_kelvin(f):
    return (f - 32.0) * 5.0 / 9.0 + 273.15


def wind_speed_mph(u, v):
    return math.hypot(u, v) * MPS_TO_MPH


def mph_to_ms(mph):
    return mph / MPS_TO_MPH


def metres_to_inches(m):
    return m * M_TO_IN


def inches_to_metres(inch):
    return inch / M_TO_IN


def pa_to_inhg(pa):
    return pa / PA_PER_INHG


def inhg_to_pa(inhg):
    return inhg * PA_PER_INHG


def _magnus(t_c):
    return MAGNUS_A * t_c / (MAGNUS_B + t_c)


def relative_humidity(temp_k, dewpoint_k):
    """Magnus relative humidity in percent, clamped to [0, 100]."""
    t, td = temp_k - 273.15, dewpoint_k - 273.15
    rh = 100.0 * math.exp(_magnus(td) - _magnus(t))
    return min(100.0, max(0.0, rh))


def dewpoint_from_rh(temp_k, rh_pct):
    """Inverse of :func:`relative_humidity` for ``0 < rh <= 100``."""
    gamma = math.log(rh_pct / 100.0) + _magnus(temp_k - 273.15)
    return MAGNUS_B * gamma / (MAGNUS_A - gamma) + 273.15


def to_features(point, station, valid_time):
    """Model input vector (order :data:`FEATURE_ORDER`) for one grid point."""
    if point.dewpoint_k > point.temp_k + SUPERSATURATION_SLACK_K:
        raise ValidationError(
            f"dewpoint_k={point.dewpoint_k} exceeds temp_k={point.temp_k} + {SUPERSATURATION_SLACK_K}"
        )
    values = {
        "temp_f": kelvin_to_f(point.temp_k),
        "humidity_pct": relative_humidity(point.temp_k, point.dewpoint_k),
        "dew_point_f": kelvin_to_f(point.dewpoint_k),
        "wind_speed_mph": wind_speed_mph(point.wind_u_ms, point.wind_v_ms),
        "rain_in": metres_to_inches(point.precip_m),
        "barometer_inhg": pa_to_inhg(point.surface_pressure_pa),
        "solar_altitude_pct": solar_altitude_ratio(station, valid_time),
    }
    return np.array([values[name] for name in FEATURE_ORDER], dtype=np.float64)


def bridge(station, snapshot):
    point, dist = nearest_grid_point(station, snapshot)
    return BridgeOutput(to_features(point, station, snapshot.valid_time), point, dist)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(model_path, grid_path, station, when=None):
    """Predict surface irradiance at ``station`` from a model file and a grid file.

    Returns the report dict printed by the ``predict`` subcommand.
    """
    model, header = nn.read_model_file(model_path)
    if tuple(header["feature_order"]) != FEATURE_ORDER:
        raise FormatError(f"{model_path}: feature order does not match the bridge")
    if model.config.input_dim != len(FEATURE_ORDER):
        raise FormatError(f"{model_path}: model expects {model.config.input_dim} inputs, bridge emits 7")
    stats = nn.load_standardization(header)
    snapshot = select_snapshot(read_snapshots(grid_path), when)
    out = bridge(station, snapshot)
    raw = float(nn.predict(model, out.features.reshape(1, -1), stats)[0])
    pos = sun_position(station, snapshot.valid_time)
    potential = potential_irradiance(pos)
    night = potential <= 0.0
    # irradiance cannot be negative, and with the sun down there is nothing to predict
    prediction = 0.0 if night else max(0.0, raw)
    return {
        "valid_time": _iso(snapshot.valid_time),
        "station": station.to_dict(),
        "source_point": {"latitude_deg": out.source_point.latitude_deg,
                         "longitude_deg": out.source_point.longitude_deg},
        "distance_m": out.distance_m,
        "features": dict(zip(FEATURE_ORDER, (float(v) for v in out.features))),
        "standardized": stats is not None,
        "raw_output_wm2": raw,
        "night": night,
        "predicted_irradiance_wm2": prediction,
        "solar_altitude_deg": pos.altitude_deg,
        "potential_irradiance_wm2": potential,
        "clear_sky_index": clear_sky_index(prediction, potential),
    }
