"""Sun position, solar noon, the altitude-ratio feature and clear-sky irradiance.

The ephemeris is NOAA's low-precision fractional-year series (declination and
equation of time), good to roughly half a degree of altitude between 1950 and
2100. Refraction is ignored.
"""

import math
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone

import numpy as np

from solarcast import kernels
from solarcast.errors import ValidationError

HAURWITZ_SCALE = 1098.0
HAURWITZ_EXTINCTION = 0.057
CLEAR_SKY_INDEX_CAP = 1.5

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MIN_YEAR = 1950
_MAX_YEAR = 2100
# Newton iterations on the hour angle; each converges ~100x
_NOON_ITERATIONS = 4


@dataclass(frozen=True)
class GeoLocation:
    latitude_deg: float
    longitude_deg: float

    def __post_init__(self):
        lat = float(self.latitude_deg)
        lon = float(self.longitude_deg)
        if not -90.0 <= lat <= 90.0:
            raise ValidationError(f"latitude_deg={self.latitude_deg} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValidationError(f"longitude_deg={self.longitude_deg} outside [-180, 180]")
        object.__setattr__(self, "latitude_deg", lat)
        object.__setattr__(self, "longitude_deg", lon)

    def to_dict(self):
        return {"latitude_deg": self.latitude_deg, "longitude_deg": self.longitude_deg}

    @classmethod
    def from_dict(cls, d):
        return cls(d["latitude_deg"], d["longitude_deg"])


@dataclass(frozen=True)
class SunPosition:
    altitude_deg: float
    azimuth_deg: float
    declination_deg: float
    hour_angle_deg: float


def as_utc(instant):
    """Return ``instant`` as an aware UTC datetime; naive values are taken as UTC."""
    if isinstance(instant, str):
        try:
            instant = datetime.fromisoformat(instant.strip().replace("Z", "+00:00"))
        except ValueError as exc:
            raise ValidationError(f"unparseable timestamp {instant!r}") from exc
    if not isinstance(instant, datetime):
        raise ValidationError(f"expected a datetime, got {type(instant).__name__}")
    if instant.tzinfo is None:
        instant = instant.replace(tzinfo=timezone.utc)
    instant = instant.astimezone(timezone.utc)
    if not _MIN_YEAR <= instant.year <= _MAX_YEAR:
        raise ValidationError(f"instant {instant.isoformat()} outside {_MIN_YEAR}-{_MAX_YEAR}")
    return instant


def unix_seconds(instant):
    delta = as_utc(instant) - _EPOCH
    return delta.days * 86400.0 + delta.seconds + delta.microseconds * 1e-6


def from_unix_seconds(seconds):
    return _EPOCH + timedelta(microseconds=round(seconds * 1e6))


def sun_positions(loc, unix_s):
    """Vectorised ephemeris: rows of (altitude, azimuth, declination, hour angle)."""
    t = np.ascontiguousarray(unix_s, dtype=np.float64).reshape(-1)
    return kernels.sun_angles(loc.latitude_deg, loc.longitude_deg, t)


def sun_position(loc, instant):
    row = sun_positions(loc, np.array([unix_seconds(instant)]))[0]
    return SunPosition(float(row[0]), float(row[1]), float(row[2]), float(row[3]))


def local_solar_date(loc, instant):
    """Calendar date in local mean solar time (UTC shifted 4 minutes per degree)."""
    shifted = as_utc(instant) + timedelta(minutes=4.0 * loc.longitude_deg)
    return shifted.date()


def solar_noon(loc, day):
    """UTC instant of maximum solar altitude on local solar date ``day``.

    ``day`` is a calendar date at the location (mean solar time), so for a
    longitude of -180 the instant lands near midnight UTC of the next day.
    """
    if isinstance(day, datetime):
        day = day.date()
    if not isinstance(day, date):
        raise ValidationError(f"expected a date, got {type(day).__name__}")
    midnight = datetime.combine(day, time(0), tzinfo=timezone.utc)
    t = unix_seconds(midnight) + (720.0 - 4.0 * loc.longitude_deg) * 60.0
    for _ in range(_NOON_ITERATIONS):
        hour_angle = sun_positions(loc, np.array([t]))[0, 3]
        # hour angle advances 1 degree every 240 s
        t -= hour_angle * 240.0
    return from_unix_seconds(t)


def solar_altitude_ratio(loc, instant):
    """Current altitude over the same local day's solar-noon altitude, in [0, 1]."""
    instant = as_utc(instant)
    noon = solar_noon(loc, local_solar_date(loc, instant))
    alt = sun_position(loc, instant).altitude_deg
    noon_alt = sun_position(loc, noon).altitude_deg
    if noon_alt <= 0.0 or alt <= 0.0:
        return 0.0
    return min(1.0, alt / noon_alt)


def potential_irradiance(pos):
    """Haurwitz clear-sky global horizontal irradiance in W/m².

    Accepts a :class:`SunPosition`, a scalar altitude in degrees or an array
    of altitudes. Zero at and below the horizon.
    """
    alt = pos.altitude_deg if isinstance(pos, SunPosition) else pos
    s = np.sin(np.radians(np.asarray(alt, dtype=np.float64)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ghi = HAURWITZ_SCALE * s * np.exp(-HAURWITZ_EXTINCTION / s)
    ghi = np.where(s > 0.0, ghi, 0.0)
    return float(ghi) if ghi.ndim == 0 else ghi


def clear_sky_index(measured, potential):
    if measured < 0 or potential < 0 or math.isnan(measured) or math.isnan(potential):
        raise ValidationError(f"clear_sky_index needs non-negative inputs, got {measured}, {potential}")
    if potential == 0:
        return 0.0
    return min(CLEAR_SKY_INDEX_CAP, measured / potential)


def describe(loc, instant):
    """Everything the ``solar-pos`` subcommand prints, as a plain dict."""
    instant = as_utc(instant)
    pos = sun_position(loc, instant)
    noon = solar_noon(loc, local_solar_date(loc, instant))
    return {
        "time": instant.isoformat().replace("+00:00", "Z"),
        "latitude_deg": loc.latitude_deg,
        "longitude_deg": loc.longitude_deg,
        "altitude_deg": pos.altitude_deg,
        "azimuth_deg": pos.azimuth_deg,
        "declination_deg": pos.declination_deg,
        "hour_angle_deg": pos.hour_angle_deg,
        "solar_noon": noon.isoformat().replace("+00:00", "Z"),
        "altitude_ratio": solar_altitude_ratio(loc, instant),
        "potential_irradiance_wm2": potential_irradiance(pos),
    }
