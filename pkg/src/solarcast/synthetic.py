"""Synthetic station data with a known clear-sky structure.

Targets follow ``potential_irradiance(altitude) * attenuation(humidity, rain)``
plus Gaussian noise. Temperature tracks the seasonal noon altitude so the
season (and with it the absolute altitude) is recoverable from the features.
"""

from datetime import datetime, timedelta, timezone

import numpy as np

from solarcast.dataset import SampleSet
from solarcast.ingest_service import TIMESTAMP_FORMAT, StationReport
from solarcast.solar_geometry import (
    GeoLocation,
    local_solar_date,
    potential_irradiance,
    solar_noon,
    sun_position,
    sun_positions,
    unix_seconds,
)

# a station near the forecast grid point used by the original experiment
DEFAULT_STATION = GeoLocation(42.56, -83.64)
CADENCE_SECONDS = 16


def attenuation(humidity_pct, rain_in):
    h = np.asarray(humidity_pct, dtype=np.float64) / 100.0
    return (1.0 - 0.6 * h**2) * np.exp(-4.0 * np.asarray(rain_in, dtype=np.float64))


def clear_sky_samples(n, station=DEFAULT_STATION, seed=0, year=2024, noise_wm2=5.0, min_altitude_deg=5.0):
    """``n`` daytime samples at random instants through ``year``."""
    rng = np.random.default_rng(seed)
    start = unix_seconds(datetime(year, 1, 1, tzinfo=timezone.utc))
    end = unix_seconds(datetime(year + 1, 1, 1, tzinfo=timezone.utc))
    feats, targets, stamps = [], [], []
    while len(targets) < n:
        t = float(rng.uniform(start, end))
        t = float(np.floor(t))
        alt = float(sun_positions(station, np.array([t]))[0, 0])
        if alt < min_altitude_deg:
            continue
        when = datetime.fromtimestamp(t, tz=timezone.utc)
        noon = solar_noon(station, local_solar_date(station, when))
        noon_alt = sun_position(station, noon).altitude_deg
        ratio = min(1.0, alt / noon_alt)
        temp = 20.0 + 1.2 * (noon_alt - 24.0) + 8.0 * ratio + rng.normal(0.0, 1.0)
        humidity = float(rng.uniform(20.0, 100.0))
        dew_gap = (100.0 - humidity) / 5.0 * 1.8
        rain = float(rng.choice([0.0, 0.0, 0.0, rng.uniform(0.0, 0.3)]))
        wind = float(rng.gamma(2.0, 3.0))
        baro = float(rng.normal(29.92, 0.2))
        target = float(potential_irradiance(alt) * attenuation(humidity, rain) + rng.normal(0.0, noise_wm2))
        feats.append([temp, humidity, temp - dew_gap, wind, rain, baro, ratio])
        targets.append(max(0.0, target))
        stamps.append(when.isoformat().replace("+00:00", "Z"))
    return SampleSet(np.array(feats), np.array(targets), np.array(stamps, dtype=object))


def station_reports(n, start=datetime(2024, 3, 1, 12, 0, 0), cadence_s=CADENCE_SECONDS, seed=0,
                    station=DEFAULT_STATION):
    """``n`` valid reports spaced ``cadence_s`` seconds apart (the station's push interval)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        when = start + timedelta(seconds=i * cadence_s)
        alt = sun_position(station, when).altitude_deg
        humidity = round(float(rng.uniform(20, 100)), 1)
        rain = round(float(rng.choice([0.0, 0.0, rng.uniform(0, 0.2)])), 2)
        temp = round(float(rng.normal(55, 8)), 1)
        ghi = float(potential_irradiance(alt) * attenuation(humidity, rain))
        out.append(StationReport(
            last_update=when.strftime(TIMESTAMP_FORMAT),
            temp_f=temp,
            humidity_pct=humidity,
            dew_point_f=round(temp - (100 - humidity) / 5 * 1.8, 1),
            wind_speed_mph=round(float(rng.gamma(2.0, 3.0)), 1),
            rain_in=rain,
            barometer_inhg=round(float(rng.normal(29.92, 0.2)), 2),
            solar_radiation_wm2=round(max(0.0, ghi + float(rng.normal(0, 5))), 1),
            uv_index=float(rng.integers(0, 10)),
        ))
    return out
