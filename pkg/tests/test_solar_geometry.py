import math
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import meeus_declination_eot, oracle_altitude, oracle_noon
from solarcast.errors import ValidationError
from solarcast.solar_geometry import (
    GeoLocation,
    SunPosition,
    clear_sky_index,
    describe,
    local_solar_date,
    potential_irradiance,
    solar_altitude_ratio,
    solar_noon,
    sun_position,
    sun_positions,
    unix_seconds,
)

UTC = timezone.utc


def scan_argmax(loc, day):
    """Brute force: altitude every minute across the local solar day."""
    start = datetime(day.year, day.month, day.day, tzinfo=UTC) - timedelta(minutes=4 * loc.longitude_deg)
    t = unix_seconds(start) + 60.0 * np.arange(24 * 60 + 1)
    alt = sun_positions(loc, t)[:, 0]
    return t[int(np.argmax(alt))]


class TestGeoLocation:
    @pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 180.1), (0, -181)])
    def test_rejects_out_of_range(self, lat, lon):
        with pytest.raises(ValidationError):
            GeoLocation(lat, lon)

    def test_accepts_bounds(self):
        GeoLocation(90, 180)
        GeoLocation(-90, -180)


class TestSunPosition:
    def test_equinox_noon_on_equator_is_overhead(self):
        loc = GeoLocation(0, 0)
        pos = sun_position(loc, solar_noon(loc, date(2024, 3, 20)))
        assert pos.altitude_deg == pytest.approx(90, abs=1)

    def test_june_solstice_noon_at_station(self, station):
        # 90 - 42.56 + 23.44 = 70.88
        pos = sun_position(station, solar_noon(station, date(2024, 6, 20)))
        assert pos.altitude_deg == pytest.approx(70.88, abs=1)

    def test_equinox_midnight_on_equator_is_nadir(self):
        loc = GeoLocation(0, 0)
        pos = sun_position(loc, solar_noon(loc, date(2024, 3, 20)) + timedelta(hours=12))
        assert pos.altitude_deg == pytest.approx(-90, abs=1)

    @pytest.mark.parametrize("year", [1949, 2101])
    def test_rejects_instants_outside_window(self, station, year):
        with pytest.raises(ValidationError):
            sun_position(station, datetime(year, 6, 1, tzinfo=UTC))

    def test_naive_and_aware_instants_agree(self, station):
        naive = datetime(2024, 5, 1, 15, 0)
        aware = datetime(2024, 5, 1, 11, 0, tzinfo=timezone(timedelta(hours=-4)))
        assert sun_position(station, naive) == sun_position(station, aware)

    def test_pure(self, station):
        t = datetime(2024, 7, 4, 16, 20, 5, 123456, tzinfo=UTC)
        a, b = sun_position(station, t), sun_position(station, t)
        assert a == b and isinstance(a, SunPosition)

    @settings(max_examples=200, deadline=None)
    @given(lat=st.floats(-90, 90), lon=st.floats(-180, 180), t=st.floats(-6.3e8, 4.1e9))
    def test_ranges(self, lat, lon, t):
        row = sun_positions(GeoLocation(lat, lon), np.array([t]))[0]
        assert -90 <= row[0] <= 90
        assert 0 <= row[1] < 360
        assert abs(row[2]) <= 23.45 + 0.1

    @pytest.mark.parametrize("lat,lon", [(42.56, -83.64), (-33.9, 151.2), (5.0, 30.0), (60.0, -150.0)])
    def test_altitude_tracks_independent_ephemeris(self, lat, lon):
        for hour in range(0, 24, 3):
            t = datetime(2024, 8, 14, hour, 17, tzinfo=UTC)
            assert sun_position(GeoLocation(lat, lon), t).altitude_deg == pytest.approx(
                oracle_altitude(lat, lon, t), abs=1.0
            )

    def test_azimuth_cardinal_directions(self, station):
        noon = solar_noon(station, date(2024, 6, 20))
        assert sun_position(station, noon).azimuth_deg == pytest.approx(180, abs=1)
        morning = sun_position(station, noon - timedelta(hours=4)).azimuth_deg
        evening = sun_position(station, noon + timedelta(hours=4)).azimuth_deg
        assert 45 < morning < 135 and 225 < evening < 315


class TestSolarNoon:
    def test_greenwich_equinox_near_midday(self):
        noon = solar_noon(GeoLocation(0, 0), date(2024, 3, 20))
        assert abs((noon - datetime(2024, 3, 20, 12, tzinfo=UTC)).total_seconds()) < 20 * 60

    @pytest.mark.parametrize("day", [date(2024, 2, 11), date(2024, 5, 14), date(2024, 7, 26), date(2024, 11, 3)])
    def test_ninety_west_near_1800_utc(self, day):
        noon = solar_noon(GeoLocation(10, -90), day)
        assert abs((noon - datetime(day.year, day.month, day.day, 18, tzinfo=UTC)).total_seconds()) < 20 * 60

    @pytest.mark.parametrize(
        "lat,lon,day",
        [(42.56, -83.64, date(2024, 2, 10)), (-60, 170, date(2024, 12, 1)), (65, -179, date(2024, 7, 1)),
         (0, 0, date(2024, 11, 3)), (-23.4, 45, date(1975, 6, 30))],
    )
    def test_matches_brute_force_scan(self, lat, lon, day):
        loc = GeoLocation(lat, lon)
        assert abs(scan_argmax(loc, day) - unix_seconds(solar_noon(loc, day))) <= 120

    def test_agrees_with_meeus_equation_of_time(self):
        for day in (date(2024, 2, 11), date(2024, 11, 3), date(2024, 4, 15)):
            minutes = oracle_noon(-83.64, day)
            expected = datetime(day.year, day.month, day.day, tzinfo=UTC) + timedelta(minutes=minutes)
            assert abs((solar_noon(GeoLocation(42.56, -83.64), day) - expected).total_seconds()) < 60


class TestAltitudeRatio:
    def test_one_at_noon(self, station):
        noon = solar_noon(station, date(2024, 4, 2))
        assert solar_altitude_ratio(station, noon) == 1.0

    def test_zero_below_horizon(self, station):
        noon = solar_noon(station, date(2024, 4, 2))
        assert solar_altitude_ratio(station, noon + timedelta(hours=11)) == 0.0

    def test_zero_in_polar_night(self):
        loc = GeoLocation(80, 0)
        assert solar_altitude_ratio(loc, datetime(2024, 12, 21, 12, tzinfo=UTC)) == 0.0

    def test_equinox_afternoon_quotient(self, station):
        noon = solar_noon(station, date(2024, 3, 20))
        t = noon + timedelta(hours=3)
        expected = sun_position(station, t).altitude_deg / sun_position(station, noon).altitude_deg
        assert solar_altitude_ratio(station, t) == pytest.approx(expected, abs=1e-6)
        # the independent ephemeris gives the same quotient to well under a percent
        assert expected == pytest.approx(oracle_altitude(42.56, -83.64, t) / oracle_altitude(42.56, -83.64, noon),
                                         abs=0.02)

    @settings(max_examples=150, deadline=None)
    @given(lat=st.floats(-89, 89), lon=st.floats(-180, 180), t=st.floats(-6.3e8, 4.1e9))
    def test_bounded(self, lat, lon, t):
        loc = GeoLocation(lat, lon)
        when = datetime.fromtimestamp(t, tz=UTC)
        r = solar_altitude_ratio(loc, when)
        assert 0.0 <= r <= 1.0
        if sun_position(loc, when).altitude_deg <= 0:
            assert r == 0.0

    def test_local_solar_date_uses_longitude(self):
        t = datetime(2024, 3, 2, 2, 0, tzinfo=UTC)
        assert local_solar_date(GeoLocation(0, -90), t) == date(2024, 3, 1)
        assert local_solar_date(GeoLocation(0, 90), t) == date(2024, 3, 2)


class TestPotentialIrradiance:
    def test_night(self):
        assert potential_irradiance(0.0) == 0.0
        assert potential_irradiance(-30.0) == 0.0

    def test_zenith_value(self):
        assert potential_irradiance(90.0) == pytest.approx(1098 * math.exp(-0.057), rel=1e-12)
        assert potential_irradiance(90.0) == pytest.approx(1037.2, abs=0.05)

    def test_accepts_sun_position_and_arrays(self):
        pos = SunPosition(30.0, 180.0, 0.0, 0.0)
        assert potential_irradiance(pos) == potential_irradiance(30.0)
        arr = potential_irradiance(np.array([-1.0, 10.0, 60.0]))
        assert arr.shape == (3,) and arr[0] == 0.0

    @settings(max_examples=200)
    @given(a=st.floats(1e-3, 90), b=st.floats(1e-3, 90))
    def test_monotone(self, a, b):
        if a < b:
            assert potential_irradiance(a) < potential_irradiance(b)
        assert potential_irradiance(a) >= 0


class TestClearSkyIndex:
    def test_quotient(self):
        assert clear_sky_index(500, 1000) == 0.5

    def test_night(self):
        assert clear_sky_index(10, 0) == 0.0

    def test_enhancement_kept_under_cap(self):
        assert clear_sky_index(1200, 1000) == pytest.approx(1.2)
        assert clear_sky_index(5000, 1000) == 1.5

    @pytest.mark.parametrize("m,p", [(-1, 10), (1, -10)])
    def test_rejects_negative(self, m, p):
        with pytest.raises(ValidationError):
            clear_sky_index(m, p)


def test_describe_has_every_field(station):
    d = describe(station, "2024-06-20T17:35:00Z")
    for key in ("altitude_deg", "azimuth_deg", "solar_noon", "altitude_ratio", "potential_irradiance_wm2"):
        assert key in d


def test_meeus_oracle_sanity():
    decl, eot = meeus_declination_eot(datetime(2024, 6, 20, 20, 51, tzinfo=UTC))
    assert decl == pytest.approx(23.44, abs=0.01)
    assert abs(eot) < 17
