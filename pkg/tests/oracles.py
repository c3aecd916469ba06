"""Independent reference computations used as test oracles.

Kept deliberately separate from the package: the solar oracle is Meeus'
Julian-century series (as in NOAA's spreadsheet), not the fractional-year
series the package implements.
"""

import math
from datetime import datetime, timezone


def julian_day(dt):
    dt = dt.astimezone(timezone.utc)
    y, m = dt.year, dt.month
    d = dt.day + (dt.hour + dt.minute / 60 + (dt.second + dt.microsecond / 1e6) / 3600) / 24
    if m <= 2:
        y -= 1
        m += 12
    a = y // 100
    b = 2 - a + a // 4
    return int(365.25 * (y + 4716)) + int(30.6001 * (m + 1)) + d + b - 1524.5


def meeus_declination_eot(dt):
    """(declination in degrees, equation of time in minutes) at ``dt``."""
    jc = (julian_day(dt) - 2451545.0) / 36525.0
    l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360
    m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    c = (
        math.sin(math.radians(m)) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + math.sin(math.radians(2 * m)) * (0.019993 - 0.000101 * jc)
        + math.sin(math.radians(3 * m)) * 0.000289
    )
    true_long = l0 + c
    omega = 125.04 - 1934.136 * jc
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))
    eps0 = 23 + (26 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60) / 60
    eps = eps0 + 0.00256 * math.cos(math.radians(omega))
    decl = math.degrees(math.asin(math.sin(math.radians(eps)) * math.sin(math.radians(app_long))))
    y = math.tan(math.radians(eps / 2)) ** 2
    l0r, mr = math.radians(l0), math.radians(m)
    eot = 4 * math.degrees(
        y * math.sin(2 * l0r)
        - 2 * e * math.sin(mr)
        + 4 * e * y * math.sin(mr) * math.cos(2 * l0r)
        - 0.5 * y * y * math.sin(4 * l0r)
        - 1.25 * e * e * math.sin(2 * mr)
    )
    return decl, eot


def oracle_noon(lon_deg, day):
    """UTC solar noon from the Meeus equation of time (minutes after midnight)."""
    guess = datetime(day.year, day.month, day.day, 12, tzinfo=timezone.utc)
    _, eot = meeus_declination_eot(guess)
    return 720.0 - 4.0 * lon_deg - eot


def oracle_altitude(lat_deg, lon_deg, dt):
    decl, eot = meeus_declination_eot(dt)
    dt = dt.astimezone(timezone.utc)
    minutes = dt.hour * 60 + dt.minute + (dt.second + dt.microsecond / 1e6) / 60
    ha = math.radians((minutes + eot + 4 * lon_deg) / 4 - 180)
    phi, d = math.radians(lat_deg), math.radians(decl)
    cz = math.sin(phi) * math.sin(d) + math.cos(phi) * math.cos(d) * math.cos(ha)
    return 90 - math.degrees(math.acos(max(-1.0, min(1.0, cz))))


def haversine_oracle(lat1, lon1, lat2, lon2, radius_m=6371008.8):
    """Great-circle distance via the spherical law of cosines in long-double-free form."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    # Vincenty special case for the sphere: well conditioned at all separations
    num = math.hypot(math.cos(p2) * math.sin(dl), math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius_m * math.atan2(num, den)
