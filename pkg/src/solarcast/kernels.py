"""Hot numeric kernels, each in two flavours.

``*_loop`` functions are explicit loops compiled by numba; ``*_np`` functions
are vectorised numpy. The public names at the bottom of the module point at
one or the other depending on :data:`solarcast._accel.USE_NUMBA`. Both
flavours are always importable so tests and the benchmark can compare them.

All arrays are float64 and C-contiguous.
"""

import math

import numpy as np

from solarcast._accel import USE_NUMBA, njit

EARTH_RADIUS_M = 6371008.8
SECONDS_PER_DAY = 86400.0


# ---------------------------------------------------------------------------
# Dense layers
# ---------------------------------------------------------------------------


@njit
def dense_forward_loop(W, b, X):
    n, k = X.shape
    m = W.shape[0]
    Z = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = b[j]
            for p in range(k):
                acc += W[j, p] * X[i, p]
            Z[i, j] = acc
    return Z


def dense_forward_np(W, b, X):
    return X @ W.T + b


@njit
def dense_backward_loop(W, A_prev, dZ):
    n, m = dZ.shape
    k = A_prev.shape[1]
    dW = np.zeros((m, k))
    db = np.zeros(m)
    dA = np.zeros((n, k))
    for i in range(n):
        for j in range(m):
            g = dZ[i, j]
            if g == 0.0:
                continue
            db[j] += g
            for p in range(k):
                dW[j, p] += g * A_prev[i, p]
                dA[i, p] += g * W[j, p]
    return dW, db, dA


def dense_backward_np(W, A_prev, dZ):
    return dZ.T @ A_prev, dZ.sum(axis=0), dZ @ W


# ---------------------------------------------------------------------------
# Loss and optimiser updates
# ---------------------------------------------------------------------------


@njit
def mae_loop(pred, target):
    n = pred.shape[0]
    grad = np.empty(n)
    total = 0.0
    for i in range(n):
        r = pred[i] - target[i]
        total += abs(r)
        if r > 0.0:
            grad[i] = 1.0 / n
        elif r < 0.0:
            grad[i] = -1.0 / n
        else:
            grad[i] = 0.0
    return total / n, grad


def mae_np(pred, target):
    r = pred - target
    n = r.shape[0]
    return float(np.abs(r).sum() / n), np.sign(r) / n


@njit
def adam_update_loop(theta, g, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    flat_t = theta.reshape(-1)
    flat_g = g.reshape(-1)
    flat_m = m.reshape(-1)
    flat_v = v.reshape(-1)
    for i in range(flat_t.shape[0]):
        gi = flat_g[i]
        flat_m[i] = beta1 * flat_m[i] + (1.0 - beta1) * gi
        flat_v[i] = beta2 * flat_v[i] + (1.0 - beta2) * gi * gi
        m_hat = flat_m[i] / c1
        v_hat = flat_v[i] / c2
        flat_t[i] -= lr * m_hat / (math.sqrt(v_hat) + eps)


def adam_update_np(theta, g, m, v, lr, beta1, beta2, eps, t):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Solar position (NOAA fractional-year series)
# ---------------------------------------------------------------------------


@njit
def _civil_year_doy(days):
    # days since 1970-01-01 -> (year, 1-based day of year, days in year)
    z = days + 719468
    era = (z if z >= 0 else z - 146096) // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy_mar = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy_mar + 2) // 153
    month = mp + 3 if mp < 10 else mp - 9
    if month <= 2:
        y += 1
    leap = (y % 4 == 0 and y % 100 != 0) or (y % 400 == 0)
    # day of year from Jan 1 of y
    jan1 = _days_from_civil(y)
    return y, days - jan1 + 1, 366 if leap else 365


@njit
def _days_from_civil(y):
    # days since 1970-01-01 of January 1st of year y
    yy = y - 1
    era = (yy if yy >= 0 else yy - 399) // 400
    yoe = yy - era * 400
    doy = 306  # Jan 1 counted from the March-based year
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


@njit
def sun_angles_loop(lat_deg, lon_deg, unix_s):
    """Altitude, azimuth, declination and hour angle (degrees) per instant."""
    n = unix_s.shape[0]
    out = np.empty((n, 4))
    phi = math.radians(lat_deg)
    for i in range(n):
        t = unix_s[i]
        days = int(math.floor(t / SECONDS_PER_DAY))
        sec_of_day = t - days * SECONDS_PER_DAY
        _, doy, ndays = _civil_year_doy(days)
        hour = sec_of_day / 3600.0
        gamma = 2.0 * math.pi / ndays * (doy - 1 + (hour - 12.0) / 24.0)
        eqtime = 229.18 * (
            0.000075
            + 0.001868 * math.cos(gamma)
            - 0.032077 * math.sin(gamma)
            - 0.014615 * math.cos(2.0 * gamma)
            - 0.040849 * math.sin(2.0 * gamma)
        )
        decl = (
            0.006918
            - 0.399912 * math.cos(gamma)
            + 0.070257 * math.sin(gamma)
            - 0.006758 * math.cos(2.0 * gamma)
            + 0.000907 * math.sin(2.0 * gamma)
            - 0.002697 * math.cos(3.0 * gamma)
            + 0.00148 * math.sin(3.0 * gamma)
        )
        tst = sec_of_day / 60.0 + eqtime + 4.0 * lon_deg
        ha_deg = tst / 4.0 - 180.0
        ha_deg = ha_deg - 360.0 * math.floor((ha_deg + 180.0) / 360.0)
        ha = math.radians(ha_deg)
        cos_zen = math.sin(phi) * math.sin(decl) + math.cos(phi) * math.cos(decl) * math.cos(ha)
        cos_zen = min(1.0, max(-1.0, cos_zen))
        alt = 90.0 - math.degrees(math.acos(cos_zen))
        az = math.degrees(
            math.atan2(math.sin(ha), math.cos(ha) * math.sin(phi) - math.tan(decl) * math.cos(phi))
        ) + 180.0
        if az >= 360.0:
            az -= 360.0
        out[i, 0] = alt
        out[i, 1] = az
        out[i, 2] = math.degrees(decl)
        out[i, 3] = ha_deg
    return out


def _year_doy_np(unix_s):
    days = np.floor(unix_s / SECONDS_PER_DAY).astype(np.int64).astype("datetime64[D]")
    years = days.astype("datetime64[Y]")
    doy = (days - years.astype("datetime64[D]")).astype(np.int64) + 1
    ndays = ((years + 1).astype("datetime64[D]") - years.astype("datetime64[D]")).astype(np.int64)
    sec_of_day = unix_s - np.floor(unix_s / SECONDS_PER_DAY) * SECONDS_PER_DAY
    return doy, ndays, sec_of_day


def sun_angles_np(lat_deg, lon_deg, unix_s):
    doy, ndays, sec_of_day = _year_doy_np(unix_s)
    phi = np.radians(lat_deg)
    gamma = 2.0 * np.pi / ndays * (doy - 1 + (sec_of_day / 3600.0 - 12.0) / 24.0)
    eqtime = 229.18 * (
        0.000075
        + 0.001868 * np.cos(gamma)
        - 0.032077 * np.sin(gamma)
        - 0.014615 * np.cos(2.0 * gamma)
        - 0.040849 * np.sin(2.0 * gamma)
    )
    decl = (
        0.006918
        - 0.399912 * np.cos(gamma)
        + 0.070257 * np.sin(gamma)
        - 0.006758 * np.cos(2.0 * gamma)
        + 0.000907 * np.sin(2.0 * gamma)
        - 0.002697 * np.cos(3.0 * gamma)
        + 0.00148 * np.sin(3.0 * gamma)
    )
    tst = sec_of_day / 60.0 + eqtime + 4.0 * lon_deg
    ha_deg = tst / 4.0 - 180.0
    ha_deg = ha_deg - 360.0 * np.floor((ha_deg + 180.0) / 360.0)
    ha = np.radians(ha_deg)
    cos_zen = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(ha)
    alt = 90.0 - np.degrees(np.arccos(np.clip(cos_zen, -1.0, 1.0)))
    az = np.degrees(np.arctan2(np.sin(ha), np.cos(ha) * np.sin(phi) - np.tan(decl) * np.cos(phi))) + 180.0
    az = np.where(az >= 360.0, az - 360.0, az)
    return np.column_stack((alt, az, np.degrees(decl), ha_deg))


# ---------------------------------------------------------------------------
# Great-circle distance
# ---------------------------------------------------------------------------


@njit
def haversine_loop(lat_deg, lon_deg, lats_deg, lons_deg):
    n = lats_deg.shape[0]
    out = np.empty(n)
    p1 = math.radians(lat_deg)
    for i in range(n):
        p2 = math.radians(lats_deg[i])
        dp = p2 - p1
        dl = math.radians(lons_deg[i] - lon_deg)
        a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
        out[i] = 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))
    return out


def haversine_np(lat_deg, lon_deg, lats_deg, lons_deg):
    p1 = np.radians(lat_deg)
    p2 = np.radians(lats_deg)
    dl = np.radians(lons_deg - lon_deg)
    a = np.sin((p2 - p1) / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


# Dense layers and haversine stay on numpy in both modes: at the widths used
# here BLAS matmul and vectorised trig beat the compiled loops (see
# benchmarks/bench_kernels.py). The loop versions remain for equivalence tests.
dense_forward = dense_forward_np
dense_backward = dense_backward_np
haversine = haversine_np
if USE_NUMBA:
    mae = mae_loop
    adam_update = adam_update_loop
    sun_angles = sun_angles_loop
else:
    mae = mae_np
    adam_update = adam_update_np
    sun_angles = sun_angles_np
