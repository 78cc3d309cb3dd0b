#!/usr/bin/env python3
"""Regenerates the bundled fixtures under data/.

Everything is seeded, so rerunning produces identical files.
"""

import csv
import math
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
RNG = np.random.default_rng(20180523)

LEVELS = ["smooth", "slow", "congested", "severe"]

# Per-status (mean, std) in km/h chosen so the fitted boundaries land on
# the published speed ranges.
CALIBRATION = {
    "e60": {"smooth": (57, 3.5), "slow": (44, 4.5), "congested": (33, 9.5), "severe": (12, 5.5)},
    "inner_ring": {"smooth": (62, 10.0), "slow": (44, 5.5), "congested": (18, 4.5), "severe": (7, 2.0)},
}
TABLES = {
    "e60": [("smooth", 51, 90, 57), ("slow", 38, 51, 44), ("congested", 21, 38, 33), ("severe", 0, 21, 12)],
    "inner_ring": [("smooth", 52, 80, 62), ("slow", 30, 52, 44), ("congested", 11, 30, 18), ("severe", 0, 11, 7)],
}
SAMPLES_PER_STATUS = 200

INNER_RING = dict(alpha1=1.05, alpha2=1.88, alpha3=4.90, us=80.0, capacity=1500.0)

# Typical weekday per-lane volume at each full hour, pcu/(h*ln): an evening
# and overnight trough between a morning and an evening peak.
HOURLY_PER_LANE = [560, 450, 380, 350, 380, 480, 620, 1150, 1420, 1350, 1200, 1150,
                   1100, 1150, 1200, 1280, 1380, 1440, 1380, 1250, 1100, 820, 720, 650]
LANES = 3
STEP_MIN = 15

TEMPLATE = ("http://its.map.baidu.com:8002/traffic/TrafficTileService?time={time}"
            "&label=web2D&v=016&level={z}&x={x}&y={y}")
ZOOM = 17
TILE = 256
# Tile fixture colors and the tiles they are drawn on.
TILE_COLORS = [
    ("smooth", (0, 255, 0), (109_784, 53_585)),
    ("slow", (250, 160, 0), (109_785, 53_585)),
    ("congested", (210, 60, 60), (109_786, 53_585)),
    ("severe", (150, 40, 40), (109_787, 53_585)),
]
STROKE_ROWS = range(126, 129)
SAMPLE_PX = (128, 130)
BACKGROUND = (242, 239, 233)

WEEK_START_UTC = 1_526_832_000  # 2018-05-21 00:00 at UTC+8


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def standardized(n, cut=1.8):
    """n draws of a standard normal truncated at +-cut, rescaled to exact
    zero mean and unit sample std."""
    out = []
    while len(out) < n:
        z = RNG.standard_normal()
        if abs(z) <= cut:
            out.append(z)
    z = np.array(out)
    return (z - z.mean()) / z.std(ddof=1)


def calibration_samples():
    for name, fits in CALIBRATION.items():
        rows = []
        for status in LEVELS:
            mean, std = fits[status]
            speeds = mean + std * standardized(SAMPLES_PER_STATUS)
            assert speeds.min() >= 0.0, (name, status)
            rows.extend((f"{v:.6f}", status) for v in speeds)
        order = RNG.permutation(len(rows))
        write_csv(DATA / "calibration" / f"{name}_samples.csv", ["speed_kmh", "status"],
                  [rows[i] for i in order])
        write_csv(DATA / "calibration" / f"table_{name}.csv", ["status", "lo_kmh", "hi_kmh", "rep_kmh"],
                  TABLES[name])


def model_params():
    rows = [
        (120, 2200, 0.93, 1.88, 4.85, 120),
        (100, 2200, 0.95, 1.88, 4.86, 100),
        (80, 2000, 1.00, 1.88, 4.90, 80),
        (60, 1800, 1.20, 1.88, 4.88, 60),
    ]
    header = ["design_speed_kmh", "capacity_pcu_h", "alpha1", "alpha2", "alpha3", "us_kmh"]
    write_csv(DATA / "model" / "expressway_presets.csv", header, rows)
    write_csv(DATA / "model" / "inner_ring.csv", header, [(80, 1500, 1.05, 1.88, 4.90, 80)])
    write_csv(DATA / "model" / "e60.csv", header, [(80, 1577, 1.0, 1.88, 4.90, 91)])


def per_lane_at(minute):
    h, frac = divmod(minute / 60.0, 1.0)
    h = int(h) % 24
    return HOURLY_PER_LANE[h] * (1 - frac) + HOURLY_PER_LANE[(h + 1) % 24] * frac


def demand_profile():
    rows = [(i, f"{LANES * per_lane_at(i * STEP_MIN):.1f}") for i in range(24 * 60 // STEP_MIN)]
    write_csv(DATA / "demand" / "case_study_profile.csv", ["step_index", "Q_pcu_per_h"], rows)


def lat_of(py, world):
    return math.degrees(math.atan(math.sinh(math.pi * (1 - 2 * py / world))))


def lng_of(px, world):
    return px / world * 360.0 - 180.0


def tiles():
    out = DATA / "tiles"
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    points = []
    world = TILE * 2 ** ZOOM
    for status, color, (tx, ty) in TILE_COLORS:
        img = Image.new("RGBA", (TILE, TILE), BACKGROUND + (255,))
        for y in STROKE_ROWS:
            for x in range(TILE):
                img.putpixel((x, y), color + (255,))
        name = f"{tx}_{ty}_{ZOOM}.png"
        img.save(out / name, optimize=False)
        request = TEMPLATE.replace("{z}", str(ZOOM)).replace("{x}", str(tx)).replace("{y}", str(ty))
        manifest.append((request, name))
        px, py = tx * TILE + SAMPLE_PX[0], ty * TILE + SAMPLE_PX[1]
        points.append((f"{status}#0", f"{lat_of(py, world):.10f}", f"{lng_of(px, world):.10f}", status, "0"))
    write_csv(out / "manifest.csv", ["request", "file"], manifest)
    write_csv(DATA / "tiles_points.csv", ["point_id", "lat", "lng", "road_id", "chainage_m"], points)


def practical_speed(x, p):
    beta = p["alpha2"] + p["alpha3"] * x ** 3
    return p["alpha1"] * p["us"] / (1 + x ** beta)


def status_for(speed, table):
    for status, lo, _hi, _rep in table:
        if speed >= lo:
            return status
    return "severe"


STATUS_RGB = {s: c for s, c, _ in TILE_COLORS}


def synthetic_week():
    table = TABLES["inner_ring"]
    rows = {}
    for day in range(7):
        factor = 1.0 + 0.04 * RNG.standard_normal()
        if day >= 5:
            factor *= 0.85
        for minute in range(24 * 60):
            ts = WEEK_START_UTC + day * 86_400 + minute * 60
            # A half-hour outage on Wednesday morning.
            if day == 2 and 9 * 60 <= minute < 9 * 60 + 30:
                continue
            volume = per_lane_at(minute) * factor * (1.0 + 0.03 * RNG.standard_normal())
            speed = practical_speed(volume / INNER_RING["capacity"], INNER_RING)
            if RNG.random() < 0.01:
                row = ("seg#0", ts, "unknown", "", "", "", "HTTP status 503")
            else:
                status = status_for(speed, table)
                r, g, b = STATUS_RGB[status]
                row = ("seg#0", ts, status, r, g, b, "")
            date = np.datetime64(ts, "s").astype("datetime64[D]")
            rows.setdefault(str(date), []).append(row)
    store = DATA / "store"
    for date, day_rows in rows.items():
        write_csv(store / f"inner-ring-{date}.csv",
                  ["point_id", "timestamp_utc", "status", "r", "g", "b", "note"], day_rows)


def roads():
    # An L-shaped approach (about 70 m east, then 85 m north) and a short
    # straight segment.
    lat0, lng0 = 31.2304, 121.4737
    m_per_deg_lat = 111_195.0
    m_per_deg_lng = m_per_deg_lat * math.cos(math.radians(lat0))
    corner = (lat0, lng0 + 70 / m_per_deg_lng)
    end = (corner[0] + 85 / m_per_deg_lat, corner[1])
    rows = [("L1", f"{lat0:.8f}", f"{lng0:.8f}"),
            ("L1", f"{corner[0]:.8f}", f"{corner[1]:.8f}"),
            ("L1", f"{end[0]:.8f}", f"{end[1]:.8f}"),
            ("S1", "31.24000000", "121.48000000"),
            ("S1", "31.24220000", "121.48000000")]
    write_csv(DATA / "roads.csv", ["road_id", "lat", "lng"], rows)


def main():
    calibration_samples()
    model_params()
    demand_profile()
    tiles()
    synthetic_week()
    roads()


if __name__ == "__main__":
    main()
