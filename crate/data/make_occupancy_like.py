"""Generates occupancy_like.csv: a seeded stand-in with the column layout of the
UCI office occupancy detection data (date, Temperature, Humidity, Light, CO2,
HumidityRatio, Occupancy) and 20560 one-minute samples.

The values are simulated, not measured. Rerun with `python3 make_occupancy_like.py`.
"""

import datetime as dt

import numpy as np

ROWS = 20560
rng = np.random.default_rng(20150204)
start = dt.datetime(2015, 2, 2, 14, 19)

temp = 20.5
hum = 26.0
co2 = 450.0

with open("occupancy_like.csv", "w", newline="") as f:
    f.write('"date","Temperature","Humidity","Light","CO2","HumidityRatio","Occupancy"\n')
    for i in range(ROWS):
        t = start + dt.timedelta(minutes=i)
        workday = t.weekday() < 5
        hour = t.hour + t.minute / 60.0
        occupied = workday and 8.5 <= hour < 18.0 and rng.random() > 0.08
        # slow drift towards an occupancy-dependent set point
        temp += 0.02 * ((22.5 if occupied else 20.2) - temp) + rng.normal(0, 0.03)
        hum += 0.01 * ((27.0 if occupied else 25.0) - hum) + rng.normal(0, 0.08)
        co2 += 0.03 * ((1100.0 if occupied else 440.0) - co2) + rng.normal(0, 6.0)
        if occupied:
            light = rng.normal(470, 35)
        elif 7.0 <= hour < 17.0 and workday:
            light = max(0.0, rng.normal(60, 30))
        else:
            light = 0.0
        # rare sensor spikes
        if rng.random() < 0.0008:
            light = rng.uniform(1200, 1697)
        if rng.random() < 0.0005:
            co2 = rng.uniform(1800, 2076)
        temp_c = float(np.clip(temp, 19.0, 24.408333))
        hum_c = float(np.clip(hum, 16.745, 39.5))
        co2 = float(np.clip(co2, 412.75, 2076.5))
        light = float(np.clip(light, 0.0, 1697.25))
        # saturation vapour pressure (Magnus), humidity ratio in kg/kg
        es = 6.112 * np.exp(17.62 * temp_c / (243.12 + temp_c))
        e = hum_c / 100.0 * es
        ratio = 0.622 * e / (1013.25 - e)
        f.write(
            f'"{t:%Y-%m-%d %H:%M:%S}",{temp_c:.4f},{hum_c:.4f},{light:.2f},'
            f"{co2:.2f},{ratio:.8f},{1 if occupied else 0}\n"
        )
