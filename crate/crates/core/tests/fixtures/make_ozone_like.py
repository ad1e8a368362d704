"""Writes ozone_like.csv: 330 synthetic days shaped like the Los Angeles
ozone data (same column names and rough ranges, positive temperatures so
sbtp and ibtp can be logged). Not real measurements.

    python3 make_ozone_like.py > ozone_like.csv
"""
import math
import random

rng = random.Random(20061016)
print("ozone,vdht,wdsp,hmdt,sbtp,ibtp,dgpg,vsty")
for day in range(330):
    season = math.sin(math.pi * (day + 0.5) / 330.0)
    warm = season + 0.35 * rng.gauss(0, 1)
    vdht = round(5750 + 120 * warm + 40 * rng.gauss(0, 1))
    wdsp = max(0, round(4.9 + 1.5 * rng.gauss(0, 1) - 0.8 * season))
    hmdt = min(95, max(15, round(58 + 18 * rng.gauss(0, 1) + 8 * season)))
    sbtp = max(20, round(60 + 14 * warm + 6 * rng.gauss(0, 1)))
    ibtp = max(25, round(160 + 70 * warm + 45 * rng.gauss(0, 1)))
    dgpg = round(17 + 35 * rng.gauss(0, 1) + 10 * season)
    vsty = min(350, max(0, round(160 + 80 * rng.gauss(0, 1) - 60 * warm)))
    a = (math.log(sbtp) - 4.05) / 0.25 + 0.6 * (vdht - 5750) / 130
    b = (hmdt - 58) / 20 - (dgpg - 17) / 40
    mean = 14 + 4.0 * a + 1.0 * (a + b) ** 2
    ozone = max(1, round(mean + 2.5 * rng.gauss(0, 1)))
    print(f"{ozone},{vdht},{wdsp},{hmdt},{sbtp},{ibtp},{dgpg},{vsty}")
