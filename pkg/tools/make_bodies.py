"""Regenerate the bundled solar-system initial data (2000-01-01 0h TT).

Needs pyerfa, which is not a runtime dependency of the package.  Planets
come from the analytic planetary theory in ``erfa.plan94`` (Earth from
``erfa.epv00``), the Moon from ``erfa.moon98`` and Pluto from its mean J2000
Keplerian elements.  Output units: solar masses, AU, AU/yr, barycentric
frame with equatorial (ICRS-aligned) axes.

Usage: python tools/make_bodies.py [OUTPUT_CSV]
"""

import csv
import math
import sys
from pathlib import Path

import erfa
import numpy as np

JD = 2451544.5
DAYS_PER_YEAR = 365.25
OBLIQUITY = math.radians(23.43928)
GAUSS_K = 0.01720209895  # sqrt(G M_sun) in AU^1.5 / day

MASSES = {
    "Sun": 1.0,
    "Mercury": 1.6601e-7,
    "Venus": 2.4478e-6,
    "Earth": 3.0035e-6,
    "Moon": 3.6943e-8,
    "Mars": 3.2272e-7,
    "Jupiter": 9.5479e-4,
    "Saturn": 2.8589e-4,
    "Uranus": 4.3662e-5,
    "Neptune": 5.1514e-5,
    "Pluto": 6.55e-9,
}

PLAN94_INDEX = {"Mercury": 1, "Venus": 2, "Mars": 4, "Jupiter": 5, "Saturn": 6, "Uranus": 7, "Neptune": 8}

# mean elements at J2000: a [AU], e, I, L, longitude of perihelion, longitude of node [deg]
PLUTO = (39.48211675, 0.24882730, 17.14001206, 238.92903833, 224.06891629, 110.30393684)


def kepler_state(a, e, inc, L, varpi, node, mu=GAUSS_K ** 2):
    """Heliocentric ecliptic position (AU) and velocity (AU/day) from mean elements."""
    inc, L, varpi, node = map(math.radians, (inc, L, varpi, node))
    omega = varpi - node
    M = (L - varpi) % (2 * math.pi)
    E = M
    for _ in range(50):
        E -= (E - e * math.sin(E) - M) / (1 - e * math.cos(E))
    x = a * (math.cos(E) - e)
    y = a * math.sqrt(1 - e * e) * math.sin(E)
    n = math.sqrt(mu / a ** 3)
    dE = n / (1 - e * math.cos(E))
    vx = -a * math.sin(E) * dE
    vy = a * math.sqrt(1 - e * e) * math.cos(E) * dE

    def rot(v):
        # perifocal -> ecliptic
        co, so = math.cos(omega), math.sin(omega)
        cn, sn = math.cos(node), math.sin(node)
        ci, si = math.cos(inc), math.sin(inc)
        px, py = co * v[0] - so * v[1], so * v[0] + co * v[1]
        return np.array([cn * px - sn * ci * py, sn * px + cn * ci * py, si * py])

    return rot((x, y)), rot((vx, vy))


def ecliptic_to_equatorial(v):
    c, s = math.cos(OBLIQUITY), math.sin(OBLIQUITY)
    return np.array([v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]])


def heliocentric_states():
    states = {"Sun": (np.zeros(3), np.zeros(3))}
    for name, idx in PLAN94_INDEX.items():
        pv = erfa.plan94(JD, 0.0, idx)
        states[name] = (pv[0], pv[1])
    pvh, _ = erfa.epv00(JD, 0.0)
    states["Earth"] = (pvh[0], pvh[1])
    moon = erfa.moon98(JD, 0.0)
    states["Moon"] = (pvh[0] + moon[0], pvh[1] + moon[1])
    r, v = kepler_state(*PLUTO)
    states["Pluto"] = (ecliptic_to_equatorial(r), ecliptic_to_equatorial(v))
    return states


def main(out):
    states = heliocentric_states()
    names = list(MASSES)
    m = np.array([MASSES[n] for n in names])
    r = np.array([states[n][0] for n in names])
    v = np.array([states[n][1] for n in names]) * DAYS_PER_YEAR
    r -= (m[:, None] * r).sum(axis=0) / m.sum()
    v -= (m[:, None] * v).sum(axis=0) / m.sum()
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "mass", "x", "y", "z", "vx", "vy", "vz"])
        for n, mi, ri, vi in zip(names, m, r, v):
            w.writerow([n, f"{mi:.5g}"] + [f"{x:.10g}" for x in ri] + [f"{x:.10g}" for x in vi])


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "multiadaptive" / "data" / "solar_system.csv"
    main(sys.argv[1] if len(sys.argv) > 1 else default)
