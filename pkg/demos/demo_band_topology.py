#!/usr/bin/env python3
"""Band structure and topology markers of the two-leg flux ladder.

Sweeps the flux through the flat-band point, tabulates the discrete-symmetry
deviations, and evaluates the Zak phase and flat-band Wannier centers that
mark the topological configuration.  Band data goes to bands.csv.
"""

import os

import numpy as np

from synthlat import (
    CreutzParams,
    band_structure,
    check_symmetry,
    real_space_hamiltonian,
    wannier_center,
    wannier_state,
    zak_phase,
)

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT_DIR, exist_ok=True)

ks = np.linspace(-np.pi, np.pi, 501)

print("band flatness versus flux (t_d = t_h = 1, t_v = 0):")
rows = []
for phi in (0.0, np.pi / 2, 0.9 * np.pi, np.pi):
    p = CreutzParams(1.0, 0.0, 1.0, phi)
    bands = band_structure(p, ks)
    width = bands[:, 0].max() - bands[:, 0].min()
    print(f"  phi = {phi:5.3f}: lower-band width {width:.6f}, "
          f"range [{bands[:, 0].min():+.3f}, {bands[:, 0].max():+.3f}]")
    if phi == np.pi:
        rows = bands
with open(os.path.join(OUT_DIR, "bands.csv"), "w", encoding="utf-8") as fh:
    fh.write("k_rad,e_lower,e_upper\n")
    for k, (lo, hi) in zip(ks, rows):
        fh.write(f"{k:.15g},{lo:.15g},{hi:.15g}\n")
print(f"wrote {OUT_DIR}/bands.csv (flat bands at +/-2)")

print("\ndiscrete-symmetry deviations (operator norm, max over k):")
kgrid = np.linspace(-np.pi, np.pi, 201)
header = f"  {'config':<28}{'TR':>12}{'C':>12}{'S':>12}"
print(header)
for label, p in (
    ("flux pi, strong coupling", CreutzParams(1.0, 0.0, 1.0, np.pi)),
    ("flux pi, with vertical", CreutzParams(1.0, 1.0, 1.0, np.pi)),
    ("flux 0", CreutzParams(1.0, 0.0, 1.0, 0.0)),
    ("flux 0.99 pi", CreutzParams(1.0, 0.0, 1.0, 0.99 * np.pi)),
):
    devs = [check_symmetry(p, kind, kgrid) for kind in ("TR", "C", "S")]
    print(f"  {label:<28}" + "".join(f"{d:12.2e}" for d in devs))
print("Particle-hole and chiral relations pin to flux pi; time reversal")
print("holds at any flux in this gauge.")

print("\nZak phase of the lower band (Wilson loop, 512 k points):")
for label, p in (
    ("flat-band point", CreutzParams(1.0, 0.0, 1.0, np.pi)),
    ("dimerized trivial limit", CreutzParams(0.0, 1.0, 0.0, 0.0)),
):
    print(f"  {label:<28}{zak_phase(p, 'lower', 512):+.6f} rad")

print("\nflat-band Wannier centers on a 10-cell open ladder:")
strong = CreutzParams(1.0, 0.0, 1.0, np.pi)
h = real_space_hamiltonian(strong, 10, periodic=False)
for cell in (1, 4, 9):
    v = wannier_state(10, cell)
    residual = np.linalg.norm(h @ v + 2.0 * v)
    print(f"  bond {cell}-{cell + 1}: center = {wannier_center(10, cell)}, "
          f"eigen-residual = {residual:.2e}")
print("Centers sit at half-integer positions: polarization 1/2, matching the")
print("pi Zak phase through center = (Zak phase) / 2 pi mod 1.")
