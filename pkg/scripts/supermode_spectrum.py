"""Simulate the comb, then print the leading supermodes and their squeezing.

    python3 scripts/supermode_spectrum.py [--config C] [--modes 10]

Shows eigenvalue, parity, RMS width relative to the Hermite-Gauss law,
overlap with the matching Hermite-Gauss function and the squeezed /
antisqueezed levels in dB, plus the calibrated unshaped-LO levels.
"""

import argparse
import math

from spopo.comb import hermite_gauss_reference, parity, rms_width
from spopo.config import load_config, reference_config
from spopo.simulate import run_simulation
from spopo.state import to_db


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--modes", type=int, default=10)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else reference_config()
    sim = run_simulation(cfg)
    grid, vecs, spec = sim.modes.grid, sim.modes.vectors, sim.spectrum
    w0 = rms_width(vecs[:, 0], grid)
    sx, sp = sim.unshaped_levels_db()
    print(f"pump ratio {sim.pump_ratio:.4f}, efficiency {sim.efficiency:.4f}; unshaped LO x {sx:.2f} dB, p {sp:.2f} dB")
    print(f"mode-0 RMS width {w0 / 1e12:.3f} THz")
    print(" k   eigenvalue  parity  width/(sqrt(2k+1) w0)  HG overlap  quad  squeezed dB  anti dB")
    for k in range(min(args.modes, len(sim.modes))):
        v = vecs[:, k]
        ratio = rms_width(v, grid) / w0 / math.sqrt(2 * k + 1)
        ov = abs(hermite_gauss_reference(k, w0, grid) @ v)
        print(
            f"{k:>2}  {sim.modes.eigenvalues[k]:+.5f}  {parity(v):+d}      {ratio:.4f}                 {ov:.4f}"
            f"      {spec.labels[k]}     {to_db(spec.v_minus[k]):+.2f}       {to_db(spec.v_plus[k]):+.2f}"
        )


if __name__ == "__main__":
    main()
