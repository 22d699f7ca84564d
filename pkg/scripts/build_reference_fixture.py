"""Regenerate the packaged reconstruction fixture and print its Monte Carlo spectrum.

    python scripts/build_reference_fixture.py [--check-only]
"""

import argparse
import time

import numpy as np

from spopo.config import packaged_path
from spopo.fixtures import (
    FIXTURE_POWERS,
    FIXTURE_TRACES,
    REFERENCE_ANTISQUEEZING,
    REFERENCE_SQUEEZING,
    build_fixture_bundle,
    load_fixture_bundle,
)
from spopo.pipeline import assemble_covariance, extract_modes, monte_carlo_blocks
from spopo.traces import write_bundle
from spopo.witnesses import purity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check-only", action="store_true", help="analyse the shipped files without rewriting them")
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=20120614)
    args = ap.parse_args()

    if not args.check_only:
        bundle = build_fixture_bundle()
        write_bundle(bundle, packaged_path(FIXTURE_TRACES), packaged_path(FIXTURE_POWERS))
        print(f"wrote {packaged_path(FIXTURE_TRACES)}")

    bundle = load_fixture_bundle()
    t0 = time.perf_counter()
    state = assemble_covariance(bundle)
    blocks = monte_carlo_blocks(bundle.levels(), args.samples, args.seed)
    ext = extract_modes(blocks, k=10)
    print(f"monte carlo + extraction: {time.perf_counter() - t0:.2f} s, purity {purity(state):.4f}")
    print("mode  squeezing (ref)            antisqueezing (ref)")
    for k in range(len(ext)):
        print(
            f"{k + 1:>4}  {ext.squeezing_mean[k]:.3f}+-{ext.squeezing_sigma[k]:.3f} "
            f"({REFERENCE_SQUEEZING[k, 0]:.2f}+-{REFERENCE_SQUEEZING[k, 1]:.2f})   "
            f"{ext.antisqueezing_mean[k]:.3f}+-{ext.antisqueezing_sigma[k]:.3f} "
            f"({REFERENCE_ANTISQUEEZING[k, 0]:.2f}+-{REFERENCE_ANTISQUEEZING[k, 1]:.2f})  {ext.quadratures[k]}"
        )
    print("nonclassical modes:", ext.nonclassical_count)
    print("max |mean - ref| / ref sigma:", np.max(np.abs(ext.squeezing_mean - REFERENCE_SQUEEZING[:, 0]) / REFERENCE_SQUEEZING[:, 1]))


if __name__ == "__main__":
    main()
