#!/usr/bin/env python3
"""Where do simulated annotators click?

Draws many single-frame annotations for one long segment under the three
simulation styles and prints their position histograms: uniform spreads
evenly, gaussian_mid hugs the center, and human_like (a Beta(4,4) over
the segment) concentrates almost as strongly but with heavier shoulders
and no resampling cutoff. A small table quantifies the spread: the
fraction of clicks landing in the middle half of the segment and the
mean distance to the nearer boundary.

Downstream effects on detection quality exist but are fractions of a
point on the synthetic corpus; the acceptance suite measures them with
5-seed medians rather than a single run.
"""

import argparse

import numpy as np

from frameloc.inference import Segment
from frameloc.mining import STRATEGIES, simulate_annotations


def draw_positions(strategy, segment, draws):
    annotations = simulate_annotations([segment] * draws, strategy, [7, 1])
    return np.array([(a.frame - segment.start) / (segment.length - 1)
                     for a in annotations])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--draws", type=int, default=4000)
    args = parser.parse_args()

    segment = Segment(video_id="demo", start=100, end=199, label=1)
    bins = 20
    print(f"{args.draws} annotation draws over a {segment.length}-frame "
          f"segment, {bins} position bins\n")

    positions = {}
    for strategy in STRATEGIES:
        rel = draw_positions(strategy, segment, args.draws)
        positions[strategy] = rel
        counts, _ = np.histogram(rel, bins=bins, range=(0.0, 1.0))
        peak = counts.max()
        print(f"{strategy:>12}:")
        for height in range(6, 0, -1):
            level = peak * height / 6
            print("  " + "".join("#" if c >= level else " " for c in counts))
        print("  " + "-" * bins)
        print("  start" + " " * (bins - 9) + "end\n")

    print(f"{'style':>12}  {'middle-half share':>18}  {'mean dist to edge':>18}")
    for strategy in STRATEGIES:
        rel = positions[strategy]
        middle = float(np.mean((rel >= 0.25) & (rel <= 0.75)))
        edge = float(np.mean(np.minimum(rel, 1.0 - rel))) * (segment.length - 1)
        print(f"{strategy:>12}  {middle:18.3f}  {edge:15.1f} fr")
    print()
    print("uniform covers boundaries that the mid-biased styles rarely")
    print("touch; anchor expansion has to grow further from a centered")
    print("click to reach the segment edges.")


if __name__ == "__main__":
    main()
