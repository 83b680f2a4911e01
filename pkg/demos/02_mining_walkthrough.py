#!/usr/bin/env python3
"""Watch the pseudo-label miners work on a score matrix you can read.

One 14-frame video, two action classes plus background. A class-1 score
bump spans frames 2..9 with the anchor at frame 5, but frame 6 is a
trap: its argmax flips to class 2, which ends the rightward walk in
stop-on-failure mode. Scan-all mode keeps testing and recovers frame 8,
whose local argmax neighborhood is clean again. Background mining then
ranks every leftover frame by its background score.
"""

import numpy as np

from frameloc.mining import expand_anchor, mine_background, mine_pseudo_labels


def show(scores, highlight, title):
    print(title)
    print("  frame: " + " ".join(f"{t:>5d}" for t in range(scores.shape[0])))
    for c, name in enumerate(["bg", "c1", "c2"]):
        row = " ".join(f"{scores[t, c]:5.2f}" for t in range(scores.shape[0]))
        print(f"  {name:>5}: {row}")
    marks = " ".join("  ^^^" if t in highlight else "     "
                     for t in range(scores.shape[0]))
    print("         " + marks)


def main():
    t_len = 14
    scores = np.full((t_len, 3), 0.1)
    scores[:, 0] = 0.6                                      # empty frames
    scores[2:10, 0] = 0.05                                  # class-1 zone
    scores[11:13, 0] = 0.05                                 # class-2 zone
    scores[2:10, 1] = [0.56, 0.62, 0.70, 0.92, 0.88, 0.74, 0.60, 0.58]
    scores[6, 2] = 0.95                # trap: argmax flips to class 2 here
    scores[11:13, 2] = [0.80, 0.85]    # a separate class-2 blob

    anchor = 5
    floor = 0.6 * scores[anchor, 1]
    print(f"anchor at frame {anchor} with class 1, radius 4, keep_ratio 0.6")
    print(f"(score floor: 0.6 * {scores[anchor, 1]:.2f} = {floor:.3f})")
    print()

    grown = expand_anchor(scores, anchor, label=1, radius=4, keep_ratio=0.6,
                          stop_on_failure=True)
    show(scores, set(grown) | {anchor}, "stop-on-failure walk:")
    print(f"  expanded frames: {grown}")
    print("  leftward reaches 4 and 3, then frame 2 fails (its neighbor 1")
    print("  is background-argmax); rightward dies immediately at the")
    print("  class-2 flip on frame 6.")
    print()

    grown_all = expand_anchor(scores, anchor, label=1, radius=4, keep_ratio=0.6,
                              stop_on_failure=False)
    print(f"scan-all walk keeps testing past the flip: {grown_all}")
    print("  frame 8 comes back (frames 7, 8, 9 all argmax class 1 and its")
    print("  score 0.60 clears the floor); 7 and 9 stay out because the")
    print("  flip and the bump edge sit in their neighborhoods.")
    print()

    mask = np.ones((1, t_len), dtype=bool)
    batch_scores = scores[None]
    mined = mine_pseudo_labels(batch_scores, mask, [(0, anchor, 1)],
                               radius=4, keep_ratio=0.6, eta=2.0)
    labeled = len(mined.action_frames)
    print("one-call version (anchors + expansion + background mining):")
    for v, f, y, origin in mined.action_frames:
        print(f"  action frame {f:2d} class {y} ({origin})")
    print(f"  background quota: floor(2.0 * {labeled}) = {2 * labeled} frames")
    print(f"  background frames: {[f for _, f in mined.background_frames]}")
    print("  the four 0.60-score empty frames go first (ties break by frame")
    print("  index), then the quota dips into the 0.05 leftovers.")
    print()

    few = mine_background(batch_scores, mask,
                          {(0, f) for _, f, _, _ in mined.action_frames},
                          eta=1.0, num_labeled=labeled)
    print(f"with eta = 1.0 the quota drops to {labeled} and only empty frames")
    print(f"are taken: {[f for _, f in few]}")


if __name__ == "__main__":
    main()
