"""Regenerate src/stereoslam/_brief_pattern.py.

The descriptor sampling pattern is a fixed table so descriptors are identical
across runs and machines. It was produced once with this script; rerunning it
reproduces the same table.

    python tools/gen_brief_pattern.py > src/stereoslam/_brief_pattern.py
"""

import numpy as np

SEED = 20170523
PATCH = 31
HALF = PATCH // 2
SIGMA = PATCH / 5.0
N_PAIRS = 256


def generate():
    rng = np.random.default_rng(SEED)
    pairs = []
    seen = set()
    while len(pairs) < N_PAIRS:
        a = np.rint(rng.normal(0.0, SIGMA, 2)).astype(int)
        b = np.rint(rng.normal(0.0, SIGMA, 2)).astype(int)
        if np.any(np.abs(a) > HALF) or np.any(np.abs(b) > HALF):
            continue
        key = (int(a[0]), int(a[1]), int(b[0]), int(b[1]))
        if key[:2] == key[2:] or key in seen or (key[2:] + key[:2]) in seen:
            continue
        seen.add(key)
        pairs.append(key)
    return pairs


def main():
    pairs = generate()
    print('"""Generated by tools/gen_brief_pattern.py; do not edit."""')
    print()
    print(f"# (dr_a, dc_a, dr_b, dc_b); isotropic Gaussian, sigma {SIGMA}, clipped to +-{HALF}")
    print("PATTERN = (")
    for i in range(0, len(pairs), 4):
        print("    " + " ".join(f"({a:3d}, {b:3d}, {c:3d}, {d:3d})," for a, b, c, d in pairs[i:i + 4]))
    print(")")


if __name__ == "__main__":
    main()
