"""Generated by tools/gen_brief_pattern.py; do not edit."""

# (dr_a, dc_a, dr_b, dc_b); isotropic Gaussian, sigma 6.2, clipped to +-15
PATTERN = (
    ( -6,  -4, -11,  -5), (  0,   8,  -2,  -9), ( -6,   8,   6,   5), (  3,   8, -10,  -1),
    (  4,   4,  -2,   1), (-10,   7,  -2,   0), ( -8,   4,  -4,   1), (  7,   6,  -3,   1),
    ( -5, -10,  -2,  -4), (  6,  -3,  -1,  -5), (-10,   4,   3,   0), ( -4,   6,   7,   6),
    (  0,   1,   2,   8), (  8,   2,   9,  -2), (  3,  -5,  -3,  -7), (  5,  -4,  11,   9),
    ( 11, -12,  -7,  -1), (-13,  12,   4,  -9), ( -3,   2,  -6,   0), ( -3,   2,   3,   5),
    (  6,   4,   7,  15), ( 15,   3,  -7, -10), ( -4,  10,   4,  -9), ( -4,  -9,   1,  -1),
    ( -6,  -3,   2, -10), (  5,  10,  -1,  -2), (-10,   4,   0,   4), ( -7,   7,   4,  11),
    (  4,  -3,  10,  -2), (  7,  10,  -2,  -5), ( -1,   1,   2,  -4), (  6,  -4,   3,   5),
    (  1,   5,   5,   1), ( -2,  -5,  -2,  -1), ( -2,   0,  -5,  -6), ( -9,  -5,   2,   7),
    ( -4,   3,  -6,   6), ( -1,  -9,  13,   4), ( -1,   8,  12,  -1), (  4,   1,  11,   1),
    (  2,  11,  10,  -4), (  6,   5, -11,  -5), ( -1,   1,  10,   1), (  2,  -5,  -1,  10),
    (  6,  -7,   4,  10), ( -5,   1,   2,  -5), ( -2,   5,  -7,  -2), ( -4,   4,  -1,  12),
    ( -2,   7,   0, -11), (  0, -12,   1, -11), (  3,   7,   2,  -1), ( -3,   5, -14,   2),
    (-10,  -4,   0,  11), ( -7,   8,  -4,  -8), ( -8,  11,   8,  -8), ( -6,   0,   4,  -1),
    ( -1,   5,   4,   2), (  9,  -3,   3,  -5), (  6,  -5,   3,  -9), (  4,   9,  -7,  -1),
    (  7,   9,   0,  -6), ( -2,  -1,   9,   0), ( -7,  -1,  -4,  -3), ( -1,  -1,   8,   7),
    (  3,   1,   1,   0), (  8,  15,   5,   2), (  9,   3,   6,   5), (  3,   0,  -2,  -8),
    ( 14,   1,   6,  -3), ( -6,  -3,  -8,  -4), ( -6,   1,  14, -10), ( -8,  -2,  -1,  -1),
    ( -4,   0,  -3,   0), ( -3,  -2,  -8,   5), ( -5,  -1,   5,  -3), (  0,  -7, -12,   0),
    ( -9,   6,  -3,  -7), (  0,  -8,  -1,  -9), (  1, -10,  -4,   5), (  5,   0, -11,  -7),
    ( -5,   5,  -5,  -3), ( -6,  -4,   0,   8), ( -3, -12,   3,   6), ( -9,  -3,  -6,   5),
    ( -8,  -5,   5,  -3), ( -2,   4,   5,   9), (  3,  -5,  -1,  -5), ( -2,  -1,  -3,   1),
    ( -4,  -4,  -7,   2), (  5,   1,  -9,  -5), (  5,  -2,   8,   1), (-14,   1,   8,  -2),
    (  4,   4,  -9,  -2), ( -3,   4,   9,   3), (  1,   2,  -2,  10), (  5,  -6,  -2,  -2),
    (  0,  14,   4,  -2), ( -2,   8,  -9,  -4), (  5,   6,  -7,   4), ( -2,  -5,   1,  -7),
    (  9,   1,   1,   6), (  2,   2,   2,  10), ( -6,   0,  11,   2), ( -5,  10,   1,   5),
    (  0,  -3,   5, -12), ( -6,  13,  -5,  -5), ( -3,  -1,   7, -14), ( -3,   6,  -4,   0),
    ( -4, -12,   8,  -1), (  8,   0,   6,   5), ( -4,   8,  -7,  -4), (  7,  11,  12,   3),
    ( -1,  -3,   2,   7), (  1,  -9,  -4,   7), (  2,   8,  -7, -10), (  8,   8,   1,  -7),
    ( -7,  -6,  -3,  -1), (  4,  -9,   9,  -7), ( 14,   4,  -6,   2), (  1,  -2,   2,   6),
    (-13,  -7,  14,   3), ( -1,   0,   3,  -4), ( -3,   8,   3,   8), (  9,   4,   3,  -3),
    ( -9,   0,   6,  -9), ( 10, -12,   5,   4), (  5,   0,   8,  -9), ( -1,   4,   5,  -6),
    ( -5,  -1,  -8,  -7), ( -2,  -3,  -6,  -5), (  5,   7,   5,  -7), ( -3,  -1,   0,   5),
    (  4,   9,   4,   2), (  9,  -8, -10,   0), (  1,   4, -11,  -4), (  3,  -2,  -3,  -3),
    (  1,   6,   2,   8), (  3,   5,   2,   7), ( -2,  -1,  -9,   1), ( -9,  -9,  -2,   2),
    (  7,  -4,   1,   2), (  2,  11,  -7,  -4), ( -1,   3,  -3,  -2), (  8,  -3,  -2,  -2),
    (  7,   8,   0,  -6), (  3,   8,  12,   2), ( -4,  -6, -10,   3), ( -2,  -2,   6,   0),
    (  1,   9,  -1,   2), ( -6,   4,  -2,  -2), (  1,  -5,  10,  -4), (  0,   8,   5,  -4),
    (  7,  -7, -12,   6), (-10,   4,   1,   4), (  0,  -4,   7,  -3), ( -7,   3,  10,  -9),
    ( -3, -13,   1,  10), ( -3,  -4,  -4,  -5), ( 13,   8,   1,   7), ( -9,   3,   1,   9),
    (  8,  -3,   0,   6), ( 14,   0,   7,   0), (  5,   7,   0,   8), (  1,  -7,  -2,   8),
    ( -1,  -3,  13,   1), (-10,   8,   1,  -9), (  3,   6,   3,   0), ( -1,   3,   0,   3),
    (  0,  -9,   0,  -6), (-15,  -1,  -2,   2), (  7,   2, -11,  -4), (  3,  -2,  -7,  -5),
    ( -2,  -5,  -6,   2), (  6,   3,  -1,  -1), ( -4,   2,   0,  -3), ( -2,   7,  13,   2),
    ( -2,  13,   4,  -8), ( -5,   9,   2,   5), (  8,  12,   5,  -4), (  6,  -4,  -7,  -7),
    (  5,  -6,   6,  -5), ( 13,  -8,   3,   2), ( -1,   1,  -3,   4), (  4,   5,  -3,   5),
    ( -1,   2,  -3,   4), (  4,  -2,   1,  -9), (  3,  -1,  -3,   2), ( -7,  -7,   4,  -3),
    ( -8,   1, -11,   0), ( -1,   1,   4,   2), (  1,  -6,   5,   2), ( -3,  12,  -2,  -8),
    ( -1,  -3,   5,  -2), (-11,   2,   4,   1), (  3,  -1,   3,  -2), (  5,   4,  -1,  -7),
    (  5,   1,   5,  -4), ( -4,   5,  -2,   1), ( -4,  -1,  -8,  -6), ( 10,   1,  -1,  -2),
    (  4,  -3,  -6,   7), (  8,   0,   6,  -1), (  9,  -3,  -3,   4), (  7,  10,   1,   4),
    ( -7,   1,   3,   4), ( -2,  -7,  -2,   0), (-10,  -1,   2,  11), ( -3,  -3,  15,  -5),
    (  2,   4,  -1,  -5), ( -7,   0,  -1,  -2), ( -3,  -2,  -7, -12), ( -3,   0,   0,   0),
    ( -7,  11,  -1,  -7), ( -5,   8,   1,  -5), ( -3,   5,  -5,  -4), (  3,   1,  -3,   4),
    (  8,  -5,  11,   4), (  0,   0,  -3,  -4), ( -5,  -6,  -3,  -3), (  4,  -1,  -4,  -5),
    (  5,   9,  14,  -3), ( 11,  -3, -12,   0), ( -1,   4,   1,  -3), ( -2, -10,  -4,  -1),
    ( -5,  -2,  -8,   8), ( -4,  14,  -7,   0), ( -7,   0,   9,  -1), ( -8,   3,  10, -10),
    (  5,   0,  -5,  -5), ( 13,   2,   0,  -5), ( 10,   3,   1,  -4), (  3,   4,  -8,  -5),
    (  6,  -6,   3,   0), ( -6,  -1,   5, -15), ( -1,   1,  -6,   3), (  0,  -1,  -1,   5),
    ( -3,  -7,   0,   1), (  5,  -3,   7,  -8), (  0,  -5,   1,   8), ( -2,   6,   0,   5),
    (  9,   1,   0,  -6), (  2,   0,  -2,   7), ( -8,   2,   4,   0), (  0,   4,   2,   5),
    (  1,   0,   5,  -9), (  2,  -5,   3,   6), (  3,  -3,   0, -10), ( -4,   2,   4,   0),
    ( -4,   1,  -3,   1), ( -2,  -6,   2,  -4), ( -2,  -6,   2,   0), ( -4, -11,  -6,   1),
    ( -3,   0,   2,   5), (  4, -11,   6,  -2), (  8,   5,   1,   9), ( -1,  -4,   3,  -2),
)
