"""Radial test-feeder topologies used as the backbone of generated instances.

Only the branch lists are taken from the standard IEEE 33- and 69-bus
feeders (plus their usual normally-open tie switches); electrical parameters
are generated from planar coordinates.
"""

IEEE33_BRANCHES = [
    (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10), (10, 11),
    (11, 12), (12, 13), (13, 14), (14, 15), (15, 16), (16, 17), (17, 18),
    (2, 19), (19, 20), (20, 21), (21, 22),
    (3, 23), (23, 24), (24, 25),
    (6, 26), (26, 27), (27, 28), (28, 29), (29, 30), (30, 31), (31, 32), (32, 33),
]
IEEE33_TIES = [(8, 21), (9, 15), (12, 22), (18, 33), (25, 29)]

IEEE69_BRANCHES = (
    [(i, i + 1) for i in range(1, 27)]
    + [(3, 28)] + [(i, i + 1) for i in range(28, 35)]
    + [(3, 36)] + [(i, i + 1) for i in range(36, 46)]
    + [(4, 47)] + [(i, i + 1) for i in range(47, 50)]
    + [(8, 51), (51, 52)]
    + [(9, 53)] + [(i, i + 1) for i in range(53, 65)]
    + [(11, 66), (66, 67)]
    + [(12, 68), (68, 69)]
)
IEEE69_TIES = [(11, 43), (13, 21), (15, 46), (50, 59), (27, 65)]

STANDARD = {
    33: (IEEE33_BRANCHES, IEEE33_TIES),
    69: (IEEE69_BRANCHES, IEEE69_TIES),
}
