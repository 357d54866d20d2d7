"""Reference values for the families, keyed by (n, l) with k = n - l - 1."""

# (a at H_min, a at H = 0, a* bracket, H_min)
SPECIAL_POINTS = {
    (3, 1): (0.07488, 0.1876, (0.69893, 0.71518), -0.07989),
    (4, 1): (0.06705, 0.16853, (0.56352, 0.59113), -0.09905),
    (5, 1): (0.06029, 0.14971, (0.48862, 0.51141), -0.09866),
    (5, 2): (0.17229, 0.33098, (0.6973, 0.71677), -0.11987),
    (6, 1): (0.05507, 0.13538, (0.43752, 0.45696), -0.0946),
    (6, 2): (0.15519, 0.29683, (0.62353, 0.64131), -0.12072),
    (7, 1): (0.05095, 0.12431, (0.3999, 0.41665), -0.09),
    (7, 2): (0.14246, 0.2708, (0.76683, 0.78221), -0.11714),
    (7, 3): (0.23697, 0.39953, (0.69991, 0.71422), -0.12333),
    (8, 1): (0.04765, 0.1155, (0.37071, 0.38527), -0.08561),
    (8, 2): (0.13228, 0.2504, (0.52737, 0.54167), -0.11253),
    (8, 3): (0.21876, 0.36791, (0.42153, 0.43128), -0.12103),
    (9, 1): (0.04489, 0.10829, (0.6973, 0.71677), -0.08162),
    (9, 2): (0.12417, 0.23392, (0.49359, 0.50642), -0.1079),
    (9, 3): (0.20423, 0.34261, (0.60624, 0.61847), -0.11732),
    (9, 4): (0.28359, 0.44143, (0.70134, 0.71282), -0.11986),
    (10, 1): (0.04255, 0.10226, (0.32756, 0.33914), -0.07804),
    (10, 2): (0.1173, 0.22029, (0.46564, 0.47718), -0.10353),
    (10, 3): (0.19238, 0.32184, (0.57166, 0.58302), -0.11329),
    (10, 4): (0.26605, 0.41362, (0.6614, 0.67189), -0.11703),
    (11, 1): (0.04049, 0.09713, (0.31105, 0.32143), -0.07484),
    (11, 2): (0.1116, 0.20877, (0.44193, 0.45251), -0.09952),
    (11, 3): (0.18225, 0.30441, (0.54243, 0.55301), -0.10933),
    (11, 4): (0.25137, 0.39044, (0.6275, 0.63738), -0.11367),
    (11, 5): (0.31936, 0.47029, (0.70237, 0.7118), -0.11494),
    (12, 1): (0.03879, 0.09269, (0.29583, 0.30724), -0.07197),
    (12, 2): (0.10659, 0.19888, (0.42153, 0.43128), -0.09586),
    (12, 3): (0.17372, 0.28953, (0.51736, 0.5271), -0.10559),
    (12, 4): (0.23893, 0.37077, (0.59835, 0.60767), -0.11023),
    (12, 5): (0.30276, 0.44584, (0.66868, 0.67968), -0.11218),
}

# n-volume of the minimal member of each family
VOLUMES = {
    (3, 1): 37.8540,
    (4, 1): 49.4826,
    (5, 1): 57.8986, (5, 2): 56.9862,
    (6, 1): 61.5653, (6, 2): 60.2932,
    (7, 1): 60.3392, (7, 2): 58.9648, (7, 3): 58.6727,
    (8, 1): 55.1111, (8, 2): 53.7953, (8, 3): 53.4141,
    (9, 1): 47.3107, (9, 2): 46.1509, (9, 3): 45.7730, (9, 4): 45.6751,
    (10, 1): 38.4320, (10, 2): 37.4742, (10, 3): 37.1433, (10, 4): 37.0227,
    (11, 1): 29.7032, (11, 2): 28.9549, (11, 3): 28.6874, (11, 4): 28.5757, (11, 5): 28.5441,
    (12, 1): 21.9400, (12, 2): 21.3830, (12, 3): 21.1796, (12, 4): 21.0886, (12, 5): 21.0516,
}

# minimal Clifford hypersurfaces S^{n-l} x S^l, to four decimals
CLIFFORD_VOLUMES = {
    (3, 1): 30.3905,
    (4, 1): 40.2783, (4, 2): 39.4784,
    (5, 1): 47.3307, (5, 2): 46.1133,
    (6, 1): 50.4198, (6, 2): 48.9976,
    (7, 1): 49.4617, (7, 2): 48.0033, (7, 3): 47.5945,
    (8, 1): 45.2003, (8, 2): 43.8341, (8, 3): 43.4037, (8, 4): 43.2929,
    (9, 1): 38.8158, (9, 2): 37.6244, (9, 3): 37.2265, (9, 4): 37.0827,
    (10, 1): 31.5384, (10, 2): 30.5605, (10, 3): 30.2227, (10, 4): 30.0830, (10, 5): 30.0434,
    (11, 1): 24.3791, (11, 2): 23.6178, (11, 3): 23.3492, (11, 4): 23.23, (11, 5): 23.1818,
    (12, 1): 18.0094, (12, 2): 17.4442, (12, 3): 17.2418, (12, 4): 17.1483, (12, 5): 17.1044,
    (12, 6): 17.0914,
}
