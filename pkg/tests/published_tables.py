"""Published raw numbers used as fixed inputs and expected outputs."""

STYLE_MODELS = ("base", "0.5", "1.0", "1.5", "2.0")

# (row model A, column model B) -> two repeated runs of (A, B, =), each 2 x 169 verdicts
STYLE_RUNS = {
    ("base", "0.5"): ((142, 196, 0), (148, 190, 0)),
    ("base", "1.0"): ((148, 190, 0), (145, 193, 0)),
    ("base", "1.5"): ((154, 182, 2), (153, 185, 0)),
    ("base", "2.0"): ((141, 197, 0), (142, 196, 0)),
    ("0.5", "1.0"): ((144, 176, 18), (139, 182, 17)),
    ("0.5", "1.5"): ((161, 172, 5), (158, 176, 4)),
    ("0.5", "2.0"): ((147, 185, 6), (143, 188, 7)),
    ("1.0", "1.5"): ((165, 167, 6), (172, 159, 7)),
    ("1.0", "2.0"): ((163, 164, 11), (169, 160, 9)),
    ("1.5", "2.0"): ((159, 175, 4), (162, 169, 7)),
}

# pair -> (A total, B total, WinB, WinB %)
STYLE_TOTALS = {
    ("base", "0.5"): (290, 386, 96, 14.20),
    ("base", "1.0"): (293, 383, 90, 13.31),
    ("base", "1.5"): (307, 367, 60, 8.88),
    ("base", "2.0"): (283, 393, 110, 16.27),
    ("0.5", "1.0"): (283, 358, 75, 11.09),
    ("0.5", "1.5"): (319, 348, 29, 4.29),
    ("0.5", "2.0"): (290, 373, 83, 12.28),
    ("1.0", "1.5"): (337, 326, -11, -1.63),
    ("1.0", "2.0"): (332, 324, -8, -1.18),
    ("1.5", "2.0"): (321, 344, 23, 3.40),
}

# pair -> (A, B, =) differences between the two runs
STYLE_RUN_DIFFS = {
    ("base", "0.5"): (6, 6, 0),
    ("base", "1.0"): (3, 3, 0),
    ("base", "1.5"): (1, 3, 2),
    ("base", "2.0"): (1, 1, 0),
    ("0.5", "1.0"): (5, 6, 1),
    ("0.5", "1.5"): (3, 4, 1),
    ("0.5", "2.0"): (4, 3, 1),
    ("1.0", "1.5"): (7, 8, 1),
    ("1.0", "2.0"): (6, 4, 2),
    ("1.5", "2.0"): (3, 6, 3),
}

NOISE_DIFFERING = 94
NOISE_TOTAL = 6760

# (row model, column model) -> {model: ((tp, fp, fn), (Pr %, Rec %, F1 %))}
FACT_CELLS = {
    ("base", "old"): {
        "old": ((98, 283, 98), (25.7, 50.0, 33.9)),
        "base": ((96, 548, 100), (14.9, 48.9, 22.8)),
    },
    ("base", "new_old"): {
        "new_old": ((100, 314, 103), (24.1, 49.2, 32.4)),
        "base": ((107, 548, 96), (16.3, 52.7, 24.9)),
    },
    ("base", "old_new"): {
        "old_new": ((97, 285, 106), (25.3, 47.7, 33.1)),
        "base": ((99, 534, 104), (15.6, 48.7, 23.6)),
    },
    ("old", "new_old"): {
        "new_old": ((110, 261, 94), (29.6, 53.9, 38.2)),
        "old": ((102, 243, 102), (29.5, 50.0, 37.1)),
    },
    ("old", "old_new"): {
        "old_new": ((109, 233, 98), (31.8, 52.6, 39.7)),
        "old": ((114, 266, 93), (30.0, 55.0, 38.8)),
    },
    ("new_old", "old_new"): {
        "old_new": ((106, 246, 101), (30.1, 51.2, 37.9)),
        "new_old": ((105, 260, 102), (28.7, 50.7, 36.7)),
    },
}

# pair -> (F1 diff in pp, winner)
FACT_F1_DIFFS = {
    ("base", "old"): (11.11, "old"),
    ("base", "new_old"): (7.47, "new_old"),
    ("base", "old_new"): (9.48, "old_new"),
    ("old", "new_old"): (1.10, "new_old"),
    ("old", "old_new"): (0.87, "old_new"),
    ("new_old", "old_new"): (1.21, "old_new"),
}

# shared original-fact totals per comparison
FACT_ORIGINAL_TOTALS = {
    ("base", "old"): 196,
    ("base", "new_old"): 203,
    ("base", "old_new"): 203,
    ("old", "new_old"): 204,
    ("old", "old_new"): 207,
    ("new_old", "old_new"): 207,
}
