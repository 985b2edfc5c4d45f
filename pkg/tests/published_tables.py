"""Frozen published simulation results (m=500, R=1000, 200 resamples).

Each row holds the values at t = 2, 4, 6, 8 for the prevalence-controlling
decomposition followed by t = 2, 4, 6, 8 for the hazard-controlling one.
Blocks "A7" and "A8" evaluate against the truth under the assumption
matching that decomposition.
"""

TIMES = (2.0, 4.0, 6.0, 8.0)
DECOMPOSITIONS = ("prev", "haz")


def _expand(rows, overrides):
    a7 = {(s, e, "A7", stat): v for (s, e, stat), v in rows.items()}
    a8 = {(s, e, "A8", stat): list(v) for (s, e, stat), v in rows.items()}
    for (s, e, stat), cells in overrides.items():
        for (d, t), v in cells.items():
            a8[s, e, "A8", stat][DECOMPOSITIONS.index(d) * 4 + TIMES.index(t)] = v
    return {**a7, **{k: tuple(v) for k, v in a8.items()}}


_SE = {
    ("1", "DE", "Asymptotic SE"): (.032, .045, .037, .031, .031, .043, .033, .023),
    ("1", "DE", "Bootstrap SE"): (.031, .046, .038, .028, .031, .043, .034, .027),
    ("1", "DE", "SD"): (.032, .046, .039, .028, .031, .043, .034, .026),
    ("1", "IE", "Asymptotic SE"): (.009, .018, .025, .033, .004, .015, .019, .015),
    ("1", "IE", "Bootstrap SE"): (.006, .019, .027, .025, .005, .015, .019, .020),
    ("1", "IE", "SD"): (.005, .019, .027, .025, .004, .014, .019, .019),
    ("2", "DE", "Asymptotic SE"): (.030, .049, .037, .021, .029, .043, .030, .015),
    ("2", "DE", "Bootstrap SE"): (.030, .048, .036, .019, .029, .043, .031, .017),
    ("2", "DE", "SD"): (.030, .049, .036, .018, .029, .044, .030, .016),
    ("2", "IE", "Asymptotic SE"): (.012, .023, .023, .024, .008, .020, .019, .014),
    ("2", "IE", "Bootstrap SE"): (.010, .026, .026, .019, .008, .020, .020, .016),
    ("2", "IE", "SD"): (.010, .025, .026, .018, .008, .019, .019, .015),
    ("3", "DE", "Asymptotic SE"): (.028, .044, .040, .034, .027, .041, .034, .023),
    ("3", "DE", "Bootstrap SE"): (.028, .043, .039, .031, .027, .041, .035, .026),
    ("3", "DE", "SD"): (.027, .043, .038, .033, .026, .041, .034, .026),
    ("3", "IE", "Asymptotic SE"): (.009, .017, .021, .028, .004, .014, .017, .012),
    ("3", "IE", "Bootstrap SE"): (.006, .016, .021, .021, .005, .014, .017, .014),
    ("3", "IE", "SD"): (.005, .016, .021, .020, .004, .014, .017, .013),
}

_SE_A8 = {
    ("1", "DE", "Asymptotic SE"): {("haz", 8.0): .024},
    ("1", "DE", "Bootstrap SE"): {("prev", 2.0): .032},
    ("1", "IE", "Bootstrap SE"): {("prev", 4.0): .020, ("haz", 8.0): .019},
    ("1", "IE", "SD"): {("haz", 8.0): .018},
    ("2", "DE", "Asymptotic SE"): {("haz", 4.0): .044, ("haz", 6.0): .031, ("haz", 8.0): .017},
    ("2", "DE", "Bootstrap SE"): {("prev", 4.0): .049, ("haz", 4.0): .044},
    ("2", "IE", "Asymptotic SE"): {("haz", 4.0): .019},
    ("3", "DE", "Asymptotic SE"): {("haz", 8.0): .024},
    ("3", "DE", "SD"): {("haz", 8.0): .027},
    ("3", "IE", "Bootstrap SE"): {("prev", 8.0): .022},
}

STANDARD_ERRORS = _expand(_SE, _SE_A8)

COVERAGE = {
    ("1", "DE", "A7", "Asymptotic coverage"): (.949, .945, .927, .954, .947, .936, .895, .856),
    ("1", "DE", "A7", "Bootstrap coverage"): (.945, .951, .954, .930, .946, .937, .907, .919),
    ("1", "IE", "A7", "Asymptotic coverage"): (1.000, .965, .936, .992, .993, .930, .785, .706),
    ("1", "IE", "A7", "Bootstrap coverage"): (.996, .961, .938, .940, .994, .927, .806, .862),
    ("2", "DE", "A7", "Asymptotic coverage"): (.948, .947, .947, .984, .939, .949, .948, .947),
    ("2", "DE", "A7", "Bootstrap coverage"): (.950, .945, .941, .951, .948, .939, .953, .967),
    ("2", "IE", "A7", "Asymptotic coverage"): (.986, .909, .917, .995, .832, .937, .945, .926),
    ("2", "IE", "A7", "Bootstrap coverage"): (.837, .928, .929, .939, .857, .919, .940, .949),
    ("3", "DE", "A7", "Asymptotic coverage"): (.964, .962, .968, .958, .964, .947, .847, .744),
    ("3", "DE", "A7", "Bootstrap coverage"): (.949, .950, .956, .952, .946, .931, .838, .805),
    ("3", "IE", "A7", "Asymptotic coverage"): (1.000, .976, .967, .994, .995, .852, .487, .334),
    ("3", "IE", "A7", "Bootstrap coverage"): (.996, .963, .965, .963, .997, .839, .502, .429),
    ("1", "DE", "A8", "Asymptotic coverage"): (.949, .946, .909, .895, .947, .949, .940, .931),
    ("1", "DE", "A8", "Bootstrap coverage"): (.950, .952, .898, .879, .952, .948, .951, .947),
    ("1", "IE", "A8", "Asymptotic coverage"): (1.000, .938, .883, .973, .994, .965, .952, .943),
    ("1", "IE", "A8", "Bootstrap coverage"): (.999, .965, .907, .916, .998, .964, .967, .977),
    ("2", "DE", "A8", "Asymptotic coverage"): (.948, .947, .947, .984, .943, .949, .950, .962),
    ("2", "DE", "A8", "Bootstrap coverage"): (.952, .957, .951, .970, .949, .948, .958, .966),
    ("2", "IE", "A8", "Asymptotic coverage"): (.987, .910, .915, .995, .830, .938, .945, .938),
    ("2", "IE", "A8", "Bootstrap coverage"): (.853, .943, .952, .951, .871, .943, .961, .949),
    ("3", "DE", "A8", "Asymptotic coverage"): (.962, .943, .877, .867, .965, .955, .958, .921),
    ("3", "DE", "A8", "Bootstrap coverage"): (.943, .926, .875, .839, .944, .940, .944, .956),
    ("3", "IE", "A8", "Asymptotic coverage"): (1.000, .934, .691, .928, .997, .967, .952, .961),
    ("3", "IE", "A8", "Bootstrap coverage"): (.998, .849, .613, .750, .999, .973, .962, .985),
}


def lookup(table, setting, effect, block, stat, decomposition, t):
    return table[setting, effect, block, stat][DECOMPOSITIONS.index(decomposition) * 4 + TIMES.index(t)]
