"""Reference Krippendorff's alpha (krippendorff package) for the C++ fixture."""
import math

import krippendorff
import numpy as np

# Rows are annotators, columns items; None marks a missing rating.
RATINGS = [
    [1, 2, 3, 3, 2, 1, 4, 1, 2, None, 3, 4],
    [1, 2, 3, 3, 2, 2, 4, 1, 2, 4, 3, None],
    [None, 3, 3, 3, 2, 3, 4, 2, 2, 4, 2, 4],
    [1, 2, 3, 2, 2, 4, 4, 1, 3, 4, None, 1],
]

data = np.array([[math.nan if v is None else v for v in row] for row in RATINGS], dtype=float)
for level in ("nominal", "ordinal", "interval"):
    print(level, "%.17g" % krippendorff.alpha(reliability_data=data, level_of_measurement=level))
