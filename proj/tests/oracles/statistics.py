"""Reference paired t-test and correlation values (scipy) for the C++ fixtures."""
import numpy as np
from scipy import stats

TUNED = [24, 27, 19, 30, 22, 25, 28, 21, 26, 23]
BASELINE = [22, 26, 20, 27, 22, 21, 27, 19, 24, 24]
r = stats.ttest_rel(TUNED, BASELINE)
d = np.array(TUNED, float) - np.array(BASELINE, float)
print("t %.17g" % r.statistic)
print("p_two %.17g" % r.pvalue)
print("p_one %.17g" % stats.ttest_rel(TUNED, BASELINE, alternative="greater").pvalue)
print("d %.17g" % (d.mean() / d.std(ddof=1)))

X = [0.3, 1.2, 1.2, 4.0, 2.5, 0.3, 3.1, 2.5]
Y = [1.0, 2.0, 1.5, 3.5, 3.5, 0.5, 2.0, 4.0]
print("pearson %.17g" % stats.pearsonr(X, Y)[0])
print("spearman %.17g" % stats.spearmanr(X, Y)[0])
print("kendall %.17g" % stats.kendalltau(X, Y, variant="b")[0])
