"""
Rater histograms: distribution families and opinion clusters
============================================================

Subjective studies publish per-image rating histograms. Two analyses
ground the distribution-prediction formulation: fitting parametric
families to the histograms (the Gaussian wins on aggregate RMSE when
the data really is Gaussian) and k-means clustering of the empirical
distributions into recurring opinion shapes.
"""

import numpy as np

from radapt.distmath import QualityLabel, RatingScale, discretize
from radapt.metrics import RaterHistogram, cluster_distributions, gof_fit

scale = RatingScale()
rng = np.random.default_rng(42)

# 1. Simulate a study: 300 images, 50 raters each, true opinion
#    distributions are discretized Gaussians with varied mean/spread.
histograms = []
for _ in range(300):
    mu = rng.uniform(1.5, 4.5)
    sigma = rng.uniform(0.4, 1.5)
    p = discretize(QualityLabel(mu, sigma * sigma), scale)
    histograms.append(RaterHistogram(tuple(int(c) for c in rng.multinomial(50, p))))
print("example histogram:", histograms[0].counts)

# 2. Fit gaussian, gamma, and weibull families to every histogram and
#    compare by RMSE against the empirical frequencies.
families = ("gaussian", "gamma", "weibull")
rmse = {fam: [] for fam in families}
for h in histograms:
    for fam in families:
        rmse[fam].append(gof_fit(h, fam)[1])
print("\nmean RMSE per family over 300 histograms:")
for fam in families:
    print(f"  {fam:8s} {np.mean(rmse[fam]):.5f}")

# individual histograms are noisy at 50 raters (about 0.07 per bin), so
# the generating family wins per trial only at chance-like rates even
# though it wins clearly on aggregate
wins = sum(
    1 for g, ga, w in zip(rmse["gaussian"], rmse["gamma"], rmse["weibull"])
    if g <= ga and g <= w
)
print(f"gaussian lowest on {wins}/300 individual histograms "
      "(noise-dominated; the aggregate row above is the stable signal)")

# 3. Cluster the empirical distributions into 5 recurring shapes.
result = cluster_distributions(histograms, k=5, seed=0)
order = np.argsort([-(c @ scale.levels) for c in result.centroids])
print("\nopinion clusters (centroid distribution, share of images):")
for rank, j in enumerate(order, start=1):
    c = result.centroids[j]
    mean = c @ scale.levels
    bar = "".join("#" * int(round(10 * v)) for v in c)
    print(f"  {rank}. mean {mean:.2f}  {result.percentages[j]:5.1f}%  "
          + np.array2string(c, precision=3))

# 4. Cluster assignments index back into the study: pull one example
#    image histogram per cluster.
print("\none member per cluster:")
for j in order:
    i = int(np.argmax(result.assignments == j))
    print(f"  cluster {j}: {histograms[i].counts}")
