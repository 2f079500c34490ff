"""Which variable is the independent one?

Builds data where x genuinely drives y (a skewed x distribution plus
additive noise in y), fits both regression directions and compares how
strongly the normalised residuals correlate with the regressor. The
answer is advisory; always look at the residual plots too.

    python demos/causality.py
"""

import numpy as np

import eivreg


def main():
    rng = np.random.default_rng(11)
    x_true = rng.exponential(3.0, 2000)
    y = 2 * x_true + 1 + rng.normal(0, 2, 2000) + rng.normal(0, 0.3, 2000)
    x = x_true + rng.normal(0, 0.05, 2000)
    d = eivreg.validate_dataset(x, y, 0.05, 0.3)

    rep = eivreg.assess_causality(d)
    for label, side in (("y on x", rep.forward), ("x on y", rep.inverse)):
        c = side.correlations
        print(f"{label}: pearson {c['pearson']:+.3f}  spearman {c['spearman']:+.3f}  "
              f"|r| pearson {c['abs_pearson']:+.3f}")
    print("recommendation:", rep.recommendation)

    # a symmetric Gaussian cloud carries no directional signal
    xy = rng.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]], 5000)
    print("gaussian cloud:", eivreg.assess_causality(eivreg.validate_dataset(xy[:, 0], xy[:, 1], 0.01, 0.01))
          .recommendation)


if __name__ == "__main__":
    main()
