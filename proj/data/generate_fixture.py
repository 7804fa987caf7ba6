"""Generate the synthetic tabular regression fixture used by the CV tests.

Shape loosely follows small UCI regression sets: 500 rows, seven numeric
features and one categorical column with three levels.
"""
import argparse

import numpy as np


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="fixture_tabular.csv")
    parser.add_argument("--rows", type=int, default=500)
    parser.add_argument("--seed", type=int, default=20240611)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    n = args.rows
    x = rng.normal(size=(n, 7))
    x[:, 1] = rng.uniform(0.0, 10.0, size=n)
    x[:, 4] = 0.6 * x[:, 0] + 0.8 * rng.normal(size=n)
    kind = rng.choice(["alpha", "beta", "gamma"], size=n, p=[0.5, 0.3, 0.2])
    offset = np.select([kind == "alpha", kind == "beta"], [0.0, 1.5], -1.0)
    y = (
        np.sin(x[:, 0])
        + 0.3 * x[:, 1]
        - 0.5 * x[:, 2] ** 2
        + x[:, 3] * x[:, 4]
        + offset
        + 0.3 * rng.normal(size=n)
    )

    with open(args.out, "w") as f:
        f.write("x1,x2,x3,x4,x5,x6,x7,kind,y\n")
        for i in range(n):
            nums = ",".join(f"{v:.6f}" for v in x[i])
            f.write(f"{nums},{kind[i]},{y[i]:.6f}\n")


if __name__ == "__main__":
    main()
