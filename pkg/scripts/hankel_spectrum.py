"""Hankel singular values of generated fixtures: how reducible is the LTI part?

Prints normalized singular values and the fraction of Hankel energy beyond
each order, averaged over seeds.
"""

from dataclasses import dataclass

import numpy as np

from _config import describe, parse_config
from renreduce.lti import controllability_gramian, extract_lti, observability_gramian
from renreduce.synth import generate


@dataclass
class Config:
    n: int = 100
    q: int = 100
    seeds: int = 5


def hankel_values(sys):
    X, Y = controllability_gramian(sys), observability_gramian(sys)
    return np.sqrt(np.sort(np.abs(np.linalg.eigvals(X @ Y)))[::-1])


def main():
    cfg = parse_config(Config, __doc__.splitlines()[0])
    print(describe(cfg))
    orders = [1, 2, 5, 10, 20, 50]
    for seed in range(cfg.seeds):
        hsv = hankel_values(extract_lti(generate(cfg.n, cfg.q, 1, 1, seed=seed).model))
        energy = hsv ** 2 / np.sum(hsv ** 2)
        tail = [np.sum(energy[k:]) for k in orders]
        print(f"seed {seed}: sigma_k/sigma_1 at k=" + " ".join(
            f"{k}:{hsv[k - 1] / hsv[0]:.3f}" for k in orders)
            + " | tail energy beyond k: " + " ".join(f"{k}:{t:.2f}" for k, t in zip(orders, tail)))


if __name__ == "__main__":
    main()
