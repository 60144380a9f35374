"""Output of the full and a reduced REN for one white-noise input."""

import csv
from dataclasses import dataclass
from pathlib import Path

from _config import describe, parse_config
from renreduce.reduce import isrk_reduce
from renreduce.simulate import responses, seq_norm, white_noise_inputs
from renreduce.synth import generate


@dataclass
class Config:
    n: int = 100
    q: int = 100
    seed: int = 0
    order: int = 10
    restarts: int = 10
    input_index: int = 0
    horizon: int = 1000
    out: str = "results/responses_n10.csv"


def main():
    cfg = parse_config(Config, __doc__)
    print(describe(cfg))
    pkg = generate(cfg.n, cfg.q, 1, 1, seed=cfg.seed)
    red, _ = isrk_reduce(pkg, cfg.order, restarts=cfg.restarts, seed=(cfg.seed, cfg.order))
    U = white_noise_inputs(10, cfg.horizon, 1, seed=cfg.seed)[cfg.input_index:cfg.input_index + 1]
    y, yr = responses(pkg, U)[0, :, 0], responses(red, U)[0, :, 0]
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "y_full", "y_reduced"])
        for t in range(cfg.horizon):
            w.writerow([t, U[0, t, 0], y[t], yr[t]])
    print(f"C = {100 * seq_norm(y - yr) / seq_norm(y):.4g}%")


if __name__ == "__main__":
    main()
