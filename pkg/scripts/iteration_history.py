"""Per-iteration h2 error of every restart at a single order."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _config import describe, parse_config
from renreduce.reduce import isrk_reduce
from renreduce.synth import generate


@dataclass
class Config:
    n: int = 100
    q: int = 100
    seed: int = 0
    order: int = 10
    restarts: int = 10
    max_iter: int = 100
    out: str = "results/history_n10.csv"


def main():
    cfg = parse_config(Config, __doc__)
    print(describe(cfg))
    pkg = generate(cfg.n, cfg.q, 1, 1, seed=cfg.seed)
    _, hist = isrk_reduce(pkg, cfg.order, restarts=cfg.restarts, max_iter=cfg.max_iter,
                          seed=(cfg.seed, cfg.order))
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        hist.to_csv(fh)
    for s in hist.restarts:
        h = hist.h2_series(s.restart)
        print(f"restart {s.restart}: iters={s.iterations:3d} converged={s.converged!s:5} "
              f"h2[1]={h[0]:.4e} h2[5]={h[min(5, h.size) - 1]:.4e} best={np.min(h):.4e}")
    print(f"best restart {hist.best_restart} iter {hist.best_iter}: relative h2 {hist.best_relative_h2:.4f}")


if __name__ == "__main__":
    main()
