"""Monte Carlo checks of the interval and test procedures.

    python3 scripts/run_simulations.py coverage --sims 500 --estimator binormal
    python3 scripts/run_simulations.py calibration --sims 2000
    python3 scripts/run_simulations.py variance --sims 50

Each experiment is configured by a dataclass; results are printed as JSON.
"""

import argparse
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from nodeval.rocstats import Estimator, ScoreSample
from nodeval.significance import (bootstrap_replicates, delong_paired_test, delong_variance,
                                  stratified_bootstrap_ci)


@dataclass(frozen=True)
class SimConfig:
    sims: int = 500
    auc: float = 0.69
    n_pos: int = 147
    n_neg: int = 231
    replicates: int = 2000
    level: float = 0.95
    estimator: str = "binormal"
    correlation: float = 0.5
    seed: int = 2024


def binormal(rng, cfg: SimConfig) -> ScoreSample:
    d = math.sqrt(2.0) * norm.ppf(cfg.auc)
    return ScoreSample(np.r_[np.zeros(cfg.n_neg), np.ones(cfg.n_pos)],
                       np.r_[rng.normal(0, 1, cfg.n_neg), rng.normal(d, 1, cfg.n_pos)])


def coverage(cfg: SimConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    hits, widths = 0, []
    for k in range(cfg.sims):
        ci = stratified_bootstrap_ci(binormal(rng, cfg), Estimator(cfg.estimator), cfg.replicates,
                                     cfg.level, seed=cfg.seed + k)
        hits += ci.low <= cfg.auc <= ci.high
        widths.append(ci.high - ci.low)
    p = hits / cfg.sims
    return {"coverage": p, "mc_se": math.sqrt(p * (1 - p) / cfg.sims), "mean_width": float(np.mean(widths))}


def calibration(cfg: SimConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    labels = np.r_[np.zeros(cfg.n_neg), np.ones(cfg.n_pos)]
    shift = math.sqrt(2.0) * norm.ppf(cfg.auc) * labels
    r = cfg.correlation
    pvals = []
    for _ in range(cfg.sims):
        u = rng.normal(size=labels.size)
        a = shift + math.sqrt(r) * u + math.sqrt(1 - r) * rng.normal(size=labels.size)
        b = shift + math.sqrt(r) * u + math.sqrt(1 - r) * rng.normal(size=labels.size)
        pvals.append(delong_paired_test(ScoreSample(labels, a), ScoreSample(labels, b)).p)
    pvals = np.array(pvals)
    return {f"reject@{alpha}": float((pvals < alpha).mean()) for alpha in (0.01, 0.05, 0.10)}


def variance(cfg: SimConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    rel = []
    for k in range(cfg.sims):
        s = binormal(rng, cfg)
        aucs, _ = bootstrap_replicates(s, Estimator.EMPIRICAL, cfg.replicates, seed=cfg.seed + k)
        rel.append(abs(delong_variance(s) - aucs.var(ddof=1)) / aucs.var(ddof=1))
    return {"median_rel_diff": float(np.median(rel)), "max_rel_diff": float(np.max(rel))}


EXPERIMENTS = {"coverage": coverage, "calibration": calibration, "variance": variance}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    defaults = SimConfig()
    for name, value in asdict(defaults).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(value), default=value)
    args = vars(ap.parse_args())
    experiment = args.pop("experiment")
    cfg = SimConfig(**args)
    t0 = time.perf_counter()
    result = EXPERIMENTS[experiment](cfg)
    print(json.dumps({"experiment": experiment, "config": asdict(cfg), "result": result,
                      "seconds": round(time.perf_counter() - t0, 2)}, indent=2))


if __name__ == "__main__":
    main()
