"""Plain gradient-descent training of a small network on synthetic blobs.

Bright disc = class 1, dark disc = class 0, on speckle. This only shows the
training loop moving the loss; it says nothing about clinical accuracy.

    python3 scripts/train_demo.py --steps 1000 --size 32 --out demo_weights.bin
"""

import argparse
from dataclasses import dataclass

import numpy as np

from nodeval.tinycnn import CnnModel, forward, save_weights, train_step


@dataclass(frozen=True)
class TrainConfig:
    size: int = 32
    channels: tuple = (4, 4, 8, 8, 8, 8)
    steps: int = 1000
    lr: float = 0.01
    seed: int = 0
    eval_cases: int = 100


def make_case(rng, size):
    y = int(rng.integers(0, 2))
    img = rng.rayleigh(0.15, (size, size))
    cy, cx = rng.integers(size // 4, 3 * size // 4, 2)
    r = rng.integers(size // 8, size // 4)
    yy, xx = np.mgrid[:size, :size]
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    img[disc] = 0.8 if y else 0.05
    return np.clip(img, 0, 1), y


def accuracy(model, rng, n, size):
    hits = 0
    for _ in range(n):
        x, y = make_case(rng, size)
        hits += (forward(model, x) >= 0.5) == y
    return hits / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=TrainConfig.steps)
    ap.add_argument("--size", type=int, default=TrainConfig.size)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr)
    ap.add_argument("--seed", type=int, default=TrainConfig.seed)
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = TrainConfig(size=args.size, steps=args.steps, lr=args.lr, seed=args.seed)

    rng = np.random.default_rng(cfg.seed)
    model = CnnModel.random(cfg.channels, input_size=cfg.size, seed=cfg.seed)
    print(f"accuracy before: {accuracy(model, np.random.default_rng(999), cfg.eval_cases, cfg.size):.2f}")
    window = []
    for step in range(1, cfg.steps + 1):
        x, y = make_case(rng, cfg.size)
        window.append(train_step(model, x, y, cfg.lr, dropout_seed=cfg.seed * 100003 + step))
        if step % 50 == 0:
            print(f"step {step:5d}  mean loss (last 50) {np.mean(window[-50:]):.4f}")
    print(f"accuracy after:  {accuracy(model, np.random.default_rng(999), cfg.eval_cases, cfg.size):.2f}")
    if args.out:
        save_weights(model, args.out)
        print(f"weights written to {args.out} (load with input_size={cfg.size})")


if __name__ == "__main__":
    main()
