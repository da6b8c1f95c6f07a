"""How well does DDIM transport noise onto a known Gaussian?

    python3 scripts/transport_experiment.py [--mu 1.0] [--sigma 0.5] [--samples 10000]

Uses the closed-form optimal noise predictor for N(mu, sigma^2) data, so any
gap between the sampled and target moments comes from step count alone.
"""

import argparse
import time

from groundsynth import sampler


def sweep(mu: float, sigma: float, samples: int, steps=(5, 10, 20, 50, 100, 250, 1000), seed: int = 0):
    sched = sampler.make_schedule()
    den = sampler.oracle_gaussian_denoiser(mu, sigma, sched)
    rows = []
    for n in steps:
        t0 = time.perf_counter()
        z = sampler.sample_guided(den, None, (samples, 1, 1, 1), num_steps=n, seed=seed, sched=sched).ravel()
        rows.append((n, float(z.mean()), float(z.std()), time.perf_counter() - t0))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"target mean {args.mu:.4f}  std {args.sigma:.4f}")
    print(f"{'steps':>6} {'mean':>9} {'std':>9} {'std err %':>10} {'seconds':>8}")
    for n, m, s, dt in sweep(args.mu, args.sigma, args.samples, seed=args.seed):
        print(f"{n:>6} {m:>9.4f} {s:>9.4f} {100 * (s - args.sigma) / args.sigma:>10.2f} {dt:>8.3f}")


if __name__ == "__main__":
    main()
