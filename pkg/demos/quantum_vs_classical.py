"""At omega = 0 the seed occupation N(t) equals that of the Domany-Kinzel
automaton on the site-DP line with p = sin^2(gamma). Compare the two.

    python demos/quantum_vs_classical.py [--gamma 0.9] [--t-max 20]
"""

import argparse

import numpy as np

from seedqca.dkca import DkConfig, dk_run
from seedqca.trajectory import RunConfig, run_trajectory


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--t-max", type=int, default=20)
    p.add_argument("--runs", type=int, default=20_000)
    args = p.parse_args()

    q = run_trajectory(RunConfig(gamma=[args.gamma], chi=[64],
                                 t_max=args.t_max), write=False)
    prob = np.sin(args.gamma) ** 2
    c = dk_run(DkConfig.site(prob, args.t_max, runs=args.runs))
    print(f"p = sin^2({args.gamma}) = {prob:.6f}, {args.runs} classical runs")
    print(f"{'t':>4} {'N quantum':>12} {'N classical':>12} {'z':>6}")
    for t, nq in zip(q.t, q.N):
        z = (nq - c.mean[t]) / c.stderr[t]
        print(f"{t:4d} {nq:12.6f} {c.mean[t]:12.6f} {z:6.2f}")


if __name__ == "__main__":
    main()
