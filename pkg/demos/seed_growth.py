"""Grow a seed at the omega = 0 critical angle and print N(t) and theta(t).

    python demos/seed_growth.py [--gamma 0.997] [--chi 32] [--t-max 30]
"""

import argparse

from seedqca.analysis import effective_exponent
from seedqca.trajectory import RunConfig, run_trajectory


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--gamma", type=float, default=0.997)
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--chi", type=int, default=32)
    p.add_argument("--t-max", type=int, default=30)
    args = p.parse_args()

    cfg = RunConfig(omega=args.omega, gamma=[args.gamma], chi=[args.chi],
                    t_max=args.t_max)
    s = run_trajectory(cfg, write=False)
    theta = dict(effective_exponent(s))
    print(f"{'t':>4} {'L':>4} {'N(t)':>12} {'theta(t)':>9} {'bond':>5}")
    for r in s.rows:
        th = theta.get(r["t"])
        th = f"{th:9.4f}" if th is not None else " " * 9
        print(f"{r['t']:4d} {r['L']:4d} {r['N']:12.6f} {th} "
              f"{r['max_bond']:5d}")
    print(f"cumulative trace correction "
          f"{s.notes['cumulative_trace_correction']:.2e}")


if __name__ == "__main__":
    main()
