"""Evolve a seed with unbounded bond dimension and compare every matrix
element of rho(t) with the dense reduced-dynamics oracle.

    python demos/oracle_check.py [--scheme odd_even] [--t-max 4]
"""

import argparse

from seedqca.evolution import StepScheme, apply_step, seed_state
from seedqca.gates import build_gate
from seedqca.mps import CompressionPolicy
from seedqca.oracle import (dense_seed, dense_step, dense_total_occupation,
                            mpo_max_abs_difference)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--gamma", type=float, default=1.034)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--scheme", default="alternating")
    p.add_argument("--t-max", type=int, default=5)
    args = p.parse_args()

    gate = build_gate(args.gamma, args.omega)
    scheme = StepScheme.from_label(args.scheme)
    s, d = seed_state(), dense_seed()
    for _ in range(args.t_max):
        s, diag = apply_step(s, gate, scheme, CompressionPolicy(chi=None))
        d = dense_step(d, gate, scheme)
        dev = mpo_max_abs_difference(s.rho, d.matrix)
        print(f"t={s.time} L={s.length} N={diag.occupation:.12f} "
              f"N_dense={dense_total_occupation(d):.12f} "
              f"max|rho - rho_dense|={dev:.1e} bond={max(s.rho.bond_dims)}")


if __name__ == "__main__":
    main()
