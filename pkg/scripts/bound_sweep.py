#!/usr/bin/env python3
"""Step-size sweep of the analytic discretization bias against its bound.

Same computation as `redsgs oracle-check`, but also prints the dyadic
decay ratios of the exact bias, which make the quadratic small-step
scaling on linear-Gaussian problems visible next to the O(n gamma) bound.

    python3 scripts/bound_sweep.py --levels 8
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

import redsgs as R
from redsgs.samplers import build_solver


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=8)
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--rho2", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    size = args.size
    shape = (size, size, 1)
    op = R.Circulant(R.gaussian_kernel(5 if size >= 5 else 3, 1.0))
    d = R.SymmetricConv(kernel=R.gaussian_kernel(3, 0.8), eps0=0.05)
    truth = R.synthetic_image(size, size, 1, seed=args.seed)
    y = R.degrade(truth, op, R.NoiseModel(args.sigma), R.RngStream(args.seed, 1))
    W = R.dense_denoiser_matrix(d, shape)
    m_g, M_g = d.hessian_bounds(size, size)
    solver = build_solver(op, shape, args.sigma, args.rho2)
    gamma_max = R.max_step_size(args.beta, M_g, args.rho2, m_g=m_g)
    target = R.axda_marginal(W, args.beta, args.rho2, op, args.sigma, y.ravel(),
                             shape, which="joint")

    print(f"{'gamma':>12} {'bias W2^2':>14} {'bound':>14} {'ratio to prev':>14}")
    prev = None
    for k in range(args.levels):
        gamma = gamma_max / 2**k
        law = R.lwsgs_stationary(W, args.beta, args.rho2, gamma, op, args.sigma,
                                 y.ravel(), shape)
        w2sq = R.w2_gaussians(target, law.joint) ** 2
        inputs = R.BoundInputs(n=size * size, beta=args.beta, rho2=args.rho2,
                               gamma=gamma, m_g=m_g, M_g=M_g,
                               q_inv_norm=solver.q_inv_norm)
        bound = R.evaluate_bounds(inputs, t=1, w2_init=0.0, which="bias")["bias_rhs"]
        ratio = "" if prev is None else f"{prev / w2sq:14.3f}"
        print(f"{gamma:12.6f} {w2sq:14.6e} {bound:14.6e} {ratio:>14}")
        prev = w2sq
    return 0


if __name__ == "__main__":
    sys.exit(run())
