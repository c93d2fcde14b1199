"""Per-method relative error in reduced precision on ill-conditioned activations."""

import sys

import numpy as np
from _common import finish, parser, resolve_seed

from coala import synthetic
from coala.analysis import gram_loss_example, stability_study


def main(argv=None) -> int:
    p = parser(__doc__)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--condition", type=float, default=1e8)
    p.add_argument("--precision", default="f32", choices=["f32", "f64"])
    args = p.parse_args(argv)
    seed = resolve_seed(args.seed)
    W = np.random.default_rng(seed).standard_normal((args.n, args.n))
    X = synthetic.ill_conditioned_activations(seed + 1, args.n, args.k, args.condition)
    ranks = [r for r in (1, 2, 4, 8, 16) if r <= args.n]
    rep = stability_study(W, X, ranks, args.precision, seed=seed)
    finish(rep, args.out)
    for row in rep.rows:
        print(f"r={row['rank']:<3} {row['method']:<14} rel_error={row['rel_error']:.3e} {row['note']}")
    ex = gram_loss_example(args.precision)
    print(f"2x2 example: sigma2 true {ex['sigma2_true']:.4e}, via Gram {ex['sigma2_gram']:.4e}, "
          f"via QR error {ex['qr_error']:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
