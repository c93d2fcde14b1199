"""Error at fixed mu as the gap sigma_r - sigma_(r+1) of WX is halved repeatedly."""

import sys

from _common import finish, parser, resolve_seed

from coala import synthetic
from coala.analysis import gap_study, halving_ratios


def main(argv=None) -> int:
    p = parser(__doc__)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--mu", type=float, default=1e-6)
    p.add_argument("--halvings", type=int, default=10)
    args = p.parse_args(argv)
    template = synthetic.SpectrumTemplate(seed=resolve_seed(args.seed))
    rep = gap_study(template, [2.0 ** -i for i in range(args.halvings + 1)], args.rank, args.mu)
    finish(rep, args.out)
    print("halving ratios:", " ".join(f"{q:.3f}" for q in halving_ratios(rep)))
    print(f"fitted exponent: {rep.rows[0]['exponent']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
