"""Regularized vs unregularized solution distance as mu shrinks, against both bounds.

Runs a full-row-rank instance (k > n) and a rank-deficient one (k < n) and
prints the fitted log-log slope of each.
"""

import sys

from _common import finish, parser, resolve_seed

from coala import synthetic
from coala.analysis import convergence_study


def main(argv=None) -> int:
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--rank", type=int, default=3)
    args = p.parse_args(argv)
    seed = resolve_seed(args.seed)
    mu_grid = [10.0 ** -i for i in range(1, 9)]
    violations = 0
    for label, (n, k) in {"full_row_rank": (8, 32), "rank_deficient": (8, 5)}.items():
        W, X = synthetic.random_instance(seed, 12, n, k)
        rep = convergence_study(W, X, args.rank, mu_grid, seed=seed)
        finish(rep, args.out / label)
        print(f"{label}: slope {rep.rows[0]['slope']:.4f}, violations {rep.violations}")
        violations += rep.violations
    return 4 if violations else 0


if __name__ == "__main__":
    sys.exit(main())
