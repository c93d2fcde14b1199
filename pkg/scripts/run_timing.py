"""Median wall-clock time of QR, TSQR and Gram routes to a square root of X X^T."""

import sys

from _common import finish, parser, resolve_seed

from coala.analysis import timing_study
from coala.cli import shape_list


def main(argv=None) -> int:
    p = parser(__doc__)
    p.add_argument("--shapes", type=shape_list, default=[(64, 4096), (128, 8192), (256, 32768)])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--chunk-rows", type=int, default=8192)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    rep = timing_study(args.shapes, repeats=args.repeats, chunk_rows=args.chunk_rows,
                       seed=resolve_seed(args.seed), workers=args.workers)
    finish(rep, args.out)
    for row in rep.rows:
        print(f"n={row['n']:<5} k={row['k']:<7} {row['strategy']:<16} median {row['median_seconds']:.4f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
