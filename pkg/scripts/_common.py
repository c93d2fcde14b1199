"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

from coala.cli import resolve_seed


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="defaults to $COALA_SEED, then 42")
    return p


def finish(report, out: Path) -> None:
    csv_path, json_path = report.write(out)
    print(f"wrote {csv_path} and {json_path}")


__all__ = ["parser", "finish", "resolve_seed"]
