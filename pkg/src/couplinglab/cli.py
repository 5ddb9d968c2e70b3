"""Command-line runner: ``run --config <path>`` and ``list-suites``."""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

from . import __version__, rng
from .config import ConfigError, ExperimentConfig, load_config
from .report import ROW_HEADER, CheckRow
from .suites import Context, checks_for, listing


@dataclass(frozen=True)
class RunManifest:
    version: str
    config_echo: list
    rows: list
    wall_times: list

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows if r.counts)

    def csv(self) -> str:
        return "\n".join([ROW_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def info(self) -> str:
        counted = [r for r in self.rows if r.counts]
        lines = [f"version = {self.version}", *self.config_echo,
                 f"checks = {len(self.rows)}",
                 f"counted_passed = {sum(r.ok for r in counted)}/{len(counted)}",
                 f"overall = {'pass' if self.passed else 'fail'}"]
        return "\n".join(lines) + "\n"

    def timing(self) -> str:
        rows = ["check_id,seconds"] + [f"{r.check_id},{w:.3f}" for r, w in zip(self.rows, self.wall_times)]
        return "\n".join(rows) + "\n"


def run(config: ExperimentConfig, log=sys.stderr) -> RunManifest:
    """Execute every check of the configured suite and write the outputs.

    ``manifest.csv`` and ``run_info.txt`` depend only on the config and the
    package version; wall times go to ``timing.csv``.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(config, out)
    rows, times = [], []
    for index, chk in enumerate(checks_for(config.suite)):
        seed = rng.derive_seed(config.seed, index)
        start = time.perf_counter()
        try:
            row = chk.fn(ctx, seed)
        except Exception:
            traceback.print_exc(file=log)
            row = CheckRow(chk.check_id, float("nan"), float("nan"), float("nan"), "error", 0, seed)
        times.append(time.perf_counter() - start)
        rows.append(row)
        print(f"{row.verdict:>17}  {row.check_id}  ({times[-1]:.1f} s)", file=log)
    manifest = RunManifest(__version__, config.echo(), rows, times)
    (out / "manifest.csv").write_text(manifest.csv())
    (out / "run_info.txt").write_text(manifest.info())
    (out / "timing.csv").write_text(manifest.timing())
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="couplinglab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configured suite")
    p_run.add_argument("--config", required=True, type=Path)
    sub.add_parser("list-suites", help="list suites and their checks")
    args = parser.parse_args(argv)

    if args.command == "list-suites":
        sys.stdout.write(listing())
        return 0
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        parser.error(f"invalid config: {exc}")
    manifest = run(config)
    print(f"overall: {'pass' if manifest.passed else 'fail'}  ({config.output_dir / 'manifest.csv'})")
    return 0 if manifest.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
