"""Command-line entry point: ``clpwan list-technologies | validate | run``."""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .errors import ConfigError
from .radio import PROFILE_FIELDS, builtin_registry
from .report import comparison_csv, delay_chart, energy_chart
from .simulator import compare_modes

logger = logging.getLogger("clpwan")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def mode_slug(mode: str) -> str:
    return mode.replace(":", "-")


def _load_checked(path: str) -> tuple[dict, str]:
    """Load and validate; raises ConfigError carrying every diagnostic line."""
    raw, text = cfgmod.load(path)
    diags = cfgmod.validate(raw, text)
    if diags:
        raise ConfigError("\n".join(d.format(str(path)) for d in diags), key=diags[0].key)
    return raw, text


def cmd_list_technologies(config_path: str | None = None, fmt: str = "text", out=None) -> int:
    out = out or sys.stdout
    try:
        registry = builtin_registry()
        if config_path:
            raw, _ = _load_checked(config_path)
            registry = cfgmod.build_registry(cfgmod.effective_config(raw))
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if fmt == "json":
        out.write(json.dumps({"technologies": registry.to_overrides()}, indent=2) + "\n")
        return EXIT_OK
    cols = ("id",) + PROFILE_FIELDS
    rows = [[p.id] + ["-" if getattr(p, c) is None else str(getattr(p, c)) for c in PROFILE_FIELDS] for p in registry]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    for r in rows:
        out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")
    return EXIT_OK


def cmd_validate(config_path: str) -> int:
    try:
        raw, text = cfgmod.load(config_path)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    diags = cfgmod.validate(raw, text)
    for d in diags:
        print(d.format(str(config_path)), file=sys.stderr)
    if diags:
        return EXIT_CONFIG
    print(f"{config_path}: ok")
    return EXIT_OK


def _write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    """Stage every file next to ``out_dir`` and move them in only once all are written."""
    out_dir = out_dir.resolve()
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".clpwan-", dir=out_dir.parent))
    try:
        for name, content in files.items():
            with open(staging / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(content)
        if not out_dir.exists():
            os.replace(staging, out_dir)
            return
        for name in files:
            os.replace(staging / name, out_dir / name)
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)


def cmd_run(
    config_path: str | None,
    out_dir: str,
    modes: list[str] | None = None,
    seed: int | None = None,
    workload: str | None = None,
    manifest_path: str | None = None,
) -> int:
    try:
        if manifest_path:
            manifest = json.loads(Path(manifest_path).read_text("utf-8"))
            raw = manifest["config"]
            diags = cfgmod.validate(raw)
            if diags:
                raise ConfigError("\n".join(d.format(str(manifest_path)) for d in diags))
        else:
            raw, _ = _load_checked(config_path)
        raw = copy.deepcopy(raw)
        eff = cfgmod.effective_config(raw)
        modes = list(modes or eff["simulation"]["modes"])
        seed = eff["simulation"]["seed"] if seed is None else seed
        raw.setdefault("simulation", {})
        raw["simulation"]["seed"] = seed
        raw["simulation"]["modes"] = modes
        if workload:
            raw["workload"]["active"] = workload
        diags = cfgmod.validate(raw)
        if diags:
            raise ConfigError("\n".join(d.format("arguments") for d in diags))
        base = cfgmod.scenario_from_config(raw)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read {manifest_path or config_path}: {exc}", file=sys.stderr)
        return EXIT_IO

    logger.info("running %s on %s (seed %d)", ", ".join(modes), base.workload.name, seed)
    summaries, results = compare_modes(base, modes)
    output = cfgmod.effective_config(raw)["output"]
    files: dict[str, str] = {}
    for res in results:
        slug = mode_slug(res.mode)
        files[f"metrics-{slug}.csv"] = res.metrics_csv()
        if res.dataset is not None:
            if output["dataset"]:
                files[f"dataset-{slug}.jsonl"] = res.dataset.to_jsonl()
            if output["decisions_log"]:
                files[f"decisions-{slug}.csv"] = res.decisions_csv()
    files["comparison.csv"] = comparison_csv(summaries)
    if output["charts"]:
        files["delay.svg"] = delay_chart(summaries)
        files["energy.svg"] = energy_chart(summaries)
    manifest = {
        "config_sha256": cfgmod.config_hash(raw),
        "seed": seed,
        "modes": modes,
        "workload": base.workload.name,
        "files": sorted(files) + ["manifest.json"],
        "config": raw,
    }
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    try:
        _write_outputs(Path(out_dir), files)
    except OSError as exc:
        print(f"error: cannot write {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    for s in summaries:
        mean = "-" if s.mean_delay_s is None else f"{s.mean_delay_s:.6g}"
        print(f"{s.mode:16s} requests={s.requests} infeasible={s.infeasible} "
              f"mean_delay_s={mean} total_energy_j={s.total_energy_j:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clpwan", description="Hybrid LPWAN technology-selection simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-technologies", help="print the technology registry")
    p.add_argument("--config")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate", help="check a scenario config and print every violation")
    p.add_argument("config_pos", nargs="?", metavar="CONFIG")
    p.add_argument("--config")

    p = sub.add_parser("run", help="run the configured modes and write results")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--manifest", help="rerun exactly from a previous run's manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", action="append", dest="modes", metavar="hybrid|fixed:<TECH>")
    p.add_argument("--seed", type=int)
    p.add_argument("--workload", help="preset name overriding workload.active")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list-technologies":
        return cmd_list_technologies(args.config, args.format)
    if args.command == "validate":
        path = args.config or args.config_pos
        if not path:
            print("error: validate needs a config path", file=sys.stderr)
            return EXIT_IO
        return cmd_validate(path)
    return cmd_run(args.config, args.out, args.modes, args.seed, args.workload, args.manifest)


if __name__ == "__main__":
    sys.exit(main())
