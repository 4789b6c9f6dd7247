"""Command-line runner: ``run <config.json>``, ``oracle <keys>``, ``report <run-dir>``.

Exit status: 0 pass, 1 gate failure (or drift alarm), 2 validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing as mp
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from . import experiments as ex
from .golden import DriftError, ORACLES, regenerate

OUT_ENV = "SKEWSTABLE_OUT"


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    code_version: str
    wall_time: float
    cell_seeds: dict
    censoring: dict
    files: list
    gates: list
    status: str
    started: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def code_version() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def sha256_file(p: Path) -> str:
    return hashlib.sha256(Path(p).read_bytes()).hexdigest()


@contextmanager
def worker_map(workers: int):
    """Order-preserving map over a process pool (builtin map for one worker)."""
    if workers <= 1:
        yield map
        return
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    with ctx.Pool(workers) as pool:
        yield lambda fn, items: pool.map(fn, list(items), chunksize=1)


def run(cfg: ex.ExperimentConfig, workers: int = 1) -> tuple[RunManifest, Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    t0 = time.perf_counter()
    raw = dict(cfg.raw, master_seed=cfg.master_seed, out=cfg.out)
    files, status = [], "complete"
    res = None
    try:
        with worker_map(workers) as mapper:
            res = ex.execute(cfg, mapper)
    except MemoryError as e:
        status = f"aborted: {type(e).__name__}"
    if res is not None:
        for name, rows in res.tables.items():
            p = out / f"{name}.csv"
            p.write_text(ex.to_csv(rows), newline="\n")
            meta = out / f"{name}.config.json"
            meta.write_text(json.dumps(dict(config=raw, table=name), indent=2, sort_keys=True) + "\n")
            files += [p, meta]
        for name, text in res.extra_files.items():
            p = out / name
            p.write_text(text, newline="\n")
            files.append(p)
        if cfg.gates and not res.passed:
            status = "gate-failure"
    man = RunManifest(
        config=raw, config_hash=config_hash(raw), code_version=code_version(),
        wall_time=time.perf_counter() - t0, cell_seeds=res.cell_seeds if res else {},
        censoring=res.censoring if res else {},
        files=[dict(path=p.name, sha256=sha256_file(p)) for p in files],
        gates=[dict(name=n, passed=bool(ok), detail=d) for n, ok, d in (res.gates if res else [])],
        status=status, started=started, extra=dict(workers=workers))
    (out / "manifest.json").write_text(man.to_json())
    return man, out


def report(run_dir) -> Path:
    """Markdown summary of every table in a run directory (tables are copied as plot-ready CSVs)."""
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "manifest.json").read_text())
    lines = [f"# Run report: {man['config'].get('kind')}", "",
             f"- config hash: `{man['config_hash']}`", f"- code version: `{man['code_version']}`",
             f"- status: {man['status']}", f"- wall time: {man['wall_time']:.1f} s", ""]
    if man["gates"]:
        lines += ["## Gates", ""] + [f"- {'PASS' if g['passed'] else 'FAIL'} {g['name']}: {g['detail']}"
                                     for g in man["gates"]] + [""]
    plot = run_dir / "plot"
    plot.mkdir(exist_ok=True)
    for entry in man["files"]:
        name = entry["path"]
        if not name.endswith(".csv") or name.startswith("path_"):
            continue
        text = (run_dir / name).read_text()
        (plot / name).write_text(text, newline="\n")
        rows = [r.split(",") for r in text.strip().splitlines()]
        lines += [f"## {name[:-4]}", "", "| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(_short(c) for c in r) + " |" for r in rows[1:]] + [""]
    out = run_dir / "report.md"
    out.write_text("\n".join(lines) + "\n")
    return out


def _short(cell: str) -> str:
    try:
        v = float(cell)
    except ValueError:
        return cell
    return cell if cell.lstrip("-").isdigit() else f"{v:.6g}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="skewstable", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override master_seed")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV} or the config's 'out')")
    o = sub.add_parser("oracle", help="regenerate golden values")
    o.add_argument("keys", nargs="+", help=f"'all' or any of: {', '.join(ORACLES)}")
    o.add_argument("--high-budget", action="store_true", help="acknowledge the expensive 10x-budget run")
    o.add_argument("--force", action="store_true", help="overwrite despite a drift alarm")
    o.add_argument("--store", default=None, help="golden store path (default: packaged store)")
    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("run_dir")
    args = ap.parse_args(argv)

    if args.cmd == "run":
        try:
            raw = json.loads(Path(args.config).read_text())
            if args.seed is not None:
                raw["master_seed"] = args.seed
            out = args.out or os.environ.get(OUT_ENV)
            if out:
                raw["out"] = out
            cfg = ex.ExperimentConfig.from_dict(raw)
            if cfg.kind == "report":
                print(report(ex.params_of(cfg)["run_dir"]))
                return 0
            man, out_dir = run(cfg, args.workers)
        except (ex.ConfigError, json.JSONDecodeError, FileNotFoundError) as e:
            print(f"validation error: {e}", file=sys.stderr)
            return 2
        for g in man.gates:
            print(f"{'PASS' if g['passed'] else 'FAIL'} {g['name']}: {g['detail']}")
        print(f"wrote {out_dir / 'manifest.json'} ({man.status})")
        return 0 if man.status == "complete" else 1
    if args.cmd == "oracle":
        if not args.high_budget:
            print("validation error: oracle runs use 10x budgets; pass --high-budget to proceed", file=sys.stderr)
            return 2
        kw = {} if args.store is None else dict(path=Path(args.store))
        try:
            fresh = regenerate(args.keys, high_budget=True, force=args.force, **kw)
        except KeyError as e:
            print(f"validation error: {e}", file=sys.stderr)
            return 2
        except DriftError as e:
            print(str(e), file=sys.stderr)
            return 1
        for k, v in fresh.items():
            print(f"{k} = {v['value']!r} (tol {v['tol']:g})")
        return 0
    if args.cmd == "report":
        try:
            print(report(args.run_dir))
        except FileNotFoundError as e:
            print(f"validation error: {e}", file=sys.stderr)
            return 2
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
