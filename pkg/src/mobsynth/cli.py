"""Command-line entry point: ``mobsynth {init-demo,plan,simulate,ingest,evaluate,report}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from .backend import BackendKind, load_templates, make_backend
from .config import ABLATIONS, SimulationConfig, load_config, resolve
from .core import RngStream
from .engine import Environment, manifest_digest, obtain_plan, read_trajectories, simulate_population, write_jsonl, write_run
from .errors import ConfigError, MetricError, MobsynthError
from .evaluation import evaluate
from .ingest import diaries_to_trajectories, ingest_diaries, ingest_profiles
from .planner import plan_to_json
from .spatial import POIDatabase

log = logging.getLogger("mobsynth")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(MobsynthError):
    pass


def file_digest(path: Path | None) -> str | None:
    if path is None or not path.is_file():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------- setup


def _load_run(args) -> tuple[SimulationConfig, Path, dict]:
    if not args.config:
        raise UserError("--config is required")
    cfg, base = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    if getattr(args, "backend", None):
        cfg = cfg.model_copy(update={"backend": cfg.backend.model_copy(update={"kind": args.backend})})
    if getattr(args, "ablation", None):
        cfg = cfg.with_ablation(args.ablation)
    digests = {"config": file_digest(Path(args.config))}
    return cfg, base, digests


def _environment(cfg: SimulationConfig, base: Path, digests: dict) -> Environment:
    pois_path = resolve(base, cfg.pois_path)
    db = POIDatabase.load(pois_path)
    digests["pois"] = file_digest(pois_path)
    b = cfg.backend
    script = resolve(base, b.script_path)
    if b.kind == "mock":
        digests["mock_script"] = file_digest(script)
    kind = BackendKind(
        kind=b.kind,
        endpoint_url=b.endpoint_url,
        model_name=b.model_name,
        api_key_env=b.api_key_env,
        script_path=str(script) if script else None,
        max_in_flight=b.max_in_flight,
    )
    templates = load_templates(resolve(base, b.template_dir))
    return Environment(db, cfg, make_backend(kind), templates)


def _profiles(cfg: SimulationConfig, base: Path, digests: dict, agents: int | None, out: Path | None):
    path = resolve(base, cfg.profiles_path)
    profiles, report = ingest_profiles(path)
    digests["profiles"] = file_digest(path)
    if out is not None:
        (out / "profile_ingest.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if not profiles:
        raise UserError(f"no usable profiles in {path}")
    meo = cfg.meo()
    unknown = sorted({p.occupation for p in profiles if p.occupation not in meo})
    if unknown:
        raise ConfigError(f"occupations without MEO entries: {unknown}")
    profiles.sort(key=lambda p: p.id)
    return profiles[:agents] if agents else profiles


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- commands


def cmd_init_demo(args) -> int:
    from .demo import write_demo

    out = write_demo(args.out_dir, n_agents=args.agents or 100, seed=args.seed or 0)
    print(str(out / "config.json"))
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg, base, digests = _load_run(args)
    out = _out_dir(args)
    env = _environment(cfg, base, digests)
    profiles = _profiles(cfg, base, digests, args.agents, out)
    narratives, plans = [], []
    for p in profiles:
        for day in range(cfg.day_count):
            plan, narrative, report, fallback = obtain_plan(p, env, RngStream(cfg.seed, p.id, day))
            if narrative is not None:
                narratives.append({"agent_id": p.id, "day": day, **narrative.to_dict()})
            row = {"agent_id": p.id, "day": day, "fallback": fallback}
            if report is not None:
                row["parse"] = report.to_dict(p.id)
            row["plan"] = plan_to_json(plan)
            plans.append(row)
    write_jsonl(out / "narratives.jsonl", narratives)
    write_jsonl(out / "plans.jsonl", plans)
    manifest = {
        "command": "plan",
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "plan_source": cfg.plan_source,
        "inputs": digests,
        "counts": {"plans": len(plans), "fallback_plans": sum(1 for r in plans if r["fallback"])},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(json.dumps(manifest["counts"]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, base, digests = _load_run(args)
    out = _out_dir(args)
    env = _environment(cfg, base, digests)
    profiles = _profiles(cfg, base, digests, args.agents, out)
    artifacts = simulate_population(profiles, env, digests)
    artifacts.manifest["command"] = "simulate"
    artifacts.manifest["ablation"] = args.ablation or "full"
    artifacts.manifest["manifest_digest"] = manifest_digest(artifacts.manifest)
    write_run(artifacts, out)
    print(json.dumps(artifacts.manifest["counts"]))
    return EXIT_OK


def _read_population(path: str, vocabulary) -> list:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"file not found: {p}")
    first = ""
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                first = line
                break
    if not first:
        raise UserError(f"{p} is empty")
    try:
        head = json.loads(first)
    except json.JSONDecodeError as exc:
        raise UserError(f"{p}: not JSON lines ({exc})") from exc
    if "entries" in head:
        diaries, report = ingest_diaries(p, vocabulary)
        if report.rejected:
            log.warning("%s: %d diaries rejected", p, report.rejected)
        return diaries_to_trajectories(diaries)
    try:
        return read_trajectories(p)
    except (KeyError, ValueError) as exc:
        raise UserError(f"{p}: bad trajectory record ({exc})") from exc


def _vocabulary(args):
    if getattr(args, "config", None):
        cfg, _ = load_config(args.config)
        return cfg.categories
    return SimulationConfig().categories


def _evaluate(args):
    vocab = _vocabulary(args)
    gen = _read_population(args.generated, vocab)
    ref = _read_population(args.reference, vocab)
    if not gen or not ref:
        raise UserError("both populations must contain at least one trajectory")
    report = evaluate(gen, ref, vocab)
    payload = report.to_dict(include_distributions=False)
    payload["inputs"] = {
        "generated": file_digest(Path(args.generated)),
        "reference": file_digest(Path(args.reference)),
    }
    return report, payload


def cmd_evaluate(args) -> int:
    report, payload = _evaluate(args)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    report, payload = _evaluate(args)
    out = _out_dir(args)
    report.write_csvs(out)
    full = report.to_dict(include_distributions=True)
    full["inputs"] = payload["inputs"]
    (out / "report.json").write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_ingest(args) -> int:
    vocab = _vocabulary(args)
    db = POIDatabase.load(args.pois) if args.pois else None
    diaries, report = ingest_diaries(args.diaries, vocab, db)
    out = _out_dir(args)
    write_jsonl(out / "reference_trajectories.jsonl", (t.to_dict() for t in diaries_to_trajectories(diaries)))
    write_jsonl(out / "diaries_clean.jsonl", (d.to_dict() for d in diaries))
    (out / "ingest_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(json.dumps({"accepted": report.accepted, "rejected": report.rejected}))
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobsynth", description="Synthetic daily mobility generation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p, ablation=True):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--backend", choices=("remote", "mock"))
        p.add_argument("--agents", type=int)
        if ablation:
            p.add_argument("--ablation", choices=ABLATIONS)

    p = sub.add_parser("init-demo", help="write a synthetic city, population and mock script")
    p.add_argument("--out-dir", default="demo")
    p.add_argument("--agents", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_demo)

    p = sub.add_parser("plan", help="generate narratives and plans only")
    run_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate agent-days and write trajectories")
    run_flags(p)
    p.set_defaults(func=cmd_simulate)

    for name, func, help_ in (
        ("evaluate", cmd_evaluate, "compare two populations"),
        ("report", cmd_report, "write per-metric distribution CSVs"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--generated", required=True)
        p.add_argument("--reference", required=True)
        p.add_argument("--config", help="config supplying the category vocabulary")
        if name == "evaluate":
            p.add_argument("--out", help="write the JSON report here")
        else:
            p.add_argument("--out-dir", default="report")
        p.set_defaults(func=func)

    p = sub.add_parser("ingest", help="clean ground-truth diaries into reference trajectories")
    p.add_argument("--diaries", required=True)
    p.add_argument("--pois")
    p.add_argument("--config")
    p.add_argument("--out-dir", default="reference")
    p.set_defaults(func=cmd_ingest)
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except (UserError, ConfigError, MetricError, FileNotFoundError) as exc:
        return _fail("user", exc, EXIT_USER)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        return _fail("internal", exc, EXIT_INTERNAL)
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
