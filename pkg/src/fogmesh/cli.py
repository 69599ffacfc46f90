"""Command line: `fogmesh run`, `fogmesh gen` and `fogmesh serve`."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .app_model import application_to_dict
from .scenario import Scenario, ScenarioError, load_scenario, run_scenario, tomllib
from .workload import GeneratorSpec, Pattern, generate, render_templates

log = logging.getLogger("fogmesh")

EXIT_OK, EXIT_REJECTED, EXIT_CONFIG = 0, 1, 2


def _engine_overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            over.update(tomllib.loads(path.read_text()).get("engine", {}))
        except FileNotFoundError:
            raise ScenarioError(f"config file {path} does not exist") from None
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    if getattr(args, "mode", None):
        over["operation_mode"] = args.mode
    return over


def _apply_overrides(sc: Scenario, args: argparse.Namespace) -> Scenario:
    over = _engine_overrides(args)
    for phase in sc.phases:
        clusters = {**phase.engine.get("clusters", {}), **over.get("clusters", {})}
        phase.engine = {**phase.engine, **over}
        if clusters:
            phase.engine["clusters"] = clusters
    if args.seed is not None:
        sc.seed = args.seed
    if args.seed_data:
        sc.seed_data = Path(args.seed_data)
    return sc


def cmd_run(args: argparse.Namespace) -> int:
    sc = _apply_overrides(load_scenario(args.scenario), args)
    result = run_scenario(sc)
    files = result.write(args.out_dir)
    for f in files:
        print(f)
    for c in result.comparisons():
        print(f"{c['service']}: {c['candidate']} improves on {c['baseline']} by {c['improvementPercent']:.1f}%")
    for name, phase in result.phases.items():
        for pr_id in phase.unexpected_rejections:
            print(f"{name}: {pr_id} rejected: {phase.federation.reasons.get(pr_id, '')}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_REJECTED


def cmd_gen(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(
        pattern=Pattern(args.pattern),
        length=args.length,
        fan_out=args.fan_out,
        recipe=tuple(int(x) for x in args.recipe.split(",")),
        app_id=args.app_id,
        rng_seed=args.seed if args.seed is not None else 0,
    )
    spec.check()
    app = generate(spec)
    doc = json.dumps(application_to_dict(app), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(doc)
        print(args.out)
        return EXIT_OK
    out = Path(args.out_dir)
    (out / "applications").mkdir(parents=True, exist_ok=True)
    app_path = out / "applications" / f"{app.app_id}.json"
    app_path.write_text(doc)
    tpl_path = out / "templates.json"
    templates = json.loads(tpl_path.read_text()) if tpl_path.exists() else {}
    templates.update(render_templates(app))
    tpl_path.write_text(json.dumps(templates, indent=2, sort_keys=True) + "\n")
    print(app_path)
    print(tpl_path)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        import uvicorn
    except ImportError:
        print("serve needs uvicorn: pip install 'fogmesh[serve]'", file=sys.stderr)
        return EXIT_CONFIG
    from .api.service import create_app
    from .federation import Federation
    from .scenario import _applications, engine_configs
    from .stores import seed_stores

    sc = _apply_overrides(load_scenario(args.scenario), args)
    topology = sc.build_topology()
    fed = Federation(topology, engine_configs(topology, sc.phases[0].engine, sc.seed))
    if sc.seed_data is not None:
        seed_stores(sc.seed_data, fed.meta, fed.templates)
    fed.seed(_applications(sc))
    uvicorn.run(create_app(fed, args.cluster), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogmesh", description="Fog/cloud microservice placement simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="TOML file whose [engine] table overrides the scenario's")
        sp.add_argument("--mode", choices=["distributed", "centralised"], help="operation mode for every engine")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--seed-data", help="directory with applications/*.json and templates.json")

    run = sub.add_parser("run", help="run a scenario to quiescence and write metrics")
    run.add_argument("scenario")
    run.add_argument("--out-dir", default="out")
    common(run)
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="generate a synthetic application into a seed directory")
    gen.add_argument("--pattern", choices=[x.value for x in Pattern], default="chained")
    gen.add_argument("--length", type=int, default=3)
    gen.add_argument("--fan-out", type=int, default=2)
    gen.add_argument("--recipe", default="1,2")
    gen.add_argument("--app-id", default="genapp")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", help="write only the application document to this file")
    gen.add_argument("--out-dir", default="seed", help="seed directory to add the application and templates to")
    gen.set_defaults(func=cmd_gen)

    serve = sub.add_parser("serve", help="expose one cluster's control engine over HTTP")
    serve.add_argument("scenario", help="scenario file supplying topology, engine settings and applications")
    serve.add_argument("--cluster", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    common(serve)
    serve.set_defaults(func=cmd_serve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
