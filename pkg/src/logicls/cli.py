"""``logicls`` command line: validate, compile, generate, augment, classify, evaluate, simulate.

Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime or I/O, 4 remote protocol.
Defaults for any subcommand may come from a TOML or JSON file given by
``--config`` or the ``LOGICLS_CONFIG`` environment variable, one table per
subcommand (e.g. ``[classify] jobs = 4``); flags override them.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from . import catalog
from .aggregator import UnanswerablePolicy, Verdict, classify, classify_end2end, load_verdict_labels
from .answerer import RemoteConfig, RemoteProvider, provider_from_string
from .augmentor import OPS, AugmentConfig, build_augmented_set, cot_samples
from .errors import LogiclsError, ResponseFormatError, SceneError, TransportError
from .generate import generate_scene, realizable_sets
from .lang import DSLError, ScenarioSpec, compile_spec, parse
from .manifest import DatasetManifest, FileEntry, ScenarioEntry, load_manifest, save_manifest, validate_manifest
from .metrics import evaluate_dataset
from .resampler import SimConfig, default_config, simulate_training
from .scene import Scene, atomic_write, load_scene

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_REMOTE = 0, 1, 2, 3, 4
CONFIG_ENV = "LOGICLS_CONFIG"


class UsageError(Exception):
    pass


class ValidationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage problems are 1 here
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _plural(n: int, word: str, many: str | None = None) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {many or word + 's'}"


def load_config_file(path: str | os.PathLike[str]) -> dict[str, Any]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ValidationFailed(f"{path}: {exc}") from None


def _dump(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _safe_name(ref: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", ref).strip("_")


# --- spec loading -------------------------------------------------------------

def load_spec_arg(value: str) -> ScenarioSpec:
    """A path to a constraint file, or the name of a bundled scenario."""
    path = Path(value)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        try:
            return parse(text)
        except DSLError as exc:
            raise ValidationFailed(f"{path}:{exc}") from None
    try:
        return catalog.load_scenario(value)
    except KeyError:
        raise UsageError(f"{value!r} is neither a constraint file nor a bundled scenario") from None


def _specs_for(manifest: DatasetManifest, explicit: Sequence[str] | None) -> dict[str, ScenarioSpec]:
    specs = {s.name: s for s in (load_spec_arg(v) for v in (explicit or []))}
    for name, entry in manifest.scenarios.items():
        if name in specs:
            continue
        if entry.spec:
            candidate = manifest.root / entry.spec
            specs[name] = load_spec_arg(str(candidate) if candidate.is_file() else Path(entry.spec).stem)
        else:
            specs[name] = load_spec_arg(name)
    return specs


def _scenes(manifest: DatasetManifest, split: str) -> list[tuple[str, Scene]]:
    out = []
    for name in sorted(manifest.scenarios):
        for f in manifest.scenarios[name].files.get(split, []):
            out.append((name, load_scene(manifest.resolve(f))))
    return out


# --- subcommands --------------------------------------------------------------

def cmd_validate(args) -> int:
    n_scen = n_con = n_sub = 0
    failed = False
    for value in args.files:
        path = Path(value)
        if not path.is_file():
            raise UsageError(f"no such file: {value}")
        try:
            spec = parse(path.read_text(encoding="utf-8"))
            program = compile_spec(spec)
        except (DSLError, LogiclsError) as exc:
            print(f"{path}:{exc}", file=sys.stderr)
            failed = True
            continue
        n_scen += 1
        n_con += len(spec.constraints)
        n_sub += len(program)
    print(f"{_plural(n_scen, 'scenario')}, {_plural(n_con, 'constraint')}, {_plural(n_sub, 'subquery', 'subqueries')}")
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_compile(args) -> int:
    spec = load_spec_arg(args.spec)
    program = compile_spec(spec)
    out = Path(args.out)
    if out.suffix != ".json":
        out = out / "subqueries.json"
    atomic_write(out, program.to_json())
    print(f"{spec.name}: {_plural(len(program), 'subquery', 'subqueries')} -> {out}")
    return EXIT_OK


def cmd_gen_scenes(args) -> int:
    spec = load_spec_arg(args.spec)
    if args.split == "train" and args.multi:
        raise ValidationFailed("multi-anomaly scenes belong to the test split only")
    sets = realizable_sets(spec)
    singles = [s for s in sets if len(s) == 1]
    multis = [s for s in sets if len(s) >= 2]
    if args.multi and not multis:
        raise ValidationFailed(f"{spec.name} has no pair of categories that can occur together")
    rng = random.Random(f"{args.seed}|{spec.name}|{args.split}")
    plan = [frozenset()] * args.normal + [rng.choice(singles) for _ in range(args.single)]
    plan += [rng.choice(multis) for _ in range(args.multi)]

    root = Path(args.out)
    manifest_path = root / "manifest.json"
    manifest = load_manifest(manifest_path) if manifest_path.exists() else DatasetManifest(root=root)
    entries = []
    base_seed = rng.getrandbits(31)
    for i, injected in enumerate(plan):
        rel = f"{spec.name}/{args.split}/{spec.name}_{args.split}_{i:04d}.json"
        scene = generate_scene(spec, injected, seed=base_seed + i, image_ref=rel)
        atomic_write(root / rel, scene.to_json())
        entries.append(FileEntry(rel, tuple(scene.gold_labels.to_list())))

    entry = manifest.scenarios.get(spec.name) or ScenarioEntry(spec.name)
    entry.files[args.split] = entries
    counts = {"normal": args.normal, "single_anomaly": args.single}
    if args.split == "test":
        counts["multi_anomaly"] = args.multi
    entry.counts[args.split] = counts
    if entry.spec is None:
        spec_file = Path(args.spec)
        entry.spec = os.path.relpath(spec_file.resolve(), root.resolve()) if spec_file.is_file() else f"{spec.name}.lcs"
    manifest.scenarios[spec.name] = entry
    report = validate_manifest(manifest)
    if not report.ok:
        raise ValidationFailed("; ".join(str(v) for v in report.violations))
    save_manifest(manifest, manifest_path)
    print(f"{spec.name}/{args.split}: {len(plan)} scenes -> {root}")
    return EXIT_OK


def cmd_augment(args) -> int:
    spec = load_spec_arg(args.spec)
    manifest = load_manifest(args.manifest)
    scenes = [s for name, s in _scenes(manifest, args.split) if name == spec.name]
    if not scenes:
        raise ValidationFailed(f"manifest has no {args.split} scenes for {spec.name}")
    ops = tuple(o.strip() for o in args.ops.split(",") if o.strip())
    bad = [o for o in ops if o not in OPS]
    if bad:
        raise UsageError(f"unknown augmentation op(s) {bad}; choose from {', '.join(OPS)}")
    config = AugmentConfig(ops=ops, multiplicity=args.multiplicity, n_paraphrases=args.n_paraphrases)
    samples = build_augmented_set(cot_samples(scenes, spec), spec, config, seed=args.seed)

    out = Path(args.out)
    lines = []
    written: set[str] = set()
    for s in samples:
        row = s.to_dict()
        if s.op.startswith("cutpaste") and s.scene is not None:
            rel = f"scenes/{_safe_name(s.scene_ref)}.json"
            if rel not in written:
                atomic_write(out / rel, s.scene.to_json())
                written.add(rel)
            row["scene_file"] = rel
        lines.append(json.dumps(row, sort_keys=True) + "\n")
    atomic_write(out / "samples.jsonl", "".join(lines))
    print(f"{spec.name}: {len(samples)} augmented samples, {len(written)} edited scenes -> {out}")
    return EXIT_OK


def _remote_config(args) -> RemoteConfig:
    return RemoteConfig.from_mapping(getattr(args, "remote", None))


def _classify_all(args, manifest: DatasetManifest, specs: dict[str, ScenarioSpec]) -> list[tuple[Scene, Verdict]]:
    scenes = _scenes(manifest, args.split)
    providers = {}
    exemplars = {}
    for name in {n for n, _ in scenes}:
        exemplars[name] = generate_scene(specs[name], (), seed=0, image_ref=f"exemplar://{name}")
        try:
            providers[name] = provider_from_string(
                args.answerer, exemplar_scene=exemplars[name], remote_config=_remote_config(args)
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.mode == "end2end" and not all(isinstance(p, RemoteProvider) for p in providers.values()):
        raise UsageError("--mode end2end needs a remote:<url> answerer")

    def run(item: tuple[str, Scene]) -> tuple[Scene, Verdict]:
        name, scene = item
        if args.mode == "end2end":
            return scene, classify_end2end(scene, specs[name], providers[name], exemplars[name])
        return scene, classify(scene, specs[name], providers[name], args.policy)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        return list(pool.map(run, scenes))


def cmd_classify(args) -> int:
    manifest = load_manifest(args.manifest)
    specs = _specs_for(manifest, args.spec)
    results = _classify_all(args, manifest, specs)
    rows = []
    for scene, verdict in results:
        row = verdict.to_dict(scene.image_ref)
        row["scenario"] = scene.scenario
        rows.append(json.dumps(row, sort_keys=True) + "\n")
    atomic_write(args.out, "".join(rows))
    anomalous = sum(1 for _, v in results if not v.labels.is_normal)
    print(f"{len(results)} scenes classified ({anomalous} anomalous) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    specs = _specs_for(manifest, args.spec)
    if args.verdicts:
        report = evaluate_dataset(manifest, specs, predictions=load_verdict_labels(args.verdicts))
    else:
        try:
            provider = provider_from_string(args.answerer, remote_config=_remote_config(args))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        report = evaluate_dataset(manifest, specs, provider, policy=args.policy, jobs=args.jobs)
    sys.stdout.write(report.table())
    if args.json_out:
        atomic_write(args.json_out, report.to_json())
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    data: dict[str, Any] = {}
    if args.config_file:
        data = load_config_file(args.config_file)
        data = data.get("simulate", data)
    try:
        cfg = SimConfig.from_mapping(data) if data else default_config()
    except TypeError as exc:
        raise ValidationFailed(f"bad simulation config: {exc}") from None
    return SimConfig(**{**cfg.__dict__, "seeds": tuple(args.seed + s for s in cfg.seeds)})


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    samplers = ("uniform", "difficulty") if args.sampler == "both" else (args.sampler,)
    reports = {s: simulate_training(cfg.with_sampler(s)) for s in samplers}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header_done = False
    for s in samplers:
        rows = reports[s].csv_rows()
        writer.writerows(rows if not header_done else rows[1:])
        header_done = True
    out = Path(args.out)
    summary: dict[str, Any] = {s: reports[s].summary() for s in samplers}
    if len(samplers) == 2:
        u, d = reports["uniform"].final_max_errors, reports["difficulty"].final_max_errors
        summary["difficulty_wins"] = sum(1 for a, b in zip(d, u) if a < b)
        summary["paired_seeds"] = len(u)
    atomic_write(out / "trajectories.csv", buf.getvalue())
    atomic_write(out / "summary.json", _dump(summary))
    for s in samplers:
        print(f"{s}: mean final max-group error {summary[s]['mean_final_max_error']:.4f}")
    if "difficulty_wins" in summary:
        print(f"difficulty-aware lower in {summary['difficulty_wins']}/{summary['paired_seeds']} seeds")
    return EXIT_OK


# --- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="logicls", description="Constraint-verification logical anomaly classifier.")
    p.add_argument("--config", help=f"TOML/JSON defaults file (also ${CONFIG_ENV})")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("validate", help="parse and compile constraint files")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("compile", help="write the subquery program of a scenario")
    s.add_argument("spec", help="constraint file or bundled scenario name")
    s.add_argument("--out", default=".", help="output directory or .json path")
    s.set_defaults(func=cmd_compile)

    s = sub.add_parser("gen-scenes", help="generate labelled synthetic scenes and a manifest")
    s.add_argument("--spec", required=True)
    s.add_argument("--normal", type=int, default=0)
    s.add_argument("--single", type=int, default=0)
    s.add_argument("--multi", type=int, default=0)
    s.add_argument("--split", choices=("train", "test"), default="test")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_scenes)

    s = sub.add_parser("augment", help="build an augmented training set")
    s.add_argument("--spec", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("train", "test"), default="train")
    s.add_argument("--ops", default="cutpaste,paraphrase")
    s.add_argument("--multiplicity", type=int, default=1)
    s.add_argument("--n-paraphrases", type=int, default=10)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    for name, func in (("classify", cmd_classify), ("eval", cmd_eval)):
        s = sub.add_parser(name, help="classify scenes" if name == "classify" else "score predictions")
        s.add_argument("--manifest", required=True)
        s.add_argument("--spec", action="append", help="constraint file or scenario name (repeatable)")
        s.add_argument("--answerer", default="truth", help="truth | noisy:<p>:<seed> | remote:<url>")
        s.add_argument("--policy", choices=[p.value for p in UnanswerablePolicy], default="strict")
        s.add_argument("--jobs", type=int, default=1)
        if name == "classify":
            s.add_argument("--mode", choices=("decomposed", "end2end"), default="decomposed")
            s.add_argument("--split", choices=("train", "test"), default="test")
            s.add_argument("--out", required=True)
        else:
            s.add_argument("--verdicts", help="verdict JSONL from classify instead of a live answerer")
            s.add_argument("--json-out")
        s.set_defaults(func=func)

    s = sub.add_parser("simulate-train", help="run the resampling training simulator")
    s.add_argument("config_file", nargs="?", help="TOML/JSON simulation config")
    s.add_argument("--sampler", choices=("uniform", "difficulty", "both"), default="both")
    s.add_argument("--seed", type=int, required=True, help="offset added to the configured seeds")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    path = known.config or os.environ.get(CONFIG_ENV)
    if not path:
        return
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    data = load_config_file(path)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, section in data.items():
        if name == "remote":
            for sp in subparsers.choices.values():
                sp.set_defaults(remote=section)
        elif name in subparsers.choices and isinstance(section, dict):
            subparsers.choices[name].set_defaults(**{k.replace("-", "_"): v for k, v in section.items()})


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValidationFailed, DSLError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ResponseFormatError, TransportError) as exc:
        print(f"remote error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (LogiclsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
