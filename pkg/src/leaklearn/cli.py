"""Command-line front end: learn models, check noninterference and its
preservation, synthesize attack programs, and replay them as regressions.

Exit codes: 0 success / expectations met, 2 property violated or replay
expectation missed, 3 missing inputs (models not learned yet), 1 usage or
runtime errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .checker import check_prni, validate_witness
from .learner import learn_machine
from .manifest import (
    BUILTIN_MANIFESTS,
    ManifestError,
    builtin_manifest_path,
    load_manifest,
)
from .mealy import MealyMachine
from .pac import PacOracle
from .sul import CachedSul, SpecDriver, SpecTeacher
from .synth import AttackProgram, render_transcript, replay, synthesize

ENV_MANIFEST = "LEAKLEARN_MANIFEST"


def _parse_flag_overrides(pairs):
    overrides = {}
    for pair in pairs or ():
        name, _, value = pair.partition("=")
        if value.lower() not in ("true", "false", "on", "off", "1", "0"):
            raise ManifestError(f"flag override {pair!r} needs true/false")
        overrides[name] = value.lower() in ("true", "on", "1")
    return overrides


def _load(args):
    if args.builtin:
        path = builtin_manifest_path(args.builtin)
    elif args.manifest:
        path = args.manifest
    elif os.environ.get(ENV_MANIFEST):
        path = os.environ[ENV_MANIFEST]
    else:
        raise ManifestError("no manifest: use --manifest, --builtin, or "
                            f"${ENV_MANIFEST}")
    return load_manifest(path, flag_overrides=_parse_flag_overrides(args.flag),
                         seed=args.seed, out_dir=args.out)


def _model_path(man, attacker, secret) -> Path:
    return man.out_dir / "models" / f"{attacker}_s{secret}.mealy"


def _learn_task(manifest_path, attacker, secret, flag_overrides, seed, out_dir):
    """One learning job; module-level so process pools can run it."""
    man = load_manifest(manifest_path, flag_overrides=flag_overrides,
                        seed=seed, out_dir=out_dir)
    entry = man.attackers[attacker]
    sim = man.sul_factory(secret)
    cached = CachedSul(sim)
    teacher = SpecTeacher(SpecDriver(entry.spec, man.trusted), cached)
    (man.out_dir / "logs").mkdir(parents=True, exist_ok=True)
    oracle = PacOracle(
        teacher,
        replace(man.pac, seed=man.task_seed(attacker, secret)),
        log_path=man.out_dir / "logs" / f"{attacker}_s{secret}.pac.jsonl")
    machine, stats = learn_machine(
        teacher, oracle, alphabet=man.alphabet_for(attacker))
    model_path = _model_path(man, attacker, secret)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    model_path.write_text(machine.to_text(), encoding="utf-8")
    stats_path = man.out_dir / "stats" / f"{attacker}_s{secret}.json"
    stats_path.parent.mkdir(parents=True, exist_ok=True)
    stats_path.write_text(
        json.dumps(stats.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return attacker, secret, machine.n_states()


def cmd_learn(args) -> int:
    man = _load(args)
    overrides = _parse_flag_overrides(args.flag)
    jobs = args.jobs or man.parallelism
    tasks = list(man.tasks())
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_learn_task, str(man.path), attacker, secret,
                            overrides, args.seed, args.out)
                for attacker, secret in tasks
            ]
            results = [f.result() for f in futures]
    else:
        for attacker, secret in tasks:
            results.append(_learn_task(str(man.path), attacker, secret,
                                       overrides, args.seed, args.out))
    for attacker, secret, n_states in results:
        print(f"learned {attacker} secret={secret}: {n_states} states "
              f"-> {_model_path(man, attacker, secret)}")
    return 0


def _load_models(man, args):
    models = {}
    missing = []
    for attacker, secret in man.tasks():
        path = _model_path(man, attacker, secret)
        if path.exists():
            models.setdefault(attacker, {})[secret] = MealyMachine.from_text(
                path.read_text(encoding="utf-8"))
        else:
            missing.append((attacker, secret))
    return models, missing


def _verdict(man, args):
    models, missing = _load_models(man, args)
    if missing:
        if getattr(args, "no_auto_learn", False):
            names = ", ".join(f"{a}/s{s}" for a, s in missing)
            raise FileNotFoundError(f"models missing ({names}); run learn first")
        cmd_learn(args)
        models, missing = _load_models(man, args)
        if missing:
            raise FileNotFoundError("learning did not produce all models")
    if "basic" not in models or "advanced" not in models:
        raise ManifestError("preservation check needs 'basic' and 'advanced' attackers")
    return models, check_prni(
        models["basic"], models["advanced"],
        man.attackers["basic"].silent,
        advanced_silent=man.attackers["advanced"].silent,
        provenance={
            "manifest": man.name,
            "silent_basic": man.attackers["basic"].silent.entries(),
            "silent_advanced": man.attackers["advanced"].silent.entries(),
        })


def _format_rni(result):
    lines = []
    if result.holds:
        lines.append(f"rni {result.attacker}: EQUIVALENT on all secret pairs")
    else:
        lines.append(f"rni {result.attacker}: DISTINGUISHED")
        for pair, verdict in sorted(result.pairs.items()):
            if not verdict:
                word = "; ".join(a.render() for a in verdict.word)
                lines.append(f"  pair {pair}: word [{word}] step {verdict.step}")
    return lines


def cmd_check(args) -> int:
    man = _load(args)
    models, verdict = _verdict(man, args)
    lines = [f"manifest {man.name}"]
    lines += _format_rni(verdict.rni_basic)
    lines += _format_rni(verdict.rni_advanced)
    if verdict.preserved:
        note = " (baseline already distinguishes secrets)" if verdict.insecure_baseline else ""
        lines.append(f"prni: PRESERVED{note}")
    else:
        lines.append(f"prni: VIOLATED with {len(verdict.witnesses)} witness(es)")
    wit_dir = man.out_dir / "witnesses"
    if verdict.witnesses:
        wit_dir.mkdir(parents=True, exist_ok=True)
    for i, (pair, witness) in enumerate(verdict.witnesses):
        ok = validate_witness(witness,
                              models["advanced"][pair[0]],
                              models["advanced"][pair[1]],
                              man.attackers["advanced"].silent)
        tag = f"w{i:02d}_{witness.identifier()}"
        (wit_dir / f"{tag}.dot").write_text(witness.to_dot(name=f"w{i}"),
                                            encoding="utf-8")
        (wit_dir / f"{tag}.txt").write_text(witness.render_text(), encoding="utf-8")
        lines.append(f"witness {i}: pair {pair} {witness.identifier()}"
                     f" validated={'yes' if ok else 'NO'}")
    report = "\n".join(lines) + "\n"
    man.out_dir.mkdir(parents=True, exist_ok=True)
    (man.out_dir / "report.txt").write_text(report, encoding="utf-8")
    print(report, end="")
    return 0 if verdict.preserved else 2


def cmd_synthesize(args) -> int:
    man = _load(args)
    _models, verdict = _verdict(man, args)
    prog_dir = man.out_dir / "programs"
    if not verdict.witnesses:
        print("no witnesses; nothing to synthesize")
        return 0
    prog_dir.mkdir(parents=True, exist_ok=True)
    for i, (_pair, witness) in enumerate(verdict.witnesses):
        program = synthesize(witness)
        path = prog_dir / f"w{i:02d}_{witness.identifier()}.atk"
        path.write_text(program.render(), encoding="utf-8")
        print(f"synthesized {path}")
    return 0


def cmd_replay(args) -> int:
    man = _load(args)
    prog_dir = man.out_dir / "programs"
    paths = sorted(prog_dir.glob("*.atk")) if prog_dir.exists() else []
    if args.program:
        paths = [Path(p) for p in args.program]
    if not paths:
        print("no programs to replay")
        return 0
    silent = man.attackers["advanced"].silent if "advanced" in man.attackers \
        else next(iter(man.attackers.values())).silent
    tr_dir = man.out_dir / "transcripts"
    tr_dir.mkdir(parents=True, exist_ok=True)
    all_ok = True
    for path in paths:
        program = AttackProgram.parse(path.read_text(encoding="utf-8"))
        result = replay(program, man.sul_factory, man.secrets, silent)
        (tr_dir / (path.stem + ".txt")).write_text(render_transcript(result),
                                                   encoding="utf-8")
        ok = result.verdict() == args.expect
        all_ok &= ok
        print(f"replay {path.name}: {result.verdict()}"
              f" (expected {args.expect}) {'ok' if ok else 'MISMATCH'}")
    return 0 if all_ok else 2


def cmd_all(args) -> int:
    rc = cmd_learn(args)
    if rc:
        return rc
    rc_check = cmd_check(args)
    if rc_check not in (0, 2):
        return rc_check
    rc = cmd_synthesize(args)
    if rc:
        return rc
    if rc_check == 2:
        # confirm every synthesized witness against the live device
        args.expect = "distinguishing"
        args.program = None
        return cmd_replay(args)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leaklearn",
        description="Learn attacker-facing models of an enclave device and "
                    "check robust noninterference and its preservation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("learn", cmd_learn), ("check", cmd_check),
                     ("synthesize", cmd_synthesize), ("replay", cmd_replay),
                     ("all", cmd_all)):
        p = sub.add_parser(name)
        p.add_argument("--manifest", "-m", help="manifest file path")
        p.add_argument("--builtin", "-b", choices=BUILTIN_MANIFESTS,
                       help="bundled scenario manifest")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="PAC seed override")
        p.add_argument("--jobs", "-j", type=int, help="parallel learning tasks")
        p.add_argument("--flag", action="append", metavar="NAME=BOOL",
                       help="device flag override (repeatable)")
        if name in ("check", "synthesize"):
            p.add_argument("--no-auto-learn", action="store_true",
                           help="fail instead of learning missing models")
        if name == "replay":
            p.add_argument("--expect", default="distinguishing",
                           choices=["distinguishing", "not-distinguishing"])
            p.add_argument("--program", action="append",
                           help="explicit .atk file (repeatable)")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ManifestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if isinstance(exc, FileNotFoundError) else 1


if __name__ == "__main__":
    sys.exit(main())
