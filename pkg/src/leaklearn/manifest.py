"""Manifest files: one structured document binding attacker and trusted
specifications, the secret domain, per-attacker silent sets, device flags,
PAC parameters, and run settings."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .actions import IRQ, _OBS_RANK
from .mealy import SilentSet
from .pac import PacConfig
from .speclang import AttackerSpec, TrustedSpec, atoms_of, parse_spec_file
from .toysim import ObservationProfile, ToyEnclaveSim, VersionFlags


class ManifestError(ValueError):
    pass


@dataclass
class AttackerEntry:
    name: str
    spec_path: Path
    spec: AttackerSpec
    silent: SilentSet


@dataclass
class Manifest:
    name: str
    path: Path
    attackers: dict          # name -> AttackerEntry ("basic", "advanced")
    trusted_path: Path
    trusted: TrustedSpec
    secrets: tuple
    flags: VersionFlags
    profile: ObservationProfile
    diverge_budget: int
    pac: PacConfig
    out_dir: Path
    parallelism: int

    def sul_factory(self, secret):
        return ToyEnclaveSim(secret, flags=self.flags, profile=self.profile,
                             diverge_budget=self.diverge_budget)

    def alphabet_for(self, attacker_name):
        entry = self.attackers[attacker_name]
        actions = (atoms_of(entry.spec.isr) | atoms_of(entry.spec.prepare)
                   | atoms_of(entry.spec.cleanup) | atoms_of(self.trusted.enclave))
        return frozenset(actions) | {IRQ}

    def task_seed(self, attacker_name, secret) -> int:
        digest = hashlib.sha256(
            f"{self.pac.seed}/{attacker_name}/{secret}".encode()).digest()
        return int.from_bytes(digest[:8], "big")

    def tasks(self):
        for attacker in sorted(self.attackers):
            for secret in self.secrets:
                yield attacker, secret


def _validate_silent(entries):
    for entry in entries:
        kind = entry.split("@", 1)[0]
        if kind not in _OBS_RANK:
            raise ManifestError(f"silent set names unknown observable {entry!r}")
    return SilentSet(entries)


def load_manifest(path, *, flag_overrides=None, seed=None, out_dir=None) -> Manifest:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    base = path.parent

    def resolve(rel):
        p = base / rel
        if not p.exists():
            raise ManifestError(f"referenced file missing: {p}")
        return p

    attackers = {}
    for name, spec in doc.get("attackers", {}).items():
        spec_path = resolve(spec["spec"])
        parsed = parse_spec_file(spec_path)
        if not isinstance(parsed, AttackerSpec):
            raise ManifestError(f"{spec_path} is not an attacker specification")
        attackers[name] = AttackerEntry(
            name=name, spec_path=spec_path, spec=parsed,
            silent=_validate_silent(spec.get("silent", [])))
    if not attackers:
        raise ManifestError("manifest declares no attackers")

    trusted_doc = doc["trusted"]
    trusted_path = resolve(trusted_doc["spec"])
    trusted = parse_spec_file(trusted_path)
    if not isinstance(trusted, TrustedSpec):
        raise ManifestError(f"{trusted_path} is not a trusted-component specification")
    secrets = tuple(trusted_doc.get("secrets", [0, 1]))
    if not secrets:
        raise ManifestError("secret domain must be non-empty")
    trusted = TrustedSpec(enclave=trusted.enclave, secret_domain=secrets)

    sul_doc = doc.get("sul", {})
    flags_doc = dict(sul_doc.get("flags", {}))
    if flag_overrides:
        flags_doc.update(flag_overrides)
    try:
        flags = VersionFlags(**flags_doc)
    except TypeError as exc:
        raise ManifestError(f"bad flags: {exc}") from None
    profile = ObservationProfile(**sul_doc.get("profile", {}))

    pac_doc = dict(doc.get("pac", {}))
    if seed is not None:
        pac_doc["seed"] = seed
    pac = PacConfig(**pac_doc)

    run_doc = doc.get("run", {})
    out = Path(out_dir) if out_dir else Path(run_doc.get("out_dir", f"out/{doc['name']}"))
    return Manifest(
        name=doc["name"],
        path=path,
        attackers=attackers,
        trusted_path=trusted_path,
        trusted=trusted,
        secrets=secrets,
        flags=flags,
        profile=profile,
        diverge_budget=int(sul_doc.get("diverge_budget", 10_000)),
        pac=pac,
        out_dir=out,
        parallelism=int(run_doc.get("parallelism", 1)),
    )


BUILTIN_MANIFESTS = (
    "running_example", "insecure_enclave", "secure_enclave_original",
    "vb1", "vb6", "vb8", "vb9", "all_patched",
)


def builtin_manifest_path(name: str) -> Path:
    if name not in BUILTIN_MANIFESTS:
        raise ManifestError(
            f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_MANIFESTS)}")
    root = resources.files("leaklearn") / "fixtures" / f"{name}.yaml"
    return Path(str(root))
