"""Run manifest: config hash, artifacts, timestamps and library versions."""
from __future__ import annotations

import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("greenhouse-mpc", "numpy", "numba", "scikit-learn", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


@dataclass
class RunManifest:
    root: Path
    config_hash: str
    config: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    commands: list[dict] = field(default_factory=list)
    versions: dict = field(default_factory=_versions)

    @property
    def path(self) -> Path:
        return Path(self.root) / "manifest.json"

    @classmethod
    def open(cls, root, config_hash: str, config: dict) -> "RunManifest":
        """Resume the manifest in ``root`` when it belongs to the same config, else start fresh."""
        root = Path(root)
        path = root / "manifest.json"
        if path.is_file():
            try:
                old = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                old = {}
            if old.get("config_hash") == config_hash:
                return cls(root, config_hash, config, old.get("artifacts", []), old.get("commands", []))
        return cls(root, config_hash, config)

    def add(self, *paths) -> None:
        for p in paths:
            rel = Path(p).resolve().relative_to(Path(self.root).resolve()).as_posix()
            if rel not in self.artifacts:
                self.artifacts.append(rel)

    def record(self, command: str, started: datetime, ok: bool = True) -> None:
        self.commands.append({
            "command": command,
            "started": started.isoformat(timespec="seconds"),
            "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "ok": ok,
        })

    def missing(self) -> list[str]:
        return [a for a in self.artifacts if not (Path(self.root) / a).exists()]

    def write(self) -> Path:
        Path(self.root).mkdir(parents=True, exist_ok=True)
        body = {
            "config_hash": self.config_hash,
            "config": self.config,
            "artifacts": sorted(self.artifacts),
            "commands": self.commands,
            "versions": self.versions,
        }
        self.path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self.path
