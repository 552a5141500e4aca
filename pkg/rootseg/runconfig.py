"""
Run configuration file: flat `section.field=value` lines.

Purpose:
  One plain-text file per run describes every knob (scene generator, Frangi
  parameters, network shape, training, counting grid, CMA-ES budget, paths,
  seed). CLI `--set KEY=VALUE` flags override it, and the merged result is
  dumped next to the outputs so a run can be repeated exactly.

Format:
  - `#` comments and blank lines are ignored
  - `KEY=VALUE`, value optionally quoted
  - tuples are comma separated (`frangi.sigmas=1,2,3`)
  - optional fields accept `none`

Notes:
  - Unknown keys and unparseable values raise ValueError before any command
    touches the filesystem.
  - A top-level `seed` feeds the scene generator, training and CMA-ES unless
    `scene.seed` / `train.seed` are set explicitly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .analysis import GridSpec
from .frangi import FrangiParams
from .net import ArchSpec
from .synthdata import SceneConfig
from .train import TrainConfig
from .tuning import TuneBudget

PATH_KEYS = ("manifest", "images", "predictions", "truth", "checkpoint", "frangi_params", "out")

# Fields whose default is None need an explicit element type.
_OPTIONAL_TYPES: dict[str, type] = {
    "cma.population_size": int,
    "grid.panel_width_mm": float,
    "grid.panel_height_mm": float,
}

_SECTIONS: dict[str, Any] = {
    "scene": SceneConfig,
    "frangi": FrangiParams,
    "arch": ArchSpec,
    "train": TrainConfig,
    "grid": GridSpec,
    "cma": TuneBudget,
}


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    frangi: FrangiParams = field(default_factory=FrangiParams)
    arch: ArchSpec = field(default_factory=ArchSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    cma: TuneBudget = field(default_factory=TuneBudget)
    paths: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def path(self, key: str) -> Optional[Path]:
        raw = self.paths.get(key)
        return Path(raw).expanduser() if raw else None

    def validate(self) -> None:
        for name in _SECTIONS:
            section = getattr(self, name)
            try:
                section.validate()
            except ValueError as exc:
                raise ValueError(f"config section [{name}]: {exc}") from None


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------
def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    """
    KEY=VALUE parser (comments, blank lines, optional quotes).

    Unlike a lenient .env reader, malformed lines are an error.
    """
    out: dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{number}: expected KEY=VALUE, got {line!r}")
        k, v = line.split("=", 1)
        key = k.strip()
        if not key:
            raise ValueError(f"{source}:{number}: empty key")
        out[key] = v.strip().strip('"').strip("'")
    return out


def read_config_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise FileNotFoundError(f"Missing config file: {path}")
    return parse_lines(path.read_text(encoding="utf-8").splitlines(), str(path))


def _convert(key: str, raw: str, default: Any) -> Any:
    text = raw.strip()
    if default is None:
        if text.lower() in ("", "none"):
            return None
        return _OPTIONAL_TYPES[key](text)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        items = tuple(kind(part.strip()) for part in text.split(",") if part.strip())
        if key.endswith("_range") and len(items) != 2:
            raise ValueError(f"{key} needs two comma-separated values, got {raw!r}")
        return items
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _section_defaults(cls: Any) -> dict[str, Any]:
    instance = cls()
    return {f.name: getattr(instance, f.name) for f in dataclasses.fields(cls)}


def build_run_config(values: dict[str, str]) -> RunConfig:
    """Turn parsed key/value pairs into a validated RunConfig."""
    updates: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
    paths: dict[str, str] = {}
    seed = 0
    for key, raw in values.items():
        if key == "seed":
            try:
                seed = int(raw)
            except ValueError:
                raise ValueError(f"seed must be an integer, got {raw!r}") from None
            continue
        section, _, name = key.partition(".")
        if section == "paths":
            if name not in PATH_KEYS:
                raise ValueError(f"unknown config key {key!r} (paths.* accepts {', '.join(PATH_KEYS)})")
            paths[name] = raw
            continue
        if section not in _SECTIONS:
            raise ValueError(f"unknown config key {key!r}")
        defaults = _section_defaults(_SECTIONS[section])
        if name not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        try:
            updates[section][name] = _convert(key, raw, defaults[name])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from None

    for section in ("scene", "train"):
        updates[section].setdefault("seed", seed)
    run = RunConfig(
        **{name: cls(**updates[name]) for name, cls in _SECTIONS.items()},
        paths=paths,
        seed=seed,
    )
    run.validate()
    return run


def load_run_config(
    path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    *,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
) -> RunConfig:
    """File values, then `--set` overrides, then the dedicated flags."""
    values = read_config_file(path) if path is not None else {}
    values.update(parse_lines(overrides, "--set"))
    if seed is not None:
        values["seed"] = str(seed)
        values.pop("scene.seed", None)
        values.pop("train.seed", None)
    if out is not None:
        values["paths.out"] = str(out)
    return build_run_config(values)


# ---------------------------------------------------------------------------
# Effective configuration dump
# ---------------------------------------------------------------------------
def _render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def effective_items(run: RunConfig) -> list[tuple[str, str]]:
    items = [("seed", str(run.seed))]
    for name in _SECTIONS:
        section = getattr(run, name)
        for f in dataclasses.fields(section):
            items.append((f"{name}.{f.name}", _render(getattr(section, f.name))))
    items.extend((f"paths.{k}", v) for k, v in sorted(run.paths.items()))
    return items


def dump_effective_config(run: RunConfig, path: Path) -> None:
    """Write the merged configuration; it parses back to the same RunConfig."""
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(f"{key}={value}\n" for key, value in effective_items(run))
    path.write_text("# effective rootseg configuration\n" + body, encoding="utf-8")
