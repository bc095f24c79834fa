"""Flat key=value run configuration with dotted section prefixes.

Grammar: one ``key=value`` entry per line; ``#`` starts a comment line;
blank lines are ignored; keys are dotted paths (``grid.nx``); values are
uninterpreted strings until a typed getter is called.  Parsing preserves
entry order, so parse -> serialize -> parse round-trips exactly.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(Exception):
    """Malformed configuration file or invalid option value."""


class RunConfig:
    def __init__(self, entries: dict[str, str] | None = None):
        self.entries: dict[str, str] = dict(entries or {})

    # -- parsing / serialization -------------------------------------------

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        entries: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"line {lineno}: empty key")
            entries[key] = value.strip()
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.entries.items())

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.entries == other.entries

    # -- typed access --------------------------------------------------------

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.entries.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.entries:
            raise ConfigError(f"missing required config key {key!r}")
        return self.entries[key]

    def get_int(self, key: str, default: int | None = None) -> int | None:
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc

    def get_float(self, key: str, default: float | None = None) -> float | None:
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc

    def get_bool(self, key: str, default: bool | None = None) -> bool | None:
        raw = self.entries.get(key)
        if raw is None:
            return default
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")

    def get_floats(self, key: str, default: list[float] | None = None) -> list[float] | None:
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return [float(tok) for tok in raw.split(",") if tok.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from exc

    def section(self, prefix: str) -> dict[str, str]:
        """Entries under ``prefix.``, with the prefix stripped."""
        dot = prefix + "."
        return {k[len(dot):]: v for k, v in self.entries.items() if k.startswith(dot)}
