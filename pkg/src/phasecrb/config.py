"""Problem configuration read from a flat TOML file plus command-line overrides."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, InvalidParameters
from .models import CliffParameters, gaussian_profile

FAMILIES = ("single_photon", "coherent")
PARAMETERS = ("h", "alpha")


@dataclass(frozen=True)
class ProblemConfig:
    """Everything needed to set up a cliff problem.

    Lengths are metres, ``alpha0`` is 1/m and ``beta0_deg`` is the sidewall
    angle in degrees. Exactly one of ``beta0_deg`` and ``alpha0`` is given;
    ``h0`` defaults to a quarter wavelength. The beam width ``w`` has no
    default.
    """

    wavelength: float = 633e-9
    w: float | None = None
    h0: float | None = None
    beta0_deg: float | None = None
    alpha0: float | None = None
    N: float = 1.0
    family: str = "single_photon"
    parameters: tuple = ("h", "alpha")
    exact: bool = True
    strict: bool = False
    grid_points: int = 4096
    grid_half_width: float | None = None
    quad_rel_tol: float = 1e-12
    quad_max_subdivisions: int = 4000
    dh: float = 0.0
    dalpha: float = 0.0
    trials: int = 400
    n_photons: int = 100000
    efficiency_low: float = 0.85
    efficiency_high: float = 1.15
    tabulated_csv: str | None = None
    out: str = "out"
    seed: int = 0

    @property
    def h(self) -> float:
        return self.h0 if self.h0 is not None else self.wavelength / 4.0

    def cliff(self) -> CliffParameters:
        beta = None if self.beta0_deg is None else math.radians(self.beta0_deg)
        return CliffParameters.from_optics(self.wavelength, self.h, beta=beta, alpha=self.alpha0)

    def profile(self):
        return gaussian_profile(self.w)

    def with_(self, **changes) -> "ProblemConfig":
        return validate(replace(self, **changes))


_FIELD_TYPES = {f.name: f.type for f in fields(ProblemConfig)}


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=", 1)[0].strip() == key:
            return f"line {i}: "
    return ""


def _coerce(key, value, where):
    kind = _FIELD_TYPES[key]
    try:
        if value is None:
            return None
        if "tuple" in kind:
            if isinstance(value, str):
                value = [value]
            return tuple(str(v) for v in value)
        if "bool" in kind:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind.startswith("int"):
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if "float" in kind:
            if isinstance(value, (bool, str)):
                raise TypeError
            return float(value)
        if "str" in kind:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{where}{key}: expected {kind}, got {value!r}") from None
    return value


def validate(cfg: ProblemConfig, text: str | None = None, source: str = "",
             overridden=()) -> ProblemConfig:
    """Check invariants; messages name the offending line when the source text is known."""

    def fail(key, msg):
        if key in overridden:
            raise ConfigError(f"override {key}: {msg}")
        prefix = f"{source}: " if source else ""
        raise ConfigError(f"{prefix}{_line_of(text, key)}{msg}")

    if (cfg.beta0_deg is None) == (cfg.alpha0 is None):
        fail("beta0_deg" if cfg.beta0_deg is not None else "alpha0",
             "give exactly one of beta0_deg or alpha0")
    for key in ("wavelength", "w"):
        v = getattr(cfg, key)
        if v is None:
            fail(key, f"{key} is required")
        if not (v > 0 and math.isfinite(v)):
            fail(key, f"{key} must be positive, got {v!r}")
    if cfg.h0 is not None and not cfg.h0 > 0:
        fail("h0", f"h0 must be positive, got {cfg.h0!r}")
    if cfg.alpha0 is not None and not cfg.alpha0 > 0:
        fail("alpha0", f"alpha0 must be positive, got {cfg.alpha0!r}")
    if cfg.beta0_deg is not None and not 0 < cfg.beta0_deg < 90:
        fail("beta0_deg", f"beta0_deg must lie in (0, 90), got {cfg.beta0_deg!r}")
    if not cfg.N > 0:
        fail("N", "N must be positive")
    if cfg.family not in FAMILIES:
        fail("family", f"family must be one of {FAMILIES}, got {cfg.family!r}")
    if not cfg.parameters or any(p not in PARAMETERS for p in cfg.parameters) \
            or len(set(cfg.parameters)) != len(cfg.parameters):
        fail("parameters", f"parameters must be distinct names from {PARAMETERS}")
    if cfg.grid_points < 16:
        fail("grid_points", "grid_points must be >= 16")
    if cfg.trials < 1:
        fail("trials", "trials must be >= 1")
    if cfg.n_photons < 1:
        fail("n_photons", "n_photons must be >= 1")
    if not 0 < cfg.efficiency_low < 1 < cfg.efficiency_high:
        fail("efficiency_low", "efficiency band must satisfy 0 < low < 1 < high")
    try:
        cfg.cliff()
    except InvalidParameters as exc:
        fail("h0", str(exc))
    return cfg


def parse_override(item: str):
    """KEY=VALUE with VALUE in TOML syntax; bare words are taken as strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected KEY=VALUE")
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ProblemConfig:
    text = None
    data: dict = {}
    source = ""
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read ({exc.strerror})") from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for key, value in list(data.items()) + list((overrides or {}).items()):
        from_file = key in data and (overrides is None or key not in overrides)
        where = f"{source}: {_line_of(text, key)}" if from_file and source else "override "
        if isinstance(value, dict):
            raise ConfigError(f"{where}tables are not supported; keep the file flat")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{where}unknown key {key!r}")
        values[key] = _coerce(key, value, where)
    cfg = ProblemConfig(**values)
    return validate(cfg, text, source, overridden=tuple(overrides or ()))
