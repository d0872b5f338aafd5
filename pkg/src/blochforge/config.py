"""Run configuration files: one human-editable key = value text file per run.

Lines are ``key = value`` with ``#`` comments; unknown keys are rejected
against the schema of the experiment kind.  Rational k-points stay "p/q"
strings end to end so exactness survives serialization.  Parsing the
serialized form reproduces the config exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _parse_rational_points(s: str) -> tuple:
    """Points like '1/2,0;0,1/2' -> (('1/2','0'), ('0','1/2')), validated."""
    pts = []
    for chunk in s.split(";"):
        comps = tuple(c.strip() for c in chunk.split(","))
        for c in comps:
            Fraction(c)  # raises on junk; value kept as exact text
        pts.append(comps)
    return tuple(pts)


def _fmt_rational_points(pts) -> str:
    return ";".join(",".join(c for c in p) for p in pts)


_TYPES = {
    "int": (int, lambda s: int(s), str),
    "float": (float, lambda s: float(s), repr),
    "bool": (bool, _parse_bool, lambda v: "true" if v else "false"),
    "str": (str, lambda s: s, str),
    "floats": (
        tuple,
        lambda s: tuple(float(c) for c in s.split(",")),
        lambda v: ",".join(repr(c) for c in v),
    ),
    "ints": (
        tuple,
        lambda s: tuple(int(c) for c in s.split(",")),
        lambda v: ",".join(str(c) for c in v),
    ),
    "kpoints": (tuple, _parse_rational_points, _fmt_rational_points),
}

_COMMON = {
    "out_dir": ("str", ""),
    "seed": ("int", 0),
    "threads": ("int", 0),
    "potential": ("str", "sin2_1d"),
    "amplitude": ("float", 1.0),
    "dim": ("int", 0),  # 0 = infer from potential
    "grid_n": ("int", 0),  # 0 = dimension default
    "cutoff": ("int", 0),  # 0 = dimension default
}

SCHEMAS = {
    "bands": {
        **_COMMON,
        "n_bands": ("int", 6),
        "k_path": ("str", ""),  # named corners like G,X,M,G
        "k_grid_per_axis": ("int", 0),
        "k_per_segment": ("int", 12),
        "refine": ("bool", False),
    },
    "levelset": {
        **_COMMON,
        "n_bands": ("int", 6),
        "k_grid_per_axis": ("int", 8),
        "omega_star": ("float", 0.0),
        "tol": ("float", 1e-6),
        "refine_roots": ("bool", False),
    },
    "modeset": {
        **_COMMON,
        "stars": ("kpoints", ()),
        "star_bands": ("ints", ()),
        "omega_star": ("float", 0.0),
        "n_bands": ("int", 8),
        "tol": ("float", 1e-6),
    },
    "acme": {
        **_COMMON,
        "stars": ("kpoints", ()),
        "star_bands": ("ints", ()),
        "sigma": ("int", -1),
        "Omega": ("int", -1),
        "newton_seeds": ("int", 8),
    },
    "nlb-continue": {
        **_COMMON,
        "stars": ("kpoints", ()),
        "star_bands": ("ints", ()),
        "sigma": ("int", -1),
        "Omega": ("int", -1),
        "eps_seed": ("float", 0.1),
        "direction": ("int", 1),
        "ds": ("float", 0.02),
        "max_steps": ("int", 20),
        "omega_min": ("float", -1e30),
        "omega_max": ("float", 1e30),
        "newton_tol": ("float", 1e-10),
    },
    "converge": {
        **_COMMON,
        "stars": ("kpoints", ()),
        "star_bands": ("ints", ()),
        "sigma": ("int", -1),
        "Omega": ("int", -1),
        "eps_list": ("floats", (0.12, 0.09, 0.06, 0.045, 0.03)),
        "sobolev_s": ("float", 0.0),  # 0 = dimension default (1 in 1D, 2 in 2D)
        "newton_tol": ("float", 1e-11),
        "branch_steps": ("int", 0),
        "branch_ds": ("float", 0.01),
    },
    "line-continue": {
        **_COMMON,
        "half_width": ("float", 100.0),
        "line_n": ("int", 4096),
        "sigma": ("int", 1),
        "omega0": ("float", 0.5),
        "guess": ("str", "sech"),  # sech | modulated
        "guess_a": ("float", 0.5),
        "guess_w": ("float", 50.0),
        "guess_wavenumber": ("float", 0.0),
        "direction": ("int", 1),
        "ds": ("float", 0.02),
        "ds_max": ("float", 0.05),
        "max_steps": ("int", 100),
        "omega_min": ("float", -1e30),
        "omega_max": ("float", 1e30),
        "snapshot_stride": ("int", 0),
    },
    "evolve": {
        **_COMMON,
        "omega": ("float", 0.76),
        "band": ("int", 3),
        "sigma": ("int", 1),
        "box_half_width": ("float", 10.0),
        "box_n": ("int", 256),
        "T": ("float", 1000.0),
        "dt": ("float", 1e-3),
        "rel_amp": ("float", 0.1),
        "stride": ("int", 5000),
        "perturb": ("bool", True),
    },
}


@dataclass(frozen=True)
class RunConfig:
    kind: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ConfigError(
                f"unknown experiment kind {self.kind!r}; "
                f"expected one of {sorted(SCHEMAS)}"
            )
        schema = SCHEMAS[self.kind]
        merged = {}
        for key, (tname, default) in schema.items():
            merged[key] = default
        for key, val in self.values.items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} for kind {self.kind!r}")
            pytype = _TYPES[schema[key][0]][0]
            if not isinstance(val, pytype):
                raise ConfigError(f"key {key!r} expects {schema[key][0]}")
            merged[key] = val
        object.__setattr__(self, "values", merged)

    def __getitem__(self, key):
        return self.values[key]

    def serialize(self) -> str:
        schema = SCHEMAS[self.kind]
        lines = [f"kind = {self.kind}"]
        for key in sorted(self.values):
            fmt = _TYPES[schema[key][0]][2]
            lines.append(f"{key} = {fmt(self.values[key])}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    """Parse a config file; raises ConfigError on unknown keys, bad values,
    or a missing kind."""
    raw = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val
    if "kind" not in raw:
        raise ConfigError("config must set 'kind'")
    kind = raw.pop("kind")
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    schema = SCHEMAS[kind]
    values = {}
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for kind {kind!r}")
        parse = _TYPES[schema[key][0]][1]
        try:
            values[key] = parse(val)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}")
    return RunConfig(kind=kind, values=values)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
