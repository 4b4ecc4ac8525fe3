"""Flat `section.key = value` scene files.

Every key must be known; values are coerced to the type of the field they
set.  Unknown keys raise ParseError (with line number and the nearest known
key), violated invariants raise ValidationError naming every offending key.

    # comment
    grid.d = 1
    grid.N = 64
    model.kind = quadratic
    model.G = 1.0
    dissipation.heat_conductivity = 0.01
    run.steps = 1000
"""

import difflib
import os
from dataclasses import dataclass, field, fields

from .constitutive import ThermalGauge
from .errors import BadParameters, GenericMechError, ParseError, ValidationError
from .field_grid import Grid
from .generic_structure import CORRUPTIONS
from .materials import (DissipationSpec, MantleParams, QuadraticParams, SmaParams, mantle_energy,
                        quadratic_test_model, sma_energy)
from .simulator import InitialCondition, SceneConfig

MODEL_PARAMS = {"quadratic": QuadraticParams, "mantle": MantleParams, "sma": SmaParams}
SMA_FIXED = ("wells", "d")          # set from the grid, not from the file

GRID_KEYS = {"d": int, "N": "ints", "L": "floats"}
RUN_KEYS = {"integrator": str, "dt": float, "t_end": float, "steps": int, "gauge": str,
            "s_ext": int, "hyperviscosity": float, "dealias": bool, "cfl": float,
            "diag_every": int, "local_every": int, "snapshot_every": int, "overflow": float,
            "gravity": "floats"}
VERIFY_KEYS = {"trials": int, "seed": int, "kmax": int, "thermal": str, "corrupt": "words",
               "checks": "words"}
TABLE_KEYS = {"J_min": float, "J_max": float, "n": int, "thetas": "floats",
              "p_min": float, "p_max": float}


@dataclass
class VerifyConfig:
    trials: int = 5
    seed: int = 0
    kmax: int = 3
    thermal: str = "theta"
    corrupt: tuple = ()
    checks: tuple = ()


@dataclass
class TableConfig:
    J_min: float = 0.70
    J_max: float = 1.02
    n: int = 1000
    thetas: tuple = (1600.0, 1800.0, 2000.0)
    p_min: float = 5e9
    p_max: float = 30e9


@dataclass
class ParsedConfig:
    scene: SceneConfig
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    table: TableConfig = field(default_factory=TableConfig)
    model_kind: str = "quadratic"
    raw: dict = field(default_factory=dict)


def _types_of(cls, skip=()):
    out = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        default = getattr(cls(), f.name)
        if f.type in (object, "object"):
            out[f.name] = "floats_or_scalar"
        elif isinstance(default, bool):
            out[f.name] = bool
        elif isinstance(default, int):
            out[f.name] = int
        elif isinstance(default, float):
            out[f.name] = float
        elif isinstance(default, str):
            out[f.name] = str
        else:
            out[f.name] = "floats"
    return out


def _model_types(kind):
    return _types_of(MODEL_PARAMS[kind], SMA_FIXED if kind == "sma" else ())


def known_keys(kind=None):
    """section -> {key: type}.

    Model keys are the union over model kinds; the types of the selected
    kind take precedence, since a name like G is scalar or per-well.
    """
    model = {"kind": str}
    for k in MODEL_PARAMS:
        model.update(_model_types(k))
    if kind in MODEL_PARAMS:
        model.update(_model_types(kind))
    return {"grid": GRID_KEYS, "model": model, "dissipation": _types_of(DissipationSpec),
            "run": RUN_KEYS, "initial": _types_of(InitialCondition), "verify": VERIFY_KEYS,
            "table": TABLE_KEYS}


def _all_names():
    return [f"{s}.{k}" for s, keys in known_keys().items() for k in keys]


def _suggest(name):
    hit = difflib.get_close_matches(name, _all_names(), n=1, cutoff=0.6)
    return f"; did you mean {hit[0]!r}?" if hit else ""


def _coerce(text, kind, where):
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        parts = [t.strip() for t in text.split(",") if t.strip()]
        if kind == "words":
            return tuple(parts)
        if kind == "ints":
            return tuple(int(t) for t in parts)
        vals = tuple(float(t) for t in parts)
        return vals[0] if len(vals) == 1 and kind == "floats_or_scalar" else vals
    except ValueError:
        name = kind.__name__ if isinstance(kind, type) else kind
        raise ParseError(f"{where}: cannot read {text!r} as {name}") from None


def parse_text(text, source="<config>"):
    """Parse the key-value text into {section: {key: value}} (types coerced)."""
    kind = "quadratic"
    for line in text.splitlines():
        name, _, value = line.split("#", 1)[0].partition("=")
        if name.strip() == "model.kind":
            kind = value.strip()
    known = known_keys(kind)
    out = {s: {} for s in known}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ParseError(f"{where}: expected 'section.key = value', got {body!r}")
        name, value = (t.strip() for t in body.split("=", 1))
        if "." not in name:
            raise ParseError(f"{where}: key {name!r} has no section{_suggest(name)}")
        section, key = name.split(".", 1)
        if section not in known or key not in known[section]:
            raise ParseError(f"{where}: unknown key {name!r}{_suggest(name)}")
        if name in seen:
            raise ParseError(f"{where}: duplicate key {name!r} (first set on line {seen[name]})")
        seen[name] = lineno
        kind = known[section][key]
        if value == "":
            raise ParseError(f"{where}: key {name!r} has an empty value")
        out[section][key] = _coerce(value, kind, f"{where}: {name}")
    return out


def build(sections):
    """SceneConfig and friends from parsed sections; ValidationError lists every problem."""
    problems = []
    g = dict(sections["grid"])
    d = g.pop("d", 1)
    N = g.pop("N", (64,))
    L = g.pop("L", (1.0,))
    N = N[0] if len(N) == 1 else N
    L = L[0] if len(L) == 1 else L
    try:
        grid = Grid(d, N, L)
    except ValueError as exc:
        raise ValidationError(f"grid: {exc}") from None

    mp = dict(sections["model"])
    kind = mp.pop("kind", "quadratic")
    if kind not in MODEL_PARAMS:
        raise ValidationError(f"model.kind: must be one of {sorted(MODEL_PARAMS)}")
    cls = MODEL_PARAMS[kind]
    allowed = _model_types(kind)
    for key in mp:
        if key not in allowed:
            problems.append(f"model.{key}: not a parameter of model kind {kind!r}")
    run = dict(sections["run"])
    try:
        gauge = ThermalGauge.parse(run.pop("gauge", "e"))
    except ValueError as exc:
        raise ValidationError(f"run.gauge: {exc}") from None
    model = None
    if not problems:
        try:
            if kind == "quadratic":
                model = quadratic_test_model(gauge, **mp)
            elif kind == "mantle":
                model = mantle_energy(MantleParams(**mp), gauge)
            else:
                model = sma_energy(SmaParams(d=d, **mp), gauge)
        except (BadParameters, GenericMechError, ValueError) as exc:
            problems.append(f"model: {exc}")

    spec = DissipationSpec(**sections["dissipation"])
    for msg in spec.validate(d):
        problems.append(f"dissipation.{msg.split()[0]}: {msg}")
    initial = InitialCondition(**sections["initial"])
    if initial.kmax < 1 or initial.kmax > min(grid.N) // 4:
        problems.append(f"initial.kmax: must lie in [1, N/4 = {min(grid.N) // 4}]")

    ver = VerifyConfig(**sections["verify"])
    bad = set(ver.corrupt) - set(CORRUPTIONS)
    if bad:
        problems.append(f"verify.corrupt: unknown {sorted(bad)}; choose from {list(CORRUPTIONS)}")
    if ver.trials < 1:
        problems.append("verify.trials: must be >= 1")
    table = TableConfig(**sections["table"])
    if not 0 < table.J_min < table.J_max or table.n < 10:
        problems.append("table: need 0 < J_min < J_max and n >= 10")

    try:
        # a stand-in model still lets the run keys be checked alongside the rest
        scene = SceneConfig(grid=grid, model=model or quadratic_test_model(gauge),
                            dissipation=spec, gauge=gauge, initial=initial, **run)
    except (ValueError, TypeError) as exc:
        raise ValidationError("; ".join(problems + [f"run: {exc}"])) from None
    problems += [f"{key}: {msg}" for key, msg in scene.problems() if key != "dissipation"]
    if problems or model is None:
        raise ValidationError("; ".join(problems))
    return ParsedConfig(scene=scene, verify=ver, table=table, model_kind=kind, raw=sections)


def parse_config(path):
    """Read, parse and validate a scene file."""
    if not os.path.isfile(path):
        raise ParseError(f"config file {path!r} not found")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return build(parse_text(text, source=os.path.basename(path)))


def parse_string(text):
    return build(parse_text(text))
