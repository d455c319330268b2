"""Text model files.

A model file is a sequence of ``[section]`` headers, each followed by
``key = value`` lines.  ``#`` starts a comment.  Numbers may be written as
arithmetic expressions over ``pi`` and the names defined in ``[params]``.

::

    [params]
    w = 2*pi*50

    [system]
    vars = x1, x2
    horizon = 0.04
    transitions = derive        # or: explicit (the default)

    [mode Spin]
    row = 0, w                  # one line per row of A
    row = -w, 0
    b = 0, 0
    inv = 1, 0 <= 2             # one line per invariant constraint

    [transition Spin Stop]      # explicit transitions only
    guard = 1, 0 >= 2

    [ics]
    lo = 0, 1                   # a box, or ``con = ... <= ...`` lines
    hi = 0, 1

    [region]
    con = 1, 0 <= 3
    ...

    [spec Safe]
    avoid = 0, 1 <= -2 ; 1, 0 >= 0     # one polytope per line
    avoid = Spin: 1, 1 <= -4           # restricted to mode Spin

    [integrator]   rel_tol abs_tol h_init h_min h_max event_tol max_events
    [reach]        dt max_segments bloat_factor entry_bin entry_grid
    [refine]       max_depth split_axis_rule

Unknown sections and keys are errors.  Every diagnostic carries the line
and column it refers to.
"""
from __future__ import annotations

import ast
import importlib.resources
import math
import operator
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .checker import SPLIT_RULES, RefineConfig
from .flowpipe import ReachConfig
from .geometry import Polytope
from .model import PIHA, AffineDynamics, Mode, ModelError, SafetySpec, Transition, derive_transitions, validate_piha
from .sim import IntegratorConfig

__all__ = [
    "ModelFileError",
    "ModelConfigs",
    "ParsedModel",
    "parse_model_file",
    "load_model_file",
    "serialize",
    "bundled_model_path",
]


class ModelFileError(ModelError):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.reason = message


@dataclass
class ModelConfigs:
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    reach: ReachConfig | None = None
    refine: RefineConfig = field(default_factory=RefineConfig)


@dataclass
class ParsedModel:
    piha: PIHA
    specs: list[SafetySpec]
    configs: ModelConfigs

    def spec(self, name: str) -> SafetySpec:
        for s in self.specs:
            if s.name == name:
                return s
        known = ", ".join(s.name for s in self.specs) or "none"
        raise KeyError(f"no spec named {name!r} (available: {known})")


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _eval_expr(text: str, names: dict[str, float]) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            if node.id in names:
                return names[node.id]
            raise ValueError(f"unknown name {node.id!r}")
        raise ValueError("only numbers, names and + - * / ** are allowed")

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise ValueError(f"cannot read {text.strip()!r} as a number") from None
    try:
        v = ev(tree)
    except ZeroDivisionError:
        raise ValueError("division by zero") from None
    if not math.isfinite(v):
        raise ValueError(f"{text.strip()!r} is not finite")
    return v


@dataclass
class _Line:
    no: int
    key: str
    value: str
    vcol: int  # column where the value starts


@dataclass
class _Section:
    kind: str
    args: list[str]
    no: int
    lines: list[_Line] = field(default_factory=list)

    def get(self, key: str) -> list[_Line]:
        return [ln for ln in self.lines if ln.key == key]

    def one(self, key: str) -> _Line | None:
        found = self.get(key)
        if len(found) > 1:
            raise ModelFileError(f"key {key!r} given more than once in [{self.title}]", found[1].no)
        return found[0] if found else None

    @property
    def title(self) -> str:
        return " ".join([self.kind] + self.args)


_KEYS = {
    "params": None,
    "system": {"vars", "horizon", "transitions"},
    "mode": {"row", "b", "inv"},
    "transition": {"guard"},
    "ics": {"con", "lo", "hi"},
    "region": {"con", "lo", "hi"},
    "spec": {"avoid"},
    "integrator": {f.name for f in fields(IntegratorConfig)},
    "reach": {"dt", "max_segments", "bloat_factor", "entry_bin", "entry_grid"},
    "refine": {"max_depth", "split_axis_rule"},
}
_ARGS = {"mode": 1, "transition": 2, "spec": 1}
_INT_KEYS = {"max_events", "max_segments", "entry_bin", "max_depth"}
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def _split_sections(text: str) -> list[_Section]:
    sections: list[_Section] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ModelFileError("section header is missing ']'", no, indent + 1)
            parts = stripped[1:-1].split()
            if not parts:
                raise ModelFileError("empty section header", no, indent + 1)
            kind, args = parts[0], parts[1:]
            if kind not in _KEYS:
                raise ModelFileError(f"unknown section [{kind}]", no, indent + 2)
            want = _ARGS.get(kind, 0)
            if len(args) != want:
                raise ModelFileError(f"[{kind}] takes {want} name(s), got {len(args)}", no, indent + 1)
            for a in args:
                if not _NAME.match(a):
                    raise ModelFileError(f"bad name {a!r}", no, line.index(a) + 1)
            sections.append(_Section(kind, args, no))
            continue
        if "=" not in stripped:
            raise ModelFileError("expected 'key = value'", no, indent + 1)
        if not sections:
            raise ModelFileError("key outside of any section", no, indent + 1)
        key, value = stripped.split("=", 1)
        key = key.strip()
        sec = sections[-1]
        allowed = _KEYS[sec.kind]
        if allowed is not None and key not in allowed:
            raise ModelFileError(f"unknown key {key!r} in [{sec.title}]", no, indent + 1)
        vcol = line.index("=") + 2 + (len(value) - len(value.lstrip()))
        sections[-1].lines.append(_Line(no, key, value.strip(), vcol))
    return sections


class _Reader:
    def __init__(self, names: dict[str, float]):
        self.names = names

    def number(self, ln: _Line, text: str | None = None, col: int | None = None) -> float:
        try:
            return _eval_expr(ln.value if text is None else text, self.names)
        except ValueError as exc:
            raise ModelFileError(str(exc), ln.no, ln.vcol if col is None else col) from None

    def vector(self, ln: _Line, text: str | None = None, col: int | None = None) -> np.ndarray:
        text = ln.value if text is None else text
        col = ln.vcol if col is None else col
        out = []
        pos = 0
        for part in text.split(","):
            if not part.strip():
                raise ModelFileError("empty entry in list", ln.no, col + pos)
            out.append(self.number(ln, part, col + pos + len(part) - len(part.lstrip())))
            pos += len(part) + 1
        return np.array(out)

    def constraint(self, ln: _Line, dim: int, text: str | None = None,
                   col: int | None = None) -> tuple[np.ndarray, float]:
        text = ln.value if text is None else text
        col = ln.vcol if col is None else col
        m = re.search(r"<=|>=", text)
        if m is None:
            raise ModelFileError("constraint needs '<=' or '>='", ln.no, col)
        a = self.vector(ln, text[:m.start()], col)
        c = self.number(ln, text[m.end():], col + m.end())
        if a.size != dim:
            raise ModelFileError(f"constraint has {a.size} coefficients, the system has {dim} variables", ln.no, col)
        return (a, c) if m.group() == "<=" else (-a, -c)


def _polytope(reader: _Reader, sec: _Section, dim: int) -> Polytope:
    rows = [reader.constraint(ln, dim) for ln in sec.get("con")]
    lo, hi = sec.one("lo"), sec.one("hi")
    if (lo is None) != (hi is None):
        raise ModelFileError(f"[{sec.title}] needs both 'lo' and 'hi'", (lo or hi).no)
    if lo is not None:
        vlo, vhi = reader.vector(lo), reader.vector(hi)
        for ln, v in ((lo, vlo), (hi, vhi)):
            if v.size != dim:
                raise ModelFileError(f"box bound has {v.size} entries, the system has {dim} variables", ln.no, ln.vcol)
        if np.any(vlo > vhi):
            raise ModelFileError("box has lo > hi", lo.no, lo.vcol)
        box = Polytope.box(vlo, vhi)
        rows += list(zip(box.A, box.b))
    if not rows:
        raise ModelFileError(f"[{sec.title}] has no constraints", sec.no)
    return Polytope.from_constraints(rows, dim=dim)


def _config(reader: _Reader, sec: _Section | None, cls, base: dict | None = None):
    kw = dict(base or {})
    if sec is None:
        return kw
    for ln in sec.lines:
        if sec.one(ln.key) is not ln:
            continue
        if ln.key == "split_axis_rule":
            if ln.value not in SPLIT_RULES:
                raise ModelFileError(f"split_axis_rule must be one of {', '.join(SPLIT_RULES)}", ln.no, ln.vcol)
            kw[ln.key] = ln.value
        elif ln.key in _INT_KEYS:
            v = reader.number(ln)
            if v != int(v):
                raise ModelFileError(f"{ln.key} must be an integer", ln.no, ln.vcol)
            kw[ln.key] = int(v)
        else:
            kw[ln.key] = reader.number(ln)
    return kw


def parse_model_file(text: str) -> ParsedModel:
    """Parse model-file text into an automaton, its specs and run configs."""
    sections = _split_sections(text)
    if not sections:
        raise ModelFileError("model file is empty (a [system] section is required)", 1)
    by_kind: dict[str, list[_Section]] = {}
    for s in sections:
        by_kind.setdefault(s.kind, []).append(s)
    for kind in ("params", "system", "ics", "region", "integrator", "reach", "refine"):
        if len(by_kind.get(kind, [])) > 1:
            raise ModelFileError(f"section [{kind}] appears more than once", by_kind[kind][1].no)
    for req in ("system", "ics", "region"):
        if req not in by_kind:
            last = sections[-1]
            raise ModelFileError(f"missing [{req}] section", last.lines[-1].no if last.lines else last.no)

    names: dict[str, float] = {"pi": math.pi}
    reader = _Reader(names)
    for ln in by_kind.get("params", [_Section("params", [], 0)])[0].lines:
        if not _NAME.match(ln.key):
            raise ModelFileError(f"bad parameter name {ln.key!r}", ln.no)
        if ln.key in names:
            raise ModelFileError(f"parameter {ln.key!r} defined twice", ln.no)
        names[ln.key] = reader.number(ln)

    system = by_kind["system"][0]
    vl = system.one("vars")
    if vl is None:
        raise ModelFileError("[system] needs 'vars'", system.no)
    var_names = [v.strip() for v in vl.value.split(",")]
    if not all(_NAME.match(v) for v in var_names):
        raise ModelFileError("vars must be a comma-separated list of names", vl.no, vl.vcol)
    if len(set(var_names)) != len(var_names):
        raise ModelFileError("duplicate variable name", vl.no, vl.vcol)
    dim = len(var_names)
    hl = system.one("horizon")
    if hl is None:
        raise ModelFileError("[system] needs 'horizon'", system.no)
    horizon = reader.number(hl)
    tl = system.one("transitions")
    tmode = "explicit" if tl is None else tl.value
    if tmode not in ("explicit", "derive"):
        raise ModelFileError("transitions must be 'explicit' or 'derive'", tl.no, tl.vcol)

    modes = []
    where: dict[str, int] = {}
    for sec in by_kind.get("mode", []):
        mid = sec.args[0]
        if mid in where:
            raise ModelFileError(f"mode {mid!r} declared twice", sec.no)
        where[f"mode {mid}"] = sec.no
        rows = [reader.vector(ln) for ln in sec.get("row")]
        if len(rows) != dim:
            raise ModelFileError(f"mode {mid}: matrix has {len(rows)} rows, the system has {dim} variables", sec.no)
        for ln, r in zip(sec.get("row"), rows):
            if r.size != dim:
                raise ModelFileError(f"mode {mid}: matrix row has {r.size} entries, the system has {dim} variables",
                                     ln.no, ln.vcol)
        bl = sec.one("b")
        b = np.zeros(dim) if bl is None else reader.vector(bl)
        if b.size != dim:
            raise ModelFileError(f"mode {mid}: b has {b.size} entries, the system has {dim} variables", bl.no, bl.vcol)
        try:
            inv_rows = [reader.constraint(ln, dim) for ln in sec.get("inv")]
        except ModelFileError as exc:
            raise ModelFileError(f"mode {mid}: invariant {exc.reason}", exc.line, exc.col) from None
        inv = Polytope.from_constraints(inv_rows, dim=dim) if inv_rows else Polytope.universe(dim)
        modes.append(Mode(mid, AffineDynamics(np.array(rows), b), inv))
        where[mid] = sec.no
    if not modes:
        raise ModelFileError("no [mode ...] sections", system.no)

    trans_secs = by_kind.get("transition", [])
    if tmode == "derive":
        if trans_secs:
            raise ModelFileError("explicit [transition] sections conflict with 'transitions = derive'",
                                 trans_secs[0].no)
        transitions = derive_transitions(modes)
    else:
        transitions = []
        for k, sec in enumerate(trans_secs):
            src, tgt = sec.args
            for name in (src, tgt):
                if name not in where:
                    raise ModelFileError(f"transition refers to unknown mode {name!r}", sec.no)
            rows = [reader.constraint(ln, dim) for ln in sec.get("guard")]
            guard = Polytope.from_constraints(rows, dim=dim) if rows else Polytope.universe(dim)
            transitions.append(Transition(src, tgt, guard))
            where[f"transition {k} ({src} -> {tgt})"] = sec.no

    ics_sec = by_kind["ics"][0]
    reg_sec = by_kind["region"][0]
    h = PIHA(dim=dim, modes=tuple(modes), transitions=tuple(transitions),
             ics=_polytope(reader, ics_sec, dim), analysis_region=_polytope(reader, reg_sec, dim),
             horizon=horizon, var_names=tuple(var_names))
    where["ics"] = ics_sec.no
    where["analysis_region"] = reg_sec.no
    where["PIHA"] = system.no

    diags = validate_piha(h)
    if diags:
        d = diags[0]
        raise ModelFileError(f"{d.rule}: {d.element}: {d.message}", where.get(d.element, system.no))

    specs = []
    for sec in by_kind.get("spec", []):
        if any(s.name == sec.args[0] for s in specs):
            raise ModelFileError(f"spec {sec.args[0]!r} declared twice", sec.no)
        regions = []
        for ln in sec.get("avoid"):
            text, col, mode_id = ln.value, ln.vcol, None
            m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*:", text)
            if m:
                mode_id = m.group(1)
                if mode_id not in h.mode_ids:
                    raise ModelFileError(f"avoid region refers to unknown mode {mode_id!r}", ln.no, col)
                text, col = text[m.end():], col + m.end()
            rows = []
            pos = 0
            for part in text.split(";"):
                rows.append(reader.constraint(ln, dim, part, col + pos))
                pos += len(part) + 1
            regions.append((mode_id, Polytope.from_constraints(rows, dim=dim)))
        specs.append(SafetySpec(sec.args[0], tuple(regions)))

    one = lambda kind: by_kind.get(kind, [None])[0]  # noqa: E731
    try:
        icfg = IntegratorConfig(**_config(reader, one("integrator"), IntegratorConfig))
        rkw = _config(reader, one("reach"), ReachConfig)
        rkw.setdefault("dt", horizon / 400)
        reach = ReachConfig(integrator=icfg, **rkw)
        refine = RefineConfig(**_config(reader, one("refine"), RefineConfig))
    except ValueError as exc:
        sec = one("reach") or one("integrator") or one("refine") or system
        raise ModelFileError(str(exc), sec.no) from None
    return ParsedModel(h, specs, ModelConfigs(icfg, reach, refine))


def load_model_file(path) -> ParsedModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model_file(fh.read())


def bundled_model_path(name: str = "fwr"):
    """Path of a model file shipped with the package, e.g. ``fwr``."""
    path = importlib.resources.files("piha") / "data" / f"{name}.model"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled model named {name!r}")
    return path


def _num(v: float) -> str:
    return repr(float(v))


def _row(a, c=None, op="<=") -> str:
    s = ", ".join(_num(v) for v in a)
    return s if c is None else f"{s} {op} {_num(c)}"


def serialize(model: ParsedModel) -> str:
    """Model-file text with every number written out in full."""
    h = model.piha
    names = h.var_names or tuple(f"x{i + 1}" for i in range(h.dim))
    out = ["[system]", f"vars = {', '.join(names)}", f"horizon = {_num(h.horizon)}", "transitions = explicit", ""]
    for m in h.modes:
        out.append(f"[mode {m.id}]")
        out += [f"row = {_row(r)}" for r in m.dynamics.A]
        out.append(f"b = {_row(m.dynamics.b)}")
        out += [f"inv = {_row(a, c)}" for a, c in m.invariant.constraints]
        out.append("")
    for t in h.transitions:
        out.append(f"[transition {t.source} {t.target}]")
        out += [f"guard = {_row(a, c)}" for a, c in t.guard.constraints]
        out.append("")
    for title, P in (("ics", h.ics), ("region", h.analysis_region)):
        out.append(f"[{title}]")
        out += [f"con = {_row(a, c)}" for a, c in P.constraints]
        out.append("")
    for s in model.specs:
        out.append(f"[spec {s.name}]")
        for mode_id, P in s.avoid_regions:
            prefix = f"{mode_id}: " if mode_id else ""
            out.append("avoid = " + prefix + " ; ".join(_row(a, c) for a, c in P.constraints))
        out.append("")
    cfg = model.configs
    out.append("[integrator]")
    out += [f"{f.name} = {getattr(cfg.integrator, f.name)!r}" for f in fields(IntegratorConfig)]
    out.append("")
    if cfg.reach is not None:
        r = cfg.reach
        out += ["[reach]", f"dt = {_num(r.dt)}", f"max_segments = {r.max_segments}",
                f"bloat_factor = {_num(r.bloat_factor)}", f"entry_bin = {r.entry_bin}"]
        if r.entry_grid is not None:
            out.append(f"entry_grid = {_num(r.entry_grid)}")
        out.append("")
    out += ["[refine]", f"max_depth = {cfg.refine.max_depth}", f"split_axis_rule = {cfg.refine.split_axis_rule}", ""]
    return "\n".join(out)
