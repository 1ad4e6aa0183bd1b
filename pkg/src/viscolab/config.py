"""Experiment configuration: a TOML subset (key = value lines, dotted sections).

Every key is declared in :data:`SCHEMA`; unknown keys, wrong types and
missing required keys raise :class:`ConfigError` with the offending line.
Functions of position (rhs, boundary data, weights) are written as
expressions in ``x0``, ``x1`` (coordinates), ``r`` (Euclidean norm) and
the numpy functions listed in :data:`EXPR_NAMES`. Config files are trusted
input: expressions are evaluated without builtins but are not sandboxed.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("solve", "eigen", "abp_batch", "regularity", "oscillation", "approximation", "bound_certificate", "nagumo")

_COEF = {
    "kind": ("str", "constant", "constant | smooth | singular"),
    "value": ("float", 0.0, "constant value, or additive offset"),
    "expr": ("str", None, "nonnegative expression for kind = smooth"),
    "sup_bound": ("float", None, "declared sup of a smooth field"),
    "kappa": ("float", 1.0, "singular amplitude"),
    "s": ("float", 0.0, "singular exponent, needs s*p < n"),
    "center": ("list", None, "singular center"),
    "p": ("float", None, "integrability exponent of a singular field"),
    "lo": ("float", None, "lower bound (multiplier a only)"),
    "hi": ("float", None, "upper bound (multiplier a only)"),
}

SCHEMA: dict[str, dict[str, tuple]] = {
    "": {
        "kind": ("str", None, "experiment kind: " + " | ".join(KINDS)),
        "seed": ("int", 0, "seed of the single run generator"),
        "out": ("str", None, "output directory (overridden by --out)"),
        "name": ("str", None, "run label"),
    },
    "domain": {
        "shape": ("str", None, "interval | rectangle | disc | half_disc"),
        "a": ("float", 0.0, "interval left end"),
        "b": ("float", 1.0, "interval right end"),
        "lo": ("list", [0.0, 0.0], "rectangle lower corner"),
        "hi": ("list", [1.0, 1.0], "rectangle upper corner"),
        "center": ("list", [0.0, 0.0], "disc or half-disc center"),
        "radius": ("float", 1.0, "disc or half-disc radius"),
        "nu": ("float", 0.5, "half-disc flat side offset below the center"),
    },
    "grid": {"h": ("float", 1 / 32, "lattice spacing")},
    "stencil": {
        "m": ("int", 8, "wide-stencil direction count: 4 | 8 | 16"),
        "gradient": ("str", "upwind", "upwind | centered"),
    },
    "operator": {
        "type": ("str", "extremal", "extremal (a M^± ± b|Du| ± μ|Du|² ± d ω(u^∓))"),
        "sign": ("int", 1, "+1 or -1"),
        "lam": ("float", 1.0, "lower ellipticity"),
        "Lam": ("float", 1.0, "upper ellipticity"),
        "mu": ("float", 0.0, "quadratic gradient coefficient"),
    },
    "operator.a": _COEF,
    "operator.b": _COEF,
    "operator.d": _COEF,
    "operator.omega": {
        "kind": ("str", "lipschitz", "lipschitz | power"),
        "L": ("float", 0.0, "modulus constant"),
        "gamma": ("float", None, "power exponent"),
    },
    "problem": {
        "rhs": ("expr", 0.0, "right-hand side f"),
        "boundary": ("expr", 0.0, "boundary data ψ (extended inside by the same formula)"),
        "exact": ("expr", None, "exact solution for error reporting"),
        "tau": ("float", None, "Hölder exponent of ψ on flat portions"),
    },
    "solver": {
        "tol": ("float", 1e-8, "residual tolerance"),
        "max_sweeps": ("int", 200000, "pseudo-transient sweep cap"),
        "rho_safety": ("float", 0.5, "explicit step safety factor"),
        "policy_iteration": ("bool", True, "use semismooth Newton when available"),
        "max_newton": ("int", 60, "Newton iteration cap"),
        "patience": ("int", 5000, "sweeps without progress before divergence"),
        "delta_gate": ("float", 1.0, "μ smallness threshold (advisory)"),
        "gate_p": ("float", None, "exponent of the μ gate"),
        "audit_samples": ("int", 512, "monotonicity audit samples"),
        "audit": ("bool", True, "run the monotonicity audit"),
        "warm_start": ("str", "harmonic", "harmonic | boundary"),
    },
    "eigen": {
        "branch": ("int", 1, "+1 or -1"),
        "h": ("float", None, "grid spacing (defaults to grid.h)"),
        "tol": ("float", 1e-6, "eigenvalue tolerance"),
        "field_tol": ("float", 1e-5, "eigenfunction tolerance"),
        "rep_tol": ("float", 1e-5, "simplicity agreement tolerance"),
        "eps_schedule": ("list", None, "continuation levels (default 2^0..2^-10)"),
        "force_continuation": ("bool", False, "continue even when min c > 0"),
        "early_stop": ("bool", True, "stop when consecutive levels agree"),
        "max_steps": ("int", 500, "power steps per level"),
        "reference": ("float", None, "reference eigenvalue for relative error"),
        "simplicity_trials": ("int", 0, "extra multi-start runs (0 disables)"),
    },
    "eigen.weight": _COEF,
    "fit": {
        "source": ("str", "solve", "solve | field"),
        "field": ("expr", None, "field expression when source = field"),
        "x0": ("list", None, "fit center (default domain center)"),
        "gamma": ("float", 0.25, "scale ratio in (0, 1/4]"),
        "K": ("int", 6, "number of scales"),
        "r0": ("float", 1.0, "largest radius"),
        "alpha_grid": ("list", None, "candidate exponents"),
        "boundary": ("bool", False, "half-ball variant"),
        "beta": ("float", 0.5, "Hölder exponent of the seminorm report"),
        "h_theta": ("bool", True, "also report the oscillation average"),
        "p": ("float", None, "exponent of the oscillation average (default 2n+1)"),
    },
    "oscillation": {
        "x0": ("list", None, "base point"),
        "radii": ("list", [0.5, 0.25, 0.125], "radii of the averages"),
        "p": ("float", None, "exponent (default 2n+1)"),
        "resolution": ("int", 8, "quadrature points per radius"),
        "variant": ("str", "beta", "beta | beta_bar"),
        "norm": ("str", "spectral", "spectral | frobenius"),
    },
    "abp": {
        "instances": ("int", 100, "batch size"),
        "n": ("int", 2, "dimension"),
        "h": ("float", None, "grid spacing"),
        "p": ("float", None, "norm exponent (default 2n)"),
        "factor": ("float", 1.5, "cap over the batch max ratio"),
        "cap": ("float", None, "fixed cap (skips calibration)"),
    },
    "approximation": {
        "deltas": ("list", [0.1, 0.01, 0.001], "δ-ladder"),
        "p": ("float", None, "exponent of the smallness inputs"),
    },
    "certificate": {
        "center": ("list", None, "ball center"),
        "R": ("float", None, "ball radius"),
        "delta": ("float", None, "weight lower bound on the ball (default min c)"),
        "compare": ("bool", True, "also compute α₁ on the domain"),
    },
    "nagumo": {
        "hs": ("list", [1 / 32, 1 / 64, 1 / 128], "refinement ladder"),
        "p": ("float", 4.0, "Sobolev exponent"),
        "max_spread": ("float", 0.1, "allowed relative spread of ratios"),
    },
    "expect": {},
}

EXPECT_OPS = ("<", "<=", ">", ">=", "==")

EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "minimum", "maximum", "where", "tanh",
                 "arctan", "sinh", "cosh", "pi", "e", "sign", "floor", "heaviside")
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line if known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        loc = f"line {line}: " if line else ""
        super().__init__(f"{loc}{message}")
        self.key, self.line = key, line


def _key_lines(text: str) -> dict[str, int]:
    """Map full dotted key paths to their source line numbers."""
    out: dict[str, int] = {}
    section = ""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^\[\s*([^\]]+?)\s*\]$", line)
        if m:
            section = m.group(1).replace('"', "").replace(" ", "")
            out.setdefault(section, no)
            continue
        m = re.match(r"^([A-Za-z0-9_.\"\- ]+?)\s*=", line)
        if m:
            key = m.group(1).replace('"', "").replace(" ", "")
            full = f"{section}.{key}" if section else key
            out.setdefault(full, no)
            parts = full.split(".")
            for i in range(1, len(parts)):
                out.setdefault(".".join(parts[:i]), no)
    return out


class Expr:
    """A scalar or a formula in x0, x1, r evaluated on (N, n) points."""

    def __init__(self, source):
        self.source = source
        if isinstance(source, str):
            try:
                self._code = compile(source, "<expr>", "eval")
            except SyntaxError as exc:
                raise ConfigError(f"bad expression {source!r}: {exc.msg}") from exc
            bad = [name for name in self._code.co_names if name not in EXPR_NAMES and name not in ("x0", "x1", "r", "x")]
            if bad:
                raise ConfigError(f"unknown names in expression {source!r}: {bad}")
        else:
            self._code = None

    @property
    def is_constant(self) -> bool:
        return self._code is None

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._code is None:
            return np.full(x.shape[0], float(self.source))
        ns = dict(EXPR_NAMES, x=x, x0=x[:, 0], x1=x[:, 1] if x.shape[1] > 1 else np.zeros(x.shape[0]),
                  r=np.linalg.norm(x, axis=1))
        val = eval(self._code, {"__builtins__": {}}, ns)  # noqa: S307 - trusted config input
        return np.broadcast_to(np.asarray(val, dtype=float), (x.shape[0],)).astype(float)

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"

    def to_json(self):
        return self.source


def _coerce(kind: str, value, where: str, line):
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string", where, line)
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer", where, line)
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number", where, line)
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", where, line)
        return value
    if kind == "list":
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where} must be a list of numbers", where, line)
        return [float(v) for v in value]
    if kind == "expr":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{where} must be a number or an expression string", where, line)
        try:
            return Expr(value)
        except ConfigError as exc:
            raise ConfigError(str(exc), where, line) from exc
    raise AssertionError(kind)


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``sections`` maps section names to
    resolved values (defaults filled in), ``present`` lists sections given."""

    kind: str
    seed: int
    out: str | None
    name: str | None
    sections: dict
    present: set
    expect: dict
    source: str = ""
    path: str | None = None
    lines: dict = field(default_factory=dict, repr=False)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def has(self, name: str) -> bool:
        return name in self.present

    def to_dict(self) -> dict:
        def conv(v):
            return v.to_json() if isinstance(v, Expr) else v

        out = {"kind": self.kind, "seed": self.seed, "name": self.name}
        for sec, vals in self.sections.items():
            if sec and sec in self.present:
                out[sec] = {k: conv(v) for k, v in vals.items()}
        out["expect"] = {k: list(v) for k, v in self.expect.items()}
        return out


def _walk(tree: dict, prefix: str = ""):
    """Yield (section, key, value) triples with nested tables flattened."""
    for k, v in tree.items():
        path = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            if path in SCHEMA:
                yield from _walk(v, path)
            else:
                # unknown table: report its leaves by full dotted name
                for sub, leaf, val in _walk(v, ""):
                    yield (prefix, ".".join(p for p in (k, sub, leaf) if p), val)
        else:
            yield (prefix, k, v)


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    """Parse and validate config text."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", line=int(m.group(1)) if m else None) from exc
    lines = _key_lines(text)
    if not tree:
        raise ConfigError("empty config: 'kind' is required", "kind")
    sections = {name: {k: spec[1] for k, spec in keys.items()} for name, keys in SCHEMA.items()}
    present: set = set()
    expect: dict = {}
    for sec, key, value in _walk(tree):
        full = f"{sec}.{key}" if sec else key
        line = lines.get(full)
        if sec == "expect":
            if not (isinstance(value, list) and len(value) == 2 and value[0] in EXPECT_OPS
                    and isinstance(value[1], (int, float))):
                raise ConfigError(f"expect.{key} must be [op, number] with op in {EXPECT_OPS}", full, line)
            expect[key] = (value[0], float(value[1]))
            present.add("expect")
            continue
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown key '{full}'", full, line)
        sections[sec][key] = _coerce(SCHEMA[sec][key][0], value, full, line)
        present.add(sec)
    kind = sections[""]["kind"]
    if kind is None:
        raise ConfigError("'kind' is required", "kind", None)
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}", "kind", lines.get("kind"))
    _check_ranges(sections, lines, kind, present)
    top = sections[""]
    return ExperimentConfig(kind, top["seed"], top["out"], top["name"], sections, present, expect, text, path, lines)


def _check_ranges(s: dict, lines: dict, kind: str, present: set) -> None:
    def fail(key, msg):
        raise ConfigError(msg, key, lines.get(key))

    needs_domain = kind not in ("abp_batch",)
    if needs_domain and "domain" not in present:
        fail("domain", f"kind {kind!r} needs a [domain] section")
    if "domain" in present and s["domain"]["shape"] not in ("interval", "rectangle", "disc", "half_disc"):
        fail("domain.shape", "domain.shape must be interval, rectangle, disc or half_disc")
    if not s["grid"]["h"] > 0:
        fail("grid.h", "grid.h must be positive")
    if s["stencil"]["m"] not in (4, 8, 16):
        fail("stencil.m", "stencil.m must be 4, 8 or 16")
    if s["operator"]["sign"] not in (1, -1):
        fail("operator.sign", "operator.sign must be +1 or -1")
    if s["eigen"]["branch"] not in (1, -1):
        fail("eigen.branch", "eigen.branch must be +1 or -1")
    lam, Lam = s["operator"]["lam"], s["operator"]["Lam"]
    if not 0 < lam <= Lam:
        fail("operator.lam", "need 0 < lam <= Lam")
    if not 0 < s["fit"]["gamma"] <= 0.25:
        fail("fit.gamma", "fit.gamma must lie in (0, 1/4]")
    if s["fit"]["source"] not in ("solve", "field"):
        fail("fit.source", "fit.source must be solve or field")
    if s["fit"]["source"] == "field" and kind == "regularity" and s["fit"]["field"] is None:
        fail("fit.field", "fit.source = field needs fit.field")
    for sec in ("operator.a", "operator.b", "operator.d", "eigen.weight"):
        k = s[sec]["kind"]
        if k not in ("constant", "smooth", "singular"):
            fail(f"{sec}.kind", f"{sec}.kind must be constant, smooth or singular")
        if k == "smooth" and s[sec]["expr"] is None:
            fail(f"{sec}.expr", f"{sec}.kind = smooth needs {sec}.expr")
    if kind == "bound_certificate" and s["certificate"]["R"] is None:
        fail("certificate.R", "bound_certificate needs certificate.R")


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Read, parse and validate a config file, applying CLI overrides."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    cfg = parse_config(text, str(path))
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.out = out
    return cfg


def schema_text() -> str:
    """Human-readable grammar of the config format."""
    rows = [
        "viscolab experiment config (TOML subset)",
        "",
        "  key = value            numbers, strings, true/false, [lists]",
        "  [section] / [a.b]      dotted sections; dotted keys (a.b = v) are equivalent",
        "  expressions            strings in x0, x1, r and " + ", ".join(sorted(EXPR_NAMES)),
        "  [expect] metric = [op, value]   op in " + " ".join(EXPECT_OPS),
        "",
    ]
    for sec, keys in SCHEMA.items():
        if sec == "expect":
            continue
        rows.append(f"[{sec}]" if sec else "(top level)")
        for k, (typ, default, doc) in keys.items():
            d = "required" if default is None and (sec, k) in (("", "kind"), ("domain", "shape")) else f"default {default!r}"
            rows.append(f"  {k:<20} {typ:<6} {d:<28} {doc}")
        rows.append("")
    return "\n".join(rows)


def is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
