"""INI-style run configuration with sections [problem], [discretization], [time], [tau], [output].

Example::

    [problem]
    name = trig            ; or experiment1, experiment2, soliton, two_soliton, zero
    a = 0
    b = 1
    beta = 0
    amplitude = 1
    wavenumber = 1
    frequency = 1

    [discretization]
    k = 2
    N = 16                 ; single run; use ``levels = 1..5`` for a convergence study

    [time]
    T = 0.1
    dt = 1e-3              ; or dt_rule = degree | h2 | h3 with dt_coeff
    scheme = midpoint

    [tau]
    tau_F = constant
    tau_F_value = 0

    [output]
    dir = out
"""

from __future__ import annotations

import configparser
import re
from pathlib import Path

from . import problems
from .experiments import DtRule, RunConfig
from .flux import FluxSpec, StabilizationParams, TauFRule
from .stepper import NewtonSettings


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section and key."""

    def __init__(self, message: str, section: str | None = None, key: str | None = None, line: int | None = None):
        self.section, self.key, self.line = section, key, line
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "")
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


ALLOWED = {
    "problem": {"name", "a", "b", "beta", "m", "amplitude", "wavenumber", "frequency", "phase"},
    "discretization": {"k", "n", "levels", "n_q"},
    "time": {"t", "dt", "dt_rule", "dt_coeff", "scheme"},
    "tau": {"tau_qu_plus", "tau_pu_plus", "tau_qu_minus", "tau_qp_minus", "tau_f", "tau_f_value"},
    "output": {"dir", "snapshot_every"},
    "newton": {"abs_tol", "rel_tol", "max_iters"},
    "init": {"mode"},
}
REQUIRED = {"problem": {"name"}, "discretization": {"k"}}
TRIG_KEYS = {"a", "b", "beta", "m", "amplitude", "wavenumber", "frequency", "phase"}


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = no
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), no)
    return out


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict):
        self.p, self.lines = parser, lines

    def err(self, msg, section, key=None):
        return ConfigError(msg, section, key, self.lines.get((section, key)) or self.lines.get((section, None)))

    def has(self, section, key):
        return self.p.has_option(section, key)

    def raw(self, section, key):
        return self.p.get(section, key).strip()

    def get(self, section, key, conv, default=None):
        if not self.has(section, key):
            return default
        text = self.raw(section, key)
        try:
            return conv(text)
        except ValueError:
            raise self.err(f"cannot parse {text!r} as {conv.__name__}", section, key) from None


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(text)
    return int(value)


def _levels(text: str) -> tuple:
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.|-|,)\s*(\d+)\s*", text)
    if not m:
        raise ValueError(text)
    return int(m.group(1)), int(m.group(2))


_levels.__name__ = "level range n0..n1"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    lines = _key_lines(text)
    r = _Reader(parser, lines)

    for section in parser.sections():
        if section not in ALLOWED:
            raise r.err("unknown section", section)
        for key in parser.options(section):
            if key not in ALLOWED[section]:
                raise r.err("unknown key", section, key)
    for section, keys in REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError(f"missing required section [{section}]")
        for key in keys:
            if not r.has(section, key):
                raise r.err(f"missing required key {key!r}", section, key)

    problem = _problem(r)
    k = r.get("discretization", "k", _int)
    if k < 0:
        raise r.err("k must be >= 0", "discretization", "k")
    N = r.get("discretization", "n", _int)
    levels = r.get("discretization", "levels", _levels)
    if N is not None and levels is not None:
        raise r.err("give either N or levels, not both", "discretization", "levels")
    if N is None and levels is None:
        raise r.err("missing required key 'N' (or 'levels')", "discretization", "n")
    if N is not None and N < 1:
        raise r.err("N must be >= 1", "discretization", "n")
    n_q = r.get("discretization", "n_q", _int)

    T = r.get("time", "t", float, 0.1)
    if not T > 0:
        raise r.err("T must be positive", "time", "t")
    scheme = r.get("time", "scheme", str, "midpoint")
    if scheme not in ("midpoint", "be", "backward_euler"):
        raise r.err(f"unknown scheme {scheme!r}", "time", "scheme")
    dt = r.get("time", "dt", float)
    rule = r.get("time", "dt_rule", str)
    coeff = r.get("time", "dt_coeff", float, 0.1)
    if dt is not None and rule is not None:
        raise r.err("give either dt or dt_rule, not both", "time", "dt_rule")
    try:
        dt_rule = DtRule("fixed", dt) if dt is not None else DtRule(rule or "degree", coeff)
    except ValueError as exc:
        key = "dt" if dt is not None else ("dt_rule" if rule and rule not in ("degree", "h2", "h3") else "dt_coeff")
        raise r.err(str(exc), "time", key) from None

    params = _params(r)
    newton = NewtonSettings(
        r.get("newton", "abs_tol", float, 1e-11),
        r.get("newton", "rel_tol", float, 1e-12),
        r.get("newton", "max_iters", _int, 25),
    )
    snap = r.get("output", "snapshot_every", _int)
    try:
        return RunConfig(
            experiment="custom",
            k=k,
            levels=levels or (0, 0),
            N=N,
            dt_rule=dt_rule,
            scheme=scheme,
            params=params,
            T=T,
            out_dir=r.get("output", "dir", str),
            snapshot_every=snap,
            init=r.get("init", "mode", str, "auto"),
            newton=newton,
            problem=problem,
            n_q=n_q,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _problem(r: _Reader):
    name = r.raw("problem", "name").lower()
    given = {k for k in r.p.options("problem")} - {"name"}
    if name in problems.REGISTRY or name in ("experiment_1", "experiment_2"):
        if given:
            raise r.err(f"named problem {name!r} takes no parameters", "problem", sorted(given)[0])
        return problems.REGISTRY[name.replace("_1", "1").replace("_2", "2")]()
    if name not in ("trig", "zero"):
        known = ", ".join(sorted(problems.REGISTRY) + ["trig", "zero"])
        raise r.err(f"unknown problem {name!r} (known: {known})", "problem", "name")
    a = r.get("problem", "a", float, 0.0)
    b = r.get("problem", "b", float, 1.0)
    if not a < b:
        raise r.err("need a < b", "problem", "b")
    m = r.get("problem", "m", _int, 2)
    if m < 1:
        raise r.err("flux exponent m must be >= 1", "problem", "m")
    flux = FluxSpec(r.get("problem", "beta", float, 0.0), m)
    if name == "zero":
        extra = given - {"a", "b", "beta", "m"}
        if extra:
            raise r.err("zero problem takes only a, b, beta, m", "problem", sorted(extra)[0])
        return problems.zero_problem(a, b, flux)
    return problems.trig_problem(
        r.get("problem", "amplitude", float, 1.0),
        r.get("problem", "wavenumber", float, 1.0),
        r.get("problem", "frequency", float, 1.0),
        r.get("problem", "phase", float, 0.0),
        a,
        b,
        flux,
    )


def _params(r: _Reader) -> StabilizationParams:
    d = StabilizationParams()
    kind = r.get("tau", "tau_f", str, "zero")
    value = r.get("tau", "tau_f_value", float, 0.0)
    if kind == "zero":
        rule = TauFRule.zero()
    elif kind == "constant":
        rule = TauFRule.constant(value)
    elif kind == "derivative_squared_plus_quarter":
        rule = TauFRule.derivative_squared_plus_quarter()
    else:
        raise r.err(f"unknown tau_F rule {kind!r}", "tau", "tau_f")
    return StabilizationParams(
        r.get("tau", "tau_qu_plus", float, d.tau_qu_plus),
        r.get("tau", "tau_pu_plus", float, d.tau_pu_plus),
        r.get("tau", "tau_qu_minus", float, d.tau_qu_minus),
        r.get("tau", "tau_qp_minus", float, d.tau_qp_minus),
        rule,
    )
