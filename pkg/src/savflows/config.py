"""Run configuration: flat key-value text with dotted section prefixes.

The format is deliberately diff-friendly: one `section.key = value` per
line, `#` comments, whitespace-separated lists.  Parsing is strict - an
unknown key is an error, as is a missing required one.  A parsed config
serializes back to canonical text with every default materialized, so the
manifest written by a run is itself a valid config reproducing the run.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .models import INITIALS, MODELS
from .schemes import ALL_VARIANTS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConvergenceSection:
    variants: tuple[str, ...]
    orders: tuple[int, ...]
    dts: tuple[float, ...]
    t_final: float
    norm: str = "h2"


@dataclass(frozen=True)
class CompareSection:
    variants: tuple[str, ...]
    dts: tuple[float, ...]
    ref_dt: float
    t_final: float
    ref_order: int = 2


@dataclass(frozen=True)
class RunConfig:
    model_name: str
    grid_n: tuple[int, ...]
    grid_l: tuple[float, ...]
    model_params: dict = field(default_factory=dict)
    grid_origin: Optional[tuple[float, ...]] = None
    init_name: Optional[str] = None
    init_params: dict = field(default_factory=dict)
    manufactured: bool = False
    scheme_variant: Optional[str] = None
    scheme_order: int = 2
    dt: Optional[float] = None
    t_final: Optional[float] = None
    gamma: float = 0.95
    eps_k: float = 1e-14
    eta_exponent: Optional[int] = None
    dealias: bool = False
    out_dir: Optional[str] = None
    snapshot_times: tuple[float, ...] = ()
    flush_every: int = 100
    figures: bool = True
    seed: int = 0
    convergence: Optional[ConvergenceSection] = None
    compare: Optional[CompareSection] = None


def _parse_value(raw: str):
    parts = raw.split()
    if not parts:
        raise ConfigError("empty value")
    if len(parts) > 1:
        return [_parse_value(p) for p in parts]
    token = parts[0]
    low = token.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def _read_pairs(text: str) -> dict[str, object]:
    pairs: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = _parse_value(raw)
    return pairs


def _pop(pairs, key, kind, default=..., required=False):
    if key not in pairs:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return None if default is ... else default
    value = pairs.pop(key)
    return _coerce(key, value, kind)


def _coerce(key, value, kind):
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a name, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if kind.endswith("list"):
        items = value if isinstance(value, list) else [value]
        return tuple(_coerce(key, v, kind[:-4]) for v in items)
    raise AssertionError(kind)


def _section(pairs: dict, prefix: str) -> dict:
    keys = [k for k in pairs if k.startswith(prefix + ".")]
    return {k[len(prefix) + 1:]: pairs.pop(k) for k in keys}


def parse_config(text: str) -> RunConfig:
    pairs = _read_pairs(text)

    model_name = _pop(pairs, "model.name", "str", required=True)
    if model_name not in MODELS:
        raise ConfigError(f"model.name: unknown model {model_name!r} "
                          f"(known: {', '.join(sorted(MODELS))})")
    model_params = _section(pairs, "model")

    grid_n = _pop(pairs, "grid.n", "intlist", required=True)
    grid_l = _pop(pairs, "grid.l", "floatlist", required=True)
    grid_origin = _pop(pairs, "grid.origin", "floatlist")
    dim = _pop(pairs, "grid.dim", "int")
    if dim is not None and dim != len(grid_n):
        raise ConfigError(f"grid.dim: {dim} contradicts grid.n of length {len(grid_n)}")

    init_name = _pop(pairs, "init.name", "str")
    init_params = _section(pairs, "init")
    if init_name is not None:
        if init_name not in INITIALS:
            raise ConfigError(f"init.name: unknown initial condition {init_name!r}")
        _check_params_init(init_name, init_params)
    elif init_params:
        stray = next(iter(init_params))
        raise ConfigError(f"init.{stray}: init.name must be set first")

    manufactured = _pop(pairs, "forcing.manufactured", "bool", default=False)

    scheme_variant = _pop(pairs, "scheme.variant", "str")
    if scheme_variant is not None and scheme_variant not in ALL_VARIANTS:
        raise ConfigError(f"scheme.variant: unknown variant {scheme_variant!r} "
                          f"(known: {', '.join(ALL_VARIANTS)})")
    scheme_order = _pop(pairs, "scheme.order", "int", default=2)
    dt = _pop(pairs, "scheme.dt", "float")
    if dt is not None and dt <= 0:
        raise ConfigError(f"scheme.dt: must be positive, got {dt}")
    t_final = _pop(pairs, "scheme.t_final", "float")
    if t_final is not None and dt is not None and t_final < dt:
        raise ConfigError(f"scheme.t_final: must be at least scheme.dt, got {t_final}")
    gamma = _pop(pairs, "scheme.gamma", "float", default=0.95)
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"scheme.gamma: must lie in [0, 1], got {gamma}")
    eps_k = _pop(pairs, "scheme.eps_k", "float", default=1e-14)
    eta_exponent = _pop(pairs, "scheme.eta_exponent", "int")
    dealias = _pop(pairs, "scheme.dealias", "bool", default=False)

    out_dir = _pop(pairs, "output.dir", "str")
    snapshot_times = _pop(pairs, "output.snapshot_times", "floatlist", default=())
    flush_every = _pop(pairs, "output.flush_every", "int", default=100)
    figures = _pop(pairs, "output.figures", "bool", default=True)
    seed = _pop(pairs, "seed", "int", default=0)

    convergence = None
    if any(k.startswith("convergence.") for k in pairs):
        convergence = ConvergenceSection(
            variants=_pop(pairs, "convergence.variants", "strlist", required=True),
            orders=_pop(pairs, "convergence.orders", "intlist", required=True),
            dts=_pop(pairs, "convergence.dts", "floatlist", required=True),
            t_final=_pop(pairs, "convergence.t_final", "float", required=True),
            norm=_pop(pairs, "convergence.norm", "str", default="h2"),
        )
        if convergence.norm not in ("l2", "h2"):
            raise ConfigError(f"convergence.norm: expected l2 or h2, "
                              f"got {convergence.norm!r}")
        if len(convergence.dts) < 3 or any(
                b >= a for a, b in zip(convergence.dts, convergence.dts[1:])):
            raise ConfigError("convergence.dts: need a strictly decreasing ladder "
                              "with at least 3 rungs")

    compare = None
    if any(k.startswith("compare.") for k in pairs):
        compare = CompareSection(
            variants=_pop(pairs, "compare.variants", "strlist", required=True),
            dts=_pop(pairs, "compare.dts", "floatlist", required=True),
            ref_dt=_pop(pairs, "compare.ref_dt", "float", required=True),
            t_final=_pop(pairs, "compare.t_final", "float", required=True),
            ref_order=_pop(pairs, "compare.ref_order", "int", default=2),
        )
        if compare.ref_dt > min(compare.dts) / 10.0:
            raise ConfigError("compare.ref_dt: reference step must be at most a "
                              "tenth of the smallest compared step")

    if pairs:
        raise ConfigError(f"unknown key {next(iter(pairs))!r}")

    entry = MODELS[model_name]
    missing_ok = {"alpha_vol", "beta_area"} if model_name == "vesicle" else set()
    allowed = set(entry.required) | set(entry.optional) | missing_ok
    for key in model_params:
        if key not in allowed:
            raise ConfigError(f"unknown key 'model.{key}' "
                              f"(allowed: {', '.join(sorted(allowed))})")
    for key in entry.required:
        if key not in model_params and key not in missing_ok:
            raise ConfigError(f"missing required key 'model.{key}'")

    return RunConfig(
        model_name=model_name, model_params=model_params,
        grid_n=grid_n, grid_l=grid_l, grid_origin=grid_origin,
        init_name=init_name, init_params=init_params, manufactured=manufactured,
        scheme_variant=scheme_variant, scheme_order=scheme_order, dt=dt,
        t_final=t_final, gamma=gamma, eps_k=eps_k, eta_exponent=eta_exponent,
        dealias=dealias, out_dir=out_dir, snapshot_times=snapshot_times,
        flush_every=flush_every, figures=figures, seed=seed,
        convergence=convergence, compare=compare,
    )


def _check_params_init(name: str, given: dict):
    entry = INITIALS[name]
    allowed = set(entry.required) | set(entry.optional)
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown key 'init.{key}' "
                              f"(allowed: {', '.join(sorted(allowed))})")
    for key in entry.required:
        if key not in given:
            raise ConfigError(f"missing required key 'init.{key}'")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt_value(x) for x in v)
    return str(v)


def config_to_text(cfg: RunConfig) -> str:
    """Canonical serialization with all defaults materialized."""
    lines = [f"model.name = {cfg.model_name}"]
    for key in sorted(cfg.model_params):
        lines.append(f"model.{key} = {_fmt_value(cfg.model_params[key])}")
    lines.append(f"grid.n = {_fmt_value(cfg.grid_n)}")
    lines.append(f"grid.l = {_fmt_value(cfg.grid_l)}")
    if cfg.grid_origin is not None:
        lines.append(f"grid.origin = {_fmt_value(cfg.grid_origin)}")
    if cfg.init_name is not None:
        lines.append(f"init.name = {cfg.init_name}")
        for key in sorted(cfg.init_params):
            lines.append(f"init.{key} = {_fmt_value(cfg.init_params[key])}")
    if cfg.manufactured:
        lines.append("forcing.manufactured = true")
    if cfg.scheme_variant is not None:
        lines.append(f"scheme.variant = {cfg.scheme_variant}")
        lines.append(f"scheme.order = {cfg.scheme_order}")
        if cfg.dt is not None:
            lines.append(f"scheme.dt = {_fmt_value(cfg.dt)}")
        if cfg.t_final is not None:
            lines.append(f"scheme.t_final = {_fmt_value(cfg.t_final)}")
        lines.append(f"scheme.gamma = {_fmt_value(cfg.gamma)}")
        lines.append(f"scheme.eps_k = {_fmt_value(cfg.eps_k)}")
        if cfg.eta_exponent is not None:
            lines.append(f"scheme.eta_exponent = {cfg.eta_exponent}")
        lines.append(f"scheme.dealias = {_fmt_value(cfg.dealias)}")
    if cfg.out_dir is not None:
        lines.append(f"output.dir = {cfg.out_dir}")
    if cfg.snapshot_times:
        lines.append(f"output.snapshot_times = {_fmt_value(cfg.snapshot_times)}")
    lines.append(f"output.flush_every = {cfg.flush_every}")
    lines.append(f"output.figures = {_fmt_value(cfg.figures)}")
    lines.append(f"seed = {cfg.seed}")
    if cfg.convergence is not None:
        c = cfg.convergence
        lines.append(f"convergence.variants = {_fmt_value(list(c.variants))}")
        lines.append(f"convergence.orders = {_fmt_value(list(c.orders))}")
        lines.append(f"convergence.dts = {_fmt_value(list(c.dts))}")
        lines.append(f"convergence.t_final = {_fmt_value(c.t_final)}")
        lines.append(f"convergence.norm = {c.norm}")
    if cfg.compare is not None:
        c = cfg.compare
        lines.append(f"compare.variants = {_fmt_value(list(c.variants))}")
        lines.append(f"compare.dts = {_fmt_value(list(c.dts))}")
        lines.append(f"compare.ref_dt = {_fmt_value(c.ref_dt)}")
        lines.append(f"compare.ref_order = {c.ref_order}")
        lines.append(f"compare.t_final = {_fmt_value(c.t_final)}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: RunConfig, out_dir=None, seed=None) -> RunConfig:
    updates = {}
    if out_dir is not None:
        updates["out_dir"] = str(out_dir)
    if seed is not None:
        updates["seed"] = int(seed)
    return replace(cfg, **updates) if updates else cfg
