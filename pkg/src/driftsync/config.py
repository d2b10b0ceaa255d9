"""Flat ``key = value`` experiment configuration files.

Lines look like ``strategy.delta = 0.5``; ``#`` starts a comment. Every key
is optional except those listed in ``REQUIRED`` plus the ones the chosen
strategy or compression needs (``strategy.delta``, ``strategy.period``,
``learner.budget``, ``learner.tolerance``).
"""
from __future__ import annotations

import dataclasses

from .learners import Compression, LearnerParams, LossSpec
from .protocol import ByteCostModel, SyncStrategy
from .rkhs import KernelSpec
from .simulator import ExperimentConfig
from .streams import StreamSpec

__all__ = ["ConfigError", "parse_config", "load_config", "dump_config", "KEYS", "REQUIRED"]

REQUIRED = ("m", "T", "stream.kind", "learner.model", "strategy.kind")


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


KEYS = {
    "m": int,
    "T": int,
    "seed": int,
    "metrics_every": int,
    "stream.kind": str,
    "stream.d": int,
    "stream.cluster_sd": float,
    "stream.drift_rate": float,
    "stream.angular_rate": float,
    "stream.margin": float,
    "stream.noise": float,
    "stream.separation": float,
    "stream.path": str,
    "stream.label_column": int,
    "stream.partition": str,
    "stream.normalize": _bool,
    "stream.header": _bool,
    "stream.positive_label": str,
    "stream.real_labels": _bool,
    "learner.model": str,
    "learner.loss": str,
    "learner.learn_rate": float,
    "learner.reg": float,
    "learner.compression": str,
    "learner.budget": int,
    "learner.tolerance": float,
    "kernel.kind": str,
    "kernel.bandwidth": float,
    "kernel.degree": int,
    "kernel.offset": float,
    "strategy.kind": str,
    "strategy.period": int,
    "strategy.delta": float,
    "strategy.check_period": int,
    "costs.bytes_per_sv": int,
    "costs.bytes_per_coeff": int,
    "costs.bytes_per_linear_model": int,
}


class ConfigError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, key)
        try:
            values[key] = KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, key) from None
        lines[key] = lineno

    def need(key):
        if key not in values:
            raise ConfigError(f"missing required key {key!r} in {source}", key=key)
        return values[key]

    for key in REQUIRED:
        need(key)

    def build(what, fn):
        # attribute constructor errors to the line of the first related key
        prefix = what + "."
        related = [lines[k] for k in lines if k.startswith(prefix) or k == what]
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid {what} settings: {exc}", min(related, default=None)) from None

    skind = values["strategy.kind"]
    if skind == "dynamic":
        need("strategy.delta")
    if skind == "periodic":
        need("strategy.period")
    strategy = build("strategy", lambda: SyncStrategy(
        skind, values.get("strategy.period", 1), values.get("strategy.delta", 1.0),
        values.get("strategy.check_period", 1)))

    ckind = values.get("learner.compression", "none")
    if ckind == "truncate":
        need("learner.budget")
    if ckind == "project":
        need("learner.tolerance")
    compression = build("learner", lambda: Compression(ckind, values.get("learner.budget", 50),
                                                       values.get("learner.tolerance", 0.1)))
    params = build("learner", lambda: LearnerParams(values.get("learner.learn_rate", 0.5),
                                                    values.get("learner.reg", 0.0), compression))
    loss = build("learner", lambda: LossSpec(values.get("learner.loss", "hinge")))

    model = values["learner.model"]
    if model == "kernel":
        kernel = build("kernel", lambda: KernelSpec(values.get("kernel.kind", "gaussian"),
                                                    values.get("kernel.bandwidth", 1.0),
                                                    values.get("kernel.degree", 2),
                                                    values.get("kernel.offset", 1.0)))
    elif model == "linear":
        kernel = None
    else:
        raise ConfigError(f"learner.model must be 'kernel' or 'linear', got {model!r}",
                          lines["learner.model"], "learner.model")

    stream_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("stream.")}
    stream_kw["seed"] = values.get("seed", 0)
    stream = build("stream", lambda: StreamSpec(**stream_kw))

    costs = None
    cost_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("costs.")}
    if cost_kw:
        if stream.kind == "csv" and ("bytes_per_sv" not in cost_kw or "bytes_per_linear_model" not in cost_kw):
            # the csv dimension is unknown until the file is read
            raise ConfigError("csv streams that override costs must set costs.bytes_per_sv and "
                              "costs.bytes_per_linear_model", min(lines[f"costs.{k}"] for k in cost_kw))
        costs = build("costs", lambda: ByteCostModel.for_dim(stream.d, **cost_kw))

    return build("top-level", lambda: ExperimentConfig(
        values["m"], values["T"], stream, kernel, loss, params, strategy, costs,
        values.get("metrics_every", 1)))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize a config back to the flat format (parse_config round-trips it)."""
    s = cfg.stream
    out = [f"m = {cfg.m}", f"T = {cfg.T}", f"seed = {s.seed}", f"metrics_every = {cfg.metrics_every}"]
    defaults = StreamSpec(kind=s.kind, path=s.path)
    for f in dataclasses.fields(StreamSpec):
        if f.name == "seed":
            continue
        v = getattr(s, f.name)
        if f.name == "kind" or v != getattr(defaults, f.name):
            out.append(f"stream.{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    out.append(f"learner.model = {'linear' if cfg.linear else 'kernel'}")
    out.append(f"learner.loss = {cfg.loss.kind}")
    out.append(f"learner.learn_rate = {cfg.params.learn_rate!r}")
    out.append(f"learner.reg = {cfg.params.reg!r}")
    c = cfg.params.compression
    out.append(f"learner.compression = {c.kind}")
    if c.kind == "truncate":
        out.append(f"learner.budget = {c.budget}")
    if c.kind == "project":
        out.append(f"learner.tolerance = {c.tolerance!r}")
    if cfg.kernel is not None:
        k = cfg.kernel
        out += [f"kernel.kind = {k.kind}", f"kernel.bandwidth = {k.bandwidth!r}",
                f"kernel.degree = {k.degree}", f"kernel.offset = {k.offset!r}"]
    st = cfg.strategy
    out.append(f"strategy.kind = {st.kind}")
    if st.kind == "periodic":
        out.append(f"strategy.period = {st.period}")
    if st.kind == "dynamic":
        out += [f"strategy.delta = {st.delta!r}", f"strategy.check_period = {st.check_period}"]
    if cfg.costs is not None:
        out += [f"costs.bytes_per_sv = {cfg.costs.bytes_per_sv}",
                f"costs.bytes_per_coeff = {cfg.costs.bytes_per_coeff}",
                f"costs.bytes_per_linear_model = {cfg.costs.bytes_per_linear_model}"]
    return "\n".join(out) + "\n"
