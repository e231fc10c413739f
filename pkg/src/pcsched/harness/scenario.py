"""Scenario files: loading, validation, defaults and canonical serialization.

A scenario is a YAML mapping. Unknown keys are rejected and every
validation error names the offending field and its line in the file. The
full grammar is documented in ``docs/scenario-format.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import yaml

from ..contention import FIELDS, ContentionVector
from ..exceptions import BadConfig, ParseError, ValidationError
from ..queueing import ServiceTopology
from ..scheduler import SchedulerConfig
from ..sim.engine import MigrationCostModel, Service, SimConfig
from ..sim.groundtruth import DISTRIBUTIONS, GroundTruth, ServiceClass
from ..sim.policies import parse_policy
from ..sim.workload import JobClass, SizeLevel, generate_interference_trace


@dataclass(frozen=True)
class StageSpec:
    name: str
    service_class: str
    components: int


@dataclass(frozen=True)
class SchedulerSettings:
    epsilon_ms: float = 5.0
    interval_s: float = 600.0
    max_iterations: int | None = None

    def to_config(self):
        return SchedulerConfig(epsilon=self.epsilon_ms / 1000.0, max_iterations=self.max_iterations)


@dataclass(frozen=True)
class SimSettings:
    cancel_delay_ms: float = 0.5
    cancel_on: str = "finish"
    network_delay_ms: float = 0.0
    queue_bound: int = 100_000
    drain_limit_s: float | None = None
    ri_window: int = 10_000
    ri_prior_ms: float = 50.0
    monitor_period_s: float = 1.0
    micro_period_s: float = 60.0
    monitor_noise: float = 0.0
    migration_delay_s: float = 0.15


@dataclass(frozen=True)
class PredictionSettings:
    training_levels: int = 40
    eval_levels: int = 30
    seconds_per_level: int = 10
    draws_per_second: int = 20
    max_colocated: int = 1
    service_class: str | None = None  # None evaluates every class


@dataclass(frozen=True)
class ScenarioConfig:
    stages: tuple
    nodes: int
    classes: tuple
    arrival_rates: tuple
    name: str = "scenario"
    placement: object = "round-robin"  # or mapping component id -> node id
    background: ContentionVector = field(default_factory=ContentionVector)
    ground_truth: GroundTruth = field(default_factory=GroundTruth)
    job_mix: tuple = ()
    policies: tuple = ("basic", "pcs")
    horizon_s: float = 2000.0
    seeds: tuple = (1,)
    scheduler: SchedulerSettings = field(default_factory=SchedulerSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    prediction: PredictionSettings = field(default_factory=PredictionSettings)
    output_dir: str | None = None
    parallelism: int = 1

    # -- derived objects ----------------------------------------------------

    @property
    def node_ids(self):
        return tuple(f"n{j}" for j in range(self.nodes))

    @property
    def component_stages(self):
        return [tuple(f"{s.name}-{i}" for i in range(s.components)) for s in self.stages]

    def class_by_name(self):
        return {c.name: c for c in self.classes}

    def initial_placement(self):
        if isinstance(self.placement, str):
            comps = [c for stage in self.component_stages for c in stage]
            return {c: f"n{i % self.nodes}" for i, c in enumerate(comps)}
        return dict(self.placement)

    def topology(self):
        return ServiceTopology(self.component_stages, self.initial_placement())

    def service(self):
        classes = self.class_by_name()
        comp_class = {}
        for spec, comps in zip(self.stages, self.component_stages):
            for c in comps:
                comp_class[c] = classes[spec.service_class]
        background = {n: self.background for n in self.node_ids}
        return Service(self.topology(), comp_class, self.node_ids, background)

    def interference_trace(self, seed):
        return generate_interference_trace(self.node_ids, self.job_mix, self.horizon_s, seed)

    def sim_config(self, record_jobs=False):
        s = self.sim
        return SimConfig(
            cancel_delay=s.cancel_delay_ms / 1000.0,
            cancel_on=s.cancel_on,
            network_delay=s.network_delay_ms / 1000.0,
            queue_bound=s.queue_bound,
            drain_limit=s.drain_limit_s,
            ri_window=s.ri_window,
            ri_prior=s.ri_prior_ms / 1000.0,
            monitor_period=s.monitor_period_s,
            micro_period=s.micro_period_s,
            monitor_noise=s.monitor_noise,
            migration=MigrationCostModel(s.migration_delay_s),
            record_jobs=record_jobs,
        )

    def policy(self, text):
        return parse_policy(text, self.scheduler.to_config(), self.scheduler.interval_s)


# -- parsing ------------------------------------------------------------------


class _Node:
    """A parsed YAML value together with the line it started on."""

    __slots__ = ("value", "line")

    def __init__(self, value, line):
        self.value = value
        self.line = line


def _compose(text, source):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ParseError(f"{source}: {getattr(exc, 'problem', exc)}{where}") from None
    if root is None:
        raise ParseError(f"{source}: empty scenario file")
    constructor = yaml.SafeLoader("")

    def walk(node):
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = constructor.construct_object(key_node)
                if key in out:
                    raise ValidationError(str(key), "duplicate key", key_node.start_mark.line + 1)
                out[key] = walk(value_node)
            return _Node(out, line)
        if isinstance(node, yaml.SequenceNode):
            return _Node([walk(v) for v in node.value], line)
        return _Node(constructor.construct_object(node), line)

    return walk(root)


class _Reader:
    def __init__(self, node, path):
        if not isinstance(node.value, dict):
            raise ValidationError(path or "<root>", "expected a mapping", node.line)
        self.node = node
        self.path = path
        self.used = set()

    def _field(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.node.value

    def raw(self, key):
        self.used.add(key)
        return self.node.value[key]

    def line(self, key):
        return self.node.value[key].line if key in self.node.value else self.node.line

    def get(self, key, kind, default=..., check=None, message=None):
        name = self._field(key)
        if key not in self.node.value:
            if default is ...:
                raise ValidationError(name, "required field missing", self.node.line)
            return default
        node = self.raw(key)
        value = node.value
        if value is None and default is None:
            return None
        value = _coerce(name, value, kind, node.line)
        if check is not None and not check(value):
            raise ValidationError(name, message or f"invalid value {value!r}", node.line)
        return value

    def sub(self, key):
        if key not in self.node.value:
            return None
        return _Reader(self.raw(key), self._field(key))

    def items(self, key):
        if key not in self.node.value:
            return None
        node = self.raw(key)
        if not isinstance(node.value, list):
            raise ValidationError(self._field(key), "expected a list", node.line)
        return node

    def finish(self):
        extra = sorted(set(self.node.value) - self.used, key=str)
        if extra:
            key = extra[0]
            raise ValidationError(self._field(str(key)), "unknown field", self.node.value[key].line)


def _coerce(name, value, kind, line):
    if isinstance(value, (dict, list)):
        raise ValidationError(name, f"expected {kind.__name__}, got a {type(value).__name__}", line)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(name, f"expected a number, got {value!r}", line)
        value = float(value)
        if not math.isfinite(value):
            raise ValidationError(name, "must be finite", line)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(name, f"expected an integer, got {value!r}", line)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ValidationError(name, f"expected a string, got {value!r}", line)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ValidationError(name, f"expected true/false, got {value!r}", line)
        return value
    return value


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _vector(reader, key):
    sub = reader.sub(key)
    if sub is None:
        return ContentionVector()
    vals = {f: sub.get(f, float, 0.0, _non_negative, "must be >= 0") for f in FIELDS}
    sub.finish()
    try:
        return ContentionVector(**vals)
    except ValueError as exc:
        raise ValidationError(sub.path, str(exc), sub.node.line) from None


def _weights(reader, key):
    sub = reader.sub(key)
    if sub is None:
        return (0.0, 0.0, 0.0, 0.0)
    vals = tuple(sub.get(f, float, 0.0, _non_negative, "must be >= 0") for f in FIELDS)
    sub.finish()
    return vals


def _float_list(reader, key, check, message, required=True):
    node = reader.items(key)
    name = reader._field(key)
    if node is None:
        if required:
            raise ValidationError(name, "required field missing", reader.node.line)
        return None
    out = []
    for i, item in enumerate(node.value):
        v = _coerce(f"{name}[{i}]", item.value, float, item.line)
        if not check(v):
            raise ValidationError(f"{name}[{i}]", message, item.line)
        out.append(v)
    return tuple(out), node


def _parse_stage(item, i):
    r = _Reader(item, f"stages[{i}]")
    spec = StageSpec(
        name=r.get("name", str),
        service_class=r.get("class", str),
        components=r.get("components", int, check=_positive, message="must be >= 1"),
    )
    r.finish()
    return spec


def _parse_class(item, i):
    r = _Reader(item, f"classes[{i}]")
    name = r.get("name", str)
    base = r.get("base_ms", float, check=_positive, message="must be > 0")
    cls = ServiceClass(name, base / 1000.0, _weights(r, "sensitivity"), _vector(r, "footprint"))
    r.finish()
    return cls


def _parse_job(item, i, node_ids):
    r = _Reader(item, f"job_mix[{i}]")
    name = r.get("name", str)
    rate = r.get("rate_per_node", float, check=_non_negative, message="must be >= 0")
    dur = _float_list(r, "duration_s", _positive, "must be > 0", required=False)
    sizes = ()
    if r.has("sizes"):
        node = r.items("sizes")
        levels = []
        for k, sitem in enumerate(node.value):
            sr = _Reader(sitem, f"job_mix[{i}].sizes[{k}]")
            size = sr.get("size_gb", float, check=_positive, message="must be > 0")
            levels.append(SizeLevel(size, _vector(sr, "footprint")))
            sr.finish()
        sizes = tuple(levels)
    per_gb = _vector(r, "footprint_per_gb")
    size_range = _float_list(r, "size_range_gb", _positive, "must be > 0", required=False)
    nodes = ()
    if r.has("nodes"):
        node = r.items("nodes")
        nodes = tuple(_coerce(f"job_mix[{i}].nodes", n.value, str, n.line) for n in node.value)
        for n in node.value:
            if n.value not in node_ids:
                raise ValidationError(f"job_mix[{i}].nodes", f"unknown node {n.value!r}", n.line)
    kwargs = {}
    for key, parsed in (("duration_s", dur), ("size_range_gb", size_range)):
        if parsed is not None:
            values, lnode = parsed
            if len(values) != 2 or values[0] > values[1]:
                raise ValidationError(f"job_mix[{i}].{key}", "expected [min, max]", lnode.line)
            kwargs[key] = values
    r.finish()
    try:
        return JobClass(name, rate, sizes=sizes, footprint_per_gb=per_gb, nodes=nodes, **kwargs)
    except BadConfig as exc:
        raise ValidationError(f"job_mix[{i}]", str(exc), item.line) from None


def parse_scenario(text, source="<string>"):
    """Parse scenario text into a validated :class:`ScenarioConfig`."""
    root = _compose(text, source)
    r = _Reader(root, "")

    stages_node = r.items("stages")
    if stages_node is None:
        raise ValidationError("stages", "required field missing", root.line)
    if not stages_node.value:
        raise ValidationError("stages", "at least one stage is required", stages_node.line)
    stages = tuple(_parse_stage(item, i) for i, item in enumerate(stages_node.value))
    names = [s.name for s in stages]
    if len(set(names)) != len(names):
        raise ValidationError("stages", "stage names must be unique", stages_node.line)

    nodes = r.get("nodes", int, check=_positive, message="must be >= 1")
    node_ids = tuple(f"n{j}" for j in range(nodes))

    classes_node = r.items("classes")
    if classes_node is None or not classes_node.value:
        raise ValidationError("classes", "at least one service class is required", r.line("classes"))
    classes = tuple(_parse_class(item, i) for i, item in enumerate(classes_node.value))
    class_names = {c.name for c in classes}
    for i, s in enumerate(stages):
        if s.service_class not in class_names:
            raise ValidationError(
                f"stages[{i}].class", f"unknown service class {s.service_class!r}", stages_node.value[i].line
            )

    rates, rates_node = _float_list(r, "arrival_rates", _positive, "must be > 0")
    if not rates:
        raise ValidationError("arrival_rates", "at least one arrival rate is required", rates_node.line)

    cfg = {
        "stages": stages,
        "nodes": nodes,
        "classes": classes,
        "arrival_rates": rates,
    }
    if r.has("name"):
        cfg["name"] = r.get("name", str)

    if r.has("placement"):
        pnode = r.raw("placement")
        if isinstance(pnode.value, str):
            if pnode.value != "round-robin":
                raise ValidationError("placement", "expected 'round-robin' or a mapping", pnode.line)
            cfg["placement"] = "round-robin"
        else:
            pr = _Reader(pnode, "placement")
            comps = [c for s in stages for c in (f"{s.name}-{i}" for i in range(s.components))]
            mapping = {}
            for c in comps:
                mapping[c] = pr.get(c, str, check=lambda n: n in node_ids, message="unknown node")
            pr.finish()
            cfg["placement"] = mapping

    cfg["background"] = _vector(r, "background")

    gsub = r.sub("ground_truth")
    if gsub is not None:
        cfg["ground_truth"] = GroundTruth(
            distribution=gsub.get(
                "distribution", str, "lognormal", lambda d: d in DISTRIBUTIONS, f"expected one of {DISTRIBUTIONS}"
            ),
            cv=gsub.get("cv", float, 0.3, _non_negative, "must be >= 0"),
            nonlinearity=gsub.get("nonlinearity", float, 0.0, _non_negative, "must be >= 0"),
        )
        gsub.finish()

    jobs_node = r.items("job_mix")
    if jobs_node is not None:
        cfg["job_mix"] = tuple(_parse_job(item, i, node_ids) for i, item in enumerate(jobs_node.value))

    if r.has("policies"):
        pnode = r.items("policies")
        pols = []
        for i, item in enumerate(pnode.value):
            text = _coerce(f"policies[{i}]", item.value, str, item.line)
            try:
                parse_policy(text)
            except BadConfig as exc:
                raise ValidationError(f"policies[{i}]", str(exc), item.line) from None
            pols.append(text)
        if not pols:
            raise ValidationError("policies", "at least one policy is required", pnode.line)
        cfg["policies"] = tuple(pols)

    if r.has("horizon_s"):
        cfg["horizon_s"] = r.get("horizon_s", float, check=_positive, message="must be > 0")

    if r.has("seeds"):
        snode = r.items("seeds")
        seeds = tuple(_coerce(f"seeds[{i}]", s.value, int, s.line) for i, s in enumerate(snode.value))
        if not seeds:
            raise ValidationError("seeds", "at least one seed is required", snode.line)
        cfg["seeds"] = seeds

    ssub = r.sub("scheduler")
    if ssub is not None:
        cfg["scheduler"] = SchedulerSettings(
            epsilon_ms=ssub.get("epsilon_ms", float, 5.0, _non_negative, "must be >= 0"),
            interval_s=ssub.get("interval_s", float, 600.0, _positive, "must be > 0"),
            max_iterations=ssub.get("max_iterations", int, None, _positive, "must be >= 1"),
        )
        ssub.finish()

    simsub = r.sub("sim")
    if simsub is not None:
        d = SimSettings()
        cfg["sim"] = SimSettings(
            cancel_delay_ms=simsub.get("cancel_delay_ms", float, d.cancel_delay_ms, _non_negative, "must be >= 0"),
            cancel_on=simsub.get(
                "cancel_on", str, d.cancel_on, lambda v: v in ("finish", "start"), "expected 'finish' or 'start'"
            ),
            network_delay_ms=simsub.get("network_delay_ms", float, d.network_delay_ms, _non_negative, "must be >= 0"),
            queue_bound=simsub.get("queue_bound", int, d.queue_bound, _positive, "must be >= 1"),
            drain_limit_s=simsub.get("drain_limit_s", float, None, _positive, "must be > 0"),
            ri_window=simsub.get("ri_window", int, d.ri_window, _positive, "must be >= 1"),
            ri_prior_ms=simsub.get("ri_prior_ms", float, d.ri_prior_ms, _positive, "must be > 0"),
            monitor_period_s=simsub.get("monitor_period_s", float, d.monitor_period_s, _positive, "must be > 0"),
            micro_period_s=simsub.get("micro_period_s", float, d.micro_period_s, _positive, "must be > 0"),
            monitor_noise=simsub.get("monitor_noise", float, d.monitor_noise, _non_negative, "must be >= 0"),
            migration_delay_s=simsub.get(
                "migration_delay_s", float, d.migration_delay_s, _non_negative, "must be >= 0"
            ),
        )
        simsub.finish()

    psub = r.sub("prediction")
    if psub is not None:
        d = PredictionSettings()
        cls = psub.get("service_class", str, None)
        if cls is not None and cls not in class_names:
            raise ValidationError("prediction.service_class", f"unknown service class {cls!r}", psub.line("service_class"))
        cfg["prediction"] = PredictionSettings(
            training_levels=psub.get("training_levels", int, d.training_levels, _positive, "must be >= 1"),
            eval_levels=psub.get("eval_levels", int, d.eval_levels, _positive, "must be >= 1"),
            seconds_per_level=psub.get("seconds_per_level", int, d.seconds_per_level, _positive, "must be >= 1"),
            draws_per_second=psub.get("draws_per_second", int, d.draws_per_second, _positive, "must be >= 1"),
            max_colocated=psub.get("max_colocated", int, d.max_colocated, _non_negative, "must be >= 0"),
            service_class=cls,
        )
        psub.finish()

    if r.has("output_dir"):
        cfg["output_dir"] = r.get("output_dir", str, None)
    if r.has("parallelism"):
        cfg["parallelism"] = r.get("parallelism", int, check=_positive, message="must be >= 1")

    r.finish()
    return ScenarioConfig(**cfg)


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    return parse_scenario(text, str(path))


# -- serialization -------------------------------------------------------------


def _vec_dict(vec):
    return {f: v for f, v in vec.as_dict().items() if v != 0}


def _num(x):
    return int(x) if float(x).is_integer() and abs(x) < 1e15 else x


def scenario_to_dict(cfg):
    """Plain-data form with every field written out explicitly."""
    gt = cfg.ground_truth
    out = {
        "name": cfg.name,
        "stages": [{"name": s.name, "class": s.service_class, "components": s.components} for s in cfg.stages],
        "nodes": cfg.nodes,
        "placement": cfg.placement if isinstance(cfg.placement, str) else dict(cfg.placement),
        "background": _vec_dict(cfg.background),
        "classes": [
            {
                "name": c.name,
                "base_ms": _num(round(c.base_s * 1000.0, 12)),
                "sensitivity": {f: _num(v) for f, v in zip(FIELDS, c.sensitivity) if v != 0},
                "footprint": _vec_dict(c.footprint),
            }
            for c in cfg.classes
        ],
        "ground_truth": {"distribution": gt.distribution, "cv": gt.cv, "nonlinearity": gt.nonlinearity},
        "job_mix": [_job_dict(j) for j in cfg.job_mix],
        "arrival_rates": [_num(x) for x in cfg.arrival_rates],
        "policies": list(cfg.policies),
        "horizon_s": _num(cfg.horizon_s),
        "seeds": list(cfg.seeds),
        "scheduler": {k: v for k, v in _plain(cfg.scheduler).items() if v is not None},
        "sim": {k: v for k, v in _plain(cfg.sim).items() if v is not None},
        "prediction": {k: v for k, v in _plain(cfg.prediction).items() if v is not None},
        "parallelism": cfg.parallelism,
    }
    if cfg.output_dir is not None:
        out["output_dir"] = cfg.output_dir
    return out


def _plain(obj):
    return {f.name: (_num(v) if isinstance(v, float) else v) for f in fields(obj) for v in [getattr(obj, f.name)]}


def _job_dict(job):
    out = {"name": job.name, "rate_per_node": job.rate_per_node, "duration_s": [_num(x) for x in job.duration_s]}
    if job.sizes:
        out["sizes"] = [{"size_gb": _num(s.size_gb), "footprint": _vec_dict(s.footprint)} for s in job.sizes]
    else:
        out["footprint_per_gb"] = _vec_dict(job.footprint_per_gb)
        out["size_range_gb"] = [_num(x) for x in job.size_range_gb]
    if job.nodes:
        out["nodes"] = list(job.nodes)
    return out


class _Dumper(yaml.SafeDumper):
    pass


def _represent_list(dumper, data):
    flow = all(not isinstance(x, (dict, list)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _represent_list)


def serialize_scenario(cfg):
    """Canonical YAML text; ``parse_scenario(serialize_scenario(c)) == c``."""
    return yaml.dump(scenario_to_dict(cfg), Dumper=_Dumper, sort_keys=False, default_flow_style=False, width=100)


def with_overrides(cfg, **changes):
    return replace(cfg, **changes)
