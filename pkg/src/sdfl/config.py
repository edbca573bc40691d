"""Experiment configuration: file schema, defaults, validation, hashing.

Config files are line-oriented `key = value` pairs under [section] headers;
`#` starts a comment. Unknown keys are an error (all of them are listed),
duplicate keys keep the last value with a warning, and every type error names
the offending key. Omitted keys take the defaults below, which reproduce the
reference experimental setup (gamma 5, mu 0.1, kappa in [10,15], delta 0.5,
u 0.1, d = n/2, tol 0.005 without noise and 0.0025/eps with it).

Required: problem.kind, problem.s, problem.m, and problem.n (linreg) or
problem.data (logreg).
"""

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass

from .privacy import PrivacyParams

ALGORITHMS = ("ceps", "dpsgd", "dpsgd_dn", "dpsgd_pc", "dfedavgm")


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "linreg"          # linreg | logreg
    n: int = 0                    # dimension (linreg only; 0 = unset)
    s: int = 0                    # sparsity budget (required)
    m: int = 0                    # node count (required)
    data: str = ""                # LibSVM path (logreg only)
    mi_min: int = 250
    mi_max: int = 750
    noise_scale: float = 0.5
    lam: float = 0.001


@dataclass(frozen=True)
class TopologyConfig:
    edge_prob: float = 0.5
    r: float = 0.2                # participation rate
    selection: str = "uniform"    # uniform | responders
    straggler_rate: float = 1.0   # exponential link-latency rate (responders)


@dataclass(frozen=True)
class CepsConfig:
    mu: float = 0.1
    gamma: float = 5.0
    kappa_min: int = 10
    kappa_max: int = 15
    sigma_knob: float = 0.1       # the additive constant in m(2r + knob)d


@dataclass(frozen=True)
class CodecConfig:
    onebit: bool = True           # False = perfect communication
    d: int = 0                    # measurement count; 0 = n // 2
    density: float = 1.0
    decoder_max_iters: int = 100
    decoder_stall_iters: int = 10
    decoder_step_scale: float = 1.0


@dataclass(frozen=True)
class TerminationConfig:
    tol: float = 0.0              # 0 = auto from privacy setting
    max_ticks: int = 10000
    min_ticks: int = 0            # never stop before this many ticks


@dataclass(frozen=True)
class BaselineConfig:
    eta: float = 0.0              # 0 = 1 / (2 * lipschitz)
    momentum: float = 0.9
    local_steps: int = 10
    dn_edge_keep: float = 0.5     # edge-keep probability of the dynamic net


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig = ProblemConfig()
    topology: TopologyConfig = TopologyConfig()
    ceps: CepsConfig = CepsConfig()
    codec: CodecConfig = CodecConfig()
    privacy: PrivacyParams = PrivacyParams()
    termination: TerminationConfig = TerminationConfig()
    baseline: BaselineConfig = BaselineConfig()
    seed: int = 0
    algo: str = "ceps"

    def d_effective(self, n: int) -> int:
        return self.codec.d if self.codec.d > 0 else max(1, n // 2)

    def tol_effective(self) -> float:
        if self.termination.tol > 0:
            return self.termination.tol
        if self.privacy.enabled and self.privacy.u > 0:
            return 0.0025 / self.privacy.epsilon
        return 0.005

    def to_dict(self) -> dict:
        out = {}
        for section in ("problem", "topology", "ceps", "codec", "privacy",
                        "termination", "baseline"):
            out[section] = dataclasses.asdict(getattr(self, section))
        out["run"] = {"seed": self.seed, "algo": self.algo}
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# section -> key -> (attribute, coercion)
def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_SCHEMA = {
    "problem": {"kind": ("kind", str), "n": ("n", int), "s": ("s", int),
                "m": ("m", int), "data": ("data", str),
                "mi_min": ("mi_min", int), "mi_max": ("mi_max", int),
                "noise_scale": ("noise_scale", float), "lambda": ("lam", float)},
    "topology": {"edge_prob": ("edge_prob", float), "r": ("r", float),
                 "selection": ("selection", str),
                 "straggler_rate": ("straggler_rate", float)},
    "ceps": {"mu": ("mu", float), "gamma": ("gamma", float),
             "kappa_min": ("kappa_min", int), "kappa_max": ("kappa_max", int),
             "sigma_knob": ("sigma_knob", float)},
    "codec": {"onebit": ("onebit", _bool), "d": ("d", int),
              "density": ("density", float),
              "decoder_max_iters": ("decoder_max_iters", int),
              "decoder_stall_iters": ("decoder_stall_iters", int),
              "decoder_step_scale": ("decoder_step_scale", float)},
    "privacy": {"enabled": ("enabled", _bool), "epsilon": ("epsilon", float),
                "delta": ("delta", float), "u": ("u", float),
                "clip": ("clip_mode", str)},
    "termination": {"tol": ("tol", float), "max_ticks": ("max_ticks", int),
                    "min_ticks": ("min_ticks", int)},
    "baseline": {"eta": ("eta", float), "momentum": ("momentum", float),
                 "local_steps": ("local_steps", int),
                 "dn_edge_keep": ("dn_edge_keep", float)},
    "run": {"seed": ("seed", int), "algo": ("algo", str)},
}

_SECTION_TYPES = {
    "problem": ProblemConfig, "topology": TopologyConfig, "ceps": CepsConfig,
    "codec": CodecConfig, "privacy": PrivacyParams,
    "termination": TerminationConfig, "baseline": BaselineConfig,
}


class ConfigError(ValueError):
    pass


def _read_pairs(path):
    """Yield (section, key, value, lineno); syntax errors carry line numbers."""
    section = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _SCHEMA:
                    raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            if section is None:
                raise ConfigError(f"{path}:{lineno}: key outside any [section]")
            key, value = (part.strip() for part in line.split("=", 1))
            yield section, key, value, lineno


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a config file into a resolved ExperimentConfig."""
    values: dict = {}
    unknown = []
    for section, key, value, lineno in _read_pairs(path):
        if key not in _SCHEMA[section]:
            unknown.append(f"{section}.{key} (line {lineno})")
            continue
        if (section, key) in values:
            warnings.warn(f"{path}: duplicate key {section}.{key} "
                          f"(line {lineno}); last value wins")
        values[(section, key)] = value
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {', '.join(unknown)}")

    sections = {}
    run_overrides = {}
    for (section, key), text in values.items():
        attr, coerce = _SCHEMA[section][key]
        try:
            coerced = coerce(text)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from None
        if section == "run":
            run_overrides[attr] = coerced
        else:
            sections.setdefault(section, {})[attr] = coerced

    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        try:
            kwargs[section] = cls(**sections.get(section, {}))
        except ValueError as exc:
            raise ConfigError(f"{path}: [{section}]: {exc}") from None
    cfg = ExperimentConfig(**kwargs, **run_overrides)
    validate_config(cfg, source=str(path))
    return cfg


def validate_config(cfg: ExperimentConfig, source: str = "config") -> None:
    p = cfg.problem
    problems = []
    if p.kind not in ("linreg", "logreg"):
        problems.append(f"problem.kind must be linreg or logreg, got {p.kind!r}")
    if p.m < 1:
        problems.append("problem.m is required (>= 1)")
    if p.s < 1:
        problems.append("problem.s is required (>= 1)")
    if p.kind == "linreg":
        if p.n < 1:
            problems.append("problem.n is required for linreg")
        elif p.s > p.n:
            problems.append("problem.s cannot exceed problem.n")
        if p.mi_min < 1 or p.mi_max < p.mi_min:
            problems.append("problem.mi_min/mi_max must satisfy 1 <= min <= max")
    if p.kind == "logreg" and not p.data:
        problems.append("problem.data (LibSVM path) is required for logreg")
    if p.lam < 0:
        problems.append("problem.lambda must be >= 0")
    t = cfg.topology
    if not 0.0 < t.edge_prob <= 1.0:
        problems.append("topology.edge_prob must be in (0, 1]")
    if not 0.0 < t.r <= 1.0:
        problems.append("topology.r must be in (0, 1]")
    if t.selection not in ("uniform", "responders"):
        problems.append("topology.selection must be uniform or responders")
    if t.straggler_rate <= 0:
        problems.append("topology.straggler_rate must be > 0")
    c = cfg.ceps
    if c.mu <= 0:
        problems.append("ceps.mu must be > 0")
    if c.gamma <= 1:
        problems.append("ceps.gamma must be > 1")
    if not 1 <= c.kappa_min <= c.kappa_max:
        problems.append("ceps.kappa_min/kappa_max must satisfy 1 <= min <= max")
    cd = cfg.codec
    if cd.d < 0:
        problems.append("codec.d must be >= 0 (0 selects n // 2)")
    if not 0.0 < cd.density <= 1.0:
        problems.append("codec.density must be in (0, 1]")
    if cd.decoder_max_iters < 1 or cd.decoder_stall_iters < 1:
        problems.append("decoder iteration knobs must be >= 1")
    if cfg.termination.tol < 0:
        problems.append("termination.tol must be >= 0 (0 = auto)")
    if cfg.termination.max_ticks < 1:
        problems.append("termination.max_ticks must be >= 1")
    if cfg.termination.min_ticks < 0:
        problems.append("termination.min_ticks must be >= 0")
    b = cfg.baseline
    if b.eta < 0:
        problems.append("baseline.eta must be >= 0 (0 = auto)")
    if not 0.0 <= b.momentum < 1.0:
        problems.append("baseline.momentum must be in [0, 1)")
    if b.local_steps < 1:
        problems.append("baseline.local_steps must be >= 1")
    if not 0.0 < b.dn_edge_keep <= 1.0:
        problems.append("baseline.dn_edge_keep must be in (0, 1]")
    if cfg.algo not in ALGORITHMS:
        problems.append(f"run.algo must be one of {', '.join(ALGORITHMS)}")
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))


def with_overrides(cfg: ExperimentConfig, *, seed=None, algo=None,
                   max_ticks=None, perfect_comm=False, no_dp=False,
                   m=None, epsilon=None, r=None) -> ExperimentConfig:
    """Functional overrides used by the CLI and the sweep driver."""
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    if algo is not None:
        cfg = dataclasses.replace(cfg, algo=algo)
    if max_ticks is not None:
        cfg = dataclasses.replace(
            cfg, termination=dataclasses.replace(cfg.termination,
                                                 max_ticks=int(max_ticks)))
    if perfect_comm:
        cfg = dataclasses.replace(
            cfg, codec=dataclasses.replace(cfg.codec, onebit=False))
    if no_dp:
        cfg = dataclasses.replace(
            cfg, privacy=dataclasses.replace(cfg.privacy, enabled=False))
    if m is not None:
        cfg = dataclasses.replace(
            cfg, problem=dataclasses.replace(cfg.problem, m=int(m)))
    if epsilon is not None:
        cfg = dataclasses.replace(
            cfg, privacy=dataclasses.replace(cfg.privacy, epsilon=float(epsilon)))
    if r is not None:
        cfg = dataclasses.replace(
            cfg, topology=dataclasses.replace(cfg.topology, r=float(r)))
    validate_config(cfg, source="overridden config")
    return cfg
