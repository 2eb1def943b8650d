"""INI run configuration with strict key checking.

Sections and keys (units in brackets)::

    [run]          seed
    [paths]        out
    [phantom]      n, frames, cardiac_rate [cycles/1000 frames],
                   resp_rate [cycles/1000 frames], resp_amplitude [pixels at n=64],
                   rate_jitter, episodes ("start:stop:multiplier; ...")
    [acquisition]  lines_per_frame, nav_count, samples_per_spoke (0 = n), coils,
                   snr_db (noise relative to RMS sample magnitude) or noise_std,
                   sampling_mode (radial_nudft | cartesian_mask)
    [irls]         sigma (number | median-auto), mu, mu_relative, gamma0 (0 = auto),
                   eta, iterations, clip_negative, nav_angles ("0,90"; empty = all)
    [baseline]     knn, threshold_quantile
    [solver]       lambda (relative to the largest Laplacian eigenvalue), rank,
                   tol, maxiter, precondition, method (truncated | full)
    [binning]      n_resp, n_card, embed_dims
    [experiment]   eval_fraction, budgets ("1.0,0.55,0.35"), outlier_frame, outlier_shift

Unknown sections or keys raise ``ConfigError`` naming the offender.
"""

import configparser
from dataclasses import dataclass, field, fields, asdict

from .errors import ConfigError


def _check(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class PathsSection:
    out: str = "run"


@dataclass
class PhantomSection:
    n: int = 64
    frames: int = 300
    cardiac_rate: float = 51.0
    resp_rate: float = 12.0
    resp_amplitude: float = 4.0
    rate_jitter: float = 0.02
    episodes: str = ""

    def validate(self):
        _check(self.n >= 16 and self.n % 2 == 0, "phantom.n", "must be even and >= 16")
        _check(self.frames >= 10, "phantom.frames", "must be >= 10")
        _check(self.cardiac_rate > 0, "phantom.cardiac_rate", "must be positive")
        _check(self.resp_rate > 0, "phantom.resp_rate", "must be positive")
        _check(self.resp_amplitude >= 0, "phantom.resp_amplitude", "must be non-negative")
        _check(0 <= self.rate_jitter < 1, "phantom.rate_jitter", "must lie in [0, 1)")
        self.episode_list()

    def episode_list(self):
        out = []
        for chunk in filter(None, (c.strip() for c in self.episodes.split(";"))):
            try:
                a, b, m = chunk.split(":")
                out.append((int(a), int(b), float(m)))
            except ValueError:
                raise ConfigError(f"phantom.episodes: cannot parse {chunk!r}") from None
        return out


@dataclass
class AcquisitionSection:
    lines_per_frame: int = 10
    nav_count: int = 4
    samples_per_spoke: int = 0
    coils: int = 4
    snr_db: float = 20.0
    noise_std: float = -1.0
    sampling_mode: str = "radial_nudft"

    def validate(self):
        _check(self.nav_count in (1, 2, 4), "acquisition.nav_count", "must be 1, 2 or 4")
        _check(self.lines_per_frame > self.nav_count, "acquisition.lines_per_frame", "must exceed nav_count")
        _check(self.samples_per_spoke >= 0, "acquisition.samples_per_spoke", "must be >= 0")
        _check(1 <= self.coils <= 32, "acquisition.coils", "must lie in 1..32")
        _check(
            self.sampling_mode in ("radial_nudft", "cartesian_mask"),
            "acquisition.sampling_mode", "must be radial_nudft or cartesian_mask",
        )


@dataclass
class IrlsSection:
    sigma: str = "median-auto"
    mu: float = 1.0
    mu_relative: bool = True
    gamma0: float = 0.0
    eta: float = 1.5
    iterations: int = 10
    clip_negative: bool = False
    nav_angles: str = ""

    def validate(self):
        if self.sigma != "median-auto":
            try:
                _check(float(self.sigma) > 0, "irls.sigma", "must be positive")
            except ValueError:
                raise ConfigError("irls.sigma: must be a number or median-auto") from None
        _check(self.mu >= 0, "irls.mu", "must be non-negative")
        _check(self.gamma0 >= 0, "irls.gamma0", "must be non-negative (0 = auto)")
        _check(self.eta >= 1, "irls.eta", "must be >= 1")
        _check(1 <= self.iterations <= 1000, "irls.iterations", "must lie in 1..1000")
        self.angle_list()

    def angle_list(self):
        if not self.nav_angles.strip():
            return None
        try:
            return tuple(float(a) for a in self.nav_angles.split(","))
        except ValueError:
            raise ConfigError("irls.nav_angles: expected comma separated degrees") from None


@dataclass
class BaselineSection:
    knn: int = 2
    threshold_quantile: float = 0.1

    def validate(self):
        _check(self.knn >= 1, "baseline.knn", "must be >= 1")
        _check(0 < self.threshold_quantile <= 1, "baseline.threshold_quantile", "must lie in (0, 1]")


@dataclass
class SolverSection:
    lam: float = 1e4
    rank: int = 30
    tol: float = 1e-6
    maxiter: int = 100
    precondition: bool = False
    method: str = "truncated"

    def validate(self):
        _check(self.method in ("truncated", "full"), "solver.method", "must be truncated or full")
        _check(self.lam >= 0, "solver.lambda", "must be non-negative")
        _check(self.rank >= 1, "solver.rank", "must be >= 1")
        _check(0 < self.tol < 1, "solver.tol", "must lie in (0, 1)")
        _check(self.maxiter >= 1, "solver.maxiter", "must be >= 1")


@dataclass
class BinningSection:
    n_resp: int = 4
    n_card: int = 8
    embed_dims: int = 4

    def validate(self):
        _check(self.n_resp >= 1, "binning.n_resp", "must be >= 1")
        _check(self.n_card >= 1, "binning.n_card", "must be >= 1")
        _check(self.embed_dims >= 2, "binning.embed_dims", "must be >= 2")


@dataclass
class ExperimentSection:
    eval_fraction: float = 0.25
    budgets: str = "1.0,0.55,0.35"
    outlier_frame: int = -1
    outlier_shift: int = 8

    def validate(self):
        _check(0 < self.eval_fraction <= 1, "experiment.eval_fraction", "must lie in (0, 1]")
        b = self.budget_list()
        _check(all(self.eval_fraction <= x <= 1 for x in b), "experiment.budgets",
               "each budget must lie in [eval_fraction, 1]")

    def budget_list(self):
        try:
            return [float(x) for x in self.budgets.split(",") if x.strip()]
        except ValueError:
            raise ConfigError("experiment.budgets: expected comma separated fractions") from None


_SECTIONS = {
    "run": RunSection,
    "paths": PathsSection,
    "phantom": PhantomSection,
    "acquisition": AcquisitionSection,
    "irls": IrlsSection,
    "baseline": BaselineSection,
    "solver": SolverSection,
    "binning": BinningSection,
    "experiment": ExperimentSection,
}
# INI key -> dataclass attribute where they differ
_RENAMES = {("solver", "lambda"): "lam"}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    paths: PathsSection = field(default_factory=PathsSection)
    phantom: PhantomSection = field(default_factory=PhantomSection)
    acquisition: AcquisitionSection = field(default_factory=AcquisitionSection)
    irls: IrlsSection = field(default_factory=IrlsSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    solver: SolverSection = field(default_factory=SolverSection)
    binning: BinningSection = field(default_factory=BinningSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def validate(self):
        for name in _SECTIONS:
            sec = getattr(self, name)
            if hasattr(sec, "validate"):
                sec.validate()
        _check(self.run.seed >= 0, "run.seed", "must be a non-negative integer")
        _check(self.solver.rank <= self.phantom.frames, "solver.rank", "must not exceed phantom.frames")
        _check(self.binning.embed_dims < self.phantom.frames, "binning.embed_dims", "must be below frame count")
        return self

    def to_ini(self):
        cp = configparser.ConfigParser()
        inverse = {v: k for (s, k), v in _RENAMES.items()}
        for name in _SECTIONS:
            d = asdict(getattr(self, name))
            cp[name] = {inverse.get(k, k) if name == "solver" else k: _fmt(v) for k, v in d.items()}
        lines = []
        for name in cp.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in cp[name].items())
            lines.append("")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(section, key, raw, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = RunConfig()
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        sec = getattr(cfg, name)
        types = {f.name: f.type for f in fields(sec)}
        for key, raw in cp[name].items():
            attr = _RENAMES.get((name, key), key)
            shadowed = (name, key) not in _RENAMES and (name, key) in {(s, v) for (s, _), v in _RENAMES.items()}
            if attr not in types or shadowed:
                raise ConfigError(f"unknown key {name}.{key}")
            typ = types[attr]
            typ = {"int": int, "float": float, "bool": bool, "str": str}.get(typ, typ) if isinstance(typ, str) else typ
            setattr(sec, attr, _convert(name, key, raw, typ))
    return cfg.validate()


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
