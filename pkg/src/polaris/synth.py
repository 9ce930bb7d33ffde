"""Oracle generator for representation sets with planted variable types.

The generator follows the polarised-regime picture directly: passive
dimensions have near-zero means and unit variances, active dimensions have
informative means and tiny variances, and mixed dimensions switch between the
two per example with a Bernoulli(c) coin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import stats

from .classifier import VariableType
from .errors import DomainError
from .representation import RepresentationSet, reparameterise

MEAN_SHAPES = ("gaussian", "uniform", "bimodal")
JITTER = 0.02
# Bimodal marginal: two Gaussians at +/-BIMODAL_OFFSET with unit total variance.
BIMODAL_OFFSET = 0.9
BIMODAL_SPREAD = float(np.sqrt(1.0 - BIMODAL_OFFSET**2))


@dataclass(frozen=True)
class Active:
    mean_distribution: str = "gaussian"
    sigma_level: float = 0.01
    scale: float = 1.0

    def __post_init__(self):
        if self.mean_distribution not in MEAN_SHAPES:
            raise DomainError(f"unknown mean distribution {self.mean_distribution!r}")
        if not (0.0 < self.sigma_level <= 0.1):
            raise DomainError(f"active sigma_level must lie in (0, 0.1], got {self.sigma_level}")
        if self.scale <= 0:
            raise DomainError("scale must be > 0")

    @property
    def planted_variance(self) -> float:
        """Population variance of the planted means (all shapes are unit-variance before scaling)."""
        return self.scale**2


@dataclass(frozen=True)
class Passive:
    """A passive dimension.

    ``follows``/``coupling`` optionally tie the (tiny) mean to an active
    dimension's mean, reproducing the correlated passive means seen in
    trained models: ``mu = mu_noise * (coupling * a + sqrt(1 - coupling**2) * e)``
    with ``a`` the standardised mean of active dimension ``follows``.
    """

    mu_noise: float = 0.01
    sigma_level: float = 1.0
    follows: Optional[int] = None
    coupling: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.mu_noise < 1.0):
            raise DomainError(f"mu_noise must lie in [0, 1), got {self.mu_noise}")
        if not (0.9 <= self.sigma_level <= 1.1):
            raise DomainError(f"passive sigma_level must lie in [0.9, 1.1], got {self.sigma_level}")
        if not (0.0 <= self.coupling <= 1.0):
            raise DomainError("coupling must lie in [0, 1]")
        if self.coupling > 0 and self.follows is None:
            raise DomainError("coupling needs a dimension to follow")


@dataclass(frozen=True)
class Mixed:
    c: float = 0.5
    active: Active = field(default_factory=Active)
    passive: Passive = field(default_factory=Passive)

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise DomainError(f"mixture proportion c must lie in (0, 1), got {self.c}")
        if self.passive.follows is not None:
            raise DomainError("the passive branch of a mixed dimension cannot follow another dimension")


Plan = Union[Active, Passive, Mixed]


@dataclass(frozen=True)
class LabelRule:
    """Equal-frequency quantisation of one dimension's mean into ``classes`` labels."""

    dim: Optional[int] = None
    classes: int = 4

    def __post_init__(self):
        if self.classes < 2:
            raise DomainError("a label rule needs at least 2 classes")


@dataclass(frozen=True)
class SynthSpec:
    n_examples: int
    dims: tuple
    correlation: Optional[np.ndarray] = None
    label_rule: Optional[LabelRule] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if self.n_examples < 2:
            raise DomainError("need at least 2 examples")
        if not self.dims:
            raise DomainError("need at least one dimension")
        for plan in self.dims:
            if not isinstance(plan, (Active, Passive, Mixed)):
                raise DomainError(f"unknown dimension plan {plan!r}")
        active = self.active_dims
        for j, plan in enumerate(self.dims):
            if isinstance(plan, Passive) and plan.follows is not None and plan.follows not in active:
                raise DomainError(f"passive dim {j} follows {plan.follows}, which is not active")
        if self.correlation is not None:
            corr = np.array(self.correlation, dtype=np.float64)
            k = len(active)
            if corr.shape != (k, k):
                raise DomainError(f"correlation must be {k}x{k} over the active dims, got {corr.shape}")
            if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0):
                raise DomainError("correlation must be symmetric with unit diagonal")
            try:
                np.linalg.cholesky(corr)
            except np.linalg.LinAlgError:
                raise DomainError("correlation target is not positive definite") from None
            corr.flags.writeable = False
            object.__setattr__(self, "correlation", corr)
        if self.label_rule is not None:
            dim = self.label_rule.dim
            if dim is None:
                if not active:
                    raise DomainError("the default label rule needs an active dimension")
            elif not (0 <= dim < len(self.dims)) or not isinstance(self.dims[dim], Active):
                raise DomainError(f"label dimension {dim} is not an active dimension")

    @property
    def active_dims(self) -> list:
        return [j for j, p in enumerate(self.dims) if isinstance(p, Active)]

    @property
    def planted_types(self) -> tuple:
        kinds = {Active: VariableType.ACTIVE, Passive: VariableType.PASSIVE, Mixed: VariableType.MIXED}
        return tuple(kinds[type(p)] for p in self.dims)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        """Build a spec from its JSON form (see ``to_dict``)."""
        try:
            dims = tuple(_plan_from_dict(d) for d in data["dims"])
            rule = data.get("label_rule")
            return cls(
                n_examples=int(data["n_examples"]),
                dims=dims,
                correlation=None if data.get("correlation") is None else np.array(data["correlation"], dtype=float),
                label_rule=None if rule is None else LabelRule(dim=rule.get("dim"), classes=int(rule.get("classes", 4))),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"invalid synth spec: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "dims": [_plan_to_dict(p) for p in self.dims],
            "correlation": None if self.correlation is None else self.correlation.tolist(),
            "label_rule": None if self.label_rule is None else {"dim": self.label_rule.dim, "classes": self.label_rule.classes},
            "seed": self.seed,
        }


def _plan_from_dict(d: dict) -> Plan:
    d = dict(d)
    kind = d.pop("type")
    if kind == "active":
        return Active(**d)
    if kind == "passive":
        return Passive(**d)
    if kind == "mixed":
        branches = {k: {f: v for f, v in d.get(k, {}).items() if f != "type"} for k in ("active", "passive")}
        return Mixed(c=d["c"], active=Active(**branches["active"]), passive=Passive(**branches["passive"]))
    raise DomainError(f"unknown dimension type {kind!r}")


def _plan_to_dict(p: Plan) -> dict:
    if isinstance(p, Active):
        return {"type": "active", "mean_distribution": p.mean_distribution, "sigma_level": p.sigma_level, "scale": p.scale}
    if isinstance(p, Passive):
        return {"type": "passive", "mu_noise": p.mu_noise, "sigma_level": p.sigma_level, "follows": p.follows, "coupling": p.coupling}
    return {"type": "mixed", "c": p.c, "active": _plan_to_dict(p.active), "passive": _plan_to_dict(p.passive)}


@dataclass(frozen=True)
class SynthOutput:
    rep: RepresentationSet
    planted_types: tuple
    per_example_activity: dict
    labels: Optional[np.ndarray]
    spec: SynthSpec

    def sidecar(self) -> dict:
        """JSON-ready metadata: planted types, mixture proportions, seed, labels."""
        return {
            "format_version": 1,
            "seed": self.spec.seed,
            "planted_types": [t.value for t in self.planted_types],
            "c_values": {str(j): p.c for j, p in enumerate(self.spec.dims) if isinstance(p, Mixed)},
            "mixture_sampling": "iid-bernoulli",
            "per_example_activity": {str(j): a.astype(int).tolist() for j, a in self.per_example_activity.items()},
            "labels": None if self.labels is None else self.labels.tolist(),
            "spec": self.spec.to_dict(),
        }

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), sort_keys=True)


def _shape_means(g: np.ndarray, plan: Active) -> np.ndarray:
    """Map standard-normal draws onto the plan's marginal, keeping unit variance."""
    if plan.mean_distribution == "gaussian":
        out = g
    elif plan.mean_distribution == "uniform":
        out = np.sqrt(3.0) * (2.0 * stats.norm.cdf(g) - 1.0)
    else:
        u = stats.norm.cdf(g)
        upper = u >= 0.5
        # each half of the quantile range is mapped through its own Gaussian component
        w = np.where(upper, 2.0 * u - 1.0, 2.0 * u)
        w = np.clip(w, 1e-16, 1 - 1e-16)
        out = np.where(upper, BIMODAL_OFFSET, -BIMODAL_OFFSET) + BIMODAL_SPREAD * stats.norm.ppf(w)
    return plan.scale * out


def _sigma(rng, level: float, n: int) -> np.ndarray:
    return level * rng.uniform(1.0 - JITTER, 1.0 + JITTER, size=n)


def generate(spec: SynthSpec) -> SynthOutput:
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_examples, len(spec.dims)
    mean = np.empty((n, d))
    variance = np.empty((n, d))
    activity = {}

    active = spec.active_dims
    if active:
        g = rng.standard_normal((n, len(active)))
        if spec.correlation is not None:
            g = g @ np.linalg.cholesky(spec.correlation).T
        for col, j in enumerate(active):
            plan = spec.dims[j]
            mean[:, j] = _shape_means(g[:, col], plan)
            variance[:, j] = _sigma(rng, plan.sigma_level, n)

    for j, plan in enumerate(spec.dims):
        if isinstance(plan, Passive):
            e = rng.standard_normal(n)
            if plan.follows is not None and plan.coupling > 0:
                src = mean[:, plan.follows]
                src = (src - src.mean()) / src.std()
                e = plan.coupling * src + np.sqrt(1.0 - plan.coupling**2) * e
            mean[:, j] = plan.mu_noise * e
            variance[:, j] = _sigma(rng, plan.sigma_level, n)
        elif isinstance(plan, Mixed):
            is_passive = rng.random(n) < plan.c
            act_mean = _shape_means(rng.standard_normal(n), plan.active)
            pas_mean = plan.passive.mu_noise * rng.standard_normal(n)
            act_sigma = _sigma(rng, plan.active.sigma_level, n)
            pas_sigma = _sigma(rng, plan.passive.sigma_level, n)
            mean[:, j] = np.where(is_passive, pas_mean, act_mean)
            variance[:, j] = np.where(is_passive, pas_sigma, act_sigma)
            activity[j] = ~is_passive

    noise = rng.standard_normal((n, d))
    sampled = reparameterise(mean, variance, noise)
    rep = RepresentationSet(mean=mean, variance=variance, sampled=sampled, noise=noise)

    labels = None
    if spec.label_rule is not None:
        dim = spec.label_rule.dim if spec.label_rule.dim is not None else active[0]
        labels = quantile_labels(mean[:, dim], spec.label_rule.classes)

    return SynthOutput(rep=rep, planted_types=spec.planted_types, per_example_activity=activity, labels=labels, spec=spec)


def quantile_labels(values, classes: int) -> np.ndarray:
    """Equal-frequency class labels 0..classes-1."""
    values = np.asarray(values, dtype=np.float64)
    edges = np.quantile(values, np.linspace(0, 1, classes + 1)[1:-1])
    return np.searchsorted(edges, values, side="right").astype(np.int64)


@dataclass(frozen=True)
class MixtureComponents:
    passive_mean: float
    passive_var: float
    active_mean: float
    active_var: float
    planted_active_var: float
    n_passive: int
    n_active: int


def empirical_mixture_check(output: SynthOutput, dim: int) -> MixtureComponents:
    """Split a mixed sampled column by planted activity and summarise each component."""
    if not (0 <= dim < len(output.planted_types)) or output.planted_types[dim] is not VariableType.MIXED:
        raise DomainError(f"dimension {dim} is not a planted mixed dimension")
    is_active = output.per_example_activity[dim]
    column = output.rep.sampled[:, dim]
    act, pas = column[is_active], column[~is_active]
    if act.size < 2 or pas.size < 2:
        raise DomainError("one mixture component has fewer than 2 examples")
    return MixtureComponents(
        passive_mean=float(pas.mean()),
        passive_var=float(pas.var(ddof=1)),
        active_mean=float(act.mean()),
        active_var=float(act.var(ddof=1)),
        planted_active_var=output.spec.dims[dim].active.planted_variance,
        n_passive=int(pas.size),
        n_active=int(act.size),
    )
