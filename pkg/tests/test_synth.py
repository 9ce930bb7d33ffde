import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from polaris.classifier import VariableType, classify_variables
from polaris.errors import DomainError
from polaris.representation import column_stats
from polaris.synth import (
    Active,
    LabelRule,
    Mixed,
    Passive,
    SynthSpec,
    empirical_mixture_check,
    generate,
    quantile_labels,
)

A, P, M = VariableType.ACTIVE, VariableType.PASSIVE, VariableType.MIXED


def test_three_passives_round_trip():
    out = generate(SynthSpec(10_000, (Passive(), Passive(), Passive()), seed=1))
    assert classify_variables(out.rep.variance).types == [P, P, P]
    assert out.planted_types == (P, P, P)


def test_active_variance_column_stats():
    out = generate(SynthSpec(10_000, (Active(sigma_level=0.05),), seed=2))
    m, v = column_stats(out.rep.variance)
    assert m[0] == pytest.approx(0.05, rel=1e-3)
    assert v[0] < 1e-5


def test_mixed_coin_count():
    out = generate(SynthSpec(10_000, (Mixed(c=0.5),), seed=3))
    assert abs(int(out.per_example_activity[0].sum()) - 5000) <= 150


def test_determinism():
    spec = SynthSpec(500, (Active("bimodal"), Passive(), Mixed(0.3)), label_rule=LabelRule(), seed=9)
    a, b = generate(spec), generate(spec)
    for kind in ("mean", "variance", "sampled", "noise"):
        assert getattr(a.rep, kind).tobytes() == getattr(b.rep, kind).tobytes()
    assert a.sidecar_json() == b.sidecar_json()


def test_passive_sampled_statement_i():
    n = 10_000
    out = generate(SynthSpec(n, (Active(), Passive(), Passive(mu_noise=0.05)), seed=4))
    for j in (1, 2):
        z = out.rep.sampled[:, j]
        # 5-sigma Monte-Carlo bounds for the mean and the variance of N(0, ~1)
        assert abs(z.mean()) < 5 / np.sqrt(n)
        assert abs(z.var(ddof=1) - 1) < 5 * np.sqrt(2 / n) + 0.02


def test_active_sampled_statement_ii():
    out = generate(SynthSpec(10_000, (Active(sigma_level=0.01), Active("uniform", 0.1)), seed=5))
    for j, level in ((0, 0.01), (1, 0.1)):
        gap = np.abs(out.rep.sampled[:, j] - out.rep.mean[:, j])
        assert gap.max() <= 6 * np.sqrt(level)


def test_passive_means_below_noise_bound():
    out = generate(SynthSpec(5000, (Passive(mu_noise=0.02),), seed=6))
    m, v = column_stats(out.rep.mean)
    assert abs(m[0]) < 0.02 and v[0] < 0.02


def test_mixed_has_largest_sigma_variance():
    out = generate(SynthSpec(2000, (Active(), Passive(), Mixed(0.4), Active("uniform")), seed=7))
    _, v = column_stats(out.rep.variance)
    assert v[2] > max(v[0], v[1], v[3])


@pytest.mark.parametrize("shape", ["gaussian", "uniform", "bimodal"])
def test_marginals_have_unit_variance(shape):
    out = generate(SynthSpec(50_000, (Active(shape, scale=2.0),), seed=8))
    mu = out.rep.mean[:, 0]
    assert mu.mean() == pytest.approx(0, abs=0.05)
    assert mu.var() == pytest.approx(4.0, rel=0.03)


def test_uniform_marginal_ks():
    mu = generate(SynthSpec(5000, (Active("uniform"),), seed=10)).rep.mean[:, 0]
    s3 = np.sqrt(3)
    assert stats.kstest(mu, stats.uniform(-s3, 2 * s3).cdf).pvalue > 1e-3


def test_bimodal_is_bimodal():
    mu = generate(SynthSpec(20_000, (Active("bimodal"),), seed=11)).rep.mean[:, 0]
    hist, _ = np.histogram(mu, bins=np.linspace(-2, 2, 9))
    # the centre bins sit in the trough between the two modes
    assert hist[3] + hist[4] < hist[1] + hist[6]


def test_correlation_target():
    corr = np.array([[1.0, 0.6], [0.6, 1.0]])
    out = generate(SynthSpec(20_000, (Active(), Passive(), Active()), correlation=corr, seed=12))
    r = np.corrcoef(out.rep.mean[:, [0, 2]], rowvar=False)[0, 1]
    assert r == pytest.approx(0.6, abs=0.02)


def test_passive_coupling():
    out = generate(SynthSpec(20_000, (Active(), Passive(mu_noise=0.02, follows=0, coupling=0.8)), seed=13))
    r = np.corrcoef(out.rep.mean, rowvar=False)[0, 1]
    assert r == pytest.approx(0.8, abs=0.02)
    assert np.abs(out.rep.mean[:, 1]).max() < 0.15


def test_labels_equal_frequency():
    out = generate(SynthSpec(4000, (Passive(), Active()), label_rule=LabelRule(classes=4), seed=14))
    assert np.bincount(out.labels).tolist() == [1000] * 4
    # default label dimension is the first active one
    order = np.argsort(out.rep.mean[:, 1])
    assert np.all(np.diff(out.labels[order]) >= 0)


def test_quantile_labels_small():
    assert quantile_labels([3.0, 1.0, 2.0, 4.0], 2).tolist() == [1, 0, 0, 1]


@pytest.mark.parametrize(
    "build",
    [
        lambda: Active(sigma_level=0.2),
        lambda: Passive(sigma_level=0.8),
        lambda: Mixed(c=0.0),
        lambda: Mixed(c=1.0),
        lambda: Active("laplace"),
        lambda: Passive(coupling=0.5),
        lambda: SynthSpec(10, (Active(), Active()), correlation=np.array([[1, 2], [2, 1.0]])),
        lambda: SynthSpec(10, (Active(),), correlation=np.eye(2)),
        lambda: SynthSpec(10, (Passive(),), label_rule=LabelRule()),
        lambda: SynthSpec(10, (Active(), Passive(follows=1, coupling=0.5))),
        lambda: SynthSpec(1, (Active(),)),
    ],
)
def test_invalid_specs(build):
    with pytest.raises(DomainError):
        build()


def test_mixture_check_components():
    out = generate(SynthSpec(10_000, (Mixed(0.5, active=Active("bimodal")),), seed=15))
    comp = empirical_mixture_check(out, 0)
    assert comp.n_passive + comp.n_active == 10_000
    assert abs(comp.passive_mean) < 0.05
    assert 0.9 <= comp.passive_var <= 1.1
    assert comp.active_var == pytest.approx(comp.planted_active_var, rel=0.1)


def test_mixture_check_rejects_pure_dims():
    out = generate(SynthSpec(100, (Active(), Mixed(0.5)), seed=16))
    with pytest.raises(DomainError):
        empirical_mixture_check(out, 0)


def test_json_spec_round_trip():
    spec = SynthSpec(
        100, (Active("uniform", 0.05, 2.0), Passive(0.01, 1.0, 0, 0.5), Mixed(0.3)),
        correlation=None, label_rule=LabelRule(0, 3), seed=5,
    )
    back = SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec


def test_from_dict_errors():
    with pytest.raises(DomainError):
        SynthSpec.from_dict({"dims": []})
    with pytest.raises(DomainError):
        SynthSpec.from_dict({"n_examples": 10, "dims": [{"type": "weird"}]})


def test_sidecar_contents():
    out = generate(SynthSpec(50, (Active(), Mixed(0.25)), label_rule=LabelRule(), seed=17))
    side = json.loads(out.sidecar_json())
    assert side["planted_types"] == ["active", "mixed"]
    assert side["c_values"] == {"1": 0.25}
    assert side["mixture_sampling"] == "iid-bernoulli"
    assert side["seed"] == 17 and len(side["labels"]) == 50
    assert len(side["per_example_activity"]["1"]) == 50


@given(st.integers(0, 10_000), st.floats(0.3, 0.7))
def test_margin_configs_always_recovered(seed, c):
    spec = SynthSpec(
        2000,
        (Active(sigma_level=0.05), Passive(sigma_level=0.95), Mixed(c, Active(sigma_level=0.05), Passive(sigma_level=0.95))),
        seed=seed,
    )
    out = generate(spec)
    assert tuple(classify_variables(out.rep.variance).types) == out.planted_types
