import math
import random
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from cbrtwin.domain import parse_domain_model
from cbrtwin.errors import ExtractError, MetricError, ParseError, PluginError
from cbrtwin.plugins import Registry, default_registry
from cbrtwin.similarity import (LocalMetric, NotComparable, SimilaritySpec, extract_reference, global_similarity,
                                local_similarity, parse_similarity_spec, print_similarity_spec)
from oracles import SIMILARITY_TABLE, oracle_global, oracle_local, oracle_reference
from test_casebase import cond

ABS = LocalMetric("ProcessData.nozzleTemperature", "absolute", range=(0, 600))
SQ = LocalMetric("ProcessData.nozzleTemperature", "squared", range=(0, 600))


def test_absolute_local():
    assert local_similarity(ABS, 510.0, 500) == pytest.approx(10 / 600, abs=1e-15)
    assert local_similarity(ABS, 510.0, 500) == pytest.approx(0.0167, abs=5e-5)


def test_squared_local():
    assert local_similarity(SQ, 510.0, 500) == pytest.approx((10 / 600) ** 2, abs=1e-15)
    assert local_similarity(SQ, 510.0, 500) == pytest.approx(0.000278, abs=5e-7)


@pytest.mark.parametrize("metric", [ABS, SQ])
def test_identity_and_clamp(metric):
    assert local_similarity(metric, 42.0, 42.0) == 0.0
    assert local_similarity(metric, 5000.0, 0.0) == 1.0


def test_manual_metric_clamped_and_failing():
    reg = Registry()
    reg.register_metric("wild", lambda c, r, rng: 7.0)
    reg.register_metric("broken", lambda c, r, rng: 1 / 0)
    assert local_similarity(LocalMetric("X.y", "manual", "wild"), 1, 2, reg) == 1.0
    with pytest.raises(MetricError, match="broken"):
        local_similarity(LocalMetric("X.y", "manual", "broken"), 1, 2, reg)
    with pytest.raises(PluginError, match="not registered"):
        local_similarity(LocalMetric("X.y", "manual", "absent"), 1, 2, reg)


def test_pressure_band_plugin_against_oracle():
    m = LocalMetric("ProcessData.pressure", "manual", "pressureBand", (0, 2500))
    for cur, ref in [(1900.0, 2000), (2100.0, 2000), (1000.0, 1200), (2500.0, 0)]:
        assert local_similarity(m, cur, ref) == pytest.approx(oracle_local("pressureBand", (0, 2500), cur, ref),
                                                              abs=1e-12)


def test_bundled_spec_has_study_weights(spec):
    assert spec.declared_weights["PhaseData.switchOverVolume"] == Decimal("0.4")
    assert spec.declared_weights["PhaseData.cylinderHeating"] == Decimal("0.05")
    assert spec.locals["PhaseData.backPressure"].kind == "squared"
    assert spec.locals["PhaseData.dosingTime"].kind == "squared"
    assert spec.locals["ProcessData.pressure"].plugin == "pressureBand"
    assert sum(spec.weights.values()) == 1


def test_bundled_spec_round_trip(spec, domain):
    text = print_similarity_spec(spec)
    again = parse_similarity_spec(text, [domain])
    assert print_similarity_spec(again) == text
    assert again.locals == spec.locals and again.weights == spec.weights


SPEC_HEAD = "import InjectionMolding;\nsimilarity S {\n"


def spec_of(body, domain):
    return parse_similarity_spec(SPEC_HEAD + body + "\n}\n", [domain], "s.cs")


@pytest.mark.parametrize("body, message", [
    ("local ProcessData.pressure absolute;\nglobal weighted { ProcessData.pressure weight 0; }", "positive"),
    ("local ProcessData.pressure absolute;\nglobal weighted { ProcessData.pressure weight -1; }", "positive"),
    ("local ProcessData.pressure absolute;\nglobal weighted { ProcessData.cycleTime weight 1; }", "no local metric"),
    ("local ProcessData.cycleId absolute;\nglobal weighted { ProcessData.cycleId weight 1; }", "needs a range"),
    ("local ProcessData.pressure absolute;", "no global metric"),
    ("local ProcessData.pressure cosine;\nglobal weighted { ProcessData.pressure weight 1; }", "unknown metric"),
])
def test_spec_errors(domain, body, message):
    with pytest.raises(ParseError, match=message):
        spec_of(body, domain)


def test_range_override_makes_unranged_attribute_usable(domain):
    s = spec_of("local ProcessData.cycleId absolute range [0, 1000];\nglobal weighted { ProcessData.cycleId weight 2; }",
                domain)
    assert global_similarity(s, {"ProcessData.cycleId": 100}, {"ProcessData.cycleId": 0}) == pytest.approx(0.1)


def test_non_numeric_rejected_for_absolute():
    m = parse_domain_model("model M { class C { s: string; } }")
    with pytest.raises(ParseError, match="numeric"):
        parse_similarity_spec("import M; similarity S { local C.s absolute; global weighted { C.s weight 1; } }", [m])


def test_unknown_manual_plugin_loads_but_binding_fails(domain):
    s = spec_of("local ProcessData.pressure manual mystery;\nglobal weighted { ProcessData.pressure weight 1; }",
                domain)
    with pytest.raises(PluginError, match="mystery"):
        s.bind(default_registry())


# -- reference extraction --------------------------------------------------

def test_one_sided_bound(domain):
    assert extract_reference(cond("nozzleTemperature > 500", domain)) == {"ProcessData.nozzleTemperature": 500}


def test_midpoint(domain):
    assert extract_reference(cond("pressure > 1000 && pressure < 1400", domain)) == {"ProcessData.pressure": 1200}


def test_tightest_bounds_and_equality(domain):
    ref = extract_reference(cond("pressure > 10 && pressure > 30 && pressure < 90 && heating == 2", domain))
    assert ref == {"ProcessData.pressure": 60, "ProcessData.heating": 2}


@pytest.mark.parametrize("text", ["pressure > 1 || heating > 2", "!(pressure > 1)", "pressure != 3"])
def test_not_extractable(domain, text):
    with pytest.raises(ExtractError):
        extract_reference(cond(text, domain))


# -- global ----------------------------------------------------------------

def two_attr_spec():
    return SimilaritySpec("T", [], {"A.a": LocalMetric("A.a", "absolute", range=(0, 1)),
                                    "A.b": LocalMetric("A.b", "absolute", range=(0, 1))},
                          declared_weights={"A.a": Decimal("0.5"), "A.b": Decimal("0.5")})


def test_weighted_average():
    s = two_attr_spec()
    assert global_similarity(s, {"A.a": 0.2, "A.b": 0.4}, {"A.a": 0.0, "A.b": 0.0}) == pytest.approx(0.3, abs=1e-15)
    assert global_similarity(s, {"A.a": 0.2, "A.b": 0.4}, {"A.a": 0.2, "A.b": 0.4}) == 0.0


def test_unweighted_reference_attribute_contributes_nothing(spec):
    values = {"ProcessData.nozzleTemperature": 530.0, "PhaseData.meltCushion": 20.0}
    with_extra = global_similarity(spec, values, {"ProcessData.nozzleTemperature": 500, "PhaseData.meltCushion": 0})
    assert with_extra == global_similarity(spec, values, {"ProcessData.nozzleTemperature": 500})


def test_no_weighted_attribute_is_not_comparable(spec):
    with pytest.raises(NotComparable):
        global_similarity(spec, {"PhaseData.meltCushion": 1.0}, {"PhaseData.meltCushion": 12})


def test_missing_situation_attribute(spec):
    with pytest.raises(MetricError, match="missing"):
        global_similarity(spec, {}, {"ProcessData.nozzleTemperature": 500})


def test_filling_study_fixture_matches_oracle(spec, casebase):
    situation = {"PhaseData.switchOverVolume": 22.0, "PhaseData.injectionFlow": 45.0, "PhaseData.cylinderHeating": 3,
                 "PhaseData.backPressure": 60.0, "PhaseData.dosingTime": 8.0}
    for name in ("LowBackPressure", "MoreMaterialInjectable"):
        ref = extract_reference(casebase.get(name))
        assert global_similarity(spec, situation, ref) == pytest.approx(oracle_global(situation, ref), abs=1e-9)
    # by hand: LowBackPressure = (0.2 * (30/200)^2 + 0.2 * (2/20)^2) / 0.4
    ref = extract_reference(casebase.get("LowBackPressure"))
    assert global_similarity(spec, situation, ref) == pytest.approx(0.01625, abs=1e-12)


# -- properties ------------------------------------------------------------

PATHS = sorted(SIMILARITY_TABLE)


def value_for(path, x):
    lo, hi = SIMILARITY_TABLE[path][1]
    v = lo + (hi - lo) * x
    return round(v) if path.endswith("cylinderHeating") else v


unit = st.floats(0, 1, allow_nan=False)
situations = st.fixed_dictionaries({p: unit for p in PATHS}).map(lambda d: {p: value_for(p, x) for p, x in d.items()})
references = st.dictionaries(st.sampled_from(PATHS), unit, min_size=1).map(
    lambda d: {p: value_for(p, x) for p, x in d.items()})


@settings(max_examples=300)
@given(situations, references)
def test_scores_bounded_and_identity(spec, s, ref):
    score = global_similarity(spec, s, ref)
    assert 0.0 <= score <= 1.0
    assert global_similarity(spec, {**s, **ref}, ref) == 0.0


@settings(max_examples=200)
@given(situations, references, st.sampled_from([Decimal("0.001"), Decimal("3"), Decimal("12.5"), Decimal("1000")]))
def test_weight_rescaling_is_exactly_invisible(spec, s, ref, k):
    scaled = SimilaritySpec(spec.name, spec.imports, spec.locals, "weighted",
                            {p: w * k for p, w in spec.declared_weights.items()})
    assert global_similarity(scaled, s, ref) == global_similarity(spec, s, ref)


@settings(max_examples=200)
@given(st.floats(0, 600), st.floats(0, 600))
def test_absolute_and_squared_symmetric(a, b):
    assert local_similarity(ABS, a, b) == local_similarity(ABS, b, a)
    assert local_similarity(SQ, a, b) == local_similarity(SQ, b, a)


@settings(max_examples=200)
@given(situations, references, st.sampled_from(PATHS), unit, unit)
def test_monotone_in_each_local(spec, s, ref, path, x, y):
    if path not in ref:
        ref = {**ref, path: value_for(path, 0.5)}
    near, far = sorted([x, y])
    r = ref[path]
    lo, hi = SIMILARITY_TABLE[path][1]
    # move the current value away from the reference by two growing gaps
    s1 = {**s, path: min(hi, r + (hi - lo) * near * 0.5) if path != "PhaseData.cylinderHeating" else s[path]}
    s2 = {**s, path: min(hi, r + (hi - lo) * far * 0.5) if path != "PhaseData.cylinderHeating" else s[path]}
    if path == "ProcessData.pressure" and (s1[path] >= 2000) != (s2[path] >= 2000):
        return  # the band penalty is a step, monotone only within one side
    assert global_similarity(spec, s1, ref) <= global_similarity(spec, s2, ref) + 1e-15


def test_random_pairs_against_oracle(spec, domain):
    rnd = random.Random(2024)
    for _ in range(300):
        comps = []
        for path in rnd.sample(PATHS, rnd.randint(1, 4)):
            lo, hi = SIMILARITY_TABLE[path][1]
            a, b = sorted(round(rnd.uniform(lo, hi), 2) for _ in range(2))
            kind = rnd.choice(["==", ">", "<", "between"])
            if kind == "between":
                comps += [(path, ">", a), (path, "<", b)]
            else:
                comps.append((path, kind, a))
        text = " && ".join(f"{p} {op} {v}" for p, op, v in comps)
        ref = extract_reference(cond(text, domain))
        assert ref == pytest.approx(oracle_reference(comps), abs=1e-12)
        situation = {p: rnd.uniform(*SIMILARITY_TABLE[p][1]) for p in PATHS}
        assert math.isclose(global_similarity(spec, situation, ref), oracle_global(situation, ref), abs_tol=1e-9)
