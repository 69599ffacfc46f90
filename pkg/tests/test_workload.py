from __future__ import annotations

import pytest

from fogmesh.app_model import application_to_dict, validate
from fogmesh.workload import APP_LEVEL_RESOURCES, GeneratorSpec, Pattern, app2, canned, generate, hcapp, render_templates


def test_chained_two():
    app = generate(GeneratorSpec(Pattern.CHAINED, length=2))
    assert sorted(app.microservices) == ["m1", "m2"]
    assert [f.key for f in app.dataflows] == [("m1", "m2")]
    (svc,) = app.services
    assert len(svc.data_paths) == 1
    assert not validate(app)


def test_chained_one_has_no_paths():
    app = generate(GeneratorSpec(Pattern.CHAINED, length=1))
    assert app.dataflows == () and app.services[0].data_paths == ()
    assert not validate(app)


def test_aggregator_two():
    app = generate(GeneratorSpec(Pattern.AGGREGATOR, fan_out=2))
    assert len(app.microservices) == 4
    assert sorted(f.key for f in app.dataflows) == [("m1", "m2"), ("m2", "m3"), ("m2", "m4")]
    assert len(app.services[0].data_paths) == 2
    assert not validate(app)


def test_candidate_is_one_service_per_branch():
    app = generate(GeneratorSpec(Pattern.CANDIDATE, fan_out=3))
    assert [sorted(s.members) for s in app.services] == [["m1", "m2"], ["m1", "m3"], ["m1", "m4"]]
    assert app.roots() == ["m1"]
    assert not validate(app)


def test_hybrid_recipe():
    app = generate(GeneratorSpec(Pattern.HYBRID, recipe=(1, 2)))
    # m1 -> m2 -> {m3, m4}
    assert len(app.microservices) == 4
    assert sorted(f.key for f in app.dataflows) == [("m1", "m2"), ("m2", "m3"), ("m2", "m4")]
    app = generate(GeneratorSpec(Pattern.HYBRID, recipe=(2, 2)))
    assert len(app.microservices) == 1 + 2 + 4
    assert not validate(app)


def test_generation_is_deterministic():
    spec = GeneratorSpec(Pattern.HYBRID, recipe=(2, 1), rng_seed=11)
    assert application_to_dict(generate(spec)) == application_to_dict(generate(spec))
    other = GeneratorSpec(Pattern.HYBRID, recipe=(2, 1), rng_seed=12)
    assert application_to_dict(generate(spec)) != application_to_dict(generate(other))


def test_values_respect_ranges():
    spec = GeneratorSpec(Pattern.AGGREGATOR, fan_out=5, processing_time_range=(7, 9), ref_cpu_range=(0.2, 0.2))
    app = generate(spec)
    for m in app.microservices.values():
        assert 7 <= m.processing_time <= 9 and m.ref_cpu == 0.2


@pytest.mark.parametrize("spec", [
    GeneratorSpec(Pattern.CHAINED, length=0),
    GeneratorSpec(Pattern.AGGREGATOR, fan_out=0),
    GeneratorSpec(Pattern.HYBRID, recipe=()),
    GeneratorSpec(Pattern.CHAINED, processing_time_range=(5, 1)),
    GeneratorSpec(Pattern.CHAINED, ref_cpu_range=(0, 1)),
])
def test_bad_specs(spec):
    with pytest.raises(ValueError):
        generate(spec)


def test_templates_cover_every_reference():
    app = generate(GeneratorSpec(Pattern.CHAINED, length=3, app_id="g"))
    docs = render_templates(app)
    assert len(docs) == 2 + 3 * 3
    assert set(docs) == {r for refs in app.deployment_resources.values() for r in refs}
    assert docs["g/m2/pod.yaml"]["image"] == app.microservices["m2"].image_ref
    assert APP_LEVEL_RESOURCES in app.deployment_resources


def test_canned_shapes():
    h, a = hcapp(), app2()
    assert sorted(h.microservices) == ["hcm1", "hcm2", "hcm3"]
    assert [s.service_id for s in h.services] == ["S1", "S2"]
    assert a.roots() == ["a2m1"]
    assert sorted(a.consumed("a2m2")) == ["a2m3", "a2m4"]
    assert canned("app2") == a


def test_canned_unknown():
    with pytest.raises(KeyError, match="unknown canned"):
        canned("x")
