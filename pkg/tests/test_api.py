from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from fogmesh.api import CLUSTER_DATA_PATH, DEPLOYMENT_INFO_PATH, PLACEMENT_REQUESTS_PATH, decode, encode, roundtrip
from fogmesh.api.schema import KINDS
from fogmesh.api.service import create_app
from fogmesh.fabric import reference_topology
from fogmesh.federation import Federation
from fogmesh.placement import MalformedPR, PlacementRequest, pr_from_dict
from fogmesh.workload import REFERENCE_ORDER, app2, hcapp

from .conftest import GOLDEN


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_golden_round_trip_is_bit_exact(kind):
    text = (GOLDEN / f"{kind}.json").read_text()
    assert roundtrip(kind, text) == text


def test_encode_is_canonical():
    assert encode({"b": 1, "a": [1]}) == '{\n  "b": 1,\n  "a": [\n    1\n  ]\n}\n'
    assert decode(encode({"x": 1.5})) == {"x": 1.5}


@pytest.mark.parametrize("missing", ["applicationId", "entryClusters"])
def test_required_pr_fields(missing):
    doc = decode((GOLDEN / "placement-request.json").read_text())
    del doc[missing]
    with pytest.raises(MalformedPR, match=missing):
        pr_from_dict(doc)
    doc[missing] = [] if missing == "entryClusters" else ""
    with pytest.raises(MalformedPR):
        pr_from_dict(doc)


def test_pr_fields_are_typed():
    with pytest.raises(MalformedPR):
        pr_from_dict({"applicationId": "a", "entryClusters": "fog1"})
    with pytest.raises(MalformedPR):
        pr_from_dict({"applicationId": "a", "entryClusters": ["fog1"], "hopCount": -1})
    with pytest.raises(MalformedPR):
        pr_from_dict([])


# service mode


@pytest.fixture
def fed(topo):
    f = Federation(topo)
    f.seed([hcapp(), app2()])
    return f


@pytest.fixture
def client(fed):
    return TestClient(create_app(fed, "fog1"))


def test_submit_and_query(client, fed):
    r = client.post(PLACEMENT_REQUESTS_PATH, json={"prId": "a", "applicationId": "app2", "entryClusters": ["fog1"]})
    assert r.status_code == 202 and r.json() == {"prId": "a"}
    assert client.get("/prs/a").json()["status"] == "deployed"
    assert client.get("/prs/zzz").status_code == 404


@pytest.mark.parametrize("body,headers,status", [
    ({"applicationId": "app2"}, {}, 400),
    ("not json", {}, 400),
    ({"applicationId": "ghost", "entryClusters": ["fog1"]}, {}, 404),
    ({"applicationId": "app2", "entryClusters": ["fog1"]}, {"cluster": "fog9"}, 404),
])
def test_submit_errors(client, body, headers, status):
    if isinstance(body, str):
        r = client.post(PLACEMENT_REQUESTS_PATH, content=body, headers=headers)
    else:
        r = client.post(PLACEMENT_REQUESTS_PATH, json=body, headers=headers)
    assert r.status_code == status
    assert "error" in r.json()


def test_duplicate_pr_conflicts(client):
    body = {"prId": "dup", "applicationId": "app2", "entryClusters": ["fog1"]}
    assert client.post(PLACEMENT_REQUESTS_PATH, json=body).status_code == 202
    assert client.post(PLACEMENT_REQUESTS_PATH, json=body).status_code == 409


def test_cluster_data_header(client):
    assert client.get(CLUSTER_DATA_PATH).json()["clusterName"] == "fog1"  # default is the local cluster
    assert client.get(CLUSTER_DATA_PATH, headers={"cluster": "cloud1"}).json()["clusterName"] == "cloud1"
    assert client.get(CLUSTER_DATA_PATH, headers={"cluster": "nope"}).status_code == 404


def test_deployment_info_apply_noop_and_conflict(client, fed):
    doc = decode((GOLDEN / "deployment-info.json").read_text())
    r = client.post(DEPLOYMENT_INFO_PATH, json=doc, headers={"cluster": "fog2"})
    assert r.status_code == 200 and r.json() == {"applied": True, "noop": False}
    again = client.post(DEPLOYMENT_INFO_PATH, json=doc, headers={"cluster": "fog2"})
    assert again.status_code == 200 and again.json()["noop"] is True
    # wrong header, missing field, stale placement
    assert client.post(DEPLOYMENT_INFO_PATH, json=doc).status_code == 400
    assert client.post(DEPLOYMENT_INFO_PATH, json={"prId": "x"}, headers={"cluster": "fog2"}).status_code == 400
    big = json.loads(json.dumps(doc))
    big["prId"] = "other"
    big["placements"][0]["cpu"] = 64.0
    assert client.post(DEPLOYMENT_INFO_PATH, json=big, headers={"cluster": "fog2"}).status_code == 409


def test_service_mode_matches_simulation_mode():
    def requests():
        return [{"prId": f"pr-{a}", "applicationId": a, "entryClusters": ["fog1"]} for a in REFERENCE_ORDER]

    sim = Federation(reference_topology())
    sim.seed([hcapp(), app2()])
    for doc in requests():
        sim.submit(doc, "fog1", at=sim.sim.now)
        sim.run()

    svc = Federation(reference_topology())
    svc.seed([hcapp(), app2()])
    client = TestClient(create_app(svc, "fog1"))
    for doc in requests():
        assert client.post(PLACEMENT_REQUESTS_PATH, json=doc).status_code == 202

    assert sim.states == svc.states == {"pr-hcapp": "deployed", "pr-app2": "deployed"}
    for pr_id in sim.states:
        assert sim.placements(pr_id) == svc.placements(pr_id)
    assert sim.mesh.dump() == svc.mesh.dump()


def test_wire_pr_survives_a_hop():
    pr = PlacementRequest("p", "app2", ["fog1"], hop_count=2, visited_clusters=["fog1", "fog2"])
    text = encode(KINDS["placement-request"][1](pr))
    assert roundtrip("placement-request", text) == text
