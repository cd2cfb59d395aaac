import json
import os
import subprocess

import pytest

import palmscan


def test_geometry_roundtrip_and_tiles():
    x, y = palmscan.geo_to_mercator(32.75, -117.13)
    lat, lon = palmscan.mercator_to_geo(x, y)
    assert abs(lat - 32.75) < 1e-9 and abs(lon + 117.13) < 1e-9
    assert palmscan.tile_bounds(0, 0, 0)[1] == -180.0
    tile = palmscan.tile_for_point(32.75, -117.13, 19)
    south, west, north, east = palmscan.tile_bounds(*tile)
    assert south < 32.75 <= north and west <= -117.13 < east
    clat, clon = palmscan.box_center_geo(tile, (0, 0, 256, 256))
    assert south < clat < north and west < clon < east
    with pytest.raises(palmscan.DomainError):
        palmscan.geo_to_mercator(89.0, 0.0)


def test_headings():
    assert palmscan.camera_heading((32.75, -117.13), (32.76, -117.13)) == 0.0
    assert palmscan.pixel_shift_deg((400, 100, 480, 200)) == 16.875
    assert palmscan.pixel_shift_deg((0, 0, 0, 10)) == -45.0


def test_cost_model():
    c = palmscan.cost_comparison(panoramas=1136, street_images=756)
    assert c["street_only_images"] == 4544
    assert c["street_only_cost_usd"] == "31.808000"
    assert c["reduces_six_fold"] is True
    with pytest.raises(palmscan.ConfigError):
        palmscan.cost_comparison(1, 1, street_usd=-1.0)


def test_timeline_and_metrics():
    t = palmscan.build_timeline([("2018-04", [0.1, 0.9, 0.0]), ("2017-11", [0.8, 0.2, 0.0])])
    assert t["transition"] == {"last_healthy": "2017-11", "first_infested": "2018-04"}
    gts = [("a", (0, 0, 10, 10)), ("b", (0, 0, 10, 10))]
    assert palmscan.average_precision([("a", (0, 0, 10, 10), 0.9), ("b", (0, 0, 10, 10), 0.8)], gts) == 1.0
    m = palmscan.classification_metrics([("infested", [0.2, 0.8, 0.0]), ("healthy", [0.7, 0.3, 0.0])])
    assert m["auc"] == 1.0 and m["tp"] == 1 and m["tn"] == 1


def test_simulated_survey_end_to_end(tmp_path):
    cfg = palmscan.simulate(tmp_path, seed=3, palms=40, blocks=2)
    survey = palmscan.Survey(cfg, workers=2)
    plan = survey.plan()
    assert plan["tiles"] > 0
    stages = survey.run_all()
    assert [s["stage"] for s in stages] == ["detect-aerial", "link", "detect-street", "classify", "history"]
    cost = survey.write_report()
    assert cost["street_only_images"] > 0
    score = palmscan.score(tmp_path / "world.json", survey.registry_path)
    assert score["recall"] == 1.0 and score["precision"] == 1.0
    assert all(s["skipped"] for s in palmscan.Survey(cfg).run_all())
    with pytest.raises(palmscan.ConfigError):
        survey.run_stage("bogus")


def test_config_errors(tmp_path):
    cfg = palmscan.simulate(tmp_path, seed=1, palms=5, blocks=1)
    doc = json.loads(open(cfg).read())
    doc["provider"]["api_key"] = "nope"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(palmscan.ConfigError):
        palmscan.Survey(bad)


@pytest.mark.skipif("PALMSCAN_CLI" not in os.environ, reason="needs the palmscan binary")
def test_stdio_protocol_against_serve_mock(tmp_path):
    palmscan.simulate(tmp_path, seed=2, palms=10, blocks=1)
    requests = [
        {"op": "hello", "version": 1, "task": "detect"},
        {"op": "detect", "id": 1, "image": "tiles/20/0/0.png"},
        {"op": "detect", "id": 2, "image": "nonsense"},
    ]
    proc = subprocess.run(
        [os.environ["PALMSCAN_CLI"], "serve-mock", "--world", str(tmp_path / "world.json")],
        input="".join(json.dumps(r) + "\n" for r in requests),
        capture_output=True,
        text=True,
        check=True,
    )
    replies = [json.loads(line) for line in proc.stdout.splitlines()]
    assert replies[0]["op"] == "hello" and replies[0]["version"] == 1
    assert replies[1]["id"] == 1 and replies[1]["detections"] == []
    assert replies[2] == {"op": "error", "id": 2, "message": replies[2]["message"]}
