import json
import math

import pytest

import occupred


def test_version_and_stages():
    assert occupred.version().startswith("occupred ")
    assert occupred.stage_names()[0] == "synth"
    assert len(occupred.stage_names()) == 10


def test_taxonomy_and_accuracy():
    tax = occupred.Taxonomy.fixture()
    codes = tax.codes()
    assert len(tax) == len(codes) > 5
    truth = codes[0]
    ranked = tax.related(truth)
    assert ranked[0] == truth
    assert tax.related_rank(truth, ranked[1]) == 2
    assert tax.normalize_title("no such occupation") is None
    rows = [(truth, truth), (truth, ranked[1]), (truth, None)]
    assert occupred.acc_em(rows) == pytest.approx(1 / 3)
    assert occupred.acc_rm(rows, tax) == pytest.approx((1 + 0.5) / 3)


def test_dpo_loss():
    assert occupred.dpo_loss(-3, -4, -3, -4, beta=0.1) == pytest.approx(math.log(2), abs=1e-12)
    z = 0.1 * ((-10 + 11) - (-12 + 11.5))
    assert occupred.dpo_loss(-10, -12, -11, -11.5, beta=0.1) == pytest.approx(math.log1p(math.exp(-z)), abs=1e-12)
    with pytest.raises(occupred.InvalidArgument):
        occupred.dpo_loss(0, 0, 0, 0, beta=0)


def test_text_metrics_and_mcnemar():
    s = "A data analyst became a data scientist."
    assert occupred.bleu(s, s) == 1.0
    assert occupred.rouge_l("a b c d", "a c b d") == pytest.approx(0.75)
    r = occupred.mcnemar(10, 2)
    assert r["statistic"] == pytest.approx(49 / 12, abs=1e-12)


def test_judge_and_output_parsing():
    scores = occupred.parse_judge_output("FACT: 4 COHR: 4.5 UTIL: 5")
    assert scores == {"fact": 4.0, "cohr": 4.5, "util": 5.0}
    assert occupred.parse_judge_output("nothing") is None
    assert occupred.passes_threshold(4, 4, 4)
    assert not occupred.passes_threshold(4, 3.9, 5)
    reason, pred = occupred.parse_output("REASON: steady growth\nNEXT_OCCUPATION: Data Scientists")
    assert reason == "steady growth"
    assert pred == "Data Scientists"


def test_pipeline_round(tmp_path):
    out = occupred.run_stage("synth", runs_dir=str(tmp_path), run_id="py")
    assert not out["skipped"]
    playbook = tmp_path / "py" / "synth" / "playbook.json"
    assert occupred.run_stage("synth", runs_dir=str(tmp_path), run_id="py")["skipped"]
    with pytest.raises(occupred.MissingStage):
        occupred.run_stage("forge", runs_dir=str(tmp_path), run_id="py", mock=str(playbook))
    occupred.run_stage("ingest", runs_dir=str(tmp_path), run_id="py", mock=str(playbook))
    out = occupred.run_stage("forge", runs_dir=str(tmp_path), run_id="py", mock=str(playbook))
    assert "pool.jsonl" in out["outputs"]
    manifest = json.loads((tmp_path / "py" / "forge" / "manifest.json").read_text())
    assert manifest["stage"] == "forge"
    assert "ingest/train.jsonl" in manifest["inputs"]


def test_config_error(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[run]\ntau = 9\n")
    with pytest.raises(occupred.ConfigError):
        occupred.run_stage("synth", config=str(cfg), runs_dir=str(tmp_path))
