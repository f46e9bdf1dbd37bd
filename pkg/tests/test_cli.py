import json
import subprocess
import sys

import pytest
import yaml

from thinkswitch.cli import main
from thinkswitch.mock import script_from_dicts, serve, shipped_fixture

ESC_DATA = str(shipped_fixture("escalation_suite").with_name("escalation_suite.dataset.jsonl"))


def endpoint_file(tmp_path, url):
    p = tmp_path / "endpoint.yaml"
    p.write_text(yaml.safe_dump({"base_url": url, "model": "mock-model", "backoff_base": 0.001, "backoff_cap": 0.01}))
    return str(p)


def run_eval(tmp_path, server, *extra, out="res"):
    return main(["eval", "--dataset", ESC_DATA, "--endpoint", endpoint_file(tmp_path, server.url),
                 "--out", str(tmp_path / out), *extra])


def test_eval_writes_report(tmp_path, escalation_server, capsys):
    code = run_eval(tmp_path, escalation_server, "--strategy", "spec_trigger", "--strategy", "spec_entropy")
    assert code == 0
    out = tmp_path / "res"
    assert {"metrics.txt", "metrics.csv", "records.jsonl", "outcomes.jsonl", "decisions.json"} <= {
        p.name for p in out.iterdir()}
    printed = capsys.readouterr().out
    assert "spec_entropy" in printed and "failed records: 0/15" in printed
    decisions = json.loads((out / "decisions.json").read_text())
    assert decisions["spec_trigger"]["escalation_rate"] == pytest.approx(0.4)


def test_eval_is_idempotent(tmp_path, escalation_server):
    assert run_eval(tmp_path, escalation_server, "--strategy", "no_think", out="a") == 0
    assert run_eval(tmp_path, escalation_server, "--strategy", "no_think", out="b") == 0
    for name in ("metrics.csv", "records.jsonl", "metrics.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("args", [
    ["--strategy", "nope"],
    ["--strategy", "s1_low", "--profile", "gpt-oss"],
    ["--profile", "llama"],
])
def test_eval_config_errors(tmp_path, escalation_server, args, capsys):
    assert run_eval(tmp_path, escalation_server, *args) == 2
    assert "thinkswitch:" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("strategies: [full_think]\nbogus: 1\n")
    assert main(["eval", "--config", str(cfg), "--dataset", ESC_DATA]) == 2


def test_missing_dataset_is_io_error(tmp_path, escalation_server):
    assert main(["eval", "--dataset", str(tmp_path / "none.jsonl"), "--endpoint", escalation_server.url]) == 4


def test_unreachable_endpoint(tmp_path, capsys):
    code = main(["eval", "--dataset", ESC_DATA, "--endpoint", endpoint_file(tmp_path, "http://127.0.0.1:9/v1"),
                 "--out", str(tmp_path / "x")])
    assert code == 3 and "unreachable" in capsys.readouterr().err


def test_rft_outputs(tmp_path, escalation_server, capsys):
    out = tmp_path / "rft"
    code = main(["rft", "--dataset", ESC_DATA, "--endpoint", endpoint_file(tmp_path, escalation_server.url),
                 "--out", str(out), "--k", "2"])
    assert code == 0
    sft = [json.loads(line) for line in (out / "sft.jsonl").read_text().splitlines()]
    assert len(sft) == 5 and [r["problem_id"] for r in sft] == [f"esc-{i}" for i in range(1, 6)]
    assert len((out / "rollouts.jsonl").read_text().splitlines()) == 5 * 2 * 2
    grpo = [json.loads(line) for line in (out / "grpo.jsonl").read_text().splitlines()]
    assert len(grpo) == 5 * 8
    for gid in {g["group_id"] for g in grpo}:
        assert abs(sum(g["advantage"] for g in grpo if g["group_id"] == gid)) <= 1e-12


def test_rft_all_incorrect_warns(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    data.write_text('{"id": "x", "domain": "math", "problem": "What is 1+1?", "reference": "2"}\n')
    with serve(script_from_dicts([{"match": {}, "reply": {"thinking": "t", "answer": "\\boxed{3}"}}])) as server:
        code = main(["rft", "--dataset", str(data), "--endpoint", endpoint_file(tmp_path, server.url),
                     "--out", str(tmp_path / "o"), "--k", "1", "--formats", "sft,dpo"])
    assert code == 0
    assert (tmp_path / "o" / "sft.jsonl").read_text() == ""
    assert "no correct rollout" in capsys.readouterr().err


def test_rft_bad_format(tmp_path, escalation_server):
    assert main(["rft", "--dataset", ESC_DATA, "--endpoint", escalation_server.url, "--formats", "ppo"]) == 2


def test_report_recomputes(tmp_path, escalation_server, capsys):
    assert run_eval(tmp_path, escalation_server, "--strategy", "no_think") == 0
    before = (tmp_path / "res" / "metrics.csv").read_bytes()
    assert main(["report", "--records", str(tmp_path / "res"), "--out", str(tmp_path / "again"),
                 "--format", "csv"]) == 0
    assert (tmp_path / "again" / "metrics.csv").read_bytes() == before
    assert main(["report", "--records", str(tmp_path / "res"), "--baseline", "routing"]) == 2
    assert main(["report", "--records", str(tmp_path / "nothing")]) == 4


def test_mock_command_errors(tmp_path):
    with serve(script_from_dicts([{"match": {}, "reply": "x"}])) as server:
        assert main(["mock", "--fixture", "routing_suite", "--port", str(server.port)]) == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n")
    assert main(["mock", "--fixture", str(bad), "--port", "0"]) == 2
    assert main(["mock", "--fixture", "no_such_fixture", "--port", "0"]) == 4


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "thinkswitch.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "eval" in out.stdout and "rft" in out.stdout
