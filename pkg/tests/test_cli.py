"""End-to-end CLI workflow over a generated offline fixture."""

from __future__ import annotations

import json

import pytest

from vidcurate.cli import main


@pytest.fixture
def fixture_dir(tmp_path, capsys):
    assert main(["bench", "synth", "--out", str(tmp_path / "fx"), "--total", "60"]) == 0
    capsys.readouterr()
    config = {
        "backend": {"kind": "scripted", "script_path": str(tmp_path / "fx" / "rules.json")},
        "adapter": {"kind": "local_corpus", "root_dir": str(tmp_path / "fx" / "corpus")},
        "session": {"accept_threshold": 0.9, "seed": 7},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    return tmp_path


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


class TestCliWorkflow:
    def test_full_session(self, fixture_dir, capsys):
        config = str(fixture_dir / "config.json")
        data = str(fixture_dir / "data")
        base = ["--config", config, "--data-dir", data]

        code, out = run(base + ["new", "--query", "cat videos", "--session", "cli1"], capsys)
        assert code == 0
        assert json.loads(out)["phase"] == "interactive"

        terminated = False
        for _ in range(6):
            code, out = run(base + ["round", "--session", "cli1"], capsys)
            assert code == 0
            skeleton = json.loads(out)
            record = {
                "round_index": skeleton["round_index"],
                "sampled": skeleton["sampled"],
                "accepted": skeleton["sampled"],
                "rejected": [],
                "comments": [],
                "kind": skeleton["kind"],
            }
            record_path = fixture_dir / "record.json"
            record_path.write_text(json.dumps(record), encoding="utf-8")
            code, out = run(base + ["feedback", "--session", "cli1",
                                    "--file", str(record_path)], capsys)
            assert code == 0
            if json.loads(out)["terminated"]:
                terminated = True
                break
        assert terminated

        code, out = run(base + ["auto", "--session", "cli1", "--budget", "5"], capsys)
        assert code == 0
        assert json.loads(out)["collected"] == 5

        out_path = fixture_dir / "manifest.jsonl"
        code, out = run(base + ["export", "--session", "cli1", "--out", str(out_path)], capsys)
        assert code == 0
        lines = out_path.read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[0])["entry_count"] == len(lines) - 1

        code, out = run(base + ["reset", "--session", "cli1"], capsys)
        assert code == 0
        assert json.loads(out)["phase"] == "proposing"


class TestCliBench:
    def test_selector_baselines(self, fixture_dir, capsys):
        bench_path = str(fixture_dir / "fx" / "benchmark.jsonl")
        for selector, expect_final in (("oracle", 1.0), ("none", 0.0)):
            out_dir = fixture_dir / f"out-{selector}"
            code, out = run(
                ["bench", "run", "--benchmark", bench_path, "--selector", selector,
                 "--seed", "7", "--out", str(out_dir)], capsys,
            )
            assert code == 0
            assert (out_dir / "results.csv").exists()
            final_line = out.strip().splitlines()[-1]
            assert f"IoU {expect_final:.4f}" in final_line

    def test_agent_selector(self, fixture_dir, capsys):
        bench_path = str(fixture_dir / "fx" / "benchmark.jsonl")
        out_dir = fixture_dir / "out-agent"
        code, out = run(
            ["bench", "run", "--benchmark", bench_path, "--selector", "agent",
             "--seed", "7", "--out", str(out_dir)], capsys,
        )
        assert code == 0
        assert (out_dir / "transcript.jsonl").exists()
        assert "IoU 1.0000" in out.strip().splitlines()[-1]
