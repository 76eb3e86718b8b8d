from __future__ import annotations

import json
from pathlib import Path

import pytest

from probekit.cli import main
from probekit.dtnio import read_raw
from probekit.manifest import read_manifest, verify_manifest

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"
TWO_DISKS = CONFIGS / "two_disks.toml"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def error_payload(err):
    return json.loads(err.strip().splitlines()[-1])


class TestUsage:
    def test_no_command(self, capsys):
        code, _, err = run(capsys)
        assert code == 2
        assert error_payload(err)["error"] == "UsageError"

    def test_unknown_command(self, capsys):
        assert run(capsys, "frobnicate")[0] == 2

    @pytest.mark.parametrize("seed", ["-1", str(2**64), "x"])
    def test_bad_seed(self, capsys, tmp_path, seed):
        assert run(capsys, "mesh", "--config", TWO_DISKS, "--seed", seed, "--out", tmp_path)[0] == 2

    def test_bad_mesh_h(self, capsys, tmp_path):
        assert run(capsys, "mesh", "--config", TWO_DISKS, "--mesh-h", "0", "--out", tmp_path)[0] == 2

    def test_config_required(self, capsys, tmp_path):
        code, _, err = run(capsys, "dtn", "--out", tmp_path)
        assert code == 2
        assert "--config" in error_payload(err)["message"]

    def test_version(self, capsys):
        assert run(capsys, "--version")[0] == 0


class TestConfigErrors:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "mesh", "--config", tmp_path / "nope.toml", "--out", tmp_path)
        assert code == 3
        assert error_payload(err)["error"] == "ConfigError"

    def test_bad_value_located(self, capsys, tmp_path):
        text = TWO_DISKS.read_text().replace("k = 2.0", "k = -2.0")
        cfg = tmp_path / "bad.toml"
        cfg.write_text(text)
        code, _, err = run(capsys, "mesh", "--config", cfg, "--out", tmp_path)
        assert code == 3
        assert error_payload(err)["error"] == "ConfigError"

    def test_syntax_error(self, capsys, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[domain\n")
        code, _, err = run(capsys, "mesh", "--config", cfg, "--out", tmp_path)
        assert code == 3
        assert error_payload(err)["line"] == 1

    def test_inadmissible(self, capsys, tmp_path):
        text = TWO_DISKS.read_text().replace("center = [0.35, 0.0]", "center = [0.7, 0.0]")
        cfg = tmp_path / "bad.toml"
        cfg.write_text(text)
        code, _, err = run(capsys, "mesh", "--config", cfg, "--out", tmp_path)
        assert code == 3
        payload = error_payload(err)
        assert payload["error"] == "AdmissibilityError"
        assert any("D2" in v for v in payload["violations"])


class TestCommands:
    def test_dtn_and_manifest(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("PROBEKIT_CACHE", str(tmp_path / "cache"))
        out = tmp_path / "run"
        assert run(capsys, "dtn", "--config", TWO_DISKS, "--mesh-h", "0.05", "--out", out)[0] == 0
        names = {p.name for p in out.iterdir()}
        assert {"background.dtn", "D1.dtn", "D2.dtn", "eigenvalues_D1.csv", "manifest.json",
                "config.toml"} <= names
        raw = read_raw(out / "D1.dtn")
        assert raw["mesh_h"] == 0.05
        m = read_manifest(out)
        assert "D1.dtn" in m.outputs
        assert m.seed == 0
        assert verify_manifest(out) == []
        first = (out / "D1.dtn").read_bytes()
        # second run is served from the cache and must be identical
        out2 = tmp_path / "run2"
        assert run(capsys, "dtn", "--config", TWO_DISKS, "--mesh-h", "0.05", "--out", out2)[0] == 0
        assert (out2 / "D1.dtn").read_bytes() == first
        assert (out2 / "eigenvalues_D1.csv").read_bytes() == (out / "eigenvalues_D1.csv").read_bytes()

    def test_manifest_accumulates(self, capsys, tmp_path):
        assert run(capsys, "mesh", "--config", TWO_DISKS, "--mesh-h", "0.05", "--out", tmp_path)[0] == 0
        assert run(capsys, "three-spheres", "--config", TWO_DISKS, "--trials", "5", "--out", tmp_path)[0] == 0
        outs = read_manifest(tmp_path).outputs
        assert "mesh.json" in outs
        assert "three_spheres.csv" in outs

    def test_three_spheres_deterministic(self, capsys, tmp_path):
        for d in ("a", "b"):
            run(capsys, "three-spheres", "--config", TWO_DISKS, "--trials", "8", "--out", tmp_path / d)
        assert (tmp_path / "a/three_spheres.csv").read_bytes() == (tmp_path / "b/three_spheres.csv").read_bytes()
        assert len((tmp_path / "a/three_spheres.csv").read_text().splitlines()) == 9

    def test_indicator(self, capsys, tmp_path):
        code, _, _ = run(capsys, "indicator", "--config", TWO_DISKS, "--mesh-h", "0.05", "--pairs", "3",
                         "--out", tmp_path)
        assert code == 0
        lines = (tmp_path / "indicator.csv").read_text().splitlines()
        assert lines[0] == "y_x,y_y,w_x,w_y,f_direct,f_boundary,rel_err"
        assert len(lines) == 4
