"""Run manifests, checksum verification and the run registry."""

import json

import pytest

from tools import run_registry
from tools.errors import ManifestError
from tools.manifest import CHECKSUMS_NAME, MANIFEST_NAME, read_checksums, verify_checksums, write_manifest


class TestManifest:
    def _outputs(self, tmp_path):
        (tmp_path / "a.json").write_text('{"x": 1}')
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "b.csv").write_text("step,loss\n1,0.5\n")
        return [tmp_path / "sub" / "b.csv", tmp_path / "a.json"]

    def test_entries_and_checksums(self, tmp_path):
        manifest = write_manifest(tmp_path, "pretrain", "abc", [0, 1], self._outputs(tmp_path), {"k": 2})
        assert [f.name for f in manifest.files] == ["a.json", "sub/b.csv"]
        assert manifest.files[0].size == 8
        written = json.loads((tmp_path / MANIFEST_NAME).read_text())
        assert written["seeds"] == [0, 1]
        assert written["extra"] == {"k": 2}
        assert "torch" in written["versions"]
        lines = (tmp_path / CHECKSUMS_NAME).read_text().splitlines()
        assert [line.split("  ")[1] for line in lines] == ["a.json", "sub/b.csv"]
        assert verify_checksums(tmp_path) == []

    def test_tampering_detected(self, tmp_path):
        outputs = self._outputs(tmp_path)
        write_manifest(tmp_path, "pretrain", "abc", [0], outputs)
        (tmp_path / "a.json").write_text('{"x": 2}')
        (tmp_path / "sub" / "b.csv").unlink()
        assert sorted(verify_checksums(tmp_path)) == ["a.json", "sub/b.csv"]

    def test_read_checksums(self, tmp_path):
        manifest = write_manifest(tmp_path, "pretrain", "abc", [0], self._outputs(tmp_path))
        assert read_checksums(tmp_path) == {f.name: f.sha256 for f in manifest.files}

    def test_no_outputs(self, tmp_path):
        write_manifest(tmp_path, "pretrain", "abc", [0], [])
        assert read_checksums(tmp_path) == {}
        assert verify_checksums(tmp_path) == []

    @pytest.mark.parametrize("line", [
        "# generated by hand",
        "0" * 64 + " *a.json",
        "0" * 64 + " a.json",
        "A" * 64 + "  a.json",
        "0" * 63 + "  a.json",
    ])
    def test_foreign_lines_rejected(self, tmp_path, line):
        write_manifest(tmp_path, "pretrain", "abc", [0], self._outputs(tmp_path))
        with open(tmp_path / CHECKSUMS_NAME, "a") as f:
            f.write(line + "\n")
        with pytest.raises(ManifestError, match="line 3 is malformed"):
            verify_checksums(tmp_path)

    def test_missing_checksums(self, tmp_path):
        with pytest.raises(ManifestError):
            verify_checksums(tmp_path)


class TestRegistry:
    def test_lifecycle(self):
        run_id = run_registry.start_run("registry-test", [3, 4], "hash", "/tmp/out")
        assert run_id is not None
        run_registry.record_metrics(run_id, "seed=3", {"balanced_accuracy": 0.75, "auroc": None})
        run_registry.finish_run(run_id, "ok")

        latest = run_registry.list_runs(command="registry-test", limit=1)[0]
        assert latest.run_id == run_id
        assert latest.seeds == [3, 4]
        assert latest.status == "ok"
        assert latest.finished_at is not None
        assert latest.metrics == {"seed=3": {"balanced_accuracy": 0.75}}

    def test_newest_first_and_filtered(self):
        first = run_registry.start_run("registry-order", [0], "h1", "/tmp/a")
        second = run_registry.start_run("registry-order", [0], "h2", "/tmp/b")
        runs = run_registry.list_runs(command="registry-order")
        assert [r.run_id for r in runs[:2]] == [second, first]
        assert all(r.command == "registry-order" for r in runs)
        assert runs[0].status == "running"

    def test_unknown_run_ids_are_ignored(self):
        run_registry.finish_run(None, "ok")
        run_registry.record_metrics(None, "x", {"a": 1.0})
        run_registry.finish_run(10**9, "ok")
