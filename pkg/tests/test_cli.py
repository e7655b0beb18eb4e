import json
import shutil
import subprocess

import numpy as np
import pytest

from maskpipe import random_archive, serialize_manifest, write_archive, write_ppm
from maskpipe.cli import main
from maskpipe.dataset import ManifestEntry

from support import forced_archive


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """A directory holding model archives, frames, and manifests."""
    root = tmp_path_factory.mktemp("cli")
    write_archive(root / "nomask.fmw", forced_archive([0.0, 5.0]))
    write_archive(root / "mask.fmw", forced_archive([5.0, 0.0]))
    write_archive(root / "three.fmw",
                  random_archive(num_classes=3, seed=2,
                                 class_names=("a", "b", "c")))
    (root / "junk.fmw").write_bytes(b"FMW1 this is not an archive")

    frames = root / "frames"
    frames.mkdir()
    rng = np.random.default_rng(7)
    entries = []
    for i in range(3):
        img = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
        write_ppm(frames / f"{i}.ppm", img)
        write_ppm(root / f"eval{i}.ppm", img)
        entries.append(ManifestEntry(f"eval{i}.ppm", "with_mask", "test"))
    (root / "manifest.csv").write_text(serialize_manifest(entries),
                                       encoding="utf-8")
    (root / "faces.jsonl").write_text(
        '{"frame": 0, "box": [0, 0, 16, 16]}\n'
        '{"frame": 2, "box": [4, 4, 8, 8]}\n', encoding="utf-8")
    return root


def test_detect_writes_events_and_summary(work, tmp_path, capsys):
    out = tmp_path / "events.jsonl"
    code = main(["detect", "--model", str(work / "nomask.fmw"),
                 "--source", str(work / "frames"), "--out", str(out)])
    assert code == 0
    events = [json.loads(line) for line in out.read_text().splitlines()]
    assert [e["frame"] for e in events] == [0, 1, 2]
    assert events[2]["label"] == "NoMask"
    err = capsys.readouterr().err
    assert "frames 3" in err and "alerts 0" in err


def test_detect_defaults_to_stdout(work, capsys):
    code = main(["detect", "--model", str(work / "nomask.fmw"),
                 "--source", str(work / "frames"), "--threads", "2"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all("label" in json.loads(line) for line in lines)


def test_detect_accepts_a_sidecar(work, capsys):
    code = main(["detect", "--model", str(work / "nomask.fmw"),
                 "--source", str(work / "frames"),
                 "--sidecar", str(work / "faces.jsonl")])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(l)["frame"] for l in lines] == [0, 2]


def test_eval_prints_report_and_writes_json(work, tmp_path, capsys):
    report_file = tmp_path / "report.json"
    code = main(["eval", "--model", str(work / "mask.fmw"),
                 "--manifest", str(work / "manifest.csv"),
                 "--report", str(report_file)])
    assert code == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "with_mask" in out
    report = json.loads(report_file.read_text())
    assert report["accuracy"] == 1.0
    assert report["classes"]["with_mask"]["support"] == 3
    assert report_file.read_text().endswith("\n")


def test_eval_notes_undecodable_entries(work, tmp_path, capsys):
    manifest = tmp_path / "partial.csv"
    rows = ["path,label,split"]
    rows += [f"eval{i}.ppm,with_mask,test" for i in range(3)]
    rows.append("gone.ppm,with_mask,test")
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    for i in range(3):
        shutil.copy(work / f"eval{i}.ppm", tmp_path / f"eval{i}.ppm")
    code = main(["eval", "--model", str(work / "mask.fmw"),
                 "--manifest", str(manifest)])
    assert code == 0
    assert "1 entries could not be decoded" in capsys.readouterr().err


def test_bench_prints_stage_table(work, capsys):
    code = main(["bench", "--model", str(work / "nomask.fmw"),
                 "--frames", "2"])
    assert code == 0
    out = capsys.readouterr().out
    for stage in ("preprocess", "forward", "debounce"):
        assert stage in out
    assert "fps" in out


@pytest.mark.parametrize("argv", [
    [],
    ["transmogrify"],
    ["detect", "--model", "x.fmw"],               # missing --source
    ["detect", "--source", "frames"],             # missing --model
    ["eval", "--model", "x.fmw"],                 # missing --manifest
    ["bench", "--model", "x.fmw"],                # missing --frames
    ["bench", "--model", "x.fmw", "--frames", "two"],
])
def test_usage_problems_exit_1(argv, capsys):
    assert main(argv) == 1
    capsys.readouterr()


def test_out_of_range_numbers_exit_1(work, capsys):
    assert main(["detect", "--model", str(work / "nomask.fmw"),
                 "--source", str(work / "frames"), "--threads", "0"]) == 1
    assert main(["bench", "--model", str(work / "nomask.fmw"),
                 "--frames", "0"]) == 1
    capsys.readouterr()


def test_unreadable_inputs_exit_2(work, tmp_path, capsys):
    model = str(work / "nomask.fmw")
    assert main(["detect", "--model", model,
                 "--source", str(tmp_path / "nowhere")]) == 2
    not_a_stream = tmp_path / "clip.frs1"
    not_a_stream.write_bytes(b"JUNKJUNKJUNKJUNK")
    assert main(["detect", "--model", model,
                 "--source", str(not_a_stream)]) == 2
    bad_sidecar = tmp_path / "faces.jsonl"
    bad_sidecar.write_text("not json\n")
    assert main(["detect", "--model", model,
                 "--source", str(work / "frames"),
                 "--sidecar", str(bad_sidecar)]) == 2
    bad_manifest = tmp_path / "bad.csv"
    bad_manifest.write_text("path,label,split\nx.ppm,maybe_mask,test\n")
    assert main(["eval", "--model", model,
                 "--manifest", str(bad_manifest)]) == 2
    empty_manifest = tmp_path / "empty.csv"
    empty_manifest.write_text("path,label,split\na.ppm,with_mask,train\n")
    assert main(["eval", "--model", model,
                 "--manifest", str(empty_manifest)]) == 2
    capsys.readouterr()


def test_unusable_archives_exit_3(work, capsys):
    assert main(["detect", "--model", str(work / "absent.fmw"),
                 "--source", str(work / "frames")]) == 3
    assert main(["detect", "--model", str(work / "junk.fmw"),
                 "--source", str(work / "frames")]) == 3
    assert main(["detect", "--model", str(work / "three.fmw"),
                 "--source", str(work / "frames")]) == 3
    assert main(["bench", "--model", str(work / "junk.fmw"),
                 "--frames", "1"]) == 3
    capsys.readouterr()


def test_three_class_archives_still_evaluate(work, tmp_path, capsys):
    manifest = tmp_path / "abc.csv"
    manifest.write_text("path,label,split\nimg.ppm,a,test\n", encoding="utf-8")
    shutil.copy(work / "eval0.ppm", tmp_path / "img.ppm")
    code = main(["eval", "--model", str(work / "three.fmw"),
                 "--manifest", str(manifest)])
    assert code == 0
    out = capsys.readouterr().out
    assert "a" in out and "accuracy" in out


def test_installed_entry_point_responds():
    path = shutil.which("maskpipe")
    assert path, "console script should be on PATH after install"
    proc = subprocess.run([path, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "detect" in proc.stdout and "bench" in proc.stdout
