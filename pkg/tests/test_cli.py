import json
import math
import subprocess
import sys

import numpy as np
import pytest

from segenc.cli import main
from segenc.bd import write_rd_file
from segenc.encoders import read_sweep_table

from refdata import RD_POINTS_LOW_DELAY


def run_cli(*args):
    return main([str(a) for a in args])


class TestSweep:
    def test_synthetic_sweep_writes_grid_records(self, tmp_path, capsys):
        out = tmp_path / "sweep.tsv"
        code = run_cli("sweep", "--codec", "synthetic", "--frames", 150,
                       "--fps", 50, "--out", out)
        assert code == 0
        rows = read_sweep_table(out)
        assert len(rows) == 20  # 1 GOP x 10 QPs x 2 filter settings
        assert {r["pareto"] for r in rows} <= {"0", "1"}
        assert any(r["pareto"] == "1" for r in rows)

    def test_rerun_is_idempotent(self, tmp_path):
        out = tmp_path / "sweep.tsv"
        run_cli("sweep", "--codec", "synthetic", "--frames", 150, "--fps", 50, "--out", out)
        first = out.read_text()
        code = run_cli("sweep", "--codec", "synthetic", "--frames", 150,
                       "--fps", 50, "--out", out)
        assert code == 0
        assert out.read_text() == first

    def test_multi_segment_sweep(self, tmp_path):
        out = tmp_path / "sweep.tsv"
        run_cli("sweep", "--codec", "synthetic", "--frames", 500, "--fps", 50, "--out", out)
        rows = read_sweep_table(out)
        assert {r["segment_id"] for r in rows} == {0, 1, 2, 3}
        assert len(rows) == 80


class TestOptimize:
    def test_max_quality_summary_gain_non_negative(self, tmp_path, capsys):
        decisions = tmp_path / "decisions.jsonl"
        code = run_cli(
            "optimize", "--codec", "synthetic", "--frames", 500, "--fps", 50,
            "--mode", "max_quality", "--max-bitrate-kbps", 11205.77,
            "--min-fps", 25, "--decisions", decisions,
        )
        assert code == 0
        text = capsys.readouterr().out
        assert "Overall Bitrate Gain" in text
        gain_line = [l for l in text.splitlines() if l.strip().endswith(("dB | -",)) or "%" in l]
        records = [json.loads(l) for l in decisions.read_text().splitlines()[1:]]
        assert all(r["qp"] == 28 for r in records)
        gain = float(text.split("Overall Bitrate Gain | Overall PSNR | Overall VMAF")[1]
                     .strip().split("%")[0])
        assert gain >= 0.0

    def test_jnd_offset_reduces_vmaf_bound(self, capsys):
        code = run_cli(
            "optimize", "--codec", "synthetic", "--frames", 300, "--fps", 50,
            "--mode", "min_bitrate", "--reference-vmaf", 96.0, "--jnd-offset", 6,
            "--min-fps", 25,
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "average bitrate" in out

    def test_missing_required_bound_is_usage_error(self, capsys):
        code = run_cli("optimize", "--codec", "synthetic", "--frames", 300,
                       "--fps", 50, "--mode", "max_quality")
        assert code == 1
        assert "usage error" in capsys.readouterr().err

    def test_ssim_schedule_on_synthetic_is_data_error(self, tmp_path, capsys):
        schedule = {
            "version": 1,
            "regions": [{"start_frame": 0, "end_frame": 300, "constraints": {
                "mode": "min_bitrate", "min_quality": 0.9,
                "quality_metric": "ssim", "max_time_s": 10.0}}],
        }
        path = tmp_path / "schedule.json"
        path.write_text(json.dumps(schedule))
        code = run_cli(
            "optimize", "--codec", "synthetic", "--frames", 300, "--fps", 50,
            "--mode", "min_bitrate", "--min-quality-db", 38.0, "--min-fps", 25,
            "--constraint-schedule", path,
        )
        assert code == 2
        assert "ssim" in capsys.readouterr().err

    def test_psnr_schedule_switches_bounds(self, tmp_path, capsys):
        from segenc import default_law

        law = default_law()
        schedule = {
            "version": 1,
            "regions": [
                {"start_frame": 0, "end_frame": 300, "constraints": {
                    "mode": "min_bitrate", "min_fps": 25.0,
                    "min_quality": law.value("B6", "psnr", 29), "quality_metric": "psnr"}},
                {"start_frame": 300, "end_frame": 500, "constraints": {
                    "mode": "min_bitrate", "min_fps": 25.0,
                    "min_quality": law.value("B6", "psnr", 32), "quality_metric": "psnr"}},
            ],
        }
        path = tmp_path / "schedule.json"
        path.write_text(json.dumps(schedule))
        decisions = tmp_path / "decisions.jsonl"
        code = run_cli(
            "optimize", "--codec", "synthetic", "--frames", 500, "--fps", 50,
            "--mode", "min_bitrate", "--min-quality-db", 38.0, "--min-fps", 25,
            "--constraint-schedule", path, "--decisions", decisions,
        )
        assert code == 0
        records = [json.loads(l) for l in decisions.read_text().splitlines()[1:]]
        # segments start at frames 0/150/300/450: the last two fall in the
        # relaxed region and may drop to the higher QP
        assert records[1]["qp"] == 29
        assert records[2]["qp"] == 32
        assert records[3]["qp"] == 32


def write_mv_pu_files(tmp_path, rng):
    from segenc.activity import synthetic_field

    mv_lines = []
    pu_lines = []
    track = synthetic_field("tracking", rng)
    zoom = synthetic_field("zoom", rng)
    for frame in range(150):
        if frame < 50:
            field, pu = track[:32], 900.0
        elif frame < 100:
            field, pu = np.zeros((32, 2)), 300.0
        else:
            field, pu = zoom[:64], 1200.0
        for i, (dx, dy) in enumerate(field):
            mv_lines.append(f"{frame} {i % 8} {i // 8} {dx:.4f} {dy:.4f}")
        pu_lines.append(f"{frame} {pu}")
    mv_path = tmp_path / "field.mv"
    pu_path = tmp_path / "pu.txt"
    mv_path.write_text("\n".join(mv_lines) + "\n")
    pu_path.write_text("\n".join(pu_lines) + "\n")
    return mv_path, pu_path


class TestClassify:
    def test_shields_style_schedule(self, tmp_path, rng, capsys):
        mv_path, pu_path = write_mv_pu_files(tmp_path, rng)
        policy_path = tmp_path / "policy.json"
        policy_path.write_text(json.dumps({
            "tracking": {"mode": "min_bitrate", "min_quality": 0.88,
                         "quality_metric": "ssim", "max_time_s": 10.0},
            "stationary": {"mode": "min_bitrate", "min_quality": 0.94,
                           "quality_metric": "ssim", "max_time_s": 10.0},
            "zoom": {"mode": "min_bitrate", "min_quality": 0.94,
                     "quality_metric": "ssim", "max_time_s": 10.0},
        }))
        out = tmp_path / "schedule.json"
        code = run_cli("classify", "--mv-file", mv_path, "--pu-file", pu_path,
                       "--policy", policy_path, "--out", out)
        assert code == 0
        schedule = json.loads(out.read_text())
        regions = schedule["regions"]
        assert [r["label"] for r in regions] == ["tracking", "stationary", "zoom"]
        assert [r["constraints"]["min_quality"] for r in regions] == [0.88, 0.94, 0.94]
        assert [(r["start_frame"], r["end_frame"]) for r in regions] == [
            (0, 50), (50, 100), (100, 150)
        ]

    def test_empty_mv_file_is_data_error(self, tmp_path, capsys):
        mv_path = tmp_path / "field.mv"
        mv_path.write_text("# empty\n")
        pu_path = tmp_path / "pu.txt"
        pu_path.write_text("0 100\n1 100\n")
        policy_path = tmp_path / "policy.json"
        policy_path.write_text("{}")
        code = run_cli("classify", "--mv-file", mv_path, "--pu-file", pu_path,
                       "--policy", policy_path)
        assert code == 2


class TestBdrate:
    def rd_rows(self, codec, scale=1.0):
        return [
            {"codec": codec, "qp": qp, "bitrate_kbps": r * scale, "psnr611": q, "vmaf": v}
            for qp, (r, q, v) in zip((22, 27, 32, 37, 42), RD_POINTS_LOW_DELAY)
        ]

    def test_identical_codecs_read_zero(self, tmp_path, capsys):
        a = tmp_path / "a.rd"
        b = tmp_path / "b.rd"
        write_rd_file(a, self.rd_rows("one"))
        write_rd_file(b, self.rd_rows("two"))
        assert run_cli("bdrate", a, b) == 0
        out = capsys.readouterr().out
        assert "0.00%" in out

    def test_halved_bitrates_read_50_percent(self, tmp_path, capsys):
        a = tmp_path / "a.rd"
        b = tmp_path / "b.rd"
        write_rd_file(a, self.rd_rows("orig"))
        write_rd_file(b, self.rd_rows("half", scale=0.5))
        assert run_cli("bdrate", b, a) == 0
        out = capsys.readouterr().out
        assert "50.00%" in out

    def test_four_codec_matrix_layout(self, tmp_path, capsys):
        files = []
        for i, codec in enumerate(("vvc", "av1", "hevc", "vp9")):
            path = tmp_path / f"{codec}.rd"
            write_rd_file(path, self.rd_rows(codec, scale=1.0 + 0.3 * i))
            files.append(path)
        assert run_cli("bdrate", *files, "--axis", "vmaf") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "Bitrate savings Relative to"
        assert len(lines) == 6

    def test_single_codec_is_data_error(self, tmp_path, capsys):
        a = tmp_path / "a.rd"
        write_rd_file(a, self.rd_rows("only"))
        assert run_cli("bdrate", a) == 2


class TestMetrics:
    def test_psnr_ssim_report(self, tmp_path, rng, capsys):
        data = rng.integers(0, 256, size=(4, 96), dtype=np.uint8)
        ref = tmp_path / "ref.yuv"
        data.tofile(ref)
        noisy = data.copy()
        noisy[:, :64] = np.clip(noisy[:, :64].astype(int) + 4, 0, 255).astype(np.uint8)
        dist = tmp_path / "dist.yuv"
        noisy.tofile(dist)
        code = run_cli("metrics", "--ref", ref, "--dist", dist,
                       "--width", 8, "--height", 8, "--fps", 25, "--json")
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["psnr_u"] == 100.0
        assert 30.0 < report["psnr_y"] < 100.0
        expected = (6 * report["psnr_y"] + report["psnr_u"] + report["psnr_v"]) / 8
        assert report["psnr611"] == pytest.approx(expected)

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = run_cli("metrics", "--ref", tmp_path / "none.yuv",
                       "--dist", tmp_path / "none.yuv", "--width", 8, "--height", 8)
        assert code == 2


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "segenc.cli", "sweep", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "--segment-seconds" in proc.stdout

    def test_unknown_mode_is_usage_error(self, capsys):
        code = run_cli("optimize", "--codec", "synthetic", "--frames", 150,
                       "--fps", 50, "--mode", "fastest")
        assert code == 1
