import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from satvox.cli import main
from satvox.formats import read_map
from satvox.runconfig import load_run_config
from satvox import DomainError, FormatError

SCENES = Path(__file__).parent.parent / "src" / "satvox" / "scenes"


def run_cli(*args):
    """Invoke the CLI in-process; returns (exit_code)."""
    return main([str(a) for a in args])


def _write_run_config(tmp_path, scene="plane-box", steps=5, **overrides):
    cfg = {
        "seed": 7,
        "world": {"extent_e": 51.2, "extent_n": 51.2, "max_height": 8.0},
        "satellite": {"height": 64, "width": 64},
        "panorama": {"height": 8, "width": 32, "camera_height": 2.0},
        "volume": {"nx": 16, "ny": 16, "nz": 5},
        "fit": {"steps": steps, "samples_per_ray": 16, "rays_per_step": 256},
        "scene": str(SCENES / f"{scene}.json"),
        "train_views": [{"e": -4.0, "n": -4.0}, {"e": 0.0, "n": -6.0, "heading": 1.0}],
        "heldout_views": [{"e": 2.0, "n": -2.0, "heading": 2.0}],
        "targets": ["depth", "color"],
    }
    cfg.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestRunConfig:
    def test_loads_with_defaults(self, tmp_path):
        cfg = load_run_config(_write_run_config(tmp_path))
        assert cfg.fit.steps == 5
        assert cfg.resolution == (16, 16, 5)
        assert cfg.sat_cam.scale == (0.8, 0.8)  # derived from footprint / image size
        assert len(cfg.train_views) == 2 and len(cfg.heldout_views) == 1
        assert cfg.train_views[0].position == (-4.0, -4.0, 2.0)

    def test_unknown_key_is_a_format_error(self, tmp_path):
        path = _write_run_config(tmp_path)
        data = json.loads(path.read_text())
        data["fit"]["bogus_knob"] = 1
        path.write_text(json.dumps(data))
        with pytest.raises(FormatError, match="bogus_knob"):
            load_run_config(path)

    def test_missing_scene_file_is_a_domain_error(self, tmp_path):
        path = _write_run_config(tmp_path, scene="no-such-scene")
        with pytest.raises(DomainError, match="scene file"):
            load_run_config(path)

    def test_invalid_json_is_a_format_error(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{")
        with pytest.raises(FormatError, match="JSON"):
            load_run_config(path)


class TestSynthCommand:
    def test_outputs_exist_and_sky_mask_structure(self, tmp_path):
        out = tmp_path / "out"
        code = run_cli("synth", "--scene", SCENES / "empty.json", "--out", out,
                       "--volume-size", "32,32,9", "--pano-size", "16,64", "--samples", "32")
        assert code == 0
        for name in ("satellite.png", "volume.s2dv", "depth.s2dm", "opacity.s2dm",
                     "color.s2dm", "color_hit.s2dm", "sky_mask.s2dm", "panorama.png",
                     "sky_histogram.s2dh"):
            assert (out / name).exists(), name
        mask = read_map(out / "sky_mask.s2dm")
        # empty scene from the center: every above-horizon row is sky
        assert np.all(mask[:8] == 1.0)
        # steep down rows see ground well inside the footprint
        assert np.all(mask[12:] == 0.0)

    def test_missing_scene_exits_1(self, tmp_path):
        assert run_cli("synth", "--scene", tmp_path / "nope.json", "--out", tmp_path) == 1


class TestFitCommand:
    def test_fit_is_reproducible_byte_for_byte(self, tmp_path):
        cfg = _write_run_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("fit", "--config", cfg, "--out", out1) == 0
        assert run_cli("fit", "--config", cfg, "--out", out2) == 0
        v1 = (out1 / "volume.s2dv").read_bytes()
        v2 = (out2 / "volume.s2dv").read_bytes()
        assert v1 == v2
        assert (out1 / "loss_trace.csv").read_text() == (out2 / "loss_trace.csv").read_text()
        assert (out1 / "report.json").exists()
        trace = (out1 / "loss_trace.csv").read_text().splitlines()
        assert trace[0].startswith("step,total,snop")
        assert len(trace) == 1 + 5

    def test_seed_override_changes_result(self, tmp_path):
        cfg = _write_run_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        # subsampling kicks in (rays_per_step < total), so the seed matters
        assert run_cli("fit", "--config", cfg, "--out", out1, "--seed", "1") == 0
        assert run_cli("fit", "--config", cfg, "--out", out2, "--seed", "2") == 0
        assert (out1 / "volume.s2dv").read_bytes() != (out2 / "volume.s2dv").read_bytes()

    def test_bad_config_exits_2(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"scene": "x.json", "train_views": [{}], "oops": 1}))
        assert run_cli("fit", "--config", path, "--out", tmp_path / "o") == 2


class TestRenderAndTrajectory:
    @pytest.fixture()
    def assets(self, tmp_path):
        out = tmp_path / "synth"
        assert run_cli("synth", "--scene", SCENES / "plane-box.json", "--out", out,
                       "--volume-size", "32,32,9", "--pano-size", "8,32",
                       "--samples", "16") == 0
        return out

    def test_render_writes_buffers(self, assets, tmp_path):
        out = tmp_path / "render"
        code = run_cli("render", "--volume", assets / "volume.s2dv",
                       "--sat", assets / "satellite.png",
                       "--pose", "0,0,2,0", "--out", out, "--size", "8,32", "--samples", "16")
        assert code == 0
        assert read_map(out / "depth.s2dm").shape == (8, 32)
        assert read_map(out / "color.s2dm").shape == (8, 32, 3)

    def test_single_pose_trajectory_matches_render(self, assets, tmp_path):
        render_out = tmp_path / "render"
        traj_out = tmp_path / "traj"
        run_cli("render", "--volume", assets / "volume.s2dv", "--sat", assets / "satellite.png",
                "--pose", "1.5,-2,2,0.5", "--out", render_out, "--size", "8,32",
                "--samples", "16")
        csv_path = tmp_path / "path.csv"
        csv_path.write_text("frame,e,n,u,heading_rad\n0,1.5,-2,2,0.5\n")
        code = run_cli("trajectory", "--volume", assets / "volume.s2dv",
                       "--sat", assets / "satellite.png", "--path", csv_path,
                       "--out", traj_out, "--size", "8,32", "--samples", "16")
        assert code == 0
        a = read_map(render_out / "depth.s2dm")
        b = read_map(traj_out / "depth_0000.s2dm")
        assert np.array_equal(a, b)
        assert (traj_out / "frame_0000.png").exists()

    def test_threads_flag_does_not_change_output(self, assets, tmp_path):
        outs = []
        for threads in (1, 8):
            out = tmp_path / f"t{threads}"
            run_cli("render", "--volume", assets / "volume.s2dv",
                    "--sat", assets / "satellite.png", "--pose", "0,0,2,0",
                    "--out", out, "--size", "8,32", "--samples", "16",
                    "--threads", threads)
            outs.append((out / "depth.s2dm").read_bytes())
        assert outs[0] == outs[1]

    def test_bad_pose_csv_exits_2(self, assets, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        assert run_cli("trajectory", "--volume", assets / "volume.s2dv",
                       "--sat", assets / "satellite.png", "--path", bad,
                       "--out", tmp_path / "o") == 2

    def test_eval_reports_matching_files(self, assets, tmp_path):
        render_out = tmp_path / "render"
        run_cli("render", "--volume", assets / "volume.s2dv", "--sat", assets / "satellite.png",
                "--pose", "0,0,2,0", "--out", render_out, "--size", "8,32", "--samples", "16")
        report = tmp_path / "report.json"
        code = run_cli("eval", "--pred", render_out, "--truth", render_out,
                       "--report", report)
        assert code == 0
        data = json.loads(report.read_text())
        assert set(data["files"]) == {"depth.s2dm", "opacity.s2dm", "color.s2dm"}
        assert data["files"]["depth.s2dm"]["rmse"] == 0.0
        assert data["files"]["depth.s2dm"]["psnr"] == 99.0


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        # the console entry point mirrors `python -m satvox.cli`
        proc = subprocess.run([sys.executable, "-m", "satvox.cli", "synth", "--scene",
                               str(SCENES / "empty.json"), "--out", str(tmp_path / "o"),
                               "--volume-size", "8,8,3", "--pano-size", "4,16",
                               "--samples", "4"], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
