import subprocess
import sys

import numpy as np
import pytest

from deform3d.cli import main
from deform3d.imgproc import read_png, write_png
from deform3d.mesh import save_mtl, save_obj
from helpers import split_ellipse_image, two_label_sphere


@pytest.fixture
def workdir(tmp_path):
    m = two_label_sphere(2)
    (tmp_path / "sphere.obj").write_text(save_obj(m, mtllib="sphere.mtl"))
    (tmp_path / "sphere.mtl").write_text(save_mtl(m))
    write_png(tmp_path / "target.png", split_ellipse_image(48, (20, 13)))
    (tmp_path / "run.cfg").write_text(
        "# fixture\nmesh = sphere.obj\nimage = target.png\noutput_dir = out\n"
        "iterations = 25\ncamera_half_width = 1.4\ncheckpoint_every = 10\n")
    return tmp_path


def rows(path):
    return path.read_text().splitlines()


def test_deform_writes_outputs(workdir, capsys):
    assert main(["deform", "--config", str(workdir / "run.cfg")]) == 0
    out = workdir / "out"
    for name in ("deformed.obj", "deformed.mtl", "loss.csv", "run_config.txt",
                 "checkpoints/iter_000010.obj", "checkpoints/iter_000020_left.png"):
        assert (out / name).is_file(), name
    lines = rows(out / "loss.csv")
    assert lines[0] == "iteration,total,biou,gs,as,rig,lap" and len(lines) == 26
    printed = dict(kv.split("=") for kv in capsys.readouterr().out.split())
    assert float(printed["final_loss"]) < float(printed["initial_loss"])


def test_deform_single_iteration_override(workdir):
    assert main(["deform", "--config", str(workdir / "run.cfg"), "--set", "iterations=1"]) == 0
    assert len(rows(workdir / "out" / "loss.csv")) == 2


def test_deform_is_byte_reproducible(workdir):
    cfg = str(workdir / "run.cfg")
    main(["deform", "--config", cfg, "--set", "output_dir=a", "--set", "iterations=5"])
    main(["deform", "--config", cfg, "--set", "output_dir=b", "--set", "iterations=5"])
    for name in ("deformed.obj", "loss.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()


def test_missing_mtl_names_file(workdir, capsys):
    (workdir / "sphere.mtl").unlink()
    assert main(["deform", "--config", str(workdir / "run.cfg")]) == 2
    assert "sphere.mtl" in capsys.readouterr().err


@pytest.mark.parametrize("override", ["bogus=1", "iterations=0", "image=nothere.png"])
def test_config_errors_exit_2(workdir, override):
    assert main(["deform", "--config", str(workdir / "run.cfg"), "--set", override]) == 2


def test_unmatched_labels_exit_3(workdir, capsys):
    img = split_ellipse_image(48, (20, 13))
    img[img[..., 2] == 255] = 0
    write_png(workdir / "target.png", img)
    assert main(["deform", "--config", str(workdir / "run.cfg")]) == 3
    assert "right" in capsys.readouterr().err


def test_numerical_abort_exit_4(workdir, capsys):
    code = main(["deform", "--config", str(workdir / "run.cfg"), "--set", "lr=1e308",
                 "--set", "grad_clip=1e300"])
    assert code == 4
    assert "non-finite" in capsys.readouterr().err


def test_render_soft_disk(workdir):
    out = workdir / "soft.png"
    assert main(["render", "--mesh", str(workdir / "sphere.obj"), "--out", str(out),
                 "--mode", "soft", "--width", "64", "--height", "64"]) == 0
    img = read_png(out)
    assert img.shape == (64, 64) and img[32, 32] >= 0.99 * 255 and img[0, 0] == 0


def test_render_out_of_frame_is_black(workdir):
    out = workdir / "empty.png"
    assert main(["render", "--mesh", str(workdir / "sphere.obj"), "--out", str(out),
                 "--width", "32", "--height", "32", "--set", "camera_eye=50, 0, 10",
                 "--set", "camera_look_at=50, 0, 0"]) == 0
    assert not read_png(out).any()


def test_render_depth_and_binary(workdir):
    d, b = workdir / "d.png", workdir / "b.png"
    mesh = str(workdir / "sphere.obj")
    assert main(["render", "--mesh", mesh, "--out", str(d), "--mode", "depth"]) == 0
    assert main(["render", "--mesh", mesh, "--out", str(b), "--mode", "binary"]) == 0
    depth, binary = read_png(d), read_png(b)
    assert depth.shape == (512, 512) and depth[0, 0] == 255 and depth[256, 256] < 255
    assert set(np.unique(binary).tolist()) == {0, 255}


def test_render_bad_mesh_exit_2(tmp_path):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nf 1 2 3\n")
    assert main(["render", "--mesh", str(tmp_path / "bad.obj"), "--out",
                 str(tmp_path / "x.png")]) == 2


def test_metrics_examples(tmp_path, capsys):
    rng = np.random.default_rng(0)
    white, black = np.full((32, 32), 255, np.uint8), np.zeros((32, 32), np.uint8)
    tex = rng.integers(0, 256, (32, 32)).astype(np.uint8)
    blur = ((tex.astype(float) + np.roll(tex, 1, 0) + np.roll(tex, 1, 1)) / 3).astype(np.uint8)
    for name, img in (("w", white), ("k", black), ("t", tex), ("b", blur)):
        write_png(tmp_path / f"{name}.png", img)
    p = lambda n: str(tmp_path / f"{n}.png")  # noqa: E731
    assert main(["metrics", "--a", p("t"), "--b", p("t")]) == 0
    assert capsys.readouterr().out.strip() == "mse=0.000000 ssim=1.000000"
    main(["metrics", "--a", p("w"), "--b", p("k")])
    assert capsys.readouterr().out.startswith("mse=255.000000 ")
    main(["metrics", "--a", p("t"), "--b", p("b")])
    ssim = float(capsys.readouterr().out.split("ssim=")[1])
    assert 0 < ssim < 1


def test_metrics_shape_mismatch(tmp_path):
    write_png(tmp_path / "a.png", np.zeros((16, 16), np.uint8))
    write_png(tmp_path / "b.png", np.zeros((16, 20), np.uint8))
    assert main(["metrics", "--a", str(tmp_path / "a.png"), "--b", str(tmp_path / "b.png")]) == 2


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seed", "3"]) == 0
    assert "total_perspective" in capsys.readouterr().out
    assert main(["gradcheck", "--tol", "0"]) != 0


def test_validate_command(workdir, tmp_path):
    assert main(["validate", "--mesh", str(workdir / "sphere.obj")]) == 0
    (tmp_path / "flat.obj").write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    assert main(["validate", "--mesh", str(tmp_path / "flat.obj")]) == 1


def test_threads_env_and_entry_point(workdir):
    env = {"DEFORM3D_THREADS": "1", "PATH": "/usr/bin:/bin"}
    r = subprocess.run([sys.executable, "-m", "deform3d", "validate", "--mesh",
                        str(workdir / "sphere.obj")], capture_output=True, text=True, env=env)
    assert r.returncode == 0 and "vertices=162" in r.stdout
    env["DEFORM3D_THREADS"] = "zero"
    r = subprocess.run([sys.executable, "-m", "deform3d", "validate", "--mesh",
                        str(workdir / "sphere.obj")], capture_output=True, text=True, env=env)
    assert r.returncode == 2
