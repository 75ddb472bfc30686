import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from matchforge.correspondence import CorrespondenceParseError, format_interchange
from matchforge.errors import EmptyImage, MatcherProcessError, MatcherTimeout
from matchforge.matchers import (
    FrameSource,
    MatcherKind,
    MatcherSpec,
    match_builtin,
    match_external,
    match_synthetic,
    run_matcher,
)
from matchforge.pgm import read_pgm, read_pgm_size, write_pgm
from matchforge.synthetic import (
    HomographyPairTruth,
    PlanarVideoTruth,
    make_texture,
    write_video_frames,
)


class TestPgm:
    def test_round_trip_bit_exact(self, tmp_path):
        img = make_texture(1, 97, 43)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)
        assert read_pgm_size(path) == (97, 43)
        # writing the read-back image reproduces identical bytes
        path2 = tmp_path / "img2.pgm"
        write_pgm(path2, read_pgm(path))
        assert path.read_bytes() == path2.read_bytes()

    def test_header_with_comment(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04")
        img = read_pgm(path)
        assert img.tolist() == [[1, 2], [3, 4]]

    @pytest.mark.parametrize(
        "data",
        [
            b"P6\n2 2\n255\n\x00\x00\x00\x00",  # wrong magic
            b"P5\n2 2\n65535\n" + b"\x00" * 8,  # 16-bit
            b"P5\n2 2\n255\n\x00\x00\x00",  # short raster
            b"P5\n2 2\n255\n\x00\x00\x00\x00\x00",  # long raster
        ],
    )
    def test_rejects_malformed(self, tmp_path, data):
        path = tmp_path / "bad.pgm"
        path.write_bytes(data)
        with pytest.raises(ValueError):
            read_pgm(path)


class TestBuiltinMatcher:
    def test_identity_pair_self_matches(self):
        img = make_texture(2, 160, 120)
        fa = FrameSource("v", 0, image=img)
        fb = FrameSource("v", 1, image=img)
        cs = match_builtin(fa, fb)
        assert len(cs) >= 50
        disp = np.linalg.norm(cs.points_a() - cs.points_b(), axis=1)
        assert disp.max() <= 0.5

    def test_known_shift_recovered(self):
        big = make_texture(4, 340, 240)
        frame_a = FrameSource("v", 0, image=big[:, :320].copy())
        frame_b = FrameSource("v", 1, image=big[:, 10:330].copy())
        cs = match_builtin(frame_a, frame_b)
        assert len(cs) >= 50
        disp = cs.points_b() - cs.points_a()
        med = np.median(disp, axis=0)
        # content moves left by 10 px when the window moves right
        assert med[0] == pytest.approx(-10.0, abs=0.5)
        assert med[1] == pytest.approx(0.0, abs=0.5)

    def test_flat_image_yields_empty(self):
        flat = np.full((100, 140), 60, np.uint8)
        cs = match_builtin(FrameSource("v", 0, image=flat), FrameSource("v", 1, image=flat))
        assert len(cs) == 0

    def test_empty_image_raises(self):
        with pytest.raises(EmptyImage):
            match_builtin(FrameSource("v", 0), FrameSource("v", 1))

    def test_deterministic(self):
        img_a = make_texture(5, 200, 150)
        img_b = make_texture(6, 200, 150)
        cs1 = match_builtin(FrameSource("v", 0, image=img_a), FrameSource("v", 1, image=img_b))
        cs2 = match_builtin(FrameSource("v", 0, image=img_a), FrameSource("v", 1, image=img_b))
        assert cs1.matches == cs2.matches

    def test_matches_in_bounds(self):
        img = make_texture(7, 180, 130)
        cs = match_builtin(FrameSource("v", 0, image=img), FrameSource("v", 1, image=img))
        pa = cs.points_a()
        assert (pa[:, 0] < 180).all() and (pa[:, 1] < 130).all() and (pa >= 0).all()


H_TRUTH = np.array([[1.0, 0.02, 5.0], [-0.01, 1.0, -3.0], [1e-5, 0.0, 1.0]])


def synthetic_frames():
    fa = FrameSource("v", 0, intrinsics=None, image=np.zeros((480, 640), np.uint8))
    fb = FrameSource("v", 1, intrinsics=None, image=np.zeros((480, 640), np.uint8))
    return fa, fb


class TestSyntheticMatcher:
    def test_exact_transfer_when_uncorrupted(self):
        fa, fb = synthetic_frames()
        truth = HomographyPairTruth(H_TRUTH, 640, 480, seed=1)
        cs = match_synthetic(fa, fb, truth, {"n": 300, "seed": 1})
        res = truth.constraint_residual(fa, fb, cs.points_a(), cs.points_b())
        assert len(cs) == 300
        assert res.max() < 1e-9

    def test_outlier_count_is_exact(self):
        fa, fb = synthetic_frames()
        truth = HomographyPairTruth(H_TRUTH, 640, 480, seed=2)
        cs = match_synthetic(fa, fb, truth, {"n": 200, "outlier_rate": 0.5, "seed": 2})
        res = truth.constraint_residual(fa, fb, cs.points_a(), cs.points_b())
        assert int((res > 10.0).sum()) == 100
        assert int((res < 1e-9).sum()) == 100

    def test_noise_std_matches_sigma(self):
        fa, fb = synthetic_frames()
        truth = HomographyPairTruth(H_TRUTH, 640, 480, seed=3)
        cs = match_synthetic(fa, fb, truth, {"n": 10000, "noise_sigma": 1.0, "seed": 3})
        res = truth.constraint_residual(fa, fb, cs.points_a(), cs.points_b())
        # residual is a 2-D displacement norm: E[r^2] = 2 sigma^2
        empirical = float(np.sqrt((res**2).mean() / 2.0))
        assert empirical == pytest.approx(1.0, rel=0.1)

    def test_uncorrupted_matches_within_three_sigma(self):
        fa, fb = synthetic_frames()
        truth = HomographyPairTruth(H_TRUTH, 640, 480, seed=4)
        sigma = 0.7
        cs = match_synthetic(fa, fb, truth, {"n": 500, "noise_sigma": sigma, "seed": 4})
        res = truth.constraint_residual(fa, fb, cs.points_a(), cs.points_b())
        assert res.max() <= 3 * sigma + 1e-6

    def test_deterministic_under_seed(self):
        fa, fb = synthetic_frames()
        truth = HomographyPairTruth(H_TRUTH, 640, 480, seed=5)
        params = {"n": 100, "noise_sigma": 0.5, "outlier_rate": 0.2, "seed": 9}
        cs1 = match_synthetic(fa, fb, truth, params)
        cs2 = match_synthetic(fa, fb, truth, params)
        assert cs1.matches == cs2.matches

    def test_planar_video_truth_chains(self):
        truth = PlanarVideoTruth.panning(160, 120, 60, dx=0.5, n_anchors=2000, seed=7)
        f0 = FrameSource("v", 0, image=np.zeros((120, 160), np.uint8))
        f20 = FrameSource("v", 20, image=np.zeros((120, 160), np.uint8))
        f40 = FrameSource("v", 40, image=np.zeros((120, 160), np.uint8))
        ab = match_synthetic(f0, f20, truth, {"n": 5000})
        bc = match_synthetic(f20, f40, truth, {"n": 5000})
        mid_ab = {m.pb for m in ab.matches}
        mid_bc = {m.pa for m in bc.matches}
        assert len(mid_ab & mid_bc) > 0.5 * min(len(mid_ab), len(mid_bc))


STUB_OK = """\
#!{python}
import sys
open(sys.argv[3], "w").write({content!r})
"""

STUB_FAIL = """\
#!{python}
import sys
sys.stderr.write("boom\\n")
sys.exit(1)
"""


def _write_script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


class TestExternalMatcher:
    def _frames(self, tmp_path):
        img = make_texture(8, 64, 48)
        pa = tmp_path / "a.pgm"
        pb = tmp_path / "b.pgm"
        write_pgm(pa, img)
        write_pgm(pb, img)
        return FrameSource("v", 0, path=pa), FrameSource("v", 1, path=pb)

    def test_round_trip_through_stub(self, tmp_path):
        content = "corrs v1 x:0 x:1 2\n1.0000\t2.0000\t3.0000\t4.0000\t0.900000\tstub\n5.0000\t6.0000\t7.0000\t8.0000\t0.800000\tstub\n"
        script = _write_script(
            tmp_path, "ok.py", STUB_OK.format(python=sys.executable, content=content)
        )
        spec = MatcherSpec(
            MatcherKind.EXTERNAL,
            "ext",
            {"command": f"{sys.executable} {script} {{image_a}} {{image_b}} {{out}}"},
        )
        fa, fb = self._frames(tmp_path)
        cs = match_external(fa, fb, spec)
        assert len(cs) == 2
        assert cs.matches[0].pa == (1.0, 2.0)
        # source tags are normalized to the configured matcher name
        assert {m.source for m in cs.matches} == {"ext"}

    def test_nonzero_exit_is_process_failure(self, tmp_path):
        script = _write_script(tmp_path, "fail.py", STUB_FAIL.format(python=sys.executable))
        spec = MatcherSpec(
            MatcherKind.EXTERNAL,
            "ext",
            {"command": f"{sys.executable} {script} {{image_a}} {{image_b}} {{out}}"},
        )
        fa, fb = self._frames(tmp_path)
        with pytest.raises(MatcherProcessError, match="boom"):
            match_external(fa, fb, spec)

    def test_malformed_count_names_line(self, tmp_path):
        content = "corrs v1 x:0 x:1 5\n1.0\t2.0\t3.0\t4.0\t0.9\tstub\n"
        script = _write_script(
            tmp_path, "bad.py", STUB_OK.format(python=sys.executable, content=content)
        )
        spec = MatcherSpec(
            MatcherKind.EXTERNAL,
            "ext",
            {"command": f"{sys.executable} {script} {{image_a}} {{image_b}} {{out}}"},
        )
        fa, fb = self._frames(tmp_path)
        with pytest.raises(CorrespondenceParseError) as exc:
            match_external(fa, fb, spec)
        assert exc.value.line == 3

    def test_timeout(self, tmp_path):
        script = _write_script(
            tmp_path,
            "slow.py",
            f"#!{sys.executable}\nimport time\ntime.sleep(30)\n",
        )
        spec = MatcherSpec(
            MatcherKind.EXTERNAL,
            "ext",
            {
                "command": f"{sys.executable} {script} {{image_a}} {{image_b}} {{out}}",
                "timeout": 0.5,
            },
        )
        fa, fb = self._frames(tmp_path)
        with pytest.raises(MatcherTimeout):
            match_external(fa, fb, spec)

    def test_missing_placeholder_rejected(self):
        with pytest.raises(ValueError):
            MatcherSpec(MatcherKind.EXTERNAL, "ext", {"command": "matcher {image_a}"})


class TestRunMatcherBounds:
    def test_out_of_bounds_dropped_with_count(self, tmp_path):
        content = (
            "corrs v1 x:0 x:1 2\n"
            "1.0000\t2.0000\t3.0000\t4.0000\t0.900000\tstub\n"
            "1.0000\t2.0000\t99.0000\t4.0000\t0.800000\tstub\n"  # x=99 >= width 64
        )
        script = _write_script(
            tmp_path, "oob.py", STUB_OK.format(python=sys.executable, content=content)
        )
        spec = MatcherSpec(
            MatcherKind.EXTERNAL,
            "ext",
            {"command": f"{sys.executable} {script} {{image_a}} {{image_b}} {{out}}"},
        )
        img = make_texture(9, 64, 48)
        pa = tmp_path / "a.pgm"
        pb = tmp_path / "b.pgm"
        write_pgm(pa, img)
        write_pgm(pb, img)
        cs, dropped = run_matcher(spec, FrameSource("v", 0, path=pa), FrameSource("v", 1, path=pb))
        assert dropped == 1 and len(cs) == 1


class TestVideoFrames:
    def test_write_video_frames(self, tmp_path):
        out = write_video_frames(tmp_path / "vid", 5, 32, 24)
        files = sorted(p.name for p in out.iterdir())
        assert files == [f"{i:08d}.pgm" for i in range(5)]
        assert read_pgm_size(out / "00000000.pgm") == (32, 24)
