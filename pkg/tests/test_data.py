import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monomm.data import (BehindCameraError, Frame, GroundTruthObject, KittiFormatError, SynthConfig, crop_top,
                         frame_from_scene, hflip, parse_kitti_label, project_box3d, project_points, read_calib_p2,
                         read_label_file, resize, sparsify_depth, synth_scene, wrap_angle, write_calib,
                         write_kitti_result)
from monomm.data.dataset import export_frames, load_frames
from monomm.data.synth import clip_box

CAR = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"
DONTCARE = "DontCare -1 -1 -10 500 150 520 170 -1 -1 -1 -1000 -1000 -1000 -10"

objects_strategy = st.builds(
    GroundTruthObject,
    cls=st.sampled_from(["Car", "Pedestrian", "Cyclist", "Van", "Misc"]),
    truncation=st.floats(0, 1),
    occlusion=st.integers(0, 3),
    alpha=st.floats(-3.14, 3.14),
    bbox2d=st.tuples(*[st.floats(0, 1200)] * 4),
    dims=st.tuples(*[st.floats(0.1, 10)] * 3),
    location=st.tuples(st.floats(-50, 50), st.floats(-5, 5), st.floats(0.5, 80)),
    rotation_y=st.floats(-3.14, 3.14),
    score=st.one_of(st.none(), st.floats(0, 1)),
)


def test_parse_car_line():
    obj = parse_kitti_label(CAR)
    assert obj.cls == "Car" and obj.location[2] == 46.70
    assert obj.height2d == pytest.approx(26.79)
    assert obj.score is None


def test_parse_dontcare_keeps_sentinels():
    obj = parse_kitti_label(DONTCARE)
    assert obj.cls == "DontCare" and obj.occlusion == -1 and obj.alpha == -10
    assert obj.location == (-1000, -1000, -1000) and obj.dims == (-1, -1, -1)


def test_parse_errors_name_count_and_line():
    with pytest.raises(KittiFormatError, match="got 14"):
        parse_kitti_label(" ".join(CAR.split()[:14]))
    with pytest.raises(KittiFormatError, match="line 3"):
        parse_kitti_label(CAR.replace("46.70", "abc"), lineno=3)


def test_unknown_class_preserved():
    assert parse_kitti_label(CAR.replace("Car", "Tram_42")).cls == "Tram_42"


@settings(max_examples=100, deadline=None)
@given(objects_strategy)
def test_label_round_trip(obj):
    back = parse_kitti_label(obj.to_line())
    assert back.cls == obj.cls and back.occlusion == obj.occlusion
    np.testing.assert_allclose(back.bbox2d, obj.bbox2d, atol=0.0051)
    np.testing.assert_allclose(back.dims + back.location, obj.dims + obj.location, atol=0.0051)
    assert abs(back.alpha - obj.alpha) <= 0.0051 and abs(back.rotation_y - obj.rotation_y) <= 0.0051
    assert (back.score is None) == (obj.score is None)
    if obj.score is not None:
        assert abs(back.score - obj.score) <= 5.1e-5


def test_result_file_round_trip(tmp_path):
    objs = [parse_kitti_label(CAR + " 0.9123"), parse_kitti_label(DONTCARE)]
    write_kitti_result(objs, tmp_path / "a.txt")
    lines = (tmp_path / "a.txt").read_text().splitlines()
    assert lines[0].split()[15] == "0.9123"
    back = read_label_file(tmp_path / "a.txt")
    assert back[0].score == 0.9123 and back[1].score is None
    write_kitti_result([], tmp_path / "empty.txt")
    assert (tmp_path / "empty.txt").read_text() == ""


def test_calib_round_trip_and_errors(tmp_path):
    P2 = SynthConfig().P2()
    write_calib(P2, tmp_path / "c.txt")
    np.testing.assert_array_equal(read_calib_p2(tmp_path / "c.txt"), P2)
    (tmp_path / "bad.txt").write_text("P0: 1 2 3\n")
    with pytest.raises(KittiFormatError):
        read_calib_p2(tmp_path / "bad.txt")
    (tmp_path / "neg.txt").write_text("P2: " + " ".join(["-1"] + ["0"] * 11) + "\n")
    with pytest.raises(KittiFormatError):
        read_calib_p2(tmp_path / "neg.txt")


def test_projection_examples():
    P2 = np.array([[700.0, 0, 600, 0], [0, 700, 180, 0], [0, 0, 1, 0]])
    np.testing.assert_allclose(project_points(P2, [[0, 0, 10]]), [[600, 180]])
    assert project_points(P2, [[1, 0, 10]])[0, 0] == pytest.approx(670)
    a = project_points(P2, [[2, -1, 5]])[0] - [600, 180]
    b = project_points(P2, [[2, -1, 10]])[0] - [600, 180]
    np.testing.assert_allclose(b, a / 2)
    obj = parse_kitti_label(CAR)
    obj.location = (0.0, 1.0, -2.0)
    with pytest.raises(BehindCameraError):
        project_box3d(obj, P2)


def test_synth_is_deterministic():
    a, b = synth_scene(7), synth_scene(7)
    assert a.image.tobytes() == b.image.tobytes()
    assert np.array_equal(a.depth, b.depth, equal_nan=True)
    assert [o.to_line() for o in a.objects] == [o.to_line() for o in b.objects]


def test_synth_without_objects():
    scene = synth_scene(3, SynthConfig(min_objects=0, max_objects=0))
    cfg = SynthConfig()
    assert scene.objects == []
    rows = np.arange(cfg.height)
    v0 = cfg.height * cfg.horizon
    below = rows > v0 + 1
    expected = cfg.camera_height * cfg.focal / (rows[below] + 0.5 - v0)
    np.testing.assert_allclose(scene.depth[below, 5], expected, rtol=1e-9)
    assert np.all(np.isnan(scene.depth[rows < v0 - 1]))


@pytest.mark.parametrize("seed", range(12))
def test_synth_labels_are_self_consistent(seed):
    cfg = SynthConfig(allow_truncation=seed % 2 == 1)
    scene = synth_scene(seed, cfg)
    assert scene.objects
    for obj in scene.objects:
        center, corners = project_box3d(obj, scene.P2)
        hull = (corners[:, 0].min(), corners[:, 1].min(), corners[:, 0].max(), corners[:, 1].max())
        assert obj.bbox2d == pytest.approx(clip_box(hull, cfg.width, cfg.height))
        x, _, z = obj.location
        assert abs(float(wrap_angle(obj.alpha - (obj.rotation_y - np.arctan2(x, z))))) < 1e-6
        # centre pixel depth lies inside the box's depth span
        u, v = int(center[0]), int(center[1])
        if 0 <= u < cfg.width and 0 <= v < cfg.height:
            h, w, l = obj.dims
            assert abs(scene.depth[v, u] - z) <= 0.5 * np.hypot(w, l) + 1e-9
        assert 0.0 <= obj.truncation <= 1.0


def test_sparsify_depth():
    depth = np.full((40, 50), 5.0)
    half = sparsify_depth(depth, 0.5, 0)
    assert 0.4 < np.isfinite(half).mean() < 0.6
    np.testing.assert_array_equal(sparsify_depth(depth, 1.0, 0), depth)


def scene_frame(seed=1):
    return frame_from_scene(synth_scene(seed))


def projected_hulls(frame):
    out = []
    for o in frame.objects:
        _, c = project_box3d(o, frame.P2)
        out.append((c[:, 0].min(), c[:, 1].min(), c[:, 0].max(), c[:, 1].max()))
    return np.array(out)


@pytest.mark.parametrize("transform", [
    lambda f: crop_top(f, 16),
    lambda f: resize(f, 48, 160),
    lambda f: resize(crop_top(f, 8), 64, 256),
    hflip,
])
def test_transforms_keep_labels_consistent_with_calibration(transform):
    frame = scene_frame(2)
    out = transform(frame)
    np.testing.assert_allclose(np.array([o.bbox2d for o in out.objects]), projected_hulls(out), atol=1e-6)
    assert out.depth.shape == out.image.shape[1:]


def test_hflip_is_an_involution():
    frame = scene_frame(4)
    back = hflip(hflip(frame))
    np.testing.assert_array_equal(back.image, frame.image)
    np.testing.assert_allclose(back.P2, frame.P2)
    for a, b in zip(back.objects, frame.objects):
        assert a.to_line() == b.to_line()


def test_hflip_mirrors_location_and_angles():
    frame = scene_frame(5)
    flipped = hflip(frame)
    for a, b in zip(frame.objects, flipped.objects):
        assert b.location[0] == -a.location[0]
        assert float(wrap_angle(a.rotation_y + b.rotation_y - np.pi)) == pytest.approx(0.0, abs=1e-12)
        x, _, z = b.location
        assert float(wrap_angle(b.alpha - (b.rotation_y - np.arctan2(x, z)))) == pytest.approx(0.0, abs=1e-9)


def test_export_and_load_frames(tmp_path):
    frames = [scene_frame(s) for s in (1, 2)]
    export_frames(frames, tmp_path)
    back = load_frames(tmp_path)
    assert [f.name for f in back] == [f.name for f in frames]
    np.testing.assert_allclose(back[0].image, frames[0].image.astype(np.float32))
    np.testing.assert_allclose(back[0].P2, frames[0].P2)
    assert [o.cls for o in back[1].objects] == [o.cls for o in frames[1].objects]
    assert load_frames(tmp_path, with_labels=False)[0].objects == []


def test_load_frames_reports_missing_pieces(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_frames(tmp_path)
    (tmp_path / "image_2").mkdir()
    np.save(tmp_path / "image_2" / "x.npy", np.zeros((3, 4, 4), np.float32))
    with pytest.raises(FileNotFoundError, match="calibration"):
        load_frames(tmp_path)


def test_frame_dtype_conversion():
    f = Frame(np.zeros((3, 4, 4)), SynthConfig().P2())
    assert f.objects == [] and f.depth is None
