import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import small_scene
from strainmap.calibration import ColorbarROI
from strainmap.model import ElastogramFrame, NoSkinLineFound, QSMap, Region
from strainmap.phantom import Ellipse, render
from strainmap.quantify import compute_qs
from strainmap.segmentation import (
    NO_LINE,
    _column_percentile,
    SegmentationParams,
    find_skin_line,
    remove_bone,
    segment,
    split_standoff_tissue,
    suppress_bmode,
)


def _frame_of(color):
    return ElastogramFrame(np.broadcast_to(np.array(color, np.uint8), (64, 64, 3)))


def test_gray_pixel_unmarked():
    assert not suppress_bmode(_frame_of((120, 120, 120))).any()


def test_saturated_red_marked():
    assert suppress_bmode(_frame_of((200, 30, 30))).all()


@given(st.integers(0, 255), st.integers(0, 2**16))
def test_bmode_equal_to_gray_frame_marks_nothing(level, seed):
    rng = np.random.default_rng(seed)
    gray = rng.integers(0, 256, (64, 64)).astype(np.uint8)
    gray[0, 0] = level
    frame = ElastogramFrame(np.repeat(gray[..., None], 3, axis=2), bmode=gray)
    assert not suppress_bmode(frame).any()


def _column(marked_rows, height=200):
    mask = np.zeros((height, 1), bool)
    mask[list(marked_rows), 0] = True
    return mask


def test_fully_marked_column_has_no_line():
    mask = np.ones((50, 4), bool)
    mask[:, 0] = _column(list(range(20)) + list(range(24, 50)), 50)[:, 0]
    line = find_skin_line(mask, gap_min=3, min_valid_fraction=0.25)
    assert line[0] == 20
    assert list(line[1:]) == [NO_LINE] * 3


def test_skin_line_at_gap_start():
    mask = _column(list(range(0, 40)) + list(range(44, 200)))
    assert find_skin_line(mask, gap_min=3)[0] == 40


def test_gap_shorter_than_minimum_ignored():
    mask = _column(list(range(0, 40)) + list(range(42, 200)))
    with pytest.raises(NoSkinLineFound):
        find_skin_line(mask, gap_min=3)


def test_too_few_valid_columns():
    mask = np.ones((60, 10), bool)
    mask[20:25, :4] = False
    with pytest.raises(NoSkinLineFound):
        find_skin_line(mask, min_valid_fraction=0.5)
    assert (find_skin_line(mask, min_valid_fraction=0.4) != NO_LINE).sum() == 4


def test_split_column_rules():
    mask = np.zeros((200, 2), bool)
    mask[:40, 0] = mask[44:, 0] = True
    mask[:, 1] = True
    labels = split_standoff_tissue(mask, np.array([40, NO_LINE]))
    col = labels[:, 0]
    assert (col[:40] == Region.Standoff).all()
    assert (col[40:44] == Region.SkinGap).all()
    assert (col[44:] == Region.Tissue).all()
    assert (labels[:, 1] == Region.NoData).all()


def _stratified(labels):
    for c in range(labels.shape[1]):
        col = labels[:, c]
        so = np.flatnonzero(col == Region.Standoff)
        gap = np.flatnonzero(col == Region.SkinGap)
        ti = np.flatnonzero(col == Region.Tissue)
        if so.size and gap.size and ti.size and not (so.max() < gap.min() < ti.min()):
            return False
    return True


@given(
    st.integers(5, 40),  # standoff
    st.integers(3, 8),   # gap
    st.lists(st.integers(0, 199), max_size=40),  # random dropouts
)
def test_labels_partition_and_stratify(standoff, gap, holes):
    mask = np.zeros((200, 12), bool)
    mask[:standoff] = True
    mask[standoff + gap:] = True
    for h in holes:
        mask[h, h % 12] = False
    try:
        skin = find_skin_line(mask, gap_min=3, min_valid_fraction=0.1)
    except NoSkinLineFound:
        return
    labels = split_standoff_tissue(mask, skin)
    assert set(np.unique(labels)) <= {int(r) for r in Region}
    assert _stratified(labels)


def _exclude(roi: ColorbarROI, pad=2):
    return slice(roi.y - pad, roi.y + roi.height + pad), slice(roi.x - pad, roi.x + roi.width + pad)


@pytest.mark.parametrize("with_bmode", [True, False])
def test_phantom_mask_exact(with_bmode):
    frame, truth = render(small_scene(emit_bmode=with_bmode, seed=4))
    mask = suppress_bmode(frame)
    np.testing.assert_array_equal(mask, truth.overlay_mask)


def test_phantom_skin_line_matches():
    frame, truth = render(small_scene(standoff_thickness=51, seed=2))
    _, skin, labels = segment(frame, exclude=_exclude(truth.colorbar_roi))
    valid = skin != NO_LINE
    assert np.all(skin[valid] == 51)
    np.testing.assert_array_equal(skin, truth.skin_line)
    assert (labels == truth.labels).mean() == 1.0


def _bone_scene(**kw):
    return small_scene(height=200, bone=Ellipse(185, 80, 12, 30), **kw)


def test_bone_captured_and_tissue_spared(scale):
    frame, truth = render(_bone_scene())
    _, _, labels = segment(frame, exclude=_exclude(truth.colorbar_roi))
    qs = remove_bone(compute_qs(frame, labels, scale))
    gt_bone = truth.labels == Region.Bone
    gt_tissue = truth.labels == Region.Tissue
    assert (qs.labels[gt_bone] == Region.Bone).mean() >= 0.95
    assert (qs.labels[gt_tissue] == Region.Bone).mean() <= 0.02
    assert np.all(qs.values[qs.labels == Region.Bone] == 0)


def test_no_deep_stiff_pixels_is_noop(scale, homogeneous):
    frame, truth = homogeneous
    _, _, labels = segment(frame, exclude=_exclude(truth.colorbar_roi))
    qs = compute_qs(frame, labels, scale)
    out = remove_bone(qs)
    np.testing.assert_array_equal(out.labels, qs.labels)
    np.testing.assert_array_equal(out.values, qs.values)


def _qs_block(raw):
    labels = np.full(raw.shape, Region.Tissue, np.uint8)
    labels[:5] = Region.Standoff
    labels[5:8] = Region.SkinGap
    raw = raw.copy()
    raw[5:8] = 0
    return QSMap(values=raw, labels=labels, raw=raw)


def test_isolated_stiff_pixel_reverts():
    raw = np.full((60, 40), 50, np.int16)
    raw[55, 20] = 1
    out = remove_bone(_qs_block(raw))
    assert out.labels[55, 20] == Region.Tissue
    assert out.values[55, 20] == 1


def test_large_deep_stiff_block_becomes_bone():
    raw = np.full((60, 40), 50, np.int16)
    raw[50:58, 10:20] = 2
    out = remove_bone(_qs_block(raw))
    assert (out.labels[50:58, 10:20] == Region.Bone).all()
    assert (out.values[50:58, 10:20] == 0).all()
    assert (out.labels[:50] != Region.Bone).all()


@given(st.integers(0, 2**16), st.integers(5, 60))
def test_remove_bone_idempotent(seed, area):
    rng = np.random.default_rng(seed)
    raw = rng.integers(30, 70, (60, 40)).astype(np.int16)
    r0, c0 = rng.integers(40, 55), rng.integers(0, 30)
    raw[r0:r0 + 6, c0:c0 + max(area // 6, 1)] = rng.integers(1, 5)
    once = remove_bone(_qs_block(raw), SegmentationParams(bone_min_area=area))
    twice = remove_bone(once, SegmentationParams(bone_min_area=area))
    np.testing.assert_array_equal(once.labels, twice.labels)
    np.testing.assert_array_equal(once.values, twice.values)


def test_params_validated():
    with pytest.raises(ValueError):
        SegmentationParams(gap_min=0)
    with pytest.raises(ValueError):
        SegmentationParams(bone_depth_fraction=1.0)


@given(arrays(np.int16, (30, 7), elements=st.integers(1, 100)), arrays(bool, (30, 7)),
       st.floats(0, 100))
def test_column_percentile_matches_numpy(values, select, q):
    got = _column_percentile(values, select, q)
    for c in range(values.shape[1]):
        col = values[select[:, c], c]
        if col.size == 0:
            assert np.isnan(got[c])
        else:
            assert got[c] == pytest.approx(np.percentile(col.astype(float), q), rel=1e-12)
