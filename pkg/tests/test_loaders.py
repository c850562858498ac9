import json

import numpy as np
import pytest

from ftahash.core import TEST, TRAIN
from ftahash.features import extract_pjd
from ftahash.loaders import (
    DATA_DIR_ENV,
    ParseError,
    load_any,
    load_dataset,
    load_dataset_cache,
    load_msr_skeleton,
    resolve_data_path,
    save_dataset_cache,
)


def skeleton_text(frames, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((frames * 20, 3))
    conf = rng.random(frames * 20)
    return "\n".join(f"{x:.17g} {y:.17g} {z:.17g} {c:.17g}" for (x, y, z), c in zip(rows, conf)) + "\n"


def write_manifest(dirpath, records, **extra):
    doc = {"class_names": ["A", "B"], "feature": "pjd", "records": records, **extra}
    path = dirpath / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_forty_rows_make_two_frames(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text(skeleton_text(2))
    s = load_msr_skeleton(f)
    assert s.joints.shape == (2, 20, 3)
    assert s.confidence.shape == (2, 20)


def test_empty_file(tmp_path):
    f = tmp_path / "empty.txt"
    f.write_text("")
    with pytest.raises(ParseError, match="no frames"):
        load_msr_skeleton(f)


def test_field_mapping(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("1.0 2.0 3.0 0.5\n" + "0 0 0 1\n" * 19)
    s = load_msr_skeleton(f)
    assert s.joints[0, 0].tolist() == [1.0, 2.0, 3.0]
    assert s.confidence[0, 0] == 0.5


def test_row_count_not_divisible(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text(skeleton_text(1) + "1 2 3 4\n")
    with pytest.raises(ParseError, match=":21:"):
        load_msr_skeleton(f)


def test_non_numeric_token_has_line_number(tmp_path):
    lines = skeleton_text(1).splitlines()
    lines[6] = "1.0 abc 3.0 1.0"
    f = tmp_path / "a.txt"
    f.write_text("\n".join(lines))
    with pytest.raises(ParseError, match=":7:"):
        load_msr_skeleton(f)


def test_wrong_field_count(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text("1 2 3\n")
    with pytest.raises(ParseError, match=":1:"):
        load_msr_skeleton(f)


def test_joint_permutation(tmp_path):
    f = tmp_path / "a.txt"
    f.write_text(skeleton_text(1))
    plain = load_msr_skeleton(f)
    perm = list(range(20))[::-1]
    swapped = load_msr_skeleton(f, permutation=perm)
    assert np.array_equal(swapped.joints[0, 19], plain.joints[0, 0])
    with pytest.raises(ValueError):
        load_msr_skeleton(f, permutation=[0] * 20)


def test_manifest_two_records(tmp_path):
    (tmp_path / "a.txt").write_text(skeleton_text(3, seed=1))
    (tmp_path / "b.txt").write_text(skeleton_text(4, seed=2))
    path = write_manifest(
        tmp_path,
        [
            {"file": "a.txt", "label": "A", "subject": 1, "split": "train"},
            {"file": "b.txt", "label": "B", "subject": 2, "split": "test"},
        ],
    )
    data = load_dataset(path)
    assert len(data) == 2
    assert data.class_names == ("A", "B")
    assert data.split_tags == (TRAIN, TEST)
    assert data.subjects == (1, 2)
    assert data.labels().tolist() == [0, 1]
    assert data.d == 190
    expected = extract_pjd(load_msr_skeleton(tmp_path / "a.txt")).frames
    assert np.array_equal(data.sequences[0].frames, expected)


def test_manifest_duplicates_loaded_twice(tmp_path):
    (tmp_path / "a.txt").write_text(skeleton_text(2))
    rec = {"file": "a.txt", "label": "A", "subject": 1, "split": "train"}
    data = load_dataset(write_manifest(tmp_path, [rec, rec]))
    assert len(data) == 2
    assert data.sequences[0] == data.sequences[1]


def test_manifest_errors_carry_record_index(tmp_path):
    (tmp_path / "a.txt").write_text(skeleton_text(2))
    good = {"file": "a.txt", "label": "A"}
    with pytest.raises(ValueError, match="record 1: unknown label 'Z'"):
        load_dataset(write_manifest(tmp_path, [good, {"file": "a.txt", "label": "Z"}]))
    with pytest.raises(FileNotFoundError, match="record 1"):
        load_dataset(write_manifest(tmp_path, [good, {"file": "missing.txt", "label": "A"}]))
    (tmp_path / "raw.txt").write_text("1 2 3\n4 5 6\n")
    (tmp_path / "raw4.txt").write_text("1 2 3 4\n")
    with pytest.raises(ValueError, match="record 1: dimension"):
        load_dataset(
            write_manifest(
                tmp_path, [{"file": "raw.txt", "label": "A"}, {"file": "raw4.txt", "label": "B"}], feature="raw"
            )
        )


def test_feature_override_and_inline_topology(tmp_path):
    (tmp_path / "a.txt").write_text(skeleton_text(3))
    path = write_manifest(tmp_path, [{"file": "a.txt", "label": "A"}])
    assert load_dataset(path, feature="jo").d == 60
    assert load_dataset(path, feature="pa").d == 171
    topo = {"num_joints": 20, "bones": [[i, i + 1] for i in range(19)], "reference_pair": [0, 1]}
    (tmp_path / "topo.json").write_text(json.dumps(topo))
    path = write_manifest(tmp_path, [{"file": "a.txt", "label": "A"}], topology="topo.json")
    assert load_dataset(path, feature="pa").d == 171


def test_cache_roundtrip(tmp_path):
    (tmp_path / "a.txt").write_text(skeleton_text(3, seed=1))
    (tmp_path / "b.txt").write_text(skeleton_text(5, seed=2))
    path = write_manifest(
        tmp_path,
        [{"file": "a.txt", "label": "A", "subject": 4, "split": "train"}, {"file": "b.txt", "split": "test"}],
    )
    data = load_dataset(path)
    save_dataset_cache(tmp_path / "cache.npz", data)
    back = load_dataset_cache(tmp_path / "cache.npz")
    assert back.sequences == data.sequences
    assert back.split_tags == data.split_tags and back.subjects == data.subjects
    assert back.class_names == data.class_names
    assert back.sequences[1].label is None
    assert load_any(tmp_path / "cache.npz").sequences == data.sequences
    assert load_any(path).sequences == data.sequences


def test_data_dir_env(tmp_path, monkeypatch):
    (tmp_path / "x.json").write_text("{}")
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    assert resolve_data_path("x.json") == tmp_path / "x.json"
    assert resolve_data_path("nope.json").name == "nope.json"
