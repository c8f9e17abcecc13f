import numpy as np
import pytest

from broncholoc.errors import LikelihoodError
from broncholoc.imaging import GrayImage
from broncholoc.likelihood import (PROBABILITY_FLOOR, CentroidLikelihoodProvider,
                                   CentroidModel, FileLikelihoodProvider,
                                   load_centroid_model, load_likelihood_file,
                                   normalize, predict_centroid,
                                   save_centroid_model, scores_to_likelihood,
                                   thumbnail, train_centroids,
                                   write_likelihood_file)


def write_text(path, text):
    path.write_text(text, encoding='utf-8')
    return path


def flat_frame(value, size=16):
    return GrayImage(np.full((size, size), value, dtype=np.uint8))


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def test_normalize_examples():
    assert np.allclose(normalize([2, 2]).probs, [0.5, 0.5])
    assert np.allclose(normalize([0, 3, 1]).probs, [0, 0.75, 0.25])
    assert normalize([0, 3, 1]).argmax() == 1


@pytest.mark.parametrize('values, code', [
    ([0, 0, 0], LikelihoodError.ALL_ZERO),
    ([1, -1, 2], LikelihoodError.NEGATIVE),
    ([], LikelihoodError.ROW_LENGTH),
])
def test_normalize_rejects(values, code):
    with pytest.raises(LikelihoodError) as info:
        normalize(values)
    assert info.value.err_code == code


def test_normalized_vector_is_read_only():
    v = normalize([1.0, 3.0])
    with pytest.raises(ValueError):
        v.probs[0] = 0.0


# ---------------------------------------------------------------------------
# likelihood files
# ---------------------------------------------------------------------------

def test_header_permutation_reordered(tmp_path, tree3):
    path = write_text(tmp_path / 'l.csv', 'LMB,TRA,RMB\n1,2,1\n0,1,3\n')
    vectors = load_likelihood_file(path, tree3)
    assert len(vectors) == 2
    # tree order is TRA, RMB, LMB
    assert np.allclose(vectors[0].probs, [0.5, 0.25, 0.25])
    assert np.allclose(vectors[1].probs, [0.25, 0.75, 0.0])


@pytest.mark.parametrize('text, code', [
    ('TRA,RMB\n1,1\n', LikelihoodError.LABEL_MISMATCH),
    ('TRA,RMB,XYZ\n1,1,1\n', LikelihoodError.LABEL_MISMATCH),
    ('TRA,RMB,RMB\n1,1,1\n', LikelihoodError.LABEL_MISMATCH),
    ('TRA,RMB,LMB\n1,-0.5,1\n', LikelihoodError.NEGATIVE),
    ('TRA,RMB,LMB\n1,abc,1\n', LikelihoodError.NON_NUMERIC),
    ('TRA,RMB,LMB\n1,nan,1\n', LikelihoodError.NON_NUMERIC),
    ('TRA,RMB,LMB\n1,2\n', LikelihoodError.ROW_LENGTH),
    ('TRA,RMB,LMB\n1,2,3\n1,2,3,4\n', LikelihoodError.ROW_LENGTH),
    ('', LikelihoodError.LABEL_MISMATCH),
])
def test_malformed_files(tmp_path, tree3, text, code):
    path = write_text(tmp_path / 'bad.csv', text)
    with pytest.raises(LikelihoodError) as info:
        load_likelihood_file(path, tree3)
    assert info.value.err_code == code


def test_all_zero_row_reports_row(tmp_path, tree3):
    path = write_text(tmp_path / 'z.csv', 'TRA,RMB,LMB\n1,1,1\n0,0,0\n')
    with pytest.raises(LikelihoodError) as info:
        load_likelihood_file(path, tree3)
    assert info.value.err_code == LikelihoodError.ALL_ZERO
    assert 'row 2' in str(info.value)


def test_written_rows_read_back_exactly(tmp_path, tree15, rng):
    rows = rng.dirichlet(np.ones(tree15.n), size=12)
    path = tmp_path / 'rows.csv'
    write_likelihood_file(path, tree15.nodes, rows)
    vectors = load_likelihood_file(path, tree15)
    for row, vec in zip(rows, vectors):
        # normalizing an already-normalized row can move the last bit
        assert np.allclose(vec.probs, row / row.sum(), rtol=0, atol=1e-15)
    header = path.read_text(encoding='utf-8').splitlines()[0]
    assert header == ','.join(tree15.nodes)


# ---------------------------------------------------------------------------
# nearest-centroid baseline
# ---------------------------------------------------------------------------

def test_two_class_softmax_example():
    v = scores_to_likelihood([1.0, 2.0], [True, True], 1.0)
    assert v.probs == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_absent_class_gets_floor():
    v = scores_to_likelihood([1.0, 0.0, 2.0], [True, False, True], 1.0)
    assert v.probs[1] == pytest.approx(PROBABILITY_FLOOR, rel=1e-6)
    assert v.argmax() == 0


def test_thumbnail_is_area_average():
    data = np.zeros((4, 4), dtype=np.uint8)
    data[:2, :2] = 200
    thumb = thumbnail(GrayImage(data), 2)
    assert thumb.shape == (2, 2)
    assert thumb[0, 0] == pytest.approx(200.0)
    assert thumb[1, 1] == pytest.approx(0.0)


def test_train_and_predict(tree3):
    training = [(flat_frame(20), 'TRA'), (flat_frame(30), 'TRA'),
                (flat_frame(200), 'RMB'), (flat_frame(210), 1)]
    model = train_centroids(training, tree3, thumb_size=4, temperature=50.0)
    assert model.present == (True, True, False)
    assert np.allclose(model.centroids[0], 25.0)
    assert np.allclose(model.centroids[1], 205.0)
    assert predict_centroid(model, flat_frame(10)).argmax() == 0
    assert predict_centroid(model, flat_frame(250)).argmax() == 1
    v = predict_centroid(model, flat_frame(128))
    assert v.probs[2] < 1e-10
    assert v.probs.sum() == pytest.approx(1.0)


def test_train_needs_two_classes(tree3):
    with pytest.raises(LikelihoodError) as info:
        train_centroids([(flat_frame(20), 'TRA')], tree3)
    assert info.value.err_code == LikelihoodError.TOO_FEW_CLASSES


def test_train_rejects_bad_temperature(tree3):
    with pytest.raises(LikelihoodError) as info:
        train_centroids([], tree3, temperature=0.0)
    assert info.value.err_code == LikelihoodError.BAD_MODEL


def test_model_file_round_trip(tmp_path, tree3):
    training = [(flat_frame(20), 'TRA'), (flat_frame(200), 'LMB')]
    model = train_centroids(training, tree3, thumb_size=(3, 5),
                            temperature=7.5)
    path = tmp_path / 'centroids.txt'
    save_centroid_model(model, path)
    loaded = load_centroid_model(path)
    assert loaded.labels == model.labels
    assert loaded.present == model.present
    assert loaded.thumb_size == (3, 5)
    assert loaded.temperature == 7.5
    assert np.array_equal(loaded.centroids, model.centroids)


def test_bad_model_file(tmp_path):
    path = write_text(tmp_path / 'm.txt', 'thumb 2 2\ncentroid TRA 1 2 3\n')
    with pytest.raises(LikelihoodError) as info:
        load_centroid_model(path)
    assert info.value.err_code == LikelihoodError.BAD_MODEL


def test_model_reordered_to_tree(tree3):
    model = CentroidModel(labels=('LMB', 'TRA', 'RMB'),
                          centroids=np.arange(3.0)[:, None, None] *
                          np.ones((3, 1, 1)),
                          present=(True, True, False), thumb_size=(1, 1))
    again = model.reordered(tree3)
    assert again.labels == tree3.nodes
    assert again.present == (True, False, True)
    assert list(again.centroids.ravel()) == [1.0, 2.0, 0.0]


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------

def test_file_provider(tmp_path, tree3):
    path = write_text(tmp_path / 'l.csv', 'TRA,RMB,LMB\n1,0,0\n0,1,1\n')
    provider = FileLikelihoodProvider.from_file(path, tree3)
    assert len(provider) == 2
    assert provider.likelihood(1).argmax() == 1
    with pytest.raises(LikelihoodError) as info:
        provider.likelihood(2)
    assert info.value.err_code == LikelihoodError.FRAME_COUNT


def test_centroid_provider_from_file(tmp_path, tree3):
    training = [(flat_frame(20), 'TRA'), (flat_frame(200), 'RMB'),
                (flat_frame(110), 'LMB')]
    path = tmp_path / 'centroids.txt'
    save_centroid_model(train_centroids(training, tree3, thumb_size=4,
                                        temperature=10.0), path)
    provider = CentroidLikelihoodProvider.from_file(path, tree3)
    assert provider.likelihood(0, flat_frame(105)).argmax() == 2
