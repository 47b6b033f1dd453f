import numpy as np
import pytest

import hat

TINY_CONFIG = """
text.vocab_size=24
text.model_dim=8
text.num_layers=2
text.num_heads=2
text.tap_layers=2
image.grid_side=8
image.patch_dim=8
image.stage_dims=6,8
image.blocks_per_stage=1,1
image.tap_stages=2
align.dim=8
"""


@pytest.fixture(scope="module")
def corpus():
    return hat.generate_corpus(
        num_pairs=4,
        vocab_size=24,
        concept_count=4,
        concepts_per_pair=2,
        captions_per_image=1,
        grid_side=8,
        patch_dim=8,
        sentence_len_min=4,
        sentence_len_max=6,
        seed=3,
    )


@pytest.fixture(scope="module")
def model():
    return hat.Model(config_text=TINY_CONFIG, seed=1)


def test_corpus_shape(corpus):
    assert len(corpus["images"]) == 4
    assert len(corpus["captions"]) == 4
    assert corpus["images"][0].shape == (64, 8)
    assert all(0 <= t < 24 for caption in corpus["captions"] for t in caption)
    assert "num_pairs=4" in corpus["manifest"]


def test_encode_shapes(corpus, model):
    levels = model.encode_image(corpus["images"][0])
    assert len(levels) == 1
    assert levels[0].shape == (16, 8)
    text_levels = model.encode_text(corpus["captions"][0])
    assert len(text_levels) == 1
    assert text_levels[0].shape == (len(corpus["captions"][0]), 8)


def test_similarity_matches_score_matrix(corpus, model):
    images = [model.encode_image(img) for img in corpus["images"]]
    texts = [model.encode_text(cap) for cap in corpus["captions"]]
    matrix = hat.score_matrix(images, texts)
    assert matrix.shape == (4, 4)
    for i in range(4):
        for j in range(4):
            assert matrix[i, j] == hat.similarity(images[i], texts[j])


def test_direction_and_level_options(corpus, model):
    img = model.encode_image(corpus["images"][0])
    txt = model.encode_text(corpus["captions"][0])
    i2t = hat.similarity(img, txt, direction="i2t")
    t2i = hat.similarity(img, txt, direction="t2i")
    ens = hat.similarity(img, txt, direction="ensemble")
    assert ens == pytest.approx(0.5 * (i2t + t2i))
    only = hat.similarity(img, txt, levels=[True])
    assert only == hat.similarity(img, txt)


def test_encoding_is_deterministic(corpus):
    a = hat.Model(config_text=TINY_CONFIG, seed=7)
    b = hat.Model(config_text=TINY_CONFIG, seed=7)
    grid = corpus["images"][1]
    np.testing.assert_array_equal(a.encode_image(grid)[0], b.encode_image(grid)[0])


def test_triplet_loss_values():
    assert hat.triplet_loss(0.8, 0.5, 0.9, 0.2) == 0.3
    assert hat.triplet_loss(0.9, 0.1, 0.1, 0.2) == 0.0
    with pytest.raises(hat.InputError):
        hat.triplet_loss(float("nan"), 0.0, 0.0, 0.2)


def test_evaluate_perfect_diagonal():
    report = hat.evaluate(np.eye(4), captions_per_image=1)
    assert report["i2t"]["r1"] == 1.0
    assert report["t2i"]["r1"] == 1.0
    assert report["i2t"]["mean_rank"] == 1.0


def test_recall_at_k():
    assert hat.recall_at_k([1, 2, 6], 1) == pytest.approx(1 / 3)
    assert hat.recall_at_k([1, 2, 6], 5) == pytest.approx(2 / 3)
    assert hat.recall_at_k([1, 2, 6], 10) == 1.0


def test_grad_check_within_tolerance():
    report = hat.grad_check(seed=1)
    assert report["max_rel_error"] <= 1e-4
    assert report["rows"] > 0


def test_errors_surface_as_python_exceptions():
    with pytest.raises(hat.ConfigError):
        hat.Model(config_text=TINY_CONFIG + "text.num_heads=3\n", seed=1)
    with pytest.raises(hat.IoError):
        hat.Model.from_checkpoint("/nonexistent/model.ckpt")
    with pytest.raises(hat.Error):
        hat.generate_corpus(num_pairs=0)
