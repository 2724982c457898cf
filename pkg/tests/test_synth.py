import numpy as np
import pytest

from pointdeconv.synth import SynthesisError, SyntheticConfig, generate_dataset, generate_image


def test_deterministic():
    cfg = SyntheticConfig(n_images=3, seed=7)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    for (ia, da), (ib, db) in zip(a, b):
        assert ia.tobytes() == ib.tobytes()
        np.testing.assert_array_equal(da.points, db.points)
    other = generate_image(SyntheticConfig(n_images=3, seed=8), 0)
    assert other[0].tobytes() != a[0][0].tobytes()


def test_annotation_count():
    cfg = SyntheticConfig(n_images=10, cells_per_image=(30, 30), cell_radius=(2, 3),
                          min_separation=6, image_size=64, seed=1)
    assert sum(len(d) for _, d in generate_dataset(cfg)) == 300


def test_noise_free_single_cell_peaks_at_centre():
    cfg = SyntheticConfig(n_images=1, cells_per_image=(1, 1), noise_sigma=0.0, seed=3)
    image, dots = generate_image(cfg, 0)
    x, y = dots.points[0]
    assert image[y, x] == image.max()
    assert image.min() == pytest.approx(cfg.background_level)


def test_range_and_separation():
    cfg = SyntheticConfig(n_images=5, cell_radius=(3, 6), min_separation=10, seed=2)
    for image, dots in generate_dataset(cfg):
        assert image.dtype == np.float32 and image.min() >= 0 and image.max() <= 1
        p = dots.points
        d = np.hypot(*(p[:, None] - p[None]).transpose(2, 0, 1))
        assert d[~np.eye(len(p), dtype=bool)].min() >= 10


def test_unsatisfiable_separation():
    cfg = SyntheticConfig(image_size=16, n_images=1, cells_per_image=(20, 20), cell_radius=(1, 2),
                          min_separation=8)
    with pytest.raises(SynthesisError, match="1000 attempts"):
        generate_image(cfg, 0)


@pytest.mark.parametrize("kw", [
    {"min_separation": 0.5}, {"noise_sigma": -1}, {"cells_per_image": (5, 2)}, {"cell_radius": (0, 2)},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SyntheticConfig(**kw)
