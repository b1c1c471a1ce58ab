import numpy as np
import pytest

from so3fm.fisher import FisherParams, log_pdf
from so3fm.oracle import haar_rotations
from so3fm.viz import (
    JET,
    SpherePdfImage,
    colorize,
    plot_history,
    plot_marginals,
    read_ppm,
    render_all,
    render_axis_marginal,
    worker_count,
    write_ppms,
)


def _peak_direction(img):
    i, j = np.unravel_index(np.argmax(img.density), img.density.shape)
    lat = np.pi / 2 - (i + 0.5) * np.pi / img.height
    lon = -np.pi + (j + 0.5) * 2 * np.pi / img.width
    return np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def test_jet_table():
    assert JET.shape == (256, 3) and JET.dtype == np.uint8
    assert JET[0, 2] > JET[0, 0] and JET[-1, 0] > JET[-1, 2]


def test_uniform_is_constant():
    for img in render_all(np.zeros((3, 3)), width=32, height=16):
        assert np.ptp(img.density) < 1e-12
        np.testing.assert_allclose(img.density, 1 / (4 * np.pi))
        assert len(np.unique(img.pixels.reshape(-1, 3), axis=0)) == 1


@pytest.mark.parametrize("A", [np.diag([5.0, 5, 5]), np.diag([20.0, 1, 1]), np.diag([2.0, -1, 0.5])])
def test_mass_is_one(A):
    for img in render_all(A):
        assert abs(img.total_mass() - 1) < 0.02


def test_diag5_peaks_at_basis_directions():
    for img in render_all(np.diag([5.0, 5, 5])):
        assert _peak_direction(img) @ np.eye(3)[img.axis] > 0.99
        hot = img.pixels.reshape(-1, 3)[np.argmax(img.density)]
        np.testing.assert_array_equal(hot, JET[255])


def test_x_concentrated_more_than_y_and_z():
    ims = render_all(np.diag([20.0, 1, 1]), width=128, height=64)

    def spread(img):
        w = img.density * img.solid_angles()
        return np.sum(w > 1e-3 * w.max())

    assert spread(ims[0]) < 0.5 * spread(ims[1])
    assert spread(ims[0]) < 0.5 * spread(ims[2])


def test_marginal_matches_monte_carlo_histogram():
    A = np.diag([2.0, 1.0, 0.5])
    img = render_axis_marginal(A, 2, width=16, height=8)
    R = haar_rotations(4 * 10**5, seed=3)
    w = np.exp(log_pdf(FisherParams(A), R))
    z = R[:, :, 2]
    lat = np.arcsin(np.clip(z[:, 2], -1, 1))
    row = np.clip(((np.pi / 2 - lat) / np.pi * 8).astype(int), 0, 7)
    mc = np.bincount(row, weights=w, minlength=8) / len(w)
    analytic = (img.density * img.solid_angles()).sum(axis=1)
    np.testing.assert_allclose(analytic, mc, atol=0.01)


def test_ppm_round_trip_and_determinism(tmp_path):
    a = render_all(np.diag([5.0, 2, 1]), width=40, height=20)
    b = render_all(np.diag([5.0, 2, 1]), width=40, height=20, workers=3)
    paths = write_ppms(a, tmp_path / "p")
    assert [p.name for p in paths] == ["p_x.ppm", "p_y.ppm", "p_z.ppm"]
    for img, other, path in zip(a, b, paths):
        assert path.read_bytes().startswith(b"P6\n40 20\n255\n")
        assert img.ppm_bytes() == other.ppm_bytes()
        np.testing.assert_array_equal(read_ppm(path), img.pixels)


def test_colorize_max_is_hottest():
    d = np.array([[0.0, 1.0], [2.0, 4.0]])
    px = colorize(d)
    np.testing.assert_array_equal(px[1, 1], JET[255])
    np.testing.assert_array_equal(px[0, 0], JET[0])


def test_invalid_arguments():
    with pytest.raises(ValueError):
        render_axis_marginal(np.eye(3), 3)
    with pytest.raises(ValueError):
        render_axis_marginal(np.stack([np.eye(3)] * 2), 0)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("SO3FM_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("SO3FM_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()


def test_figures(tmp_path):
    ims = render_all(np.diag([5.0, 5, 5]), width=32, height=16)
    assert plot_marginals(ims, tmp_path / "m.png").stat().st_size > 0
    hist = [{"step": s, "mean_err": 5.0 - s / 100, "pl_err": 4.0, "coverage": 0.4 + s / 1000} for s in (0, 100, 200)]
    assert plot_history(hist, tmp_path / "h.png").read_bytes()[:4] == b"\x89PNG"


def test_solid_angles_cover_sphere():
    img = SpherePdfImage(0, 256, 128, np.zeros((128, 256)), np.zeros((128, 256, 3), np.uint8))
    assert img.solid_angles().sum() == pytest.approx(4 * np.pi, rel=1e-4)
