import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timegs.basisbank import (
    SUPPORTED_M,
    CholeskyParams,
    build_bank,
    default_bank,
    default_param_grid,
    gaussian_density,
    load_rasters,
    mahalanobis_sq,
    save_bank,
)

factor = st.floats(0.3, 6.0)
shear = st.floats(-2.0, 2.0)


def test_density_hand_values():
    eye = CholeskyParams(1.0, 0.0, 1.0)
    assert gaussian_density((0.0, 0.0), CholeskyParams(2.5, -1.0, 0.4)) == 1.0
    assert gaussian_density((1.0, 0.0), eye) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert gaussian_density((2.0, 0.0), CholeskyParams(2.0, 0.0, 1.0)) == pytest.approx(math.exp(-0.5), abs=1e-15)


@given(factor, shear, factor, st.floats(-4, 4), st.floats(-4, 4))
def test_closed_form_matches_generic_inverse(l11, l21, l22, dx, dy):
    p = CholeskyParams(l11, l21, l22)
    d = np.array([dx, dy])
    ref = d @ np.linalg.solve(p.covariance(), d)
    assert mahalanobis_sq(dx, dy, p) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_degenerate_factor_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        gaussian_density((0, 0), CholeskyParams(1e-9, 0.0, 1.0))


def test_identity_basis_single():
    bank = build_bank([CholeskyParams(1.0, 0.0, 1.0)], r=3, h=7, w=7)
    raster = bank.rasters[0]
    assert raster[3, 3] == raster.max()
    assert raster.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("M", SUPPORTED_M)
def test_default_banks_normalised_and_masked(M):
    bank = default_bank(M, r=3, h=9, w=9)
    assert bank.M == M
    np.testing.assert_allclose(bank.rasters.sum(axis=(1, 2)), 1.0, rtol=0, atol=1e-9)
    assert np.all(bank.rasters >= 0)
    assert np.all(bank.rasters[~bank.support()] == 0.0)
    assert np.all(bank.rasters[bank.support()] > 0.0)


def test_default_grid_small_is_isotropic_and_stable():
    grid = default_param_grid(4)
    assert all(p.l21 == 0 and p.l11 == p.l22 for p in grid)
    assert [p.l11 for p in grid] == [0.75, 1.5, 3.0, 6.0]
    assert default_param_grid(16) == default_param_grid(16)
    assert len(set(default_param_grid(32))) == 32


def test_unsupported_m_rejected():
    with pytest.raises(ValueError, match="unsupported M"):
        default_param_grid(5)


def test_isotropic_symmetry():
    bank = build_bank([CholeskyParams(1.5, 0.0, 1.5)], r=3, h=9, w=9)
    b = bank.rasters[0]
    np.testing.assert_array_equal(b, b.T)
    np.testing.assert_array_equal(b, b[::-1, ::-1])


def test_point_symmetry_holds_for_sheared_bases():
    for b in default_bank(32).rasters:
        np.testing.assert_allclose(b, b[::-1, ::-1], rtol=0, atol=1e-17)


def test_monotone_decay_along_axes():
    # q(t u) = t^2 q(u) so density never increases moving away from the centre.
    for b in default_bank(32).rasters:
        c = 4
        for line in (b[c, c:], b[c, c::-1], b[c:, c], b[c::-1, c]):
            assert np.all(np.diff(line) <= 0)


def test_bank_is_read_only():
    bank = default_bank()
    with pytest.raises(ValueError):
        bank.rasters[0, 0, 0] = 1.0


def test_even_dims_and_empty_grid_rejected():
    with pytest.raises(ValueError, match="odd"):
        build_bank(default_param_grid(4), h=8, w=9)
    with pytest.raises(ValueError, match="empty"):
        build_bank([])


def test_dump_round_trip(tmp_path):
    bank = default_bank(16)
    save_bank(bank, tmp_path / "bank.txt")
    back = load_rasters(tmp_path / "bank.txt")
    assert back.tobytes() == bank.rasters.tobytes()


@settings(max_examples=50)
@given(factor, shear, factor, st.sampled_from([1.0, 2.0, 3.0]), st.sampled_from([3, 5, 9]))
def test_random_bases_obey_support_and_mass(l11, l21, l22, r, h):
    bank = build_bank([CholeskyParams(l11, l21, l22)], r=r, h=h, w=h)
    assert bank.rasters.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(bank.rasters[~bank.support()] == 0)
