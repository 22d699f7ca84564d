import numpy as np
import pytest

from spopo.fixtures import (
    FIXTURE_NOTE,
    REFERENCE_SQUEEZING,
    build_fixture_bundle,
    fixture_basis,
    reference_state,
)
from spopo.pipeline import assemble_covariance
from spopo.witnesses import purity


def test_labelled_synthetic(fixture_bundle):
    assert fixture_bundle.note == FIXTURE_NOTE
    assert "not measured" in fixture_bundle.note


def test_complete(fixture_bundle):
    assert fixture_bundle.missing_shapes() == []
    assert fixture_bundle.n_bands == 10


def test_shipped_matches_rebuild(fixture_bundle):
    fresh = build_fixture_bundle().levels()
    shipped = fixture_bundle.levels()
    assert np.allclose(shipped.x_mean, fresh.x_mean, rtol=1e-9)
    assert np.allclose(shipped.p_var, fresh.p_var, rtol=1e-6, atol=1e-12)


def test_basis_orthonormal():
    m = fixture_basis()
    assert np.abs(m.T @ m - np.eye(10)).max() < 1e-10


def test_mean_state_is_reference(fixture_bundle):
    ref = reference_state(fixture_basis())
    got = assemble_covariance(fixture_bundle)
    assert np.allclose(got.cx, ref.cx, atol=1e-9)
    assert np.allclose(got.cp, ref.cp, atol=1e-9)
    # the reference spectrum is diagonal, so purity follows from the products
    anti = np.array([3.86, 3.62, 2.74, 1.96, 1.41, 1.17, 1.11, 1.06, 1.03, 1.00])
    expect = 1 / np.sqrt(np.prod(REFERENCE_SQUEEZING[:, 0] * anti))
    assert purity(got) == pytest.approx(expect, rel=1e-9)
