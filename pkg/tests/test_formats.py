"""Round trips of every file format."""

import numpy as np
import pytest

from ospca import formats
from ospca.decomposition import EUCLIDEAN, MetricDescriptor, SampleMatrix, SpectralBasis
from ospca.reservoir import default_case, simulate


def test_basis_roundtrip_euclidean(tmp_path, rng):
    basis = SpectralBasis(rng.normal(size=(6, 3)), [3.0, 2.0, 1e-300], EUCLIDEAN, [2, 0, 1])
    path = formats.write_basis(tmp_path / "b.txt", basis)
    back = formats.read_basis(path)
    assert np.array_equal(back.components, basis.components)
    assert np.array_equal(back.singular_values, basis.singular_values)
    assert back.metric.is_euclidean
    np.testing.assert_array_equal(back.source_index, [2, 0, 1])
    assert path.read_text().splitlines()[0] == "OSPCA-BASIS v1 d=6 m=3 metric=euclidean source=2,0,1"


def test_basis_roundtrip_gradient(tmp_path, rng):
    J = rng.normal(size=5)
    basis = SpectralBasis(rng.normal(size=(5, 2)), [1.0, 0.5], MetricDescriptor(J, 0.25))
    formats.write_basis(tmp_path / "g.txt", basis)
    assert (tmp_path / "g.J.txt").exists()
    back = formats.read_basis(tmp_path / "g.txt")
    assert np.array_equal(back.metric.J, J)
    assert back.metric.epsilon == 0.25
    assert back.source_index is None


@pytest.mark.parametrize("text", ["NOPE v1 d=1 m=1 metric=euclidean\n1\n1\n",
                                  "OSPCA-BASIS v1 d=2 m=1 metric=euclidean\n1\n1\n",
                                  "OSPCA-BASIS v1 d=1 m=1 metric=weird\n1\n1\n"])
def test_basis_rejects(tmp_path, text):
    (tmp_path / "x.txt").write_text(text)
    with pytest.raises(ValueError):
        formats.read_basis(tmp_path / "x.txt")


def test_vector_roundtrip(tmp_path, rng):
    v = rng.normal(size=7)
    formats.write_vector(tmp_path / "v.txt", v)
    assert np.array_equal(formats.read_vector(tmp_path / "v.txt"), v)


def test_spectrum_csv(tmp_path):
    formats.write_spectrum_csv(tmp_path / "s.csv", [3.0, 1.0, 1.0])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,sigma,omega"
    assert lines[1] == "1,3,0.59999999999999998"
    assert lines[3] == "3,1,1"


def test_dataset_roundtrip(tmp_path, rng):
    s = SampleMatrix(rng.normal(size=(6, 4)), (2, 3))
    formats.write_dataset_csv(tmp_path / "d.csv", s)
    back = formats.read_dataset_csv(tmp_path / "d.csv")
    assert back.grid_shape == (2, 3)
    assert np.array_equal(back.data, s.data)


def test_dataset_header_required(tmp_path):
    (tmp_path / "d.csv").write_text("1,2\n")
    with pytest.raises(ValueError):
        formats.read_dataset_csv(tmp_path / "d.csv")


def test_pgm_roundtrip(tmp_path, rng):
    grid = rng.normal(size=(5, 7))
    formats.write_pgm(tmp_path / "r.pgm", grid)
    back = formats.read_pgm(tmp_path / "r.pgm")
    assert back.shape == (5, 7)
    span = grid.max() - grid.min()
    assert np.max(np.abs(back - grid)) <= span / 65535
    head = (tmp_path / "r.pgm").read_text().splitlines()
    assert head[0] == "P2" and head[2] == "7 5" and head[3] == "65535"


def test_case_roundtrip(tmp_path):
    case = default_case()
    formats.write_case(tmp_path / "c.ini", case)
    back = formats.read_case(tmp_path / "c.ini")
    assert back.grid == case.grid
    assert back.wells == case.wells
    mu = np.full(441, 1.5)
    np.testing.assert_array_equal(simulate(back, mu), simulate(case, mu))


def test_case_well_syntax(tmp_path):
    (tmp_path / "c.ini").write_text("[grid]\nnx=3\nny=3\n[wells]\nA = injector, 1, 1, 2e7\n")
    with pytest.raises(ValueError):
        formats.read_case(tmp_path / "c.ini")
    with pytest.raises(FileNotFoundError):
        formats.read_case(tmp_path / "missing.ini")


def test_rates_csv(tmp_path):
    case = default_case()
    formats.write_rates_csv(tmp_path / "r.csv", case, np.arange(5.0))
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "well,role,rate_m3_per_s"
    assert lines[1] == "INJ,injector,0"
    assert lines[5] == "PROD4,producer,4"
