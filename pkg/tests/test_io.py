import numpy as np
import pytest

from chmorley.io import load_dofs, read_header, save_dofs
from chmorley.mesh import Mesh, build_uniform_mesh
from chmorley.morley import MorleyFunction


def test_roundtrip_is_exact(tmp_path, rng):
    m = build_uniform_mesh(5, (0.0, 2.0, -1.0, 0.5))
    u = MorleyFunction(m, rng.normal(size=m.n_dofs))
    save_dofs(tmp_path / "u.dof", u)
    meta = read_header(tmp_path / "u.dof")
    assert meta == {"n": 5, "domain": (0.0, 2.0, -1.0, 0.5), "ndofs": m.n_dofs}
    back = load_dofs(tmp_path / "u.dof")
    assert np.array_equal(back.coefficients, u.coefficients)
    assert np.array_equal(back.mesh.vertices, m.vertices)


def test_bad_files(tmp_path):
    (tmp_path / "x.dof").write_text("1\n2\n")
    with pytest.raises(ValueError):
        load_dofs(tmp_path / "x.dof")
    m = build_uniform_mesh(1)
    (tmp_path / "y.dof").write_text("# chmorley-dofs n=1 domain=-1,1,-1,1 ndofs=9\n1\n2\n")
    with pytest.raises(ValueError):
        load_dofs(tmp_path / "y.dof")
    bare = Mesh.from_elements(m.vertices, m.elements)
    with pytest.raises(ValueError):
        save_dofs(tmp_path / "z.dof", MorleyFunction(bare, np.zeros(bare.n_dofs)))
