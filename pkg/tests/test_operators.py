import numpy as np
import pytest

from erzefoz.operators import angular_momentum, basis_labels, build_spin_operators


def commutator(a, b):
    return a @ b - b @ a


def test_sz_eigenvalues():
    ops = build_spin_operators()
    assert np.allclose(sorted(np.linalg.eigvalsh(ops.Sz)), [-0.5, 0.5])


def test_iz_eigenvalues():
    ops = build_spin_operators()
    expected = np.arange(-3.5, 4.0, 1.0)
    assert np.allclose(sorted(np.linalg.eigvalsh(ops.Iz)), expected)


@pytest.mark.parametrize("j", [0.5, 1.0, 1.5, 3.5])
def test_commutation_relations(j):
    jx, jy, jz = angular_momentum(j)
    for a, b, c in ((jx, jy, jz), (jy, jz, jx), (jz, jx, jy)):
        assert np.abs(commutator(a, b) - 1j * c).max() < 1e-12


def test_casimir_values():
    ops = build_spin_operators()
    s2 = sum(op @ op for op in ops.electron)
    i2 = sum(op @ op for op in ops.nuclear)
    assert np.allclose(s2, 0.75 * np.eye(2), atol=1e-12)
    assert np.allclose(i2, (63.0 / 4.0) * np.eye(8), atol=1e-12)


def test_operators_hermitian():
    ops = build_spin_operators()
    for op in ops.electron + ops.nuclear:
        assert np.abs(op - op.conj().T).max() < 1e-12


def test_product_space_commutes_across_subsystems():
    S16, I16 = build_spin_operators().product_space()
    for s in S16:
        for i in I16:
            assert np.abs(commutator(s, i)).max() < 1e-12


def test_basis_labels_order():
    labels = basis_labels()
    assert len(labels) == 16
    assert labels[0] == (0.5, 3.5)
    assert labels[7] == (0.5, -3.5)
    assert labels[8] == (-0.5, 3.5)
    assert labels[15] == (-0.5, -3.5)
