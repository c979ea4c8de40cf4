import numpy as np
import pytest

from ergolab import (
    GridFunction,
    builtin_map,
    duality_residual,
    invariant_density,
    koopman_apply,
    lp_norm,
    make_backend,
    resolve_measure,
    transfer_apply,
    transfer_power,
    ulam_matrix,
)
from ergolab.errors import InvalidInputError
from ergolab.transfer import stationary_vector


def test_ulam_doubling_rows():
    m = builtin_map("doubling")
    u = ulam_matrix(m, 16)
    dense = u.matrix.toarray()
    # cell i maps onto cells 2i and 2i+1 (mod 16), half mass each
    for i in range(16):
        row = dense[i]
        assert np.isclose(row[(2 * i) % 16], 0.5)
        assert np.isclose(row[(2 * i + 1) % 16], 0.5)
    assert u.row_sum_defect() < 1e-14


def test_ulam_rejects_tiny_grids():
    with pytest.raises(InvalidInputError):
        ulam_matrix(builtin_map("doubling"), 8)


def test_stationary_vector_doubling_uniform():
    m = builtin_map("doubling")
    u = ulam_matrix(m, 64)
    p = stationary_vector(u)
    assert np.allclose(p, 1.0 / 64, atol=1e-10)


def test_invariant_density_lsv_shape():
    # density decreasing, divergent near the neutral point
    nu = invariant_density(builtin_map("lsv:0.5"), 1024)
    assert nu.values[0] > nu.values[10] > nu.values[500]
    assert abs(nu.masses.sum() - 1.0) < 1e-12


def test_ulam_text_header():
    u = ulam_matrix(builtin_map("doubling"), 16)
    assert u.to_text().startswith("# ulam N=16 map=doubling")


@pytest.mark.parametrize("spec", ["doubling", "chebyshev:2", "lsv:0.25"])
def test_backend_structural_properties(spec, rng):
    m = builtin_map(spec)
    nu = resolve_measure(m, m.default_grid(1024))
    op = make_backend(m, nu)
    ones = np.ones(1024)
    assert np.allclose(op.apply(ones), 1.0, atol=1e-9)
    v = rng.normal(size=1024)
    # mean preservation, exact by construction in both backends
    assert abs(v @ op.measure.masses - op.apply(v) @ op.measure.masses) < 1e-12
    # L^p contraction
    for p in (1, 2):
        before = lp_norm(GridFunction(nu.grid, v, op.measure), p)
        after = lp_norm(GridFunction(nu.grid, op.apply(v), op.measure), p)
        assert after <= before + 1e-9


def test_backend_selection():
    cheb = builtin_map("chebyshev:2")
    nu = resolve_measure(cheb, cheb.default_grid(256))
    assert make_backend(cheb, nu).kind == "branch"
    lsv = builtin_map("lsv:0.25")
    nu2 = resolve_measure(lsv, lsv.default_grid(256))
    assert make_backend(lsv, nu2).kind == "ulam"
    with pytest.raises(InvalidInputError):
        make_backend(cheb, nu, kind="spectral")


def test_doubling_fourier_cascade(doubling, doubling_nu):
    # P cos(4 pi y) = cos(2 pi y), P cos(2 pi y) = 0
    nodes = doubling_nu.grid.nodes
    c2 = GridFunction(doubling_nu.grid, np.cos(4 * np.pi * nodes), doubling_nu)
    c1 = GridFunction(doubling_nu.grid, np.cos(2 * np.pi * nodes), doubling_nu)
    assert lp_norm(transfer_apply(doubling, doubling_nu, c2) - c1, 2) < 1e-6
    assert lp_norm(transfer_apply(doubling, doubling_nu, c1), 2) < 1e-7


def test_chebyshev_odd_annihilation(cheb2, cheb2_nu):
    h = GridFunction.from_callable(lambda y: y, cheb2_nu)
    assert lp_norm(transfer_apply(cheb2, cheb2_nu, h), 2) < 1e-12


def test_chebyshev_branch_average_formula(cheb2, cheb2_nu):
    f = GridFunction.from_callable(
        lambda y: np.cos(np.pi * y) + 0.5 * y**3, cheb2_nu
    )
    pf = transfer_apply(cheb2, cheb2_nu, f)
    s = np.sqrt((cheb2_nu.grid.nodes + 1.0) / 2.0)
    explicit = 0.5 * (f.interpolate(s) + f.interpolate(-s))
    assert np.max(np.abs(pf.values - explicit)) < 1e-6


def test_koopman_isometry(cheb2, cheb2_nu):
    f = GridFunction.from_callable(
        lambda y: np.sin(2 * np.pi * y) + 0.2 * y, cheb2_nu
    )
    uf = koopman_apply(cheb2, f)
    assert abs(lp_norm(uf, 2) - lp_norm(f, 2)) < 2e-3


def test_transfer_undoes_koopman(doubling, doubling_nu):
    f = GridFunction.from_callable(lambda y: np.cos(2 * np.pi * y) + y**2,
                                   doubling_nu)
    puf = transfer_apply(doubling, doubling_nu, koopman_apply(doubling, f))
    assert lp_norm(puf - f, 2) < 5e-3


def test_transfer_power_matches_repeated_apply(doubling, doubling_nu):
    f = GridFunction.from_callable(lambda y: np.sin(2 * np.pi * y), doubling_nu)
    powers = transfer_power(doubling, doubling_nu, f, 3)
    v = f
    for p in powers:
        v = transfer_apply(doubling, doubling_nu, v)
        # transfer_power returns P f, P^2 f, ... in order
    assert len(powers) == 3
    assert np.allclose(
        powers[1].values,
        transfer_apply(doubling, doubling_nu, powers[0]).values,
    )


def test_duality_residual_small_and_refining():
    vals = {}
    for N in (2048, 8192):
        for spec in ("doubling", "chebyshev:2"):
            m = builtin_map(spec)
            nu = resolve_measure(m, m.default_grid(N))
            f = GridFunction.from_callable(
                lambda y: np.cos(np.pi * y) + 0.4 * np.sin(2 * np.pi * y), nu
            )
            g = GridFunction.from_callable(
                lambda y: np.sin(np.pi * y) - 0.2 * np.cos(2 * np.pi * y), nu
            )
            vals[(spec, N)] = max(
                duality_residual(m, nu, f, g, n) for n in (1, 2, 3)
            )
            assert vals[(spec, N)] < 5e-4
    for spec in ("doubling", "chebyshev:2"):
        # refinement must shrink the residual unless it already sits at
        # machine precision on the coarse grid
        if vals[(spec, 2048)] > 1e-12:
            assert vals[(spec, 2048)] / vals[(spec, 8192)] > 3.0


def test_duality_residual_zero_steps(doubling, doubling_nu):
    f = GridFunction.from_callable(lambda y: y, doubling_nu)
    assert duality_residual(doubling, doubling_nu, f, f, 0) == 0.0
