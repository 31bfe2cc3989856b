import math

import numpy as np
import pytest

from thresholdlab import (
    BoundarySpec,
    FieldPair,
    RadialBall,
    Rectangle,
    build_grid,
    build_laplacian,
    dirichlet_energy,
    integrate,
    interval_grid,
    solve_shifted,
)
from thresholdlab.discrete import GridError

DIRICHLET = BoundarySpec.dirichlet()
DISK = RadialBall(2, 1.0)


def disk_operator(n, boundary=DIRICHLET):
    grid = build_grid(DISK, boundary, n)
    return grid, build_laplacian(grid)


class TestBuildGrid:
    def test_radial_weight_formula(self):
        grid = build_grid(DISK, DIRICHLET, 4)
        # node r = 0.5 carries sigma * r * h = 2*pi * 0.5 * 0.25
        i = np.argmin(np.abs(grid.coords - 0.5))
        assert grid.weights[i] == pytest.approx(math.pi / 4, rel=1e-14)

    def test_radial_volume(self):
        grid = build_grid(DISK, DIRICHLET, 512)
        h = grid.h[0]
        assert abs(grid.volume - math.pi) <= math.pi * h**2

    def test_radial_volume_n3(self):
        grid = build_grid(RadialBall(3, 1.0), DIRICHLET, 256)
        h = grid.h[0]
        assert abs(grid.volume - 4 * math.pi / 3) <= 4 * math.pi / 3 * h**2

    def test_robin_volume(self):
        grid = build_grid(DISK, BoundarySpec.robin(1.0), 256)
        h = grid.h[0]
        assert grid.size == 257
        assert abs(grid.volume - math.pi) <= math.pi * h**2

    def test_rectangle_interior_nodes(self):
        grid = build_grid(Rectangle(1.0, 1.0), DIRICHLET, (8, 8))
        assert grid.size == 49
        np.testing.assert_allclose(grid.weights, 1 / 64)

    def test_positive_weights(self):
        for grid in (
            build_grid(DISK, DIRICHLET, 64),
            build_grid(DISK, BoundarySpec.robin(2.0), 64),
            build_grid(Rectangle(1.0, 2.0), DIRICHLET, (8, 16)),
            interval_grid(1.0, 16),
        ):
            assert np.all(grid.weights > 0)

    def test_resolution_too_small(self):
        with pytest.raises(GridError):
            build_grid(DISK, DIRICHLET, 3)

    def test_rectangle_robin_unsupported(self):
        with pytest.raises(GridError):
            build_grid(Rectangle(1.0, 1.0), BoundarySpec.robin(1.0), 8)


class TestOperator:
    def test_interval_debug_stencil(self):
        grid = interval_grid(1.0, 4)  # h = 0.25, interior nodes at 0.25, 0.5, 0.75
        A = build_laplacian(grid)
        u = np.array([1.0, 2.0, 1.0])
        assert A.apply(u)[1] == pytest.approx((2 * 2 - 1 - 1) / 0.25**2)

    def test_duality_all_grids(self, rng):
        grids = [
            build_grid(DISK, DIRICHLET, 128),
            build_grid(DISK, BoundarySpec.robin(1.0), 128),
            build_grid(RadialBall(3, 1.0), DIRICHLET, 96),
            build_grid(Rectangle(1.0, 1.0), DIRICHLET, (24, 24)),
            interval_grid(1.0, 64),
        ]
        for grid in grids:
            A = build_laplacian(grid)
            for _ in range(20):
                x = rng.standard_normal(grid.size)
                y = rng.standard_normal(grid.size)
                gap = abs(integrate(grid, A.apply(x) * y) - integrate(grid, x * A.apply(y)))
                assert gap <= 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_m_matrix_structure(self):
        for grid in (
            build_grid(DISK, DIRICHLET, 64),
            build_grid(DISK, BoundarySpec.robin(1.0), 64),
            build_grid(Rectangle(1.0, 1.0), DIRICHLET, (12, 12)),
        ):
            K = build_laplacian(grid).K.tocoo()
            diag = K.diagonal()
            assert np.all(diag > 0)
            off = K.data[K.row != K.col]
            assert np.all(off <= 0)

    def test_parabola_exact_in_disk_interior(self):
        # -Lap(1 - r^2) = 4 in two dimensions; the radial rows reproduce it
        # exactly away from the boundary cell (which also owns the boundary
        # half-cell quadrature mass, trading pointwise consistency there).
        grid, A = disk_operator(128)
        values = A.apply(1 - grid.coords**2)
        np.testing.assert_allclose(values[:-1], 4.0, atol=1e-9)

    def test_parabola_n3(self):
        # -Lap(1 - r^2) = 2N = 6 in three dimensions; the shell-volume
        # weights make the flux-difference rows exact on quadratics as well
        grid = build_grid(RadialBall(3, 1.0), DIRICHLET, 96)
        A = build_laplacian(grid)
        np.testing.assert_allclose(A.apply(1 - grid.coords**2)[:-1], 6.0, atol=1e-9)


class TestSolveShifted:
    def test_zero_rhs(self):
        _, A = disk_operator(64)
        np.testing.assert_array_equal(solve_shifted(A, 0.0, np.zeros(A.grid.size)), 0.0)

    def test_poisson_disk_refinement(self):
        errs = []
        for n in (128, 256, 512):
            grid, A = disk_operator(n)
            x = solve_shifted(A, 0.0, np.full(grid.size, 4.0))
            errs.append(np.max(np.abs(x - (1 - grid.coords**2))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)

    def test_random_rhs_residual(self, rng):
        grid, A = disk_operator(128)
        for sigma in (0.0, 1.0, 7.5):
            rhs = rng.standard_normal(grid.size)
            x = solve_shifted(A, sigma, rhs)
            res = np.linalg.norm(sigma * x + A.apply(x) - rhs)
            assert res <= 1e-12 * np.linalg.norm(rhs)

    def test_multiple_rhs(self, rng):
        grid, A = disk_operator(64)
        rhs = rng.standard_normal((grid.size, 2))
        x = solve_shifted(A, 0.3, rhs)
        for j in range(2):
            np.testing.assert_allclose(x[:, j], solve_shifted(A, 0.3, rhs[:, j]), rtol=1e-12)

    def test_negative_sigma_rejected(self):
        _, A = disk_operator(64)
        with pytest.raises(ValueError):
            solve_shifted(A, -0.1, np.ones(A.grid.size))

    def test_maximum_principle(self, rng):
        for boundary in (DIRICHLET, BoundarySpec.robin(1.0)):
            grid, A = disk_operator(128, boundary)
            for sigma in (0.0, 2.0):
                rhs = rng.uniform(0.0, 1.0, grid.size)
                assert solve_shifted(A, sigma, rhs).min() >= -1e-14

    def test_rectangle_poisson(self):
        # u = sin(pi x) sin(pi y), -Lap u = 2 pi^2 u on the unit square
        errs = []
        for n in (16, 32):
            grid = build_grid(Rectangle(1.0, 1.0), DIRICHLET, (n, n))
            A = build_laplacian(grid)
            exact = np.sin(np.pi * grid.coords[:, 0]) * np.sin(np.pi * grid.coords[:, 1])
            x = solve_shifted(A, 0.0, 2 * np.pi**2 * exact)
            errs.append(np.max(np.abs(x - exact)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


class TestQuadrature:
    def test_constant_over_disk(self):
        grid, _ = disk_operator(256)
        assert integrate(grid, np.ones(grid.size)) == pytest.approx(math.pi, rel=1e-4)

    def test_zero(self):
        grid, _ = disk_operator(64)
        assert integrate(grid, np.zeros(grid.size)) == 0.0

    def test_parabola_integral_refinement(self):
        # integral of (1 - r^2) over the unit disk is pi/2
        errs = []
        for n in (128, 256):
            grid, _ = disk_operator(n)
            errs.append(abs(integrate(grid, 1 - grid.coords**2) - math.pi / 2))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)

    def test_length_mismatch(self):
        grid, _ = disk_operator(64)
        with pytest.raises(ValueError):
            integrate(grid, np.ones(grid.size + 1))


class TestDirichletEnergy:
    def test_zero(self):
        grid, A = disk_operator(64)
        assert dirichlet_energy(grid, A, np.zeros(grid.size), np.zeros(grid.size)) == 0.0

    def test_exact_symmetry(self, rng):
        grid, A = disk_operator(128)
        for _ in range(20):
            x = rng.standard_normal(grid.size)
            y = rng.standard_normal(grid.size)
            assert dirichlet_energy(grid, A, x, y) == dirichlet_energy(grid, A, y, x)

    def test_parabola_gradient_integral(self):
        # integral of |grad(1 - r^2)|^2 = 2*pi*int_0^1 (2r)^2 r dr = 2*pi
        errs = []
        for n in (128, 256):
            grid, A = disk_operator(n)
            parab = 1 - grid.coords**2
            errs.append(abs(dirichlet_energy(grid, A, parab, parab) - 2 * math.pi))
        assert errs[0] <= 0.02
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.5)


class TestFieldPair:
    def test_length_checked(self):
        grid, _ = disk_operator(64)
        with pytest.raises(ValueError):
            FieldPair(np.zeros(3), np.zeros(3), grid)

    def test_helpers(self):
        grid, _ = disk_operator(64)
        pair = FieldPair.zeros(grid)
        assert pair.sup == 0.0
        scaled = FieldPair(np.ones(grid.size), 2 * np.ones(grid.size), grid).scaled(0.5)
        assert scaled.sup_u == 0.5 and scaled.sup_v == 1.0
