"""Self-duality and complex-variation equations on the Hitchin section.

The metric is ``h = diag(e^u, e^-u)`` with

    Laplacian(u) = 4 (e^{2u} - e^{-2u} |P|^2),      P = z^2 + 2m,

and a variation of m gives the complex field F solving

    (Laplacian - 8 (e^{2u} + e^{-2u}|P|^2)) F + 8 e^{-2u} conj(P) Pdot = 0.

Two discretizations are provided.  ``CartesianGrid`` is a second-order
five-point scheme on a square grid with the disc |z| < R_dom cut out of
it.  ``EllipticGrid`` uses the coordinates z = c cosh(mu + i nu), where the
Jacobian equals |P| and every field, including the difference of the
metric integrands, is smooth; a Chebyshev-Fourier collocation there
converges spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import sparse
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import cg, spsolve

from .core import DegenerateDifferentialError, branch_points, _check_m


class NewtonDivergenceError(RuntimeError):
    pass


class ConditioningError(RuntimeError):
    pass


class DomainTooSmallError(ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    pass


def u_sf(z, m: complex):
    z = np.asarray(z, dtype=complex)
    return 0.5 * np.log(np.abs(z * z + 2 * m))


def F_sf(z, m: complex, m_dot: complex):
    z = np.asarray(z, dtype=complex)
    return (2 * m_dot) / (2 * (z * z + 2 * m))


def _initial_u(z, m: complex):
    eps = abs(2 * m) ** 0.5 / 10
    P = np.asarray(z, dtype=complex) ** 2 + 2 * m
    return 0.25 * np.log(eps ** 2 + np.abs(P) ** 2)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class CartesianGrid:
    """n x n nodes on [-R_dom, R_dom]^2; nodes with |z| >= R_dom are Dirichlet."""

    n: int
    R_dom: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("grid too coarse")
        if not self.R_dom > 0:
            raise ValueError("R_dom must be positive")

    @property
    def h(self) -> float:
        return 2 * self.R_dom / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.R_dom, self.R_dom, self.n)

    def nodes(self) -> np.ndarray:
        x = self.x
        return x[:, None] + 1j * x[None, :]

    def interior(self) -> np.ndarray:
        Z = self.nodes()
        mask = np.abs(Z) < self.R_dom
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
        return mask


@dataclass(frozen=True)
class EllipticGrid:
    """Chebyshev nodes in mu on [-mu_max, mu_max], Fourier nodes in nu.

    The map (mu, nu) -> c cosh(mu + i nu) covers the ellipse twice;
    fields are even under (mu, nu) -> (-mu, -nu).
    """

    mu_max: float
    n_mu: int
    n_nu: int

    def __post_init__(self):
        if self.n_mu < 4 or self.n_nu < 4 or self.n_nu % 2:
            raise ValueError("n_mu >= 4 and even n_nu >= 4 required")

    @classmethod
    def for_radius(cls, m: complex, R_dom: float, n_mu: int = 64, n_nu: int = 64) -> "EllipticGrid":
        """Grid whose outer ellipse contains the disc |z| < R_dom."""
        c = abs(branch_points(m)[0])
        return cls(float(np.arcsinh(R_dom / c)), n_mu, n_nu)

    @property
    def mu(self) -> np.ndarray:
        return self.mu_max * np.cos(np.pi * np.arange(self.n_mu + 1) / self.n_mu)

    @property
    def nu(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_nu) / self.n_nu

    def xi(self) -> np.ndarray:
        return self.mu[:, None] + 1j * self.nu[None, :]

    def R_inner(self, m: complex) -> float:
        """Radius of the largest disc inside the outer ellipse."""
        c = abs(branch_points(m)[0])
        return c * math.sinh(self.mu_max)


def _cheb(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev points cos(pi j/N) and the differentiation matrix."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def _fourier_d2(N: int) -> np.ndarray:
    """Second-derivative matrix for N equispaced points on [0, 2pi), N even."""
    k = np.arange(N)
    col = np.empty(N)
    col[0] = -np.pi ** 2 / (3 * (2 * np.pi / N) ** 2) - 1 / 6
    kk = k[1:]
    col[1:] = -0.5 * (-1.0) ** kk / np.sin(np.pi * kk / N) ** 2
    return col[(k[:, None] - k[None, :]) % N]


def _fourier_d1(N: int) -> np.ndarray:
    k = np.arange(N)
    col = np.zeros(N)
    kk = k[1:]
    col[1:] = 0.5 * (-1.0) ** kk / np.tan(np.pi * kk / N)
    return col[(k[:, None] - k[None, :]) % N]


@dataclass
class GridField:
    """Values of a field on a grid together with its Dirichlet record."""

    grid: object
    values: np.ndarray
    m: complex
    boundary: str
    residual: float = math.nan
    iterations: int = 0
    _interp: object = field(default=None, repr=False, compare=False)

    # -- evaluation ---------------------------------------------------------

    def value(self, z):
        return self._evaluate(z)[0]

    def dz(self, z):
        """Wirtinger derivative d/dz of a real field."""
        return self._evaluate(z, derivative=True)[1]

    def _evaluate(self, z, derivative: bool = False):
        z = np.asarray(z, dtype=complex)
        if isinstance(self.grid, CartesianGrid):
            if self._interp is None:
                x = self.grid.x
                self._interp = [RectBivariateSpline(x, x, self.values.real, kx=3, ky=3)]
                if np.iscomplexobj(self.values):
                    self._interp.append(RectBivariateSpline(x, x, self.values.imag, kx=3, ky=3))
            out = []
            for sp in self._interp:
                v = sp.ev(z.real, z.imag)
                if derivative:
                    out.append((v, 0.5 * (sp.ev(z.real, z.imag, dx=1) - 1j * sp.ev(z.real, z.imag, dy=1))))
                else:
                    out.append((v, None))
            if len(out) == 1:
                return out[0]
            return out[0][0] + 1j * out[1][0], None
        return _elliptic_eval(self, z, derivative)


def _elliptic_eval(f: GridField, z, derivative: bool):
    c = branch_points(f.m)[0]
    z = np.asarray(z, dtype=complex)
    xi = np.arccosh(z / c)
    val, u_mu, u_nu = _eval_xi(f, xi.real, xi.imag, derivative)
    if not derivative:
        return val, None
    dzdxi = (c * np.sinh(xi))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 0.5 * (u_mu - 1j * u_nu) / dzdxi
    bad = np.abs(dzdxi) < 1e-6 * abs(c)
    if np.any(bad):
        # at the branch points fall back to a central difference in z
        zb = z[bad]
        hh = 1e-5 * abs(c)
        fx = (_elliptic_eval(f, zb + hh, False)[0] - _elliptic_eval(f, zb - hh, False)[0]) / (2 * hh)
        fy = (_elliptic_eval(f, zb + 1j * hh, False)[0] - _elliptic_eval(f, zb - 1j * hh, False)[0]) / (2 * hh)
        d = np.array(d)
        d[bad] = 0.5 * (fx - 1j * fy)
    return val, d


def _eval_xi(f: GridField, mu, nu, derivative: bool = False):
    """Spectral interpolant and its (mu, nu) derivatives at xi = mu + i nu."""
    g = f.grid
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    shape = np.broadcast(mu, nu).shape
    mu, nu = np.broadcast_to(mu, shape).ravel(), np.broadcast_to(nu, shape).ravel()
    # fields are even under xi -> -xi
    flip = mu < 0
    mu = np.where(flip, -mu, mu)
    nu = np.where(flip, -nu, nu)
    if f._interp is None:
        f._interp = _elliptic_coeffs(f.values)
    C = f._interp
    n = np.arange(C.shape[0])
    th = np.arccos(np.clip(mu / g.mu_max, -1.0, 1.0))
    Tn = np.cos(np.outer(th, n))
    Nn = g.n_nu
    k = np.fft.fftfreq(Nn, 1.0 / Nn)
    kn = k.copy()
    kn[Nn // 2] = Nn // 2
    E = np.exp(1j * np.outer(nu, k))
    # the Nyquist mode is a cosine so that real data stay real
    E[:, Nn // 2] = np.cos(nu * (Nn // 2))
    A = Tn @ C
    real = not np.iscomplexobj(f.values)
    val = np.sum(A * E, axis=1)
    if real:
        val = val.real
    if not derivative:
        return val.reshape(shape), None, None
    st = np.sin(th)
    with np.errstate(divide="ignore", invalid="ignore"):
        dT = n[None, :] * np.sin(np.outer(th, n)) / st[:, None]
    # limits at the endpoints s = +-1
    end = np.abs(st) < 1e-12
    if np.any(end):
        sgn = np.sign(np.cos(th[end]))
        dT[end] = (n[None, :] ** 2) * sgn[:, None] ** (n[None, :] + 1)
    dE = 1j * k[None, :] * E
    dE[:, Nn // 2] = -(Nn // 2) * np.sin(nu * (Nn // 2))
    u_mu = np.sum((dT @ C) * E, axis=1) / g.mu_max
    u_nu = np.sum(A * dE, axis=1)
    sgn = np.where(flip, -1.0, 1.0)
    u_mu, u_nu = sgn * u_mu, sgn * u_nu
    if real:
        u_mu, u_nu = u_mu.real, u_nu.real
    return val.reshape(shape), u_mu.reshape(shape), u_nu.reshape(shape)


def _elliptic_coeffs(V: np.ndarray) -> np.ndarray:
    """Chebyshev (rows) by Fourier (columns) coefficients of nodal values."""
    V = np.asarray(V)
    N = V.shape[0] - 1
    Vf = np.fft.fft(V, axis=1) / V.shape[1]
    # type-I DCT through the even extension
    ext = np.concatenate([Vf, Vf[-2:0:-1]], axis=0)
    C = np.fft.fft(ext, axis=0)[: N + 1] / N
    C[0] /= 2
    C[N] /= 2
    return C


# ---------------------------------------------------------------------------
# Cartesian solver


def _laplacian(grid: CartesianGrid, mask: np.ndarray):
    """Five-point Laplacian on interior nodes; returns (L, boundary operator)."""
    n = grid.n
    idx = -np.ones((n, n), dtype=int)
    idx[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    h2 = grid.h ** 2
    I, J = np.nonzero(mask)
    k = idx[I, J]
    rows.append(k)
    cols.append(k)
    vals.append(np.full(k.size, -4.0 / h2))
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        I2, J2 = I + di, J + dj
        nb = idx[I2, J2]
        inside = nb >= 0
        rows.append(k[inside])
        cols.append(nb[inside])
        vals.append(np.full(inside.sum(), 1.0 / h2))
        brows.append(k[~inside])
        bcols.append(I2[~inside] * n + J2[~inside])
        bvals.append(np.full((~inside).sum(), 1.0 / h2))
    N = int(mask.sum())
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
    B = sparse.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))),
                          shape=(N, n * n))
    return L, B


def _spd_solve(A, b, tol=1e-12):
    """Solve A x = b for symmetric negative-definite A."""
    d = -A.diagonal()
    M = sparse.diags(1.0 / d)
    x, info = cg(-A, -b, rtol=tol, atol=0.0, M=M, maxiter=20000)
    if info != 0:
        x = spsolve(A.tocsc(), b)
    return x


def _newton(residual, jacobian, u0, tol, max_iter, scale):
    """Damped Newton with backtracking on the residual norm."""
    u = u0.copy()
    r = residual(u)
    nr = np.max(np.abs(r / scale(u)))
    for it in range(1, max_iter + 1):
        du = jacobian(u, -r)
        t = 1.0
        while True:
            un = u + t * du
            rn = residual(un)
            nrn = np.max(np.abs(rn / scale(un)))
            if np.isfinite(nrn) and (nrn < nr or nrn < tol):
                break
            t *= 0.5
            if t < 1e-6:
                raise NewtonDivergenceError("line search failed")
        u, r, nr = un, rn, nrn
        if nr < tol:
            return u, nr, it
    raise NewtonDivergenceError(f"no convergence after {max_iter} iterations (residual {nr:.2e})")


def _solve_u_cartesian(m, grid: CartesianGrid, tol, max_iter, u_init=None):
    Z = grid.nodes()
    mask = grid.interior()
    L, B = _laplacian(grid, mask)
    P2 = np.abs(Z[mask] ** 2 + 2 * m) ** 2
    full = u_sf(np.where(mask, 1.0 + 0j, Z), m).real  # boundary data, placeholder inside
    full[mask] = 0.0
    bvec = B @ full.ravel()
    u0 = _initial_u(Z[mask], m) if u_init is None else u_init

    def residual(u):
        return L @ u + bvec - 4 * (np.exp(2 * u) - np.exp(-2 * u) * P2)

    def jac(u, rhs):
        q = 8 * (np.exp(2 * u) + np.exp(-2 * u) * P2)
        return _spd_solve(L - sparse.diags(q), rhs)

    def scale(u):
        return 1 + 4 * (np.exp(2 * u) + np.exp(-2 * u) * P2)

    u, res, it = _newton(residual, jac, u0, tol, max_iter, scale)
    out = u_sf(np.where(mask, 1.0 + 0j, Z), m).real
    out[mask] = u
    return out, res, it


# ---------------------------------------------------------------------------
# elliptic solver


class _EllipticOps:
    def __init__(self, grid: EllipticGrid, m: complex):
        self.grid = grid
        x, D = _cheb(grid.n_mu)
        D = D / grid.mu_max
        D2 = D @ D
        self.D2 = D2
        Nm, Nn = grid.n_mu + 1, grid.n_nu
        self.inner = slice(1, Nm - 1)
        Dn2 = _fourier_d2(Nn)
        Ii = np.eye(Nm - 2)
        In = np.eye(Nn)
        self.L = np.kron(D2[1:-1, 1:-1], In) + np.kron(Ii, Dn2)
        # columns of D2 for the two boundary rows
        self.Lb = [np.kron(D2[1:-1, j][:, None], In) for j in (0, Nm - 1)]
        c = branch_points(m)[0]
        xi = grid.xi()
        self.z = c * np.cosh(xi)
        self.P = self.z ** 2 + 2 * m
        self.absP = np.abs(self.P)

    def apply_boundary(self, full: np.ndarray) -> np.ndarray:
        return self.Lb[0] @ full[0] + self.Lb[1] @ full[-1]


def _solve_u_elliptic(m, grid: EllipticGrid, tol, max_iter, u_init=None):
    ops = _EllipticOps(grid, m)
    J = ops.absP[1:-1].ravel()
    P2 = J ** 2
    full = u_sf(ops.z, m)
    bvec = ops.apply_boundary(full)
    u0 = _initial_u(ops.z[1:-1].ravel(), m) if u_init is None else u_init

    def residual(u):
        return ops.L @ u + bvec - 4 * J * (np.exp(2 * u) - np.exp(-2 * u) * P2)

    def jac(u, rhs):
        q = 8 * J * (np.exp(2 * u) + np.exp(-2 * u) * P2)
        return np.linalg.solve(ops.L - np.diag(q), rhs)

    def scale(u):
        return 1 + 4 * J * (np.exp(2 * u) + np.exp(-2 * u) * P2)

    u, res, it = _newton(residual, jac, u0, tol, max_iter, scale)
    out = full.copy()
    out[1:-1] = u.reshape(grid.n_mu - 1, grid.n_nu)
    return out, res, it


# ---------------------------------------------------------------------------
# public solvers


def solve_u(m: complex, grid, tol: float = 1e-8, max_iter: int = 60) -> GridField:
    """Solve the self-duality equation with Dirichlet data u = log|P|/2."""
    m = _check_m(m)
    if isinstance(grid, CartesianGrid):
        if grid.R_dom < 4 * abs(2 * m) ** 0.5:
            raise DomainTooSmallError("R_dom must be at least 4 |2m|^(1/2)")
        solver = _solve_u_cartesian
    elif isinstance(grid, EllipticGrid):
        if grid.R_inner(m) < 4 * abs(2 * m) ** 0.5:
            raise DomainTooSmallError("outer ellipse must contain |z| <= 4 |2m|^(1/2)")
        solver = _solve_u_elliptic
    else:
        raise TypeError("unknown grid type")
    try:
        vals, res, it = solver(m, grid, tol, max_iter)
    except NewtonDivergenceError:
        # continuation: start from a larger |m| and walk back down
        vals = None
        for s in (4.0, 2.0, 1.5, 1.2, 1.0):
            mk = m * s
            try:
                prev = None if vals is None else _interior(grid, vals)
                vals, res, it = solver(mk, grid, tol, max_iter, prev)
            except NewtonDivergenceError as exc:
                raise NewtonDivergenceError(f"continuation failed at m = {mk}") from exc
    return GridField(grid, vals, m, "u = log|P|/2", res, it)


def _interior(grid, vals):
    if isinstance(grid, CartesianGrid):
        return vals[grid.interior()]
    return vals[1:-1].ravel()


def solve_F(m: complex, m_dot: complex, u: GridField, tol: float = 1e-10) -> GridField:
    """Solve the complex variation equation with Dirichlet data Pdot/(2P)."""
    m = _check_m(m)
    if u.m != m:
        raise ValueError("u was solved for a different m")
    Pd = 2 * complex(m_dot)
    grid = u.grid
    if isinstance(grid, CartesianGrid):
        Z = grid.nodes()
        mask = grid.interior()
        L, B = _laplacian(grid, mask)
        uu = u.values[mask]
        P = Z[mask] ** 2 + 2 * m
        q = 8 * (np.exp(2 * uu) + np.exp(-2 * uu) * np.abs(P) ** 2)
        full = np.where(mask, 0j, F_sf(np.where(mask, 1.0 + 0j, Z), m, m_dot))
        A = L - sparse.diags(q)
        rhs = -8 * np.exp(-2 * uu) * np.conj(P) * Pd - B @ full.ravel()
        F = _spd_solve(A, rhs.real, tol * 1e-2) + 1j * _spd_solve(A, rhs.imag, tol * 1e-2)
        res = np.max(np.abs(A @ F - rhs)) / max(1.0, np.max(np.abs(rhs)))
        out = full.copy()
        out[mask] = F
    else:
        ops = _EllipticOps(grid, m)
        J = ops.absP[1:-1].ravel()
        uu = u.values[1:-1].ravel()
        P = ops.P[1:-1].ravel()
        q = 8 * J * (np.exp(2 * uu) + np.exp(-2 * uu) * J ** 2)
        full = F_sf(ops.z, m, m_dot)
        A = ops.L - np.diag(q)
        rhs = -8 * J * np.exp(-2 * uu) * np.conj(P) * Pd - ops.apply_boundary(full)
        F = np.linalg.solve(A, rhs)
        res = np.max(np.abs(A @ F - rhs)) / max(1.0, np.max(np.abs(rhs)))
        out = full.copy()
        out[1:-1] = F.reshape(grid.n_mu - 1, grid.n_nu)
    if not res < tol:
        raise ConditioningError(f"linear residual {res:.2e} above {tol:.0e}")
    return GridField(grid, out, m, "F = Pdot/(2P)", res, 1)


# ---------------------------------------------------------------------------
# metric integrals


@dataclass(frozen=True)
class MetricResult:
    value: float
    R_dom: float
    extrapolation_residual: float
    log_slope: float = math.nan
    flagged: bool = False


def metric_integrand(z, m: complex, m_dot: complex, u, F):
    """4 e^{-2u} (|Pdot|^2 - Re(F P conj(Pdot)))."""
    z = np.asarray(z, dtype=complex)
    Pd = 2 * complex(m_dot)
    P = z * z + 2 * m
    return 4 * np.exp(-2 * u) * (abs(Pd) ** 2 - (F * P * np.conj(Pd)).real)


def sf_integrand(z, m: complex, m_dot: complex):
    """2 |Pdot|^2 / |P|, the semiflat value of the metric integrand."""
    z = np.asarray(z, dtype=complex)
    return 2 * abs(2 * m_dot) ** 2 / np.abs(z * z + 2 * m)


def _disc_integral_polar(fun, R: float, n_r: int = 200, n_phi: int = 256) -> float:
    """Integral of fun(z) over |z| < R with Gauss-Legendre in r and trapezoid in phi."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = R * (x + 1) / 2
    wr = w * R / 2
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    Z = r[:, None] * np.exp(1j * phi)[None, :]
    vals = fun(Z)
    return float(np.sum(vals * (r * wr)[:, None]) * 2 * np.pi / n_phi)


def sf_disc_integral(m: complex, m_dot: complex, R: float, n_nu: int = 512) -> float:
    """Integral of 2|Pdot|^2/|P| over |z| < R, exact up to quadrature in nu.

    In elliptic coordinates the integrand times the Jacobian is the
    constant 2|Pdot|^2, so only the boundary mu_R(nu) is needed.
    """
    c = abs(branch_points(m)[0])
    if R <= c:
        raise ValueError("R must exceed |c|")
    nu = 2 * np.pi * np.arange(n_nu) / n_nu
    mu_R = np.arcsinh(np.sqrt((R / c) ** 2 - np.cos(nu) ** 2))
    return float(2 * abs(2 * m_dot) ** 2 * np.mean(mu_R) * 2 * np.pi)


def _elliptic_integral(fun_xi, grid: EllipticGrid, mu_cut: float, n_q: int | None = None):
    """Integral over 0 < mu < mu_cut, 0 <= nu < 2pi of fun_xi(mu, nu)."""
    n_q = n_q or (grid.n_mu + 16)
    x, w = np.polynomial.legendre.leggauss(n_q)
    mu = mu_cut * (x + 1) / 2
    wm = w * mu_cut / 2
    nu = 2 * np.pi * np.arange(grid.n_nu * 2) / (grid.n_nu * 2)
    vals = fun_xi(mu[:, None] + 1j * nu[None, :])
    return float(np.sum(vals * wm[:, None]) * 2 * np.pi / nu.size)


def g_reg(m: complex, m_dot: complex, u: GridField, F: GridField,
          R_sequence=None) -> MetricResult:
    """Regularized L2 norm of a Hitchin-section variation."""
    m = _check_m(m)
    R_dom = _domain_radius(u.grid, m)
    if R_sequence is None:
        R_sequence = [f * R_dom for f in (0.5, 0.6, 0.7, 0.85)]
    R_sequence = [float(R) for R in R_sequence]
    target = 16 * math.pi * abs(m_dot) ** 2
    if m_dot == 0:
        return MetricResult(0.0, R_dom, 0.0, 0.0, False)

    def fun(Z):
        return metric_integrand(Z, m, m_dot, u.value(Z), F.value(Z))
    raw = np.array([_disc_integral(fun, u.grid, m, R, u, F, m_dot) for R in R_sequence])
    lr = np.log(R_sequence)
    slope = float(np.polyfit(lr, raw, 1)[0]) if len(R_sequence) > 1 else target
    reg = raw - target * lr
    # with the log slope fixed the finite-R correction is a series in R^-4
    if len(R_sequence) > 1:
        Rs = np.asarray(R_sequence)
        n_terms = min(len(R_sequence) - 1, 2)
        A = np.stack([np.ones_like(lr)] + [Rs ** (-4.0 * k) for k in range(1, n_terms + 1)], axis=1)
        coef, *_ = np.linalg.lstsq(A, reg, rcond=None)
        value = float(coef[0])
        if len(R_sequence) > n_terms + 1:
            resid = float(np.max(np.abs(A @ coef - reg)))
        else:
            resid = abs(coef[-1]) * Rs.max() ** (-4.0 * n_terms)
    else:
        value, resid = float(reg[0]), math.nan
    flagged = abs(slope - target) > 0.05 * target
    if flagged:
        warnings.warn("log-slope of the regularized integral is off by more than 5%",
                      ExtrapolationWarning)
    return MetricResult(value, R_dom, resid, slope, flagged)


def _domain_radius(grid, m) -> float:
    if isinstance(grid, CartesianGrid):
        return grid.R_dom
    return grid.R_inner(m)


def _disc_integral(fun, grid, m, R: float, u=None, F=None, m_dot=None) -> float:
    if isinstance(grid, CartesianGrid):
        n = max(64, int(2 * R / grid.h))
        return _disc_integral_polar(fun, R, n_r=n, n_phi=2 * n)
    # polar quadrature is slow near the branch points, so integrate the smooth
    # difference over the largest ellipse inside the disc and add the
    # semiflat part exactly
    c = abs(branch_points(m)[0])
    mu_cut = float(np.arccosh(R / c))
    return _elliptic_diff(m, m_dot, u, F, mu_cut) + sf_disc_integral(m, m_dot, R)


def _diff_integrand_xi(m, m_dot, u: GridField, F: GridField):
    """(metric integrand - semiflat integrand) times the elliptic Jacobian."""
    c = branch_points(m)[0]
    Pd = 2 * complex(m_dot)

    def fun(xi):
        z = c * np.cosh(xi)
        P = z * z + 2 * m
        aP = np.abs(P)
        uu = _eval_xi(u, xi.real, xi.imag)[0]
        FF = _eval_xi(F, xi.real, xi.imag)[0]
        return (4 * aP * np.exp(-2 * uu) * (abs(Pd) ** 2 - (FF * P * np.conj(Pd)).real)
                - 2 * abs(Pd) ** 2)
    return fun


def _elliptic_diff(m, m_dot, u: GridField, F: GridField, mu_cut: float) -> float:
    fun = _diff_integrand_xi(m, m_dot, u, F)
    return _elliptic_integral(fun, u.grid, mu_cut)


def g_sf_reg(m: complex, m_dot: complex, mu0: float = 2.0,
             n_nu: int = 256) -> tuple[float, MetricResult]:
    """Closed form and elliptic quadrature of the regularized semiflat metric."""
    m = _check_m(m)
    closed = -8 * math.pi * math.log(abs(m) / 2) * abs(m_dot) ** 2
    q = sf_elliptic_integral(m, m_dot, mu0, n_nu)
    value = q - 16 * math.pi * (0.5 * math.log(abs(m) / 2) + mu0) * abs(m_dot) ** 2
    c = abs(branch_points(m)[0])
    return closed, MetricResult(value, c * math.cosh(mu0), abs(value - closed))


def sf_elliptic_integral(m: complex, m_dot: complex, mu0: float, n_nu: int = 256,
                         n_mu: int = 32) -> float:
    """Integral of 2|Pdot|^2/|P| over the ellipse mu < mu0."""
    m = _check_m(m)
    c = branch_points(m)[0]
    x, w = np.polynomial.legendre.leggauss(n_mu)
    mu = mu0 * (x + 1) / 2
    wm = w * mu0 / 2
    nu = 2 * np.pi * np.arange(n_nu) / n_nu
    xi = mu[:, None] + 1j * nu[None, :]
    z = c * np.cosh(xi)
    jac = np.abs(c * np.sinh(xi)) ** 2
    vals = sf_integrand(z, m, m_dot) * jac
    return float(np.sum(vals * wm[:, None]) * 2 * np.pi / n_nu)


@dataclass(frozen=True)
class InstantonResult:
    value: float
    tail_estimate: float
    R: float

    def __float__(self) -> float:
        return self.value


def instanton_diff(m: complex, m_dot: complex, u: GridField, F: GridField,
                   R_dom: float | None = None) -> InstantonResult:
    """Convergent integral of (metric integrand - semiflat integrand).

    The integral runs over |z| < R (Cartesian) or the matching ellipse
    (elliptic grid), with R = 0.85 R_dom by default.  The tail estimate is
    the change when the region is shrunk to 0.7 R_dom.
    """
    m = _check_m(m)
    if u.m != m or F.m != m:
        raise ValueError("fields were solved for a different m")
    grid = u.grid
    R_dom = _domain_radius(grid, m) if R_dom is None else R_dom
    R1, R2 = 0.85 * R_dom, 0.7 * R_dom
    if isinstance(grid, CartesianGrid):
        def fun(Z):
            return metric_integrand(Z, m, m_dot, u.value(Z), F.value(Z))
        v1 = _disc_integral(fun, grid, m, R1) - sf_disc_integral(m, m_dot, R1)
        v2 = _disc_integral(fun, grid, m, R2) - sf_disc_integral(m, m_dot, R2)
    else:
        c = abs(branch_points(m)[0])
        v1 = _elliptic_diff(m, m_dot, u, F, float(np.arccosh(R1 / c)))
        v2 = _elliptic_diff(m, m_dot, u, F, float(np.arccosh(R2 / c)))
    return InstantonResult(float(v1), abs(v1 - v2), R1)


class HitchinU:
    """Solution of the self-duality equation continued by u_sf outside R_switch.

    Beyond a few |2m|^(1/2) the two differ by exponentially small terms, so
    this gives a field on the whole plane for transport along long paths.
    """

    def __init__(self, field: GridField, R_switch: float | None = None):
        self.field = field
        self.m = field.m
        R = _domain_radius(field.grid, field.m)
        self.R_switch = 0.8 * R if R_switch is None else float(R_switch)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < self.R_switch
        out = np.asarray(u_sf(np.where(inside, 1.0 + 0j, z), self.m), dtype=float)
        if np.any(inside):
            out = np.array(out)
            out[inside] = self.field.value(z[inside])
        return out

    def dz(self, z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < self.R_switch
        zz = np.where(inside, 1.0 + 0j, z)
        out = np.asarray(zz / (2 * (zz * zz + 2 * self.m)), dtype=complex)
        if np.any(inside):
            out = np.array(out)
            out[inside] = self.field.dz(z[inside])
        return out
