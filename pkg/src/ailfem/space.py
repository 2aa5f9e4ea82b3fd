"""Lagrange finite element spaces: dofs, quadrature, assembly, prolongation.

Spaces carry homogeneous Dirichlet conditions by dof elimination: a
DiscreteFunction stores coefficients for the interior (non-Dirichlet) dofs
only, boundary values being implicitly zero.  Nested meshes induce nested
spaces, so prolongation to a refined mesh is pointwise exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import EDGE_LOCAL, Triangulation, ancestor_chain


class SpaceError(Exception):
    pass


# -- quadrature -----------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Triangle rule: reference-coordinate points, weights summing to one.

    Integration convention: int_T g = |T| * sum_i w_i g(x_i).  Exact for
    bivariate polynomials up to total degree ``order``.
    """

    points: np.ndarray   # (n, 2) on the reference triangle
    weights: np.ndarray  # (n,), positive, sum 1
    order: int

    @property
    def barycentric(self) -> np.ndarray:
        lam12 = self.points
        return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Collapsed Gauss-Legendre (Duffy) rule exact to the given total degree."""
    n = (order + 3) // 2  # Gauss degree 2n-1 >= order+1 covers the Jacobian
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    wts = 2.0 * (wu * wv * (1.0 - u)).ravel()
    if np.any(wts <= 0):
        raise SpaceError("non-positive quadrature weight")
    return QuadratureRule(points=pts, weights=wts, order=order)


@lru_cache(maxsize=None)
def edge_rule(npoints: int):
    """Gauss-Legendre rule on [0, 1]; weights sum to one."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


# -- reference basis ------------------------------------------------------

def _local_nodes(degree: int) -> np.ndarray:
    m = degree
    nodes = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    for t in range(1, m):
        nodes.append((t / m, 0.0))
    for t in range(1, m):
        nodes.append((1.0 - t / m, t / m))
    for t in range(1, m):
        nodes.append((0.0, 1.0 - t / m))
    for i in range(1, m):
        for j in range(1, m - i):
            nodes.append((i / m, j / m))
    return np.asarray(nodes)


class _Basis:
    """Monomial-backed Lagrange basis on the reference triangle."""

    def __init__(self, degree: int):
        self.degree = degree
        self.nodes = _local_nodes(degree)
        self.exponents = [(p, q) for t in range(degree + 1)
                          for p, q in [(t - q_, q_) for q_ in range(t + 1)]]
        vand = self._monomials(self.nodes)
        self.coeff = np.linalg.inv(vand)   # column i: coefficients of phi_i

    @property
    def nloc(self) -> int:
        return len(self.nodes)

    def _monomials(self, pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([x**p * y**q for p, q in self.exponents], axis=1)

    def eval(self, pts) -> np.ndarray:
        """(npts, nloc) basis values."""
        return self._monomials(pts) @ self.coeff

    def grad(self, pts) -> np.ndarray:
        """(npts, nloc, 2) reference gradients."""
        x, y = pts[:, 0], pts[:, 1]
        dx = np.stack([p * x**max(p - 1, 0) * y**q if p else np.zeros_like(x)
                       for p, q in self.exponents], axis=1)
        dy = np.stack([q * x**p * y**max(q - 1, 0) if q else np.zeros_like(x)
                       for p, q in self.exponents], axis=1)
        return np.stack([dx @ self.coeff, dy @ self.coeff], axis=-1)

    def hess(self, pts) -> np.ndarray:
        """(npts, nloc, 3) reference second derivatives (xx, xy, yy)."""
        x, y = pts[:, 0], pts[:, 1]
        cols = []
        for kind in ("xx", "xy", "yy"):
            vals = []
            for p, q in self.exponents:
                if kind == "xx":
                    v = p * (p - 1) * x**max(p - 2, 0) * y**q if p >= 2 else np.zeros_like(x)
                elif kind == "yy":
                    v = q * (q - 1) * x**p * y**max(q - 2, 0) if q >= 2 else np.zeros_like(x)
                else:
                    v = p * q * x**max(p - 1, 0) * y**max(q - 1, 0) if p and q else np.zeros_like(x)
                vals.append(v)
            cols.append(np.stack(vals, axis=1) @ self.coeff)
        return np.stack(cols, axis=-1)


@lru_cache(maxsize=None)
def _basis(degree: int) -> _Basis:
    return _Basis(degree)


# -- space ----------------------------------------------------------------

class FeSpace:
    """Continuous Lagrange space of degree m in {1, 2, 3, 4} on a mesh."""

    SUPPORTED = (1, 2, 3, 4)

    def __init__(self, mesh: Triangulation, degree: int, dirichlet: bool = True):
        if degree not in self.SUPPORTED:
            raise SpaceError(f"unsupported degree {degree}")
        self.mesh = mesh
        self.degree = degree
        self.dirichlet = dirichlet
        self.basis = _basis(degree)
        self._build_dof_map()

    def _build_dof_map(self):
        mesh, m = self.mesh, self.degree
        nv, nelem = mesh.num_vertices, mesh.num_elements
        edges = mesh.edges
        n_edge_dof = m - 1
        n_int_dof = (m - 1) * (m - 2) // 2
        self.ndof_total = nv + edges.count * n_edge_dof + nelem * n_int_dof

        dofs = np.empty((nelem, self.basis.nloc), dtype=np.int64)
        dofs[:, :3] = mesh.elements
        col = 3
        if n_edge_dof:
            ev = mesh.elements[:, EDGE_LOCAL]                        # (nelem, 3, 2)
            eid = edges.of_element                                   # (nelem, 3)
            forward = ev[..., 0] < ev[..., 1]
            for le in range(3):
                base = nv + eid[:, le] * n_edge_dof
                for t in range(1, m):
                    slot = np.where(forward[:, le], t - 1, m - t - 1)
                    dofs[:, col] = base + slot
                    col += 1
        if n_int_dof:
            base = nv + edges.count * n_edge_dof
            for s in range(n_int_dof):
                dofs[:, col] = base + np.arange(nelem) * n_int_dof + s
                col += 1
        self.elem_dofs = dofs

        boundary = np.zeros(self.ndof_total, dtype=bool)
        if self.dirichlet:
            boundary[:nv] = mesh.boundary_vertices
            if n_edge_dof:
                bedges = np.flatnonzero(edges.boundary)
                ids = (nv + bedges[:, None] * n_edge_dof + np.arange(n_edge_dof)).ravel()
                boundary[ids] = True
        self.boundary_mask = boundary
        self.interior_idx = np.flatnonzero(~boundary)
        self.dimension = len(self.interior_idx)
        self._interior_pos = np.full(self.ndof_total, -1, dtype=np.int64)
        self._interior_pos[self.interior_idx] = np.arange(self.dimension)

    @cached_property
    def dof_points(self) -> np.ndarray:
        """Physical coordinates of the global Lagrange nodes."""
        pts = np.zeros((self.ndof_total, 2))
        phys = self.element_points(self.basis.nodes)         # (nelem, nloc, 2)
        pts[self.elem_dofs.ravel()] = phys.reshape(-1, 2)
        return pts

    @cached_property
    def affine(self):
        """Per-element affine maps: origin v0, matrix B, inverse, |det B|."""
        p = self.mesh.vertices[self.mesh.elements]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        inv = np.empty_like(B)
        inv[:, 0, 0] = B[:, 1, 1]
        inv[:, 1, 1] = B[:, 0, 0]
        inv[:, 0, 1] = -B[:, 0, 1]
        inv[:, 1, 0] = -B[:, 1, 0]
        inv /= det[:, None, None]
        return p[:, 0], B, inv, det

    def element_points(self, ref_pts) -> np.ndarray:
        """Map reference points to every element: (nelem, npts, 2)."""
        v0, B, _, _ = self.affine
        return v0[:, None, :] + np.asarray(ref_pts) @ np.swapaxes(B, 1, 2)

    def physical_gradients(self, ref_pts) -> np.ndarray:
        """Basis gradients at mapped points: (nelem, npts, nloc, 2)."""
        dphi = self.basis.grad(np.asarray(ref_pts))          # (npts, nloc, 2)
        _, _, invB, _ = self.affine
        return np.einsum("qid,edk->eqik", dphi, invB)

    def full_vector(self, u: "DiscreteFunction") -> np.ndarray:
        out = np.zeros(self.ndof_total)
        out[self.interior_idx] = u.coefficients
        return out

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.interior_idx]

    def function(self, interior=None, full=None) -> "DiscreteFunction":
        if full is not None:
            interior = self.restrict(full)
        if interior is None:
            interior = np.zeros(self.dimension)
        return DiscreteFunction(self, np.asarray(interior, dtype=float))

    def interpolate(self, fn) -> "DiscreteFunction":
        """Lagrange interpolation; boundary values are dropped (Dirichlet)."""
        vals = np.asarray(fn(self.dof_points), dtype=float)
        return self.function(full=vals)


@dataclass(frozen=True)
class DiscreteFunction:
    """Coefficients over the interior dofs of a space (boundary values zero)."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (self.space.dimension,):
            raise SpaceError("coefficient length does not match space dimension")
        if not np.all(np.isfinite(coeffs)):
            raise SpaceError("non-finite coefficient")
        object.__setattr__(self, "coefficients", coeffs)

    def full(self) -> np.ndarray:
        return self.space.full_vector(self)


def build_space(mesh: Triangulation, degree: int, dirichlet: bool = True) -> FeSpace:
    return FeSpace(mesh, degree, dirichlet=dirichlet)


# -- assembly -------------------------------------------------------------

def _scatter_matrix(space: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    dofs = space.elem_dofs
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(space.ndof_total, space.ndof_total)).tocsr()
    # duplicate summation order may differ between (i, j) and (j, i):
    # restore exact symmetry of the symmetric forms
    return (mat + mat.T) * 0.5


def assemble_stiffness(space: FeSpace) -> sp.csr_matrix:
    rule = triangle_rule(2 * (space.degree - 1) + 2)
    gphys = space.physical_gradients(rule.points)            # (e, q, i, d)
    _, _, _, det = space.affine
    area = 0.5 * det
    local = np.einsum("q,eqid,eqjd->eij", rule.weights, gphys, gphys) * area[:, None, None]
    return _scatter_matrix(space, local)


def assemble_mass(space: FeSpace) -> sp.csr_matrix:
    rule = triangle_rule(2 * space.degree + 2)
    phi = space.basis.eval(rule.points)
    ref_mass = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    _, _, _, det = space.affine
    local = 0.5 * det[:, None, None] * ref_mass[None]
    return _scatter_matrix(space, local)


def assemble_inner_product(space: FeSpace, norm_variant: str, epsilon: float) -> sp.csr_matrix:
    """SPD matrix of the chosen inner product on all dofs.

    ``energy``: eps * (grad u, grad v); ``eps_weighted_h1`` adds the L2 mass.
    """
    if norm_variant == "energy":
        return epsilon * assemble_stiffness(space)
    if norm_variant == "eps_weighted_h1":
        return epsilon * assemble_stiffness(space) + assemble_mass(space)
    raise SpaceError(f"unknown norm variant {norm_variant!r}")


def assemble_load(space: FeSpace, f=None, vecf=None) -> np.ndarray:
    """Vector of (f, phi_i) + (vecf, grad phi_i), quadrature exact to 2m+2."""
    rule = triangle_rule(2 * space.degree + 2)
    _, _, _, det = space.affine
    area = 0.5 * det
    out = np.zeros(space.ndof_total)
    x = space.element_points(rule.points)                     # (e, q, 2)
    contrib = np.zeros((space.mesh.num_elements, space.basis.nloc))
    if f is not None:
        fv = np.asarray(f(x))                                 # (e, q)
        phi = space.basis.eval(rule.points)
        contrib += np.einsum("q,eq,qi->ei", rule.weights, fv, phi)
    if vecf is not None:
        gv = np.asarray(vecf(x))                              # (e, q, 2)
        gphys = space.physical_gradients(rule.points)
        contrib += np.einsum("q,eqd,eqid->ei", rule.weights, gv, gphys)
    np.add.at(out, space.elem_dofs.ravel(), (contrib * area[:, None]).ravel())
    return out


def nonlinear_rule(degree: int) -> QuadratureRule:
    """Over-integration for non-polynomial reaction terms."""
    return triangle_rule(max(2 * degree + 2, 3 * degree + 1))


def function_at(space: FeSpace, u_full: np.ndarray, ref_pts) -> np.ndarray:
    """Values of a coefficient vector at mapped reference points: (e, q)."""
    phi = space.basis.eval(np.asarray(ref_pts))
    return np.einsum("ei,qi->eq", u_full[space.elem_dofs], phi)


def gradient_at(space: FeSpace, u_full: np.ndarray, ref_pts) -> np.ndarray:
    """Gradients of a coefficient vector at mapped points: (e, q, 2)."""
    gphys = space.physical_gradients(np.asarray(ref_pts))
    return np.einsum("ei,eqid->eqd", u_full[space.elem_dofs], gphys)


def assemble_semilinear_term(space: FeSpace, b, u: DiscreteFunction) -> np.ndarray:
    """Vector of (b(u), phi_i) by over-integrating quadrature."""
    rule = nonlinear_rule(space.degree)
    uq = function_at(space, u.full(), rule.points)
    bv = np.asarray(b(uq))
    if not np.all(np.isfinite(bv)):
        raise SpaceError("non-finite nonlinearity value")
    phi = space.basis.eval(rule.points)
    _, _, _, det = space.affine
    contrib = np.einsum("q,eq,qi->ei", rule.weights, bv, phi) * (0.5 * det[:, None])
    out = np.zeros(space.ndof_total)
    np.add.at(out, space.elem_dofs.ravel(), contrib.ravel())
    return out


def assemble_weighted_mass(space: FeSpace, weight_values: np.ndarray,
                           rule: QuadratureRule | None = None) -> sp.csr_matrix:
    """Mass matrix with a pointwise weight: entries int weight * phi_i phi_j.

    ``weight_values`` holds the nonnegative weight at the rule's mapped
    points, shape (nelem, nq); default rule is the over-integrating one.
    """
    rule = rule or nonlinear_rule(space.degree)
    wq = np.asarray(weight_values)
    phi = space.basis.eval(rule.points)
    _, _, _, det = space.affine
    local = np.einsum("q,eq,qi,qj->eij", rule.weights, wq, phi, phi) * (0.5 * det[:, None, None])
    return _scatter_matrix(space, local)


def integrate(space: FeSpace, values_at, order: int) -> float:
    """Integrate a pointwise field over the mesh: values_at(x) on (e, q, 2)."""
    rule = triangle_rule(order)
    x = space.element_points(rule.points)
    vals = np.asarray(values_at(x))
    _, _, _, det = space.affine
    return float(np.einsum("q,eq->e", rule.weights, vals) @ (0.5 * det))


# -- evaluation and prolongation -------------------------------------------

def locate(mesh: Triangulation, points: np.ndarray) -> np.ndarray:
    """Containing element per point (brute-force, test-scale only)."""
    pts = np.atleast_2d(points)
    p = mesh.vertices[mesh.elements]
    out = np.full(len(pts), -1, dtype=np.int64)
    for i, x in enumerate(pts):
        d0 = x - p[:, 0]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        lam1 = (B[:, 1, 1] * d0[:, 0] - B[:, 0, 1] * d0[:, 1]) / det
        lam2 = (-B[:, 1, 0] * d0[:, 0] + B[:, 0, 0] * d0[:, 1]) / det
        ok = (lam1 >= -1e-12) & (lam2 >= -1e-12) & (lam1 + lam2 <= 1 + 1e-12)
        hits = np.flatnonzero(ok)
        if len(hits) == 0:
            raise SpaceError(f"point {x} outside mesh")
        out[i] = hits[0]
    return out


def evaluate(u: DiscreteFunction, points, elements=None, gradient=False):
    """Exact polynomial evaluation at physical points."""
    space = u.space
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if elements is None:
        elements = locate(space.mesh, pts)
    elements = np.asarray(elements, dtype=np.int64)
    v0, _, invB, _ = space.affine
    ref = np.einsum("ndk,nk->nd", invB[elements], pts - v0[elements])
    full = u.full()
    coeffs = full[space.elem_dofs[elements]]                  # (n, nloc)
    if gradient:
        dphi = space.basis.grad(ref)                          # (n, nloc, 2)
        return np.einsum("ni,nid,ndk->nk", coeffs, dphi, invB[elements])
    phi = space.basis.eval(ref)                               # (n, nloc)
    return np.einsum("ni,ni->n", coeffs, phi)


def prolongate(u: DiscreteFunction, space_h: FeSpace) -> DiscreteFunction:
    """Exact re-representation of a coarse function in a nested refined space."""
    space_H = u.space
    if space_h.degree != space_H.degree:
        raise SpaceError("prolongation requires equal polynomial degree")
    parents = ancestor_chain(space_h.mesh, space_H.mesh)

    nodes = space_h.basis.nodes
    phys = space_h.element_points(nodes)                      # (ef, nloc, 2)
    v0, _, invB, _ = space_H.affine
    ref = np.einsum("edk,enk->end", invB[parents], phys - v0[parents][:, None, :])

    full_H = u.full()
    coeffs = full_H[space_H.elem_dofs[parents]]               # (ef, nloc)
    shape = ref.shape[:2]
    phi = space_H.basis.eval(ref.reshape(-1, 2)).reshape(*shape, -1)
    values = np.einsum("eni,ei->en", phi, coeffs)

    full_h = np.zeros(space_h.ndof_total)
    full_h[space_h.elem_dofs.ravel()] = values.ravel()
    full_h[space_h.boundary_mask] = 0.0
    return space_h.function(full=full_h)
