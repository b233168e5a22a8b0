"""Compiled inner loops of the Galerkin assembly.

The system matrix is written block-row by block-row: the task for element X
adds every contribution whose test function lives on X.  Elements of one
colour share no vertex, so their tasks touch disjoint rows and can run in
parallel without atomics; the summation order inside a task is fixed, so
results do not depend on the thread count.
"""

import math

import numpy as np
from numba import njit, prange

INV4PI = 1.0 / (4.0 * math.pi)

# permutations of the three local vertices; index = position in this table
PERMUTATIONS = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]], dtype=np.int64)
PERM_SIGN = np.array([1.0, -1.0, -1.0, 1.0, 1.0, -1.0])


@njit(cache=True)
def _kernel_parts(helmholtz, k, d0, d1, d2, n0, n1, n2):
    # returns (S_re, S_im, D0, R_re, R_im); D = D0 + R for Helmholtz
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    if r2 < 1e-300:
        raise ZeroDivisionError("kernel evaluated at coincident points")
    r = math.sqrt(r2)
    inv = INV4PI / r
    dl = (d0 * n0 + d1 * n1 + d2 * n2) * inv / r2
    if not helmholtz:
        return inv, 0.0, dl, 0.0, 0.0
    kr = k * r
    c = math.cos(kr)
    s = math.sin(kr)
    return c * inv, s * inv, dl, (c + kr * s - 1.0) * dl, (s - kr * c) * dl


@njit(cache=True)
def _combine(parts, g_re, g_im, beta, w):
    s_re, s_im, dl, r_re, r_im = parts
    v_re = (g_re * s_re - g_im * s_im + beta * (dl + r_re)) * w
    v_im = (g_re * s_im + g_im * s_re + beta * r_im) * w
    return v_re, v_im, beta * dl * w


@njit(cache=True, fastmath=True)
def _far_block(
    X, Y, pa0, pa1, pb0, pb1, pts, wj, nrm, phi, helmholtz, k, g_re, g_im, beta,
    loc_re, loc_im, csub, t_re, t_im,
):
    # non-touching pairs: r > 0 at every node pair, no coincidence check
    nb = phi.shape[1]
    plain = not helmholtz and beta == 0.0
    for a in range(pa0, pa1):
        for j in range(nb):
            t_re[j] = 0.0
            t_im[j] = 0.0
        cs = 0.0
        x0 = pts[X, a, 0]
        x1 = pts[X, a, 1]
        x2 = pts[X, a, 2]
        if plain:
            for b in range(pb0, pb1):
                d0 = x0 - pts[Y, b, 0]
                d1 = x1 - pts[Y, b, 1]
                d2 = x2 - pts[Y, b, 2]
                v = g_re * wj[Y, b] * INV4PI / math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                for j in range(nb):
                    t_re[j] += v * phi[b, j]
        else:
            for b in range(pb0, pb1):
                d0 = x0 - pts[Y, b, 0]
                d1 = x1 - pts[Y, b, 1]
                d2 = x2 - pts[Y, b, 2]
                r2 = d0 * d0 + d1 * d1 + d2 * d2
                r = math.sqrt(r2)
                inv = INV4PI / r
                dl = (d0 * nrm[Y, b, 0] + d1 * nrm[Y, b, 1] + d2 * nrm[Y, b, 2]) * inv / r2
                w = wj[Y, b]
                if helmholtz:
                    kr = k * r
                    c = math.cos(kr)
                    sn = math.sin(kr)
                    s_re = c * inv
                    s_im = sn * inv
                    r_re = (c + kr * sn - 1.0) * dl
                    r_im = (sn - kr * c) * dl
                else:
                    s_re = inv
                    s_im = 0.0
                    r_re = 0.0
                    r_im = 0.0
                v_re = (g_re * s_re - g_im * s_im + beta * (dl + r_re)) * w
                v_im = (g_re * s_im + g_im * s_re + beta * r_im) * w
                cs += beta * dl * w
                for j in range(nb):
                    t_re[j] += v_re * phi[b, j]
                    t_im[j] += v_im * phi[b, j]
        wa = wj[X, a]
        csub[a] += cs * wa
        for i in range(nb):
            fi = phi[a, i] * wa
            for j in range(nb):
                loc_re[i, j] += fi * t_re[j]
                loc_im[i, j] += fi * t_im[j]


@njit(cache=True)
def _shared_order(vx, vy, out_x, out_y):
    """Canonical local orders: shared vertices first (in x order), then the rest."""
    n = 0
    for i in range(3):
        for j in range(3):
            if vx[i] == vy[j]:
                out_x[n] = i
                out_y[n] = j
                n += 1
    nx = n
    for i in range(3):
        used = False
        for c in range(n):
            if out_x[c] == i:
                used = True
        if not used:
            out_x[nx] = i
            nx += 1
    ny = n
    for j in range(3):
        used = False
        for c in range(n):
            if out_y[c] == j:
                used = True
        if not used:
            out_y[ny] = j
            ny += 1
    return n


@njit(cache=True)
def _perm_index(p):
    for i in range(6):
        if PERMUTATIONS[i, 0] == p[0] and PERMUTATIONS[i, 1] == p[1]:
            return i
    return -1


@njit(cache=True, fastmath=True)
def _map_point(a, G, Gu, Gv, nodes, nnodes, sign, use_interp, out):
    # position, element-normal or interpolated-normal, Jacobian at rule point a
    nbg = G.shape[1]
    p0 = p1 = p2 = 0.0
    u0 = u1 = u2 = 0.0
    v0 = v1 = v2 = 0.0
    m0 = m1 = m2 = 0.0
    for b in range(nbg):
        g = G[a, b]
        gu = Gu[a, b]
        gv = Gv[a, b]
        p0 += g * nodes[b, 0]
        p1 += g * nodes[b, 1]
        p2 += g * nodes[b, 2]
        u0 += gu * nodes[b, 0]
        u1 += gu * nodes[b, 1]
        u2 += gu * nodes[b, 2]
        v0 += gv * nodes[b, 0]
        v1 += gv * nodes[b, 1]
        v2 += gv * nodes[b, 2]
        if use_interp:
            m0 += g * nnodes[b, 0]
            m1 += g * nnodes[b, 1]
            m2 += g * nnodes[b, 2]
    c0 = u1 * v2 - u2 * v1
    c1 = u2 * v0 - u0 * v2
    c2 = u0 * v1 - u1 * v0
    jac = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    if jac < 1e-14:
        raise ZeroDivisionError("degenerate element map")
    out[0] = p0
    out[1] = p1
    out[2] = p2
    if use_interp:
        mn = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
        out[3] = m0 / mn
        out[4] = m1 / mn
        out[5] = m2 / mn
    else:
        s = sign / jac
        out[3] = c0 * s
        out[4] = c1 * s
        out[5] = c2 * s
    out[6] = jac


@njit(cache=True, fastmath=True)
def _singular_block(
    X, Y, adj, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
    nodes, node_normals, elements, dofs, geo_canon, den_canon, vx_perm, vy_perm,
    use_interp, helmholtz, k, g_re, g_im, beta,
    loc_re, loc_im, sub_loc, gx, gy, xbuf, ybuf, cx_nodes, cy_nodes, cx_nrm, cy_nrm,
):
    """One touching pair under the relative-coordinate rule of class ``adj``."""
    ix = _perm_index(vx_perm)
    iy = _perm_index(vy_perm)
    nbg = geo_canon.shape[1]
    nb = den_canon.shape[1]
    for b in range(nbg):
        lx = elements[X, geo_canon[ix, b]]
        ly = elements[Y, geo_canon[iy, b]]
        for d in range(3):
            cx_nodes[b, d] = nodes[lx, d]
            cy_nodes[b, d] = nodes[ly, d]
            cx_nrm[b, d] = node_normals[lx, d]
            cy_nrm[b, d] = node_normals[ly, d]
    for i in range(nb):
        gx[i] = dofs[X, den_canon[ix, i]]
        gy[i] = dofs[Y, den_canon[iy, i]]
    sx = PERM_SIGN[ix]
    sy = PERM_SIGN[iy]
    cplx = helmholtz or g_im != 0.0
    has_sub = beta != 0.0
    ty_re = np.empty(nb)
    ty_im = np.empty(nb)
    tx_sub = np.empty(nb)
    for a in range(soff[adj], soff[adj + 1]):
        _map_point(a, Gx, Gxu, Gxv, cx_nodes, cx_nrm, sx, False, xbuf)
        _map_point(a, Gy, Gyu, Gyv, cy_nodes, cy_nrm, sy, use_interp, ybuf)
        w = sw[a] * xbuf[6] * ybuf[6]
        parts = _kernel_parts(
            helmholtz, k, xbuf[0] - ybuf[0], xbuf[1] - ybuf[1], xbuf[2] - ybuf[2],
            ybuf[3], ybuf[4], ybuf[5],
        )
        v_re, v_im, sub = _combine(parts, g_re, g_im, beta, w)
        for j in range(nb):
            ty_re[j] = v_re * Py[a, j]
            ty_im[j] = v_im * Py[a, j]
            tx_sub[j] = sub * Px[a, j]
        for i in range(nb):
            fi = Px[a, i]
            for j in range(nb):
                loc_re[i, j] += fi * ty_re[j]
            if cplx:
                for j in range(nb):
                    loc_im[i, j] += fi * ty_im[j]
            if has_sub:
                for j in range(nb):
                    sub_loc[i, j] += fi * tx_sub[j]


@njit(cache=True)
def _element_task(
    X,
    out_re, out_im,
    pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
    nbr_off, nbr, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
    nodes, node_normals, elements, dofs, geo_canon, den_canon, use_interp,
    helmholtz, k, g_re, g_im, beta, write_imag,
):
    """Add every contribution whose test function lives on element X."""
    E = pts.shape[0]
    nb = phi.shape[1]
    P = pts.shape[1]
    T = len(tier_ratio)
    nbg = geo_canon.shape[1]
    loc_re = np.zeros((nb, nb))
    loc_im = np.zeros((nb, nb))
    sub_loc = np.zeros((nb, nb))
    csub = np.zeros(P)
    t_re = np.zeros(nb)
    t_im = np.zeros(nb)
    # regular pairs, tiered by centroid distance
    for Y in range(E):
        touching = False
        for i in range(3):
            for j in range(3):
                if elements[X, i] == elements[Y, j]:
                    touching = True
        if touching:
            continue
        dc = 0.0
        for d in range(3):
            dc += (centroids[X, d] - centroids[Y, d]) ** 2
        rho = math.sqrt(dc) / hbar
        t = T - 1
        for tt in range(T):
            if rho < tier_ratio[tt]:
                t = tt
                break
        loc_re[:, :] = 0.0
        loc_im[:, :] = 0.0
        _far_block(
            X, Y, tier_off[t], tier_off[t + 1], tier_off[t], tier_off[t + 1],
            pts, wj, nrm, phi, helmholtz, k, g_re, g_im, beta,
            loc_re, loc_im, csub, t_re, t_im,
        )
        for i in range(nb):
            gi = dofs[X, i]
            for j in range(nb):
                gj = dofs[Y, j]
                out_re[gi, gj] += loc_re[i, j]
                if write_imag:
                    out_im[gi, gj] += loc_im[i, j]
    # density-difference term of the regular pairs
    for a in range(P):
        if csub[a] != 0.0:
            for i in range(nb):
                gi = dofs[X, i]
                for j in range(nb):
                    out_re[gi, dofs[X, j]] -= phi[a, i] * phi[a, j] * csub[a]
    # touching pairs
    gx = np.empty(nb, dtype=np.int64)
    gy = np.empty(nb, dtype=np.int64)
    xbuf = np.empty(7)
    ybuf = np.empty(7)
    cxn = np.empty((nbg, 3))
    cyn = np.empty((nbg, 3))
    cxr = np.empty((nbg, 3))
    cyr = np.empty((nbg, 3))
    px = np.empty(3, dtype=np.int64)
    py = np.empty(3, dtype=np.int64)
    for q in range(nbr_off[X], nbr_off[X + 1]):
        Y = nbr[q]
        # a pure single layer is symmetric: integrate (X, Y) with the
        # rule of (Y, X) when Y < X so the matrix is exactly symmetric
        swap = beta == 0.0 and Y < X
        A_el = Y if swap else X
        B_el = X if swap else Y
        adj = _shared_order(elements[A_el, :3], elements[B_el, :3], px, py)
        loc_re[:, :] = 0.0
        loc_im[:, :] = 0.0
        sub_loc[:, :] = 0.0
        _singular_block(
            A_el, B_el, adj, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
            nodes, node_normals, elements, dofs, geo_canon, den_canon, px, py,
            use_interp, helmholtz, k, g_re, g_im, beta,
            loc_re, loc_im, sub_loc, gx, gy, xbuf, ybuf, cxn, cyn, cxr, cyr,
        )
        for i in range(nb):
            for j in range(nb):
                if swap:
                    out_re[gy[j], gx[i]] += loc_re[i, j]
                    if write_imag:
                        out_im[gy[j], gx[i]] += loc_im[i, j]
                else:
                    out_re[gx[i], gy[j]] += loc_re[i, j]
                    out_re[gx[i], gx[j]] -= sub_loc[i, j]
                    if write_imag:
                        out_im[gx[i], gy[j]] += loc_im[i, j]


@njit(cache=True)
def assemble_blocks_serial(
    color_order, color_off,
    out_re, out_im,
    pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
    nbr_off, nbr, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
    nodes, node_normals, elements, dofs, geo_canon, den_canon, use_interp,
    helmholtz, k, g_re, g_im, beta, write_imag,
):
    for c in range(len(color_off) - 1):
        for idx in range(color_off[c], color_off[c + 1]):
            _element_task(
                color_order[idx],
                out_re, out_im,
                pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
                nbr_off, nbr, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
                nodes, node_normals, elements, dofs, geo_canon, den_canon, use_interp,
                helmholtz, k, g_re, g_im, beta, write_imag,
            )


@njit(cache=True, parallel=True)
def assemble_blocks_parallel(
    color_order, color_off,
    out_re, out_im,
    pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
    nbr_off, nbr, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
    nodes, node_normals, elements, dofs, geo_canon, den_canon, use_interp,
    helmholtz, k, g_re, g_im, beta, write_imag,
):
    for c in range(len(color_off) - 1):
        for idx in prange(color_off[c], color_off[c + 1]):
            _element_task(
                color_order[idx],
                out_re, out_im,
                pts, wj, nrm, phi, tier_off, tier_ratio, centroids, hbar,
                nbr_off, nbr, soff, sw, Gx, Gxu, Gxv, Gy, Gyu, Gyv, Px, Py,
                nodes, node_normals, elements, dofs, geo_canon, den_canon, use_interp,
                helmholtz, k, g_re, g_im, beta, write_imag,
            )


@njit(cache=True)
def potential_sum(x, pts, nrm, wvals, helmholtz, k, g_re, g_im, beta):
    """Sum over quadrature points of kernel(x_i, y) * wvals(y); wvals complex."""
    n = x.shape[0]
    out = np.zeros(n, dtype=np.complex128)
    for i in prange(n):
        acc_re = 0.0
        acc_im = 0.0
        for b in range(pts.shape[0]):
            parts = _kernel_parts(
                helmholtz, k, x[i, 0] - pts[b, 0], x[i, 1] - pts[b, 1], x[i, 2] - pts[b, 2],
                nrm[b, 0], nrm[b, 1], nrm[b, 2],
            )
            v_re, v_im, _ = _combine(parts, g_re, g_im, beta, 1.0)
            w = wvals[b]
            acc_re += v_re * w.real - v_im * w.imag
            acc_im += v_re * w.imag + v_im * w.real
        out[i] = complex(acc_re, acc_im)
    return out
