# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels for the quadratic family.

Mirrors ``_pykernels``: midpoint-rule action with analytic gradient, and the
projected preconditioned descent with Armijo backtracking and a projected
gradient fallback. Domains are encoded as kind 0 (ball), 1 (box), 2 (polygon)
or -1 (unconstrained).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()

cdef enum:
    MAXD = 8
cdef double ARMIJO = 1e-4
cdef int MAX_BACKTRACK = 30


cdef struct Quad:
    int n
    double* A
    double* s1
    double* S2
    double v0
    double* w
    double* Q


cdef struct Dom:
    int kind
    int n
    double* par
    double* poly
    int nv


cdef double quad_eval(Quad* q, double* X, int N, double dt, double* grad, double* dadt) noexcept nogil:
    cdef int k, i, j, n = q.n
    cdef double val = 0.0, esum = 0.0, kin, dr, pot, lvv, Lk
    cdef double M[MAXD]
    cdef double V[MAXD]
    cdef double AV[MAXD]
    cdef double DS[MAXD]
    cdef double QM[MAXD]
    cdef double Lv, Lx
    if grad != NULL:
        for i in range((N + 1) * n):
            grad[i] = 0.0
    for k in range(N):
        for i in range(n):
            M[i] = 0.5 * (X[k * n + i] + X[(k + 1) * n + i])
            V[i] = (X[(k + 1) * n + i] - X[k * n + i]) / dt
        kin = 0.0
        dr = 0.0
        pot = q.v0
        for i in range(n):
            AV[i] = 0.0
            DS[i] = q.s1[i]
            QM[i] = 0.0
            for j in range(n):
                AV[i] += q.A[i * n + j] * V[j]
                DS[i] += q.S2[i * n + j] * M[j]
                QM[i] += q.Q[i * n + j] * M[j]
        for i in range(n):
            kin += 0.5 * V[i] * AV[i]
            dr += DS[i] * V[i]
            pot += q.w[i] * M[i] + 0.5 * M[i] * QM[i]
        Lk = kin - dr - pot
        val += dt * Lk
        lvv = 0.0
        for i in range(n):
            Lv = AV[i] - DS[i]
            lvv += Lv * V[i]
            if grad != NULL:
                Lx = -q.w[i] - QM[i]
                for j in range(n):
                    Lx -= q.S2[j * n + i] * V[j]
                grad[k * n + i] += 0.5 * dt * Lx - Lv
                grad[(k + 1) * n + i] += 0.5 * dt * Lx + Lv
        esum += Lk - lvv
    dadt[0] = esum / N
    return val


cdef int poly_inside(double px, double py, double* P, int nv) noexcept nogil:
    cdef int i, c = 0
    cdef double xa, ya, xb, yb, xint
    for i in range(nv):
        xa = P[2 * i]
        ya = P[2 * i + 1]
        xb = P[2 * ((i + 1) % nv)]
        yb = P[2 * ((i + 1) % nv) + 1]
        if (ya > py) != (yb > py):
            xint = xa + (py - ya) * (xb - xa) / (yb - ya)
            if px < xint:
                c += 1
    return c % 2


cdef double poly_closest(double px, double py, double* P, int nv, double* out) noexcept nogil:
    cdef int i
    cdef double xa, ya, ex, ey, t, cx, cy, d, best = 1e300
    for i in range(nv):
        xa = P[2 * i]
        ya = P[2 * i + 1]
        ex = P[2 * ((i + 1) % nv)] - xa
        ey = P[2 * ((i + 1) % nv) + 1] - ya
        t = ((px - xa) * ex + (py - ya) * ey) / (ex * ex + ey * ey)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        cx = xa + t * ex
        cy = ya + t * ey
        d = sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy))
        if d < best:
            best = d
            out[0] = cx
            out[1] = cy
    return best


cdef void project_point(Dom* dm, double* x) noexcept nogil:
    cdef int i, n = dm.n
    cdef double r, s
    cdef double c2[2]
    if dm.kind == 0:
        r = 0.0
        for i in range(n):
            r += (x[i] - dm.par[i]) * (x[i] - dm.par[i])
        r = sqrt(r)
        if r > dm.par[n]:
            s = dm.par[n] / r
            for i in range(n):
                x[i] = dm.par[i] + (x[i] - dm.par[i]) * s
    elif dm.kind == 1:
        for i in range(n):
            if x[i] < dm.par[i]:
                x[i] = dm.par[i]
            elif x[i] > dm.par[n + i]:
                x[i] = dm.par[n + i]
    elif dm.kind == 2:
        if not poly_inside(x[0], x[1], dm.poly, dm.nv):
            poly_closest(x[0], x[1], dm.poly, dm.nv, c2)
            x[0] = c2[0]
            x[1] = c2[1]


cdef double cone_residual_2d(double gx, double gy, double* nrm, int k) noexcept nogil:
    # max-norm of g + P_N(-g) for the cone spanned by k <= 2 unit normals
    cdef double yx = -gx, yy = -gy, bx = yx, by = yy, best = yx * yx + yy * yy
    cdef double lam, rx, ry, rr, det, l1, l2
    cdef int i
    for i in range(k):
        lam = yx * nrm[2 * i] + yy * nrm[2 * i + 1]
        if lam > 0.0:
            rx = yx - lam * nrm[2 * i]
            ry = yy - lam * nrm[2 * i + 1]
            rr = rx * rx + ry * ry
            if rr < best:
                best = rr
                bx = rx
                by = ry
    if k == 2:
        det = nrm[0] * nrm[3] - nrm[2] * nrm[1]
        if fabs(det) > 1e-14:
            l1 = (yx * nrm[3] - yy * nrm[2]) / det
            l2 = (nrm[0] * yy - nrm[1] * yx) / det
            if l1 >= 0.0 and l2 >= 0.0:
                bx = 0.0
                by = 0.0
    return fabs(bx) if fabs(bx) > fabs(by) else fabs(by)


cdef double node_stationarity(Dom* dm, double* x, double* g, double tau) noexcept nogil:
    cdef int i, j, k = 0, n = dm.n, nv = dm.nv
    cdef double r, dot, best = 0.0, v
    cdef double xa, ya, ex, ey, t, cx, cy, d, ln
    cdef double nrm[4]
    if dm.kind == 0:
        r = 0.0
        for i in range(n):
            r += (x[i] - dm.par[i]) * (x[i] - dm.par[i])
        r = sqrt(r)
        dot = 0.0
        if r >= dm.par[n] - tau:
            for i in range(n):
                dot += g[i] * (x[i] - dm.par[i]) / r
        if dot > 0.0:
            dot = 0.0
        for i in range(n):
            v = g[i]
            if r >= dm.par[n] - tau:
                v -= dot * (x[i] - dm.par[i]) / r
            if fabs(v) > best:
                best = fabs(v)
        return best
    if dm.kind == 1:
        for i in range(n):
            v = g[i]
            if x[i] <= dm.par[i] + tau and v > 0.0:
                v = 0.0
            if x[i] >= dm.par[n + i] - tau and v < 0.0:
                v = 0.0
            if fabs(v) > best:
                best = fabs(v)
        return best
    if dm.kind == 2:
        for j in range(nv):
            xa = dm.poly[2 * j]
            ya = dm.poly[2 * j + 1]
            ex = dm.poly[2 * ((j + 1) % nv)] - xa
            ey = dm.poly[2 * ((j + 1) % nv) + 1] - ya
            ln = ex * ex + ey * ey
            t = ((x[0] - xa) * ex + (x[1] - ya) * ey) / ln
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            cx = xa + t * ex - x[0]
            cy = ya + t * ey - x[1]
            d = sqrt(cx * cx + cy * cy)
            if d <= tau and k < 2:
                ln = sqrt(ln)
                nrm[2 * k] = ey / ln
                nrm[2 * k + 1] = -ex / ln
                k += 1
        return cone_residual_2d(g[0], g[1], nrm, k)
    for i in range(n):
        if fabs(g[i]) > best:
            best = fabs(g[i])
    return best


cdef inline double kinv(int a, int b, int N) noexcept nogil:
    # entry of the inverse of tridiag(-1, 2, -1) for interior nodes a, b (0-based)
    cdef int i = a + 1, j = b + 1
    cdef int lo = i if i < j else j
    cdef int hi = i if i > j else j
    return lo * (N - hi) / <double> N


cdef int gauss_solve(double* S, double* b, int k) noexcept nogil:
    cdef int col, r, cc, piv
    cdef double best, f, t
    for col in range(k):
        piv = col
        best = fabs(S[col * k + col])
        for r in range(col + 1, k):
            if fabs(S[r * k + col]) > best:
                best = fabs(S[r * k + col])
                piv = r
        if best < 1e-300:
            return 0
        if piv != col:
            for cc in range(k):
                t = S[col * k + cc]
                S[col * k + cc] = S[piv * k + cc]
                S[piv * k + cc] = t
            t = b[col]
            b[col] = b[piv]
            b[piv] = t
        for r in range(col + 1, k):
            f = S[r * k + col] / S[col * k + col]
            for cc in range(col, k):
                S[r * k + cc] -= f * S[col * k + cc]
            b[r] -= f * b[col]
    for col in range(k - 1, -1, -1):
        t = b[col]
        for cc in range(col + 1, k):
            t -= S[col * k + cc] * b[cc]
        b[col] = t / S[col * k + col]
    return 1


cdef int collect_constraints(Dom* dm, double* X, int N, double tau, int* cidx, double* cnrm, int cap) noexcept nogil:
    # active constraints at interior nodes; node index stored 0-based
    cdef int k, i, j, c = 0, n = dm.n, nv = dm.nv
    cdef double r, xa, ya, ex, ey, ln, t, cx, cy
    cdef double* x
    for k in range(1, N):
        x = &X[k * n]
        if dm.kind == 0:
            r = 0.0
            for i in range(n):
                r += (x[i] - dm.par[i]) * (x[i] - dm.par[i])
            r = sqrt(r)
            if r >= dm.par[n] - tau and c < cap:
                for i in range(n):
                    cnrm[c * n + i] = (x[i] - dm.par[i]) / r
                cidx[c] = k - 1
                c += 1
        elif dm.kind == 1:
            for j in range(n):
                if x[j] <= dm.par[j] + tau and c < cap:
                    for i in range(n):
                        cnrm[c * n + i] = 0.0
                    cnrm[c * n + j] = -1.0
                    cidx[c] = k - 1
                    c += 1
                if x[j] >= dm.par[n + j] - tau and c < cap:
                    for i in range(n):
                        cnrm[c * n + i] = 0.0
                    cnrm[c * n + j] = 1.0
                    cidx[c] = k - 1
                    c += 1
        elif dm.kind == 2:
            for j in range(nv):
                xa = dm.poly[2 * j]
                ya = dm.poly[2 * j + 1]
                ex = dm.poly[2 * ((j + 1) % nv)] - xa
                ey = dm.poly[2 * ((j + 1) % nv) + 1] - ya
                ln = ex * ex + ey * ey
                t = ((x[0] - xa) * ex + (x[1] - ya) * ey) / ln
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx = xa + t * ex - x[0]
                cy = ya + t * ey - x[1]
                if sqrt(cx * cx + cy * cy) <= tau and c < cap:
                    ln = sqrt(ln)
                    cnrm[2 * c] = ey / ln
                    cnrm[2 * c + 1] = -ex / ln
                    cidx[c] = k - 1
                    c += 1
    return c


cdef void reduced_direction(double* d0, double* d, int m, int n, int N, double scale, int c,
                            int* cidx, double* cnrm, int* act, int* lst, double* S, double* mu) noexcept nogil:
    # Newton direction with binding constraints held as equalities (see _pykernels)
    cdef int a, b, i, k, it, na, worst, changed
    cdef double push, dot, wv, kv, mmax
    memcpy(d, d0, m * n * sizeof(double))
    if c == 0:
        return
    for a in range(c):
        push = 0.0
        for i in range(n):
            push += d0[cidx[a] * n + i] * cnrm[a * n + i]
        act[a] = 1 if push > 0.0 else 0
    for it in range(2 * c + 2):
        na = 0
        for a in range(c):
            if act[a]:
                lst[na] = a
                na += 1
        if na == 0:
            memcpy(d, d0, m * n * sizeof(double))
            return
        for a in range(na):
            for b in range(na):
                dot = 0.0
                for i in range(n):
                    dot += cnrm[lst[a] * n + i] * cnrm[lst[b] * n + i]
                S[a * na + b] = scale * kinv(cidx[lst[a]], cidx[lst[b]], N) * dot
            mu[a] = 0.0
            for i in range(n):
                mu[a] += d0[cidx[lst[a]] * n + i] * cnrm[lst[a] * n + i]
        if not gauss_solve(S, mu, na):
            act[lst[na - 1]] = 0
            continue
        mmax = 0.0
        for a in range(na):
            if fabs(mu[a]) > mmax:
                mmax = fabs(mu[a])
        worst = -1
        wv = -1e-14 * (1.0 + mmax)
        for a in range(na):
            if mu[a] < wv:
                wv = mu[a]
                worst = a
        if worst >= 0:
            act[lst[worst]] = 0
            continue
        for k in range(m):
            for i in range(n):
                d[k * n + i] = d0[k * n + i]
            for a in range(na):
                kv = scale * kinv(k, cidx[lst[a]], N) * mu[a]
                for i in range(n):
                    d[k * n + i] -= kv * cnrm[lst[a] * n + i]
        changed = 0
        for b in range(c):
            if not act[b]:
                dot = 0.0
                for i in range(n):
                    dot += d[cidx[b] * n + i] * cnrm[b * n + i]
                if dot > 1e-14 * scale:
                    act[b] = 1
                    changed = 1
        if not changed:
            return


cdef void laplace_solve(double* r, double* y, int m, int stride, double* cp) noexcept nogil:
    # solve tridiag(-1, 2, -1) y = r for one coordinate column
    cdef int i
    cdef double denom
    y[0] = r[0] / 2.0
    for i in range(1, m):
        denom = 2.0 + cp[i - 1]
        y[i * stride] = (r[i * stride] + y[(i - 1) * stride]) / denom
    for i in range(m - 2, -1, -1):
        y[i * stride] -= cp[i] * y[(i + 1) * stride]


cdef int run_descent(Quad* q, Dom* dm, double* X, int N, double dt, double tol, int maxiter,
                     double* out_val, double* out_dadt, int* out_conv) noexcept nogil:
    cdef int n = q.n
    cdef int sz = (N + 1) * n
    cdef int m = N - 1
    cdef int i, k, it = 0, ls, accepted, phase
    cdef double val, vn, dadt, dn, pg, diff, slope, alpha, scale, mass = 0.0, moved
    cdef double* g = <double*> malloc(sz * sizeof(double))
    cdef double* gn = <double*> malloc(sz * sizeof(double))
    cdef double* Xn = <double*> malloc(sz * sizeof(double))
    cdef double* d = <double*> malloc(sz * sizeof(double))
    cdef double* cp = <double*> malloc((m + 1) * sizeof(double))
    cdef double* d0 = <double*> malloc(sz * sizeof(double))
    cdef int cap = (m if m > 0 else 1) * 2 * n
    cdef int* cidx = <int*> malloc(cap * sizeof(int))
    cdef int* act = <int*> malloc(cap * sizeof(int))
    cdef int* lst = <int*> malloc(cap * sizeof(int))
    cdef double* cnrm = <double*> malloc(cap * n * sizeof(double))
    cdef double* mu = <double*> malloc(cap * sizeof(double))
    cdef double* S = NULL
    cdef int scap = 0, nc
    cdef double* swap
    for i in range(n):
        mass += q.A[i * n + i]
    mass /= n
    scale = dt / mass
    # forward-elimination coefficients of tridiag(-1, 2, -1)
    if m > 0:
        cp[0] = -0.5
        for i in range(1, m):
            cp[i] = -1.0 / (2.0 + cp[i - 1])
    val = quad_eval(q, X, N, dt, g, &dadt)
    out_conv[0] = 0
    if N < 2:
        out_conv[0] = 1
    while N >= 2:
        pg = 0.0
        for k in range(1, N):
            diff = node_stationarity(dm, &X[k * n], &g[k * n], 1e-9)
            if diff > pg:
                pg = diff
        if pg <= tol * (1.0 + fabs(val)):
            out_conv[0] = 1
            break
        if it >= maxiter:
            break
        for i in range(n):
            laplace_solve(&g[n + i], &d0[n + i], m, n, cp)
        for k in range(1, N):
            for i in range(n):
                d0[k * n + i] *= -scale
        nc = collect_constraints(dm, X, N, 1e-9, cidx, cnrm, cap)
        if nc > scap:
            free(S)
            scap = nc
            S = <double*> malloc(scap * scap * sizeof(double))
        reduced_direction(&d0[n], &d[n], m, n, N, scale, nc, cidx, cnrm, act, lst, S, mu)
        accepted = 0
        for phase in range(2):
            alpha = 1.0 if phase == 0 else 0.25 * scale
            for ls in range(MAX_BACKTRACK):
                memcpy(Xn, X, sz * sizeof(double))
                for k in range(1, N):
                    for i in range(n):
                        if phase == 0:
                            Xn[k * n + i] = X[k * n + i] + alpha * d[k * n + i]
                        else:
                            Xn[k * n + i] = X[k * n + i] - alpha * g[k * n + i]
                    project_point(dm, &Xn[k * n])
                vn = quad_eval(q, Xn, N, dt, gn, &dn)
                slope = 0.0
                for k in range(n, N * n):
                    slope += g[k] * (Xn[k] - X[k])
                if vn <= val + ARMIJO * (slope if slope < 0.0 else 0.0):
                    accepted = 1
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            break
        it += 1
        moved = 0.0
        for k in range(sz):
            diff = fabs(Xn[k] - X[k])
            if diff > moved:
                moved = diff
        memcpy(X, Xn, sz * sizeof(double))
        swap = g
        g = gn
        gn = swap
        val = vn
        dadt = dn
        if moved == 0.0:
            break
    out_val[0] = val
    out_dadt[0] = dadt
    free(g)
    free(gn)
    free(Xn)
    free(d)
    free(cp)
    free(d0)
    free(cidx)
    free(act)
    free(lst)
    free(cnrm)
    free(mu)
    free(S)
    return it


cdef void fill_quad(Quad* q, double[:, ::1] A, double[::1] s1, double[:, ::1] S2, double v0,
                    double[::1] w, double[:, ::1] Q):
    q.n = A.shape[0]
    q.A = &A[0, 0]
    q.s1 = &s1[0]
    q.S2 = &S2[0, 0]
    q.v0 = v0
    q.w = &w[0]
    q.Q = &Q[0, 0]


def quad_action_grad(double[:, ::1] X, double dt, double[:, ::1] A, double[::1] s1, double[:, ::1] S2,
                     double v0, double[::1] w, double[:, ::1] Q):
    """Action, node gradient and time derivative for the quadratic family."""
    cdef Quad q
    cdef int N = X.shape[0] - 1
    cdef double dadt, val
    if X.shape[1] > MAXD:
        raise ValueError("dimension too large for compiled kernel")
    fill_quad(&q, A, s1, S2, v0, w, Q)
    grad = np.zeros((N + 1, X.shape[1]))
    cdef double[:, ::1] G = grad
    with nogil:
        val = quad_eval(&q, &X[0, 0], N, dt, &G[0, 0], &dadt)
    return val, grad, dadt


def optimize_quad_path(X0, double dt, double[:, ::1] A, double[::1] s1, double[:, ::1] S2, double v0,
                       double[::1] w, double[:, ::1] Q, int kind, double[::1] par, double[:, ::1] poly,
                       double tol, int maxiter):
    """Compiled counterpart of ``_pykernels.optimize_quad_path``."""
    cdef Quad q
    cdef Dom dm
    cdef double val, dadt
    cdef int conv, it
    X = np.array(X0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] Xv = X
    cdef int N = X.shape[0] - 1
    if X.shape[1] > MAXD:
        raise ValueError("dimension too large for compiled kernel")
    if kind == 2 and X.shape[1] != 2:
        raise ValueError("polygon projection is planar")
    fill_quad(&q, A, s1, S2, v0, w, Q)
    dm.kind = kind
    dm.n = X.shape[1]
    dm.par = &par[0]
    dm.poly = &poly[0, 0]
    dm.nv = poly.shape[0]
    with nogil:
        it = run_descent(&q, &dm, &Xv[0, 0], N, dt, tol, maxiter, &val, &dadt, &conv)
    return X, val, dadt, it, bool(conv)


def polygon_sdf(double[:, ::1] P, double[:, ::1] V):
    """Signed distance of planar points to a polygon (negative inside)."""
    cdef int i, m = P.shape[0], nv = V.shape[0]
    cdef double c2[2]
    cdef double d
    out = np.empty(m)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            d = poly_closest(P[i, 0], P[i, 1], &V[0, 0], nv, c2)
            o[i] = -d if poly_inside(P[i, 0], P[i, 1], &V[0, 0], nv) else d
    return out


def project_points(P, int kind, double[::1] par, double[:, ::1] poly):
    """Metric projection of rows of ``P`` onto the encoded domain."""
    cdef Dom dm
    X = np.array(P, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] Xv = X
    cdef int k
    dm.kind = kind
    dm.n = X.shape[1]
    dm.par = &par[0]
    dm.poly = &poly[0, 0]
    dm.nv = poly.shape[0]
    with nogil:
        for k in range(Xv.shape[0]):
            project_point(&dm, &Xv[k, 0])
    return X
