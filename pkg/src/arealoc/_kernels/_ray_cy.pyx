# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ray-casting kernels; semantics mirror ray_numpy exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, cos, fabs, sin, sqrt

cnp.import_array()

cdef double T_LO = 1e-9
cdef double PAR_EPS = 1e-12
cdef double U_TOL = 1e-9
cdef double RECAST_GUARD = 1e-3


cdef inline double _weight_c(double sd) nogil:
    if sd <= -1.0:
        return 0.0
    if sd <= 0.0:
        return 1.0 / (1.5 * fabs(sd) + 1.0)
    if sd < 3.0:
        return 1.0 / (3.0 * sd + 1.0)
    return 0.0


cdef inline int _first_hit_range(const double[::1] ax, const double[::1] ay,
                                 const double[::1] bx, const double[::1] by,
                                 int e0, int e1, double ox, double oy,
                                 double dx, double dy, double tmin,
                                 double* t_out) nogil:
    cdef int best = -1
    cdef int e
    cdef double tbest = INFINITY
    cdef double ex, ey, fx, fy, denom, t, u
    for e in range(e0, e1):
        ex = bx[e] - ax[e]
        ey = by[e] - ay[e]
        denom = dx * ey - dy * ex
        if fabs(denom) <= PAR_EPS:
            continue
        fx = ax[e] - ox
        fy = ay[e] - oy
        t = (fx * ey - fy * ex) / denom
        if t < tmin or t >= tbest:
            continue
        u = (fx * dy - fy * dx) / denom
        if u < -U_TOL or u > 1.0 + U_TOL:
            continue
        tbest = t
        best = e
    t_out[0] = tbest
    return best


cdef inline void _foot_sd(double qx, double qy, double L, double t,
                          double eax, double eay, double ebx, double eby,
                          double* sd, double* cx, double* cy) nogil:
    cdef double ex = ebx - eax
    cdef double ey = eby - eay
    cdef double le2 = ex * ex + ey * ey
    cdef double s = ((qx - eax) * ex + (qy - eay) * ey) / le2
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    cx[0] = eax + s * ex
    cy[0] = eay + s * ey
    cdef double rx = qx - cx[0]
    cdef double ry = qy - cy[0]
    sd[0] = sqrt(rx * rx + ry * ry)
    if L < t:
        sd[0] = -sd[0]


cdef inline void _cast_one(const double[::1] ax, const double[::1] ay,
                           const double[::1] bx, const double[::1] by,
                           const signed char[::1] kind,
                           const int[::1] area_start, const int[::1] area_count,
                           int n_edges, int origin_area,
                           double ox, double oy, double qx, double qy,
                           double th_passage, int mode,
                           double* sd_out, int* seg_out, unsigned char* thr_out,
                           double* cx_out, double* cy_out) nogil:
    sd_out[0] = NAN
    seg_out[0] = -1
    thr_out[0] = 0
    cx_out[0] = NAN
    cy_out[0] = NAN

    cdef double lx = qx - ox
    cdef double ly = qy - oy
    cdef double L = sqrt(lx * lx + ly * ly)
    if L <= PAR_EPS:
        return
    cdef double dx = lx / L
    cdef double dy = ly / L

    cdef double t1, t2, sd, cx, cy
    cdef int g = _first_hit_range(ax, ay, bx, by, area_start[origin_area],
                                  area_start[origin_area] + area_count[origin_area],
                                  ox, oy, dx, dy, T_LO, &t1)
    if g < 0:
        return
    _foot_sd(qx, qy, L, t1, ax[g], ay[g], bx[g], by[g], &sd, &cx, &cy)

    cdef int k = kind[g]
    cdef bint recast
    if mode == 2:
        recast = False
    elif mode == 1:
        recast = k >= 1
    else:
        recast = (k == 2) or (k == 1 and sd > th_passage)
    if not recast:
        sd_out[0] = sd
        seg_out[0] = g
        cx_out[0] = cx
        cy_out[0] = cy
        return

    cdef int g2 = _first_hit_range(ax, ay, bx, by, 0, n_edges, ox, oy, dx, dy,
                                   t1 + RECAST_GUARD, &t2)
    if g2 < 0:
        return
    _foot_sd(qx, qy, L, t2, ax[g2], ay[g2], bx[g2], by[g2], &sd, &cx, &cy)
    sd_out[0] = sd
    seg_out[0] = g2
    thr_out[0] = 1
    cx_out[0] = cx
    cy_out[0] = cy


def cast_rays(const double[::1] ax, const double[::1] ay,
              const double[::1] bx, const double[::1] by,
              const signed char[::1] kind,
              const int[::1] area_start, const int[::1] area_count,
              int origin_area, double x, double y, double theta,
              const double[::1] px, const double[::1] py,
              double th_passage, int mode):
    cdef int n = px.shape[0]
    cdef int n_edges = ax.shape[0]
    sd_arr = np.empty(n)
    seg_arr = np.empty(n, dtype=np.int32)
    thr_arr = np.empty(n, dtype=np.uint8)
    cx_arr = np.empty(n)
    cy_arr = np.empty(n)
    cdef double[::1] sd = sd_arr
    cdef int[::1] seg = seg_arr
    cdef unsigned char[::1] thr = thr_arr
    cdef double[::1] cxs = cx_arr
    cdef double[::1] cys = cy_arr

    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef int j
    cdef double qx, qy
    with nogil:
        for j in range(n):
            qx = c * px[j] - s * py[j] + x
            qy = s * px[j] + c * py[j] + y
            _cast_one(ax, ay, bx, by, kind, area_start, area_count, n_edges,
                      origin_area, x, y, qx, qy, th_passage, mode,
                      &sd[j], &seg[j], &thr[j], &cxs[j], &cys[j])
    return sd_arr, seg_arr, thr_arr, cx_arr, cy_arr


def score_grid(const double[::1] ax, const double[::1] ay,
               const double[::1] bx, const double[::1] by,
               const signed char[::1] kind,
               const int[::1] area_start, const int[::1] area_count,
               const double[::1] gx, const double[::1] gy,
               const double[::1] gtheta, const int[::1] garea,
               const double[::1] px, const double[::1] py,
               double d, double penalty, double th_passage):
    cdef int n_guess = gx.shape[0]
    cdef int n = px.shape[0]
    cdef int n_edges = ax.shape[0]
    e1_arr = np.zeros(n_guess)
    e2_arr = np.zeros(n_guess)
    e3_arr = np.zeros(n_guess)
    cdef double[::1] e1 = e1_arr
    cdef double[::1] e2 = e2_arr
    cdef double[::1] e3 = e3_arr

    cdef int i, j, seg
    cdef double c, s, qx, qy, sd, asd, cx, cy
    cdef unsigned char thr
    with nogil:
        for i in range(n_guess):
            c = cos(gtheta[i])
            s = sin(gtheta[i])
            for j in range(n):
                qx = c * px[j] - s * py[j] + gx[i]
                qy = s * px[j] + c * py[j] + gy[i]
                _cast_one(ax, ay, bx, by, kind, area_start, area_count, n_edges,
                          garea[i], gx[i], gy[i], qx, qy, th_passage, 0,
                          &sd, &seg, &thr, &cx, &cy)
                if seg < 0:
                    e1[i] += penalty
                    continue
                asd = fabs(sd)
                e1[i] += asd if asd < d else penalty
                if sd > 0.0:
                    e2[i] += _weight_c(sd)
                    e3[i] += sd
    return e1_arr, e2_arr, e3_arr
