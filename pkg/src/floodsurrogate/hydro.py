"""Explicit finite-volume shallow-water solver on raster terrain.

Two formulations share one driver:

* Diffusion wave: per-face Manning discharge driven by the water-surface
  gradient, donor-cell depths, and a leveling limiter that never transfers
  more than a quarter of the head difference per step (keeps ponding stable
  at any dt).
* Full momentum: conservative (h, hu, hv) update with a local
  Lax-Friedrichs flux on hydrostatically reconstructed face states
  (well-balanced at lake-at-rest), bed-slope source, and point-implicit
  Manning friction.

Sign conventions: axis 0 runs north -> south, axis 1 west -> east. ``u`` is
velocity along axis 1 (positive east), ``v`` along axis 0 (positive south).
Face velocities are stored per cell with positive meaning outflow through
that face, so shared faces of adjacent cells hold exact negations.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import container
from .errors import DimensionError, NumericalFailureError, StagnationError

DIFFUSION_WAVE = "diffusion_wave"
FULL_MOMENTUM = "full_momentum"

#: Velocity magnitude (m/s) beyond which the full-momentum step aborts.
VELOCITY_GUARD = 20.0

_OPEN_EDGES = ("n", "s", "e", "w")


def inches_per_hour(value):
    """Convert a rainfall intensity in in/hr to m/s."""
    return value * 0.0254 / 3600.0


@dataclass
class RainSchedule:
    """Piecewise-constant rainfall intensity (m/s) over time.

    ``breakpoints`` are ascending times; ``intensities[k]`` applies on
    ``[breakpoints[k], breakpoints[k+1])`` and the last value extends to
    infinity. Times before the first breakpoint get intensity 0.
    """

    breakpoints: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        it = np.asarray(self.intensities, dtype=np.float64)
        if bp.ndim != 1 or it.ndim != 1 or bp.shape != it.shape or bp.size == 0:
            raise DimensionError(
                f"breakpoints and intensities must be equal-length 1-D, got {bp.shape} vs {it.shape}"
            )
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.breakpoints = bp
        self.intensities = it

    @classmethod
    def constant(cls, intensity):
        return cls(np.array([0.0]), np.array([float(intensity)]))

    def intensity_at(self, t):
        """Intensity at time(s) ``t``; vectorized."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        out = np.where(idx >= 0, self.intensities[np.clip(idx, 0, None)], 0.0)
        return out if out.ndim else float(out)


@dataclass
class SimState:
    """Water depth plus signed outflow velocities at the four cell faces.

    ``u``/``v`` carry the cell-centered velocity used by the full-momentum
    step; they are derived from the face planes when absent.
    """

    depth: np.ndarray
    face_vel_n: np.ndarray
    face_vel_s: np.ndarray
    face_vel_e: np.ndarray
    face_vel_w: np.ndarray
    sim_time: float = 0.0
    u: np.ndarray = None
    v: np.ndarray = None

    @property
    def shape(self):
        return self.depth.shape

    def cell_velocity(self):
        """Cell-centered (u, v) interpolated from the face planes."""
        if self.u is not None and self.v is not None:
            return self.u, self.v
        u = 0.5 * (self.face_vel_e - self.face_vel_w)
        v = 0.5 * (self.face_vel_s - self.face_vel_n)
        return u, v


def all_dry_state(terrain, sim_time=0.0):
    shape = (terrain.rows, terrain.cols)
    zeros = lambda: np.zeros(shape, dtype=np.float64)  # noqa: E731
    return SimState(zeros(), zeros(), zeros(), zeros(), zeros(), sim_time, zeros(), zeros())


@dataclass(frozen=True)
class SolverConfig:
    formulation: str = DIFFUSION_WAVE
    gravity: float = 9.80665
    wet_threshold: float = 1e-6
    courant_target: float = 0.5
    max_dt: float = 1.0
    min_dt: float = 0.01
    output_interval: float = 5.0
    rainfall_intensity: float = 0.0
    duration: float = 3600.0
    open_edges: frozenset = frozenset()
    max_substeps: int = 200_000

    def __post_init__(self):
        if self.formulation not in (DIFFUSION_WAVE, FULL_MOMENTUM):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if not 0.0 < self.courant_target <= 1.0:
            raise ValueError(f"courant_target must be in (0, 1], got {self.courant_target}")
        if not 0.0 < self.min_dt <= self.max_dt:
            raise ValueError(f"need 0 < min_dt <= max_dt, got {self.min_dt}, {self.max_dt}")
        if self.output_interval <= 0.0:
            raise ValueError("output_interval must be > 0")
        if self.wet_threshold <= 0.0:
            raise ValueError("wet_threshold must be > 0")
        if self.rainfall_intensity < 0.0:
            raise ValueError("rainfall_intensity must be >= 0")
        bad = set(self.open_edges) - set(_OPEN_EDGES)
        if bad:
            raise ValueError(f"unknown open edges {sorted(bad)}; valid: {_OPEN_EDGES}")
        object.__setattr__(self, "open_edges", frozenset(self.open_edges))


@dataclass(frozen=True)
class MassAuditRow:
    sim_time: float
    domain_mass: float
    rain_cumulative: float
    outflow_cumulative: float
    imbalance_ratio: float


@dataclass
class SnapshotSeries:
    """Snapshot planes every ``output_interval`` seconds, float32 storage."""

    times: np.ndarray
    depth: np.ndarray
    vel_n: np.ndarray
    vel_s: np.ndarray
    vel_e: np.ndarray
    vel_w: np.ndarray
    cell_size: float
    meta: dict = field(default_factory=dict)

    @property
    def n_snapshots(self):
        return self.times.shape[0]

    @property
    def grid_shape(self):
        return self.depth.shape[1:]

    def state_matrix(self, t_index):
        """All cells' [h, v_n, v_s, v_e, v_w] at one snapshot, row-major cells."""
        planes = (self.depth, self.vel_n, self.vel_s, self.vel_e, self.vel_w)
        return np.stack([p[t_index].reshape(-1) for p in planes], axis=1).astype(np.float64)


def _check_finite_state(state):
    for name, arr in (
        ("depth", state.depth),
        ("face_vel_n", state.face_vel_n),
        ("face_vel_s", state.face_vel_s),
        ("face_vel_e", state.face_vel_e),
        ("face_vel_w", state.face_vel_w),
    ):
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise NumericalFailureError(
                f"non-finite {name} at cell ({bad[0]}, {bad[1]}), t={state.sim_time}",
                cell=(int(bad[0]), int(bad[1])),
                sim_time=state.sim_time,
            )


def _depth_power(h):
    # h^(5/3) via cbrt, cheaper than np.power for large grids
    return h * np.cbrt(h * h)


# ---------------------------------------------------------------------------
# Diffusion wave
# ---------------------------------------------------------------------------


def step_diffusion(state, terrain, config, dt):
    """One explicit diffusion-wave step of length ``dt``; returns a new state."""
    new_state, _ = _step_diffusion_impl(state, terrain, config, dt)
    return new_state


def _step_diffusion_impl(state, terrain, config, dt):
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    _check_finite_state(state)
    h = state.depth
    z = terrain.elevation
    n = terrain.manning_n
    dx = terrain.cell_size
    wt = config.wet_threshold
    area = dx * dx

    eta = z + h
    hp = _depth_power(h)
    cap_coef = area / (4.0 * dt)

    # interior x faces: index (i, f) is the face between cells (i, f) and (i, f+1)
    deta_x = (eta[:, 1:] - eta[:, :-1]) / dx
    donor_e = deta_x > 0.0  # east cell higher -> donor is east
    h_dn_x = np.where(donor_e, h[:, 1:], h[:, :-1])
    hp_dn_x = np.where(donor_e, hp[:, 1:], hp[:, :-1])
    nf_x = 0.5 * (n[:, 1:] + n[:, :-1])
    s_x = np.abs(deta_x)
    mag_x = np.zeros_like(s_x)
    live_x = (h_dn_x >= wt) & (s_x > 0.0)
    np.divide(hp_dn_x * np.sqrt(s_x), nf_x, out=mag_x, where=live_x)
    np.minimum(mag_x, s_x * cap_coef, out=mag_x)  # leveling limiter
    q_x = np.where(donor_e, -mag_x, mag_x)  # positive = eastward flow

    # interior y faces: (f, j) between cells (f, j) and (f+1, j)
    deta_y = (eta[1:, :] - eta[:-1, :]) / dx
    donor_s = deta_y > 0.0
    h_dn_y = np.where(donor_s, h[1:, :], h[:-1, :])
    hp_dn_y = np.where(donor_s, hp[1:, :], hp[:-1, :])
    nf_y = 0.5 * (n[1:, :] + n[:-1, :])
    s_y = np.abs(deta_y)
    mag_y = np.zeros_like(s_y)
    live_y = (h_dn_y >= wt) & (s_y > 0.0)
    np.divide(hp_dn_y * np.sqrt(s_y), nf_y, out=mag_y, where=live_y)
    np.minimum(mag_y, s_y * cap_coef, out=mag_y)
    q_y = np.where(donor_s, -mag_y, mag_y)  # positive = southward flow

    # free-outfall edges: ghost cell with the same bed and zero depth
    edge_q = {}
    for edge in config.open_edges:
        he, ne_ = _edge_cells(h, n, edge)
        s_e = he / dx
        mag = np.zeros_like(he)
        live = (he >= wt) & (s_e > 0.0)
        np.divide(_depth_power(he) * np.sqrt(s_e), ne_, out=mag, where=live)
        np.minimum(mag, s_e * cap_coef, out=mag)
        edge_q[edge] = mag  # always outflow

    # donor scaling so no cell can shed more volume than it holds
    out = np.zeros_like(h)
    out[:, :-1] += np.maximum(q_x, 0.0)
    out[:, 1:] += np.maximum(-q_x, 0.0)
    out[:-1, :] += np.maximum(q_y, 0.0)
    out[1:, :] += np.maximum(-q_y, 0.0)
    for edge, mag in edge_q.items():
        _edge_slice(out, edge)[...] += mag
    scale = np.ones_like(h)
    avail = h * (dx / dt)  # volume rate / face length
    np.divide(avail, out, out=scale, where=out > avail)
    q_x = q_x * np.where(donor_e, scale[:, 1:], scale[:, :-1])
    q_y = q_y * np.where(donor_s, scale[1:, :], scale[:-1, :])
    for edge in edge_q:
        edge_q[edge] = edge_q[edge] * _edge_slice(scale, edge)

    # conservative depth update (q has units m^2/s; divide by dx for depth rate)
    net = np.zeros_like(h)
    net[:, :-1] -= q_x
    net[:, 1:] += q_x
    net[:-1, :] -= q_y
    net[1:, :] += q_y
    outflow_volume = 0.0
    for edge, mag in edge_q.items():
        _edge_slice(net, edge)[...] -= mag
        outflow_volume += float(np.sum(mag)) * dx * dt
    h_new = h + dt * (net / dx + config.rainfall_intensity)
    np.maximum(h_new, 0.0, out=h_new)

    # face velocities from the limited discharges
    vel_x = np.zeros_like(q_x)
    np.divide(np.abs(q_x), h_dn_x, out=vel_x, where=h_dn_x >= wt)
    vel_x *= np.sign(q_x)
    vel_y = np.zeros_like(q_y)
    np.divide(np.abs(q_y), h_dn_y, out=vel_y, where=h_dn_y >= wt)
    vel_y *= np.sign(q_y)
    dry_new = h_new < wt
    vel_x[dry_new[:, :-1] | dry_new[:, 1:]] = 0.0
    vel_y[dry_new[:-1, :] | dry_new[1:, :]] = 0.0

    fe = np.zeros_like(h)
    fw = np.zeros_like(h)
    fs = np.zeros_like(h)
    fn = np.zeros_like(h)
    fe[:, :-1] = vel_x
    fw[:, 1:] = -vel_x
    fs[:-1, :] = vel_y
    fn[1:, :] = -vel_y
    for edge, mag in edge_q.items():
        he = _edge_cells(h, n, edge)[0]
        vel = np.zeros_like(mag)
        np.divide(mag, he, out=vel, where=he >= wt)
        vel[_edge_slice(dry_new, edge)] = 0.0
        _edge_slice(_edge_plane(edge, fn, fs, fe, fw), edge)[...] = vel

    new_state = SimState(h_new, fn, fs, fe, fw, state.sim_time + dt, None, None)
    return new_state, outflow_volume


def _edge_cells(h, n, edge):
    if edge == "n":
        return h[0, :], n[0, :]
    if edge == "s":
        return h[-1, :], n[-1, :]
    if edge == "e":
        return h[:, -1], n[:, -1]
    return h[:, 0], n[:, 0]


def _edge_slice(arr, edge):
    if edge == "n":
        return arr[0, :]
    if edge == "s":
        return arr[-1, :]
    if edge == "e":
        return arr[:, -1]
    return arr[:, 0]


def _edge_plane(edge, fn, fs, fe, fw):
    return {"n": fn, "s": fs, "e": fe, "w": fw}[edge]


# ---------------------------------------------------------------------------
# Full momentum
# ---------------------------------------------------------------------------


def step_full_momentum(state, terrain, config, dt):
    """One explicit full-momentum step of length ``dt``; returns a new state."""
    new_state, _ = _step_full_momentum_impl(state, terrain, config, dt)
    return new_state


def _rusanov_face(h_l, h_r, un_l, un_r, ut_l, ut_r, g):
    """Local Lax-Friedrichs flux for reconstructed face states.

    ``un`` is the velocity normal to the face (positive toward the right
    state), ``ut`` tangential. Returns (mass, normal momentum, tangential
    momentum) fluxes.
    """
    qn_l = h_l * un_l
    qn_r = h_r * un_r
    qt_l = h_l * ut_l
    qt_r = h_r * ut_r
    a = np.maximum(np.abs(un_l) + np.sqrt(g * h_l), np.abs(un_r) + np.sqrt(g * h_r))
    f_h = 0.5 * (qn_l + qn_r) - 0.5 * a * (h_r - h_l)
    f_qn = 0.5 * (qn_l * un_l + 0.5 * g * h_l * h_l + qn_r * un_r + 0.5 * g * h_r * h_r) - 0.5 * a * (qn_r - qn_l)
    f_qt = 0.5 * (qn_l * ut_l + qn_r * ut_r) - 0.5 * a * (qt_r - qt_l)
    return f_h, f_qn, f_qt


def _step_full_momentum_impl(state, terrain, config, dt):
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    _check_finite_state(state)
    h = state.depth
    z = terrain.elevation
    n = terrain.manning_n
    dx = terrain.cell_size
    g = config.gravity
    wt = config.wet_threshold

    u, v = state.cell_velocity()
    wet = h >= wt
    u = np.where(wet, u, 0.0)
    v = np.where(wet, v, 0.0)
    eta = z + h

    # hydrostatic reconstruction at interior x faces
    zf_x = np.maximum(z[:, :-1], z[:, 1:])
    hl_x = np.maximum(eta[:, :-1] - zf_x, 0.0)
    hr_x = np.maximum(eta[:, 1:] - zf_x, 0.0)
    fh_x, fqu_x, fqv_x = _rusanov_face(hl_x, hr_x, u[:, :-1], u[:, 1:], v[:, :-1], v[:, 1:], g)

    # interior y faces (normal velocity is v, positive southward)
    zf_y = np.maximum(z[:-1, :], z[1:, :])
    hl_y = np.maximum(eta[:-1, :] - zf_y, 0.0)
    hr_y = np.maximum(eta[1:, :] - zf_y, 0.0)
    fh_y, fqv_y, fqu_y = _rusanov_face(hl_y, hr_y, v[:-1, :], v[1:, :], u[:-1, :], u[1:, :], g)

    # free-outfall edges: dry ghost with the same bed elevation
    edge_fluxes = {}
    for edge in config.open_edges:
        he = _edge_slice(h, edge)
        zero = np.zeros_like(he)
        if edge in ("e", "w"):
            un = _edge_slice(u, edge)
            ut = _edge_slice(v, edge)
        else:
            un = _edge_slice(v, edge)
            ut = _edge_slice(u, edge)
        sign = 1.0 if edge in ("s", "e") else -1.0
        fh, fqn, fqt = _rusanov_face(he, zero, sign * un, zero, ut, zero, g)
        edge_fluxes[edge] = (fh, fqn, fqt, sign)

    # positivity: scale each face's full flux by its mass-donor cell factor
    out = np.zeros_like(h)
    out[:, :-1] += np.maximum(fh_x, 0.0)
    out[:, 1:] += np.maximum(-fh_x, 0.0)
    out[:-1, :] += np.maximum(fh_y, 0.0)
    out[1:, :] += np.maximum(-fh_y, 0.0)
    for edge, (fh, _, _, _) in edge_fluxes.items():
        _edge_slice(out, edge)[...] += np.maximum(fh, 0.0)
    scale = np.ones_like(h)
    avail = h * (dx / dt)
    np.divide(avail, out, out=scale, where=out > avail)
    sc_x = np.where(fh_x > 0.0, scale[:, :-1], scale[:, 1:])
    sc_y = np.where(fh_y > 0.0, scale[:-1, :], scale[1:, :])
    fh_x, fqu_x, fqv_x = fh_x * sc_x, fqu_x * sc_x, fqv_x * sc_x
    fh_y, fqv_y, fqu_y = fh_y * sc_y, fqv_y * sc_y, fqu_y * sc_y
    for edge, (fh, fqn, fqt, sign) in list(edge_fluxes.items()):
        sc = _edge_slice(scale, edge)
        edge_fluxes[edge] = (fh * sc, fqn * sc, fqt * sc, sign)

    # divergence with reflective walls: mass flux 0, momentum flux g h^2 / 2,
    # which cancels the bed source exactly at rest
    hh = 0.5 * g * h * h
    dh = np.zeros_like(h)
    dqu = np.zeros_like(h)
    dqv = np.zeros_like(h)

    dh[:, :-1] -= fh_x
    dh[:, 1:] += fh_x
    dh[:-1, :] -= fh_y
    dh[1:, :] += fh_y

    dqu[:, :-1] -= fqu_x
    dqu[:, 1:] += fqu_x
    dqu[:-1, :] -= fqu_y
    dqu[1:, :] += fqu_y
    # wall pressure at east/west walls
    dqu[:, -1] -= hh[:, -1]
    dqu[:, 0] += hh[:, 0]

    dqv[:-1, :] -= fqv_y
    dqv[1:, :] += fqv_y
    dqv[:, :-1] -= fqv_x
    dqv[:, 1:] += fqv_x
    dqv[-1, :] -= hh[-1, :]
    dqv[0, :] += hh[0, :]

    # open edges replace the reflective wall pressure with the outfall flux;
    # fqn is in the outward-normal frame, hence the sign factor
    outflow_volume = 0.0
    for edge, (fh, fqn, fqt, sign) in edge_fluxes.items():
        _edge_slice(dh, edge)[...] -= fh
        if edge in ("e", "w"):
            _edge_slice(dqu, edge)[...] += sign * (_edge_slice(hh, edge) - fqn)
            _edge_slice(dqv, edge)[...] -= fqt
        else:
            _edge_slice(dqv, edge)[...] += sign * (_edge_slice(hh, edge) - fqn)
            _edge_slice(dqu, edge)[...] -= fqt
        outflow_volume += float(np.sum(fh)) * dx * dt

    # bed-slope source: g/(2 dx) * (east/south face recon^2 - west/north face recon^2)
    h_e = np.empty_like(h)
    h_w = np.empty_like(h)
    h_e[:, :-1] = hl_x
    h_e[:, -1] = h[:, -1]
    h_w[:, 1:] = hr_x
    h_w[:, 0] = h[:, 0]
    h_s = np.empty_like(h)
    h_n = np.empty_like(h)
    h_s[:-1, :] = hl_y
    h_s[-1, :] = h[-1, :]
    h_n[1:, :] = hr_y
    h_n[0, :] = h[0, :]
    for edge in config.open_edges:
        # open edges keep the cell's own depth as the face reconstruction
        pass
    src_u = 0.5 * g * (h_e * h_e - h_w * h_w)
    src_v = 0.5 * g * (h_s * h_s - h_n * h_n)

    hu = h * u
    hv = h * v
    h_new = h + dt * (dh / dx + config.rainfall_intensity)
    np.maximum(h_new, 0.0, out=h_new)
    hu_new = hu + dt * (dqu + src_u) / dx
    hv_new = hv + dt * (dqv + src_v) / dx

    wet_new = h_new >= wt
    u_new = np.zeros_like(h)
    v_new = np.zeros_like(h)
    np.divide(hu_new, h_new, out=u_new, where=wet_new)
    np.divide(hv_new, h_new, out=v_new, where=wet_new)

    # point-implicit Manning friction on the primitive velocities
    speed = np.hypot(u_new, v_new)
    h43 = np.ones_like(h)
    np.power(h_new, 4.0 / 3.0, out=h43, where=wet_new)
    denom = 1.0 + dt * g * n * n * speed / h43
    u_new = np.where(wet_new, u_new / denom, 0.0)
    v_new = np.where(wet_new, v_new / denom, 0.0)

    max_speed = float(np.max(np.abs(u_new), initial=0.0))
    max_speed = max(max_speed, float(np.max(np.abs(v_new), initial=0.0)))
    if not np.isfinite(max_speed) or max_speed > VELOCITY_GUARD:
        bad = np.argwhere((~np.isfinite(u_new)) | (np.abs(u_new) > VELOCITY_GUARD) | (np.abs(v_new) > VELOCITY_GUARD))
        cell = (int(bad[0][0]), int(bad[0][1])) if len(bad) else None
        raise NumericalFailureError(
            f"velocity guard tripped (|u| > {VELOCITY_GUARD} m/s) at cell {cell}, t={state.sim_time}",
            cell=cell,
            sim_time=state.sim_time,
        )

    # face planes from interpolated cell velocities
    fe = np.zeros_like(h)
    fw = np.zeros_like(h)
    fs = np.zeros_like(h)
    fn = np.zeros_like(h)
    uf = 0.5 * (u_new[:, :-1] + u_new[:, 1:])
    vf = 0.5 * (v_new[:-1, :] + v_new[1:, :])
    dry_new = ~wet_new
    uf[dry_new[:, :-1] | dry_new[:, 1:]] = 0.0
    vf[dry_new[:-1, :] | dry_new[1:, :]] = 0.0
    fe[:, :-1] = uf
    fw[:, 1:] = -uf
    fs[:-1, :] = vf
    fn[1:, :] = -vf
    for edge in config.open_edges:
        vel = _edge_slice(u_new if edge in ("e", "w") else v_new, edge).copy()
        sign = 1.0 if edge in ("s", "e") else -1.0
        vel = sign * vel
        vel[_edge_slice(dry_new, edge)] = 0.0
        _edge_slice(_edge_plane(edge, fn, fs, fe, fw), edge)[...] = vel

    new_state = SimState(h_new, fn, fs, fe, fw, state.sim_time + dt, u_new, v_new)
    return new_state, outflow_volume


# ---------------------------------------------------------------------------
# Timestep control and the driver
# ---------------------------------------------------------------------------


def compute_stable_dt(state, terrain, config):
    """Adaptive stable timestep, clamped to [min_dt, max_dt].

    Full momentum: advective CFL ``courant * dx / max(|u| + |v| + sqrt(g h))``
    over wet cells. Diffusion wave: ``courant * dx^2 / (4 max D)`` with the
    face diffusivity ``D = h_donor^(5/3) / (2 n_face sqrt(|grad eta|))`` on
    flowing faces. An all-dry state returns max_dt.
    """
    h = state.depth
    wt = config.wet_threshold
    wet = h >= wt
    if not np.any(wet):
        return config.max_dt
    dx = terrain.cell_size
    if config.formulation == FULL_MOMENTUM:
        u, v = state.cell_velocity()
        speed = np.abs(u) + np.abs(v) + np.sqrt(config.gravity * h)
        peak = float(np.max(speed[wet], initial=0.0))
        if peak <= 0.0:
            return config.max_dt
        dt = config.courant_target * dx / peak
    else:
        z = terrain.elevation
        n = terrain.manning_n
        eta = z + h
        hp = _depth_power(h)
        peak_d = 0.0
        for axis in (0, 1):
            if h.shape[axis] < 2:
                continue
            if axis == 1:
                deta = np.abs(eta[:, 1:] - eta[:, :-1]) / dx
                donor_hi = (eta[:, 1:] - eta[:, :-1]) > 0.0
                h_dn = np.where(donor_hi, h[:, 1:], h[:, :-1])
                hp_dn = np.where(donor_hi, hp[:, 1:], hp[:, :-1])
                nf = 0.5 * (n[:, 1:] + n[:, :-1])
            else:
                deta = np.abs(eta[1:, :] - eta[:-1, :]) / dx
                donor_hi = (eta[1:, :] - eta[:-1, :]) > 0.0
                h_dn = np.where(donor_hi, h[1:, :], h[:-1, :])
                hp_dn = np.where(donor_hi, hp[1:, :], hp[:-1, :])
                nf = 0.5 * (n[1:, :] + n[:-1, :])
            live = (h_dn >= wt) & (deta > 0.0)
            if not np.any(live):
                continue
            diffusivity = hp_dn[live] / (2.0 * nf[live] * np.sqrt(deta[live]))
            peak_d = max(peak_d, float(np.max(diffusivity)))
        if peak_d <= 0.0:
            return config.max_dt
        dt = config.courant_target * dx * dx / (4.0 * peak_d)
    return float(min(max(dt, config.min_dt), config.max_dt))


def _snap_planes(state):
    return (
        state.depth.astype(np.float32),
        state.face_vel_n.astype(np.float32),
        state.face_vel_s.astype(np.float32),
        state.face_vel_e.astype(np.float32),
        state.face_vel_w.astype(np.float32),
    )


def run_simulation(terrain, config):
    """Simulate from an all-dry state; returns (SnapshotSeries, audit rows).

    Snapshots are emitted at t=0 and every ``output_interval`` seconds;
    ``duration`` must be a positive multiple of the interval. One mass-audit
    row accompanies each snapshot.
    """
    interval = config.output_interval
    n_intervals = round(config.duration / interval)
    if n_intervals < 1 or abs(n_intervals * interval - config.duration) > 1e-9 * max(1.0, config.duration):
        raise ValueError(
            f"duration ({config.duration}) must be a positive multiple of output_interval ({interval})"
        )
    stepper = _step_full_momentum_impl if config.formulation == FULL_MOMENTUM else _step_diffusion_impl
    area = terrain.cell_area
    n_cells = terrain.n_cells

    state = all_dry_state(terrain)
    times = [0.0]
    planes = [_snap_planes(state)]
    rain_cum = 0.0
    outflow_cum = 0.0
    prev_mass = float(np.sum(state.depth)) * area
    prev_rain = 0.0
    prev_out = 0.0
    audit = [MassAuditRow(0.0, prev_mass, 0.0, 0.0, 1.0)]

    for k in range(1, n_intervals + 1):
        t_target = k * interval
        steps = 0
        while state.sim_time < t_target - 1e-9:
            dt = compute_stable_dt(state, terrain, config)
            dt = min(dt, t_target - state.sim_time)
            try:
                state, outflow = stepper(state, terrain, config, dt)
            except NumericalFailureError as exc:
                raise NumericalFailureError(
                    f"{exc} (while integrating toward snapshot {k})",
                    cell=exc.cell,
                    sim_time=exc.sim_time,
                ) from exc
            rain_cum += config.rainfall_intensity * dt * area * n_cells
            outflow_cum += outflow
            steps += 1
            if steps > config.max_substeps:
                raise StagnationError(
                    f"exceeded {config.max_substeps} sub-steps in interval ending at t={t_target}"
                )
        state.sim_time = t_target  # snap to the reporting grid
        mass = float(np.sum(state.depth)) * area
        d_mass = mass - prev_mass
        d_net = (rain_cum - prev_rain) - (outflow_cum - prev_out)
        if d_net != 0.0:
            ratio = d_mass / d_net
        else:
            ratio = 1.0 if abs(d_mass) <= 1e-12 * max(1.0, mass) else math.inf
        audit.append(MassAuditRow(t_target, mass, rain_cum, outflow_cum, ratio))
        times.append(t_target)
        planes.append(_snap_planes(state))
        prev_mass, prev_rain, prev_out = mass, rain_cum, outflow_cum

    series = SnapshotSeries(
        times=np.array(times, dtype=np.float64),
        depth=np.stack([p[0] for p in planes]),
        vel_n=np.stack([p[1] for p in planes]),
        vel_s=np.stack([p[2] for p in planes]),
        vel_e=np.stack([p[3] for p in planes]),
        vel_w=np.stack([p[4] for p in planes]),
        cell_size=terrain.cell_size,
        meta={
            "formulation": config.formulation,
            "rainfall_intensity": config.rainfall_intensity,
            "duration": config.duration,
            "output_interval": interval,
        },
    )
    return series, audit


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_snapshots(path, series):
    manifest = {
        "kind": "snapshots",
        "rows": series.depth.shape[1],
        "cols": series.depth.shape[2],
        "cell_size": repr(series.cell_size),
        "n_snapshots": series.n_snapshots,
    }
    for key, value in series.meta.items():
        manifest[f"meta_{key}"] = value
    arrays = {
        "times": series.times.astype("<f8"),
        "depth": series.depth.astype("<f4"),
        "vel_n": series.vel_n.astype("<f4"),
        "vel_s": series.vel_s.astype("<f4"),
        "vel_e": series.vel_e.astype("<f4"),
        "vel_w": series.vel_w.astype("<f4"),
    }
    container.write_container(path, manifest, arrays)


def load_snapshots(path):
    manifest, arrays = container.read_container(path)
    if manifest.get("kind") != "snapshots":
        raise ValueError(f"{path} is not a snapshot container (kind={manifest.get('kind')!r})")
    meta = {k[5:]: v for k, v in manifest.items() if k.startswith("meta_")}
    return SnapshotSeries(
        times=arrays["times"].astype(np.float64),
        depth=arrays["depth"],
        vel_n=arrays["vel_n"],
        vel_s=arrays["vel_s"],
        vel_e=arrays["vel_e"],
        vel_w=arrays["vel_w"],
        cell_size=float(manifest["cell_size"]),
        meta=meta,
    )


AUDIT_HEADER = ["sim_time", "domain_mass", "rain_cumulative", "outflow_cumulative", "imbalance_ratio"]


def save_mass_audit(path, rows):
    container.write_csv(
        path,
        AUDIT_HEADER,
        [
            (row.sim_time, row.domain_mass, row.rain_cumulative, row.outflow_cumulative, row.imbalance_ratio)
            for row in rows
        ],
    )


def load_mass_audit(path):
    header, rows = container.read_csv(path)
    if header != AUDIT_HEADER:
        raise ValueError(f"{path}: unexpected audit header {header}")
    return [MassAuditRow(*(float(cell) for cell in row)) for row in rows]
