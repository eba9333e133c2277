"""Deterministic 2D rigid-body simulation of stacked square blocks.

Semi-implicit Euler integration with sequential-impulse contact resolution
(accumulated impulses, Coulomb friction clamp, Baumgarte positional bias,
speculative ground contacts). Equal-mass uniform-density squares on a flat
ground plane. The inner step loop is JIT-compiled with numba; it runs the
same (slowly) with NUMBA_DISABLE_JIT=1.

Also provides an analytic static-stability oracle for axis-aligned stacks
and the binary "fell" labeler applied to simulated trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

DEG10 = math.radians(10.0)

# Speculative contact detection distances, relative to block side / slop.
# Wide enough that one integration step at terminal fall speed cannot jump
# past detection (see test_no_tunneling).
_GROUND_MARGIN_FRAC = 0.05
_BOX_MARGIN_SLOPS = 4.0
_RESTITUTION_SPEED_THRESHOLD = 1.0


class NonAxisAlignedError(ValueError):
    """Static stability oracle called on a rotated block."""


class DivergedSimulationError(RuntimeError):
    """A pose became non-finite during integration."""


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.8
    side: float = 1.0
    mass: float = 1.0
    friction_mu: float = 0.6
    restitution: float = 0.0
    dt: float = 1.0 / 240.0
    solver_iters: int = 16
    baumgarte_beta: float = 0.2
    slop: float = 0.005
    sim_duration: float = 5.0

    def __post_init__(self):
        if not (self.gravity > 0 and self.side > 0 and self.dt > 0):
            raise ValueError("gravity, side and dt must be positive")
        if self.solver_iters < 1:
            raise ValueError("solver_iters must be >= 1")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if self.friction_mu < 0:
            raise ValueError("friction_mu must be >= 0")


@dataclass(frozen=True)
class BlockPose:
    x: float
    y: float
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.theta, self.vx, self.vy, self.omega):
            if not math.isfinite(v):
                raise ValueError("block pose must be finite")


@dataclass(frozen=True)
class TowerScene:
    """World state: blocks ordered bottom-to-top plus physical parameters."""

    blocks: tuple[BlockPose, ...]
    class_ids: tuple[int, ...]
    params: PhysicsParams = field(default_factory=PhysicsParams)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "class_ids", tuple(self.class_ids))
        n = len(self.blocks)
        if not 2 <= n <= 4:
            raise ValueError("towers have 2 to 4 blocks")
        if len(self.class_ids) != n:
            raise ValueError("one class id per block")
        if len(set(self.class_ids)) != n or not all(1 <= c <= 4 for c in self.class_ids):
            raise ValueError("class ids must be distinct values in 1..4")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def pose_array(self) -> np.ndarray:
        """(n, 6) float64 array of (x, y, theta, vx, vy, omega)."""
        return np.array(
            [[b.x, b.y, b.theta, b.vx, b.vy, b.omega] for b in self.blocks],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Trajectory:
    """Per-block pose snapshots at a fixed capture rate.

    poses has shape (n_frames, n_blocks, 6) with columns
    (x, y, theta, vx, vy, omega); frame 0 is the initial scene.
    """

    capture_hz: float
    duration: float
    poses: np.ndarray

    def __post_init__(self):
        self.poses.flags.writeable = False
        expected = int(math.floor(self.duration * self.capture_hz)) + 1
        if self.poses.shape[0] != expected:
            raise ValueError(
                f"expected {expected} frames for duration {self.duration}s "
                f"at {self.capture_hz} fps, got {self.poses.shape[0]}"
            )

    @property
    def n_frames(self) -> int:
        return self.poses.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.poses.shape[1]

    def frame_time(self, index: int) -> float:
        return index / self.capture_hz

    def frame_at_time(self, t: float) -> int:
        """Index of the captured frame nearest to time t."""
        if not 0.0 <= t <= self.duration + 1e-9:
            raise ValueError(f"time {t} outside [0, {self.duration}]")
        return min(int(round(t * self.capture_hz)), self.n_frames - 1)


@dataclass(frozen=True)
class StabilityReport:
    """Signed stability margin and the per-interface support geometry.

    per_interface rows are (interface index, support lo, support hi,
    supported-COM x). Interface 0 is the ground contact. An empty support
    interval is reported with lo > hi and a margin equal to minus the gap.
    """

    margin: float
    per_interface: tuple[tuple[int, float, float, float], ...]

    @property
    def stable(self) -> bool:
        return self.margin > 0.0


def static_stability(scene: TowerScene) -> StabilityReport:
    """Analytic stability of an axis-aligned stack.

    For each interface the weight of everything above must pass through the
    horizontal overlap of the two footprints; the margin is the distance
    from the supported centre of mass to the nearest support edge, minimised
    over interfaces. Positive margin means statically stable.
    """
    for b in scene.blocks:
        if abs(b.theta) > 1e-9:
            raise NonAxisAlignedError(f"block rotated by {b.theta} rad")
    h = scene.params.side / 2.0
    xs = [b.x for b in scene.blocks]
    n = len(xs)
    rows = []
    margin = math.inf
    for k in range(n):
        if k == 0:
            lo, hi = xs[0] - h, xs[0] + h
        else:
            lo = max(xs[k - 1] - h, xs[k] - h)
            hi = min(xs[k - 1] + h, xs[k] + h)
        above = xs[k:]
        com = sum(above) / len(above)
        if hi >= lo:
            m_k = min(com - lo, hi - com)
        else:
            m_k = hi - lo  # negative: minus the footprint gap
        rows.append((k, lo, hi, com))
        margin = min(margin, m_k)
    return StabilityReport(margin=margin, per_interface=tuple(rows))


# ---------------------------------------------------------------------------
# Simulation kernel (numba)
# ---------------------------------------------------------------------------

_CAP = 24  # max simultaneous contact points for 4 blocks + ground


@njit(cache=True)
def _collide_box_box(xa, ya, tha, xb, yb, thb, h, margin,
                     px, py, nx, ny, sep, base):
    """Box-box contact manifold via reference-face clipping (<= 2 points).

    Returns the number of points written at `base`. Normals point from box
    A to box B. Points with separation in (0, margin] are kept so the solver
    can treat them speculatively.
    """
    ca = math.cos(tha)
    sa = math.sin(tha)
    cb = math.cos(thb)
    sb = math.sin(thb)
    dpx = xb - xa
    dpy = yb - ya
    dax = ca * dpx + sa * dpy
    day = -sa * dpx + ca * dpy
    dbx = cb * dpx + sb * dpy
    dby = -sb * dpx + cb * dpy
    c11 = ca * cb + sa * sb
    c12 = sa * cb - ca * sb
    c21 = ca * sb - sa * cb
    c22 = sa * sb + ca * cb
    a11 = abs(c11)
    a12 = abs(c12)
    a21 = abs(c21)
    a22 = abs(c22)

    fax = abs(dax) - h - (a11 * h + a12 * h)
    fay = abs(day) - h - (a21 * h + a22 * h)
    if fax > margin or fay > margin:
        return 0
    fbx = abs(dbx) - h - (a11 * h + a21 * h)
    fby = abs(dby) - h - (a12 * h + a22 * h)
    if fbx > margin or fby > margin:
        return 0

    # Axis of greatest separation, with tolerance favouring earlier axes.
    axis = 0  # 0: A.x, 1: A.y, 2: B.x, 3: B.y
    separation = fax
    nlx = ca if dax > 0.0 else -ca
    nly = sa if dax > 0.0 else -sa
    rel_tol = 0.95
    abs_tol = 0.01
    if fay > rel_tol * separation + abs_tol * h:
        axis = 1
        separation = fay
        nlx = -sa if day > 0.0 else sa
        nly = ca if day > 0.0 else -ca
    if fbx > rel_tol * separation + abs_tol * h:
        axis = 2
        separation = fbx
        nlx = cb if dbx > 0.0 else -cb
        nly = sb if dbx > 0.0 else -sb
    if fby > rel_tol * separation + abs_tol * h:
        axis = 3
        separation = fby
        nlx = -sb if dby > 0.0 else sb
        nly = cb if dby > 0.0 else -cb

    # Reference face data and incident box transform.
    if axis == 0 or axis == 1:
        fnx, fny = nlx, nly
        front = xa * fnx + ya * fny + h
        if axis == 0:
            snx, sny = -sa, ca
        else:
            snx, sny = ca, sa
        side = xa * snx + ya * sny
        ix, iy, ic, is_ = xb, yb, cb, sb
    else:
        fnx, fny = -nlx, -nly
        front = xb * fnx + yb * fny + h
        if axis == 2:
            snx, sny = -sb, cb
        else:
            snx, sny = cb, sb
        side = xb * snx + yb * sny
        ix, iy, ic, is_ = xa, ya, ca, sa
    neg_side = -side + h
    pos_side = side + h

    # Incident edge: the face of the incident box most anti-parallel to the
    # reference normal, expressed in world coordinates.
    nlocx = -(ic * fnx + is_ * fny)
    nlocy = -(-is_ * fnx + ic * fny)
    if abs(nlocx) > abs(nlocy):
        if nlocx > 0.0:
            e0x, e0y, e1x, e1y = h, -h, h, h
        else:
            e0x, e0y, e1x, e1y = -h, h, -h, -h
    else:
        if nlocy > 0.0:
            e0x, e0y, e1x, e1y = h, h, -h, h
        else:
            e0x, e0y, e1x, e1y = -h, -h, h, -h
    v0x = ix + ic * e0x - is_ * e0y
    v0y = iy + is_ * e0x + ic * e0y
    v1x = ix + ic * e1x - is_ * e1y
    v1y = iy + is_ * e1x + ic * e1y

    # Clip the incident edge against both side planes of the reference face.
    for pass_ in range(2):
        if pass_ == 0:
            cnx, cny, off = -snx, -sny, neg_side
        else:
            cnx, cny, off = snx, sny, pos_side
        d0 = cnx * v0x + cny * v0y - off
        d1 = cnx * v1x + cny * v1y - off
        n_out = 0
        o0x = o0y = o1x = o1y = 0.0
        if d0 <= 0.0:
            o0x, o0y = v0x, v0y
            n_out = 1
        if d1 <= 0.0:
            if n_out == 0:
                o0x, o0y = v1x, v1y
            else:
                o1x, o1y = v1x, v1y
            n_out += 1
        if d0 * d1 < 0.0:
            t = d0 / (d0 - d1)
            cx = v0x + t * (v1x - v0x)
            cy = v0y + t * (v1y - v0y)
            if n_out == 0:
                o0x, o0y = cx, cy
            else:
                o1x, o1y = cx, cy
            n_out += 1
        if n_out < 2:
            return 0
        v0x, v0y, v1x, v1y = o0x, o0y, o1x, o1y

    count = 0
    for k in range(2):
        wx = v0x if k == 0 else v1x
        wy = v0y if k == 0 else v1y
        s = fnx * wx + fny * wy - front
        if s <= margin:
            px[base + count] = wx - s * fnx
            py[base + count] = wy - s * fny
            nx[base + count] = nlx
            ny[base + count] = nly
            sep[base + count] = s
            count += 1
    return count


@njit(cache=True)
def _simulate_kernel(pos, vel, h, mass, gravity, mu, restitution, dt,
                     iters, beta, slop, n_steps, capture_steps):
    """Advance the world n_steps, snapshotting at capture_steps (in place)."""
    n = pos.shape[0]
    n_frames = capture_steps.shape[0]
    out = np.empty((n_frames, n, 6))
    inv_m = 1.0 / mass
    inv_i = 6.0 / (mass * (2.0 * h) * (2.0 * h))
    ground_margin = _GROUND_MARGIN_FRAC * 2.0 * h
    box_margin = _BOX_MARGIN_SLOPS * slop

    ia = np.empty(_CAP, np.int64)
    ib = np.empty(_CAP, np.int64)
    px = np.empty(_CAP)
    py = np.empty(_CAP)
    nx = np.empty(_CAP)
    ny = np.empty(_CAP)
    sep = np.empty(_CAP)
    rax = np.empty(_CAP)
    ray = np.empty(_CAP)
    rbx = np.empty(_CAP)
    rby = np.empty(_CAP)
    mass_n = np.empty(_CAP)
    mass_t = np.empty(_CAP)
    v_target = np.empty(_CAP)
    jn = np.empty(_CAP)
    jt = np.empty(_CAP)

    frame = 0
    for step in range(n_steps + 1):
        if frame < n_frames and step == capture_steps[frame]:
            for i in range(n):
                for k in range(3):
                    out[frame, i, k] = pos[i, k]
                    out[frame, i, 3 + k] = vel[i, k]
            frame += 1
        if step == n_steps:
            break

        for i in range(n):
            vel[i, 1] -= gravity * dt

        # -- contact detection
        m = 0
        for i in range(n):
            cth = math.cos(pos[i, 2])
            sth = math.sin(pos[i, 2])
            # two lowest corners against the ground plane
            b1 = -1
            b2 = -1
            y1 = 1.0e300
            y2 = 1.0e300
            for k in range(4):
                lx = h if (k == 0 or k == 3) else -h
                ly = h if k < 2 else -h
                wy = pos[i, 1] + sth * lx + cth * ly
                if wy < y1:
                    b2 = b1
                    y2 = y1
                    b1 = k
                    y1 = wy
                elif wy < y2:
                    b2 = k
                    y2 = wy
            for pick in range(2):
                ck = b1 if pick == 0 else b2
                cy = y1 if pick == 0 else y2
                if ck >= 0 and cy < ground_margin:
                    lx = h if (ck == 0 or ck == 3) else -h
                    ly = h if ck < 2 else -h
                    ia[m] = -1
                    ib[m] = i
                    px[m] = pos[i, 0] + cth * lx - sth * ly
                    py[m] = cy
                    nx[m] = 0.0
                    ny[m] = 1.0
                    sep[m] = cy
                    m += 1
        for i in range(n):
            for j in range(i + 1, n):
                cnt = _collide_box_box(
                    pos[i, 0], pos[i, 1], pos[i, 2],
                    pos[j, 0], pos[j, 1], pos[j, 2],
                    h, box_margin, px, py, nx, ny, sep, m,
                )
                for k in range(cnt):
                    ia[m + k] = i
                    ib[m + k] = j
                m += cnt

        # -- solver precomputation
        for c in range(m):
            a = ia[c]
            b = ib[c]
            if a >= 0:
                rax[c] = px[c] - pos[a, 0]
                ray[c] = py[c] - pos[a, 1]
                ima = inv_m
                iia = inv_i
            else:
                rax[c] = 0.0
                ray[c] = 0.0
                ima = 0.0
                iia = 0.0
            rbx[c] = px[c] - pos[b, 0]
            rby[c] = py[c] - pos[b, 1]
            rna = rax[c] * ny[c] - ray[c] * nx[c]
            rnb = rbx[c] * ny[c] - rby[c] * nx[c]
            kn = ima + inv_m + iia * rna * rna + inv_i * rnb * rnb
            tx = ny[c]
            ty = -nx[c]
            rta = rax[c] * ty - ray[c] * tx
            rtb = rbx[c] * ty - rby[c] * tx
            kt = ima + inv_m + iia * rta * rta + inv_i * rtb * rtb
            mass_n[c] = 1.0 / kn
            mass_t[c] = 1.0 / kt
            if sep[c] < 0.0:
                target = beta / dt * max(0.0, -sep[c] - slop)
                if restitution > 0.0:
                    if a >= 0:
                        dvx = (vel[b, 0] - vel[b, 2] * rby[c]) - (vel[a, 0] - vel[a, 2] * ray[c])
                        dvy = (vel[b, 1] + vel[b, 2] * rbx[c]) - (vel[a, 1] + vel[a, 2] * rax[c])
                    else:
                        dvx = vel[b, 0] - vel[b, 2] * rby[c]
                        dvy = vel[b, 1] + vel[b, 2] * rbx[c]
                    vn0 = dvx * nx[c] + dvy * ny[c]
                    if vn0 < -_RESTITUTION_SPEED_THRESHOLD:
                        target = max(target, -restitution * vn0)
                v_target[c] = target
            else:
                # speculative: may close at most the remaining gap this step
                v_target[c] = -sep[c] / dt
            jn[c] = 0.0
            jt[c] = 0.0

        # -- sequential impulses
        for _ in range(iters):
            for c in range(m):
                a = ia[c]
                b = ib[c]
                if a >= 0:
                    dvx = (vel[b, 0] - vel[b, 2] * rby[c]) - (vel[a, 0] - vel[a, 2] * ray[c])
                    dvy = (vel[b, 1] + vel[b, 2] * rbx[c]) - (vel[a, 1] + vel[a, 2] * rax[c])
                else:
                    dvx = vel[b, 0] - vel[b, 2] * rby[c]
                    dvy = vel[b, 1] + vel[b, 2] * rbx[c]
                vn = dvx * nx[c] + dvy * ny[c]
                dj = mass_n[c] * (v_target[c] - vn)
                jn_new = jn[c] + dj
                if jn_new < 0.0:
                    jn_new = 0.0
                dj = jn_new - jn[c]
                jn[c] = jn_new
                pnx = dj * nx[c]
                pny = dj * ny[c]
                if a >= 0:
                    vel[a, 0] -= inv_m * pnx
                    vel[a, 1] -= inv_m * pny
                    vel[a, 2] -= inv_i * (rax[c] * pny - ray[c] * pnx)
                vel[b, 0] += inv_m * pnx
                vel[b, 1] += inv_m * pny
                vel[b, 2] += inv_i * (rbx[c] * pny - rby[c] * pnx)

                if a >= 0:
                    dvx = (vel[b, 0] - vel[b, 2] * rby[c]) - (vel[a, 0] - vel[a, 2] * ray[c])
                    dvy = (vel[b, 1] + vel[b, 2] * rbx[c]) - (vel[a, 1] + vel[a, 2] * rax[c])
                else:
                    dvx = vel[b, 0] - vel[b, 2] * rby[c]
                    dvy = vel[b, 1] + vel[b, 2] * rbx[c]
                tx = ny[c]
                ty = -nx[c]
                vt = dvx * tx + dvy * ty
                djt = -mass_t[c] * vt
                max_t = mu * jn[c]
                jt_new = jt[c] + djt
                if jt_new < -max_t:
                    jt_new = -max_t
                elif jt_new > max_t:
                    jt_new = max_t
                djt = jt_new - jt[c]
                jt[c] = jt_new
                ptx = djt * tx
                pty = djt * ty
                if a >= 0:
                    vel[a, 0] -= inv_m * ptx
                    vel[a, 1] -= inv_m * pty
                    vel[a, 2] -= inv_i * (rax[c] * pty - ray[c] * ptx)
                vel[b, 0] += inv_m * ptx
                vel[b, 1] += inv_m * pty
                vel[b, 2] += inv_i * (rbx[c] * pty - rby[c] * ptx)

        for i in range(n):
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
            pos[i, 2] += dt * vel[i, 2]

    return out


def simulate(scene: TowerScene, capture_hz: float = 8.0) -> Trajectory:
    """Run the scene for params.sim_duration, snapshotting at capture_hz.

    Pure function of its inputs: identical scenes give bit-identical
    trajectories.
    """
    p = scene.params
    n_steps = int(round(p.sim_duration / p.dt))
    n_frames = int(math.floor(p.sim_duration * capture_hz)) + 1
    capture_steps = np.array(
        [round(k / (capture_hz * p.dt)) for k in range(n_frames)], dtype=np.int64
    )
    poses = scene.pose_array()
    out = _simulate_kernel(
        poses[:, :3].copy(), poses[:, 3:].copy(), p.side / 2.0, p.mass,
        p.gravity, p.friction_mu, p.restitution, p.dt, p.solver_iters,
        p.baumgarte_beta, p.slop, n_steps, capture_steps,
    )
    if not np.all(np.isfinite(out)):
        raise DivergedSimulationError("non-finite pose during simulation")
    return Trajectory(capture_hz=capture_hz, duration=p.sim_duration, poses=out)


def fell_label(traj: Trajectory, params: PhysicsParams) -> bool:
    """True iff any block moved or rotated past the fall thresholds.

    Thresholds: 0.25 * side displacement in x or y, or 10 degrees rotation,
    comparing the final frame against frame 0.
    """
    if traj.n_frames < 1:
        raise ValueError("empty trajectory")
    first = traj.poses[0]
    last = traj.poses[-1]
    lim = 0.25 * params.side
    for i in range(traj.n_blocks):
        if abs(last[i, 0] - first[i, 0]) > lim or abs(last[i, 1] - first[i, 1]) > lim:
            return True
        if abs(last[i, 2] - first[i, 2]) > DEG10:
            return True
    return False


def mechanical_energy(frame: np.ndarray, params: PhysicsParams) -> float:
    """Kinetic plus gravitational potential energy of one trajectory frame."""
    m = params.mass
    inertia = m * params.side**2 / 6.0
    ke = 0.5 * m * (frame[:, 3] ** 2 + frame[:, 4] ** 2).sum()
    ke += 0.5 * inertia * (frame[:, 5] ** 2).sum()
    pe = m * params.gravity * frame[:, 1].sum()
    return float(ke + pe)


def interpenetration_depth(frame: np.ndarray, params: PhysicsParams) -> float:
    """Worst pairwise block overlap depth in a frame (0 when separated)."""
    h = params.side / 2.0
    n = frame.shape[0]
    worst = 0.0
    px = np.empty(2)
    py = np.empty(2)
    nx = np.empty(2)
    ny = np.empty(2)
    sep = np.empty(2)
    for i in range(n):
        for j in range(i + 1, n):
            cnt = _collide_box_box(
                frame[i, 0], frame[i, 1], frame[i, 2],
                frame[j, 0], frame[j, 1], frame[j, 2],
                h, 0.0, px, py, nx, ny, sep, 0,
            )
            for k in range(cnt):
                worst = max(worst, -float(sep[k]))
    return worst


# ---------------------------------------------------------------------------
# Trajectory CSV export
# ---------------------------------------------------------------------------

TRAJECTORY_CSV_HEADER = "frame,t,block,x,y,theta,vx,vy,omega"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per (frame, block), 9 significant digits."""
    lines = [TRAJECTORY_CSV_HEADER]
    for f in range(traj.n_frames):
        t = traj.frame_time(f)
        for b in range(traj.n_blocks):
            vals = ",".join("%.9g" % v for v in traj.poses[f, b])
            lines.append("%d,%.9g,%d,%s" % (f, t, b, vals))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != TRAJECTORY_CSV_HEADER:
            raise ValueError(f"bad trajectory header in {path}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"empty trajectory file {path}")
    n_frames = int(rows[-1][0]) + 1
    n_blocks = int(rows[-1][2]) + 1
    if len(rows) != n_frames * n_blocks:
        raise ValueError(f"trajectory row count mismatch in {path}")
    poses = np.empty((n_frames, n_blocks, 6))
    t1 = 0.0
    for row in rows:
        f = int(row[0])
        b = int(row[2])
        poses[f, b] = [float(v) for v in row[3:9]]
        if f == 1:
            t1 = float(row[1])
    capture_hz = 1.0 / t1 if n_frames > 1 and t1 > 0 else 8.0
    duration = (n_frames - 1) / capture_hz
    return Trajectory(capture_hz=capture_hz, duration=duration, poses=poses)


def aligned_tower_scene(
    offsets, params: PhysicsParams | None = None, class_ids=None
) -> TowerScene:
    """Axis-aligned tower from per-block x offsets, stacked touching."""
    params = params or PhysicsParams()
    n = len(offsets)
    if class_ids is None:
        class_ids = tuple(range(1, n + 1))
    side = params.side
    blocks = tuple(
        BlockPose(x=float(offsets[i]), y=(i + 0.5) * side) for i in range(n)
    )
    return TowerScene(blocks=blocks, class_ids=tuple(class_ids), params=params)
