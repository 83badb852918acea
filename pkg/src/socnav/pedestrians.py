"""Rule-based pedestrian controllers: reciprocal collision avoidance and
the classic attraction/repulsion force model.

Both controllers are pure, deterministic functions of their inputs and
never return a velocity faster than the agent's speed limit.

The reciprocal controller builds one half-plane constraint per neighbor
(each side takes a ``responsibility`` share of the required velocity
change) and solves a small 2D linear program whose objective point is the
preferred velocity toward the goal.  When the constraint intersection is
empty it falls back to a second program that minimizes the largest
constraint violation.  All branching is deterministic, so symmetric
scenes produce symmetric results.
"""

from __future__ import annotations

import math
from typing import Sequence

from .agents import AgentState, Vec2, vec2
from .config import OrcaParams, SfParams

# Tolerance for near-parallel constraint lines, matching common practice
# for this family of solvers.
_EPS = 1e-5


def _det(ax: float, ay: float, bx: float, by: float) -> float:
    return ax * by - ay * bx


def _preferred_velocity(agent: AgentState, dt: float) -> tuple[float, float]:
    """Full speed toward the goal; capped near the goal so the agent can
    come to rest instead of orbiting it."""
    dx = float(agent.goal[0] - agent.position[0])
    dy = float(agent.goal[1] - agent.position[1])
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        return 0.0, 0.0
    speed = min(agent.v_max, dist / dt)
    return dx / dist * speed, dy / dist * speed


# ---------------------------------------------------------------------------
# ORCA: half-plane construction and the incremental 2D linear programs.
# Each constraint is (px, py, dx, dy): a point on the line plus a unit
# direction; the feasible side is the left half-plane of the directed line.
# ---------------------------------------------------------------------------


def _lp1(
    lines: list[tuple[float, float, float, float]],
    line_no: int,
    radius: float,
    opt_x: float,
    opt_y: float,
    direction_opt: bool,
) -> tuple[bool, float, float]:
    """Optimize along one constraint line, restricted to the speed disc and
    the previously satisfied constraints."""
    px, py, dx, dy = lines[line_no]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        # Speed disc does not reach this line.
        return False, 0.0, 0.0
    sqrt_disc = math.sqrt(disc)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for i in range(line_no):
        qx, qy, ex, ey = lines[i]
        denom = _det(dx, dy, ex, ey)
        numer = _det(ex, ey, px - qx, py - qy)
        if abs(denom) <= _EPS:
            if numer < 0.0:
                return False, 0.0, 0.0
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False, 0.0, 0.0

    if direction_opt:
        if opt_x * dx + opt_y * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (opt_x - px) + dy * (opt_y - py)
        t = min(max(t, t_left), t_right)
    return True, px + t * dx, py + t * dy


def _lp2(
    lines: list[tuple[float, float, float, float]],
    radius: float,
    opt_x: float,
    opt_y: float,
    direction_opt: bool,
) -> tuple[int, float, float]:
    """Incremental half-plane intersection; returns the index of the first
    infeasible constraint (== len(lines) on success) and the optimum."""
    if direction_opt:
        # opt is a unit direction: start at the disc boundary.
        rx, ry = opt_x * radius, opt_y * radius
    elif opt_x * opt_x + opt_y * opt_y > radius * radius:
        norm = math.hypot(opt_x, opt_y)
        rx, ry = opt_x / norm * radius, opt_y / norm * radius
    else:
        rx, ry = opt_x, opt_y

    for i, (px, py, dx, dy) in enumerate(lines):
        if _det(dx, dy, px - rx, py - ry) > 0.0:
            ok, nx, ny = _lp1(lines, i, radius, opt_x, opt_y, direction_opt)
            if not ok:
                return i, rx, ry
            rx, ry = nx, ny
    return len(lines), rx, ry


def _lp3(
    lines: list[tuple[float, float, float, float]],
    begin_line: int,
    radius: float,
    rx: float,
    ry: float,
) -> tuple[float, float]:
    """Fallback when the intersection is empty: move the result so the
    largest constraint violation is minimized."""
    distance = 0.0
    for i in range(begin_line, len(lines)):
        px, py, dx, dy = lines[i]
        if _det(dx, dy, px - rx, py - ry) > distance:
            proj: list[tuple[float, float, float, float]] = []
            for j in range(i):
                qx, qy, ex, ey = lines[j]
                denom = _det(dx, dy, ex, ey)
                if abs(denom) <= _EPS:
                    if dx * ex + dy * ey > 0.0:
                        # Same direction: constraint j is redundant here.
                        continue
                    mx, my = 0.5 * (px + qx), 0.5 * (py + qy)
                else:
                    t = _det(ex, ey, px - qx, py - qy) / denom
                    mx, my = px + t * dx, py + t * dy
                ndx, ndy = ex - dx, ey - dy
                norm = math.hypot(ndx, ndy)
                proj.append((mx, my, ndx / norm, ndy / norm))
            fail, nx, ny = _lp2(proj, radius, -dy, dx, True)
            if fail >= len(proj):
                # Keep the old result on numerical failure; by construction
                # this should not happen.
                rx, ry = nx, ny
            distance = _det(dx, dy, px - rx, py - ry)
    return rx, ry


def _orca_lines(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
) -> list[tuple[float, float, float, float]]:
    px, py = float(agent.position[0]), float(agent.position[1])
    vx, vy = float(agent.velocity[0]), float(agent.velocity[1])
    inv_horizon = 1.0 / params.time_horizon
    neighbor_dist_sq = params.neighbor_dist * params.neighbor_dist
    lines: list[tuple[float, float, float, float]] = []

    for other in neighbors:
        rel_px = float(other.position[0]) - px
        rel_py = float(other.position[1]) - py
        dist_sq = rel_px * rel_px + rel_py * rel_py
        if dist_sq > neighbor_dist_sq:
            continue
        rel_vx = vx - float(other.velocity[0])
        rel_vy = vy - float(other.velocity[1])
        r = agent.radius + other.radius
        r_sq = r * r

        if dist_sq > r_sq:
            # No current overlap: velocity-obstacle cone truncated at the
            # time horizon.
            wx = rel_vx - inv_horizon * rel_px
            wy = rel_vy - inv_horizon * rel_py
            w_len_sq = wx * wx + wy * wy
            dot1 = wx * rel_px + wy * rel_py
            if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
                # Closest to the cut-off disc.
                w_len = math.sqrt(w_len_sq)
                uwx, uwy = wx / w_len, wy / w_len
                dir_x, dir_y = uwy, -uwx
                u_x = (r * inv_horizon - w_len) * uwx
                u_y = (r * inv_horizon - w_len) * uwy
            else:
                # Closest to one of the cone legs; det == 0 (exact head-on)
                # deterministically picks the second branch.
                leg = math.sqrt(dist_sq - r_sq)
                if _det(rel_px, rel_py, wx, wy) > 0.0:
                    dir_x = (rel_px * leg - rel_py * r) / dist_sq
                    dir_y = (rel_px * r + rel_py * leg) / dist_sq
                else:
                    dir_x = -(rel_px * leg + rel_py * r) / dist_sq
                    dir_y = (rel_px * r - rel_py * leg) / dist_sq
                dot2 = rel_vx * dir_x + rel_vy * dir_y
                u_x = dot2 * dir_x - rel_vx
                u_y = dot2 * dir_y - rel_vy
        else:
            # Already overlapping: resolve within one time step.
            inv_dt = 1.0 / dt
            wx = rel_vx - inv_dt * rel_px
            wy = rel_vy - inv_dt * rel_py
            w_len = math.hypot(wx, wy)
            if w_len > 1e-12:
                uwx, uwy = wx / w_len, wy / w_len
            else:
                uwx, uwy = 1.0, 0.0  # coincident centers: fixed direction
            dir_x, dir_y = uwy, -uwx
            u_x = (r * inv_dt - w_len) * uwx
            u_y = (r * inv_dt - w_len) * uwy

        lines.append(
            (
                vx + params.responsibility * u_x,
                vy + params.responsibility * u_y,
                dir_x,
                dir_y,
            )
        )
    return lines


def orca_velocity(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
) -> Vec2:
    """New velocity for ``agent`` avoiding all ``neighbors`` reciprocally."""
    pref_x, pref_y = _preferred_velocity(agent, dt)
    lines = _orca_lines(agent, neighbors, params, dt)
    fail, rx, ry = _lp2(lines, agent.v_max, pref_x, pref_y, False)
    if fail < len(lines):
        rx, ry = _lp3(lines, fail, agent.v_max, rx, ry)
    return vec2(rx, ry)


# ---------------------------------------------------------------------------
# Social force model
# ---------------------------------------------------------------------------


def sf_velocity(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: SfParams,
    dt: float,
) -> Vec2:
    """One Euler step of the drive-plus-repulsion force model.

    The drive term relaxes the current velocity toward the preferred
    velocity; each neighbor repels along the center line with an
    exponential falloff in surface separation.
    """
    pref_x, pref_y = _preferred_velocity(agent, dt)
    vx, vy = float(agent.velocity[0]), float(agent.velocity[1])
    fx = (pref_x - vx) / params.relaxation_time
    fy = (pref_y - vy) / params.relaxation_time

    px, py = float(agent.position[0]), float(agent.position[1])
    for other in neighbors:
        dx = px - float(other.position[0])
        dy = py - float(other.position[1])
        dist = math.hypot(dx, dy)
        if dist < 1e-12:
            # Coincident centers: fall back to a fixed push direction.
            nx, ny = 1.0, 0.0
        else:
            nx, ny = dx / dist, dy / dist
        magnitude = params.repulsion_strength * math.exp(
            (agent.radius + other.radius - dist) / params.repulsion_range
        )
        fx += magnitude * nx
        fy += magnitude * ny

    new_vx = vx + fx * dt
    new_vy = vy + fy * dt
    speed = math.hypot(new_vx, new_vy)
    if speed > agent.v_max:
        new_vx *= agent.v_max / speed
        new_vy *= agent.v_max / speed
    return vec2(new_vx, new_vy)
