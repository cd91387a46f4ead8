"""Skid-steer kinematics and a receding-horizon waypoint controller.

The learned driving policy is replaced by a turn-then-drive proportional law
with the same interface: robot-frame goal in, an action sequence of length
``seq_len`` out, and only the first action is executed each tick.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

from .geometry import Point, wrap_angle
from .terrain import TerrainWorld, is_safe
from .topomap import EdgeState, Pose, TopoMap, to_local


@dataclass(frozen=True)
class SkidSteerParams:
    v_max: float = 1.0
    w_max: float = 1.0
    tick: float = 0.2
    footprint_radius: float = 0.4
    seq_len: int = 5
    k_w: float = 2.0
    goal_tol: float = 0.3
    timeout_factor: float = 3.0
    recovery_margin: float = 0.2  # extra clearance a node needs to serve as recovery point

    def __post_init__(self) -> None:
        if self.v_max <= 0 or self.w_max <= 0:
            raise ValueError("v_max and w_max must be > 0")
        if self.tick <= 0 or self.seq_len < 1:
            raise ValueError("tick must be > 0 and seq_len >= 1")


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    odometer: float = 0.0  # meters since the last node insertion
    last_safe_node: int | None = None  # recovery point after an intervention
    node: int | None = None  # node the robot currently plans from

    def __post_init__(self) -> None:
        if self.node is None and self.last_safe_node is not None:
            object.__setattr__(self, "node", self.last_safe_node)


class InterventionCause(str, enum.Enum):
    TRAVERSABILITY_ERROR = "TraversabilityError"
    CONTROLLER_ERROR = "ControllerError"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class InterventionEvent:
    cause: InterventionCause
    position: Point
    edge: tuple[int, int] | None
    tick_index: int


class Outcome(str, enum.Enum):
    REACHED = "Reached"
    TIMED_OUT = "TimedOut"
    INTERVENED = "Intervened"


@dataclass(frozen=True)
class DriveResult:
    outcome: Outcome
    state: RobotState
    ticks: int
    event: InterventionEvent | None = None


def kinematic_time(pose: Pose, target: Point, params: SkidSteerParams) -> float:
    """Time to turn in place toward ``target`` and then drive straight to it."""
    dx, dy = target[0] - pose.x, target[1] - pose.y
    d = math.hypot(dx, dy)
    if d == 0.0:
        return 0.0
    turn = abs(wrap_angle(math.atan2(dy, dx) - pose.heading))
    return turn / params.w_max + d / params.v_max


def _law(goal_local: Point, params: SkidSteerParams) -> tuple[float, float]:
    err = math.atan2(goal_local[1], goal_local[0])
    w = min(params.w_max, max(-params.w_max, params.k_w * err))
    v = params.v_max * max(0.0, math.cos(err))
    return v, w


def plan_actions(state: RobotState, goal_local: Point, params: SkidSteerParams
                 ) -> tuple[list[tuple[float, float]], bool]:
    """Return ``seq_len`` clamped (v, w) actions and a goal-reached flag.

    The sequence is a rollout of the law on the robot's own prediction; the
    caller executes element 0 only.
    """
    if math.hypot(goal_local[0], goal_local[1]) <= params.goal_tol:
        return [(0.0, 0.0)] * params.seq_len, True
    actions = []
    pred = RobotState(Pose(0.0, 0.0, 0.0))
    for _ in range(params.seq_len):
        g = to_local(pred.pose, goal_local)
        if math.hypot(g[0], g[1]) <= params.goal_tol:
            a = (0.0, 0.0)
        else:
            a = _law(g, params)
        actions.append(a)
        pred = step_kinematics(pred, a, params.tick)
    return actions, False


def step_kinematics(state: RobotState, action: tuple[float, float], tick: float) -> RobotState:
    """Unicycle update integrated with the midpoint heading."""
    v, w = action
    p = state.pose
    mid = p.heading + 0.5 * w * tick
    pose = Pose(p.x + v * tick * math.cos(mid), p.y + v * tick * math.sin(mid), p.heading + w * tick)
    return replace(state, pose=pose, odometer=state.odometer + v * tick)


def safety_check(world: TerrainWorld, state: RobotState, params: SkidSteerParams,
                 edge: tuple[int, int] | None = None, edge_truth: EdgeState | None = None,
                 tick_index: int = 0) -> InterventionEvent | None:
    """Automated supervisor: flags the first tick the footprint touches unsafe ground.

    Blame goes to the controller when ground truth says the active edge was
    traversable, otherwise to the traversability verdict that approved it.
    """
    if is_safe(world, state.pose.position, params.footprint_radius):
        return None
    cause = (InterventionCause.CONTROLLER_ERROR if edge_truth is EdgeState.TRAVERSABLE
             else InterventionCause.TRAVERSABILITY_ERROR)
    return InterventionEvent(cause, state.pose.position, edge, tick_index)


TickHook = Callable[[RobotState, int], RobotState]


def drive_to_goal(state: RobotState, goal: int, topo: TopoMap, world: TerrainWorld,
                  params: SkidSteerParams, *, from_node: int | None = None,
                  edge_truth: EdgeState | None = None, tick0: int = 0,
                  on_tick: TickHook | None = None, log: list | None = None) -> DriveResult:
    """Drive toward node ``goal`` until reached, timed out, or stopped by the supervisor.

    On timeout or intervention the robot is put back on its last safe node
    and the active edge ``(from_node, goal)`` is relabeled Untraversable.
    ``on_tick`` runs after every safe tick and may return an updated state
    (the exploration loop inserts odometry nodes there).
    """
    if from_node is None:
        from_node = state.node
    target = topo.nodes[goal].position
    edge = (from_node, goal) if from_node is not None and from_node != goal else None
    limit = params.timeout_factor * kinematic_time(state.pose, target, params)
    ticks = 0

    def arrived(s: RobotState) -> bool:
        return math.hypot(target[0] - s.pose.x, target[1] - s.pose.y) <= params.goal_tol

    while not arrived(state):
        if ticks * params.tick > limit:
            event = InterventionEvent(InterventionCause.TIMEOUT, state.pose.position, edge, tick0 + ticks)
            return _recover(state, topo, edge, event, Outcome.TIMED_OUT, ticks, log)
        actions, _ = plan_actions(state, to_local(state.pose, target), params)
        v, w = actions[0]
        state = step_kinematics(state, (v, w), params.tick)
        ticks += 1
        event = safety_check(world, state, params, edge, edge_truth, tick0 + ticks)
        if log is not None:
            log.append([tick0 + ticks, state.pose.x, state.pose.y, state.pose.heading, v, w, ""])
        if event is not None:
            return _recover(state, topo, edge, event, Outcome.INTERVENED, ticks, log)
        if on_tick is not None:
            state = on_tick(state, tick0 + ticks)
    return DriveResult(Outcome.REACHED, state, ticks)


def _recover(state, topo, edge, event, outcome, ticks, log) -> DriveResult:
    if log is not None:
        tag = f"{'timeout' if outcome is Outcome.TIMED_OUT else 'intervention'}:{event.cause.value}"
        if log and log[-1][0] == event.tick_index:
            log[-1][6] = _join(log[-1][6], tag)
        else:
            p = state.pose
            log.append([event.tick_index, p.x, p.y, p.heading, 0.0, 0.0, tag])
    if edge is not None:
        topo.relabel_untraversable(*edge)
    safe = topo.nodes[state.last_safe_node].pose
    state = RobotState(safe, 0.0, state.last_safe_node, state.last_safe_node)
    if log is not None:
        log.append([event.tick_index, safe.x, safe.y, safe.heading, 0.0, 0.0,
                    f"reset:{state.last_safe_node}"])
    return DriveResult(outcome, state, ticks, event)


def _join(a: str, b: str) -> str:
    return f"{a};{b}" if a else b
