"""Multiroom and box-world grid tasks built from text layouts.

Layout files use ``#`` for walls, ``.`` for open cells, ``D`` for doorways
(open) and ``G`` for the goal.  Actions are 0=up, 1=down, 2=left, 3=right.
Blocked moves and blocked pushes leave the configuration unchanged.
"""
from __future__ import annotations

import csv
import hashlib
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import TabularMdp

ACTIONS = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}
ACTION_NAMES = ("up", "down", "left", "right")

SOURCE, TARGET = "source", "target"
MULTIROOM, BOXWORLD = "multiroom", "boxworld"

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    walls: frozenset
    goal: Cell
    doorways: frozenset = frozenset()
    variant: str = SOURCE
    task: str = MULTIROOM

    def __post_init__(self):
        cells = set(self.walls) | set(self.doorways) | {self.goal}
        for r, c in cells:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"cell {(r, c)} out of bounds")
        if self.goal in self.walls:
            raise ValueError("goal is a wall")
        if set(self.doorways) & set(self.walls):
            raise ValueError("doorway is a wall")

    @property
    def open_cells(self) -> list[Cell]:
        return [(r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.walls]

    def is_open(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width and cell not in self.walls


def parse_layout(text: str, task: str = MULTIROOM, variant: str = SOURCE) -> GridSpec:
    rows = [line.rstrip("\n") for line in text.strip("\n").splitlines()]
    height, width = len(rows), max(len(r) for r in rows)
    walls, doors, goal = set(), set(), None
    for r, line in enumerate(rows):
        for c in range(width):
            ch = line[c] if c < len(line) else "#"
            if ch == "#":
                walls.add((r, c))
            elif ch == "D":
                doors.add((r, c))
            elif ch == "G":
                if goal is not None:
                    raise ValueError("layout has more than one goal")
                goal = (r, c)
            elif ch != ".":
                raise ValueError(f"unknown layout character {ch!r} at {(r, c)}")
    if goal is None:
        raise ValueError("layout has no goal")
    return GridSpec(width, height, frozenset(walls), goal, frozenset(doors), variant, task)


def layout_text(name: str) -> str:
    return resources.files("lispr").joinpath(f"layouts/{name}.txt").read_text(encoding="utf-8")


def layout_hash(name: str) -> str:
    return hashlib.sha256(layout_text(name).encode("utf-8")).hexdigest()


def load_layout(task: str, variant: str) -> GridSpec:
    return parse_layout(layout_text(f"{task}_{variant}"), task, variant)


@dataclass
class GridMeta:
    """State-id encoding for a grid task.

    ``states[i]`` is the agent cell (multiroom) or the ``(agent, box)`` pair
    (box world) of state ``i``.
    """

    spec: GridSpec
    states: list
    index: dict = field(repr=False)

    @property
    def task(self) -> str:
        return self.spec.task

    @property
    def num_actions(self) -> int:
        return len(ACTIONS)

    def agent_cell(self, s: int) -> Cell:
        return self.states[s] if self.task == MULTIROOM else self.states[s][0]


def _move(cell: Cell, a: int) -> Cell:
    dr, dc = ACTIONS[a]
    return cell[0] + dr, cell[1] + dc


def _assemble(meta: GridMeta, successor, goal_test, discount, initial_states=None, name="grid") -> TabularMdp:
    n, m = len(meta.states), len(ACTIONS)
    nxt = np.zeros((n, m, 1), dtype=np.int64)
    rew = np.zeros((n, m, 1))
    terminal = frozenset(i for i, st in enumerate(meta.states) if goal_test(st))
    for i, st in enumerate(meta.states):
        for a in range(m):
            if i in terminal:
                nxt[i, a, 0] = i
                continue
            st2 = successor(st, a)
            j = meta.index[st2]
            nxt[i, a, 0] = j
            rew[i, a, 0] = 1.0 if j in terminal else 0.0
    init = np.zeros(n)
    live = [i for i in range(n) if i not in terminal] if initial_states is None else list(initial_states)
    init[live] = 1.0 / len(live)
    return TabularMdp(nxt, np.ones((n, m, 1)), rew, discount, terminal, init, name=name)


def multiroom_from_spec(spec: GridSpec, discount: float = 0.99) -> tuple[TabularMdp, GridMeta]:
    states = spec.open_cells
    meta = GridMeta(spec, states, {c: i for i, c in enumerate(states)})

    def successor(cell, a):
        nxt = _move(cell, a)
        return nxt if spec.is_open(nxt) else cell

    mdp = _assemble(meta, successor, lambda c: c == spec.goal, discount,
                    name=f"{spec.task}-{spec.variant}")
    return mdp, meta


def boxworld_from_spec(spec: GridSpec, discount: float = 0.99) -> tuple[TabularMdp, GridMeta]:
    cells = spec.open_cells
    states = [(ag, bx) for ag in cells for bx in cells if ag != bx]
    meta = GridMeta(spec, states, {st: i for i, st in enumerate(states)})

    def successor(st, a):
        agent, box = st
        nxt = _move(agent, a)
        if not spec.is_open(nxt):
            return st
        if nxt == box:
            pushed = _move(box, a)
            if not spec.is_open(pushed):
                return st
            return nxt, pushed
        return nxt, box

    # a box stuck against the wrong walls can never reach the goal; such
    # configurations are valid states but never used as starts
    probe = _assemble(meta, successor, lambda st: st[1] == spec.goal, discount)
    dist = goal_distances(probe)
    starts = [i for i in range(len(states)) if i not in probe.terminal and np.isfinite(dist[i])]
    mdp = _assemble(meta, successor, lambda st: st[1] == spec.goal, discount, starts,
                    name=f"{spec.task}-{spec.variant}")
    return mdp, meta


def build_multiroom(variant: str = TARGET, discount: float = 0.99) -> tuple[TabularMdp, GridMeta]:
    return multiroom_from_spec(load_layout(MULTIROOM, variant), discount)


def build_boxworld(variant: str = TARGET, discount: float = 0.99) -> tuple[TabularMdp, GridMeta]:
    return boxworld_from_spec(load_layout(BOXWORLD, variant), discount)


def build_env(task: str, variant: str, discount: float = 0.99) -> tuple[TabularMdp, GridMeta]:
    if task == MULTIROOM:
        return build_multiroom(variant, discount)
    if task == BOXWORLD:
        return build_boxworld(variant, discount)
    raise ValueError(f"unknown task {task!r}")


def goal_distances(mdp: TabularMdp) -> np.ndarray:
    """Fewest steps from each state to any terminal state (inf if unreachable)."""
    n = mdp.num_states
    preds = [[] for _ in range(n)]
    live = mdp.probs > 0
    for s, a, k in zip(*np.nonzero(live)):
        s2 = int(mdp.next_states[s, a, k])
        if s2 != s:
            preds[s2].append(int(s))
    dist = np.full(n, np.inf)
    queue = deque()
    for t in mdp.terminal:
        dist[t] = 0
        queue.append(t)
    while queue:
        s2 = queue.popleft()
        for s in preds[s2]:
            if s not in mdp.terminal and dist[s] == np.inf:
                dist[s] = dist[s2] + 1
                queue.append(s)
    return dist


def _nearest_open(spec: GridSpec, cell: Cell, exclude: Cell | None = None) -> Cell | None:
    best, best_d = None, None
    for c in spec.open_cells:  # row-major, so the first minimum wins ties
        if c == exclude:
            continue
        d = abs(c[0] - cell[0]) + abs(c[1] - cell[1])
        if best_d is None or d < best_d:
            best, best_d = c, d
    return best


def map_target_to_source_state(meta_src: GridMeta, meta_tgt: GridMeta, s_tgt: int) -> int | None:
    """Translate a target state into the source frame so the goals coincide.

    Translated cells that fall on walls or outside the source grid are clamped
    to the nearest open source cell (Manhattan distance, row-major ties).
    """
    if meta_src.task != meta_tgt.task:
        raise ValueError("metas belong to different tasks")
    src = meta_src.spec
    dr = src.goal[0] - meta_tgt.spec.goal[0]
    dc = src.goal[1] - meta_tgt.spec.goal[1]

    def shift(cell):
        moved = (cell[0] + dr, cell[1] + dc)
        return moved if src.is_open(moved) else _nearest_open(src, moved)

    if meta_tgt.task == MULTIROOM:
        return meta_src.index[shift(meta_tgt.states[s_tgt])]
    agent, box = meta_tgt.states[s_tgt]
    box_src = shift(box)
    agent_src = shift(agent)
    if agent_src == box_src:
        agent_src = _nearest_open(src, (agent[0] + dr, agent[1] + dc), exclude=box_src)
    if agent_src is None or box_src is None:
        return None
    return meta_src.index.get((agent_src, box_src))


def render_values(table, meta: GridMeta, reduce: str = "max", box_cell: Cell | None = None) -> np.ndarray:
    """Per-state values laid out on the grid; walls are NaN.

    Box-world tables are reduced over box positions with ``reduce="max"`` or
    read at a single box position with ``reduce="fixed-box"``.
    """
    values = np.asarray(table, dtype=float)
    if values.shape != (len(meta.states),):
        raise ValueError(f"table has shape {values.shape}, expected ({len(meta.states)},)")
    spec = meta.spec
    grid = np.full((spec.height, spec.width), np.nan)
    if meta.task == MULTIROOM:
        for s, (r, c) in enumerate(meta.states):
            grid[r, c] = values[s]
        return grid
    if reduce == "max":
        for s, (agent, _box) in enumerate(meta.states):
            r, c = agent
            if np.isnan(grid[r, c]) or values[s] > grid[r, c]:
                grid[r, c] = values[s]
    elif reduce == "fixed-box":
        if box_cell is None:
            raise ValueError("fixed-box reduction needs box_cell")
        for s, (agent, box) in enumerate(meta.states):
            if box == tuple(box_cell):
                grid[agent] = values[s]
    else:
        raise ValueError(f"unknown reduction {reduce!r}")
    return grid


def write_grid_csv(grid: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow(["nan" if np.isnan(v) else repr(float(v)) for v in row])


def read_grid_csv(path) -> np.ndarray:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])
