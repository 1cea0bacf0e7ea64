"""Machine geometry: chips on a triangular mesh, boards, link latencies.

Chips sit on a width x height grid with six links per router
(E, NE, N, W, SW, S); the NE/SW diagonals make the mesh triangular.  The
grid optionally wraps vertically (top and bottom edges are adjacent), which
shortens worst-case paths.  Boards are rectangular tiles of chips; a hop
whose endpoints lie on different boards pays the board-to-board link
latency on top of the per-router latency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .network import SpecError

LINKS = ("E", "NE", "N", "W", "SW", "S")
LINK_VECTORS = ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))


def opposite_link(link: int) -> int:
    return (link + 3) % 6


@dataclass(frozen=True)
class MachineSpec:
    width: int
    height: int
    wrap_vertical: bool = True
    cores_per_chip: int = 18
    usable_cores_per_chip: int = 16  # excludes monitor + system cores
    router_hop_latency_ns: float = 500.0
    board_link_latency_ns: float = 900.0
    sdram_bytes: int = 128 * 1024 * 1024
    dtcm_bytes: int = 64 * 1024
    board_tile_width: int = 8
    board_tile_height: int = 6
    routing_entries_per_chip: int = 1024
    dead_cores: tuple[tuple[int, int, int], ...] = ()  # (x, y, count) unusable extra

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SpecError("machine dimensions must be positive")
        if self.usable_cores_per_chip > self.cores_per_chip - 2:
            raise SpecError("usable cores must leave room for monitor + system cores")
        if self.router_hop_latency_ns <= 0 or self.board_link_latency_ns <= 0:
            raise SpecError("latencies must be positive")

    # -- geometry ----------------------------------------------------------

    def n_chips(self) -> int:
        return self.width * self.height

    def boards(self) -> int:
        bx = -(-self.width // self.board_tile_width)
        by = -(-self.height // self.board_tile_height)
        return bx * by

    def board_of(self, chip: tuple[int, int]) -> tuple[int, int]:
        return chip[0] // self.board_tile_width, chip[1] // self.board_tile_height

    def board_index(self, chip: tuple[int, int]) -> int:
        bx, by = self.board_of(chip)
        return by * (-(-self.width // self.board_tile_width)) + bx

    def _dy_reps(self, dy: int):
        if not self.wrap_vertical:
            return (dy,)
        return (dy, dy - self.height, dy + self.height)

    def delta(self, src: tuple[int, int], dst: tuple[int, int]) -> tuple[int, int]:
        """(dx, dy) with dy reduced through the vertical wrap to the shortest rep."""
        dx = dst[0] - src[0]
        dy0 = dst[1] - src[1]
        best = None
        for dy in self._dy_reps(dy0):
            d = _hex_dist(dx, dy)
            key = (d, abs(dy), -dy)  # deterministic tie-break, prefer non-wrapped
            if best is None or key < best[0]:
                best = (key, dy)
        return dx, best[1]

    def hex_distance(self, src: tuple[int, int], dst: tuple[int, int]) -> int:
        dx, dy = self.delta(src, dst)
        return _hex_dist(dx, dy)

    def neighbor(self, chip: tuple[int, int], link: int):
        """Chip reached over a link, or None off the mesh edge."""
        vx, vy = LINK_VECTORS[link]
        x, y = chip[0] + vx, chip[1] + vy
        if self.wrap_vertical:
            y %= self.height
        if not (0 <= x < self.width and 0 <= y < self.height):
            return None
        return (x, y)

    def route_links(self, src: tuple[int, int], dst: tuple[int, int]) -> list[int]:
        """Deterministic minimal-hop link sequence: diagonal first, then straight."""
        dx, dy = self.delta(src, dst)
        links = []
        while dx > 0 and dy > 0:
            links.append(1)  # NE
            dx -= 1
            dy -= 1
        while dx < 0 and dy < 0:
            links.append(4)  # SW
            dx += 1
            dy += 1
        links.extend([0 if dx > 0 else 3] * abs(dx))  # E / W
        links.extend([2 if dy > 0 else 5] * abs(dy))  # N / S
        return links

    def route_path(self, src: tuple[int, int], dst: tuple[int, int]) -> list[tuple[int, int]]:
        path = [src]
        for link in self.route_links(src, dst):
            path.append(self.neighbor(path[-1], link))
        assert path[-1] == dst
        return path

    def hop_latency_ns(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        latency = self.router_hop_latency_ns
        if self.board_of(a) != self.board_of(b):
            latency += self.board_link_latency_ns
        return latency

    def transit_ns(self, src: tuple[int, int], dst: tuple[int, int]) -> float:
        """Latency along the canonical route: one router per hop plus board links."""
        path = self.route_path(src, dst)
        return sum(self.hop_latency_ns(a, b) for a, b in zip(path, path[1:]))

    # -- capacity ----------------------------------------------------------

    def usable_cores(self, chip: tuple[int, int]) -> int:
        dead = sum(n for x, y, n in self.dead_cores if (x, y) == chip)
        return max(0, self.usable_cores_per_chip - dead)

    # -- placement order ---------------------------------------------------

    def radial_order(self) -> list[tuple[int, int]]:
        """Chips sorted by an outward spiral from (0, 0): distance rings first,
        counter-clockwise from +x within a ring, honoring the vertical wrap."""
        def key(chip):
            dx, dy = self.delta((0, 0), chip)
            ang = math.atan2(dy, dx) % (2.0 * math.pi)
            return (_hex_dist(dx, dy), ang, chip[0], chip[1])
        return sorted(((x, y) for x in range(self.width) for y in range(self.height)), key=key)


def _hex_dist(dx: int, dy: int) -> int:
    if (dx >= 0) == (dy >= 0):
        return max(abs(dx), abs(dy))
    return abs(dx) + abs(dy)


# ---------------------------------------------------------------------------
# Machine spec file

_MACHINE_KEYS = {
    "width": int, "height": int, "wrap_vertical": lambda v: v.lower() in ("true", "1", "yes"),
    "cores_per_chip": int, "usable_cores_per_chip": int,
    "router_hop_latency_ns": float, "board_link_latency_ns": float,
    "sdram_bytes": int, "dtcm_bytes": int,
    "board_tile_width": int, "board_tile_height": int,
    "routing_entries_per_chip": int,
}


def parse_machine_spec(text: str) -> MachineSpec:
    kwargs: dict = {}
    dead: list[tuple[int, int, int]] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section != "machine":
                raise SpecError(f"line {lineno}: unknown section [{section}]")
            continue
        if section != "machine" or "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value' in [machine]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "dead_core":
            parts = value.split()
            if len(parts) not in (2, 3):
                raise SpecError(f"line {lineno}: dead_core wants 'x y [count]'")
            dead.append((int(parts[0]), int(parts[1]), int(parts[2]) if len(parts) == 3 else 1))
        elif key in _MACHINE_KEYS:
            kwargs[key] = _MACHINE_KEYS[key](value)
        else:
            raise SpecError(f"line {lineno}: unknown machine key '{key}'")
    if "width" not in kwargs or "height" not in kwargs:
        raise SpecError("[machine] needs width and height")
    spec = MachineSpec(dead_cores=tuple(dead), **kwargs)
    spec.validate()
    return spec


def load_machine_spec(path) -> MachineSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_machine_spec(fh.read())


def serialize_machine_spec(spec: MachineSpec) -> str:
    lines = ["[machine]"]
    for key in _MACHINE_KEYS:
        lines.append(f"{key} = {getattr(spec, key)}")
    for x, y, n in spec.dead_cores:
        lines.append(f"dead_core = {x} {y} {n}")
    return "\n".join(lines) + "\n"


def auto_machine(n_chips_needed: int) -> MachineSpec:
    """Smallest whole-board machine covering the requested chip count.

    Grows in board tiles the way real allocations do: 1 board, a column of
    boards, then near-square multi-board grids.
    """
    tile_w, tile_h = 8, 6
    best = None
    for bx in range(1, 9):
        for by in range(1, 9):
            chips = (bx * tile_w) * (by * tile_h)
            if chips >= n_chips_needed:
                key = (chips, abs(bx * tile_w - by * tile_h), bx)
                if best is None or key < best[0]:
                    best = (key, (bx, by))
    if best is None:
        raise SpecError(f"no machine configuration covers {n_chips_needed} chips")
    bx, by = best[1]
    spec = MachineSpec(width=bx * tile_w, height=by * tile_h)
    spec.validate()
    return spec
