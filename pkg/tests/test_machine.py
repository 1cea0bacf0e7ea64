import pytest

from spikert.machine import (LINKS, MachineSpec, auto_machine, load_machine_spec,
                             opposite_link, parse_machine_spec, serialize_machine_spec)
from spikert.network import SpecError


@pytest.fixture
def grid():
    return MachineSpec(width=8, height=6, wrap_vertical=False)


@pytest.fixture
def wrapped():
    return MachineSpec(width=24, height=24)


def test_link_geometry(grid):
    assert LINKS == ("E", "NE", "N", "W", "SW", "S")
    for l in range(6):
        assert opposite_link(opposite_link(l)) == l
    assert grid.neighbor((0, 0), 0) == (1, 0)
    assert grid.neighbor((0, 0), 1) == (1, 1)
    assert grid.neighbor((0, 0), 3) is None  # west edge
    assert grid.neighbor((0, 0), 5) is None  # no wrap


def test_hex_distance_diagonal_counts_once(grid):
    assert grid.hex_distance((0, 0), (3, 3)) == 3     # pure NE moves
    assert grid.hex_distance((0, 0), (5, 2)) == 5     # NE then E
    assert grid.hex_distance((0, 0), (2, 3)) == 3
    assert grid.hex_distance((3, 0), (0, 3)) == 6     # opposite signs: no diagonal


def test_vertical_wrap_shortens_paths(wrapped):
    assert wrapped.hex_distance((0, 0), (0, 23)) == 1
    assert wrapped.hex_distance((0, 0), (0, 12)) == 12  # tie resolves northward
    assert wrapped.hex_distance((0, 0), (2, 22)) == 4   # (2,-2): SW diagonal


def test_route_path_is_minimal_and_connected(wrapped):
    for dst in [(5, 3), (3, 5), (0, 23), (23, 0), (10, 20), (23, 23)]:
        path = wrapped.route_path((0, 0), dst)
        assert path[0] == (0, 0) and path[-1] == dst
        assert len(path) - 1 == wrapped.hex_distance((0, 0), dst)


def test_transit_arithmetic_example():
    """3 router hops with one board-boundary crossing = 3*500 + 900 ns."""
    m = MachineSpec(width=16, height=6, wrap_vertical=False,
                    board_tile_width=8, board_tile_height=6)
    # (6,0) -> (9,0): hops 7,8,9; the 7->8 hop crosses the x=8 tile boundary
    assert m.transit_ns((6, 0), (9, 0)) == 3 * 500.0 + 900.0
    assert m.transit_ns((0, 0), (0, 0)) == 0.0
    assert m.transit_ns((0, 0), (1, 0)) == 500.0


def test_board_tiling_and_count(wrapped):
    assert wrapped.boards() == 12
    assert wrapped.board_of((0, 0)) == (0, 0)
    assert wrapped.board_of((8, 0)) == (1, 0)
    assert wrapped.board_of((7, 6)) == (0, 1)
    assert wrapped.board_index((0, 0)) == 0


def test_radial_order_starts_at_origin_and_respects_rings(wrapped):
    order = wrapped.radial_order()
    assert order[0] == (0, 0)
    dists = [wrapped.hex_distance((0, 0), c) for c in order]
    assert dists == sorted(dists)
    assert len(order) == 576
    # with vertical wrap, both (0,1) and (0,23) sit on the first ring
    first_ring = {c for c, d in zip(order, dists) if d == 1}
    assert (0, 1) in first_ring and (0, 23) in first_ring


def test_machine_file_round_trip(machine_path):
    spec = load_machine_spec(machine_path)
    assert spec.width == spec.height == 24
    assert spec.wrap_vertical
    assert spec.usable_cores_per_chip == 16
    again = parse_machine_spec(serialize_machine_spec(spec))
    assert again == spec


def test_dead_core_parsing():
    spec = parse_machine_spec("[machine]\nwidth = 2\nheight = 2\n"
                              "dead_core = 1 1 3\ndead_core = 0 1\n")
    assert spec.usable_cores((1, 1)) == 13
    assert spec.usable_cores((0, 1)) == 15
    assert spec.usable_cores((0, 0)) == 16


def test_validation_errors():
    with pytest.raises(SpecError):
        MachineSpec(width=0, height=2).validate()
    with pytest.raises(SpecError):
        MachineSpec(width=2, height=2, usable_cores_per_chip=17).validate()


def test_auto_machine_grows_in_boards():
    assert auto_machine(1).n_chips() == 48
    assert auto_machine(48).n_chips() == 48
    assert auto_machine(49).n_chips() == 96
    big = auto_machine(500)
    assert big.n_chips() >= 500
    assert big.width % 8 == 0 and big.height % 6 == 0
