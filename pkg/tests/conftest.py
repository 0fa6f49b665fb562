import numpy as np
import pytest

from safeplan.geometry import Polyline, TrajState
from safeplan.world import LaneSegment, MapModel, SceneFrame


def straight_map(length=300.0, lane_width=3.5, shoulder=0.5, stop_lines=(), lights=(),
                 conflict_regions=(), static_obstacles=(), crosswalks=()):
    """Single straight lane along +x with a rectangular drivable area."""
    half = lane_width / 2.0 + shoulder
    centerline = Polyline([(0.0, 0.0), (length, 0.0)])
    drivable = np.array(
        [(-10.0, -half), (length + 10.0, -half), (length + 10.0, half), (-10.0, half)]
    )
    return MapModel(
        lanes=(LaneSegment("lane-ego", centerline, lane_width),),
        crosswalks=tuple(crosswalks),
        stop_lines=tuple(stop_lines),
        lights=tuple(lights),
        drivable=(drivable,),
        route_lane_ids=("lane-ego",),
        route=Polyline([(0.0, 0.0), (length, 0.0)]),
        conflict_regions=tuple(conflict_regions),
        static_obstacles=tuple(static_obstacles),
    )


def make_frame(map_model, ego=None, agents=(), light_states=None, timestamp=0.0,
               ego_history=()):
    if ego is None:
        ego = TrajState(15.0, 0.0, 0.0, v=8.0)
    return SceneFrame(
        timestamp=timestamp,
        ego=ego,
        ego_length=4.8,
        ego_width=2.0,
        agents=tuple(agents),
        light_states=light_states or {},
        map=map_model,
        ego_history=tuple(ego_history),
    )


@pytest.fixture
def simple_map():
    return straight_map()


@pytest.fixture
def simple_frame(simple_map):
    return make_frame(simple_map)
