def get_presets():
    presets = {}

    # corridor with anchors along both walls
    presets['tunnel'] = dict(
        kind = "tunnel",
        extents = (60.0, 4.0, 3.0),
        duration = 60.0,
        rate = 10.0,
    )

    # UAV flight volume
    presets['uav_box'] = dict(
        kind = "waypoint_box",
        extents = (4.0, 6.5, 7.0),
        duration = 60.0,
        rate = 10.0,
        waypoint_count = 8,
    )

    # ground robot in an open yard, anchors on the perimeter
    presets['amr_area'] = dict(
        kind = "planar_amr",
        extents = (40.0, 20.0, 3.0),
        duration = 110.0,
        rate = 10.0,
        waypoint_count = 8,
        sway = 0.3,
    )

    presets['collinear'] = dict(
        kind = "collinear",
        extents = (60.0, 4.0, 3.0),
        duration = 60.0,
        rate = 10.0,
    )

    return presets
