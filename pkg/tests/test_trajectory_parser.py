import pytest

from conftest import NGSIM_HEADER, ngsim_rows, write_rows
from drivercal.core.trajectory_parser import (
    FEET_TO_METERS,
    SchemaError,
    TrajectoryParseError,
    from_meters,
    parse_csv,
    to_meters,
)
from drivercal.models.trajectory_models import ColumnSchema, UnitSystem, VehicleClass


def test_feet_are_converted_to_si(ngsim_csv):
    frames = list(parse_csv(ngsim_csv))
    assert len(frames) == 160
    first = frames[0]
    assert first.vehicle_id == 1
    assert first.velocity == pytest.approx(30.0 * FEET_TO_METERS)
    assert first.vehicle_length == pytest.approx(15.0 * FEET_TO_METERS)
    assert first.local_y == pytest.approx(500.0 * FEET_TO_METERS)
    assert first.vehicle_class is VehicleClass.AUTO


def test_meters_are_kept(tmp_path):
    path = write_rows(tmp_path / "m.csv", NGSIM_HEADER, ngsim_rows(frames=3))
    frames = list(parse_csv(path, unit_system=UnitSystem.METERS))
    assert frames[0].velocity == pytest.approx(30.0)


def test_frames_are_grouped_by_vehicle_and_sorted(tmp_path):
    rows = ngsim_rows(frames=5)
    path = write_rows(tmp_path / "shuffled.csv", NGSIM_HEADER, list(reversed(rows)))
    frames = list(parse_csv(path))
    keys = [(f.vehicle_id, f.frame_index) for f in frames]
    assert keys == sorted(keys)


def test_missing_column_names_the_column(tmp_path):
    header = [name for name in NGSIM_HEADER if name != "Preceding"]
    rows = [row[:7] + row[8:] for row in ngsim_rows(frames=2)]
    path = write_rows(tmp_path / "bad.csv", header, rows)
    with pytest.raises(SchemaError, match="Preceding"):
        list(parse_csv(path))


def test_non_numeric_cell_names_the_row(tmp_path):
    rows = ngsim_rows(frames=2)
    rows[1][4] = "fast"
    path = write_rows(tmp_path / "bad.csv", NGSIM_HEADER, rows)
    with pytest.raises(TrajectoryParseError, match="Row 3"):
        list(parse_csv(path))


def test_negative_velocity_is_rejected(tmp_path):
    rows = ngsim_rows(frames=2)
    rows[0][4] = "-1.0"
    path = write_rows(tmp_path / "bad.csv", NGSIM_HEADER, rows)
    with pytest.raises(TrajectoryParseError, match="Row 2"):
        list(parse_csv(path))


def test_empty_file_yields_no_frames(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert list(parse_csv(path)) == []


def test_header_only_file_yields_no_frames(tmp_path):
    path = write_rows(tmp_path / "header.csv", NGSIM_HEADER, [])
    assert list(parse_csv(path)) == []


def test_custom_mapping_and_delimiter(tmp_path):
    header = ["id", "frame", "x", "y", "speed", "lane", "leader", "len"]
    rows = [["7", "0", "1.0", "20.0", "12.0", "2", "0", "4.5"]]
    path = tmp_path / "custom.csv"
    path.write_text(";".join(header) + "\n" + ";".join(rows[0]) + "\n")
    schema = ColumnSchema(
        vehicle_id="id",
        frame_index="frame",
        local_x="x",
        local_y="y",
        velocity="speed",
        lane_id="lane",
        preceding_id="leader",
        vehicle_length="len",
        acceleration=None,
        following_id=None,
        vehicle_class=None,
    )
    (frame,) = parse_csv(path, schema, UnitSystem.METERS, delimiter=";")
    assert frame.vehicle_id == 7
    assert frame.velocity == 12.0
    assert frame.acceleration == 0.0
    assert frame.vehicle_class is VehicleClass.AUTO


def test_vehicle_class_codes(tmp_path):
    rows = ngsim_rows(frames=1)
    rows[0][10] = "3"
    rows[1][10] = "1"
    path = write_rows(tmp_path / "classes.csv", NGSIM_HEADER, rows)
    classes = {f.vehicle_id: f.vehicle_class for f in parse_csv(path)}
    assert classes == {1: VehicleClass.TRUCK, 2: VehicleClass.MOTORCYCLE}


def test_unit_round_trip():
    assert from_meters(to_meters(123.4, "feet"), "feet") == pytest.approx(123.4)
    assert to_meters(5.0, UnitSystem.METERS) == 5.0
